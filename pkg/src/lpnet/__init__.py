"""Networks built on pooling units with learnable norm orders.

The core activation computes a normalized p-norm of a group of filter
responses minus learned centers, with p itself trained by gradient
descent through p = 1 + softplus(rho). Everything runs on numpy arrays
with hand-derived backward passes and finite-difference oracles.
"""

from .core import Rng, ShapeError, FormatError, derive_substream
from .lp import (reparam_order, inverse_reparam, order_rate, lp_forward,
                 lp_backward, LpLayerParams, LpGradients, lp_layer_forward,
                 lp_layer_backward, inject_fault)
from .layers import (elementwise_forward, elementwise_grad, maxout_forward,
                     maxout_backward, softmax_xent, softmax_xent_batch,
                     dropout_mask)
from .network import (LayerSpec, Network, linear, lp_layer, maxout_layer,
                      dropout, grad_check, kink_margin, lp_activations)
from .recurrent import (DtRnnParams, SequenceBatch, dtrnn_step, dotrnn_output,
                        bptt, clip_gradient_norm, rnn_grad_check, rnn_states,
                        rnn_loss, bernoulli_nll)
from .data import (LabeledDataset, MixtureComponent, gen_gaussian_mixture,
                   gauss2_components, gauss3_components, gen_curvature_dataset,
                   curvature_label, split_holdout, save_csv, load_csv,
                   load_idx, save_pianoroll, load_pianoroll,
                   gen_periodic_pianoroll)
# the train() entry point itself stays at lpnet.train.train so the
# submodule name is not shadowed by a function
from .train import (TrainConfig, TrainReport, TrainingDiverged, sgd_step,
                    train_rnn, evaluate, order_histogram, order_stats,
                    lbfgs_descent, curvature_experiment, order_experiment,
                    two_gaussian_experiment, rnn_experiment, mnist_experiment,
                    multi_seed_success_rate, random_search,
                    REFERENCE_ORDER_STATS)
from .boundary import (grid_eval, save_boundary_csv, load_boundary_csv,
                       decision_threshold, extract_level_crossings, fit_conic,
                       conic_rms_distance, boundary_conic_residual)

__version__ = "0.1.0"
