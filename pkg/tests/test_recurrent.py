import numpy as np
import numpy.testing as npt
import pytest

from lpnet.core import Rng, ShapeError
from lpnet.recurrent import (
    DtRnnParams,
    SequenceBatch,
    bernoulli_nll,
    bptt,
    clip_gradient_norm,
    dotrnn_output,
    dtrnn_step,
    rnn_grad_check,
    rnn_kink_margin,
    rnn_loss,
    rnn_states,
)


def _tiny_params(seed, kind="lp", state_dim=2, units=2, group=2, dim=2):
    return DtRnnParams.build(dim, state_dim, units, dim,
                             Rng(seed).substream("init"), kind=kind, group=group)


def _jitter(params, seed, scale=0.3):
    """Move centers/biases off the all-zeros kink configuration."""
    rs = np.random.RandomState(seed)
    if params.kind == "lp":
        params.centers = params.centers + scale * rs.standard_normal(
            params.centers.shape)
    else:
        params.f_bias = params.f_bias + scale * rs.standard_normal(
            params.f_bias.shape)
    params.out_bias = params.out_bias + scale * rs.standard_normal(
        params.out_bias.shape)
    return params


def _generic_batch(seed, n_seq, length, dim):
    """Gaussian inputs with binary targets; generic, kink-unfriendly inputs."""
    rs = np.random.RandomState(seed)
    inputs = [rs.standard_normal((length, dim)) for _ in range(n_seq)]
    targets = [(rs.random_sample((length, dim)) < 0.4).astype(np.float64)
               for _ in range(n_seq)]
    return SequenceBatch(inputs=inputs, targets=targets, dim=dim)


def _kink_safe_case(seed, kind, n_seq=2, length=4, tries=100):
    for k in range(tries):
        params = _jitter(_tiny_params(seed + 1000 * k, kind=kind), seed + k)
        batch = _generic_batch(seed + 7 * k, n_seq, length, params.input_dim)
        if rnn_kink_margin(params, batch) > 1e-2:
            return params, batch
    raise AssertionError("no kink-safe instance found")


def test_zero_weights_zero_state():
    params = _tiny_params(0)
    for name in ("v", "u", "w", "out_weights", "readout_weights"):
        setattr(params, name, np.zeros_like(getattr(params, name)))
    h = dtrnn_step(params, np.zeros(2), np.ones(2))
    npt.assert_array_equal(h, np.zeros(2))


def test_state_stays_inside_unit_box():
    rs = np.random.RandomState(1)
    for seed in range(5):
        params = _tiny_params(seed, state_dim=3, dim=2)
        # exaggerate the weights; tanh still bounds the state
        params.w = params.w * 50.0
        h = np.zeros(3)
        for t in range(30):
            h = dtrnn_step(params, h, rs.standard_normal(2))
            assert np.max(np.abs(h)) < 1.0


def test_step_shape_error():
    params = _tiny_params(2)
    with pytest.raises(ShapeError):
        dtrnn_step(params, np.zeros(3), np.zeros(2))


def test_zero_output_weights_give_ln2_loss():
    params = _tiny_params(3)
    params.out_weights = np.zeros_like(params.out_weights)
    params.out_bias = np.zeros_like(params.out_bias)
    params.readout_weights = np.zeros_like(params.readout_weights)
    params.readout_bias = np.zeros_like(params.readout_bias)
    logits = dotrnn_output(params, np.full(2, 0.3))
    npt.assert_array_equal(logits, np.zeros(2))
    loss, _ = bernoulli_nll(logits, np.array([1.0, 0.0]))
    npt.assert_allclose(loss, 2 * np.log(2.0), rtol=1e-12)


def test_saturated_logits_near_zero_loss():
    y = np.array([1.0, 0.0, 1.0])
    logits = np.array([1000.0, -1000.0, 1000.0])
    loss, grad = bernoulli_nll(logits, y)
    assert loss < 1e-9
    assert np.max(np.abs(grad)) < 1e-9


def test_bernoulli_nll_gradient_is_probability_residual():
    rs = np.random.RandomState(4)
    logits = rs.standard_normal(6)
    y = (rs.random_sample(6) < 0.5).astype(np.float64)
    _, grad = bernoulli_nll(logits, y)
    npt.assert_allclose(grad, 1.0 / (1.0 + np.exp(-logits)) - y, rtol=1e-12)


def test_bptt_gradient_lp_kind():
    worst = 0.0
    for seed in range(4):
        params, batch = _kink_safe_case(seed, "lp")
        worst = max(worst, rnn_grad_check(params, batch))
    assert worst < 1e-4, f"worst BPTT grad error {worst:.3g}"


def test_bptt_gradient_tanh_kind():
    worst = 0.0
    for seed in range(4):
        params, batch = _kink_safe_case(seed, "tanh")
        worst = max(worst, rnn_grad_check(params, batch))
    assert worst < 1e-4, f"worst BPTT grad error {worst:.3g}"


def test_single_step_equals_feedforward():
    # a length-1 sequence has no carried state: BPTT degenerates to one
    # forward/backward through the stacked layers
    params, _ = _kink_safe_case(5, "lp")
    batch = _generic_batch(11, 3, 1, params.input_dim)
    loss, grad, steps = bptt(params, batch)
    assert steps == 3
    assert rnn_grad_check(params, batch) < 1e-4
    ref, per_step = rnn_loss(params, batch)
    npt.assert_allclose(loss, ref, rtol=1e-12)
    npt.assert_allclose(per_step, ref, rtol=1e-12)  # one step per sequence


def test_truncation_matches_full_when_longer_than_sequences():
    params, batch = _kink_safe_case(6, "lp")
    full_loss, full_grad, _ = bptt(params, batch)
    t_loss, t_grad, _ = bptt(params, batch, truncate=50)
    npt.assert_allclose(t_loss, full_loss, rtol=1e-12)
    npt.assert_allclose(t_grad, full_grad, rtol=1e-12)


def test_truncation_changes_gradient_not_loss():
    params, batch = _kink_safe_case(7, "lp")
    full_loss, full_grad, _ = bptt(params, batch)
    t_loss, t_grad, _ = bptt(params, batch, truncate=2)
    npt.assert_allclose(t_loss, full_loss, rtol=1e-12)
    assert not np.allclose(t_grad, full_grad)


def test_bptt_mean_over_sequences():
    params, batch = _kink_safe_case(8, "lp")
    doubled = SequenceBatch(inputs=batch.inputs + batch.inputs,
                            targets=batch.targets + batch.targets, dim=batch.dim)
    l1, g1, _ = bptt(params, batch)
    l2, g2, _ = bptt(params, doubled)
    npt.assert_allclose(l1, l2, rtol=1e-12)
    npt.assert_allclose(g1, g2, rtol=1e-12)


def test_bptt_mixed_lengths_buckets():
    params, _ = _kink_safe_case(9, "lp")
    rs = np.random.RandomState(10)
    inputs, targets = [], []
    for length in (2, 5, 2, 3, 5):
        inputs.append(rs.standard_normal((length, 2)))
        targets.append((rs.random_sample((length, 2)) < 0.5).astype(np.float64))
    batch = SequenceBatch(inputs=inputs, targets=targets, dim=2)
    assert sorted(batch.buckets()) == [2, 3, 5]
    loss, grad, steps = bptt(params, batch)
    assert steps == 17
    # bucketing is an implementation detail: same result sequence-by-sequence
    singles = [bptt(params, batch.subset([i])) for i in range(5)]
    npt.assert_allclose(loss, np.mean([s[0] for s in singles]), rtol=1e-12)
    npt.assert_allclose(grad, np.mean([s[1] for s in singles], axis=0),
                        rtol=1e-10, atol=1e-14)


def test_clip_above_threshold():
    g = np.array([6.0, 8.0])  # norm 10
    out = clip_gradient_norm(g, 5.0)
    npt.assert_allclose(np.linalg.norm(out), 5.0, rtol=1e-12)
    npt.assert_allclose(out, [3.0, 4.0], rtol=1e-12)


def test_clip_below_threshold_unchanged():
    g = np.array([0.6, 0.8])
    npt.assert_array_equal(clip_gradient_norm(g, 5.0), g)


def test_clip_zero_vector():
    npt.assert_array_equal(clip_gradient_norm(np.zeros(4), 5.0), np.zeros(4))


def test_clip_idempotent():
    rs = np.random.RandomState(11)
    for _ in range(10):
        g = rs.standard_normal(20) * 10.0
        once = clip_gradient_norm(g, 3.0)
        twice = clip_gradient_norm(once, 3.0)
        npt.assert_allclose(once, twice, rtol=1e-15)


def test_sequence_batch_validation():
    with pytest.raises(ValueError):
        SequenceBatch(inputs=[np.zeros((3, 2))],
                      targets=[np.full((3, 2), 0.5)], dim=2)  # not binary
    with pytest.raises(ShapeError):
        SequenceBatch(inputs=[np.zeros((3, 2))],
                      targets=[np.zeros((4, 2))], dim=2)  # length mismatch


def test_params_flatten_round_trip():
    for kind in ("lp", "tanh"):
        params = _tiny_params(12, kind=kind)
        v = params.flatten()
        assert v.shape == (params.n_params(),)
        w = v + 0.125
        params2 = params.copy().unflatten(w)
        npt.assert_array_equal(params2.flatten(), w)
        npt.assert_array_equal(params.flatten(), v)  # original untouched


def test_rnn_states_bounded_and_shaped():
    params, batch = _kink_safe_case(13, "lp")
    states = rnn_states(params, batch)
    assert len(states) == len(batch)
    for s, inp in zip(states, batch.inputs):
        assert s.shape == (inp.shape[0], params.state_dim)
        assert np.max(np.abs(s)) < 1.0
