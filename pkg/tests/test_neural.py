import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajlstm.neural import (VARIANTS, AdamState, LstmState, ModelConfig, ModelParams, ShapeError,
                             adam_update, gradient_check, init_params, lstm_step, model_backward,
                             model_forward, mse_loss, variant_config, zero_params)


def small_config(n=10, hidden=8, out=6, **kw):
    kw.setdefault("dense_layers", ((7, "tanh"), (5, "tanh")))
    return ModelConfig(input_size=n, lstm_layers=(hidden,), output_size=out, **kw)


def scalar_oracle(params, seq):
    """Plain-loop forward pass written independently of the vectorized code."""
    cfg = params.config

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    def matvec(w, b, v):
        return [b[r] + sum(w[r][c] * v[c] for c in range(len(v))) for r in range(len(b))]

    layers = []
    for l, h in enumerate(cfg.lstm_layers):
        layers.append(([0.0] * h, [0.0] * h, params[f"lstm{l}.W"].tolist(), params[f"lstm{l}.b"].tolist()))
    outputs = []
    for x in seq.tolist():
        inp = x
        new_layers = []
        for h_prev, m_prev, w, b in layers:
            hs = len(h_prev)
            z = matvec(w, b, inp + h_prev)
            m = [sig(z[k]) * m_prev[k] + sig(z[hs + k]) * math.tanh(z[2 * hs + k]) for k in range(hs)]
            h = [sig(z[3 * hs + k]) * math.tanh(m[k]) for k in range(hs)]
            new_layers.append((h, m, w, b))
            inp = h
        layers = new_layers
        bypass = x[:cfg.bypass]
        for j, (_, act) in enumerate(cfg.dense_layers):
            if j == 0 and cfg.bypass_mode == "before_dense":
                inp = inp + bypass
            inp = matvec(params[f"dense{j}.W"].tolist(), params[f"dense{j}.b"].tolist(), inp)
            if act == "tanh":
                inp = [math.tanh(v) for v in inp]
        if cfg.bypass_mode == "to_output":
            inp = inp + bypass
        outputs.append(matvec(params["out.W"].tolist(), params["out.b"].tolist(), inp))
    return np.array(outputs)


def scalar_cell(bf, bi, bc, bo):
    return np.zeros((4, 2)), np.array([bf, bi, bc, bo], dtype=float)


def test_lstm_step_zero_params():
    w, b = np.zeros((8, 5)), np.zeros(8)
    s = lstm_step(w, b, np.array([3.0, -1.0, 2.0]), LstmState(np.zeros(2), np.zeros(2)))
    assert s.h.tolist() == [0.0, 0.0] and s.m.tolist() == [0.0, 0.0]


def test_lstm_step_saturated_gates():
    w, b = scalar_cell(0.0, 100.0, 1.0, 100.0)
    s = lstm_step(w, b, np.array([0.0]), LstmState(np.zeros(1), np.zeros(1)))
    assert s.m[0] == pytest.approx(0.76159, abs=1e-5)
    assert s.m[0] == pytest.approx(math.tanh(1.0), abs=1e-12)
    # tanh(tanh(1)) = 0.642015; the often-quoted 0.64180 is a rounding slip
    assert s.h[0] == pytest.approx(math.tanh(math.tanh(1.0)), abs=1e-12)


def test_lstm_step_preserves_memory():
    w, b = scalar_cell(100.0, -100.0, 0.0, 0.0)
    s = lstm_step(w, b, np.array([0.7]), LstmState(np.zeros(1), np.array([0.5])))
    assert s.m[0] == pytest.approx(0.5, abs=1e-8)


def test_lstm_step_shape_mismatch():
    with pytest.raises(ShapeError):
        lstm_step(np.zeros((8, 5)), np.zeros(8), np.zeros(4), LstmState(np.zeros(2), np.zeros(2)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
def test_lstm_step_bounds(seed, scale):
    rng = np.random.default_rng(seed)
    w, b = rng.normal(0, scale, (12, 5)), rng.normal(0, scale, 12)
    prev = LstmState(rng.uniform(-1, 1, 3), rng.normal(0, 3, 3))
    s = lstm_step(w, b, rng.normal(size=2), prev)
    assert (np.abs(s.m) <= np.abs(prev.m) + 1 + 1e-12).all()
    assert (np.abs(s.h) <= 1).all()


def test_zero_model_outputs_zero():
    y, _ = model_forward(zero_params(small_config()), np.random.default_rng(0).normal(size=(9, 10)))
    assert not y.any()


def test_bypass_identity():
    p = zero_params(small_config(out=4))
    p.arrays["out.W"][:, -4:] = np.eye(4)
    x = np.random.default_rng(1).normal(size=(12, 10))
    y, _ = model_forward(p, x)
    assert np.array_equal(y, x[:, :4])


@pytest.mark.parametrize("cfg", [
    small_config(6, 4, 3),
    small_config(6, 4, 3, bypass_mode="before_dense"),
    small_config(6, 4, 3, bypass_mode="none", dense_layers=((5, "linear"),)),
    ModelConfig(input_size=6, lstm_layers=(4, 3), dense_layers=(), output_size=2),
])
def test_forward_matches_scalar_oracle(cfg):
    rng = np.random.default_rng(7)
    p = init_params(cfg, 3)
    for name in p.arrays:
        p.arrays[name] += rng.normal(0, 0.1, p.arrays[name].shape)
    x = rng.normal(size=(5, 6))
    y, _ = model_forward(p, x)
    np.testing.assert_allclose(y, scalar_oracle(p, x), rtol=0, atol=1e-12)


def test_batch_matches_single_sequences():
    p = init_params(small_config(), 0)
    x = np.random.default_rng(2).normal(size=(3, 15, 10))
    yb, _ = model_forward(p, x)
    for k in range(3):
        np.testing.assert_allclose(yb[k], model_forward(p, x[k])[0], rtol=0, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 29))
def test_chunked_state_threading(seed, cut):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(input_size=5, lstm_layers=(6, 4), dense_layers=((3, "tanh"),), output_size=2)
    p = init_params(cfg, seed)
    x = rng.normal(size=(30, 5))
    whole, finals = model_forward(p, x)
    a, mid = model_forward(p, x[:cut])
    b, end = model_forward(p, x[cut:], initial=mid)
    np.testing.assert_allclose(np.vstack([a, b]), whole, rtol=0, atol=1e-12)
    for s, t in zip(end, finals):
        np.testing.assert_allclose(s.h, t.h, atol=1e-12)
        np.testing.assert_allclose(s.m, t.m, atol=1e-12)


def test_forward_rejects_bad_width():
    with pytest.raises(ShapeError):
        model_forward(init_params(small_config(), 0), np.zeros((4, 9)))


@pytest.mark.parametrize("name", VARIANTS)
def test_variants_forward_deterministic(name):
    cfg = variant_config(name, output_size=4, lstm_size=6, dense_sizes=(5, 4), third_dense=3)
    assert cfg.input_size == {"type": 59, "no-ff": 44}.get(name, 49)
    p = init_params(cfg, 1)
    x = np.random.default_rng(0).normal(size=(2, 7, cfg.input_size))
    y1, _ = model_forward(p, x)
    y2, _ = model_forward(init_params(cfg, 1), x)
    assert y1.shape == (2, 7, 4) and np.array_equal(y1, y2)


def test_unknown_variant():
    with pytest.raises(ValueError):
        variant_config("bogus")


def test_reference_shapes():
    s = variant_config("reference").shapes()
    assert s["lstm0.W"] == (1024, 49 + 256)
    assert s["dense0.W"] == (256, 256) and s["dense1.W"] == (128, 256)
    assert s["out.W"] == (20, 132)
    s = variant_config("bypass-before").shapes()
    assert s["dense0.W"] == (256, 260) and s["out.W"] == (20, 128)
    assert variant_config("no-bypass").shapes()["out.W"] == (20, 128)


def test_loss_zero_at_own_output():
    p = init_params(small_config(), 4)
    x = np.random.default_rng(0).normal(size=(2, 6, 10))
    y, _ = model_forward(p, x)
    loss, grads = model_backward(p, x, y)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_output_layer_gradient_is_regression_gradient():
    # with no hidden path the model is y = W [0-width state, bypass] + b, i.e. linear regression
    cfg = ModelConfig(input_size=4, lstm_layers=(1,), dense_layers=(), bypass_mode="to_output",
                      output_size=2)
    p = init_params(cfg, 0)
    p.arrays["lstm0.W"][:] = 0.0
    p.arrays["lstm0.b"][:] = 0.0
    rng = np.random.default_rng(3)
    x, t = rng.normal(size=(8, 4)), rng.normal(size=(8, 2))
    _, grads = model_backward(p, x, t)
    # LSTM output with zero weights is o*tanh(m) = 0.5*tanh(0) = 0
    design = np.hstack([np.zeros((8, 1)), x])
    w = p["out.W"]
    resid = design @ w.T + p["out.b"] - t
    np.testing.assert_allclose(grads["out.W"], 2.0 / resid.size * resid.T @ design, atol=1e-14)
    np.testing.assert_allclose(grads["out.b"], 2.0 / resid.size * resid.sum(axis=0), atol=1e-14)


@pytest.mark.parametrize("mode", ["to_output", "before_dense", "none"])
def test_gradients_match_finite_differences(mode):
    rng = np.random.default_rng(11)
    cfg = ModelConfig(input_size=5, lstm_layers=(4, 3), dense_layers=((4, "tanh"), (3, "linear")),
                      bypass_mode=mode, output_size=2)
    p = init_params(cfg, 5)
    x, t = rng.normal(size=(2, 8, 5)), rng.normal(size=(2, 8, 2))
    assert gradient_check(p, x, t) < 1e-4


def test_gradient_check_detects_corruption():
    rng = np.random.default_rng(1)
    p = init_params(small_config(6, 4, 2), 2)
    x, t = rng.normal(size=(6, 6)), rng.normal(size=(6, 2))
    _, grads = model_backward(p, x, t)
    k = int(np.argmax(np.abs(grads["lstm0.W"])))
    grads["lstm0.W"].reshape(-1)[k] *= 2.0
    assert gradient_check(p, x, t, analytic=grads) > 1e-2


def test_gradient_check_zero_model():
    cfg = small_config(4, 2, 2)
    assert gradient_check(zero_params(cfg), np.zeros((3, 4)), np.zeros((3, 2))) == 0.0


def test_adam_zero_gradient_is_fixed_point():
    p = init_params(small_config(), 0)
    grads = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    q, _ = adam_update(p, grads, AdamState())
    for k in p.arrays:
        assert np.array_equal(p[k], q[k])


def test_adam_first_step_is_lr_sized():
    p = init_params(small_config(), 0)
    rng = np.random.default_rng(0)
    grads = {k: rng.normal(0, 10, v.shape) for k, v in p.arrays.items()}
    q, state = adam_update(p, grads, AdamState(), lr=1e-3)
    for k in p.arrays:
        g = grads[k]
        expected = -1e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(q[k] - p[k], expected, rtol=1e-6, atol=1e-15)
    assert state.step == 1 and q.step == 1
    # two identical steps: second no larger than first (1% slack)
    r, _ = adam_update(q, grads, state, lr=1e-3)
    for k in p.arrays:
        assert (np.abs(r[k] - q[k]) <= 1.01 * np.abs(q[k] - p[k]) + 1e-18).all()


def test_adam_does_not_mutate_inputs():
    p = init_params(small_config(), 0)
    before = p.copy()
    grads = {k: np.ones_like(v) for k, v in p.arrays.items()}
    adam_update(p, grads, AdamState())
    for k in p.arrays:
        assert np.array_equal(p[k], before[k])


def test_init_deterministic_and_forget_bias():
    cfg = small_config()
    a, b = init_params(cfg, 3), init_params(cfg, 3)
    assert all(np.array_equal(a[k], b[k]) for k in a.arrays)
    assert not np.array_equal(a["lstm0.W"], init_params(cfg, 4)["lstm0.W"])
    wf, bf = a.gate(0, "forget")
    assert (bf == 1.0).all()
    for g in ("input", "candidate", "output"):
        assert not a.gate(0, g)[1].any()
    assert not a["out.b"].any()


def test_init_distribution():
    p = init_params(variant_config("reference"), 0)
    w = p["lstm0.W"]
    limit = math.sqrt(6.0 / (305 + 256))
    assert np.abs(w).max() <= limit
    # uniform(-a, a): mean 0, variance a^2/3
    se = limit / math.sqrt(3.0) / math.sqrt(w.size)
    assert abs(w.mean()) < 3 * se
    assert w.var() == pytest.approx(limit ** 2 / 3, rel=0.02)


def test_params_validate_shapes():
    cfg = small_config()
    arrays = init_params(cfg, 0).arrays
    arrays["out.W"] = np.zeros((1, 1))
    with pytest.raises(ShapeError):
        ModelParams(cfg, arrays)
    with pytest.raises(ShapeError):
        ModelConfig(input_size=3, bypass_width=4)


def test_mse_loss():
    assert mse_loss(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 2.5
