import numpy as np
import pytest

from trajlstm.neural import _backend, init_params, model_backward, model_forward, variant_config

BACKENDS = _backend.available()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")


def random_case(seed, t=12, b=3, h=5):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(t, b, 4 * h)), rng.normal(0, 0.5, (4 * h, h)),
            rng.normal(size=(b, h)), rng.normal(size=(b, h)))


def test_selected_backend_is_available():
    assert _backend.BACKEND in BACKENDS
    assert "python" in BACKENDS


@needs_both
@pytest.mark.parametrize("seed", range(5))
def test_forward_backward_agree(seed):
    cy, py = _backend.load("cython"), _backend.load("python")
    pre, w_h, h0, m0 = random_case(seed)
    out_c = cy.lstm_forward(pre, w_h, h0, m0)
    out_p = py.lstm_forward(pre, w_h, h0, m0)
    for a, b in zip(out_c, out_p):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    d_hs = np.random.default_rng(seed + 100).normal(size=out_p[0].shape)
    back_c = cy.lstm_backward(d_hs, out_p[2], out_p[1], m0, w_h)
    back_p = py.lstm_backward(d_hs, out_p[2], out_p[1], m0, w_h)
    for a, b in zip(back_c, back_p):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@needs_both
def test_model_level_agreement():
    cy, py = _backend.load("cython"), _backend.load("python")
    p = init_params(variant_config("reference", lstm_size=16, dense_sizes=(8, 8)), 2)
    rng = np.random.default_rng(0)
    x, t = rng.normal(size=(4, 30, 49)), rng.normal(size=(4, 30, 20))
    np.testing.assert_allclose(model_forward(p, x, kernels=cy)[0], model_forward(p, x, kernels=py)[0],
                               rtol=0, atol=1e-12)
    lc, gc = model_backward(p, x, t, kernels=cy)
    lp, gp = model_backward(p, x, t, kernels=py)
    assert lc == pytest.approx(lp, abs=1e-14)
    for k in gc:
        np.testing.assert_allclose(gc[k], gp[k], rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_empty_sequence(name):
    k = _backend.load(name)
    pre, w_h, h0, m0 = random_case(0, t=0)
    hs, ms, gates = k.lstm_forward(pre, w_h, h0, m0)
    assert hs.shape == (0, 3, 5)


@pytest.mark.parametrize("name", BACKENDS)
def test_shape_errors(name):
    k = _backend.load(name)
    pre, w_h, h0, m0 = random_case(0)
    with pytest.raises(ValueError):
        k.lstm_forward(pre, w_h[:, :4].copy(), h0, m0)


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.load("fortran")
