import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adwsod import diff
from adwsod.diff import AdamState, NaNGradientError, Tape, adam_step, backward, grad_check, grad_check_groups


def test_identity_and_square():
    tape = Tape()
    p = tape.param("p", np.array(3.0))
    assert backward(tape, p)["p"] == 1.0
    tape = Tape()
    p = tape.param("p", np.array(3.0))
    assert backward(tape, p * p)["p"] == pytest.approx(6.0)


def test_non_scalar_loss_rejected():
    tape = Tape()
    p = tape.param("p", np.ones(3))
    with pytest.raises(ValueError):
        backward(tape, p * 2.0)


def test_off_path_gradient_is_zero():
    tape = Tape()
    a = tape.param("a", np.ones(2))
    tape.param("b", np.ones((2, 2)))
    g = backward(tape, diff.sum(a * a))
    assert np.array_equal(g["b"], np.zeros((2, 2)))


def test_relu_kink_subgradient_zero():
    tape = Tape()
    x = tape.param("x", np.array([0.0, -1.0, 2.0]))
    g = backward(tape, diff.sum(diff.relu(x)))["x"]
    assert g.tolist() == [0.0, 0.0, 1.0]


def test_log_clamp_zero_gradient():
    tape = Tape()
    x = tape.param("x", np.array([0.0, 1e-20, 0.5]))
    y = diff.log(x)
    assert y.value[0] == pytest.approx(np.log(1e-12))
    g = backward(tape, diff.sum(y))["x"]
    assert g.tolist() == [0.0, 0.0, 2.0]


def test_backward_linear_in_loss():
    rng = np.random.default_rng(1)
    w0, x = rng.normal(size=(3, 2)), rng.normal(size=(4, 3))

    def f(scale):
        def loss(tape, nodes):
            return diff.sum(diff.softmax(x @ nodes["w"], axis=1) * np.arange(2.0)) * scale

        return diff.evaluate(loss, {"w": w0})[1]["w"]

    assert f(2.5) == pytest.approx(2.5 * f(1.0), rel=1e-12)


def test_grad_check_linear_tiny_error():
    a = np.array([1.5, -2.0, 0.25])
    err = grad_check(lambda tape, n: diff.sum(n["x"] * a), {"x": np.ones(3)})
    assert err < 1e-9


def _primitive_loss(tape, n):
    x, w, m, ls = n["x"], n["w"], n["mu"], n["log_sigma"]
    h = diff.relu(x @ w + 0.1)
    s = diff.softmax(h, axis=1)
    lp = diff.gaussian_logpdf(diff.reshape(x[:, :2], (1, 4, 2)), m, ls)
    parts = [
        diff.mean(diff.log(s)),
        diff.sum(diff.sigmoid(h) / (1.0 + diff.exp(x[:, 0:1]))),
        diff.sum(diff.transpose(h) @ s) * 0.1,
        diff.sum(diff.softmax(lp, axis=1) * np.arange(4.0)),
        diff.mean(diff.gather_or_zero(s, np.array([[0, -1, 2]] * 4))),
        diff.sum(diff.stack([x[0], x[1]], axis=0) - x[2]),
    ]
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_primitives_pass_grad_check(seed):
    rng = np.random.default_rng(seed)
    params = {
        "x": rng.normal(size=(4, 3)),
        "w": rng.normal(size=(3, 3)),
        "mu": rng.normal(0, 0.3, (1, 2)),
        "log_sigma": np.log(rng.uniform(0.2, 1.0, (1, 2))),
    }
    errs = grad_check_groups(_primitive_loss, params)
    assert max(errs.values()) < 1e-4, errs


def test_gaussian_logpdf_matches_closed_form():
    tape = Tape()
    off = tape.const(np.array([[[0.3, -0.1]]]))
    mu = tape.const(np.array([[0.1, 0.1]]))
    ls = tape.const(np.log([[0.2, 0.4]]))
    v = diff.gaussian_logpdf(off, mu, ls).value[0, 0]
    z = np.array([0.2 / 0.2, -0.2 / 0.4])
    assert v == pytest.approx(-0.5 * z @ z - np.log(2 * np.pi * 0.2 * 0.4), abs=1e-12)


def test_reflected_operators():
    tape = Tape()
    x = tape.param("x", np.array([2.0, 4.0]))
    y = np.ones((1, 2)) @ diff.reshape(x, (2, 1))
    z = 1.0 / x - (3.0 - x)
    assert y.value.item() == 6.0
    assert z.value.tolist() == [-0.5, 1.25]


def test_adam_zero_gradient_no_change():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(AdamState(lr=0.1), p, {"w": np.zeros(2)})
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_is_minus_lr():
    p = {"w": np.zeros(3)}
    adam_step(AdamState(lr=0.01), p, {"w": np.ones(3)})
    assert p["w"] == pytest.approx(-0.01 * np.ones(3), rel=1e-6)


def test_adam_deterministic():
    def run():
        p, s = {"w": np.array([0.3, 0.7])}, AdamState(lr=0.05)
        for g in ([1.0, -2.0], [0.5, 0.5], [-3.0, 0.1]):
            adam_step(s, p, {"w": np.array(g)})
        return p["w"]

    assert run().tobytes() == run().tobytes()


def test_adam_nan_leaves_params_untouched():
    p = {"a": np.ones(2), "b": np.ones(2)}
    s = AdamState()
    with pytest.raises(NaNGradientError):
        adam_step(s, p, {"a": np.ones(2), "b": np.array([np.nan, 0.0])})
    assert p["a"].tolist() == [1.0, 1.0] and s.t == 0 and not s.m


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step(AdamState(), {"a": np.ones(2)}, {"a": np.ones(3)})


def test_adam_minimizes_quadratic():
    p, s = {"w": np.array([3.0, -2.0])}, AdamState(lr=0.1)
    for _ in range(500):
        adam_step(s, p, {"w": 2.0 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2
