import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedrd import nn
from fedrd.exceptions import DomainError, InvalidSpecError, NumericError, ShapeError


def numeric_grads(params, x, grad_out, h=1e-5):
    """Central differences of sum(forward(x) * grad_out)."""
    def f(p, xx):
        out, _ = nn.forward(p, xx)
        return float(np.sum(out * grad_out))

    flat = params.flat()
    g_params = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        g_params[i] = (f(params.from_flat(up), x) - f(params.from_flat(dn), x)) / (2 * h)
    g_x = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        up, dn = x.copy(), x.copy()
        up[idx] += h
        dn[idx] -= h
        g_x[idx] = (f(params, up) - f(params, dn)) / (2 * h)
    return g_params, g_x


def max_rel_err(a, b, floor=1e-6):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_spec(rng):
    depth = rng.integers(1, 4)
    widths = rng.integers(2, 6, size=depth + 1)
    layers = []
    for j in range(depth):
        layers.append(nn.LayerSpec(int(widths[j]), int(widths[j + 1]),
                                   norm=bool(rng.integers(0, 2)),
                                   activation=str(rng.choice(nn.ACTIVATIONS))))
    return nn.ModelSpec(tuple(layers))


def test_build_is_deterministic():
    spec = nn.ModelSpec((nn.LayerSpec(2, 2),))
    assert nn.build_model(spec, 7).tobytes() == nn.build_model(spec, 7).tobytes()
    assert nn.build_model(spec, 7).tobytes() != nn.build_model(spec, 8).tobytes()


def test_zero_width_is_invalid():
    with pytest.raises(InvalidSpecError):
        nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 0),)), 0)


def test_unchained_widths_are_invalid():
    with pytest.raises(InvalidSpecError):
        nn.ModelSpec((nn.LayerSpec(2, 3), nn.LayerSpec(4, 1))).validate()


def test_parameter_count():
    spec = nn.ModelSpec((nn.LayerSpec(2, 3, activation="relu"), nn.LayerSpec(3, 1)))
    assert nn.build_model(spec, 0).size == 13


def test_initialization_bounds():
    spec = nn.ModelSpec((nn.LayerSpec(16, 8),))
    p = nn.build_model(spec, 1)
    assert np.all(np.abs(p.layers[0]["W"]) <= 1 / math.sqrt(16))


def test_identity_layer_forward():
    spec = nn.ModelSpec((nn.LayerSpec(2, 2),))
    p = nn.build_model(spec, 0)
    p.layers[0]["W"] = np.eye(2)
    p.layers[0]["b"] = np.zeros(2)
    out, _ = nn.forward(p, np.array([0.3, -0.7]))
    np.testing.assert_array_equal(out, [0.3, -0.7])


def test_zero_sigmoid_layer_gives_half():
    spec = nn.ModelSpec((nn.LayerSpec(3, 1, activation="sigmoid"),))
    p = nn.build_model(spec, 0).zeros_like()
    out, _ = nn.forward(p, np.array([5.0, -2.0, 100.0]))
    assert out[0] == 0.5


def test_tanh_model_output_bounded():
    spec = nn.ModelSpec((nn.LayerSpec(4, 3, norm=True, activation="relu"),
                         nn.LayerSpec(3, 2, activation="tanh")))
    p = nn.build_model(spec, 3)
    x = np.random.default_rng(0).normal(scale=50.0, size=(1000, 4))
    out, _ = nn.forward(p, x)
    assert out.shape == (1000, 2)
    assert np.all(np.abs(out) <= 1.0)


def test_forward_shape_and_domain_errors():
    p = nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 2),)), 0)
    with pytest.raises(ShapeError):
        nn.forward(p, np.zeros(3))
    with pytest.raises(DomainError):
        nn.forward(p, np.array([np.nan, 0.0]))


def test_batched_forward_matches_rowwise():
    p = nn.build_model(nn.embedding_spec(5, 4, hidden=(6, 5)), 2)
    x = np.random.default_rng(1).normal(size=(7, 5))
    batched, _ = nn.forward(p, x)
    rows = np.stack([nn.forward(p, row)[0] for row in x])
    np.testing.assert_allclose(batched, rows, rtol=0, atol=1e-15)


def test_linear_bias_gradient_is_grad_out():
    spec = nn.ModelSpec((nn.LayerSpec(3, 2),))
    p = nn.build_model(spec, 0)
    _, tape = nn.forward(p, np.array([1.0, 2.0, 3.0]))
    g_out = np.array([0.25, -4.0])
    grads, _ = nn.backward(p, tape, g_out)
    np.testing.assert_array_equal(grads.layers[0]["b"], g_out)


def test_zero_grad_out_gives_zero_gradients():
    p = nn.build_model(nn.embedding_spec(3, 2, hidden=(4, 3)), 0)
    _, tape = nn.forward(p, np.ones(3))
    grads, g_in = nn.backward(p, tape, np.zeros(2))
    assert not grads.flat().any()
    assert not g_in.any()


def test_tape_is_single_use():
    p = nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 2),)), 0)
    _, tape = nn.forward(p, np.ones(2))
    nn.backward(p, tape, np.ones(2))
    with pytest.raises(Exception):
        nn.backward(p, tape, np.ones(2))


def test_tape_from_other_model_rejected():
    p = nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 2),)), 0)
    q = nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 3),)), 0)
    _, tape = nn.forward(p, np.ones(2))
    with pytest.raises(ShapeError):
        nn.backward(q, tape, np.ones(3))


def test_finite_difference_paper_architecture():
    p = nn.build_model(nn.embedding_spec(4, 3, hidden=(6, 5)), 11)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 4))
    g_out = rng.normal(size=(2, 3))
    _, tape = nn.forward(p, x)
    grads, g_in = nn.backward(p, tape, g_out)
    num_p, num_x = numeric_grads(p, x, g_out)
    assert max_rel_err(grads.flat(), num_p) < 1e-4
    assert max_rel_err(g_in, num_x) < 1e-4


@pytest.mark.parametrize("seed", range(100))
def test_finite_difference_random_stacks(seed):
    rng = np.random.default_rng(1000 + seed)
    spec = random_spec(rng)
    p = nn.build_model(spec, seed)
    # perturb norm parameters away from their (1, 0) init
    for layer in p.layers:
        if "gamma" in layer:
            layer["gamma"] += rng.normal(scale=0.3, size=layer["gamma"].shape)
            layer["beta"] += rng.normal(scale=0.3, size=layer["beta"].shape)
    x = rng.normal(size=(2, spec.in_width))
    g_out = rng.normal(size=(2, spec.out_width))
    _, tape = nn.forward(p, x)
    grads, g_in = nn.backward(p, tape, g_out)
    num_p, num_x = numeric_grads(p, x, g_out)
    assert max_rel_err(grads.flat(), num_p) < 1e-4
    assert max_rel_err(g_in, num_x) < 1e-4


def test_bce_values():
    loss, _ = nn.bce_loss(0.5, 1)
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    loss, _ = nn.bce_loss(1.0, 1)
    assert loss == pytest.approx(1e-7, abs=1e-9)


def test_bce_derivative_matches_finite_difference():
    h = 1e-6
    _, d = nn.bce_loss(0.3, 0)
    num = (nn.bce_loss(0.3 + h, 0)[0] - nn.bce_loss(0.3 - h, 0)[0]) / (2 * h)
    assert d == pytest.approx(num, abs=1e-6)


def test_bce_rejects_bad_label():
    with pytest.raises(DomainError):
        nn.bce_loss(0.5, 2)


@given(st.floats(0.0, 1.0), st.sampled_from([0, 1]))
def test_bce_nonnegative(p, y):
    assert nn.bce_loss(p, y)[0] >= 0.0


def _scalar_params(value):
    spec = nn.ModelSpec((nn.LayerSpec(1, 1),))
    p = nn.build_model(spec, 0)
    p.layers[0]["W"][:] = value
    p.layers[0]["b"][:] = value
    return p


def test_sgd_step():
    p = _scalar_params(1.0)
    g = _scalar_params(2.0)
    nn.Optimizer("sgd", lr=0.1).step(p, g)
    assert p.layers[0]["W"][0, 0] == pytest.approx(0.8, abs=1e-15)


def test_sgd_zero_gradient_is_noop():
    p = _scalar_params(1.0)
    before = p.tobytes()
    nn.Optimizer("sgd", lr=0.1).step(p, p.zeros_like())
    assert p.tobytes() == before


@pytest.mark.parametrize("g", [1e-4, -3.0, 250.0])
def test_adam_first_step_is_about_lr(g):
    # t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    p = _scalar_params(1.0)
    nn.Optimizer("adam", lr=1e-3).step(p, _scalar_params(g))
    step = 1.0 - p.layers[0]["W"][0, 0]
    assert step == pytest.approx(1e-3 * math.copysign(1, g) * abs(g) / (abs(g) + 1e-8), rel=1e-9)


def test_non_finite_gradient_names_layer():
    p = nn.build_model(nn.ModelSpec((nn.LayerSpec(2, 2), nn.LayerSpec(2, 1))), 0)
    g = p.zeros_like()
    g.layers[1]["W"][0, 0] = np.inf
    with pytest.raises(NumericError) as info:
        nn.Optimizer("adam").step(p, g)
    assert info.value.layer == 1


def test_training_is_bit_deterministic():
    def run():
        p = nn.build_model(nn.embedding_spec(3, 2, hidden=(4, 3)), 4)
        opt = nn.Optimizer("adam", 0.01)
        x = np.random.default_rng(9).normal(size=(8, 3))
        for _ in range(20):
            out, tape = nn.forward(p, x)
            grads, _ = nn.backward(p, tape, out)
            opt.step(p, grads)
        return p.tobytes()

    assert run() == run()
