import numpy as np
import pytest

from reachgen import autodiff as ag
from reachgen import nn
from reachgen.autodiff import Tape, Tensor
from reachgen.errors import NumericFault


def make_mlp(cfg, seed=0):
    store = nn.ParameterStore()
    nn.init_mlp_params(cfg, store, "net", np.random.default_rng(seed))
    return store


def test_one_layer_identity_relu_shape():
    # final layer is affine only, so use a 2-layer net to exercise relu
    cfg = nn.MlpConfig(in_dim=2, out_dim=2, hidden_dim=2, n_layers=2,
                       dropout=0.0, layer_norm=False)
    store = nn.ParameterStore()
    store.add("net.w0", np.eye(2))
    store.add("net.b0", np.zeros(2))
    store.add("net.w1", np.eye(2))
    store.add("net.b1", np.zeros(2))
    out = nn.mlp_forward(cfg, store, np.array([-1.0, 2.0]), prefix="net")
    np.testing.assert_array_equal(out, [0.0, 2.0])


def test_dropout_rate_zero_train_equals_eval():
    cfg = nn.MlpConfig(in_dim=3, out_dim=2, hidden_dim=8, n_layers=3, dropout=0.0)
    store = make_mlp(cfg, seed=1)
    x = np.array([0.3, -0.4, 1.0])
    a = nn.mlp_forward(cfg, store, x, prefix="net", train=True, dropout_seed=7)
    b = nn.mlp_forward(cfg, store, x, prefix="net", train=False)
    np.testing.assert_array_equal(a, b)


def test_dropout_mask_deterministic_per_seed():
    cfg = nn.MlpConfig(in_dim=4, out_dim=4, hidden_dim=32, n_layers=3, dropout=0.5)
    store = make_mlp(cfg, seed=2)
    x = np.ones(4)
    a = nn.mlp_forward(cfg, store, x, prefix="net", train=True, dropout_seed=123)
    b = nn.mlp_forward(cfg, store, x, prefix="net", train=True, dropout_seed=123)
    c = nn.mlp_forward(cfg, store, x, prefix="net", train=True, dropout_seed=124)
    np.testing.assert_array_equal(a, b)
    assert np.any(a != c)


def test_eval_forward_is_pure_function():
    cfg = nn.MlpConfig(in_dim=5, out_dim=3, hidden_dim=16, n_layers=4, dropout=0.3)
    store = make_mlp(cfg, seed=3)
    x = np.random.default_rng(0).normal(size=(7, 5))
    a = nn.mlp_forward(cfg, store, x, prefix="net")
    b = nn.mlp_forward(cfg, store, x, prefix="net")
    np.testing.assert_array_equal(a, b)


def test_numeric_fault_carries_layer_index():
    cfg = nn.MlpConfig(in_dim=2, out_dim=2, hidden_dim=2, n_layers=2,
                       dropout=0.0, layer_norm=False)
    store = nn.ParameterStore()
    store.add("net.w0", np.array([[np.inf, 0.0], [0.0, 1.0]]))
    store.add("net.b0", np.zeros(2))
    store.add("net.w1", np.eye(2))
    store.add("net.b1", np.zeros(2))
    with pytest.raises(NumericFault) as exc:
        nn.mlp_forward(cfg, store, np.ones(2), prefix="net")
    assert "layer 0" in str(exc.value)


def test_mlp_gradients_match_finite_differences():
    cfg = nn.MlpConfig(in_dim=4, out_dim=3, hidden_dim=6, n_layers=3,
                       dropout=0.0, layer_norm=True)
    store = make_mlp(cfg, seed=4)
    x0 = np.random.default_rng(5).normal(size=(2, 4))
    w = np.random.default_rng(6).normal(size=(2, 3))

    store.zero_grad()
    with Tape() as tape:
        out = nn.mlp_forward(cfg, store, x0, prefix="net")
        loss = ag.sum(out * w)
    grads = nn.backward(tape, loss, 1.0, store)

    for name, param in store.items():
        base = param.data.copy()

        def f(v, name=name, param=param, base=base):
            param.data = v
            out = nn.mlp_forward(cfg, store, x0, prefix="net")
            param.data = base
            return np.sum(ag.value(out) * w)

        fd = ag.finite_difference_gradient(f, base.copy())
        rel = np.abs(grads[name] - fd) / np.maximum(np.abs(fd), 1e-6)
        assert np.max(rel) < 1e-4, name


def test_reparameterize_trivial_cases():
    g = nn.GaussianParams(np.array([1.0, -2.0]), np.array([0.3, -0.7]))
    np.testing.assert_array_equal(nn.reparameterize(g, np.zeros(2)), g.mean)
    g0 = nn.GaussianParams(np.zeros(3), np.zeros(3))
    noise = np.array([0.5, -1.0, 2.0])
    np.testing.assert_array_equal(nn.reparameterize(g0, noise), noise)


def test_reparameterize_empirical_std():
    rng = np.random.default_rng(7)
    log_std = np.array([0.25])
    g = nn.GaussianParams(np.zeros(1), log_std)
    draws = np.array([ag.value(nn.reparameterize(g, rng.standard_normal(1)))
                      for _ in range(0)])
    # vectorized: z = exp(log_std) * noise
    noise = rng.standard_normal(1_000_000)
    z = np.exp(log_std[0]) * noise
    assert abs(np.std(z) - np.exp(log_std[0])) / np.exp(log_std[0]) < 0.01


def test_kl_trivial_and_closed_form_values():
    zero = nn.GaussianParams(np.zeros(1), np.zeros(1))
    assert nn.kl_divergence(zero, "standard") == 0.0
    assert nn.kl_divergence(zero, "as_written") == 0.0

    unit_mean = nn.GaussianParams(np.array([1.0]), np.zeros(1))
    np.testing.assert_allclose(nn.kl_divergence(unit_mean, "standard"), 0.5)
    np.testing.assert_allclose(nn.kl_divergence(unit_mean, "as_written"), 0.5)

    wide = nn.GaussianParams(np.zeros(1), np.array([np.log(2.0)]))
    np.testing.assert_allclose(nn.kl_divergence(wide, "standard"),
                               1.5 - np.log(2.0))
    np.testing.assert_allclose(nn.kl_divergence(wide, "as_written"),
                               np.log(2.0) - 0.375)


def test_kl_nonnegative_and_zero_iff_unit():
    rng = np.random.default_rng(8)
    for _ in range(100):
        g = nn.GaussianParams(rng.normal(size=4), rng.normal(scale=0.5, size=4))
        assert nn.kl_divergence(g, "standard") >= 0.0
        assert nn.kl_divergence(g, "as_written") >= 0.0


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(9)
    n = 1_000_000
    for _ in range(5):
        mu = rng.normal(scale=0.8)
        ls = rng.normal(scale=0.4)
        sig = np.exp(ls)
        g = nn.GaussianParams(np.array([mu]), np.array([ls]))
        # standard: E_{z~N(mu,sig)}[log q(z) - log p(z)]
        z = mu + sig * rng.standard_normal(n)
        log_q = -0.5 * ((z - mu) / sig) ** 2 - np.log(sig) - 0.5 * np.log(2 * np.pi)
        log_p = -0.5 * z ** 2 - 0.5 * np.log(2 * np.pi)
        mc = np.mean(log_q - log_p)
        closed = float(ag.value(nn.kl_divergence(g, "standard")))
        assert abs(closed - mc) <= 0.01 * max(abs(closed), 0.05)


def test_adam_zero_gradient_keeps_parameters_increments_step():
    store = nn.ParameterStore()
    store.add("p", np.array([1.0, 2.0]))
    state = nn.AdamState(lr_base=1e-2, lr_final=1e-3, total_steps=10)
    adam_grads = {"p": np.zeros(2)}
    nn.adam_step(state, store, adam_grads)
    np.testing.assert_array_equal(store["p"].data, [1.0, 2.0])
    assert state.step == 1


def test_adam_first_step_hand_computed():
    # constant gradient 1 from zero: bias-corrected m_hat = 1, v_hat = 1
    # so the step is -lr / (1 + eps)
    store = nn.ParameterStore()
    store.add("p", np.array([0.0]))
    state = nn.AdamState(lr_base=1e-2, lr_final=1e-2, total_steps=100)
    nn.adam_step(state, store, {"p": np.array([1.0])})
    expected = -1e-2 * 1.0 / (1.0 + 1e-8)
    np.testing.assert_allclose(store["p"].data, [expected], rtol=1e-12)


def test_adam_lr_schedule_endpoints():
    state = nn.AdamState(lr_base=1e-4, lr_final=1e-5, total_steps=1000)
    assert state.lr_at(0) == 1e-4
    assert state.lr_at(1000) == 1e-5
    assert state.lr_at(2000) == 1e-5
    mid = state.lr_at(500)
    np.testing.assert_allclose(mid, (1e-4 + 1e-5) / 2)


def test_adam_rejects_nonfinite_gradient():
    store = nn.ParameterStore()
    store.add("p", np.zeros(1))
    state = nn.AdamState(1e-3, 1e-4, 10)
    with pytest.raises(NumericFault):
        nn.adam_step(state, store, {"p": np.array([np.nan])})


def test_gaussian_from_stacked_clamps_log_std():
    out = np.array([0.5, -0.5, 10.0, -20.0])
    g = nn.GaussianParams.from_stacked(out)
    np.testing.assert_array_equal(ag.value(g.mean), [0.5, -0.5])
    np.testing.assert_array_equal(ag.value(g.log_std), [4.0, -8.0])


def test_parameter_store_deterministic_order_and_copy():
    store = nn.ParameterStore()
    store.add("b", np.zeros(2))
    store.add("a", np.ones(3))
    assert store.names() == ["b", "a"]
    dup = store.copy()
    assert dup.names() == ["b", "a"]
    dup["a"].data[0] = 99.0
    assert store["a"].data[0] == 1.0
