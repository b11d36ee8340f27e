"""Network construction, the derivative engine, and parameter serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecl import (
    BatchObjective,
    DivergenceError,
    FieldNetwork,
    MLPConfig,
    ObjectiveTerm,
    load_params,
    load_params_csv,
    save_params,
    save_params_csv,
)

from conftest import (
    assert_close,
    central_diff,
    fd_param_gradient,
    first_diff_floor,
    second_diff,
    second_diff_floor,
)

TINY = MLPConfig(input_dim=1, hidden_layers=1, hidden_width=1)


def tiny_params(w1=1.0, b1=0.0, w2=1.0, b2=0.0):
    return np.array([w1, b1, w2, b2])


class TestConfig:
    def test_defaults(self):
        cfg = MLPConfig(input_dim=1)
        assert (cfg.hidden_layers, cfg.hidden_width) == (8, 20)

    def test_parameter_counts(self):
        # 1*20+20 + 7*(20*20+20) + 20+1 = 40 + 2940 + 21
        assert MLPConfig(input_dim=1).parameter_count == 3001
        assert MLPConfig(input_dim=2).parameter_count == 3021
        assert TINY.parameter_count == 4

    @pytest.mark.parametrize("kwargs", [
        {"input_dim": 3}, {"input_dim": 0},
        {"input_dim": 1, "hidden_layers": 0},
        {"input_dim": 1, "hidden_width": 0},
    ])
    def test_rejects_bad_geometry(self, kwargs):
        with pytest.raises(ValueError):
            MLPConfig(**kwargs)

    def test_layer_dims(self):
        dims = MLPConfig(input_dim=2, hidden_layers=3, hidden_width=5).layer_dims
        assert dims == [(2, 5), (5, 5), (5, 5), (5, 1)]


class TestInit:
    def test_biases_zero(self):
        net = FieldNetwork(MLPConfig(input_dim=1))
        params = net.init_params(seed=7)
        for _, b in net.unpack(params):
            assert np.all(b == 0.0)

    def test_deterministic(self):
        net = FieldNetwork(MLPConfig(input_dim=1))
        a = net.init_params(seed=7)
        b = net.init_params(seed=7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, net.init_params(seed=8))

    def test_first_layer_within_glorot_bound(self):
        net = FieldNetwork(MLPConfig(input_dim=1))
        params = net.init_params(seed=7)
        limit = np.sqrt(6.0 / (1 + 20))
        W1, _ = net.unpack(params)[0]
        assert np.all(np.abs(W1) <= limit)
        # wide layers should come close to filling their band
        W2, _ = net.unpack(params)[1]
        lim2 = np.sqrt(6.0 / 40)
        assert np.all(np.abs(W2) <= lim2)
        assert np.abs(W2).max() > 0.8 * lim2

    def test_layer_scales_differ(self):
        net = FieldNetwork(MLPConfig(input_dim=1))
        params = net.init_params(seed=7)
        slices = net.layer_weight_slices()
        assert params[slices[0]].size == 20
        assert params[slices[-1]].size == 20

    def test_neuron_slices_partition_params(self):
        net = FieldNetwork(MLPConfig(input_dim=2, hidden_layers=2, hidden_width=3))
        idx = np.concatenate(net.neuron_slices())
        assert np.array_equal(np.sort(idx), np.arange(net.n_params))


class TestForward:
    def test_zero_params_zero_everywhere(self, rng):
        net = FieldNetwork(MLPConfig(input_dim=1))
        params = np.zeros(net.n_params)
        x = rng.random((17, 1))
        assert np.array_equal(net.forward_batch(params, x), np.zeros(17))

    def test_tiny_identity_net(self):
        net = FieldNetwork(TINY)
        assert net.forward(tiny_params(), np.array([0.0])) == 0.0
        assert net.forward(tiny_params(), np.array([1.0])) == pytest.approx(
            0.7615941559557649, abs=1e-15)  # tanh(1)

    def test_manual_two_layer_evaluation(self):
        # width-2, depth-1: u = v . tanh(w*x + b) + c, checked by hand
        cfg = MLPConfig(input_dim=1, hidden_layers=1, hidden_width=2)
        net = FieldNetwork(cfg)
        params = np.array([1.5, -2.0, 0.1, 0.2, 3.0, -1.0, 0.5])
        x = 0.3
        hidden = np.tanh(np.array([1.5 * x + 0.1, -2.0 * x + 0.2]))
        expected = 3.0 * hidden[0] - 1.0 * hidden[1] + 0.5
        assert net.forward(params, np.array([x])) == pytest.approx(expected, rel=1e-15)

    def test_batch_matches_single(self, rng):
        # batched matmul may reduce in a different order; allow rounding slack
        net = FieldNetwork(MLPConfig(input_dim=2))
        params = net.init_params(seed=11)
        X = rng.random((5, 2))
        batch = net.forward_batch(params, X)
        singles = [net.forward(params, x) for x in X]
        assert_close(batch, singles, rtol=1e-13, abs_floor=1e-15)

    def test_shape_validation(self):
        net = FieldNetwork(MLPConfig(input_dim=2))
        params = net.init_params(seed=1)
        with pytest.raises(ValueError):
            net.forward_batch(params, np.zeros((4, 3)))
        with pytest.raises(ValueError):
            net.forward_batch(np.zeros(10), np.zeros((4, 2)))


class TestFieldDerivatives:
    def test_zero_params(self):
        net = FieldNetwork(MLPConfig(input_dim=2))
        ev = net.evaluate_field(np.zeros(net.n_params), np.array([0.3, 0.4]))
        assert ev.value == 0.0
        assert np.array_equal(ev.gradient, np.zeros(2))
        assert ev.laplacian == 0.0

    def test_tiny_net_hand_derivatives(self):
        # u = tanh(x): u'(0) = 1 - tanh(0)^2 = 1, u''(0) = -2 tanh(0) (1-tanh(0)^2) = 0
        net = FieldNetwork(TINY)
        ev = net.evaluate_field(tiny_params(), np.array([0.0]))
        assert ev.value == 0.0
        assert ev.gradient[0] == pytest.approx(1.0, abs=1e-15)
        assert ev.laplacian == pytest.approx(0.0, abs=1e-15)
        # at x=0.4: u' = 1 - t^2, u'' = -2 t (1 - t^2) with t = tanh(0.4)
        t = np.tanh(0.4)
        ev = net.evaluate_field(tiny_params(), np.array([0.4]))
        assert ev.gradient[0] == pytest.approx(1 - t * t, rel=1e-14)
        assert ev.laplacian == pytest.approx(-2 * t * (1 - t * t), rel=1e-14)

    def test_value_matches_forward(self, rng):
        net = FieldNetwork(MLPConfig(input_dim=2))
        params = net.init_params(seed=3)
        X = rng.random((9, 2))
        fb = net.evaluate_field_batch(params, X)
        assert np.array_equal(fb.values, net.forward_batch(params, X))

    @pytest.mark.parametrize("input_dim", [1, 2])
    def test_derivatives_match_finite_differences(self, input_dim, rng):
        net = FieldNetwork(MLPConfig(input_dim=input_dim))
        h = 1e-5
        for trial in range(10):
            params = net.init_params(seed=100 + trial)
            x = rng.random(input_dim)
            ev = net.evaluate_field(params, x)
            u0 = abs(ev.value)
            for i in range(input_dim):
                def along(s, i=i):
                    p = x.copy()
                    p[i] = s
                    return net.forward(params, p)

                fd_g = central_diff(along, x[i], h)
                assert_close(ev.gradient[i], fd_g, rtol=1e-6,
                             abs_floor=first_diff_floor(u0, h), label="gradient")
            fd_lap = sum(
                second_diff(lambda s, i=i: net.forward(
                    params, np.concatenate([x[:i], [s], x[i + 1:]])), x[i], h)
                for i in range(input_dim)
            )
            assert_close(ev.laplacian, fd_lap, rtol=1e-4,
                         abs_floor=second_diff_floor(u0, h), label="laplacian")

    def test_linearity_witness(self, rng):
        # scale weights so every hidden pre-activation is tiny: tanh is then
        # essentially the identity and the network is affine in x
        net = FieldNetwork(MLPConfig(input_dim=1, hidden_layers=4, hidden_width=6))
        params = net.init_params(seed=5) * 1e-7
        layers = net.unpack(params)
        for x in rng.random(5):
            h = np.array([[x]])
            for W, b in layers[:-1]:
                pre = h @ W.T + b
                assert np.all(np.abs(pre) <= 1e-6)
                h = np.tanh(pre)
            ev = net.evaluate_field(params, np.array([x]))
            assert abs(ev.laplacian) <= 1e-8


def mse_objective(net, X, targets):
    n = X.shape[0]

    def ev(fb):
        r = fb.values - targets
        return float(r @ r) / n, (2.0 * r / n, None, None)

    return BatchObjective(terms=(ObjectiveTerm(X, ev, needs_derivatives=False),))


class TestLossGradient:
    def test_constant_objective(self):
        net = FieldNetwork(TINY)
        obj = BatchObjective(terms=(), constant=4.25)
        lg = net.loss_gradient(tiny_params(), obj)
        assert lg.value == 4.25
        assert np.array_equal(lg.grad, np.zeros(4))

    def test_squared_output_at_zero_params(self):
        # d(u^2)/dtheta = 2 u du/dtheta = 0 when u = 0
        net = FieldNetwork(MLPConfig(input_dim=1))
        params = np.zeros(net.n_params)
        X = np.array([[0.37]])

        def ev(fb):
            return float(fb.values[0] ** 2), (2.0 * fb.values, None, None)

        lg = net.loss_gradient(params, BatchObjective(
            terms=(ObjectiveTerm(X, ev, needs_derivatives=False),)))
        assert lg.value == 0.0
        assert np.array_equal(lg.grad, np.zeros(net.n_params))

    def test_value_term_gradient_matches_fd(self, rng):
        net = FieldNetwork(MLPConfig(input_dim=1, hidden_layers=2, hidden_width=4))
        params = net.init_params(seed=21)
        X = rng.random((6, 1))
        targets = rng.random(6)
        obj = mse_objective(net, X, targets)
        lg = net.loss_gradient(params, obj)
        h = 1e-6
        fd = fd_param_gradient(lambda p: net.objective_value(p, obj), params, h)
        assert_close(lg.grad, fd, rtol=1e-4,
                     abs_floor=first_diff_floor(lg.value, h), label="mse grad")

    def test_laplacian_term_gradient_matches_fd(self, rng):
        # pure laplacian objective exercises every second-order backward path
        net = FieldNetwork(MLPConfig(input_dim=2, hidden_layers=3, hidden_width=5))
        params = net.init_params(seed=22)
        X = rng.random((5, 2))

        def ev(fb):
            return float(fb.laplacians.sum()), (None, None, np.ones_like(fb.laplacians))

        obj = BatchObjective(terms=(ObjectiveTerm(X, ev, needs_derivatives=True),))
        lg = net.loss_gradient(params, obj)
        h = 1e-6
        fd = fd_param_gradient(lambda p: net.objective_value(p, obj), params, h)
        assert_close(lg.grad, fd, rtol=1e-4,
                     abs_floor=first_diff_floor(abs(lg.value) + 1.0, h),
                     label="laplacian grad")

    def test_gradient_term_cotangent_matches_fd(self, rng):
        # objective through the input-gradient output: sum of squared slopes
        net = FieldNetwork(MLPConfig(input_dim=2, hidden_layers=2, hidden_width=4))
        params = net.init_params(seed=23)
        X = rng.random((4, 2))

        def ev(fb):
            return float((fb.gradients ** 2).sum()), (None, 2.0 * fb.gradients, None)

        obj = BatchObjective(terms=(ObjectiveTerm(X, ev, needs_derivatives=True),))
        lg = net.loss_gradient(params, obj)
        h = 1e-6
        fd = fd_param_gradient(lambda p: net.objective_value(p, obj), params, h)
        assert_close(lg.grad, fd, rtol=1e-4,
                     abs_floor=first_diff_floor(abs(lg.value) + 1.0, h),
                     label="slope grad")

    def test_divergence_signal(self):
        net = FieldNetwork(TINY)

        def ev(fb):
            return float("inf"), (np.zeros_like(fb.values), None, None)

        obj = BatchObjective(terms=(ObjectiveTerm(np.array([[0.1]]), ev),))
        with pytest.raises(DivergenceError):
            net.loss_gradient(tiny_params(), obj)

    def test_value_only_term_rejects_derivative_cotangents(self):
        net = FieldNetwork(TINY)

        def ev(fb):
            return 0.0, (None, np.zeros((1, 1)), None)

        obj = BatchObjective(terms=(ObjectiveTerm(np.array([[0.1]]), ev),))
        with pytest.raises(ValueError):
            net.loss_gradient(tiny_params(), obj)


class TestSerialization:
    def test_binary_round_trip(self, tmp_path, rng):
        cfg = MLPConfig(input_dim=2, hidden_layers=3, hidden_width=7)
        net = FieldNetwork(cfg)
        params = net.init_params(seed=9)
        path = tmp_path / "p.bin"
        save_params(path, cfg, params)
        cfg2, params2 = load_params(path)
        assert cfg2 == cfg
        assert np.array_equal(params, params2)

    def test_binary_header(self, tmp_path):
        cfg = MLPConfig(input_dim=1, hidden_layers=2, hidden_width=3)
        path = tmp_path / "p.bin"
        save_params(path, cfg, np.zeros(cfg.parameter_count))
        raw = path.read_bytes()
        assert raw[:4] == b"ECL1"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 2
        assert int.from_bytes(raw[12:16], "little") == 3
        assert len(raw) == 16 + 8 * cfg.parameter_count

    def test_binary_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError):
            load_params(path)
        path.write_bytes(b"\x01")
        with pytest.raises(ValueError):
            load_params(path)

    def test_binary_rejects_truncated_payload(self, tmp_path):
        cfg = MLPConfig(input_dim=1, hidden_layers=1, hidden_width=2)
        path = tmp_path / "p.bin"
        save_params(path, cfg, np.zeros(cfg.parameter_count))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_params(path)

    def test_csv_round_trip(self, tmp_path, rng):
        params = rng.standard_normal(31)
        path = tmp_path / "p.csv"
        save_params_csv(path, params)
        assert np.array_equal(load_params_csv(path), params)

    def test_mismatched_length_rejected(self, tmp_path):
        cfg = MLPConfig(input_dim=1, hidden_layers=1, hidden_width=2)
        with pytest.raises(ValueError):
            save_params(tmp_path / "p.bin", cfg, np.zeros(5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_init_always_within_bounds(seed):
    net = FieldNetwork(MLPConfig(input_dim=1, hidden_layers=2, hidden_width=4))
    params = net.init_params(seed)
    for (fi, fo), wsl in zip(net.config.layer_dims, net.layer_weight_slices()):
        limit = np.sqrt(6.0 / (fi + fo))
        assert np.all(np.abs(params[wsl]) <= limit)
    assert np.all(np.isfinite(params))


@settings(max_examples=25, deadline=None)
@given(data=st.lists(st.floats(min_value=-10, max_value=10), min_size=4, max_size=4))
def test_serialization_preserves_exact_values(tmp_path_factory, data):
    cfg = MLPConfig(input_dim=1, hidden_layers=1, hidden_width=1)
    path = tmp_path_factory.mktemp("ser") / "p.bin"
    save_params(path, cfg, np.array(data))
    _, back = load_params(path)
    assert np.array_equal(back, np.array(data))
