import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dialcomm.autodiff import (
    Adam,
    CheckpointError,
    Mlp,
    MlpSpec,
    Parameter,
    ShapeError,
    Tensor,
    abs_,
    add,
    backward,
    backward_order,
    concat,
    custom_unary,
    div,
    exp,
    forward_op,
    gather,
    index_select,
    init_mlp_params,
    load_params,
    log,
    log_softmax,
    matmul,
    max_,
    mean,
    mlp_forward,
    mul,
    no_grad,
    reshape,
    save_params,
    sigmoid,
    soft_update,
    softmax,
    square,
    sub,
    sum_,
    tanh,
)
from helpers import central_difference, rel_error

RNG = np.random.default_rng(1234)


def leaf(shape, low=-3.0, high=3.0, rng=RNG):
    return Parameter(rng.uniform(low, high, size=shape), name="p")


def check_grad(build, *shapes, low=-3.0, high=3.0, tol=1e-4):
    """Analytic gradient of ``sum(w * build(*leaves))`` against central differences."""
    leaves = [leaf(s, low, high) for s in shapes]
    out = build(*leaves)
    w = RNG.normal(size=out.shape)
    backward(sum_(mul(out, Tensor(w))))
    for i, p in enumerate(leaves):
        def f(x, i=i):
            args = [Tensor(x if j == i else q.data) for j, q in enumerate(leaves)]
            return float(np.sum(build(*args).data * w))

        fd = central_difference(f, p.data.copy())
        assert rel_error(p.grad, fd) < tol, f"input {i}"


class TestForwardOps:
    def test_sigmoid_symmetry_point(self):
        assert sigmoid(Tensor(0.0)).data == pytest.approx(0.5)

    def test_softmax_uniform_over_equal_logits(self):
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_matmul_shape(self):
        assert matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 1)))).shape == (2, 1)

    def test_shape_mismatch_names_op_and_shapes(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(2, 1\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))
        with pytest.raises(ShapeError, match="add"):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones(4)))

    def test_non_finite_output_rejected(self):
        with pytest.raises(FloatingPointError, match="log"):
            log(Tensor(np.zeros(2)))

    def test_forward_op_dispatch(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        np.testing.assert_allclose(forward_op("add", a, b).data, [4.0, 7.0])
        np.testing.assert_allclose(forward_op("max", Tensor([[1.0, 4.0, 2.0]]), axis=1).data, [4.0])
        with pytest.raises(ValueError, match="unknown op"):
            forward_op("conv", a)

    def test_values_match_numpy(self):
        x = RNG.normal(size=(4, 3))
        np.testing.assert_allclose(tanh(Tensor(x)).data, np.tanh(x), rtol=1e-15)
        np.testing.assert_allclose(log_softmax(Tensor(x), axis=1).data,
                                   x - np.log(np.exp(x).sum(axis=1, keepdims=True)), rtol=1e-13)
        np.testing.assert_allclose(mean(Tensor(x), axis=0).data, x.mean(axis=0), rtol=1e-15)

    def test_no_grad_records_nothing(self):
        p = leaf((3,))
        with no_grad():
            y = square(p)
        assert y.node is None and not y.requires_grad


@pytest.mark.parametrize(
    "name,build,shapes",
    [
        ("add", lambda a, b: add(a, b), [(3, 4), (1, 4)]),
        ("sub", lambda a, b: sub(a, b), [(3, 4), (3, 1)]),
        ("mul", lambda a, b: mul(a, b), [(3, 4), (3, 4)]),
        ("matmul", lambda a, b: matmul(a, b), [(3, 4), (4, 2)]),
        ("sigmoid", lambda a: sigmoid(a), [(5,)]),
        ("tanh", lambda a: tanh(a), [(5,)]),
        ("exp", lambda a: exp(a), [(5,)]),
        ("square", lambda a: square(a), [(2, 3)]),
        ("softmax", lambda a: softmax(a, axis=1), [(3, 4)]),
        ("log_softmax", lambda a: log_softmax(a, axis=1), [(3, 4)]),
        ("sum_axis", lambda a: sum_(a, axis=0, keepdims=True), [(3, 4)]),
        ("mean", lambda a: mean(a, axis=1), [(3, 4)]),
        ("concat", lambda a, b: concat([a, b], axis=1), [(3, 2), (3, 4)]),
        ("slice", lambda a: index_select(a, (slice(None), slice(1, 3))), [(3, 4)]),
        ("gather", lambda a: gather(a, np.array([0, 2, 2]), np.array([1, 0, 1])), [(3, 4)]),
        ("reshape", lambda a: reshape(a, (2, 6)), [(3, 4)]),
    ],
)
def test_gradients_match_finite_differences(name, build, shapes):
    check_grad(build, *shapes)


class TestGradientEdgeCases:
    def test_log_and_div_on_positive_inputs(self):
        check_grad(lambda a: log(a), (6,), low=0.5, high=3.0)
        check_grad(lambda a, b: div(a, b), (3,), (3,), low=0.5, high=3.0)

    def test_abs_away_from_zero(self):
        check_grad(lambda a: abs_(a), (6,), low=0.2, high=3.0)

    def test_max_routes_gradient_to_argmax(self):
        p = Parameter(np.array([[1.0, 5.0, 2.0], [7.0, 0.0, 7.0]]))
        backward(sum_(max_(p, axis=1)))
        np.testing.assert_array_equal(p.grad, [[0, 1, 0], [1, 0, 0]])


class TestBackward:
    def test_sum_is_linear(self):
        p = Parameter(np.zeros(3))
        backward(sum_(p))
        np.testing.assert_array_equal(p.grad, [1.0, 1.0, 1.0])

    def test_square(self):
        p = Parameter(np.array(2.0))
        backward(square(p))
        assert p.grad == pytest.approx(4.0)

    def test_two_uses_accumulate(self):
        p = Parameter(np.array([3.0]))
        backward(sum_(add(mul(p, Tensor(2.0)), square(p))))
        np.testing.assert_allclose(p.grad, [2.0 + 6.0])

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ShapeError, match="scalar"):
            backward(square(leaf((3,))))

    def test_unreachable_params_untouched(self):
        p, q = leaf((2,)), leaf((2,))
        q.grad[:] = 7.0
        backward(sum_(p))
        np.testing.assert_array_equal(q.grad, [7.0, 7.0])

    def test_traversal_order_does_not_change_grads(self):
        def graph():
            rng = np.random.default_rng(5)
            w1 = Parameter(rng.normal(size=(4, 3)))
            w2 = Parameter(rng.normal(size=(3, 2)))
            x = Tensor(rng.normal(size=(5, 4)))
            h = tanh(matmul(x, w1))
            y = add(matmul(h, w2), matmul(square(h), w2))
            return sum_(mul(softmax(y, axis=1), concat([y[:, :1], h[:, :1]], axis=1))), (w1, w2)

        root, params = graph()
        backward(root)
        reference = [p.grad.copy() for p in params]
        for seed in range(5):
            root, params = graph()
            order = backward_order(root, rng=np.random.default_rng(seed))
            backward(root, order=order)
            for p, ref in zip(params, reference):
                np.testing.assert_allclose(p.grad, ref, rtol=0, atol=1e-12)


class TestCustomUnary:
    def test_heaviside_with_identity_surrogate(self):
        x = Parameter(np.array([0.7]))
        y = custom_unary(x, lambda v, n: (v >= 0).astype(float), lambda v, n: np.ones_like(v))
        backward(sum_(y))
        assert y.data[0] == 1.0 and x.grad[0] == 1.0

    def test_sigmoid_surrogate_at_zero(self):
        x = Parameter(np.array([0.0]))
        noise = np.array([0.0])
        y = custom_unary(x, lambda v, n: (v + n >= 0).astype(float),
                         lambda v, n: sigmoid(Tensor(v + n)).data * (1 - sigmoid(Tensor(v + n)).data), noise)
        backward(sum_(y))
        assert y.data[0] == 1.0  # H(0) = 1
        assert x.grad[0] == pytest.approx(0.25)

    def test_noise_is_stored_and_reused(self):
        noise = RNG.normal(size=4)
        seen = []

        def surrogate(v, n):
            seen.append(n)
            s = 1 / (1 + np.exp(-(v + n)))
            return s * (1 - s)

        x = Parameter(RNG.normal(size=4))
        y = custom_unary(x, lambda v, n: (v + n >= 0).astype(float), surrogate, noise)
        assert y.node.saved_ctx["noise"] is noise
        backward(sum_(y))
        assert all(n is noise for n in seen)
        s = 1 / (1 + np.exp(-(x.data + noise)))
        np.testing.assert_allclose(x.grad, s * (1 - s))

    def test_surrogate_matches_finite_difference_of_surrogate(self):
        x0 = RNG.uniform(-3, 3, size=50)
        noise = RNG.normal(size=50)

        def smooth(v, n):
            return 1 / (1 + np.exp(-(v + n)))

        x = Parameter(x0.copy())
        y = custom_unary(x, lambda v, n: (v + n >= 0).astype(float),
                         lambda v, n: smooth(v, n) * (1 - smooth(v, n)), noise)
        backward(sum_(y))
        fd = (smooth(x0 + 1e-4, noise) - smooth(x0 - 1e-4, noise)) / 2e-4
        assert rel_error(x.grad, fd) < 1e-4


class TestAdam:
    def test_zero_lr_leaves_params(self):
        p = Parameter(np.array([1.0, -2.0]))
        p.grad[:] = [3.0, 4.0]
        opt = Adam([p], lr=0.0)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    @pytest.mark.parametrize("g", [1e-6, 1.0, 1e6])
    def test_first_step_is_lr_sized(self, g):
        p = Parameter(np.array([0.0]))
        p.grad[:] = g
        Adam([p], lr=1e-3).step()
        assert abs(p.data[0]) == pytest.approx(1e-3, rel=1e-2)

    def test_converges_on_square(self):
        p = Parameter(np.array([1.0]))
        opt = Adam([p], lr=0.05)
        for _ in range(200):
            opt.zero_grad()
            backward(sum_(square(p)))
            opt.step()
        assert abs(p.data[0]) < 0.05

    def test_shared_parameter_listed_once(self):
        p = Parameter(np.array([0.0]))
        p.grad[:] = 1.0
        opt = Adam([p, p], lr=1e-3)
        opt.step()
        assert p.data[0] == pytest.approx(-1e-3, rel=1e-6)


class TestSoftUpdate:
    @pytest.mark.parametrize("tau,expected", [(1.0, 1.0), (0.0, 0.0), (0.5, 0.5)])
    def test_examples(self, tau, expected):
        t, o = Parameter(np.zeros(3)), Parameter(np.ones(3))
        soft_update([t], [o], tau)
        np.testing.assert_allclose(t.data, expected)

    def test_tau_out_of_range(self):
        with pytest.raises(ValueError):
            soft_update([Parameter(np.zeros(1))], [Parameter(np.zeros(1))], 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            soft_update([Parameter(np.zeros(2))], [Parameter(np.zeros(3))], 0.5)

    @settings(max_examples=50, deadline=None)
    @given(tau=st.floats(0, 1), target=st.floats(-10, 10), online=st.floats(-10, 10))
    def test_two_updates_equal_one_closed_form(self, tau, target, online):
        t = Parameter(np.array([target]))
        o = Parameter(np.array([online]))
        soft_update([t], [o], tau)
        soft_update([t], [o], tau)
        t2 = Parameter(np.array([target]))
        soft_update([t2], [o], 2 * tau - tau * tau)
        np.testing.assert_allclose(t.data, t2.data, rtol=1e-12, atol=1e-12)


class TestMlp:
    def test_zero_params_give_zero_output(self):
        spec = MlpSpec((3, 5, 2))
        params = [Parameter(np.zeros_like(p.data), p.name) for p in init_mlp_params(spec, RNG)]
        np.testing.assert_array_equal(mlp_forward(spec, params, Tensor(RNG.normal(size=(4, 3)))).data, 0.0)

    def test_identity_layer_passes_input(self):
        spec = MlpSpec((3, 3), output_activation="identity")
        params = [Parameter(np.eye(3), "W"), Parameter(np.zeros((1, 3)), "b")]
        x = RNG.normal(size=(2, 3))
        np.testing.assert_array_equal(mlp_forward(spec, params, Tensor(x)).data, x)

    def test_width_mismatch(self):
        net = Mlp(MlpSpec((3, 4, 2)), RNG)
        with pytest.raises(ShapeError, match="width"):
            net(Tensor(np.ones((5, 2))))

    def test_first_layer_gradient(self):
        net = Mlp(MlpSpec((3, 4, 2)), np.random.default_rng(0))
        x = RNG.uniform(-3, 3, size=(6, 3))
        backward(sum_(net(Tensor(x))))
        w = net.params[0]

        def f(wv):
            old = w.data.copy()
            w.data[...] = wv
            out = float(net.predict(x).sum())
            w.data[...] = old
            return out

        assert rel_error(w.grad, central_difference(f, w.data.copy())) < 1e-4

    def test_predict_matches_taped_forward(self):
        net = Mlp(MlpSpec((4, 8, 8, 3)), RNG)
        x = RNG.normal(size=(7, 4))
        np.testing.assert_allclose(net.predict(x), net(Tensor(x)).data, rtol=0, atol=1e-15)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MlpSpec((3,))
        with pytest.raises(ValueError):
            MlpSpec((3, 0, 2))
        with pytest.raises(ValueError):
            MlpSpec((3, 2), activation="swish")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = Mlp(MlpSpec((3, 4, 2)), RNG, prefix="anet[agent]")
        path = tmp_path / "p.dckp"
        save_params(path, net.params + [("scalar", np.array(2.5))])
        loaded = load_params(path)
        assert [n for n, _ in loaded] == [p.name for p in net.params] + ["scalar"]
        for (_, arr), p in zip(loaded, net.params):
            np.testing.assert_array_equal(arr, p.data)
        assert loaded[-1][1].shape == () and loaded[-1][1] == 2.5

    def test_header_layout(self, tmp_path):
        path = tmp_path / "p.dckp"
        save_params(path, [("w", np.array([[1.0, 2.0]]))])
        raw = path.read_bytes()
        assert raw[:4] == b"DCKP" and raw[4] == 1
        assert raw[-16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.dckp"
        path.write_bytes(b"NOPE" + bytes(10))
        with pytest.raises(CheckpointError, match="not a parameter checkpoint"):
            load_params(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "p.dckp"
        save_params(path, [("w", np.ones((3, 3)))])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="truncated"):
            load_params(path)
