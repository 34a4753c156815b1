"""Tests for the tensor/graph core, gradient checking and the tensor archive."""

import numpy as np
import pytest

from autodiff import (
    Graph,
    GraphStateError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    backward,
    check_gradient,
    derive_rng,
    forward,
    load_tensors,
    save_tensors,
)
from autodiff import ops


class TestForward:
    """Tests for graph forward evaluation."""

    def test_identity_graph(self):
        """Test identity graph returns its input."""
        graph = Graph(build=lambda i: i["x"])
        out = forward(graph, {"x": [1.0, 2.0, 3.0]})
        np.testing.assert_array_equal(out["output"].data, [1.0, 2.0, 3.0])

    def test_softmax_of_zeros_is_uniform(self):
        """Test softmax of a constant vector is uniform."""
        graph = Graph(build=lambda i: ops.softmax(i["x"]))
        out = forward(graph, {"x": np.zeros(4)})
        np.testing.assert_allclose(out["output"].data, [0.25] * 4)

    def test_matmul_shape(self):
        """Test 2x3 @ 3x4 gives 2x4."""
        graph = Graph(build=lambda i: i["a"] @ i["b"])
        out = forward(graph, {"a": np.ones((2, 3)), "b": np.ones((3, 4))})
        assert out["output"].shape == (2, 4)
        np.testing.assert_array_equal(out["output"].data, np.full((2, 4), 3.0))

    def test_shape_mismatch_names_node(self):
        """Test a matmul with mismatched inner dims raises at construction with node identity."""
        graph = Graph(build=lambda i: (i["a"] * 2.0) @ i["b"])
        with pytest.raises(ShapeError, match="matmul#1"):
            forward(graph, {"a": np.ones((2, 3)), "b": np.ones((4, 5))})

    def test_forward_is_deterministic(self):
        """Test two forwards with identical bindings are bit-identical."""
        graph = Graph(build=lambda i: ops.tanh(i["x"] @ i["w"]) * 3.0)
        rng = np.random.default_rng(1)
        inputs = {"x": rng.standard_normal((3, 4)), "w": rng.standard_normal((4, 2))}
        first = forward(graph, inputs)["output"].data.copy()
        second = forward(graph, inputs)["output"].data
        assert np.array_equal(first, second)

    def test_float32_preserved_with_python_scalars(self):
        """Test python scalars do not promote float32 tensors."""
        x = Tensor(np.ones(3, dtype=np.float32))
        assert (x * 2.0 + 1.0).dtype == np.float32

    def test_inference_without_graph_records_nothing(self):
        """Test ops outside a graph compute values without requiring grad."""
        w = Parameter(np.ones((2, 2)), name="w")
        out = Tensor(np.ones((1, 2))) @ w
        assert not out.requires_grad
        np.testing.assert_array_equal(out.data, [[2.0, 2.0]])

    def test_rejects_non_numeric_data(self):
        """Test Tensor refuses string data."""
        with pytest.raises(TypeError):
            Tensor(np.array(["a", "b"]))


class TestBackward:
    """Tests for reverse-mode gradients."""

    def test_square(self):
        """Test d(x^2)/dx at 3 is 6."""
        graph = Graph(build=lambda i: i["x"] * i["x"])
        forward(graph, {"x": 3.0})
        grads = backward(graph)
        assert float(grads["x"]) == pytest.approx(6.0)

    def test_softmax_cross_entropy(self):
        """Test uniform logits with target 0 give p - onehot."""
        graph = Graph(build=lambda i: -ops.log_softmax(i["z"])[0])
        forward(graph, {"z": np.zeros(4)})
        grads = backward(graph)
        np.testing.assert_allclose(grads["z"], [-0.75, 0.25, 0.25, 0.25])

    def test_constant_output_has_zero_gradient(self):
        """Test a constant function has zero gradient."""
        graph = Graph(build=lambda i: Tensor(np.array(2.0)))
        forward(graph, {"x": np.array([1.0, 2.0])})
        grads = backward(graph)
        np.testing.assert_array_equal(grads["x"], np.zeros(2))

    def test_unused_parameter_gradient_is_exact_zero(self):
        """Test a bound parameter the output ignores gets exact zeros."""
        used = Parameter(np.ones(3), name="used")
        unused = Parameter(np.ones(3), name="unused")
        graph = Graph(build=lambda i: ops.reduce_sum(i["x"] * used), params={"used": used, "unused": unused})
        forward(graph, {"x": np.arange(3.0)})
        grads = backward(graph)
        np.testing.assert_array_equal(grads["used"], [0.0, 1.0, 2.0])
        assert np.all(grads["unused"] == 0.0)

    def test_fan_out_accumulates(self):
        """Test gradients add across several uses of one tensor."""
        graph = Graph(build=lambda i: ops.reduce_sum(i["x"] * 2.0 + i["x"] * i["x"]))
        forward(graph, {"x": np.array([1.0, -2.0])})
        grads = backward(graph)
        np.testing.assert_allclose(grads["x"], [4.0, -2.0])

    def test_backward_before_forward(self):
        """Test backward on a fresh graph is a state error."""
        graph = Graph(build=lambda i: i["x"])
        with pytest.raises(GraphStateError):
            backward(graph, np.ones(1))

    def test_linearity_over_outputs(self):
        """Test gradient of a sum of outputs equals the sum of per-output gradients."""
        def build(i):
            return {"a": ops.tanh(i["x"]), "b": ops.exp(i["x"]) * 0.5}

        graph = Graph(build=build)
        x = np.array([0.3, -0.7, 1.1])
        forward(graph, {"x": x})
        both = backward(graph, {"a": np.ones(3), "b": np.ones(3)})["x"]
        only_a = backward(graph, {"a": np.ones(3), "b": np.zeros(3)})["x"]
        only_b = backward(graph, {"a": np.zeros(3), "b": np.ones(3)})["x"]
        np.testing.assert_allclose(both, only_a + only_b, rtol=1e-12)

    def test_context_manager_gradient(self):
        """Test recording arbitrary code and asking for parameter gradients."""
        w = Parameter(np.array([1.0, 2.0]), name="w")
        with Graph() as graph:
            loss = ops.reduce_sum(w * w)
        grads = graph.gradient(loss, {"w": w})
        np.testing.assert_allclose(grads["w"], [2.0, 4.0])


PRIMITIVES = {
    "add": (lambda i: i["x"] + i["y"], {"x": (3, 4), "y": (4,)}),
    "sub": (lambda i: i["x"] - i["y"], {"x": (3, 4), "y": (3, 1)}),
    "mul": (lambda i: i["x"] * i["y"], {"x": (2, 3), "y": (2, 3)}),
    "div": (lambda i: i["x"] / (ops.exp(i["y"]) + 1.0), {"x": (2, 3), "y": (2, 3)}),
    "power": (lambda i: ops.power(ops.exp(i["x"]), 1.5), {"x": (5,)}),
    "matmul": (lambda i: i["x"] @ i["y"], {"x": (2, 3, 4), "y": (4, 2)}),
    "matvec": (lambda i: i["x"] @ i["y"], {"x": (3, 4), "y": (4,)}),
    "tanh": (lambda i: ops.tanh(i["x"]), {"x": (6,)}),
    "sigmoid": (lambda i: ops.sigmoid(i["x"]), {"x": (6,)}),
    "log": (lambda i: ops.log(ops.exp(i["x"]) + 0.5), {"x": (4,)}),
    "sqrt": (lambda i: ops.sqrt(ops.exp(i["x"])), {"x": (4,)}),
    "concat": (lambda i: ops.concat([i["x"], i["y"]], axis=-1), {"x": (2, 3), "y": (2, 2)}),
    "stack": (lambda i: ops.stack([i["x"], i["y"]], axis=1), {"x": (2, 3), "y": (2, 3)}),
    "slice": (lambda i: i["x"][1:, ::2], {"x": (3, 5)}),
    "take": (lambda i: ops.take(i["x"], np.array([[0, 2], [2, 1]])), {"x": (3, 4)}),
    "reshape": (lambda i: ops.reshape(i["x"], (4, 3)) * i["y"], {"x": (2, 6), "y": (4, 3)}),
    "transpose": (lambda i: ops.transpose(i["x"], (1, 0, 2)) * 2.0, {"x": (2, 3, 4)}),
    "sum": (lambda i: ops.reduce_sum(i["x"] * i["x"], axis=0), {"x": (3, 4)}),
    "mean": (lambda i: ops.reduce_mean(i["x"] * i["x"], axis=(0, 2), keepdims=True), {"x": (2, 3, 4)}),
    "softmax": (lambda i: ops.softmax(i["x"]), {"x": (2, 5)}),
    "log_softmax": (lambda i: ops.log_softmax(i["x"]), {"x": (2, 5)}),
    "masked_softmax": (
        lambda i: ops.masked_softmax(i["x"], np.array([[1, 1, 0, 1], [0, 1, 1, 0]], dtype=bool)),
        {"x": (2, 4)},
    ),
    "conv1d": (lambda i: ops.conv1d_time(i["x"], i["y"]), {"x": (2, 6, 3), "y": (5, 3, 4)}),
}


class TestGradientCheck:
    """Tests for the finite-difference harness."""

    def test_cubic(self):
        """Test x^3 at 2 matches the analytic 12 closely."""
        graph = Graph(build=lambda i: i["x"] * i["x"] * i["x"])
        forward(graph, {"x": 2.0})
        assert float(backward(graph)["x"]) == pytest.approx(12.0)
        assert check_gradient(graph, {"x": 2.0}, epsilon=1e-5) < 1e-7

    @pytest.mark.parametrize("name", sorted(PRIMITIVES))
    def test_every_primitive_at_random_points(self, name):
        """Test each primitive passes the gradient check at 10 random points."""
        build, shapes = PRIMITIVES[name]
        graph = Graph(build=build)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            point = {key: rng.uniform(-1.5, 1.5, size=shape) for key, shape in shapes.items()}
            assert check_gradient(graph, point, epsilon=1e-5) < 1e-5, f"{name} at seed {seed}"

    def test_parameters_are_checked(self):
        """Test bound parameters are perturbed and compared too."""
        w = Parameter(np.array([[0.5, -0.3], [0.2, 0.8]]), name="w")
        graph = Graph(build=lambda i: ops.tanh(i["x"] @ w), params={"w": w})
        assert check_gradient(graph, {"x": np.array([[1.0, -2.0]])}) < 1e-6
        np.testing.assert_array_equal(w.data, [[0.5, -0.3], [0.2, 0.8]])

    def test_non_finite_names_node(self):
        """Test a NaN-producing node is reported by name."""
        graph = Graph(build=lambda i: ops.log(i["x"]))
        with pytest.raises(NonFiniteError, match="log#0"):
            check_gradient(graph, {"x": np.array([-1.0])})

    def test_rejects_non_positive_epsilon(self):
        """Test epsilon must be positive."""
        graph = Graph(build=lambda i: i["x"])
        with pytest.raises(ValueError):
            check_gradient(graph, {"x": 1.0}, epsilon=0.0)


class TestCheckpoint:
    """Tests for the binary tensor archive."""

    def test_bit_exact_round_trip(self, tmp_path):
        """Test arrays and metadata survive a save/load bit-exactly."""
        rng = np.random.default_rng(0)
        tensors = {
            "enc.w": rng.standard_normal((3, 4)),
            "enc.b": rng.standard_normal(4).astype(np.float32),
            "lengths": np.array([5, 3, 1], dtype=np.int64),
            "scalar": np.array(1.25),
        }
        path = save_tensors(tmp_path / "ckpt.bin", tensors, metadata={"epoch": 3})
        loaded, meta = load_tensors(path)
        assert meta == {"epoch": 3}
        assert list(loaded) == list(tensors)
        for name, value in tensors.items():
            assert loaded[name].dtype == value.dtype
            assert loaded[name].shape == value.shape
            assert loaded[name].tobytes() == value.tobytes()

    def test_rejects_foreign_file(self, tmp_path):
        """Test a file without the magic header is rejected."""
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not an archive")
        with pytest.raises(ValueError):
            load_tensors(path)

    def test_rejects_unsupported_dtype(self, tmp_path):
        """Test complex arrays cannot be archived."""
        with pytest.raises(ValueError):
            save_tensors(tmp_path / "c.bin", {"z": np.zeros(2, dtype=np.complex128)})


class TestRng:
    """Tests for derived random streams."""

    def test_same_keys_same_stream(self):
        """Test identical (seed, keys) reproduce the stream."""
        a = derive_rng(7, "utt-1", 3).standard_normal(5)
        b = derive_rng(7, "utt-1", 3).standard_normal(5)
        assert np.array_equal(a, b)

    def test_different_keys_differ(self):
        """Test different keys give different streams."""
        a = derive_rng(7, "utt-1").standard_normal(5)
        b = derive_rng(7, "utt-2").standard_normal(5)
        assert not np.array_equal(a, b)
