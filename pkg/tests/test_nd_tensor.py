"""Graph mechanics: accumulation, aliasing, topology, contexts, Grads API."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2st import nd
from s2st.errors import ContractError
from s2st.nd import ops


def _p(arr):
    return nd.Parameter(np.asarray(arr, dtype=np.float32))


class TestBackward:
    def test_fanout_accumulates(self):
        x = _p([3.0])
        y = ops.add(ops.mul(x, x), x)  # x^2 + x -> 2x + 1 = 7
        g = nd.backward(ops.sum_(y))
        np.testing.assert_allclose(g.get(x), [7.0])

    def test_self_add_aliased_grads(self):
        # both parents of add are the same tensor and backward hands the
        # same array object to each; accumulation must still double it
        x = _p([1.0, 2.0])
        g = nd.backward(ops.sum_(ops.add(x, x)))
        np.testing.assert_allclose(g.get(x), [2.0, 2.0])

    def test_deep_diamond(self):
        x = _p([0.5])
        a = ops.mul(x, 2.0)
        b = ops.mul(x, 3.0)
        c = ops.mul(a, b)  # 6x^2 -> 12x = 6
        g = nd.backward(ops.sum_(c))
        np.testing.assert_allclose(g.get(x), [6.0], rtol=1e-6)

    def test_long_chain_no_recursion_limit(self):
        x = _p([1.0])
        y = x
        for _ in range(5000):
            y = ops.add(y, 0.0)
        g = nd.backward(ops.sum_(y))
        np.testing.assert_allclose(g.get(x), [1.0])

    def test_non_scalar_loss_rejected(self):
        x = _p([1.0, 2.0])
        with pytest.raises(ContractError):
            nd.backward(ops.mul(x, 2.0))

    def test_constants_get_no_grad(self):
        x = _p([1.0])
        c = nd.tensor(np.array([2.0], dtype=np.float32))
        g = nd.backward(ops.sum_(ops.mul(x, c)))
        assert g.get(c) is None
        np.testing.assert_allclose(g.get(x), [2.0])

    def test_no_grad_context_blocks_tape(self):
        x = _p([1.0])
        with nd.no_grad():
            y = ops.mul(x, x)
        assert y._parents == ()
        z = ops.mul(x, 2.0)
        g = nd.backward(ops.sum_(z))
        np.testing.assert_allclose(g.get(x), [2.0])

    def test_grad_arrays_are_writable_and_private(self):
        # returned grads must tolerate in-place scaling even when the raw
        # backward output was a read-only broadcast view
        x = _p(np.ones((3, 4)))
        g = nd.backward(ops.mul(ops.sum_(x), 1.0))
        arr = g.get(x)
        arr *= 2.0
        np.testing.assert_allclose(arr, np.full((3, 4), 2.0))

    def test_grads_global_norm_and_scale(self):
        a, b = _p([3.0]), _p([4.0])
        g = nd.backward(ops.sum_(ops.add(ops.mul(a, a), ops.mul(b, b))))
        # grads are 2a=6 and 2b=8 -> norm 10
        np.testing.assert_allclose(g.global_norm(), 10.0, rtol=1e-6)
        g.scale(0.5)
        np.testing.assert_allclose(g.get(a), [3.0])
        np.testing.assert_allclose(g.get(b), [4.0])


class TestDtypeContext:
    def test_default_is_float32(self):
        assert nd.default_dtype() == np.float32
        t = nd.as_tensor([1.0, 2.0])
        assert t.data.dtype == np.float32

    def test_use_dtype_switches_and_restores(self):
        with nd.use_dtype(np.float64):
            assert nd.default_dtype() == np.float64
            assert nd.as_tensor([1.0]).data.dtype == np.float64
        assert nd.default_dtype() == np.float32

    def test_integer_arrays_stay_integer(self):
        t = nd.as_tensor(np.array([1, 2, 3]))
        assert np.issubdtype(t.data.dtype, np.integer)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2 ** 32 - 1))
def test_backward_is_linear_in_loss(alpha, beta, seed):
    """grad(alpha*f + beta*g) == alpha*grad(f) + beta*grad(g)."""
    r = np.random.default_rng(seed)
    xv = r.standard_normal((3, 3)).astype(np.float32)

    def grads_of(fn):
        x = _p(xv)
        return nd.backward(fn(x)).get(x)

    f = lambda x: ops.sum_(ops.tanh(x))
    g = lambda x: ops.sum_(ops.mul(x, x))
    combined = grads_of(lambda x: ops.add(ops.mul(f(x), alpha), ops.mul(g(x), beta)))
    separate = alpha * grads_of(f) + beta * grads_of(g)
    np.testing.assert_allclose(combined, separate, rtol=1e-3, atol=1e-5)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_backward_is_deterministic(seed):
    r = np.random.default_rng(seed)
    xv = r.standard_normal((4, 4)).astype(np.float32)

    def run():
        x = _p(xv)
        y = ops.matmul(x, ops.transpose(x, (1, 0)))
        return nd.backward(ops.sum_(ops.tanh(y))).get(x).tobytes()

    assert run() == run()


def test_operator_sugar_matches_ops():
    a = _p([[1.0, 2.0], [3.0, 4.0]])
    b = _p([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal((a + b).data, ops.add(a, b).data)
    np.testing.assert_array_equal((a * b).data, ops.mul(a, b).data)
    np.testing.assert_array_equal((a - b).data, ops.sub(a, b).data)
    np.testing.assert_array_equal((a @ b).data, ops.matmul(a, b).data)
    np.testing.assert_array_equal((-a).data, ops.neg(a).data)
    np.testing.assert_array_equal((a / b).data, ops.div(a, b).data)
