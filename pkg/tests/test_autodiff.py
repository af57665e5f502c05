"""Finite-difference checks for every primitive in the autodiff tape."""

import numpy as np
import pytest

from faircast.autodiff import (
    Parameter,
    Tensor,
    absolute,
    concat,
    leaky_relu,
    relu,
    sigmoid,
    softmax,
    sqrt,
    tanh,
    zero_grads,
)

from conftest import central_difference, relative_error


def check_op(build, shapes, rng, shift=0.0, tol=1e-7):
    """FD-check a scalar-valued function of several Parameter leaves."""
    params = [Parameter(rng.normal(size=s) + shift) for s in shapes]

    def value():
        return build(*params).item()

    out = build(*params)
    out.backward()
    for p in params:
        fd = central_difference(value, p.data)
        assert p.grad is not None
        assert relative_error(p.grad, fd) < tol, f"leaf {p.shape}"


class TestArithmetic:
    def test_add_broadcast(self, rng):
        check_op(lambda a, b: ((a + b) ** 2).sum(), [(3, 4), (4,)], rng)

    def test_sub_mul(self, rng):
        check_op(lambda a, b: ((a - b) * a).sum(), [(2, 3), (2, 3)], rng)

    def test_div(self, rng):
        check_op(lambda a, b: (a / b).sum(), [(3, 3), (3, 3)], rng, shift=2.0)

    def test_scalar_ops(self, rng):
        check_op(lambda a: (2.5 * a + 1.0 - a / 3.0).sum(), [(4,)], rng)

    def test_pow(self, rng):
        check_op(lambda a: (a ** 3).sum(), [(2, 2)], rng)

    def test_neg(self, rng):
        check_op(lambda a: (-a * a).sum(), [(5,)], rng)


class TestMatmul:
    def test_plain(self, rng):
        check_op(lambda a, b: (a @ b).sum(), [(3, 4), (4, 2)], rng)

    def test_batched_left_broadcast(self, rng):
        # (N, N) @ (B, N, f): the adjacency-times-features pattern.
        check_op(lambda a, b: ((a @ b) ** 2).sum(), [(3, 3), (2, 3, 4)], rng)

    def test_batched_right_broadcast(self, rng):
        # (B, N, f) @ (f, o): the features-times-weight pattern.
        check_op(lambda a, b: ((a @ b) ** 2).sum(), [(2, 3, 4), (4, 5)], rng)

    def test_rmatmul_constant_left(self, rng):
        f = rng.normal(size=(2, 3))
        check_op(lambda a: ((f @ a) ** 2).sum(), [(3, 4)], rng)


class TestReductionsAndShape:
    def test_sum_axis_keepdims(self, rng):
        check_op(lambda a: ((a - a.sum(axis=0, keepdims=True)) ** 2).sum(), [(3, 4)], rng)

    def test_sum_tuple_axis(self, rng):
        check_op(lambda a: (a.sum(axis=(-2, -1)) ** 2).sum(), [(2, 3, 4)], rng)

    def test_mean(self, rng):
        check_op(lambda a: ((a - a.mean(axis=(0, 1), keepdims=True)) ** 2).sum(), [(2, 3, 4)], rng)

    def test_transpose(self, rng):
        check_op(lambda a: ((a.transpose(0, 2, 1) @ a) ** 2).sum(), [(2, 3, 4)], rng)

    def test_concat(self, rng):
        check_op(lambda a, b: ((concat([a, b], axis=-1)) ** 2).sum(), [(2, 3), (2, 2)], rng)


class TestNonlinearities:
    def test_sigmoid(self, rng):
        check_op(lambda a: sigmoid(a).sum(), [(3, 3)], rng)

    def test_sigmoid_extreme_values_stable(self):
        out = sigmoid(Tensor([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == 0.0 and out.data[1] == 0.5 and out.data[2] == 1.0

    def test_tanh(self, rng):
        check_op(lambda a: (tanh(a) ** 2).sum(), [(4,)], rng)

    def test_relu(self, rng):
        check_op(lambda a: relu(a).sum(), [(4, 4)], rng, shift=0.5)

    def test_leaky_relu(self, rng):
        check_op(lambda a: (leaky_relu(a) ** 2).sum(), [(4, 4)], rng, shift=0.5)

    def test_softmax(self, rng):
        check_op(lambda a: ((softmax(a) - 0.3) ** 2).sum(), [(3, 5)], rng)

    def test_softmax_rows_sum_to_one(self, rng):
        out = softmax(Tensor(rng.normal(size=(6, 4)) * 50))
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_sqrt(self, rng):
        check_op(lambda a: sqrt(a).sum(), [(3, 3)], rng, shift=3.0)

    def test_abs(self, rng):
        check_op(lambda a: absolute(a).sum(), [(4,)], rng, shift=1.0)


class TestGraphMechanics:
    def test_gradient_accumulates_over_shared_leaf(self):
        a = Parameter([2.0])
        out = a * a + a * 3.0
        out.backward()
        np.testing.assert_allclose(a.grad, [7.0])

    def test_zero_grads(self):
        a = Parameter([1.0])
        (a * 2.0).backward()
        assert a.grad is not None
        zero_grads([a])
        assert a.grad is None

    def test_detach_blocks_gradient(self):
        a = Parameter([3.0])
        out = a.detach() * a
        out.backward()
        np.testing.assert_allclose(a.grad, [3.0])

    def test_constant_graph_has_no_tape(self):
        out = Tensor([1.0]) * Tensor([2.0])
        assert not out.requires_grad

    def test_backward_needs_scalar(self):
        a = Parameter(np.ones((2, 2)))
        with pytest.raises(ValueError):
            (a * 2.0).backward()

    def test_deep_chain_does_not_recurse(self):
        a = Parameter([1.0])
        out = a
        for _ in range(3000):
            out = out + 1.0
        out.backward()
        np.testing.assert_allclose(a.grad, [1.0])

    def test_second_backward_accumulates(self):
        a = Parameter([1.0])
        (a * 2.0).backward()
        (a * 3.0).backward()
        np.testing.assert_allclose(a.grad, [5.0])
