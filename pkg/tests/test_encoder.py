import math

import numpy as np
import pytest

from faircast.autodiff import Parameter, Tensor
from faircast.encoder import RgcuParams, encode, graph_propagate, init_rgcu, rgcu_step
from faircast.graph import build_adjacency, with_self_loop

from conftest import central_difference, relative_error


def scalar_params(w_r, w_u, w_c, b_r=0.0, b_u=0.0, b_c=0.0):
    """N=1, o=1, in_dim=1 cell with explicit scalar weights (w_x, w_h) per gate."""
    return RgcuParams(
        w_reset=Parameter(np.array(w_r).reshape(2, 1)),
        w_update=Parameter(np.array(w_u).reshape(2, 1)),
        w_cand=Parameter(np.array(w_c).reshape(2, 1)),
        b_reset=Parameter([b_r]),
        b_update=Parameter([b_u]),
        b_cand=Parameter([b_c]),
        hidden_dim=1,
    )


def zero_params(o, in_dim=1):
    z = lambda *s: Parameter(np.zeros(s))
    return RgcuParams(z(in_dim + o, o), z(in_dim + o, o), z(in_dim + o, o), z(o), z(o), z(o), o)


class TestGraphPropagate:
    def test_identity_passthrough(self, rng):
        feats = Tensor(rng.normal(size=(2, 3, 4)))
        out = graph_propagate(np.eye(3), feats, Tensor(np.eye(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, feats.data, atol=1e-14)

    def test_zero_weight_broadcasts_bias(self, rng):
        feats = Tensor(rng.normal(size=(2, 3, 4)))
        bias = np.array([1.0, -2.0])
        out = graph_propagate(np.eye(3), feats, Tensor(np.zeros((4, 2))), Tensor(bias))
        np.testing.assert_array_equal(out.data, np.broadcast_to(bias, (2, 3, 2)))

    def test_hand_matrix_arithmetic(self):
        adj = np.array([[1.0, 0.0], [0.5, 0.5]])
        feats = Tensor(np.array([[[1.0], [3.0]]]))
        out = graph_propagate(adj, feats, Tensor([[2.0]]), Tensor([1.0]))
        np.testing.assert_allclose(out.data, [[[3.0], [5.0]]])


class TestRgcuStep:
    def test_all_zero_params_halve_state(self, rng):
        o = 3
        h_prev = Tensor(rng.normal(size=(2, 4, o)))
        x = Tensor(rng.normal(size=(2, 4, 1)))
        out = rgcu_step(x, h_prev, np.eye(4), zero_params(o))
        np.testing.assert_allclose(out.data, 0.5 * h_prev.data, atol=1e-14)

    def test_zero_state_zero_params(self):
        out = rgcu_step(Tensor(np.ones((1, 2, 1))), Tensor(np.zeros((1, 2, 3))), np.eye(2), zero_params(3))
        np.testing.assert_array_equal(out.data, np.zeros((1, 2, 3)))

    def test_scalar_hand_evaluation(self):
        # N=1, o=1, adjacency [[1]]: plain GRU recurrences evaluated by hand.
        x, h = 0.7, -0.4
        wr, wu, wc = (0.3, -0.5), (0.2, 0.6), (-0.7, 0.4)
        br, bu, bc = 0.1, -0.2, 0.05
        sig = lambda v: 1.0 / (1.0 + math.exp(-v))
        r = sig(x * wr[0] + h * wr[1] + br)
        u = sig(x * wu[0] + h * wu[1] + bu)
        c = math.tanh(x * wc[0] + (r * h) * wc[1] + bc)
        expected = u * h + (1 - u) * c
        params = scalar_params([wr[0], wr[1]], [wu[0], wu[1]], [wc[0], wc[1]], br, bu, bc)
        out = rgcu_step(
            Tensor(np.array([[[x]]])), Tensor(np.array([[[h]]])), np.array([[1.0]]), params
        )
        np.testing.assert_allclose(out.data, [[[expected]]], atol=1e-14)

    def test_convex_combination_bound(self, rng):
        # h_prev in [-1, 1] keeps h_t in [-1, 1]
        o = 4
        params = init_rgcu(o, rng)
        for scale in (1.0, 5.0):
            for p in params.parameters():
                p.data = p.data * scale
            h_prev = Tensor(rng.uniform(-1, 1, size=(3, 5, o)))
            x = Tensor(rng.normal(size=(3, 5, 1)) * scale)
            out = rgcu_step(x, h_prev, build_adjacency(rng.normal(size=(5, 3))).data, params)
            assert np.all(out.data >= -1.0) and np.all(out.data <= 1.0)


class TestEncode:
    def test_single_step_equals_step(self, rng):
        params = init_rgcu(3, rng)
        adj = with_self_loop(build_adjacency(rng.normal(size=(4, 2)))).data
        inputs = rng.normal(size=(2, 1, 4))
        h0 = Tensor(np.zeros((2, 4, 3)))
        via_encode = encode(inputs, adj, params)
        via_step = rgcu_step(Tensor(inputs[:, 0, :].reshape(2, 4, 1)), h0, adj, params)
        np.testing.assert_array_equal(via_encode.data, via_step.data)

    def test_zero_params_zero_state_ignores_input(self, rng):
        params = zero_params(2)
        out = encode(rng.normal(size=(3, 5, 4)), np.eye(4), params)
        np.testing.assert_array_equal(out.data, np.zeros((3, 4, 2)))

    def test_two_steps_compose(self, rng):
        params = init_rgcu(2, rng)
        adj = with_self_loop(build_adjacency(rng.normal(size=(3, 2)))).data
        inputs = rng.normal(size=(2, 2, 3))
        h = Tensor(np.zeros((2, 3, 2)))
        for t in range(2):
            h = rgcu_step(Tensor(inputs[:, t, :].reshape(2, 3, 1)), h, adj, params)
        np.testing.assert_allclose(encode(inputs, adj, params).data, h.data, atol=1e-15)

    def test_permutation_equivariance(self, rng):
        params = init_rgcu(3, rng)
        n = 5
        adj = build_adjacency(rng.normal(size=(n, 2))).data
        inputs = rng.normal(size=(2, 4, n))
        perm = rng.permutation(n)
        base = encode(inputs, adj, params).data
        permuted = encode(inputs[:, :, perm], adj[np.ix_(perm, perm)], params).data
        np.testing.assert_allclose(permuted, base[:, perm, :], atol=1e-12)

    def test_gradient_through_unrolled_cell_and_embedding(self, rng):
        # d(sum H)/d(param) for every RGCU weight and the node embedding,
        # with the adjacency rebuilt from the embedding inside the loss.
        b, n, w, o, d = 2, 3, 3, 2, 2
        params = init_rgcu(o, rng)
        emb = Parameter(rng.normal(size=(n, d)))
        inputs = rng.normal(size=(b, w, n))

        def loss():
            return float(encode(inputs, with_self_loop(build_adjacency(emb)), params).data.sum())

        out = encode(inputs, with_self_loop(build_adjacency(emb)), params).sum()
        out.backward()
        for leaf in [emb, *params.parameters()]:
            fd = central_difference(loss, leaf.data)
            assert relative_error(leaf.grad, fd) < 1e-4, leaf.shape

    def test_bad_input_rank(self, rng):
        with pytest.raises(ValueError):
            encode(rng.normal(size=(3, 4)), np.eye(4), init_rgcu(2, rng))
