import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hginpaint import autodiff as ad
from hginpaint.autodiff import Parameter, Tensor
from hginpaint.gradcheck import check_hypergraph
from hginpaint.hypergraph import (HypergraphLayerParams, build_incidence, default_edges, default_embed,
                                  hypergraph_forward, laplacian, propagation_matrix, spectral_oracle)

from oracles import propagation_loops, random_binary_incidence


def _identity_layer(c, n_nodes, window=3):
    params = HypergraphLayerParams.create(np.random.default_rng(0), c, c, n_nodes, window=window)
    params.theta.data[:] = np.eye(c)
    return params


# closed-form propagation

def test_identity_incidence_gives_identity_exactly():
    P = propagation_matrix(np.eye(5), epsilon=0.0).data
    assert np.array_equal(P, np.eye(5))
    assert np.array_equal(laplacian(np.eye(5), epsilon=0.0), np.zeros((5, 5)))


def test_single_uniform_hyperedge_averages():
    P = propagation_matrix(np.ones((4, 1)), epsilon=0.0).data
    np.testing.assert_allclose(P, np.full((4, 4), 0.25), rtol=0, atol=1e-12)
    eig = np.linalg.eigvalsh(laplacian(np.ones((4, 1)), epsilon=0.0))
    np.testing.assert_allclose(eig, [0.0, 1.0, 1.0, 1.0], atol=1e-12)


def test_weighted_two_node_case():
    P = propagation_matrix(np.array([[2.0], [1.0]]), epsilon=0.0).data
    want = np.array([[2.0, math.sqrt(2.0)], [math.sqrt(2.0), 1.0]]) / 3.0
    np.testing.assert_allclose(P, want, rtol=0, atol=1e-10)
    np.testing.assert_allclose(P, [[0.6667, 0.4714], [0.4714, 0.3333]], atol=1e-4)


def test_propagation_matches_loop_oracle_on_weighted_incidence():
    rng = np.random.default_rng(4)
    for n, m in [(3, 2), (6, 4), (9, 3)]:
        H = rng.uniform(0.1, 2.0, (n, m))
        np.testing.assert_allclose(propagation_matrix(H, 0.0).data, propagation_loops(H.tolist()),
                                   rtol=0, atol=1e-12)


def test_batched_incidence_keeps_items_separate():
    rng = np.random.default_rng(5)
    H = rng.uniform(0, 1, (3, 6, 2))
    batched = propagation_matrix(H, 1e-6).data
    for i in range(3):
        np.testing.assert_array_equal(batched[i], propagation_matrix(H[i], 1e-6).data)


def test_nonpositive_degree_is_an_error():
    with pytest.raises(ad.AutodiffError):
        propagation_matrix(np.zeros((3, 2)), epsilon=0.0)


# row-sum property

def test_rows_sum_to_one_only_on_regular_hypergraphs():
    # P 1 = 1 needs equal vertex degrees; a two-edge path breaks it
    H = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert not np.allclose(propagation_matrix(H, 0.0).data.sum(axis=1), 1.0)
    regular = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_allclose(propagation_matrix(regular, 0.0).data.sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 16), st.integers(1, 8))
@settings(max_examples=60, deadline=None)
def test_sqrt_degree_is_fixed_point(seed, n, m):
    H = random_binary_incidence(np.random.default_rng(seed), n, m)
    sq = np.sqrt(H.sum(axis=1))
    np.testing.assert_allclose(propagation_matrix(H, 0.0).data @ sq, sq, rtol=1e-12, atol=1e-12)


# spectrum

@given(st.integers(0, 10_000), st.integers(1, 20), st.integers(1, 10))
@settings(max_examples=60, deadline=None)
def test_laplacian_symmetric_psd(seed, n, m):
    rng = np.random.default_rng(seed)
    psi = np.maximum(rng.standard_normal((n, 3)), 0)
    H = np.abs(psi @ np.diag(rng.standard_normal(3)) @ psi.T @ rng.standard_normal((n, m)))
    L = laplacian(H, 1e-6)
    assert np.max(np.abs(L - L.T)) < 1e-12
    assert np.linalg.eigvalsh(L).min() >= -1e-8


def test_first_order_filter_reproduces_propagation():
    rng = np.random.default_rng(8)
    H = random_binary_incidence(rng, 10, 4)
    x = rng.standard_normal((10, 3))
    lam, phi = np.linalg.eigh(laplacian(H, 0.0))
    spectral = phi @ np.diag(1.0 - lam) @ phi.T @ x
    np.testing.assert_allclose(spectral, propagation_matrix(H, 0.0).data @ x, atol=1e-12)


# incidence construction

def test_default_sizes():
    assert default_embed(128) == 32 and default_embed(16) == 8
    assert default_edges(64) == 16 and default_edges(10) == 3


def test_hand_set_factors():
    params = HypergraphLayerParams(
        w_psi=Parameter("w_psi", np.zeros((1, 1, 1, 1))), b_psi=Parameter("b_psi", [1.0]),
        w_lambda=Parameter("w_lambda", np.zeros((1, 1, 1, 1))), b_lambda=Parameter("b_lambda", [1.0]),
        w_omega=Parameter("w_omega", np.ones((1, 1, 1, 1))), b_omega=Parameter("b_omega", [0.0]),
        theta=Parameter("theta", np.eye(1)))
    f = build_incidence(Tensor(np.array([1.0, 0.0]).reshape(1, 1, 2, 1)), params)
    assert np.array_equal(f.psi.data[0], [[1.0], [1.0]])
    assert np.array_equal(f.lambda_diag.data[0], [[1.0]])
    assert np.array_equal(f.omega.data[0], [[1.0], [0.0]])
    assert np.array_equal(f.H.data[0], [[1.0], [1.0]])
    assert np.array_equal(f.D_diag.data[0], [1.0, 1.0]) and np.array_equal(f.B_diag.data[0], [2.0])


def test_zero_omega_gives_zero_incidence():
    params = HypergraphLayerParams.create(np.random.default_rng(1), 4, 4, 16, window=3)
    params.w_omega.data[:] = 0.0
    x = Tensor(np.random.default_rng(2).standard_normal((2, 4, 4, 4)))
    assert np.array_equal(build_incidence(x, params).H.data, np.zeros((2, 16, 4)))


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_incidence_nonnegative(seed):
    rng = np.random.default_rng(seed)
    params = HypergraphLayerParams.create(rng, 3, 2, 9, embed=2, window=3)
    for p in params.parameters():
        p.data[:] = rng.standard_normal(p.shape) * 2
    H = build_incidence(Tensor(rng.standard_normal((2, 3, 3, 3))), params).H.data
    assert (H >= 0).all()


def test_channel_mismatch_rejected():
    params = HypergraphLayerParams.create(np.random.default_rng(0), 4, 4, 16)
    with pytest.raises(ValueError):
        build_incidence(Tensor(np.zeros((1, 4, 4, 3))), params)


def test_inconsistent_weights_rejected():
    good = HypergraphLayerParams.create(np.random.default_rng(0), 4, 4, 16, embed=2, window=3)
    with pytest.raises(ValueError):
        HypergraphLayerParams(good.w_psi, good.b_psi, Parameter("wl", np.zeros((1, 1, 3, 3))), good.b_lambda,
                              good.w_omega, good.b_omega, good.theta)
    with pytest.raises(ValueError):
        HypergraphLayerParams(good.w_psi, good.b_psi, good.w_lambda, good.b_lambda,
                              good.w_omega, good.b_omega, Parameter("t", np.zeros((3, 4))))
    with pytest.raises(ValueError):
        HypergraphLayerParams(good.w_psi, good.b_psi, good.w_lambda, good.b_lambda,
                              Parameter("wo", np.zeros((2, 2, 4, 4))), good.b_omega, good.theta)
    with pytest.raises(ValueError):
        HypergraphLayerParams.create(np.random.default_rng(0), 4, 4, 16, epsilon=0.0)


# layer forward

def test_identity_incidence_passes_nonnegative_input():
    x = np.random.default_rng(3).uniform(0, 1, (1, 3, 3, 2))
    out = hypergraph_forward(Tensor(x), _identity_layer(2, 9), incidence=np.eye(9)[None], epsilon=0.0)
    np.testing.assert_array_equal(out.data, x)


def test_uniform_hyperedge_gives_spatial_mean():
    x = np.random.default_rng(4).uniform(0, 1, (1, 4, 4, 3))
    out = hypergraph_forward(Tensor(x), _identity_layer(3, 16), incidence=np.ones((1, 16, 1)), epsilon=0.0)
    np.testing.assert_allclose(out.data, np.broadcast_to(x.mean(axis=(1, 2), keepdims=True), x.shape),
                               atol=1e-12)


def test_zero_input_zero_output():
    params = HypergraphLayerParams.create(np.random.default_rng(5), 4, 6, 16, window=3)
    assert np.array_equal(hypergraph_forward(Tensor(np.zeros((2, 4, 4, 4))), params).data, np.zeros((2, 4, 4, 6)))


def test_forward_matches_oracle_small():
    rng = np.random.default_rng(6)
    H = random_binary_incidence(rng, 12, 5)
    x = rng.standard_normal((1, 3, 4, 2))
    got = hypergraph_forward(Tensor(x), _identity_layer(2, 12), activation=None,
                             incidence=H[None], epsilon=0.0).data.reshape(12, 2)
    np.testing.assert_allclose(got, spectral_oracle(H, x.reshape(12, 2)), rtol=0, atol=1e-10)


# oracle

def test_oracle_examples():
    x = np.array([[0.3, -1.2]])
    np.testing.assert_allclose(spectral_oracle(np.ones((1, 1)), x), x, atol=1e-15)
    x4 = np.arange(8.0).reshape(4, 2)
    np.testing.assert_allclose(spectral_oracle(np.ones((4, 1)), x4), np.tile(x4.mean(0), (4, 1)), atol=1e-12)
    pairs = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    want = np.array([x4[:2].mean(0), x4[:2].mean(0), x4[2:].mean(0), x4[2:].mean(0)])
    np.testing.assert_allclose(spectral_oracle(pairs, x4), want, atol=1e-12)


@pytest.mark.parametrize("H,msg", [
    (np.array([[1.0, 0.0], [1.0, 0.0]]), "empty"),
    (np.array([[1.0], [0.0]]), "isolated"),
    (np.array([[0.5], [1.0]]), "binary"),
])
def test_oracle_preconditions(H, msg):
    with pytest.raises(ValueError, match=msg):
        spectral_oracle(H, np.ones((H.shape[0], 1)))


# gradients

def test_layer_gradient_check():
    result = check_hypergraph()
    assert result.error < 1e-4, result


def test_all_weight_groups_receive_gradient():
    rng = np.random.default_rng(7)
    params = HypergraphLayerParams.create(rng, 4, 4, 16, window=3)
    x = Parameter("x", rng.standard_normal((1, 4, 4, 4)))
    ad.backward(ad.tsum(hypergraph_forward(x, params) * Tensor(rng.standard_normal((1, 4, 4, 4)))))
    for p in [x, params.w_psi, params.w_lambda, params.w_omega, params.theta]:
        assert np.abs(p.grad).max() > 0, p
