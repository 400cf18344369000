"""Hypergraph convolution over spatial feature maps with a learned incidence matrix.

Each spatial position of an ``(h, w, C)`` feature map is a vertex. The
incidence matrix is built from the features themselves::

    H = | relu(X W_psi) diag(lambda) relu(X W_psi)^T  conv_s(X; W_omega) |

and features are propagated with ``P = D^-1/2 H W B^-1 H^T D^-1/2``, where
``W`` (hyperedge weights) is fixed to the identity, ``D`` holds vertex degrees
(row sums of H) and ``B`` hyperedge degrees (column sums). The layer output is
``elu(P X theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def default_embed(channels: int) -> int:
    return max(channels // 4, 8)


def default_edges(n_nodes: int) -> int:
    return max(1, math.ceil(n_nodes / 4))


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, dtype=np.float64) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class HypergraphLayerParams:
    w_psi: Parameter
    b_psi: Parameter
    w_lambda: Parameter
    b_lambda: Parameter
    w_omega: Parameter
    b_omega: Parameter
    theta: Parameter
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.window % 2 != 1:
            raise ValueError(f"omega window must be odd, got {self.window}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        c, e = self.channels, self.embed
        if self.w_lambda.shape != (1, 1, e, e):
            raise ValueError(f"w_lambda {self.w_lambda.shape} inconsistent with embed width {e}")
        if self.w_omega.shape[2] != c or self.theta.shape[0] != c:
            raise ValueError(f"w_omega {self.w_omega.shape} / theta {self.theta.shape} "
                             f"inconsistent with {c} input channels")

    @property
    def channels(self) -> int:
        return self.w_psi.shape[2]

    @property
    def embed(self) -> int:
        return self.w_psi.shape[3]

    @property
    def edges(self) -> int:
        return self.w_omega.shape[3]

    @property
    def window(self) -> int:
        return self.w_omega.shape[0]

    @property
    def out_channels(self) -> int:
        return self.theta.shape[1]

    @classmethod
    def create(cls, rng: np.random.Generator, channels: int, out_channels: int, n_nodes: int,
               embed: int | None = None, edges: int | None = None, window: int = 7,
               epsilon: float = 1e-6, prefix: str = "hg", dtype=np.float64) -> "HypergraphLayerParams":
        embed = embed or default_embed(channels)
        edges = edges or default_edges(n_nodes)

        def p(name, arr):
            return Parameter(f"{prefix}.{name}", arr, dtype=dtype)

        return cls(
            w_psi=p("w_psi", kaiming_uniform(rng, (1, 1, channels, embed), channels)),
            b_psi=p("b_psi", np.zeros(embed)),
            w_lambda=p("w_lambda", kaiming_uniform(rng, (1, 1, embed, embed), embed)),
            b_lambda=p("b_lambda", np.zeros(embed)),
            w_omega=p("w_omega", kaiming_uniform(rng, (window, window, channels, edges),
                                                 window * window * channels)),
            b_omega=p("b_omega", np.zeros(edges)),
            theta=p("theta", kaiming_uniform(rng, (channels, out_channels), channels)),
            epsilon=epsilon,
        )

    def parameters(self) -> list[Parameter]:
        return [self.w_psi, self.b_psi, self.w_lambda, self.b_lambda,
                self.w_omega, self.b_omega, self.theta]


@dataclass
class IncidenceFactors:
    """Batched factors; leading axis is the batch. Degrees are not yet regularized."""
    psi: Tensor          # (b, N, C_hat)
    lambda_diag: Tensor  # (b, 1, C_hat)
    omega: Tensor        # (b, N, M)
    H: Tensor            # (b, N, M), elementwise nonnegative
    D_diag: Tensor       # (b, N)
    B_diag: Tensor       # (b, M)


def build_incidence(x: Tensor, params: HypergraphLayerParams) -> IncidenceFactors:
    b, h, w, c = x.shape
    if c != params.channels:
        raise ValueError(f"hypergraph layer expects {params.channels} channels, input has {c}")
    n = h * w
    psi_map = ad.relu(ad.conv2d(x, params.w_psi, params.b_psi))
    # lambda pools the embedded features, one diagonal per batch item
    lam = ad.conv2d(ad.global_avg_pool(psi_map), params.w_lambda, params.b_lambda)
    lam = ad.reshape(lam, (b, 1, params.embed))
    omega = ad.reshape(ad.conv2d(x, params.w_omega, params.b_omega), (b, n, params.edges))
    psi = ad.reshape(psi_map, (b, n, params.embed))
    psi_t_omega = ad.matmul(ad.transpose(psi, (0, 2, 1)), omega)
    H = ad.tabs(ad.matmul(psi * lam, psi_t_omega))
    return IncidenceFactors(psi=psi, lambda_diag=lam, omega=omega, H=H,
                            D_diag=ad.tsum(H, axis=-1), B_diag=ad.tsum(H, axis=-2))


def propagation_matrix(H, epsilon: float = 1e-6) -> Tensor:
    """``D^-1/2 H B^-1 H^T D^-1/2`` for an ``(N, M)`` or batched ``(b, N, M)`` incidence.

    ``epsilon`` is added to both degree vectors before inversion; pass 0 for
    binary hypergraphs without empty hyperedges or isolated vertices.
    """
    if isinstance(H, IncidenceFactors):
        H = H.H
    H = ad.as_tensor(H)
    d = ad.tsum(H, axis=-1, keepdims=True) + epsilon
    bdeg = ad.tsum(H, axis=-2, keepdims=True) + epsilon
    if np.any(d.data <= 0) or np.any(bdeg.data <= 0):
        raise ad.AutodiffError("propagation_matrix: nonpositive degree after regularization")
    hn = H / ad.sqrt(d)
    axes = tuple(range(H.ndim - 2)) + (H.ndim - 1, H.ndim - 2)
    return ad.matmul(hn / bdeg, ad.transpose(hn, axes))


def laplacian(H, epsilon: float = 1e-6) -> np.ndarray:
    """Normalized hypergraph Laplacian ``I - P`` (verification only)."""
    P = propagation_matrix(H, epsilon).data
    return np.eye(P.shape[-1]) - P


def propagate(x_flat: Tensor, H, theta, epsilon: float = 1e-6, activation: str | None = "elu") -> Tensor:
    """``act(P X theta)`` for ``(b, N, C)`` features and a given incidence."""
    P = propagation_matrix(H, epsilon)
    out = ad.matmul(ad.matmul(P, x_flat), ad.as_tensor(theta))
    if activation == "elu":
        return ad.elu(out)
    if activation is None:
        return out
    raise ValueError(f"unknown activation {activation!r}")


def hypergraph_forward(x: Tensor, params: HypergraphLayerParams, activation: str | None = "elu",
                       incidence=None, epsilon: float | None = None) -> Tensor:
    """``act(P X theta)`` on spatial features.

    ``incidence`` replaces the learned H (e.g. a hand-set binary hypergraph for
    verification) and ``epsilon`` overrides the degree regularizer.
    """
    b, h, w, c = x.shape
    H = build_incidence(x, params).H if incidence is None else incidence
    eps = params.epsilon if epsilon is None else epsilon
    out = propagate(ad.reshape(x, (b, h * w, c)), H, params.theta, eps, activation)
    return ad.reshape(out, (b, h, w, params.out_channels))


def spectral_oracle(H_binary, X) -> np.ndarray:
    """Reference ``D^-1/2 H B^-1 H^T D^-1/2 X`` by explicit nested sums.

    Requires a binary incidence with no empty hyperedge and no isolated vertex.
    """
    H = [[float(v) for v in row] for row in np.asarray(H_binary)]
    Xl = [[float(v) for v in row] for row in np.asarray(X)]
    n, m = len(H), len(H[0])
    c = len(Xl[0])
    for row in H:
        for v in row:
            if v not in (0.0, 1.0):
                raise ValueError("spectral_oracle: incidence must be binary")
    deg_v = [0.0] * n
    for i in range(n):
        for e in range(m):
            deg_v[i] += H[i][e]
        if deg_v[i] == 0:
            raise ValueError(f"spectral_oracle: vertex {i} is isolated")
    deg_e = [0.0] * m
    for e in range(m):
        for i in range(n):
            deg_e[e] += H[i][e]
        if deg_e[e] == 0:
            raise ValueError(f"spectral_oracle: hyperedge {e} is empty")
    out = [[0.0] * c for _ in range(n)]
    for i in range(n):
        for j in range(n):
            pij = 0.0
            for e in range(m):
                pij += H[i][e] * H[j][e] / deg_e[e]
            pij /= math.sqrt(deg_v[i]) * math.sqrt(deg_v[j])
            for k in range(c):
                out[i][k] += pij * Xl[j][k]
    return np.array(out)
