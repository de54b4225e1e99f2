r"""
Weighted measures, norms and a summation-by-parts calculus
----------------------------------------------------------

Two discrete gradient/divergence pairs are provided, both exact negative
adjoints under the quadrature inner product:

* the *node pair*: :math:`G` returns contravariant components at nodes from
  centered (one-sided at the boundary) differences :math:`P_k`, and
  :math:`D X = -W^{-1} \sum_k P_k^T W X^k`;
* the *edge pair*: :math:`G_E u = (u_b - u_a)/\ell_e` on lattice edges and
  :math:`D_E = -W^{-1} G_E^T W_E`, which yields compact three-point stencils
  and is used to assemble operators.

Fields are node-ordered arrays, numbered lexicographically in the lattice
indices (last axis fastest) over the active nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from singlab.geometry import ModelManifold, SingularityFunction, singularity_function

__all__ = [
    "DiscreteCalculus",
    "EdgeSet",
    "NormSpec",
    "WeightedMeasure",
    "div",
    "grad",
    "inner_product_weighted",
    "interpolation_check",
    "load_field",
    "mul_weight",
    "save_field",
    "weight_map_constants",
    "weighted_lp_norm",
    "weighted_measure",
    "weighted_sobolev_norm",
]


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Node quadrature weights ``w = cell volume * sqrt(det g)``."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.weights))


def weighted_measure(manifold: ModelManifold) -> WeightedMeasure:
    return WeightedMeasure(manifold.grid.cell_volumes * manifold.metric.sqrt_det)


@dataclass(frozen=True)
class NormSpec:
    """Parameters of :math:`\\|\\cdot\\|_{k,p;\\vartheta}`."""

    p: float = 2.0
    theta: float = 0.0
    k: int = 0

    def __post_init__(self) -> None:
        if not self.p >= 1:
            raise ValueError(f"p must be at least 1: {self.p}")
        if self.k not in (0, 1, 2):
            raise ValueError(f"derivative order must be 0, 1 or 2: {self.k}")


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Lattice edges between active neighbors.

    ``length`` is the coordinate increment along ``axis`` and ``weight`` the
    dual-face measure times edge length, so that
    :math:`\\sum_e w_e (G_E u)_e^2 \\approx \\int |\\partial_{\\mathrm{axis}} u|^2 dV_g`.
    """

    a: np.ndarray
    b: np.ndarray
    axis: np.ndarray
    length: np.ndarray
    weight: np.ndarray

    @property
    def n_edges(self) -> int:
        return self.a.size

    def difference(self, n: int) -> sp.csr_matrix:
        """Sparse ``u -> u_b - u_a``."""
        E = self.n_edges
        rows = np.concatenate([np.arange(E), np.arange(E)])
        cols = np.concatenate([self.b, self.a])
        vals = np.concatenate([np.ones(E), -np.ones(E)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, n))

    def average(self, n: int) -> sp.csr_matrix:
        """Sparse ``u -> (u_a + u_b) / 2``."""
        E = self.n_edges
        rows = np.concatenate([np.arange(E), np.arange(E)])
        cols = np.concatenate([self.b, self.a])
        return sp.csr_matrix((np.full(2 * E, 0.5), (rows, cols)), shape=(E, n))


def _axis_derivative(manifold: ModelManifold, axis: int) -> sp.csr_matrix:
    """Covariant partial derivative along ``axis``; centered where possible."""
    grid = manifold.grid
    n = grid.n_nodes
    ip, im = grid.neighbor(axis, 1), grid.neighbor(axis, -1)
    hp, hm = grid.spacing(axis, 1), -grid.spacing(axis, -1)
    rows, cols, vals = [], [], []

    both = np.flatnonzero((ip >= 0) & (im >= 0))
    span = hp[both] + hm[both]
    rows += [both, both]
    cols += [ip[both], im[both]]
    vals += [1.0 / span, -1.0 / span]

    fwd = np.flatnonzero((ip >= 0) & (im < 0))
    rows += [fwd, fwd]
    cols += [ip[fwd], fwd]
    vals += [1.0 / hp[fwd], -1.0 / hp[fwd]]

    bwd = np.flatnonzero((ip < 0) & (im >= 0))
    rows += [bwd, bwd]
    cols += [bwd, im[bwd]]
    vals += [1.0 / hm[bwd], -1.0 / hm[bwd]]

    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _dual_width(manifold: ModelManifold, axis: int) -> np.ndarray:
    grid = manifold.grid
    x = grid.axes[axis]
    if grid.periodic[axis]:
        w = np.full(x.size, 2.0 * np.pi / x.size)
    else:
        dx = np.diff(x)
        w = np.concatenate([[dx[0] / 2], (dx[:-1] + dx[1:]) / 2, [dx[-1] / 2]])
    return w[grid.ijk[:, axis]]


def _build_edges(manifold: ModelManifold) -> EdgeSet:
    grid = manifold.grid
    sq = manifold.metric.sqrt_det
    A, B, AX, L, W = [], [], [], [], []
    for axis in range(grid.dim):
        nb = grid.neighbor(axis, 1)
        a = np.flatnonzero(nb >= 0)
        b = nb[a]
        if grid.periodic[axis] and grid.shape[axis] <= 2:
            continue
        length = grid.spacing(axis, 1)[a]
        transverse = np.ones(a.size)
        for other in range(grid.dim):
            if other != axis:
                transverse *= _dual_width(manifold, other)[a]
        A.append(a)
        B.append(b)
        AX.append(np.full(a.size, axis))
        L.append(length)
        W.append(0.5 * (sq[a] + sq[b]) * length * transverse)
    return EdgeSet(
        a=np.concatenate(A),
        b=np.concatenate(B),
        axis=np.concatenate(AX),
        length=np.concatenate(L),
        weight=np.concatenate(W),
    )


class DiscreteCalculus:
    """Gradient, divergence and weights on a :class:`ModelManifold`.

    The node pair and the edge pair are both exact negative adjoints::

        <D X, u>_W + <X, G u>_{W, g} = 0
        <D_E F, u>_W + <F, G_E u>_{W_E} = 0

    for every node field ``u``, node vector field ``X`` and edge field ``F``.
    """

    def __init__(self, manifold: ModelManifold, rho: SingularityFunction | None = None):
        self.manifold = manifold
        self.measure = weighted_measure(manifold)
        self.rho = singularity_function(manifold) if rho is None else rho
        self.P = [_axis_derivative(manifold, k) for k in range(manifold.dim)]
        self.edges = _build_edges(manifold)

        n = manifold.grid.n_nodes
        self._W = sp.diags(self.measure.weights)
        self._Winv = sp.diags(1.0 / self.measure.weights)
        self.GE = sp.diags(1.0 / self.edges.length) @ self.edges.difference(n)
        self.DE = -(self._Winv @ self.GE.T @ sp.diags(self.edges.weight)).tocsr()
        self.AE = self.edges.average(n)

    @property
    def n(self) -> int:
        return self.manifold.grid.n_nodes

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    # {{{ node pair

    def covariant_grad(self, u: np.ndarray) -> np.ndarray:
        return np.stack([P @ u for P in self.P], axis=1)

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.covariant_grad(u) * self.manifold.metric.g_inv

    def div(self, X: np.ndarray) -> np.ndarray:
        w = self.measure.weights
        acc = sum(P.T @ (w * X[:, k]) for k, P in enumerate(self.P))
        return -acc / w

    def grad_norm(self, u: np.ndarray) -> np.ndarray:
        """Pointwise :math:`|\\nabla u|_g`."""
        du = self.covariant_grad(u)
        return np.sqrt(np.sum(np.abs(du) ** 2 * self.manifold.metric.g_inv, axis=1))

    def hessian_norm(self, u: np.ndarray) -> np.ndarray:
        """Pointwise :math:`|\\nabla^2 u|_g` with Christoffel correction."""
        metric = self.manifold.metric
        m = self.dim
        du = self.covariant_grad(u)
        gam = metric.christoffel()
        total = np.zeros(self.n)
        for i in range(m):
            for j in range(m):
                hij = 0.5 * (self.P[i] @ du[:, j] + self.P[j] @ du[:, i])
                hij = hij - np.einsum("nk,nk->n", gam[:, :, i, j], du)
                total += metric.g_inv[:, i] * metric.g_inv[:, j] * np.abs(hij) ** 2
        return np.sqrt(total)

    # }}}

    # {{{ edge pair

    def edge_grad(self, u: np.ndarray) -> np.ndarray:
        return self.GE @ u

    def edge_div(self, F: np.ndarray) -> np.ndarray:
        return self.DE @ F

    # }}}

    def node_inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.measure.weights * u * np.conj(v)))

    def vector_inner(self, X: np.ndarray, Y: np.ndarray) -> complex:
        g = self.manifold.metric.g
        return complex(np.sum(self.measure.weights[:, None] * g * X * np.conj(Y)))

    def edge_inner(self, F: np.ndarray, H: np.ndarray) -> complex:
        return complex(np.sum(self.edges.weight * F * np.conj(H)))


def grad(u: np.ndarray, calc: DiscreteCalculus) -> np.ndarray:
    """Contravariant gradient :math:`g^{kk}\\partial_k u` per node."""
    return calc.grad(u)


def div(X: np.ndarray, calc: DiscreteCalculus) -> np.ndarray:
    """Metric divergence, defined as the negative adjoint of :func:`grad`."""
    return calc.div(X)


# {{{ norms


def _weighted_p(values: np.ndarray, p: float, weights: np.ndarray) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float(np.sum(weights * a**p) ** (1.0 / p))


def _rho(calc_or_rho) -> np.ndarray:
    if isinstance(calc_or_rho, DiscreteCalculus):
        return calc_or_rho.rho.rho
    if isinstance(calc_or_rho, SingularityFunction):
        return calc_or_rho.rho
    return np.asarray(calc_or_rho)


def weighted_lp_norm(
    u: np.ndarray, spec: NormSpec, calc: DiscreteCalculus, *, nodes: np.ndarray | None = None
) -> float:
    """:math:`(\\sum_i w_i |\\rho_i^\\vartheta u_i|^p)^{1/p}`; plain weighted max for ``p = inf``."""
    if not spec.p >= 1:
        raise ValueError(f"p must be at least 1: {spec.p}")
    vals = calc.rho.rho**spec.theta * u
    w = calc.measure.weights
    if nodes is not None:
        vals, w = vals[nodes], w[nodes]
    return _weighted_p(vals, spec.p, w)


def weighted_sobolev_norm(
    u: np.ndarray, spec: NormSpec, calc: DiscreteCalculus, *, nodes: np.ndarray | None = None
) -> float:
    """:math:`\\|u\\|_{k,p;\\vartheta}`: p-sum over ``i <= k`` of :math:`\\|\\rho^{\\vartheta+i}|\\nabla^i u|_g\\|_p`."""
    parts = [weighted_lp_norm(u, NormSpec(spec.p, spec.theta, 0), calc, nodes=nodes)]
    if spec.k >= 1:
        parts.append(
            weighted_lp_norm(calc.grad_norm(u), NormSpec(spec.p, spec.theta + 1), calc, nodes=nodes)
        )
    if spec.k >= 2:
        parts.append(
            weighted_lp_norm(
                calc.hessian_norm(u), NormSpec(spec.p, spec.theta + 2), calc, nodes=nodes
            )
        )
    if math.isinf(spec.p):
        return max(parts)
    return float(np.sum(np.asarray(parts) ** spec.p) ** (1.0 / spec.p))


def mul_weight(u: np.ndarray, theta: float, rho) -> np.ndarray:
    """Pointwise :math:`\\rho^\\vartheta u`."""
    return _rho(rho) ** theta * u


def inner_product_weighted(
    u: np.ndarray, v: np.ndarray, theta_prime: float, calc: DiscreteCalculus
) -> complex:
    """:math:`\\langle u | v\\rangle_{2,\\vartheta'} = \\sum_i w_i \\rho_i^{2\\vartheta'} u_i \\bar v_i`."""
    w = calc.measure.weights * calc.rho.rho ** (2.0 * theta_prime)
    return complex(np.sum(w * u * np.conj(v)))


def interpolation_check(
    f: np.ndarray,
    p0: float,
    p1: float,
    theta: float,
    vartheta: float,
    calc: DiscreteCalculus,
) -> tuple[float, float, bool]:
    """Compare :math:`\\|f\\|_{p_\\theta}` with :math:`\\|f\\|_{p_0}^{1-\\theta}\\|f\\|_{p_1}^\\theta`.

    All norms carry the weight :math:`\\rho^\\vartheta`.
    """
    if not (1 <= p0 < p1 <= math.inf):
        raise ValueError(f"need 1 <= p0 < p1 <= inf: {p0}, {p1}")
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1): {theta}")
    inv = (1 - theta) / p0 + (theta / p1 if not math.isinf(p1) else 0.0)
    ptheta = 1.0 / inv
    lhs = weighted_lp_norm(f, NormSpec(ptheta, vartheta), calc)
    n0 = weighted_lp_norm(f, NormSpec(p0, vartheta), calc)
    n1 = weighted_lp_norm(f, NormSpec(p1, vartheta), calc)
    rhs = n0 ** (1 - theta) * n1**theta
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


def weight_map_constants(
    calc: DiscreteCalculus,
    theta: float,
    theta_prime: float,
    p: float = 2.0,
    k: int = 1,
    samples: int = 64,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Measured range of ``||rho^theta u||_{k,p;theta'} / ||u||_{k,p;theta'+theta}``.

    Only the extremes over random fields are reported; no bound is asserted.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    ratios = []
    for _ in range(samples):
        u = rng.standard_normal(calc.n)
        u[~calc.manifold.grid.interior] = 0.0
        lhs = weighted_sobolev_norm(mul_weight(u, theta, calc), NormSpec(p, theta_prime, k), calc)
        rhs = weighted_sobolev_norm(u, NormSpec(p, theta_prime + theta, k), calc)
        ratios.append(lhs / rhs)
    return float(min(ratios)), float(max(ratios))


# }}}


# {{{ field io


def save_field(path: str | Path, u: np.ndarray) -> None:
    """Write a node field as CSV (``.csv``) or raw little-endian binary."""
    path = Path(path)
    u = np.asarray(u)
    if path.suffix == ".csv":
        if np.iscomplexobj(u):
            np.savetxt(path, np.stack([u.real, u.imag], axis=1), delimiter=",",
                       header="re,im", comments="")
        else:
            np.savetxt(path, u[:, None], delimiter=",", header="value", comments="")
    else:
        u.astype(u.dtype.newbyteorder("<")).tofile(path)


def load_field(path: str | Path, dtype=np.float64) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] == 2:
            return data[:, 0] + 1j * data[:, 1]
        return data[:, 0]
    return np.fromfile(path, dtype=np.dtype(dtype).newbyteorder("<"))


# }}}
