r"""
Divergence-form singular elliptic operators
-------------------------------------------

Operators have the form

.. math::

    \mathcal{A}_\omega u = -\mathrm{div}(\vec a \cdot \mathrm{grad}\, u)
        + \mathsf{C}(\nabla u, a_1) + (a_0 + \omega\rho^{-\lambda}) u

with homogeneous Dirichlet data on the boundary and truncation nodes.
Coefficients are stored per node: the flux tensor :math:`K = \vec a\, g^*`
(so that the flux is :math:`K^{ij}\partial_j u`), the contravariant drift
:math:`a_1` and the complex potential :math:`a_0`.

The diffusion part is assembled as a weighted graph Laplacian
:math:`L = \sum_e c_e \delta_e^T \delta_e` with :math:`\delta_e u = u_b - u_a`,
so :math:`A = W^{-1} L + U + \mathrm{diag}(a_0 + \omega\rho^{-\lambda})`.
Because :math:`\delta_e(fg) = \bar f_e\,\delta_e g + \delta_e f\,\bar g_e`
holds exactly, the sesquilinear form at any weight agrees with
:math:`\langle A u | v\rangle` to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy.sparse as sp

from singlab.geometry import (
    ConfigurationError,
    HWitness,
    ModelManifold,
    check_hlambda,
    h_witness,
)
from singlab.spaces import DiscreteCalculus

__all__ = [
    "CoefficientSet",
    "DiscreteOperator",
    "FormHandle",
    "HypothesisReport",
    "OperatorSpec",
    "ValidationError",
    "WindowReport",
    "adjoint",
    "adjoint_spec",
    "assemble",
    "assemble_form",
    "b_potential",
    "b_tilde_potential",
    "check_ellipticity",
    "check_regularity",
    "conjugate",
    "conjugation_residual",
    "dual_spec",
    "hlambda_window",
    "laplace_beltrami",
    "omega_bound",
    "x_norm_sq",
]


class ValidationError(ValueError):
    """Raised for malformed coefficient data."""


# {{{ coefficient containers


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Per-node coefficients.

    ``K`` has shape ``(n, m, m)`` and is the contravariant flux tensor
    :math:`\\vec a\\, g^*`; ``a1`` has shape ``(n, m)``; ``a0`` shape ``(n,)``.
    ``holder_s`` records the time regularity of time-dependent data; it is
    metadata only.
    """

    K: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    holder_s: float | None = None

    def __post_init__(self) -> None:
        for name in ("K", "a1", "a0"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"coefficient {name} has non-finite entries")
        if not np.allclose(self.K, np.swapaxes(self.K, 1, 2), rtol=1e-12, atol=0):
            raise ValidationError("diffusion tensor is not symmetric")

    @property
    def diagonal(self) -> bool:
        m = self.K.shape[1]
        off = self.K.copy()
        off[:, range(m), range(m)] = 0
        return not np.any(off)


def laplace_beltrami(
    manifold: ModelManifold, lam: float, rho: np.ndarray, scale: float = 1.0
) -> CoefficientSet:
    """``K = scale * rho^(2 - lam) g*``; with ``lam = 2`` this is ``-Delta_g``."""
    n, m = manifold.grid.n_nodes, manifold.dim
    K = np.zeros((n, m, m))
    K[:, range(m), range(m)] = scale * (rho ** (2.0 - lam))[:, None] * manifold.metric.g_inv
    return CoefficientSet(K=K, a1=np.zeros((n, m)), a0=np.zeros(n))


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Coefficients plus the exponents and compensation of :math:`\\mathcal{A}_\\omega`."""

    coeffs: CoefficientSet
    lam: float
    lam_prime: float = 0.0
    omega: float = 0.0
    upwind: bool = True
    name: str = "generic"

    def validate(self, manifold: ModelManifold, rho: np.ndarray) -> None:
        if self.coeffs.K.shape[0] != manifold.grid.n_nodes:
            raise ValidationError("coefficient arrays do not match the grid")
        rmax = float(rho.max())
        if not ((rmax <= 1 + 1e-12 and self.lam >= 0) or (rho.min() >= 1 - 1e-12 and self.lam <= 0)):
            raise ConfigurationError(
                "need max rho <= 1 with lambda >= 0, or min rho >= 1 with lambda <= 0 "
                f"(max rho = {rmax:.6g}, lambda = {self.lam})"
            )
        if self.omega < 0:
            raise ConfigurationError(f"omega must be nonnegative: {self.omega}")


# }}}


# {{{ assembly


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Assembled operator.

    ``full`` acts on all nodes; ``matrix`` is its restriction to interior
    nodes (Dirichlet values eliminated). ``edges`` is the conductance graph
    ``(a, b, c)`` of the diffusion part.
    """

    matrix: sp.csr_matrix
    full: sp.csr_matrix
    interior: np.ndarray
    calc: DiscreteCalculus
    spec: OperatorSpec | None
    upwind: bool
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]
    drift: sp.csr_matrix
    potential: np.ndarray
    m_matrix_stencil: bool = True

    @property
    def manifold(self) -> ModelManifold:
        return self.calc.manifold

    @property
    def n(self) -> int:
        return self.interior.size

    def expand(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.calc.n, dtype=np.result_type(v, float))
        out[self.interior] = v
        return out

    def restrict(self, u: np.ndarray) -> np.ndarray:
        return u[self.interior]

    @property
    def weights(self) -> np.ndarray:
        return self.calc.weights[self.interior]

    @property
    def rho(self) -> np.ndarray:
        return self.calc.rho.rho[self.interior]

    def is_m_matrix(self, tol: float = 1e-12) -> bool:
        """Nonpositive off-diagonal, positive diagonal, nonnegative row sums."""
        A = self.matrix.tocoo()
        if np.iscomplexobj(A.data) and np.any(np.abs(A.data.imag) > 0):
            return False
        data = A.data.real
        off = A.row != A.col
        scale = max(float(np.abs(data).max()), 1.0)
        diag = self.matrix.diagonal().real
        rows = np.asarray(self.matrix.sum(axis=1)).ravel().real
        return bool(
            np.all(data[off] <= tol * scale)
            and np.all(diag > 0)
            and np.all(rows >= -tol * scale)
        )


def _diagonal_conductances(calc: DiscreteCalculus, K: np.ndarray):
    e = calc.edges
    ka = K[e.a, e.axis, e.axis]
    kb = K[e.b, e.axis, e.axis]
    harmonic = np.where(ka + kb > 0, 2.0 * ka * kb / np.where(ka + kb > 0, ka + kb, 1.0), 0.0)
    return e.a, e.b, e.weight * harmonic / e.length**2


def _cell_conductances(calc: DiscreteCalculus, K: np.ndarray):
    """Cell-based split of an anisotropic flat tensor into edge conductances.

    Each lattice cell contributes ``(kxx dy/dx - |kxy|)/2`` to its two
    x-edges, ``(kyy dx/dy - |kxy|)/2`` to its two y-edges and ``|kxy|`` to
    the diagonal oriented along ``sign(kxy)``, with corner-averaged tensors.
    The cell energy is exact for fields with constant gradient, and
    nonnegative conductances give an M-matrix.
    """
    man = calc.manifold
    grid = man.grid
    if man.dim != 2 or man.metric_kind != "flat" or np.any(grid.lattice_index < 0):
        raise ValidationError("mixed diffusion terms need a full flat rectangular lattice")
    if any(grid.periodic):
        raise ValidationError("mixed diffusion terms are not supported on periodic axes")
    nx, ny = grid.shape
    idx = grid.lattice_index
    x, y = grid.axes
    dx = np.diff(x)[:, None] * np.ones((1, ny - 1))
    dy = np.ones((nx - 1, 1)) * np.diff(y)[None, :]
    n00, n10 = idx[:-1, :-1], idx[1:, :-1]
    n01, n11 = idx[:-1, 1:], idx[1:, 1:]

    def corner_avg(comp):
        f = K[:, comp[0], comp[1]]
        return 0.25 * (f[n00] + f[n10] + f[n01] + f[n11])

    kxx, kyy, kxy = corner_avg((0, 0)), corner_avg((1, 1)), corner_avg((0, 1))
    ak = np.abs(kxy)
    cx = 0.5 * (kxx * dy / dx - ak)
    cy = 0.5 * (kyy * dx / dy - ak)

    A, B, C = [], [], []
    for a, b, c in ((n00, n10, cx), (n01, n11, cx), (n00, n01, cy), (n10, n11, cy)):
        A.append(a.ravel())
        B.append(b.ravel())
        C.append(c.ravel())
    pos = kxy >= 0
    A.append(np.where(pos, n00, n10).ravel())
    B.append(np.where(pos, n11, n01).ravel())
    C.append(ak.ravel())
    return np.concatenate(A), np.concatenate(B), np.concatenate(C)


def _merge_edges(a, b, c, n):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = lo * n + hi
    uniq, inv = np.unique(key, return_inverse=True)
    cs = np.bincount(inv, weights=c, minlength=uniq.size)
    keep = cs != 0
    return (uniq // n)[keep], (uniq % n)[keep], cs[keep]


def _graph_laplacian(a, b, c, n) -> sp.csr_matrix:
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([c, c, -c, -c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _drift_matrix(calc: DiscreteCalculus, a1: np.ndarray, upwind: bool) -> sp.csr_matrix:
    """``a1^k d_k u`` with upwind (default) or centered differences."""
    grid = calc.manifold.grid
    n = calc.n
    rows, cols, vals = [], [], []
    for k in range(calc.dim):
        v = a1[:, k]
        if not np.any(v):
            continue
        ip, im = grid.neighbor(k, 1), grid.neighbor(k, -1)
        hp, hm = grid.spacing(k, 1), -grid.spacing(k, -1)
        if upwind:
            vr = v.real
            back = ((vr > 0) & (im >= 0)) | ((ip < 0) & (im >= 0))
            fwd = ~back & (ip >= 0)
            for sel, nb, h, sgn in ((back, im, hm, -1.0), (fwd, ip, hp, 1.0)):
                s = np.flatnonzero(sel)
                rows += [s, s]
                cols += [s, nb[s]]
                vals += [-sgn * v[s] / h[s], sgn * v[s] / h[s]]
        else:
            both = np.flatnonzero((ip >= 0) & (im >= 0))
            span = hp[both] + hm[both]
            rows += [both, both]
            cols += [ip[both], im[both]]
            vals += [v[both] / span, -v[both] / span]
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def assemble(
    spec: OperatorSpec, manifold: ModelManifold, calc: DiscreteCalculus | None = None
) -> DiscreteOperator:
    """Assemble :math:`\\mathcal{A}_\\omega` on the interior nodes."""
    calc = DiscreteCalculus(manifold) if calc is None else calc
    rho = calc.rho.rho
    spec.validate(manifold, rho)
    co = spec.coeffs
    n = calc.n

    if co.diagonal:
        a, b, c = _diagonal_conductances(calc, co.K)
    else:
        a, b, c = _cell_conductances(calc, co.K)
    a, b, c = _merge_edges(a, b, c, n)
    L = _graph_laplacian(a, b, c, n)
    U = _drift_matrix(calc, co.a1, spec.upwind)
    pot = co.a0 + spec.omega * rho ** (-spec.lam)

    full = (sp.diags(1.0 / calc.weights) @ L + U + sp.diags(pot)).tocsr()
    interior = calc.manifold.grid.interior_nodes
    matrix = full[interior][:, interior].tocsr()
    return DiscreteOperator(
        matrix=matrix,
        full=full,
        interior=interior,
        calc=calc,
        spec=spec,
        upwind=spec.upwind,
        edges=(a, b, c),
        drift=U.tocsr(),
        potential=pot,
        m_matrix_stencil=bool(np.all(c >= 0)),
    )


# }}}


# {{{ forms


@dataclass(frozen=True, eq=False)
class FormHandle:
    """Sesquilinear form :math:`\\mathfrak{a}_\\omega` at weight ``lam_prime``.

    The three parts are the diffusion pairing
    :math:`\\sum_e c_e \\overline{\\rho^{2\\lambda'}}_e\\, \\delta u\\, \\overline{\\delta v}`,
    the first-order part (the weight-gradient correction
    :math:`\\sum_e c_e\\, \\delta\\rho^{2\\lambda'}\\, \\delta u\\, \\bar{\\bar v}_e`
    plus the drift) and the potential.
    """

    op: DiscreteOperator
    lam_prime: float

    def parts(self, u: np.ndarray, v: np.ndarray) -> tuple[complex, complex, complex]:
        op = self.op
        a, b, c = op.edges
        r = op.calc.rho.rho ** (2.0 * self.lam_prime)
        w = op.calc.weights
        du = u[b] - u[a]
        dv = np.conj(v[b] - v[a])
        vbar = np.conj(0.5 * (v[a] + v[b]))
        diff = np.sum(c * 0.5 * (r[a] + r[b]) * du * dv)
        first = np.sum(c * (r[b] - r[a]) * du * vbar)
        first += np.sum(w * r * (op.drift @ u) * np.conj(v))
        zero = np.sum(w * r * op.potential * u * np.conj(v))
        return complex(diff), complex(first), complex(zero)

    def __call__(self, u: np.ndarray, v: np.ndarray) -> complex:
        return sum(self.parts(u, v))


def assemble_form(
    spec: OperatorSpec,
    manifold: ModelManifold,
    calc: DiscreteCalculus | None = None,
    op: DiscreteOperator | None = None,
) -> FormHandle:
    op = assemble(spec, manifold, calc) if op is None else op
    return FormHandle(op=op, lam_prime=spec.lam_prime)


def x_norm_sq(u: np.ndarray, calc: DiscreteCalculus, lam: float, lam_prime: float) -> float:
    """Discrete :math:`\\|u\\|_X^2` for :math:`X = W_2^{1,\\lambda'-\\lambda/2}`.

    The gradient part uses the edge differences of the form with the
    conductances of ``K = g*`` and edge-averaged weights
    :math:`\\rho^{2(\\lambda'+1-\\lambda/2)}`.
    """
    n, m = calc.n, calc.dim
    ginv = np.zeros((n, m, m))
    ginv[:, range(m), range(m)] = calc.manifold.metric.g_inv
    a, b, c = _diagonal_conductances(calc, ginv)
    rho = calc.rho.rho
    r1 = rho ** (2.0 * (lam_prime + 1.0 - lam / 2.0))
    grad_part = np.sum(c * 0.5 * (r1[a] + r1[b]) * np.abs(u[b] - u[a]) ** 2)
    zero_part = np.sum(calc.weights * rho ** (2.0 * (lam_prime - lam / 2.0)) * np.abs(u) ** 2)
    return float(grad_part + zero_part)


# }}}


# {{{ hypothesis checks


@dataclass
class HypothesisReport:
    """Constants and verdicts of the hypothesis checklist.

    ``conditions`` maps condition names (``A1``, ``A2``, ``A3``, ...,
    ``H1``, ``H2``, ``H3``) to booleans in checking order.
    """

    C_sigma: float | None = None
    regularity: dict[str, float] = field(default_factory=dict)
    omega: dict[str, Any] = field(default_factory=dict)
    hlambda: dict[str, Any] = field(default_factory=dict)
    window: dict[str, Any] = field(default_factory=dict)
    conditions: dict[str, bool] = field(default_factory=dict)
    active_nodes: dict[str, list[float]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def first_failure(self) -> str | None:
        for name, ok in self.conditions.items():
            if not ok:
                return name
        return None

    def as_dict(self) -> dict[str, Any]:
        return {
            "C_sigma": self.C_sigma,
            "regularity": self.regularity,
            "omega": self.omega,
            "hlambda": self.hlambda,
            "window": self.window,
            "conditions": self.conditions,
            "active_nodes": self.active_nodes,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "notes": self.notes,
        }


def _tensor_norm(K: np.ndarray, g: np.ndarray) -> np.ndarray:
    """:math:`|\\vec a|_g` for the (1,1)-tensor :math:`\\vec a = K g`."""
    A = K * g[:, None, :]
    return np.sqrt(np.abs(np.einsum("nij,nji->n", A, A)))


def _vector_norm(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(X) ** 2 * g, axis=1))


def check_regularity(spec: OperatorSpec, manifold: ModelManifold,
                     calc: DiscreteCalculus | None = None) -> dict[str, float]:
    """Weighted sups of (A1): orders 0 and 1 of the diffusion, drift and potential."""
    calc = DiscreteCalculus(manifold) if calc is None else calc
    rho = calc.rho.rho
    lam = spec.lam
    g = manifold.metric.g
    co = spec.coeffs
    A = co.K * g[:, None, :]
    m = manifold.dim

    grad_sq = np.zeros(calc.n)
    for i in range(m):
        for j in range(m):
            d = calc.covariant_grad(A[:, i, j])
            grad_sq += np.sum(d**2 * manifold.metric.g_inv, axis=1)
    return {
        "a_order0": float(np.max(rho ** (lam - 2) * _tensor_norm(co.K, g))),
        "a_order1": float(np.max(rho ** (lam - 1) * np.sqrt(grad_sq))),
        "a1": float(np.max(rho ** (lam - 1) * _vector_norm(co.a1, g))),
        "a0": float(np.max(rho**lam * np.abs(co.a0))),
    }


def regularity_stable(coarse: dict[str, float], fine: dict[str, float], growth: float = 0.1) -> bool:
    """All sups finite and none grows by more than ``growth`` on refinement."""
    for key, c in coarse.items():
        f = fine[key]
        if not (math.isfinite(c) and math.isfinite(f)):
            return False
        if f > c * (1 + growth) + 1e-12:
            return False
    return True


def check_ellipticity(spec: OperatorSpec, manifold: ModelManifold,
                      rho: np.ndarray | None = None) -> float:
    """:math:`C_{\\hat\\sigma} = \\min_i \\lambda_{\\min}(K_i; g^*_i) / \\rho_i^{2-\\lambda}`."""
    if rho is None:
        rho = DiscreteCalculus(manifold).rho.rho
    s = np.sqrt(manifold.metric.g)
    # generalized eigenproblem K x = mu g* x becomes S K S with S = g^(1/2)
    B = spec.coeffs.K * s[:, :, None] * s[:, None, :]
    mu = np.linalg.eigvalsh(B)[:, 0]
    return float(np.min(mu / rho ** (2.0 - spec.lam)))


def _flux_of(K: np.ndarray, grad_log_cov: np.ndarray) -> np.ndarray:
    """Contravariant :math:`\\vec a\\cdot\\mathrm{grad}\\log\\rho = K\\, d\\log\\rho`."""
    return np.einsum("nij,nj->ni", K, grad_log_cov)


def b_potential(spec: OperatorSpec, calc: DiscreteCalculus, lp: float) -> np.ndarray:
    """:math:`b(\\lambda',\\vec a)` built with the discrete divergence."""
    co = spec.coeffs
    g = calc.manifold.metric.g
    glog = calc.rho.grad_log * g  # covariant
    F = lp * _flux_of(co.K, glog) + np.conj(co.a1)
    return np.conj(co.a0) - calc.div(F) - lp * np.sum(F * calc.rho.grad_log * g, axis=1)


def b_tilde_potential(spec: OperatorSpec, calc: DiscreteCalculus, lp: float) -> np.ndarray:
    """:math:`\\tilde b(\\lambda',\\vec a)` built with the discrete divergence."""
    co = spec.coeffs
    g = calc.manifold.metric.g
    glog = calc.rho.grad_log * g
    F = lp * _flux_of(co.K, glog)
    return co.a0 + calc.div(F) - lp * np.sum((F + co.a1) * calc.rho.grad_log * g, axis=1)


def _omega_for(lhs, pot, C1, Cs, rho, lam, nodes):
    rp = (rho**lam * pot).real[nodes]
    need = (lhs[nodes] / C1) ** 2 / Cs - rp
    k = int(np.argmax(need))
    om = max(float(need[k]), float(-rp.min()))
    if float(-rp.min()) > float(need[k]):
        k = int(np.argmin(rp))
    return om, int(nodes[k])


def omega_bound(
    spec: OperatorSpec,
    manifold: ModelManifold,
    C1: float = 1.99,
    calc: DiscreteCalculus | None = None,
    C_sigma: float | None = None,
    nodes: np.ndarray | None = None,
) -> dict[str, Any]:
    """Smallest admissible :math:`\\omega_\\mathcal{A}` for (A3), (A4) and (A5).

    For each condition the value is the max over nodes of
    :math:`(\\mathrm{LHS}/C_1)^2/C_{\\hat\\sigma} - \\mathrm{Re}(\\rho^\\lambda\\,\\mathrm{pot})`
    across all drift/potential variants the condition lists, combined with
    the positivity requirement on :math:`\\mathrm{Re}(\\rho^\\lambda\\,\\mathrm{pot}) + \\omega`.
    The value is an infimum: certification needs :math:`\\omega` strictly larger.
    Node-wise maxima are taken over interior nodes.
    """
    if not 0 < C1 < 2:
        raise ValueError(f"C1 must lie in (0, 2): {C1}")
    calc = DiscreteCalculus(manifold) if calc is None else calc
    rho = calc.rho.rho
    Cs = check_ellipticity(spec, manifold, rho) if C_sigma is None else C_sigma
    if Cs <= 0:
        raise ValueError("omega bound needs C_sigma > 0")
    nodes = manifold.grid.interior_nodes if nodes is None else nodes
    co = spec.coeffs
    lam, lp = spec.lam, spec.lam_prime
    g = manifold.metric.g
    glog = calc.rho.grad_log * g
    flux = _flux_of(co.K, glog)

    def lhs(t):
        return rho ** (lam - 1) * _vector_norm(t * flux + co.a1, g)

    out: dict[str, Any] = {"C1": C1, "C_sigma": Cs}
    variants = {
        "A3": [(lhs(2 * lp), co.a0), (lhs(2 * lp - lam), co.a0)],
        "A4": [
            (lhs(2 * lp), b_potential(spec, calc, lp)),
            (lhs(2 * lp), b_tilde_potential(spec, calc, lp)),
        ],
        "A5": [
            (lhs(2 * lp - lam), b_potential(spec, calc, lp)),
            (lhs(2 * lp - lam), b_tilde_potential(spec, calc, lp - lam)),
        ],
    }
    for name, items in variants.items():
        best, node = -math.inf, -1
        for L, pot in items:
            om, k = _omega_for(L, pot, C1, Cs, rho, lam, nodes)
            if om > best:
                best, node = om, k
        out[name] = best
        out[f"{name}_node"] = manifold.grid.coords[node].tolist()
    return out


# }}}


# {{{ adjoints


def adjoint(op: DiscreteOperator, lam_prime: float) -> DiscreteOperator:
    """Matrix adjoint with respect to :math:`L_2^{\\lambda'/2}`: :math:`\\Omega^{-1}A^H\\Omega`."""
    w = op.weights * op.rho**lam_prime
    mat = (sp.diags(1.0 / w) @ op.matrix.conj().T @ sp.diags(w)).tocsr()
    wf = op.calc.weights * op.calc.rho.rho**lam_prime
    full = (sp.diags(1.0 / wf) @ op.full.conj().T @ sp.diags(wf)).tocsr()
    return replace(op, matrix=mat, full=full, spec=None)


def adjoint_spec(spec: OperatorSpec, calc: DiscreteCalculus) -> OperatorSpec:
    """Coefficients of :math:`\\mathcal{A}^*_\\omega(\\lambda')`."""
    lp = spec.lam_prime
    co = spec.coeffs
    glog = calc.rho.grad_log * calc.manifold.metric.g
    drift = -(2 * lp * _flux_of(co.K, glog) + np.conj(co.a1))
    new = CoefficientSet(K=co.K, a1=drift, a0=b_potential(spec, calc, lp), holder_s=co.holder_s)
    return replace(spec, coeffs=new, name=spec.name + "*")


def dual_spec(spec: OperatorSpec, calc: DiscreteCalculus) -> OperatorSpec:
    """Coefficients of :math:`\\mathcal{A}_\\omega(\\lambda')` (potential :math:`\\tilde b`)."""
    lp = spec.lam_prime
    co = spec.coeffs
    glog = calc.rho.grad_log * calc.manifold.metric.g
    drift = 2 * lp * _flux_of(co.K, glog) + co.a1
    new = CoefficientSet(K=co.K, a1=drift, a0=b_tilde_potential(spec, calc, lp), holder_s=co.holder_s)
    return replace(spec, coeffs=new, name=spec.name + "(lp)")


# }}}


# {{{ conjugation


def _is_lb_preset(spec: OperatorSpec, calc: DiscreteCalculus) -> bool:
    ref = laplace_beltrami(calc.manifold, spec.lam, calc.rho.rho).K
    return bool(np.allclose(spec.coeffs.K, ref, rtol=1e-12, atol=0))


def conjugate(
    op: DiscreteOperator, h: HWitness, z: complex, *, diagnostic: bool = False
) -> DiscreteOperator:
    """Assemble :math:`\\mathcal{A}_h = e^{-zh}\\circ\\mathcal{A}\\circ e^{zh}`.

    The matrix is built as ``A + B1 + diag(B0)``: ``B1`` carries the new
    first-order part, ``(B1 v)_i = sum_j A_ij (e^{z(h_j - h_i)} - 1)(v_j - v_i)``,
    and ``B0`` is the zero-order correction, the row sums of
    ``A_ij (e^{z(h_j - h_i)} - 1)``. ``diagnostic=True`` skips the
    ``|z| = 1`` requirement (e.g. for ``z = 0``).
    """
    if not diagnostic and abs(abs(z) - 1.0) > 1e-12:
        raise ValueError(f"|z| must equal 1: |z| = {abs(z)}")
    if op.spec is not None and not _is_lb_preset(op.spec, op.calc):
        raise ValidationError("conjugation needs the diffusion rho^(2 - lam) g*")
    hv = h.values[op.interior]
    A = op.matrix.tocoo()
    E = np.exp(z * (hv[A.col] - hv[A.row])) - 1.0
    off = A.row != A.col
    n = op.n
    b0 = np.bincount(A.row, weights=(A.data * E).real, minlength=n) + 1j * np.bincount(
        A.row, weights=(A.data * E).imag, minlength=n
    )
    vals = A.data[off] * E[off]
    B1 = sp.csr_matrix(
        (np.concatenate([vals, -vals]),
         (np.concatenate([A.row[off], A.row[off]]), np.concatenate([A.col[off], A.row[off]]))),
        shape=(n, n),
    )
    mat = (op.matrix.astype(complex) + B1 + sp.diags(b0)).tocsr()
    return replace(op, matrix=mat, full=None, spec=None, potential=None)


def conjugation_residual(op: DiscreteOperator, op_h: DiscreteOperator, h: HWitness,
                         z: complex) -> float:
    """:math:`\\|\\mathcal{A}_h - D_{e^{-zh}} A D_{e^{zh}}\\| / \\|A\\|` in the Frobenius norm."""
    hv = h.values[op.interior]
    ref = sp.diags(np.exp(-z * hv)) @ op.matrix @ sp.diags(np.exp(z * hv))
    diff = op_h.matrix - ref
    return float(sp.linalg.norm(diff) / sp.linalg.norm(op.matrix))


def zero_order_correction(op: DiscreteOperator, h: HWitness, z: complex) -> np.ndarray:
    """Continuum zero-order term of :math:`\\mathcal{A}_h` at all nodes.

    :math:`-[z\\,\\mathrm{div}(\\rho^{2-\\lambda}\\mathrm{grad}\\,h)
    + z^2\\rho^{2-\\lambda}|\\mathrm{grad}\\,h|_g^2 - z\\mathsf{C}(\\nabla h, a_1)]`.
    """
    calc = op.calc
    rho = calc.rho.rho
    lam = op.spec.lam
    g = calc.manifold.metric.g
    div_term = h.flux_div * rho ** (-lam)
    gh2 = np.sum(h.grad**2 * g, axis=1)
    drift = np.sum(op.spec.coeffs.a1 * h.grad * g, axis=1)
    return -(z * div_term + z**2 * rho ** (2 - lam) * gh2 - z * drift)


# }}}


# {{{ (H2)/(H3) window


@dataclass
class WindowReport:
    ok: bool
    M: float | None
    c: float | None
    intervals: dict[str, tuple[float, float] | None]
    a: float | None = None
    b: float | None = None
    C0: float | None = None
    C1: float | None = None
    omega: float | None = None
    lam_primes: tuple[float, ...] = ()
    message: str = ""

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def _window_constants(a, b, v1, v2, q, pot, rho, lam, glog_contra, grad_h, a1, g, ts):
    """Explicit (C0, omega, C1) for one z, or ``None`` if infeasible."""
    z = a + 1j * b
    P = (b * b - a * a) * v1**2 - a * v2 + a * q + pot
    if np.any(v1 <= 0):
        return None
    ratio = P / v1**2
    qmin = float(ratio.min())
    if qmin <= 1:
        return None
    C0 = 0.5 * (1 + qmin)
    eta = 0.5 * float(np.min(P - C0 * v1**2))
    if eta <= 0:
        return None
    c1max = math.inf
    for t in ts:
        vec = -2 * z * rho[:, None] ** (2 - lam) * grad_h + t * rho[:, None] ** (2 - lam) * glog_contra + a1
        L = rho ** (lam - 1) * np.sqrt(np.sum(np.abs(vec) ** 2 * g, axis=1))
        with np.errstate(divide="ignore"):
            bound = np.where(L > 0, 4 * (P - eta) / np.maximum(L, 1e-300) ** 2, np.inf)
        c1max = min(c1max, float(bound.min()))
    top = min(c1max, C0)
    if top <= 1:
        return None
    C1 = 0.5 * (1 + top)
    return C0, -eta, C1


def hlambda_window(
    spec: OperatorSpec,
    manifold: ModelManifold,
    lam_primes: list[float] | tuple[float, ...] | float,
    *,
    calc: DiscreteCalculus | None = None,
    M_list: tuple[float, ...] = tuple(2.0**k for k in range(11)),
    samples: int = 64,
    tol: float = 1e-6,
) -> WindowReport:
    """Scan ``z = a + ib`` over the (H2) interval for (Ah-1)/(Ah-2).

    For each ``M`` in ``M_list`` (smallest first) the witness ``M h`` is
    certified, ``samples`` values of ``a`` are tried for both signs of ``b``
    and the feasible window endpoints are refined by bisection to ``tol``.
    The first ``M`` with a nonempty window is reported together with
    explicit constants ``C0 > 1``, ``omega < 0`` and ``C1`` in ``(1, C0)``
    at the window midpoint.
    """
    calc = DiscreteCalculus(manifold) if calc is None else calc
    if np.isscalar(lam_primes):
        lam_primes = [float(lam_primes)]
    lam = spec.lam
    region = manifold.region & manifold.grid.interior
    nodes = np.flatnonzero(region)
    rho = calc.rho.rho[nodes]
    g = manifold.metric.g[nodes]
    glog_contra = calc.rho.grad_log[nodes]
    a1 = spec.coeffs.a1[nodes]
    pot = (calc.rho.rho**lam * spec.coeffs.a0).real[nodes]
    ts = sorted({2 * lp for lp in lam_primes} | {2 * lp - lam for lp in lam_primes})

    last_msg = ""
    for M in M_list:
        h = h_witness(manifold, lam, M, calc.rho)
        rep = check_hlambda(manifold, calc.rho, h, lam, region)
        if not rep.ok:
            return WindowReport(False, None, None, {}, lam_primes=tuple(lam_primes),
                                message=f"witness not certified: {rep.message}")
        c, Mhat = rep.c, rep.M
        grad_h = h.grad[nodes]
        v1 = rho * np.sqrt(np.sum(grad_h**2 * g, axis=1))
        v2 = h.flux_div[nodes]
        q = rho**lam * np.sum(a1.real * grad_h * g, axis=1)

        def feasible(a, sign):
            b = sign * math.sqrt(1 - a * a)
            return _window_constants(a, b, v1, v2, q, pot, rho, lam, glog_contra,
                                     grad_h, a1, g, ts)

        lo_a = -1.0 / (2 * Mhat * c**3)
        grid_a = lo_a * (1 - np.arange(1, samples + 1) / (samples + 1))
        intervals: dict[str, tuple[float, float] | None] = {}
        best = None
        for sign, label in ((1.0, "b>0"), (-1.0, "b<0")):
            ok = [feasible(a, sign) is not None for a in grid_a]
            if not any(ok):
                intervals[label] = None
                continue
            idx = np.flatnonzero(ok)
            i0, i1 = idx[0], idx[-1]

            def refine(good, bad):
                while abs(good - bad) > tol:
                    mid = 0.5 * (good + bad)
                    if feasible(mid, sign) is not None:
                        good = mid
                    else:
                        bad = mid
                return good

            left = refine(grid_a[i0], grid_a[i0 - 1] if i0 > 0 else lo_a)
            right = refine(grid_a[i1], grid_a[i1 + 1] if i1 + 1 < samples else 0.0)
            intervals[label] = (float(left), float(right))
            if best is None:
                amid = float(grid_a[idx[len(idx) // 2]])
                consts = feasible(amid, sign)
                best = (amid, sign * math.sqrt(1 - amid * amid), consts)
        if best is not None:
            a, b, (C0, om, C1) = best
            return WindowReport(True, Mhat, c, intervals, a, b, C0, C1, om,
                                tuple(lam_primes), "")
        last_msg = f"no admissible z for M = {M:g}"
    return WindowReport(False, None, None, {}, lam_primes=tuple(lam_primes),
                        message=f"(H3) failed up to M = {M_list[-1]:g}; {last_msg}; "
                        "a larger M or a different witness is needed")


# }}}
