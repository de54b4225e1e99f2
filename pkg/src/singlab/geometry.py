r"""
Model singular manifolds on structured grids
--------------------------------------------

Every geometry is a tensor-product lattice in one or two coordinates,
optionally masked (domains with circular holes, punctured domains, disks),
carrying a diagonal metric :math:`g`, its volume density :math:`\sqrt{\det g}`
and a singularity function :math:`\rho` with closed-form gradient and
Laplace--Beltrami data.

Near every singular end the grid stops at a truncation parameter
:math:`\varepsilon`; the nodes adjacent to the removed region are flagged as
truncation boundary and carry homogeneous Dirichlet data.

For domains whose singular set is a collection of boundary components
(holes, punctures, the boundary of an interval or disk) the singularity
function is the smooth blend

.. math::

    \rho = \xi_0 + \xi_j \, d_j,

where :math:`d_j` is the distance to the nearest component,
:math:`\xi_j \equiv 1` on the collar :math:`d_j \le r`, :math:`\xi_j` falls
to zero over :math:`[r, 4r]` along a septic smoothstep (so
:math:`\rho \in C^3`) and :math:`\xi_0 = 1 - \xi_j`. For :math:`r < 1`
the blend is monotone in :math:`d_j`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

__all__ = [
    "BoundaryKind",
    "ConfigurationError",
    "CuspCharacteristic",
    "CuspReport",
    "GeometryError",
    "Grading",
    "Grid",
    "HLambdaReport",
    "HWitness",
    "MetricData",
    "ModelManifold",
    "NormalizationError",
    "SingularityFunction",
    "UnsupportedParameterError",
    "build_bounded_domain",
    "build_cone",
    "build_cusp_interval",
    "build_domain_with_holes",
    "build_heston_strip",
    "build_pipe",
    "build_punctured_domain",
    "build_segment",
    "check_cusp_characteristic",
    "check_hlambda",
    "cusp_characteristic",
    "finite_difference_rho",
    "h_witness",
    "puncture_expansion",
    "singularity_function",
]


class GeometryError(ValueError):
    """Raised when a geometry cannot be constructed from valid parameters."""


class ConfigurationError(ValueError):
    """Raised for invalid construction parameters (node counts, grading, ...)."""


class UnsupportedParameterError(ValueError):
    """Raised for parameters excluded by the theory (e.g. ``lam == 1``)."""


class NormalizationError(ValueError):
    """Raised when a cusp characteristic violates ``R(1) = 1``."""


class BoundaryKind(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    TRUNCATION = 2


# {{{ grids


@dataclass(frozen=True)
class Grading:
    """Cell-size grading of one axis.

    ``ratio`` is the quotient of the smallest and the largest cell width, so
    ``ratio == 1`` is a uniform axis. ``toward`` names the refined end.
    """

    ratio: float = 1.0
    toward: str = "low"

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigurationError(f"grading ratio must lie in (0, 1]: {self.ratio}")
        if self.toward not in ("low", "high", "both"):
            raise ConfigurationError(f"unknown grading end: {self.toward!r}")

    @property
    def kind(self) -> str:
        return "uniform" if self.ratio == 1.0 else "geometric"


def graded_axis(lo: float, hi: float, n: int, grading: Grading) -> np.ndarray:
    """Return ``n`` strictly increasing nodes on ``[lo, hi]``."""
    if n < 2:
        raise ConfigurationError("an axis needs at least two nodes")
    ncells = n - 1
    if grading.ratio == 1.0 or ncells == 1:
        return np.linspace(lo, hi, n)

    if grading.toward == "both":
        dist = np.minimum(np.arange(ncells), ncells - 1 - np.arange(ncells))
    else:
        dist = np.arange(ncells)
    top = max(int(dist.max()), 1)
    widths = grading.ratio ** ((top - dist) / top)
    if grading.toward == "high":
        widths = widths[::-1]

    x = np.concatenate([[0.0], np.cumsum(widths)])
    x = lo + (hi - lo) * x / x[-1]
    x[-1] = hi
    return x


def _resolve_grading(
    grading: float | str | Grading, lo: float, hi: float, n: int, toward: str
) -> Grading:
    """Accept a ratio, a :class:`Grading`, or ``"auto"``.

    ``"auto"`` picks the mildest geometric ratio whose first cell at the
    refined end is at most ``0.9 * lo``, i.e. the distance of the end node to
    the singular set, so that adjacent values of a distance-like ``rho``
    stay within a factor of two.
    """
    if isinstance(grading, Grading):
        return grading
    if grading != "auto":
        return Grading(float(grading), toward)
    target = 0.9 * lo
    if target <= 0:
        raise ConfigurationError("automatic grading needs a positive truncation")

    def first(ratio):
        x = graded_axis(lo, hi, n, Grading(ratio, toward))
        return x[1] - x[0]

    if first(1.0) <= target:
        return Grading(1.0, toward)
    lo_r, hi_r = 1e-8, 1.0
    if first(lo_r) > target:
        raise ConfigurationError(f"{n} nodes cannot resolve the singular end; increase n")
    for _ in range(60):
        mid = math.sqrt(lo_r * hi_r)
        if first(mid) <= target:
            lo_r = mid
        else:
            hi_r = mid
    return Grading(lo_r, toward)


def _dual_widths(x: np.ndarray, periodic: bool, period: float) -> np.ndarray:
    if periodic:
        return np.full(x.size, period / x.size)
    dx = np.diff(x)
    w = np.empty_like(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """A (possibly masked) tensor-product lattice.

    Nodes are the active lattice points, numbered lexicographically in the
    lattice indices (last axis fastest). ``lattice_index`` maps lattice
    multi-indices to node numbers (``-1`` for removed points).
    """

    axes: tuple[np.ndarray, ...]
    periodic: tuple[bool, ...]
    lattice_index: np.ndarray
    ijk: np.ndarray
    coords: np.ndarray
    cell_volumes: np.ndarray
    boundary: np.ndarray
    grading: Grading = Grading()

    def __post_init__(self) -> None:
        for x, per in zip(self.axes, self.periodic):
            if np.any(np.diff(x) <= 0):
                raise GeometryError("axis coordinates must be strictly increasing")
        if np.any(self.cell_volumes <= 0):
            raise GeometryError("cell volumes must be positive")
        if not np.any(self.boundary == BoundaryKind.INTERIOR):
            raise ConfigurationError("grid has no interior node")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.lattice_index.shape

    @property
    def interior(self) -> np.ndarray:
        return self.boundary == BoundaryKind.INTERIOR

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    def neighbor(self, axis: int, step: int) -> np.ndarray:
        """Node number of the lattice neighbor along ``axis`` (``-1`` if none)."""
        idx = self.ijk.copy()
        idx[:, axis] += step
        n = self.shape[axis]
        if self.periodic[axis]:
            idx[:, axis] %= n
            ok = np.ones(self.n_nodes, dtype=bool)
        else:
            ok = (idx[:, axis] >= 0) & (idx[:, axis] < n)
        out = np.full(self.n_nodes, -1, dtype=np.int64)
        out[ok] = self.lattice_index[tuple(idx[ok].T)]
        return out

    def spacing(self, axis: int, step: int) -> np.ndarray:
        """Signed coordinate increment to the lattice neighbor (``nan`` if none)."""
        x = self.axes[axis]
        i = self.ijk[:, axis]
        j = i + step
        n = x.size
        if self.periodic[axis]:
            period = 2.0 * np.pi
            return np.full(self.n_nodes, step * period / n, dtype=float)
        out = np.full(self.n_nodes, np.nan)
        ok = (j >= 0) & (j < n)
        out[ok] = x[j[ok]] - x[i[ok]]
        return out


def _make_grid(
    axes: list[np.ndarray],
    periodic: list[bool],
    active: np.ndarray,
    boundary_lattice: np.ndarray,
    grading: Grading,
) -> Grid:
    shape = tuple(x.size for x in axes)
    lattice_index = np.full(shape, -1, dtype=np.int64)
    ijk = np.argwhere(active)
    lattice_index[tuple(ijk.T)] = np.arange(ijk.shape[0])
    coords = np.stack([axes[k][ijk[:, k]] for k in range(len(axes))], axis=1)
    vol = np.ones(ijk.shape[0])
    for k, x in enumerate(axes):
        vol = vol * _dual_widths(x, periodic[k], 2.0 * np.pi)[ijk[:, k]]
    boundary = boundary_lattice[tuple(ijk.T)].astype(np.int8)
    return Grid(
        axes=tuple(axes),
        periodic=tuple(periodic),
        lattice_index=lattice_index,
        ijk=ijk,
        coords=coords,
        cell_volumes=vol,
        boundary=boundary,
        grading=grading,
    )


def _periodic_axis(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


# }}}


# {{{ metric


@dataclass(frozen=True, eq=False)
class MetricData:
    """Diagonal metric :math:`g = \\mathrm{diag}(g_{00}, g_{11}, \\dots)`.

    ``dg[:, k, l]`` stores :math:`\\partial_l g_{kk}` so that Christoffel
    symbols can be formed without a symbolic engine.
    """

    g: np.ndarray
    dg: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.g <= 0):
            raise GeometryError("metric must be positive definite at every node")
        if not np.allclose(self.g * self.g_inv, 1.0, rtol=1e-12, atol=0):
            raise GeometryError("inverse metric is inconsistent")

    @property
    def g_inv(self) -> np.ndarray:
        return 1.0 / self.g

    @property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.prod(self.g, axis=1))

    def matrices(self) -> np.ndarray:
        """Full per-node metric matrices, shape ``(n, m, m)``."""
        n, m = self.g.shape
        out = np.zeros((n, m, m))
        out[:, range(m), range(m)] = self.g
        return out

    def christoffel(self) -> np.ndarray:
        r"""Return :math:`\Gamma^k_{ij}` with shape ``(n, k, i, j)``."""
        n, m = self.g.shape
        gam = np.zeros((n, m, m, m))
        for k in range(m):
            for i in range(m):
                for j in range(m):
                    val = np.zeros(n)
                    if j == k:
                        val += self.dg[:, k, i]
                    if i == k:
                        val += self.dg[:, k, j]
                    if i == j:
                        val -= self.dg[:, i, k]
                    gam[:, k, i, j] = 0.5 * val / self.g[:, k]
        return gam


def _flat_metric(n: int, m: int) -> MetricData:
    return MetricData(g=np.ones((n, m)), dg=np.zeros((n, m, m)))


def _warped_metric(r: np.ndarray) -> MetricData:
    """Metric ``dr^2 + r^2 dtheta^2`` in coordinates ``(r, theta)``."""
    n = r.size
    g = np.stack([np.ones(n), r**2], axis=1)
    dg = np.zeros((n, 2, 2))
    dg[:, 1, 0] = 2.0 * r
    return MetricData(g=g, dg=dg)


# }}}


# {{{ cusp characteristics


@dataclass(frozen=True)
class CuspCharacteristic:
    """A profile :math:`R` on :math:`(0, 1]` with its first two derivatives."""

    name: str
    R: Callable[[np.ndarray], np.ndarray]
    dR: Callable[[np.ndarray], np.ndarray]
    d2R: Callable[[np.ndarray], np.ndarray]

    @property
    def classification(self) -> str:
        return check_cusp_characteristic(self).classification


class _Linear:
    def R(self, t):
        return np.asarray(t, dtype=float)

    def dR(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def d2R(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


class _Arctan:
    def R(self, t):
        return 4.0 / np.pi * np.arctan(t)

    def dR(self, t):
        return 4.0 / np.pi / (1.0 + np.asarray(t) ** 2)

    def d2R(self, t):
        t = np.asarray(t, dtype=float)
        return -8.0 / np.pi * t / (1.0 + t**2) ** 2


class _Log:
    k = math.e - 1.0

    def R(self, t):
        return np.log1p(self.k * np.asarray(t, dtype=float))

    def dR(self, t):
        return self.k / (1.0 + self.k * np.asarray(t, dtype=float))

    def d2R(self, t):
        return -self.k**2 / (1.0 + self.k * np.asarray(t, dtype=float)) ** 2


class _Sine:
    def R(self, t):
        t = np.asarray(t, dtype=float)
        return 2.0 * t / 3.0 + np.sin(np.pi * t / 2.0) / 3.0

    def dR(self, t):
        return 2.0 / 3.0 + np.pi / 6.0 * np.cos(np.pi * np.asarray(t) / 2.0)

    def d2R(self, t):
        return -(np.pi**2) / 12.0 * np.sin(np.pi * np.asarray(t) / 2.0)


@dataclass(frozen=True)
class _Poly:
    coeffs: tuple[float, ...]

    def R(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def dR(self, t):
        c = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(t, c) + 0.0 * np.asarray(t)

    def d2R(self, t):
        c = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return np.polynomial.polynomial.polyval(t, c) + 0.0 * np.asarray(t)


_CATALOG: dict[str, Any] = {
    "linear": _Linear(),
    "arctan": _Arctan(),
    "log": _Log(),
    "sine": _Sine(),
    "square": _Poly((0.0, 0.0, 1.0)),
}


def cusp_characteristic(spec: str | dict | CuspCharacteristic) -> CuspCharacteristic:
    """Look up a cusp characteristic.

    ``spec`` is a catalog name (``linear``, ``arctan``, ``log``, ``sine``,
    ``square``) or ``{"poly": [c0, c1, ...]}`` for
    :math:`R(t) = \\sum_k c_k t^k`.
    """
    if isinstance(spec, CuspCharacteristic):
        return spec
    if isinstance(spec, dict):
        if "poly" not in spec:
            raise ConfigurationError(f"unknown cusp specification: {spec!r}")
        impl = _Poly(tuple(float(c) for c in spec["poly"]))
        name = "poly" + str(list(impl.coeffs))
    else:
        if spec not in _CATALOG:
            raise ConfigurationError(
                f"unknown cusp characteristic {spec!r}; choose from {sorted(_CATALOG)}"
            )
        impl = _CATALOG[spec]
        name = spec
    return CuspCharacteristic(name=name, R=impl.R, dR=impl.dR, d2R=impl.d2R)


@dataclass(frozen=True)
class CuspReport:
    inf_dR: float
    sup_dR: float
    sup_d2R: float
    C: float
    classification: str
    divergent_integral: bool
    R_at_one: float

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def check_cusp_characteristic(
    R: CuspCharacteristic | str | dict,
    samples: int = 4096,
    *,
    tmin: float = 1e-12,
    bound: float = 1e6,
) -> CuspReport:
    """Sample :math:`\\dot R` and :math:`\\ddot R` on :math:`(0, 1]` and classify.

    The sample set is the union of a uniform grid and a geometric grid down
    to ``tmin`` so that degeneration at :math:`t \\to 0` is seen. A profile is
    *mild* if the sampled :math:`\\dot R` stays in :math:`[1/C, C]` with
    ``C <= bound`` and *uniformly mild* if additionally
    :math:`\\sup |\\ddot R| \\le` ``bound``.
    """
    R = cusp_characteristic(R)
    r1 = float(R.R(np.array([1.0]))[0])
    if abs(r1 - 1.0) > 1e-10:
        raise NormalizationError(f"R(1) = {r1!r}, expected 1")

    t = np.unique(
        np.concatenate(
            [
                np.linspace(0.0, 1.0, samples + 1)[1:],
                np.geomspace(tmin, 1.0, samples),
            ]
        )
    )
    vals = R.R(t)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise GeometryError(f"R is not positive on (0, 1]: {R.name}")

    d1 = R.dR(t)
    d2 = R.d2R(t)
    inf1 = float(np.min(d1))
    sup1 = float(np.max(d1))
    sup2 = float(np.max(np.abs(d2)))

    C = max(sup1, 1.0 / inf1) if inf1 > 0 else math.inf
    mild = C <= bound
    classification = "general"
    if mild:
        classification = "uniformly-mild" if sup2 <= bound else "mild"

    # R(t) <= R(0+) + t sup R' and R(0+) = 0 force int dt/R = infinity
    r0 = float(R.R(np.array([0.0]))[0])
    divergent = bool(np.isfinite(sup1) and sup1 <= bound and abs(r0) <= 1e-12)

    return CuspReport(
        inf_dR=inf1,
        sup_dR=sup1,
        sup_d2R=sup2,
        C=C,
        classification=classification,
        divergent_integral=divergent,
        R_at_one=r1,
    )


# }}}


# {{{ singularity models


def smoothstep(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Septic smoothstep (C^3) and its first two derivatives, clamped to [0, 1].

    C^3 rather than C^2 so that three-point Laplacians of the blend keep
    second-order accuracy across the ends of the transition band.
    """
    s = np.clip(s, 0.0, 1.0)
    v = s**4 * (35.0 - 84.0 * s + 70.0 * s**2 - 20.0 * s**3)
    d1 = 140.0 * s**3 * (1.0 - s) ** 3
    d2 = 420.0 * s**2 * (1.0 - s) ** 2 * (1.0 - 2.0 * s)
    return v, d1, d2


@dataclass(frozen=True)
class CollarBlend:
    """Profile :math:`\beta` with :math:`\rho = \beta(d)`; equals ``d`` for ``d <= r``.

    The cutoff decays over ``[r, r + width]`` (default ``width = 3 r``); a
    wide band keeps neighboring values of ``rho`` comparable on modest grids.
    """

    r: float
    width: float | None = None

    @property
    def w(self) -> float:
        return 3.0 * self.r if self.width is None else self.width

    def __call__(self, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q = self.w
        s, sp, spp = smoothstep((d - self.r) / q)
        xi, xip, xipp = 1.0 - s, -sp / q, -spp / q**2

        b = xi * d + (1.0 - xi)
        b1 = xip * (d - 1.0) + xi
        b2 = xipp * (d - 1.0) + 2.0 * xip
        return b, b1, b2

    @property
    def reach(self) -> float:
        """Distance beyond which the blend is constant."""
        return self.r + self.w


class _RhoModel:
    """Analytic singularity function in the manifold's coordinates.

    Subclasses return ``(rho, dcov, lap)`` where ``dcov`` holds covariant
    partial derivatives and ``lap`` the Laplace--Beltrami value.
    """

    def evaluate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def distance(self, X: np.ndarray) -> np.ndarray | None:
        return None


@dataclass(frozen=True)
class _CuspRho(_RhoModel):
    R: CuspCharacteristic
    dim: int
    warped: bool = False

    def evaluate(self, X):
        t = X[:, 0]
        rho = self.R.R(t)
        dcov = np.zeros_like(X)
        dcov[:, 0] = self.R.dR(t)
        lap = self.R.d2R(t)
        if self.warped:
            # Delta_g on dt^2 + t^2 dtheta^2 adds R'/t
            lap = lap + self.R.dR(t) / t
        return rho, dcov, lap


@dataclass(frozen=True)
class _LinearRho(_RhoModel):
    """``rho = x_axis`` on a flat metric (Heston strip)."""

    axis: int

    def evaluate(self, X):
        rho = X[:, self.axis].copy()
        dcov = np.zeros_like(X)
        dcov[:, self.axis] = 1.0
        return rho, dcov, np.zeros(X.shape[0])


class _ConstRho(_RhoModel):
    """``rho = 1``: a uniformly regular reference geometry."""

    def evaluate(self, X):
        n = X.shape[0]
        return np.ones(n), np.zeros_like(X), np.zeros(n)


@dataclass(frozen=True)
class _Component:
    """A singular boundary component with its Euclidean distance function.

    ``kind`` is one of ``circle-out`` (outside a circle, i.e. a hole),
    ``circle-in`` (inside a circle, i.e. the boundary of a disk), ``point``,
    ``low``/``high`` (the endpoints of an interval) or ``polar`` (the circle
    ``r = r0`` in polar coordinates).
    """

    kind: str
    center: tuple[float, ...] = (0.0, 0.0)
    radius: float = 0.0

    def evaluate(self, X: np.ndarray, m: int):
        if self.kind == "low":
            d = X[:, 0] - self.center[0]
            return d, np.ones_like(X), np.zeros_like(d)
        if self.kind == "high":
            d = self.center[0] - X[:, 0]
            return d, -np.ones_like(X), np.zeros_like(d)
        if self.kind == "polar":
            r = X[:, 0]
            grad = np.zeros_like(X)
            grad[:, 0] = 1.0
            return r - self.radius, grad, 1.0 / r

        diff = X - np.asarray(self.center)[None, :]
        dist = np.sqrt(np.sum(diff**2, axis=1))
        # centers themselves are never active nodes; guard the division
        dist_safe = np.maximum(dist, 1e-300)
        unit = diff / dist_safe[:, None]
        if self.kind == "circle-out":
            return dist - self.radius, unit, (m - 1) / dist_safe
        if self.kind == "circle-in":
            return self.radius - dist, -unit, -(m - 1) / dist_safe
        if self.kind == "point":
            return dist, unit, (m - 1) / dist_safe
        raise GeometryError(f"unknown boundary component {self.kind!r}")


@dataclass(frozen=True)
class _BlendRho(_RhoModel):
    components: tuple[_Component, ...]
    blend: CollarBlend
    metric: str = "flat"  # or "polar"

    def nearest(self, X: np.ndarray):
        m = X.shape[1]
        best = None
        for comp in self.components:
            d, grad, lap = comp.evaluate(X, m)
            if best is None:
                best = [d, grad, lap]
                continue
            closer = d < best[0]
            best[0] = np.where(closer, d, best[0])
            best[1] = np.where(closer[:, None], grad, best[1])
            best[2] = np.where(closer, lap, best[2])
        return best

    def distance(self, X):
        return self.nearest(X)[0]

    def evaluate(self, X):
        d, grad, lap = self.nearest(X)
        b, b1, b2 = self.blend(d)
        if self.metric == "polar":
            gnorm2 = grad[:, 0] ** 2
        else:
            gnorm2 = np.sum(grad**2, axis=1)
        return b, b1[:, None] * grad, b2 * gnorm2 + b1 * lap


# }}}


# {{{ manifold


@dataclass(frozen=True, eq=False)
class ModelManifold:
    """A discretized singular manifold.

    ``region`` marks the nodes where the witness inequalities are claimed
    (the collar of the singular end, or the whole grid for cusp-type ends).
    """

    kind: str
    params: dict
    grid: Grid
    metric: MetricData
    eps: float
    rho_model: _RhoModel
    region: np.ndarray
    metric_kind: str = "flat"
    witness_dim: int | None = None

    def __post_init__(self) -> None:
        rho = self.rho_values
        if np.any(rho <= 0):
            raise GeometryError("singularity function must be positive at every node")

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def rho_values(self) -> np.ndarray:
        return self.rho_model.evaluate(self.grid.coords)[0]

    def metric_at(self, X: np.ndarray) -> np.ndarray:
        """Diagonal metric entries at arbitrary coordinates."""
        g = np.ones_like(X)
        if self.metric_kind == "polar":
            g[:, 1] = X[:, 0] ** 2
        return g

    def summary(self) -> dict[str, Any]:
        rho = self.rho_values
        out = {
            "kind": self.kind,
            "params": _jsonable(self.params),
            "dim": self.dim,
            "lattice_shape": list(self.grid.shape),
            "n_nodes": int(self.grid.n_nodes),
            "n_interior": int(self.grid.interior.sum()),
            "eps": self.eps,
            "rho_min": float(rho.min()),
            "rho_max": float(rho.max()),
            "grading": {"kind": self.grid.grading.kind, "ratio": self.grid.grading.ratio},
            "volume": float(np.sum(self.grid.cell_volumes * self.metric.sqrt_det)),
            "max_adjacent_rho_ratio": _max_adjacent_ratio(self.grid, rho),
        }
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, CuspCharacteristic):
        return obj.name
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _max_adjacent_ratio(grid: Grid, rho: np.ndarray) -> float:
    worst = 1.0
    for axis in range(grid.dim):
        nb = grid.neighbor(axis, 1)
        ok = nb >= 0
        if np.any(ok):
            ratio = np.maximum(rho[ok], rho[nb[ok]]) / np.minimum(rho[ok], rho[nb[ok]])
            worst = max(worst, float(ratio.max()))
    return worst


def _check_comparability(grid: Grid, rho: np.ndarray, factor: float = 2.0) -> None:
    worst = _max_adjacent_ratio(grid, rho)
    if worst > factor:
        raise ConfigurationError(
            f"adjacent rho values differ by {worst:.3g} > {factor}; "
            "refine the grid or grade it toward the singular end"
        )


def _check_eps(eps: float, upper: float = 0.25) -> None:
    if not 0.0 < eps <= upper:
        raise ConfigurationError(f"truncation eps must lie in (0, {upper}]: {eps}")


def _tensor_boundary(shape: tuple[int, ...], periodic: list[bool]) -> np.ndarray:
    b = np.zeros(shape, dtype=np.int8)
    for axis, n in enumerate(shape):
        if periodic[axis]:
            continue
        sl_lo = [slice(None)] * len(shape)
        sl_hi = [slice(None)] * len(shape)
        sl_lo[axis] = 0
        sl_hi[axis] = n - 1
        b[tuple(sl_lo)] = np.maximum(b[tuple(sl_lo)], BoundaryKind.DIRICHLET)
        b[tuple(sl_hi)] = np.maximum(b[tuple(sl_hi)], BoundaryKind.DIRICHLET)
    return b


def build_cusp_interval(
    R: CuspCharacteristic | str | dict,
    n: int,
    eps: float,
    grading: float | str | Grading = 1.0,
) -> ModelManifold:
    """Cusp :math:`(J_0, dt^2; R)` truncated to :math:`[\\varepsilon, 1]`."""
    R = cusp_characteristic(R)
    if n < 16:
        raise ConfigurationError(f"n must be at least 16: {n}")
    _check_eps(eps)
    report = check_cusp_characteristic(R)
    if report.classification == "general":
        raise ConfigurationError(f"cusp characteristic {R.name!r} is not mild")
    if np.any(R.R(np.linspace(eps, 1.0, 257)) <= 0):
        raise GeometryError("R must be positive on [eps, 1]")

    grading = _resolve_grading(grading, eps, 1.0, n, "low")
    t = graded_axis(eps, 1.0, n, grading)
    b = _tensor_boundary((n,), [False])
    b[0] = BoundaryKind.TRUNCATION
    grid = _make_grid([t], [False], np.ones(n, dtype=bool), b, grading)
    model = _CuspRho(R, 1)
    man = ModelManifold(
        kind="cusp_interval",
        params={"R": R.name, "n": n, "eps": eps, "grading": grading.ratio},
        grid=grid,
        metric=_flat_metric(n, 1),
        eps=eps,
        rho_model=model,
        region=np.ones(n, dtype=bool),
    )
    _check_comparability(grid, man.rho_values)
    return man


def _cusp_product(
    kind: str,
    R: CuspCharacteristic,
    n_t: int,
    n_theta: int,
    eps: float,
    grading: Grading,
    warped: bool,
) -> ModelManifold:
    t = graded_axis(eps, 1.0, n_t, grading)
    theta = _periodic_axis(n_theta)
    shape = (n_t, n_theta)
    b = _tensor_boundary(shape, [False, True])
    b[0, :] = BoundaryKind.TRUNCATION
    grid = _make_grid([t, theta], [False, True], np.ones(shape, dtype=bool), b, grading)
    metric = _warped_metric(grid.coords[:, 0]) if warped else _flat_metric(grid.n_nodes, 2)
    man = ModelManifold(
        kind=kind,
        params={"R": R.name, "n_t": n_t, "n_theta": n_theta, "eps": eps, "grading": grading.ratio},
        grid=grid,
        metric=metric,
        eps=eps,
        rho_model=_CuspRho(R, 2, warped=warped),
        region=np.ones(grid.n_nodes, dtype=bool),
        metric_kind="polar" if warped else "flat",
    )
    _check_comparability(grid, man.rho_values)
    return man


def build_pipe(
    R: CuspCharacteristic | str | dict,
    n_t: int,
    n_theta: int,
    eps: float,
    grading: float | str | Grading = 1.0,
) -> ModelManifold:
    """Pipe over the unit circle in stretched coordinates, metric ``dt^2 + dtheta^2``."""
    R = cusp_characteristic(R)
    if n_t < 16 or n_theta < 8:
        raise ConfigurationError("pipe needs n_t >= 16 and n_theta >= 8")
    _check_eps(eps)
    if check_cusp_characteristic(R).classification == "general":
        raise ConfigurationError(f"cusp characteristic {R.name!r} is not mild")
    grading = _resolve_grading(grading, eps, 1.0, n_t, "low")
    return _cusp_product("pipe", R, n_t, n_theta, eps, grading, warped=False)


def build_cone(
    n_t: int, n_theta: int, eps: float, grading: float | str | Grading = 1.0
) -> ModelManifold:
    """Cone ``dt^2 + t^2 dtheta^2`` over the unit circle with ``rho = t``."""
    if n_t < 8 or n_theta < 8:
        raise ConfigurationError("cone needs n_t >= 8 and n_theta >= 8")
    _check_eps(eps)
    grading = _resolve_grading(grading, eps, 1.0, n_t, "low")
    man = _cusp_product(
        "cone", cusp_characteristic("linear"), n_t, n_theta, eps, grading, warped=True
    )
    return man


def build_heston_strip(
    X: float,
    Y: float,
    eps: float,
    n_x: int,
    n_y: int,
    grading: float | str | Grading = 1.0,
) -> ModelManifold:
    """Strip :math:`[-X, X] \\times [\\varepsilon, Y]` with ``rho = y``."""
    if X <= 0 or Y <= 0:
        raise ConfigurationError("X and Y must be positive")
    if not 0 < eps < Y / 4:
        raise ConfigurationError(f"eps must lie in (0, Y/4): {eps}")
    if n_x < 4 or n_y < 4:
        raise ConfigurationError("Heston strip needs at least 4 nodes per axis")
    grading = _resolve_grading(grading, eps, Y, n_y, "low")
    x = np.linspace(-X, X, n_x)
    y = graded_axis(eps, Y, n_y, grading)
    shape = (n_x, n_y)
    b = _tensor_boundary(shape, [False, False])
    b[:, 0] = BoundaryKind.TRUNCATION
    grid = _make_grid([x, y], [False, False], np.ones(shape, dtype=bool), b, grading)
    man = ModelManifold(
        kind="heston_strip",
        params={"X": X, "Y": Y, "eps": eps, "n_x": n_x, "n_y": n_y, "grading": grading.ratio},
        grid=grid,
        metric=_flat_metric(grid.n_nodes, 2),
        eps=eps,
        rho_model=_LinearRho(1),
        region=np.ones(grid.n_nodes, dtype=bool),
    )
    _check_comparability(grid, man.rho_values)
    return man


def _masked_cartesian(
    box: tuple[float, float, float, float],
    n: int,
    components: list[_Component],
    singular: list[bool],
    eps: float,
    outer_disk: float | None,
    outer_singular: bool,
) -> tuple[Grid, np.ndarray]:
    """Cartesian lattice with nodes closer than ``eps`` to singular sets removed."""
    x = np.linspace(box[0], box[1], n)
    y = np.linspace(box[2], box[3], n)
    XX, YY = np.meshgrid(x, y, indexing="ij")
    P = np.stack([XX.ravel(), YY.ravel()], axis=1)

    active = np.ones(P.shape[0], dtype=bool)
    trunc_removed = np.zeros(P.shape[0], dtype=bool)
    for comp, sing in zip(components, singular):
        d, _, _ = comp.evaluate(P, 2)
        if sing:
            gone = d < eps
            trunc_removed |= gone
        else:
            gone = d < 0
        active &= ~gone
    if outer_disk is not None:
        gone = np.sqrt(np.sum(P**2, axis=1)) > outer_disk - (eps if outer_singular else 0.0)
        if outer_singular:
            trunc_removed |= gone
        active &= ~gone

    active = active.reshape(n, n)
    trunc_removed = trunc_removed.reshape(n, n)
    removed = ~active
    boundary = _tensor_boundary((n, n), [False, False])

    def shifted(mask, axis, step):
        out = np.zeros_like(mask)
        src = [slice(None)] * 2
        dst = [slice(None)] * 2
        if step > 0:
            src[axis], dst[axis] = slice(step, None), slice(None, -step)
        else:
            src[axis], dst[axis] = slice(None, step), slice(-step, None)
        out[tuple(dst)] = mask[tuple(src)]
        return out

    near_trunc = np.zeros_like(active)
    near_removed = np.zeros_like(active)
    for axis in range(2):
        for step in (-1, 1):
            near_trunc |= shifted(trunc_removed, axis, step)
            near_removed |= shifted(removed, axis, step)
    boundary[near_removed & active] = np.maximum(
        boundary[near_removed & active], BoundaryKind.DIRICHLET
    )
    boundary[near_trunc & active] = BoundaryKind.TRUNCATION
    grid = _make_grid([x, y], [False, False], active, boundary, Grading())
    return grid, P


def build_domain_with_holes(
    outer: dict,
    holes: list[tuple[tuple[float, float], float]],
    n: int | tuple[int, int],
    r: float,
    eps: float | None = None,
    grading: float | str = 1.0,
) -> ModelManifold:
    """Planar domain minus closed circular holes; the hole boundaries are singular.

    ``outer`` is ``{"disk": radius}`` or ``{"box": [x0, x1, y0, y1]}``. A disk
    with a single hole centered at the origin is discretized on a polar grid
    ``(r, theta)`` graded toward the hole; other layouts use a masked
    Cartesian lattice with ``n`` nodes per axis.
    """
    if r <= 0:
        raise ConfigurationError("collar width r must be positive")
    eps = r / 4 if eps is None else eps
    if not 0 < eps < r:
        raise ConfigurationError(f"eps must lie in (0, r): {eps}")
    if not holes:
        raise ConfigurationError("at least one hole is required")
    blend = CollarBlend(r)
    holes = [(tuple(map(float, c)), float(rad)) for c, rad in holes]

    for i, (ci, ri) in enumerate(holes):
        for cj, rj in holes[i + 1 :]:
            gap = math.dist(ci, cj) - ri - rj
            if gap <= 2 * blend.reach:
                raise GeometryError(
                    f"collars overlap: holes {ci} and {cj} are {gap:.3g} apart "
                    f"(need > {2 * blend.reach:.3g})"
                )
    if "disk" in outer:
        R_out = float(outer["disk"])
        for c, rad in holes:
            if R_out - math.hypot(*c) - rad <= blend.reach:
                raise GeometryError("hole collar reaches the outer boundary")
    elif "box" in outer:
        x0, x1, y0, y1 = map(float, outer["box"])
        for c, rad in holes:
            if min(c[0] - x0, x1 - c[0], c[1] - y0, y1 - c[1]) - rad <= blend.reach:
                raise GeometryError("hole collar reaches the outer boundary")
    else:
        raise ConfigurationError(f"outer must be a disk or a box: {outer!r}")

    params = {"outer": outer, "holes": [[list(c), rad] for c, rad in holes], "r": r, "eps": eps}
    polar = "disk" in outer and len(holes) == 1 and holes[0][0] == (0.0, 0.0)
    if polar:
        n_r, n_theta = (n, 4 * n) if isinstance(n, int) else n
        r0 = holes[0][1]
        g = _resolve_grading(grading, eps, R_out - r0, n_r, "low")
        rr = graded_axis(r0 + eps, R_out, n_r, g)
        theta = _periodic_axis(n_theta)
        shape = (n_r, n_theta)
        b = _tensor_boundary(shape, [False, True])
        b[0, :] = BoundaryKind.TRUNCATION
        grid = _make_grid([rr, theta], [False, True], np.ones(shape, dtype=bool), b, g)
        model = _BlendRho((_Component("polar", radius=r0),), blend, metric="polar")
        metric = _warped_metric(grid.coords[:, 0])
        params.update(n_r=n_r, n_theta=n_theta, grading=grading, coordinates="polar")
        metric_kind = "polar"
    else:
        if grading != 1.0:
            raise ConfigurationError("masked Cartesian grids are uniform; use grading = 1")
        n_c = n if isinstance(n, int) else n[0]
        comps = [_Component("circle-out", c, rad) for c, rad in holes]
        if "disk" in outer:
            box = (-R_out, R_out, -R_out, R_out)
            grid, _ = _masked_cartesian(box, n_c, comps, [True] * len(comps), eps, R_out, False)
        else:
            grid, _ = _masked_cartesian(
                (x0, x1, y0, y1), n_c, comps, [True] * len(comps), eps, None, False
            )
        model = _BlendRho(tuple(comps), blend)
        metric = _flat_metric(grid.n_nodes, 2)
        params.update(n=n_c, coordinates="cartesian")
        metric_kind = "flat"

    d = model.distance(grid.coords)
    man = ModelManifold(
        kind="domain_with_holes",
        params=params,
        grid=grid,
        metric=metric,
        eps=eps,
        rho_model=model,
        region=d <= r,
        metric_kind=metric_kind,
    )
    if polar:
        _check_comparability(grid, man.rho_values)
    return man


def build_punctured_domain(
    points: list[tuple[float, float]],
    eps: float,
    n: int,
    r: float = 0.2,
    box: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
) -> ModelManifold:
    """Box minus :math:`\\varepsilon`-balls around finitely many points (m = 2)."""
    if eps <= 0 or eps >= r:
        raise ConfigurationError(f"excision radius must lie in (0, r): {eps}")
    if not points:
        raise ConfigurationError("at least one point is required")
    blend = CollarBlend(r)
    pts = [tuple(map(float, p)) for p in points]
    for i, p in enumerate(pts):
        if min(p[0] - box[0], box[1] - p[0], p[1] - box[2], box[3] - p[1]) <= blend.reach:
            raise GeometryError(f"point {p} is too close to the outer boundary")
        for q in pts[i + 1 :]:
            if math.dist(p, q) <= 2 * blend.reach:
                raise GeometryError(f"collars of {p} and {q} overlap")
    comps = [_Component("point", p) for p in pts]
    grid, _ = _masked_cartesian(box, n, comps, [True] * len(comps), eps, None, False)
    model = _BlendRho(tuple(comps), blend)
    d = model.distance(grid.coords)
    return ModelManifold(
        kind="punctured_domain",
        params={"points": [list(p) for p in pts], "eps": eps, "n": n, "r": r, "box": list(box)},
        grid=grid,
        metric=_flat_metric(grid.n_nodes, 2),
        eps=eps,
        rho_model=model,
        region=d <= r,
        witness_dim=2,
    )


def build_bounded_domain(
    shape: str,
    eps: float,
    n: int,
    r: float = 0.1,
    grading: float | str = 1.0,
) -> ModelManifold:
    """Interval ``(0, 1)`` or unit disk whose boundary is the singular set.

    ``rho`` is the blended distance to the boundary, equal to it on the
    collar ``d <= r``.
    """
    blend = CollarBlend(r)
    if not 0 < eps < r:
        raise ConfigurationError(f"eps must lie in (0, r): {eps}")
    if shape == "interval":
        if 2 * blend.reach >= 1.0:
            raise GeometryError("collars of the two endpoints overlap; decrease r")
        g = _resolve_grading(grading, eps, 1.0 - eps, n, "both")
        x = graded_axis(eps, 1.0 - eps, n, g)
        b = _tensor_boundary((n,), [False])
        b[0] = b[-1] = BoundaryKind.TRUNCATION
        grid = _make_grid([x], [False], np.ones(n, dtype=bool), b, g)
        comps = (_Component("low", (0.0,)), _Component("high", (1.0,)))
        metric = _flat_metric(n, 1)
    elif shape == "disk":
        if blend.reach >= 0.5:
            raise GeometryError("collar too wide for the unit disk")
        if grading != 1.0:
            raise ConfigurationError("masked Cartesian grids are uniform; use grading = 1")
        comps = (_Component("circle-in", (0.0, 0.0), 1.0),)
        grid, _ = _masked_cartesian((-1.0, 1.0, -1.0, 1.0), n, [], [], eps, 1.0, True)
        metric = _flat_metric(grid.n_nodes, 2)
    else:
        raise ConfigurationError(f"unknown bounded domain {shape!r}")
    model = _BlendRho(comps, blend)
    d = model.distance(grid.coords)
    man = ModelManifold(
        kind="bounded_domain",
        params={"shape": shape, "eps": eps, "n": n, "r": r, "grading": grading},
        grid=grid,
        metric=metric,
        eps=eps,
        rho_model=model,
        region=d <= r,
    )
    if shape == "interval":
        # masked Cartesian lattices cannot be graded; their ratio is only reported
        _check_comparability(grid, man.rho_values)
    return man


def build_segment(n: int, length: float = 1.0) -> ModelManifold:
    """Flat segment ``[0, length]`` with ``rho = 1`` and Dirichlet ends.

    A regular reference geometry for verification runs.
    """
    if n < 3:
        raise ConfigurationError("a segment needs at least 3 nodes")
    x = np.linspace(0.0, length, n)
    b = _tensor_boundary((n,), [False])
    grid = _make_grid([x], [False], np.ones(n, dtype=bool), b, Grading())
    return ModelManifold(
        kind="segment",
        params={"n": n, "length": length},
        grid=grid,
        metric=_flat_metric(n, 1),
        eps=0.0,
        rho_model=_ConstRho(),
        region=np.zeros(n, dtype=bool),
    )


# }}}


# {{{ singularity function


@dataclass(frozen=True, eq=False)
class SingularityFunction:
    """Per-node :math:`\\rho`, contravariant :math:`\\mathrm{grad}\\,\\rho` and :math:`\\Delta_g \\rho`."""

    rho: np.ndarray
    grad: np.ndarray
    lap: np.ndarray
    provenance: str = "analytic"

    def __post_init__(self) -> None:
        if np.any(self.rho <= 0):
            raise GeometryError("rho must be positive")

    @property
    def grad_log(self) -> np.ndarray:
        return self.grad / self.rho[:, None]


def singularity_function(manifold: ModelManifold) -> SingularityFunction:
    """Closed-form singularity data, or finite differences if none is known."""
    if manifold.rho_model is None:
        return finite_difference_rho(manifold)
    rho, dcov, lap = manifold.rho_model.evaluate(manifold.grid.coords)
    grad = dcov * manifold.metric.g_inv
    return SingularityFunction(rho=rho, grad=grad, lap=lap, provenance="analytic")


def finite_difference_rho(
    manifold: ModelManifold, rho: np.ndarray | None = None
) -> SingularityFunction:
    """Second-order finite-difference gradient and Laplace--Beltrami of ``rho``.

    Nodes without two lattice neighbors along an axis use one-sided
    differences for the gradient and report ``nan`` for the Laplacian.
    """
    grid, metric = manifold.grid, manifold.metric
    if rho is None:
        rho = manifold.rho_values
    sq = metric.sqrt_det
    n = grid.n_nodes
    dcov = np.zeros((n, grid.dim))
    lap = np.zeros(n)
    for k in range(grid.dim):
        ip, im = grid.neighbor(k, 1), grid.neighbor(k, -1)
        hp, hm = grid.spacing(k, 1), -grid.spacing(k, -1)
        both = (ip >= 0) & (im >= 0)
        only_p = (ip >= 0) & (im < 0)
        only_m = (ip < 0) & (im >= 0)

        fp = np.where(ip >= 0, rho[np.maximum(ip, 0)], np.nan)
        fm = np.where(im >= 0, rho[np.maximum(im, 0)], np.nan)
        d = np.full(n, np.nan)
        d[both] = (
            hm[both] ** 2 * (fp[both] - rho[both]) + hp[both] ** 2 * (rho[both] - fm[both])
        ) / (hp[both] * hm[both] * (hp[both] + hm[both]))
        d[only_p] = (fp[only_p] - rho[only_p]) / hp[only_p]
        d[only_m] = (rho[only_m] - fm[only_m]) / hm[only_m]
        dcov[:, k] = d

        # flux form (1/sqrt g) d_k (sqrt g g^kk d_k rho) on a three-point stencil
        c = sq * metric.g_inv[:, k]
        cp = np.where(ip >= 0, c[np.maximum(ip, 0)], np.nan)
        cm = np.where(im >= 0, c[np.maximum(im, 0)], np.nan)
        fluxp = 0.5 * (c + cp) * (fp - rho) / hp
        fluxm = 0.5 * (c + cm) * (rho - fm) / hm
        term = np.where(both, (fluxp - fluxm) / (0.5 * (hp + hm)) / sq, np.nan)
        lap += term
    return SingularityFunction(
        rho=rho, grad=dcov * metric.g_inv, lap=lap, provenance="finite-difference"
    )


# }}}


# {{{ witness functions


@dataclass(frozen=True, eq=False)
class HWitness:
    r"""Witness :math:`h = M s \log\rho` with its closed-form derived fields.

    ``grad`` is the contravariant gradient and ``flux_div`` the quantity
    :math:`\rho^\lambda \mathrm{div}(\rho^{2-\lambda}\mathrm{grad}\, h)`.
    ``c`` stays ``None`` until :func:`check_hlambda` certifies the pinching.
    """

    values: np.ndarray
    grad: np.ndarray
    flux_div: np.ndarray
    lam: float
    M: float
    sign: float
    region: np.ndarray
    c: float | None = None


def h_witness(
    manifold: ModelManifold,
    lam: float,
    M: float = 1.0,
    rho: SingularityFunction | None = None,
) -> HWitness:
    """Build the logarithmic witness :math:`h = M\\,\\mathrm{sign}(\\cdot)\\log\\rho`.

    The sign is :math:`\\mathrm{sign}(1-\\lambda)`, or
    :math:`\\mathrm{sign}(m-\\lambda)` around removed points of an
    ``m``-dimensional manifold.
    """
    if lam < 0:
        raise UnsupportedParameterError(f"lambda must be nonnegative: {lam}")
    if M <= 0:
        raise UnsupportedParameterError(f"M must be positive: {M}")
    pivot = manifold.witness_dim if manifold.witness_dim is not None else 1
    if lam == pivot:
        raise UnsupportedParameterError(
            f"lambda = {pivot} is excluded for {manifold.kind} "
            f"(the witness needs lambda in [0, {pivot}) or ({pivot}, inf))"
        )
    rho = singularity_function(manifold) if rho is None else rho
    s = float(np.sign(pivot - lam))

    gnorm2 = np.sum(rho.grad**2 * manifold.metric.g, axis=1)
    flux_div = M * s * (rho.rho * rho.lap + (1.0 - lam) * gnorm2)
    return HWitness(
        values=M * s * np.log(rho.rho),
        grad=M * s * rho.grad_log,
        flux_div=flux_div,
        lam=lam,
        M=M,
        sign=s,
        region=manifold.region.copy(),
    )


@dataclass(frozen=True)
class HLambdaReport:
    ok: bool
    c: float
    M: float
    v1_range: tuple[float, float]
    v2_range: tuple[float, float]
    violating_node: int | None = None
    message: str = ""

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def check_hlambda(
    manifold: ModelManifold,
    rho: SingularityFunction,
    h: HWitness,
    lam: float | None = None,
    region: np.ndarray | None = None,
    *,
    v1: np.ndarray | None = None,
    v2: np.ndarray | None = None,
) -> HLambdaReport:
    r"""Measure the pinching constants of a witness.

    Computes :math:`v_1 = \rho|\mathrm{grad}\,h|_g` and
    :math:`v_2 = \rho^\lambda\mathrm{div}(\rho^{2-\lambda}\mathrm{grad}\,h)`
    on ``region`` and returns the geometric midpoint
    :math:`\hat M = \sqrt{\sup v \cdot \inf v}` over both fields together with
    the smallest :math:`c \ge 1` such that :math:`\hat M/c \le v_i \le \hat M c`.
    Precomputed fields ``v1``/``v2`` (e.g. from a discrete calculus) override
    the closed-form ones.
    """
    lam = h.lam if lam is None else lam
    region = h.region if region is None else region
    nodes = np.flatnonzero(region)
    if nodes.size == 0:
        return HLambdaReport(False, math.inf, math.nan, (math.nan,) * 2, (math.nan,) * 2,
                             None, "empty region")
    if v1 is None:
        v1 = rho.rho * np.sqrt(np.sum(h.grad**2 * manifold.metric.g, axis=1))
    if v2 is None:
        v2 = h.flux_div
    a, b = v1[nodes], v2[nodes]

    r1 = (float(a.min()), float(a.max()))
    r2 = (float(b.min()), float(b.max()))
    if b.min() <= 0:
        bad = int(nodes[np.argmin(b)])
        return HLambdaReport(
            False, math.inf, math.nan, r1, r2, bad,
            "flux divergence of the witness is not positive on the region",
        )
    both = np.concatenate([a, b])
    lo, hi = float(both.min()), float(both.max())
    Mhat = math.sqrt(lo * hi)
    c = math.sqrt(hi / lo)
    return HLambdaReport(True, c, Mhat, r1, r2, None, "")


def puncture_expansion(
    manifold: ModelManifold, lam: float, rho: SingularityFunction | None = None
) -> tuple[float, float]:
    r"""Fit :math:`v_2 = (m - \lambda) + K\rho^2` for the witness :math:`\log\rho`.

    Returns ``(leading, K)`` from a least-squares fit over the collar nodes.
    ``K`` is rounded to zero when all residuals sit at roundoff level.
    """
    m = manifold.witness_dim or manifold.dim
    rho = singularity_function(manifold) if rho is None else rho
    nodes = np.flatnonzero(manifold.region)
    gnorm2 = np.sum(rho.grad**2 * manifold.metric.g, axis=1)
    v2 = (rho.rho * rho.lap + (1.0 - lam) * gnorm2)[nodes]
    x = rho.rho[nodes] ** 2
    design = np.stack([np.ones_like(x), x], axis=1)
    (lead, K), *_ = np.linalg.lstsq(design, v2, rcond=None)
    resid = v2 - (m - lam)
    if np.max(np.abs(resid)) <= 64 * np.finfo(float).eps * max(1.0, abs(m - lam)):
        K = 0.0
    return float(lead), float(K)


# }}}
