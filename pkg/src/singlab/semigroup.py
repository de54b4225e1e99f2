r"""
Resolvents, time stepping and semigroup probes
----------------------------------------------

All routines act on interior vectors of a :class:`DiscreteOperator`. The
weighted norms monitored along evolutions are

.. math::

    \|u\|_{L_p^{\lambda'}} = \Big(\sum_i w_i |\rho_i^{\lambda'} u_i|^p\Big)^{1/p},
    \qquad \|u\|_{L_\infty^{\lambda'}} = \max_i |\rho_i^{\lambda'} u_i|.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from singlab.operators import DiscreteOperator
from singlab.spaces import NormSpec, weighted_lp_norm, weighted_sobolev_norm

__all__ = [
    "EvolutionTrace",
    "ResolventError",
    "SectorReport",
    "StepperConfig",
    "contractivity_certificates",
    "contractivity_probe",
    "evolve",
    "linf_oracle",
    "monitor_norm",
    "resolvent_apply",
    "sector_probe",
    "stationary_solve",
]

SCHEMES = ("implicit-euler", "crank-nicolson")


class ResolventError(RuntimeError):
    """Raised when ``mu + A`` cannot be solved to the requested accuracy."""

    def __init__(self, message: str, condition: float | None = None, step: int | None = None):
        super().__init__(message)
        self.condition = condition
        self.step = step


def _factor(M: sp.spmatrix):
    try:
        return spla.splu(M.tocsc())
    except RuntimeError as exc:  # exactly singular
        raise ResolventError(f"singular system: {exc}", condition=math.inf) from exc


def _solve(lu, b: np.ndarray) -> np.ndarray:
    """Solve with a factorization; complex data against a real factor go by parts."""
    b = np.asarray(b)
    if np.iscomplexobj(b) and not np.iscomplexobj(lu.U.data):
        return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    return lu.solve(b.astype(np.result_type(b, lu.U.dtype)))


def _condition_estimate(M: sp.spmatrix, lu) -> float:
    n = M.shape[0]
    Minv = spla.LinearOperator(
        (n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="H"), dtype=M.dtype
    )
    return float(spla.onenormest(M) * spla.onenormest(Minv))


def resolvent_apply(
    A: DiscreteOperator, mu: complex, f: np.ndarray, *, rtol: float = 1e-10
) -> np.ndarray:
    """Solve :math:`(\\mu I + A) u = f` with a sparse LU factorization."""
    M = A.matrix + mu * sp.identity(A.n, format="csr")
    lu = _factor(M)
    u = _solve(lu, np.asarray(f))
    res = np.linalg.norm(M @ u - f)
    scale = np.linalg.norm(f)
    if not np.all(np.isfinite(u)) or res > rtol * max(scale, np.finfo(float).tiny):
        # one step of iterative refinement before giving up
        u = u + _solve(lu, f - M @ u)
        res = np.linalg.norm(M @ u - f)
        if not np.all(np.isfinite(u)) or res > rtol * max(scale, np.finfo(float).tiny):
            raise ResolventError(
                f"relative residual {res / scale:.3e} exceeds {rtol:g}",
                condition=_condition_estimate(M, lu),
            )
    return u


def monitor_norm(A: DiscreteOperator, u: np.ndarray, p: float, lam_prime: float) -> float:
    """Weighted :math:`L_p^{\\lambda'}` norm of an interior vector."""
    v = np.abs(A.rho**lam_prime * u)
    if math.isinf(p):
        return float(v.max()) if v.size else 0.0
    return float(np.sum(A.weights * v**p) ** (1.0 / p))


# {{{ time stepping


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "implicit-euler"
    dt: float = 1e-2
    T: float = 1.0
    monitors: tuple[tuple[float, float], ...] = ((2.0, 0.0),)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}: {self.scheme!r}")
        if not 0 < self.dt <= self.T:
            raise ValueError(f"need 0 < dt <= T: dt={self.dt}, T={self.T}")
        if not self.monitors:
            raise ValueError("at least one (p, lambda') monitor is required")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class EvolutionTrace:
    times: np.ndarray
    norms: dict[tuple[float, float], np.ndarray]
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    violations: list[dict[str, Any]] = field(default_factory=list)
    final: np.ndarray | None = None

    def to_csv(self, path) -> None:
        keys = list(self.norms)
        header = "time," + ",".join(f"p={_fmt(p)};lp={_fmt(lp)}" for p, lp in keys)
        cols = [self.times] + [self.norms[k] for k in keys]
        np.savetxt(path, np.stack(cols, axis=1), delimiter=",", header=header, comments="")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


class _Stepper:
    """Factorized one-step map of a scheme (shared by all trials)."""

    def __init__(self, A: DiscreteOperator, scheme: str, dt: float):
        I = sp.identity(A.n, format="csr")
        self.A = A.matrix
        self.dt = dt
        self.scheme = scheme
        if scheme == "implicit-euler":
            self.lu = _factor(I + dt * A.matrix)
        else:
            self.lu = _factor(I + 0.5 * dt * A.matrix)

    def __call__(self, u, f_old=None, f_new=None):
        dt = self.dt
        if self.scheme == "implicit-euler":
            rhs = u if f_new is None else u + dt * f_new
        else:
            rhs = u - 0.5 * dt * (self.A @ u)
            if f_new is not None:
                rhs = rhs + 0.5 * dt * (f_old + f_new)
        return _solve(self.lu, rhs)


def evolve(
    A: DiscreteOperator,
    u0: np.ndarray,
    forcing: Callable[[float], np.ndarray] | None,
    cfg: StepperConfig,
    *,
    snapshot_every: int | None = None,
    tol: float = 1e-10,
    stepper: _Stepper | None = None,
) -> EvolutionTrace:
    """March :math:`u' + A u = f` and record the monitored norms each step."""
    u = np.asarray(u0).copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("initial datum must be finite")
    try:
        step = _Stepper(A, cfg.scheme, cfg.dt) if stepper is None else stepper
    except ResolventError as exc:
        exc.step = 0
        raise
    n_steps = cfg.steps
    times = cfg.dt * np.arange(n_steps + 1)
    norms = {m: np.empty(n_steps + 1) for m in cfg.monitors}
    for (p, lp), arr in norms.items():
        arr[0] = monitor_norm(A, u, p, lp)
    trace = EvolutionTrace(times=times, norms=norms)
    if snapshot_every:
        trace.snapshots.append((0.0, u.copy()))

    f_old = forcing(0.0) if forcing is not None else None
    for k in range(1, n_steps + 1):
        f_new = forcing(times[k]) if forcing is not None else None
        u = step(u, f_old, f_new)
        if not np.all(np.isfinite(u)):
            raise ResolventError("non-finite iterate", step=k)
        f_old = f_new
        for (p, lp), arr in norms.items():
            arr[k] = monitor_norm(A, u, p, lp)
            if arr[k] > arr[k - 1] * (1 + tol) and (arr[k] - arr[k - 1]) > 1e-300:
                ratio = arr[k] / arr[k - 1] if arr[k - 1] > 0 else math.inf
                trace.violations.append({"p": p, "lam_prime": lp, "step": k, "ratio": ratio})
        if snapshot_every and k % snapshot_every == 0:
            trace.snapshots.append((times[k], u.copy()))
    trace.final = u
    return trace


# }}}


# {{{ contractivity


def contractivity_certificates(A: DiscreteOperator, lam_primes: Sequence[float],
                               tol: float = 1e-12) -> dict[str, Any]:
    """Sufficient conditions for implicit-Euler contractivity at every step size.

    * ``p = 2``: the symmetric part of :math:`\\Omega A`, with
      :math:`\\Omega = \\mathrm{diag}(w\\rho^{2\\lambda'})`, is positive semidefinite;
    * ``p = inf``: :math:`\\rho^{\\lambda'} A \\rho^{-\\lambda'}` is a Z-matrix with
      nonnegative row sums;
    * ``p = 1``: the same with column sums of
      :math:`(w\\rho^{\\lambda'}) A (w\\rho^{\\lambda'})^{-1}`.
    """
    M = A.matrix.tocsr()
    out: dict[str, Any] = {}
    dense_ok = A.n <= 4000
    coo = M.tocoo()
    off = coo.row != coo.col
    is_real = not np.iscomplexobj(coo.data) or not np.any(coo.data.imag)
    z_matrix = bool(is_real and np.all(coo.data.real[off] <= 0))
    scale = float(np.abs(coo.data).max())
    for lp in lam_primes:
        r = A.rho**lp
        # p = inf
        rows = r * (M @ (1.0 / r))
        # p = 1
        s = A.weights * r
        cols = (M.T @ s) / s
        entry = {
            "inf": bool(z_matrix and np.all(rows.real >= -tol * scale)),
            "1": bool(z_matrix and np.all(cols.real >= -tol * scale)),
            "min_row_sum": float(rows.real.min()),
            "min_col_sum": float(cols.real.min()),
        }
        if dense_ok:
            Om = A.weights * r**2
            S = (Om[:, None] * M.toarray())
            S = 0.5 * (S + S.conj().T)
            lmin = float(np.linalg.eigvalsh(S)[0])
            entry["2"] = bool(lmin >= -tol * scale * Om.max())
            entry["min_sym_eig"] = lmin
        out[_fmt(lp)] = entry
    out["z_matrix"] = z_matrix
    return out


def linf_oracle(matrix: np.ndarray | sp.spmatrix, dt: float) -> dict[str, Any]:
    """Brute-force check of :math:`\\|(I + \\Delta t A)^{-1}\\|_\\infty \\le 1` for small matrices.

    Forms the dense inverse and reports its sign pattern and the exact
    induced infinity norm (maximum absolute row sum).
    """
    A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    n = A.shape[0]
    inv = np.linalg.inv(np.eye(n) + dt * A)
    off = A - np.diag(np.diag(A))
    return {
        "nonnegative_inverse": bool(np.all(inv >= -1e-14)),
        "inf_norm": float(np.abs(inv).sum(axis=1).max()),
        "z_matrix": bool(np.all(off <= 0)),
        "row_sums_nonnegative": bool(np.all(A.sum(axis=1) >= -1e-12)),
    }


def _random_datum(rng: np.random.Generator, n: int, complex_data: bool) -> np.ndarray:
    u = rng.standard_normal(n)
    if complex_data:
        u = u + 1j * rng.standard_normal(n)
    return u


def contractivity_probe(
    A: DiscreteOperator,
    trials: int,
    p_list: Sequence[float],
    lam_primes: Sequence[float],
    cfg: StepperConfig,
    *,
    rng: np.random.Generator | None = None,
    threads: int = 1,
    complex_data: bool = False,
    tol: float = 1e-10,
) -> dict[str, Any]:
    """Homogeneous evolutions from random data with per-step norm monitoring."""
    rng = np.random.default_rng(0) if rng is None else rng
    monitors = tuple((float(p), float(lp)) for p in p_list for lp in lam_primes)
    cfg = StepperConfig(cfg.scheme, cfg.dt, cfg.T, monitors)
    data = [_random_datum(rng, A.n, complex_data) for _ in range(trials)]
    stepper = _Stepper(A, cfg.scheme, cfg.dt)

    def run(k):
        return evolve(A, data[k], None, cfg, tol=tol, stepper=stepper)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(run, range(trials)))
    else:
        traces = [run(k) for k in range(trials)]

    violations = []
    worst: dict[str, float] = {}
    for k, tr in enumerate(traces):
        for v in tr.violations:
            violations.append({"trial": k, **v})
        for (p, lp), arr in tr.norms.items():
            key = f"p={_fmt(p)},lp={_fmt(lp)}"
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(arr[:-1] > 0, arr[1:] / arr[:-1], 0.0)
            worst[key] = max(worst.get(key, 0.0), float(ratios.max()))
    violations.sort(key=lambda v: (v["trial"], v["step"]))
    return {
        "trials": trials,
        "steps": cfg.steps,
        "scheme": cfg.scheme,
        "dt": cfg.dt,
        "violations": violations,
        "first_violation": violations[0] if violations else None,
        "max_step_ratio": worst,
        "certificates": contractivity_certificates(A, lam_primes),
        "m_matrix": A.is_m_matrix(),
    }


# }}}


# {{{ sectoriality


@dataclass
class SectorReport:
    eigenvalues: np.ndarray | None
    min_real: float
    theta: float | None
    bounds: dict[str, float]
    stable: dict[str, bool]
    rays: list[dict[str, Any]]
    passed: bool
    degraded: bool = False

    def as_dict(self) -> dict[str, Any]:
        eig = None
        if self.eigenvalues is not None:
            eig = [[float(e.real), float(e.imag)] for e in self.eigenvalues]
        return {
            "eigenvalues": eig,
            "min_real": self.min_real,
            "theta": self.theta,
            "bounds": self.bounds,
            "stable": self.stable,
            "rays": self.rays,
            "passed": self.passed,
            "degraded": self.degraded,
        }


def _resolvent_bound(Ad, D, mu_list):
    """max over mu of |mu| ||R|| and ||R|| + ||A R|| in the weighted 2-norm."""
    n = Ad.shape[0]
    I = np.eye(n)
    B = (D[:, None] * Ad) / D[None, :]
    best, samples = 0.0, []
    for mu in mu_list:
        try:
            R = np.linalg.inv(mu * I + B)
        except np.linalg.LinAlgError:
            return math.inf, samples
        nr = float(np.linalg.norm(R, 2))
        nar = float(np.linalg.norm(I - mu * R, 2))
        val = max(abs(mu) * nr, nr + nar)
        samples.append({"mu": [float(mu.real), float(mu.imag)], "bound": val})
        best = max(best, val)
    return best, samples


def sector_probe(
    A: DiscreteOperator,
    lam_prime: float,
    theta_list: Sequence[float] | None = None,
    samples: int = 12,
    *,
    require: float = 9 * math.pi / 16,
    stability: float = 0.10,
    max_dense: int = 2000,
) -> SectorReport:
    """Spectrum and sampled resolvent bounds on the boundary rays of sectors.

    For each :math:`\\theta` the rays :math:`\\arg\\mu = \\pm\\theta` are
    sampled at ``samples`` log-spaced radii spanning the spectrum; the bound
    :math:`\\mathcal{E}` is the max of :math:`|\\mu|\\,\\|(\\mu+A)^{-1}\\|` and
    :math:`\\|(\\mu+A)^{-1}\\| + \\|A(\\mu+A)^{-1}\\|` in the
    :math:`L_2^{\\lambda'}` operator norm. A sector passes if no eigenvalue
    of :math:`-A` lies in it, the bound is finite, and it moves by at most
    ``stability`` (relative) when the sample count doubles.
    """
    if theta_list is None:
        theta_list = [math.pi / 2 + k * math.pi / 16 for k in range(1, 7)]
    n = A.n
    if n > max_dense:
        return SectorReport(None, math.nan, None, {}, {}, [], False, degraded=True)
    Ad = A.matrix.toarray()
    eig = sla.eigvals(Ad)
    eig = eig[np.argsort(eig.real)]
    min_real = float(eig.real.min())
    D = np.sqrt(A.weights) * A.rho**lam_prime

    scale_hi = float(np.abs(eig).max())
    scale_lo = float(np.abs(eig).min())
    bounds, stable, rays = {}, {}, []
    best_theta = None
    for theta in theta_list:
        # -eig must stay outside the closed sector |arg mu| <= theta
        inside = np.abs(np.angle(-eig)) <= theta
        key = f"{theta:.6f}"

        def mus(k):
            r = np.geomspace(1e-2 * scale_lo, 1e2 * scale_hi, k)
            return np.concatenate([r * np.exp(1j * theta), r * np.exp(-1j * theta)])

        if np.any(inside):
            bounds[key], stable[key] = math.inf, False
            continue
        e1, s1 = _resolvent_bound(Ad, D, mus(samples))
        e2, _ = _resolvent_bound(Ad, D, mus(2 * samples))
        bounds[key] = e2
        stable[key] = bool(math.isfinite(e2) and abs(e2 - e1) <= stability * e2)
        rays.append({"theta": theta, "samples": s1})
        if stable[key]:
            best_theta = theta if best_theta is None else max(best_theta, theta)
    passed = bool(min_real > 0 and best_theta is not None and best_theta >= require - 1e-12)
    return SectorReport(eig, min_real, best_theta, bounds, stable, rays, passed)


# }}}


# {{{ stationary problem


def stationary_solve(A: DiscreteOperator, f: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve :math:`A u = f`; also return :math:`\\|u\\|_{2,2;\\lambda'-\\lambda}/\\|f\\|_{0,2;\\lambda'}`.

    ``lambda`` and ``lambda'`` are taken from the operator's spec.
    """
    u = resolvent_apply(A, 0.0, f)
    spec = A.spec
    lam, lp = (spec.lam, spec.lam_prime) if spec is not None else (0.0, 0.0)
    calc = A.calc
    num = weighted_sobolev_norm(A.expand(u), NormSpec(2.0, lp - lam, 2), calc)
    den = weighted_lp_norm(A.expand(f), NormSpec(2.0, lp, 0), calc)
    return u, num / den


# }}}
