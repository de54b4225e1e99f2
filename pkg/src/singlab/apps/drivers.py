"""End-to-end drivers: certification, evolution, probes and reports."""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from singlab.apps.config import (
    CoefficientModel,
    ProblemConfig,
    build_manifold,
    coefficient_model,
)
from singlab.geometry import (
    ConfigurationError,
    GeometryError,
    ModelManifold,
    UnsupportedParameterError,
    check_hlambda,
    h_witness,
)
from singlab.operators import (
    DiscreteOperator,
    HypothesisReport,
    OperatorSpec,
    ValidationError,
    assemble,
    check_ellipticity,
    check_regularity,
    hlambda_window,
    omega_bound,
    regularity_stable,
)
from singlab.semigroup import (
    EvolutionTrace,
    StepperConfig,
    _Stepper,
    contractivity_probe,
    evolve,
    linf_oracle,
    monitor_norm,
    sector_probe,
    stationary_solve,
)
from singlab.spaces import DiscreteCalculus

__all__ = [
    "CertificationError",
    "Problem",
    "RunReport",
    "build_problem",
    "run",
    "run_degenerate_domain",
    "run_heat_on_holes",
    "run_heston",
    "run_hypotheses",
]

PROBE_P = (1.0, 2.0, math.inf)


class CertificationError(RuntimeError):
    """A required hypothesis failed; evolution was not attempted."""

    def __init__(self, condition: str, report: HypothesisReport):
        super().__init__(f"certification failed at {condition}")
        self.condition = condition
        self.report = report


# {{{ problem assembly


@dataclass(eq=False)
class Problem:
    """A configuration realized on one grid level."""

    cfg: ProblemConfig
    manifold: ModelManifold
    calc: DiscreteCalculus
    model: CoefficientModel
    omega: float
    omega_info: dict[str, Any] = field(default_factory=dict)

    def spec(self, lam_prime: float = 0.0, t: float = 0.0, omega: float | None = None) -> OperatorSpec:
        return OperatorSpec(
            coeffs=self.model.coefficient_set(t),
            lam=self.cfg.lam,
            lam_prime=lam_prime,
            omega=self.omega if omega is None else omega,
            upwind=bool(self.cfg.operator.get("upwind", True)),
            name=self.cfg.operator["preset"],
        )

    def operator(self, lam_prime: float = 0.0, t: float = 0.0) -> DiscreteOperator:
        return assemble(self.spec(lam_prime, t), self.manifold, self.calc)


def _auto_omega(cfg: ProblemConfig, manifold, calc, model, C1: float) -> tuple[float, dict]:
    """Smallest certified compensation over the lambda' list plus a margin."""
    margin = float(cfg.operator.get("omega_margin", 0.1))
    worst, per = 0.0, {}
    for lp in cfg.lam_primes:
        spec = OperatorSpec(model.coefficient_set(), cfg.lam, lp, 0.0)
        b = omega_bound(spec, manifold, C1, calc)
        per[_key(lp)] = {k: b[k] for k in ("A3", "A4", "A5")}
        worst = max(worst, b["A3"], b["A4"], b["A5"])
    return worst + margin, {"per_lambda_prime": per, "margin": margin}


def build_problem(cfg: ProblemConfig, refine: int = 1, omega: float | None = None) -> Problem:
    manifold = build_manifold(cfg.geometry, refine)
    calc = DiscreteCalculus(manifold)
    model = coefficient_model(cfg, manifold)
    info: dict[str, Any] = {}
    if omega is None:
        om = cfg.operator.get("omega", 0.0)
        if om == "auto":
            Cs = check_ellipticity(
                OperatorSpec(model.coefficient_set(), cfg.lam), manifold, calc.rho.rho
            )
            if Cs > 0:
                omega, info = _auto_omega(cfg, manifold, calc, model, _C1(cfg))
            else:
                omega, info = 0.0, {"note": "no automatic omega without ellipticity"}
        else:
            omega = float(om)
    return Problem(cfg, manifold, calc, model, float(omega), info)


def _C1(cfg: ProblemConfig) -> float:
    return float(cfg.operator.get("C1", 1.99))


def _key(lp: float) -> str:
    return "inf" if math.isinf(lp) else f"{lp:g}"


# }}}


# {{{ hypotheses


def _regularity(cfg: ProblemConfig, prob: Problem, report: HypothesisReport) -> None:
    spec = prob.spec()
    coarse = check_regularity(spec, prob.manifold, prob.calc)
    report.regularity = {"coarse": coarse}
    finite = all(math.isfinite(v) for v in coarse.values())
    try:
        fine_prob = build_problem(cfg, refine=2, omega=prob.omega)
    except (ConfigurationError, GeometryError, UnsupportedParameterError, ValidationError) as exc:
        report.notes.append(f"A1 checked on a single level: {exc}")
        report.conditions["A1"] = finite
        return
    fine = check_regularity(fine_prob.spec(), fine_prob.manifold, fine_prob.calc)
    report.regularity["fine"] = fine
    report.conditions["A1"] = bool(finite and regularity_stable(coarse, fine, 0.1))


def run_hypotheses(cfg: ProblemConfig, problem: Problem | None = None) -> HypothesisReport:
    """Run every applicable checker without evolving.

    The ``omega`` route requires A1, A2 and, for each lambda', the
    compensation to exceed the A3, A4 and A5 thresholds. The ``hlambda``
    route requires A1, A2, H1, H2 and H3.
    """
    prob = build_problem(cfg) if problem is None else problem
    report = HypothesisReport()
    report.omega["value"] = prob.omega
    report.omega.update(prob.omega_info)
    _regularity(cfg, prob, report)

    spec0 = prob.spec()
    Cs = check_ellipticity(spec0, prob.manifold, prob.calc.rho.rho)
    report.C_sigma = Cs
    report.conditions["A2"] = bool(Cs > 0)

    if cfg.route == "omega":
        _omega_route(cfg, prob, report, Cs)
    else:
        _hlambda_route(cfg, prob, report)
    return report


def _omega_route(cfg, prob: Problem, report: HypothesisReport, Cs: float) -> None:
    names = ("A3", "A4", "A5")
    if Cs <= 0:
        for nm in names:
            report.conditions[nm] = False
        report.notes.append("A3-A5 need a positive ellipticity constant")
        return
    ok = dict.fromkeys(names, True)
    thresholds: dict[str, dict[str, float]] = {}
    for lp in cfg.lam_primes:
        b = omega_bound(prob.spec(lp), prob.manifold, _C1(cfg), prob.calc, Cs)
        thresholds[_key(lp)] = {nm: b[nm] for nm in names}
        for nm in names:
            passed = prob.omega > b[nm]
            if not passed and ok[nm]:
                report.active_nodes[nm] = b[f"{nm}_node"]
            ok[nm] = ok[nm] and passed
    report.omega["thresholds"] = thresholds
    report.omega["C1"] = _C1(cfg)
    for nm in names:
        report.conditions[nm] = ok[nm]


def _hlambda_route(cfg, prob: Problem, report: HypothesisReport) -> None:
    lam = cfg.lam
    man = prob.manifold
    region = man.region & man.grid.interior
    h = h_witness(man, lam, 1.0, prob.calc.rho)
    rep = check_hlambda(man, prob.calc.rho, h, lam, region)
    report.hlambda = rep.as_dict()
    report.conditions["H1"] = bool(rep.ok)
    if not rep.ok:
        report.conditions["H2"] = False
        report.conditions["H3"] = False
        if rep.violating_node is not None:
            report.active_nodes["H1"] = man.grid.coords[rep.violating_node].tolist()
        return
    report.conditions["H2"] = bool(rep.c is not None and math.isfinite(rep.c))
    win = hlambda_window(prob.spec(), man, list(cfg.lam_primes), calc=prob.calc)
    report.window = win.as_dict()
    report.conditions["H3"] = bool(win.ok)
    if not win.ok:
        report.notes.append(win.message)


# }}}


# {{{ reports


@dataclass
class RunReport:
    """Everything a driver run produced.

    ``flags`` holds every pass/fail verdict under the name of the check that
    produced it; ``passed`` is their conjunction.
    """

    name: str
    application: str
    config: dict[str, Any]
    hypotheses: dict[str, Any]
    evolution: dict[str, Any] = field(default_factory=dict)
    probes: dict[str, Any] = field(default_factory=dict)
    sector: dict[str, Any] | None = None
    mms: dict[str, Any] | None = None
    sensitivity: dict[str, Any] | None = None
    flags: dict[str, bool] = field(default_factory=dict)
    timing: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    trace: EvolutionTrace | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    @property
    def first_failure(self) -> str | None:
        return next((k for k, v in self.flags.items() if not v), None)

    def as_dict(self) -> dict[str, Any]:
        return _jsonable({
            "name": self.name,
            "application": self.application,
            "passed": self.passed,
            "first_failure": self.first_failure,
            "flags": self.flags,
            "hypotheses": self.hypotheses,
            "evolution": self.evolution,
            "probes": self.probes,
            "sector": self.sector,
            "mms": self.mms,
            "sensitivity": self.sensitivity,
            "timing": self.timing,
            "notes": self.notes,
            "config": self.config,
        })

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / f"{self.name}.report.json"}
        with open(paths["report"], "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)
        if self.trace is not None:
            paths["trace"] = out / f"{self.name}.trace.csv"
            self.trace.to_csv(paths["trace"])
        return paths

    def summary_line(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({self.first_failure})"
        return f"{self.name}: {status}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


# }}}


# {{{ evolution and probes


def _bump_params(man: ModelManifold) -> tuple[np.ndarray, np.ndarray]:
    X = man.grid.coords[man.grid.interior]
    lo, hi = X.min(axis=0), X.max(axis=0)
    center = 0.5 * (lo + hi)
    width = 0.25 * np.maximum(hi - lo, 1e-12)
    for k, per in enumerate(man.grid.periodic):
        if per:
            width[k] = math.inf
    return center, width


def initial_datum(prob: Problem, kind: str, rng: np.random.Generator,
                  bump: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Initial values on the interior nodes."""
    man = prob.manifold
    n = man.grid.interior_nodes.size
    if kind == "zero":
        return np.zeros(n)
    if kind == "random":
        return rng.standard_normal(n)
    center, width = _bump_params(man) if bump is None else bump
    X = man.grid.coords[man.grid.interior]
    z = ((X - center) / width) ** 2
    return np.exp(-np.sum(z, axis=1))


def _forcing(prob: Problem, kind: str):
    if kind == "zero":
        return None
    if kind == "constant":
        f = np.ones(prob.manifold.grid.interior_nodes.size)
        return lambda t: f
    raise ConfigurationError(f"forcing {kind!r} is only available in MMS runs")


def evolve_problem(prob: Problem, u0: np.ndarray, *, snapshot_every: int | None = None) -> EvolutionTrace:
    """March the configured problem; time-dependent data are frozen per step."""
    rc = prob.cfg.run
    cfg = StepperConfig(rc.scheme, rc.dt, rc.T, rc.monitors)
    forcing = _forcing(prob, rc.forcing)
    if not prob.model.time_dependent:
        return evolve(prob.operator(), u0, forcing, cfg, snapshot_every=snapshot_every)

    # Rothe-style: coefficients sampled at the start of each step
    times = cfg.dt * np.arange(cfg.steps + 1)
    A0 = prob.operator(0.0, 0.0)
    norms = {m: np.empty(cfg.steps + 1) for m in cfg.monitors}
    u = np.asarray(u0).copy()
    for (p, lp), arr in norms.items():
        arr[0] = monitor_norm(A0, u, p, lp)
    trace = EvolutionTrace(times=times, norms=norms)
    for k in range(1, cfg.steps + 1):
        A = prob.operator(0.0, times[k - 1])
        step = _Stepper(A, cfg.scheme, cfg.dt)
        fo = forcing(times[k - 1]) if forcing else None
        fn = forcing(times[k]) if forcing else None
        u = step(u, fo, fn)
        for (p, lp), arr in norms.items():
            arr[k] = monitor_norm(A, u, p, lp)
            if arr[k] > arr[k - 1] * (1 + 1e-10):
                trace.violations.append({"p": p, "lam_prime": lp, "step": k,
                                         "ratio": arr[k] / arr[k - 1]})
    trace.final = u
    return trace


def _evolution_summary(trace: EvolutionTrace) -> dict[str, Any]:
    out = {
        "steps": int(trace.times.size - 1),
        "T": float(trace.times[-1]),
        "violations": trace.violations[:20],
        "n_violations": len(trace.violations),
        "norms": {},
    }
    for (p, lp), arr in trace.norms.items():
        out["norms"][f"p={_key(p)},lp={_key(lp)}"] = {"initial": float(arr[0]), "final": float(arr[-1])}
    return out


def linf_oracle_check(A: DiscreteOperator, lam_primes, dt: float, size: int = 10) -> dict[str, Any]:
    """Brute-force inverse on the ``size`` nodes closest to the singular set.

    A principal submatrix of a Z-matrix with nonnegative row sums keeps both
    properties, so its implicit-Euler map must be nonnegative with
    infinity norm at most one whenever the full certificate holds.
    """
    nodes = np.sort(np.argsort(A.rho)[: min(size, A.n)])
    out: dict[str, Any] = {"nodes": nodes.tolist()}
    ok = True
    M = A.matrix.tocsr()
    for lp in lam_primes:
        r = A.rho**lp
        S = (sp.diags(r) @ M @ sp.diags(1.0 / r)).tocsr()[nodes][:, nodes]
        S = S.toarray()
        if np.iscomplexobj(S):
            if np.any(S.imag):
                out[_key(lp)] = {"skipped": "complex matrix"}
                continue
            S = S.real
        res = linf_oracle(S, dt)
        res["passed"] = bool(res["nonnegative_inverse"] and res["inf_norm"] <= 1 + 1e-12)
        ok = ok and res["passed"]
        out[_key(lp)] = res
    out["passed"] = ok
    return out


def run_probes(prob: Problem, rng: np.random.Generator, threads: int = 1) -> tuple[dict, dict | None, dict]:
    """Contractivity, sector and stationary probes requested by the run block."""
    rc = prob.cfg.run
    lps = prob.cfg.lam_primes
    A = prob.operator()
    probes: dict[str, Any] = {}
    flags: dict[str, bool] = {}
    sector = None
    if "contractivity" in rc.probes:
        cfg = StepperConfig("implicit-euler", rc.probe_dt, rc.probe_dt * rc.probe_steps,
                            ((2.0, 0.0),))
        res = contractivity_probe(A, rc.trials, PROBE_P, lps, cfg, rng=rng, threads=threads)
        res["violations"] = res["violations"][:20]
        res["oracle"] = linf_oracle_check(A, lps, rc.probe_dt)
        probes["contractivity"] = res
        flags["contractivity"] = res["first_violation"] is None
        flags["linf_oracle"] = res["oracle"]["passed"]
    if "sector" in rc.probes:
        sector = {}
        ok = True
        for lp in lps:
            rep = sector_probe(A, lp, samples=rc.sector_samples)
            d = rep.as_dict()
            d.pop("rays")
            sector[_key(lp)] = d
            ok = ok and rep.passed
        flags["sector"] = ok
    if "stationary" in rc.probes:
        f = np.ones(A.n)
        _, ratio = stationary_solve(A, f)
        probes["stationary"] = {"ratio": ratio}
    return probes, sector, flags


# }}}


# {{{ drivers


def _start(cfg: ProblemConfig) -> dict[str, Any]:
    return {"started": time.time(), "python": platform.python_version(), "host": platform.node()}


def _finish(timing: dict[str, Any]) -> None:
    timing["wall_seconds"] = time.time() - timing.pop("started")


def _require(report: HypothesisReport, names) -> None:
    for nm in names:
        if not report.conditions.get(nm, False):
            raise CertificationError(nm, report)


def _full_run(cfg: ProblemConfig, prob: Problem, hyp: HypothesisReport, required,
              rng, threads, timing, notes=None) -> RunReport:
    _require(hyp, required)
    report = RunReport(cfg.name, cfg.application, cfg.raw, hyp.as_dict(), timing=timing,
                       notes=list(notes or []))
    for nm in required:
        report.flags[nm] = hyp.conditions[nm]
    t0 = time.time()
    u0 = initial_datum(prob, cfg.run.initial, rng)
    trace = evolve_problem(prob, u0)
    report.trace = trace
    report.evolution = _evolution_summary(trace)
    report.flags["evolution"] = not trace.violations
    timing["evolve_seconds"] = time.time() - t0
    t0 = time.time()
    probes, sector, flags = run_probes(prob, rng, threads)
    report.probes, report.sector = probes, sector
    report.flags.update(flags)
    timing["probe_seconds"] = time.time() - t0
    return report


def _route_conditions(cfg: ProblemConfig) -> tuple[str, ...]:
    if cfg.route == "omega":
        return ("A1", "A2", "A3", "A4", "A5")
    return ("A1", "A2", "H1", "H2", "H3")


def run_heat_on_holes(cfg: ProblemConfig, *, seed: int = 0, threads: int = 1) -> RunReport:
    """Heat flow on a domain with holes or punctures.

    Requires A1, A2 and the witness H1 on the collars; the (H2)/(H3) window
    is computed and reported without being required.
    """
    if cfg.application != "heat":
        raise ConfigurationError("run_heat_on_holes needs application 'heat'")
    timing = _start(cfg)
    rng = np.random.default_rng(seed)
    prob = build_problem(cfg)
    hyp = run_hypotheses(cfg, prob)
    required = ("A1", "A2", "H1") if cfg.route == "hlambda" else _route_conditions(cfg)
    notes = []
    if cfg.route == "hlambda" and not hyp.conditions.get("H3", False):
        notes.append("the (H2)/(H3) window is empty: the run is not certified for contractivity")
    report = _full_run(cfg, prob, hyp, required, rng, threads, timing, notes)
    report.flags["certified"] = hyp.passed
    _finish(timing)
    return report


def _equivalence_constants(prob: Problem) -> tuple[float, float]:
    """Range of ``a^(1/(2 - lam)) / d`` on collar nodes (of ``a`` itself for lam = 2)."""
    man = prob.manifold
    nodes = man.region & man.grid.interior
    K = prob.model.coefficient_set().K
    a = K[:, 0, 0] * man.metric.g[:, 0]
    d = man.rho_model.distance(man.grid.coords)
    lam = prob.cfg.lam
    if lam == 2.0:
        v = a[nodes]
    else:
        v = a[nodes] ** (1.0 / (2.0 - lam)) / d[nodes]
    return float(v.min()), float(v.max())


def run_degenerate_domain(cfg: ProblemConfig, *, seed: int = 0, threads: int = 1) -> RunReport:
    """Boundary-degenerate problem on an interval or disk with ``rho`` the blended distance."""
    if cfg.application != "degenerate":
        raise ConfigurationError("run_degenerate_domain needs application 'degenerate'")
    timing = _start(cfg)
    rng = np.random.default_rng(seed)
    prob = build_problem(cfg)
    coarse = _equivalence_constants(prob)
    fine = _equivalence_constants(build_problem(cfg, refine=2, omega=prob.omega))
    drift = max(abs(f - c) / abs(c) for c, f in zip(coarse, fine))
    if not (coarse[0] > 0 and drift <= 0.1):
        raise ConfigurationError(
            f"a^(1/(2-lambda)) is not equivalent to the boundary distance: constants "
            f"{coarse} -> {fine} under refinement"
        )
    hyp = run_hypotheses(cfg, prob)
    report = _full_run(cfg, prob, hyp, _route_conditions(cfg), rng, threads, timing)
    report.probes["equivalence"] = {"coarse": coarse, "fine": fine, "relative_change": drift}
    if prob.model.time_dependent:
        report.notes.append("coefficients frozen at the start of each step")
    _finish(timing)
    return report


def _heston_variant(cfg: ProblemConfig, **geom) -> ProblemConfig:
    g = dict(cfg.geometry)
    g.update(geom)
    return replace(cfg, geometry=g)


def _strip_field(prob: Problem, u_int: np.ndarray) -> RegularGridInterpolator:
    man = prob.manifold
    full = np.zeros(man.grid.n_nodes)
    full[man.grid.interior] = u_int
    x, y = man.grid.axes
    return RegularGridInterpolator((x, y), full.reshape(x.size, y.size), method="cubic")


def heston_sensitivity(cfg: ProblemConfig, prob: Problem, u_final: np.ndarray,
                       rng: np.random.Generator) -> dict[str, Any]:
    """Change of the final solution under truncation changes.

    Compared on the monitored region ``|x| <= X/2``, ``Y/4 <= y <= 3Y/4``
    of the base grid; variants keep the base compensation and initial bump.
    """
    g = cfg.geometry
    X, Y, eps = g["X"], g["Y"], g["eps"]
    variants = {"X_doubled": {"X": 2 * X, "n_x": 2 * (g["n_x"] - 1) + 1}}
    if 2 * Y <= 1:
        variants["Y_doubled"] = {"Y": 2 * Y, "n_y": 2 * (g["n_y"] - 1) + 1}
    variants["eps_halved"] = {"eps": eps / 2}
    man = prob.manifold
    P = man.grid.coords
    region = (np.abs(P[:, 0]) <= X / 2) & (P[:, 1] >= Y / 4) & (P[:, 1] <= 3 * Y / 4)
    base = np.zeros(man.grid.n_nodes)
    base[man.grid.interior] = u_final
    scale = float(np.abs(base[region]).max())
    bump = _bump_params(man)
    out: dict[str, Any] = {"region": {"x": [-X / 2, X / 2], "y": [Y / 4, 3 * Y / 4]}}
    ok = True
    for name, change in variants.items():
        vcfg = _heston_variant(cfg, **change)
        try:
            vprob = build_problem(vcfg, omega=prob.omega)
        except (ConfigurationError, GeometryError) as exc:
            out[name] = {"skipped": str(exc)}
            continue
        u0 = initial_datum(vprob, cfg.run.initial, rng, bump=bump)
        tr = evolve_problem(vprob, u0)
        interp = _strip_field(vprob, tr.final)
        diff = float(np.abs(interp(P[region]) - base[region]).max()) / scale
        out[name] = {"relative_change": diff, "passed": diff < 0.01}
        ok = ok and diff < 0.01
    out["passed"] = ok
    return out


def run_heston(cfg: ProblemConfig, *, seed: int = 0, threads: int = 1) -> RunReport:
    """Generalized Heston operator on a truncated strip."""
    if cfg.operator["preset"] != "heston":
        raise ConfigurationError("run_heston needs the heston preset")
    timing = _start(cfg)
    rng = np.random.default_rng(seed)
    prob = build_problem(cfg)
    hyp = run_hypotheses(cfg, prob)
    report = _full_run(cfg, prob, hyp, _route_conditions(cfg), rng, threads, timing,
                       [f"lambda = 2 - alpha = {cfg.lam:g}"])
    if "sensitivity" in cfg.run.probes:
        t0 = time.time()
        report.sensitivity = heston_sensitivity(cfg, prob, report.trace.final, rng)
        report.flags["sensitivity"] = report.sensitivity["passed"]
        timing["sensitivity_seconds"] = time.time() - t0
    _finish(timing)
    return report


def run(cfg: ProblemConfig, *, seed: int = 0, threads: int = 1) -> RunReport:
    """Dispatch on the configured application."""
    if cfg.operator["preset"] == "heston":
        return run_heston(cfg, seed=seed, threads=threads)
    if cfg.application == "heat":
        return run_heat_on_holes(cfg, seed=seed, threads=threads)
    if cfg.application == "degenerate":
        return run_degenerate_domain(cfg, seed=seed, threads=threads)
    timing = _start(cfg)
    rng = np.random.default_rng(seed)
    prob = build_problem(cfg)
    hyp = run_hypotheses(cfg, prob)
    report = _full_run(cfg, prob, hyp, _route_conditions(cfg), rng, threads, timing)
    _finish(timing)
    return report


# }}}
