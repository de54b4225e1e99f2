"""Problem configuration: schema validation, geometry and coefficient builders.

A configuration is a JSON document with ``geometry``, ``operator``, ``run``
and ``output`` blocks; ``schema/config.schema.json`` is the reference. The
coefficient model is kept as a function of coordinates so that manufactured
forcings can be evaluated off the grid.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from singlab.geometry import (
    ConfigurationError,
    ModelManifold,
    UnsupportedParameterError,
    build_bounded_domain,
    build_cone,
    build_cusp_interval,
    build_domain_with_holes,
    build_heston_strip,
    build_pipe,
    build_punctured_domain,
    build_segment,
)
from singlab.operators import CoefficientSet, ValidationError

__all__ = [
    "CoefficientModel",
    "ProblemConfig",
    "RunConfig",
    "build_manifold",
    "coefficient_model",
    "load_config",
    "load_schema",
    "refine_geometry",
    "validate_config",
]


def load_schema() -> dict[str, Any]:
    text = resources.files("singlab.apps").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def validate_config(raw: dict[str, Any]) -> None:
    """Raise :class:`ConfigurationError` listing the first schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {err.message}")


# {{{ config dataclasses


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "implicit-euler"
    dt: float = 0.01
    T: float = 1.0
    monitors: tuple[tuple[float, float], ...] = ((2.0, -1.0), (2.0, 0.0), (2.0, 1.0))
    probes: tuple[str, ...] = ("contractivity", "sector")
    trials: int = 20
    probe_steps: int = 200
    probe_dt: float = 0.01
    sector_samples: int = 12
    initial: str = "bump"
    forcing: str = "zero"
    mms: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict[str, Any] | None) -> RunConfig:
        raw = dict(raw or {})
        if "monitors" in raw:
            raw["monitors"] = tuple(
                (math.inf if p == "inf" else float(p), float(lp)) for p, lp in raw["monitors"]
            )
        if "probes" in raw:
            raw["probes"] = tuple(raw["probes"])
        return cls(**raw)


@dataclass(frozen=True)
class ProblemConfig:
    """A validated problem description.

    ``geometry`` and ``operator`` stay plain dictionaries in schema form;
    ``base_dir`` resolves relative paths of tabulated data.
    """

    name: str
    application: str
    geometry: dict[str, Any]
    operator: dict[str, Any]
    run: RunConfig = field(default_factory=RunConfig)
    output: dict[str, Any] = field(default_factory=dict)
    description: str = ""
    base_dir: Path = Path(".")
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        op = self.operator
        lam = float(op["lambda"])
        if op["preset"] == "heston":
            hp = op.get("heston")
            if hp is None:
                raise ConfigurationError("the heston preset needs a 'heston' block")
            alpha = float(hp["alpha"])
            if alpha == 1.0:
                raise UnsupportedParameterError(
                    "alpha = 1 is the classical Heston operator, whose degeneracy is not "
                    "covered here; use alpha in (-inf, 1) or (1, 2]"
                )
            if alpha > 2.0:
                raise ConfigurationError(f"alpha must not exceed 2: {alpha}")
            if not float(hp["sigma"]) > 0:
                raise ConfigurationError("volatility of variance sigma must be positive")
            if not -1.0 < float(hp["correlation"]) < 1.0:
                raise ConfigurationError("correlation must lie in (-1, 1)")
            if not math.isclose(lam, 2.0 - alpha, abs_tol=1e-12):
                raise ConfigurationError(f"heston needs lambda = 2 - alpha = {2 - alpha}, got {lam}")
            if self.geometry["kind"] != "heston_strip":
                raise ConfigurationError("the heston preset needs a heston_strip geometry")
        if self.application == "degenerate":
            if lam < 0 or lam == 1.0:
                raise UnsupportedParameterError(
                    f"degenerate domains need lambda in [0, 1) or (1, inf): {lam}"
                )
            if self.geometry["kind"] != "bounded_domain":
                raise ConfigurationError("degenerate runs need a bounded_domain geometry")
        if self.application == "heat":
            if self.geometry["kind"] not in ("domain_with_holes", "punctured_domain"):
                raise ConfigurationError("heat runs need domain_with_holes or punctured_domain")
            if self.geometry["kind"] == "punctured_domain" and lam == 2.0:
                raise UnsupportedParameterError(
                    "lambda = m = 2 on a punctured plane has no witness "
                    "(the sign of m - lambda vanishes); need lambda >= 0 with lambda != m"
                )
        if op.get("route") == "hlambda" and lam == 1.0:
            raise UnsupportedParameterError("lambda = 1 is excluded on the witness route")

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: str | Path = ".") -> ProblemConfig:
        validate_config(raw)
        return cls(
            name=raw["name"],
            application=raw["application"],
            geometry=copy.deepcopy(raw["geometry"]),
            operator=copy.deepcopy(raw["operator"]),
            run=RunConfig.from_dict(raw.get("run")),
            output=dict(raw.get("output", {})),
            description=raw.get("description", ""),
            base_dir=Path(base_dir),
            raw=copy.deepcopy(raw),
        )

    @property
    def lam(self) -> float:
        return float(self.operator["lambda"])

    @property
    def lam_primes(self) -> tuple[float, ...]:
        lp = self.operator.get("lambda_prime", [-1.0, 0.0, 1.0])
        return (float(lp),) if isinstance(lp, (int, float)) else tuple(map(float, lp))

    @property
    def route(self) -> str:
        return self.operator.get("route", "omega")


def load_config(path: str | Path) -> ProblemConfig:
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    return ProblemConfig.from_dict(raw, base_dir=path.parent)


# }}}


# {{{ geometry


def _double(n: int, factor: int) -> int:
    return factor * (n - 1) + 1


def refine_geometry(geom: dict[str, Any], factor: int = 2) -> dict[str, Any]:
    """Return the geometry block with every cell split ``factor`` times.

    Numeric grading ratios are kept, so successive levels sample nearly the
    same smooth node map (base nodes move by a small fraction of the local
    spacing); periodic axes multiply their node count.
    """
    if factor == 1:
        return copy.deepcopy(geom)
    g = copy.deepcopy(geom)
    kind = g["kind"]
    if kind in ("cusp_interval", "punctured_domain", "bounded_domain", "segment"):
        g["n"] = _double(g["n"], factor)
    elif kind in ("pipe", "cone"):
        g["n_t"] = _double(g["n_t"], factor)
        g["n_theta"] *= factor
    elif kind == "heston_strip":
        g["n_x"] = _double(g["n_x"], factor)
        g["n_y"] = _double(g["n_y"], factor)
    elif kind == "domain_with_holes":
        n = g["n"]
        if isinstance(n, int):
            g["n"] = _double(n, factor)
        else:
            g["n"] = [_double(n[0], factor), n[1] * factor]
    else:
        raise ConfigurationError(f"unknown geometry kind {kind!r}")
    return g


def build_manifold(geom: dict[str, Any], refine: int = 1) -> ModelManifold:
    """Construct the manifold described by a geometry block."""
    g = refine_geometry(geom, refine)
    kind = g["kind"]
    grading = g.get("grading", 1.0)
    if kind == "cusp_interval":
        return build_cusp_interval(g["R"], g["n"], g["eps"], grading)
    if kind == "pipe":
        return build_pipe(g["R"], g["n_t"], g["n_theta"], g["eps"], grading)
    if kind == "cone":
        return build_cone(g["n_t"], g["n_theta"], g["eps"], grading)
    if kind == "heston_strip":
        return build_heston_strip(g["X"], g["Y"], g["eps"], g["n_x"], g["n_y"], grading)
    if kind == "domain_with_holes":
        holes = [(h["center"], h["radius"]) for h in g["holes"]]
        n = g["n"] if isinstance(g["n"], int) else tuple(g["n"])
        return build_domain_with_holes(g["outer"], holes, n, g["r"], g.get("eps"), grading)
    if kind == "punctured_domain":
        return build_punctured_domain(g["points"], g["eps"], g["n"], g.get("r", 0.2))
    if kind == "bounded_domain":
        return build_bounded_domain(g["shape"], g["eps"], g["n"], g.get("r", 0.1), grading)
    if kind == "segment":
        return build_segment(g["n"], g.get("length", 1.0))
    raise ConfigurationError(f"unknown geometry kind {kind!r}")


# }}}


# {{{ coefficients


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def _pad(v, m: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(m)
    out[: min(m, v.size)] = v[:m]
    return out


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """Coefficients of one operator block as functions of ``(X, t)``.

    ``evaluate`` returns ``(K, a1, a0)`` at arbitrary coordinates ``X``;
    ``coefficient_set`` samples them on the manifold's nodes. Tabulated
    data only exist on the nodes of the original grid.
    """

    manifold: ModelManifold
    preset: str
    lam: float
    scale: float = 1.0
    nondivergence: bool = False
    drift: dict[str, Any] = field(default_factory=lambda: {"kind": "zero"})
    potential: dict[str, Any] = field(default_factory=lambda: {"kind": "zero"})
    heston: dict[str, Any] | None = None
    amplitude: float = 0.0
    frequency: float = 0.0
    holder_s: float | None = None
    table: dict[str, np.ndarray] | None = None

    @property
    def time_dependent(self) -> bool:
        return self.amplitude != 0.0

    def time_factor(self, t: float) -> float:
        return 1.0 + self.amplitude * math.sin(self.frequency * t)

    def evaluate(self, X: np.ndarray, t: float = 0.0):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.preset == "tabulated":
            raise UnsupportedParameterError("tabulated coefficients exist only on the grid")
        n, m = X.shape
        rho, dcov, _ = self.manifold.rho_model.evaluate(X)
        g = self.manifold.metric_at(X)
        ginv = 1.0 / g
        K = np.zeros((n, m, m))
        a1 = np.zeros((n, m), dtype=complex)
        a0 = np.zeros(n, dtype=complex)
        s = self.time_factor(t)
        lam = self.lam

        if self.preset == "heston":
            hp = self.heston
            y = X[:, 1]
            alpha = float(hp["alpha"])
            sig, cor = float(hp["sigma"]), float(hp["correlation"])
            base = 0.5 * np.array([[1.0, cor * sig], [cor * sig, sig * sig]])
            K = s * (y**alpha)[:, None, None] * base[None, :, :]
            b0 = _pad(hp.get("b0", [0.0, 0.0]), 2)
            b1 = _pad(hp.get("b1", [0.0, 0.0]), 2)
            a1 = (y ** (alpha - 1))[:, None] * (b0[None, :] + y[:, None] * b1[None, :])
            a1 = a1.astype(complex)
            c = hp.get("c0", 0.0) + hp.get("c1", 0.0) * y + hp.get("c2", 0.0) * y * y
            a0 = (y ** (alpha - 2) * c).astype(complex)
        else:
            a = s * self.scale * rho ** (2.0 - lam)
            K[:, range(m), range(m)] = a[:, None] * ginv
            if self.nondivergence:
                # -a Lap u = -div(a grad u) + (grad a | grad u)
                da = s * self.scale * (2.0 - lam) * rho ** (1.0 - lam)
                a1 = a1 + (da[:, None] * dcov * ginv)

        kind = self.drift.get("kind", "zero")
        if kind == "constant":
            a1 = a1 + _pad(self.drift["vector"], m)[None, :]
        elif kind == "rho-power":
            # unit-length frame vectors so that |a1|_g = rho^(1 - lam) |v|
            v = _pad(self.drift["vector"], m)
            a1 = a1 + (rho ** (1.0 - lam))[:, None] * v[None, :] / np.sqrt(g)

        kind = self.potential.get("kind", "zero")
        if kind == "constant":
            a0 = a0 + _complex(self.potential["value"])
        elif kind == "rho-power":
            a0 = a0 + _complex(self.potential["value"]) * rho ** (-lam)
        return K, a1, a0

    def coefficient_set(self, t: float = 0.0) -> CoefficientSet:
        if self.preset == "tabulated":
            tab = self.table
            s = self.time_factor(t)
            return CoefficientSet(K=s * tab["K"], a1=tab["a1"], a0=tab["a0"], holder_s=self.holder_s)
        K, a1, a0 = self.evaluate(self.manifold.grid.coords, t)
        if not np.any(a1.imag):
            a1 = a1.real
        if not np.any(a0.imag):
            a0 = a0.real
        return CoefficientSet(K=K, a1=a1, a0=a0, holder_s=self.holder_s)


def _load_table(op: dict[str, Any], manifold: ModelManifold, base_dir: Path) -> dict[str, np.ndarray]:
    tab = op.get("tabulated")
    if tab is None:
        raise ConfigurationError("the tabulated preset needs a 'tabulated' block")
    n, m = manifold.grid.n_nodes, manifold.dim
    K = np.load(base_dir / tab["K"])
    if K.shape == (n,):
        K = K[:, None, None] * np.eye(m)[None] / manifold.metric.g[:, :, None]
    if K.shape != (n, m, m):
        raise ValidationError(f"tabulated K has shape {K.shape}, expected {(n, m, m)} or {(n,)}")
    a1 = np.load(base_dir / tab["a1"]) if "a1" in tab else np.zeros((n, m))
    a0 = np.load(base_dir / tab["a0"]) if "a0" in tab else np.zeros(n)
    if a1.shape != (n, m) or a0.shape != (n,):
        raise ValidationError("tabulated a1/a0 do not match the grid")
    return {"K": K, "a1": a1, "a0": a0}


def coefficient_model(cfg: ProblemConfig, manifold: ModelManifold) -> CoefficientModel:
    op = cfg.operator
    td = op.get("time_dependence", {})
    preset = op["preset"]
    table = _load_table(op, manifold, cfg.base_dir) if preset == "tabulated" else None
    return CoefficientModel(
        manifold=manifold,
        preset=preset,
        lam=cfg.lam,
        scale=float(op.get("scale", 1.0)),
        nondivergence=bool(op.get("nondivergence", False)),
        drift=op.get("drift", {"kind": "zero"}),
        potential=op.get("potential", {"kind": "zero"}),
        heston=op.get("heston"),
        amplitude=float(td.get("amplitude", 0.0)),
        frequency=float(td.get("frequency", 0.0)),
        holder_s=td.get("holder_s"),
        table=table,
    )


# }}}
