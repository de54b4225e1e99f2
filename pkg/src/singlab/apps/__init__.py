"""Application drivers, manufactured-solution studies and the ``sp`` CLI."""

from singlab.apps.config import (
    CoefficientModel,
    ProblemConfig,
    RunConfig,
    build_manifold,
    coefficient_model,
    load_config,
    validate_config,
)
from singlab.apps.drivers import (
    CertificationError,
    Problem,
    RunReport,
    build_problem,
    run,
    run_degenerate_domain,
    run_heat_on_holes,
    run_heston,
    run_hypotheses,
)
from singlab.apps.mms import MMSTable, run_mms

__all__ = [
    "CertificationError",
    "CoefficientModel",
    "MMSTable",
    "Problem",
    "ProblemConfig",
    "RunConfig",
    "RunReport",
    "build_manifold",
    "build_problem",
    "coefficient_model",
    "load_config",
    "run",
    "run_degenerate_domain",
    "run_heat_on_holes",
    "run_heston",
    "run_hypotheses",
    "run_mms",
    "validate_config",
]
