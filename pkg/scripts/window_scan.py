"""Scan the witness window over lambda on the cusp, the annulus and the puncture.

Prints the pinching constants of the witness and, when a window exists,
its endpoints and the explicit constants (C0, omega, C1).

    python3 scripts/window_scan.py
"""

import argparse

import numpy as np

from singlab.geometry import (
    UnsupportedParameterError,
    build_cusp_interval,
    build_domain_with_holes,
    build_punctured_domain,
    check_hlambda,
    h_witness,
)
from singlab.operators import OperatorSpec, hlambda_window, laplace_beltrami
from singlab.spaces import DiscreteCalculus

GEOMETRIES = {
    "cusp": lambda: build_cusp_interval("linear", 64, 0.0625, "auto"),
    "annulus": lambda: build_domain_with_holes({"disk": 1.0}, [((0, 0), 0.5)], (16, 24), 0.1, 0.025, "auto"),
    "puncture": lambda: build_punctured_domain([(0.0, 0.0)], 0.05, 31),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 0.5, 1.5, 2.0, 3.0])
    ap.add_argument("--lambda-prime", type=float, nargs="+", default=[0.0])
    args = ap.parse_args()

    for name, make in GEOMETRIES.items():
        man = make()
        calc = DiscreteCalculus(man)
        region = man.region & man.grid.interior
        for lam in args.lambdas:
            try:
                h = h_witness(man, lam, 1.0, calc.rho)
            except UnsupportedParameterError as exc:
                print(f"{name:<9} lam={lam:<4g} excluded: {exc}")
                continue
            rep = check_hlambda(man, calc.rho, h, lam, region)
            spec = OperatorSpec(laplace_beltrami(man, lam, calc.rho.rho), lam)
            win = hlambda_window(spec, man, args.lambda_prime, calc=calc)
            line = f"{name:<9} lam={lam:<4g} c={rep.c:.4f} M={rep.M:.4f} "
            if win.ok:
                iv = {k: np.round(v, 4).tolist() if v else None for k, v in win.intervals.items()}
                line += f"window {iv} C0={win.C0:.3f} omega={win.omega:.3g} C1={win.C1:.3f}"
            else:
                line += "no window"
            print(line)


if __name__ == "__main__":
    main()
