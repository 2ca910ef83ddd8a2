"""Dual-computation oracle gate.

Every closed-form value the acceptance checks rely on is recomputed here by
an independent route (adaptive quadrature, direct Monte-Carlo, or the PDE
solver) and compared at a stated tolerance.  Any disagreement is a hard
failure: it means an oracle itself is wrong, and no downstream test can be
trusted until it is fixed.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import oracles
from .coefficients import builtin_coefficients
from .density import theorem_bound_rhs
from .errors import OracleMismatchError
from .fokker_planck import FPGrid, fp_solve
from .gaussian import GaussianQuadrature, gauss_expectation, ou_smooth

__all__ = ["OracleCheck", "oracle_suite"]


@dataclass(frozen=True)
class OracleCheck:
    name: str
    value: float
    recomputed: float
    tol: float

    @property
    def passed(self):
        return abs(self.value - self.recomputed) <= self.tol


def oracle_suite(mc_samples=10_000_000):
    """Compute every oracle twice; raise OracleMismatchError on disagreement.

    Returns the list of checks (all passed) so callers can persist or render
    them; acceptance tests consume the values through :mod:`flowlab.oracles`.
    """
    checks = []

    m1 = oracles.gaussian_abs_moment(1)
    m1_quad = oracles.scipy_gaussian_integral(abs)
    checks.append(OracleCheck("M1_abs_moment", m1, m1_quad, 1e-10))

    m2 = oracles.m2_exponential_moment(1)
    m2_quad = oracles.scipy_gaussian_integral(lambda x: math.exp((1 + abs(x)) ** 2 / 4.0))
    checks.append(OracleCheck("M2_exp_moment", m2, m2_quad, 1e-9))

    gq = GaussianQuadrature.gauss_hermite(1, 64)
    exp_quad = float(gauss_expectation(lambda x: np.exp(0.25 * x[:, 0] ** 2), gq))
    checks.append(
        OracleCheck("gauss_exp_quadratic", oracles.gaussian_exp_quadratic(0.25), exp_quad, 1e-8)
    )

    ou_val = float(ou_smooth(lambda p: p[:, 0] ** 2, math.log(2.0), np.array([2.0]), gq))
    checks.append(OracleCheck("ou_second_moment", 1.75, ou_val, 1e-10))

    lp_formula = oracles.translate_lp_norm(2.0, 0.25)
    lp_mc, lp_se = oracles.translate_lp_mc(2.0, 0.25, mc_samples)
    checks.append(OracleCheck("translate_L2_norm", lp_formula, lp_mc, 4.0 * lp_se))

    grid = FPGrid.gaussian(1, 8.0, 0.05)
    heat = fp_solve(builtin_coefficients("translate", d=1), grid, 0.0, 1.0, 1e-3)
    checks.append(
        OracleCheck("heat_kernel_variance", oracles.heat_variance(1.0), heat.grid.variance(),
                    0.01 * oracles.heat_variance(1.0))
    )

    bound_closed = oracles.translate_bound_rhs(2.0, 0.1)
    bound_quad = theorem_bound_rhs(builtin_coefficients("translate", d=1), 0.0, 0.1, 2.0, gq)
    checks.append(OracleCheck("translate_bound_rhs", bound_closed, bound_quad, 1e-6))

    failures = [c for c in checks if not c.passed]
    if failures:
        detail = "; ".join(
            f"{c.name}: {c.value!r} vs {c.recomputed!r} (tol {c.tol:g})" for c in failures
        )
        raise OracleMismatchError(f"oracle disagreement: {detail}")
    return checks
