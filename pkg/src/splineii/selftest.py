"""Fast built-in invariant checks, runnable without pytest."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .density import fit_from_points
from .inference import EstimationConfig
from .models import SharedDraws, fisher_information, get_model, simulate_sample
from .objective import eval_Qnk, eval_Qnk_direct, precompute
from .spline_core import (
    SplineBasis,
    basis_moments,
    design_matrix,
    eval_bspline,
    gram_matrix,
    inf_norm_inverse_gram,
    project,
    spline_eval,
)


def _partition_of_unity() -> float:
    x = np.linspace(0.0, 1.0, 1001)
    worst = 0.0
    for r in (1, 2, 3, 4, 5):
        for j in (0, 3, 6):
            worst = max(worst, np.abs(design_matrix(SplineBasis(r, j), x).sum(axis=1) - 1.0).max())
    return worst


def _derivative_recurrence() -> float:
    worst = 0.0
    for r in (3, 4, 5):
        for u in np.linspace(-0.5, r + 0.5, 37):
            lhs = eval_bspline(r, u, 1)
            rhs = eval_bspline(r - 1, u) - eval_bspline(r - 1, u - 1.0)
            worst = max(worst, abs(lhs - rhs))
    return worst


def _projection_idempotent() -> float:
    worst = 0.0
    rng = np.random.default_rng(7)
    for r in (2, 3, 4):
        basis = SplineBasis(r, 4)
        gram = gram_matrix(basis)
        coeffs = rng.normal(size=basis.dim)
        again = project(basis, gram, basis_moments(basis, lambda x: spline_eval(basis, coeffs, x)))
        worst = max(worst, np.abs(again - coeffs).max())
    return worst


def _gram_banded() -> float:
    worst = 0.0
    for r in (2, 3, 4):
        dense = gram_matrix(SplineBasis(r, 5)).dense()
        i, jj = np.indices(dense.shape)
        worst = max(worst, np.abs(dense[np.abs(i - jj) >= r]).max())
    return worst


def _gram_stability() -> float:
    worst = 0.0
    for r in (2, 3, 4):
        d = [inf_norm_inverse_gram(gram_matrix(SplineBasis(r, j))) for j in range(5, 10)]
        worst = max(worst, (max(d) - min(d)) / min(d))
    return worst


def _objective_forms() -> float:
    model = get_model("trunc_exp")
    x = simulate_sample(model, SharedDraws.generate(500, 3), [1.0])
    p_n = fit_from_points(SplineBasis(2, 2), gram_matrix(SplineBasis(2, 2)), x)
    pre = precompute(p_n, SplineBasis(4, 4))
    rng = np.random.default_rng(11)
    return max(abs(eval_Qnk(pre, g) - eval_Qnk_direct(pre, g)) for g in rng.normal(size=(10, pre.basis.dim)))


def _fisher_value() -> float:
    return abs(float(fisher_information(get_model("trunc_exp"), [1.0])[0, 0]) - 0.0793264)


def _config_contract() -> float:
    try:
        EstimationConfig(r_prime=2)
    except ValueError:
        return 0.0
    return 1.0


CHECKS: tuple[tuple[str, Callable[[], float], float], ...] = (
    ("partition of unity", _partition_of_unity, 1e-12),
    ("derivative recurrence", _derivative_recurrence, 1e-14),
    ("projection idempotency", _projection_idempotent, 1e-10),
    ("gram bandedness", _gram_banded, 0.0),
    ("gram inverse stability", _gram_stability, 0.05),
    ("objective forms agree", _objective_forms, 1e-8),
    ("fisher information value", _fisher_value, 1e-6),
    ("config contract", _config_contract, 0.0),
)


def run_selftest(echo: Callable[[str], None] = print) -> bool:
    """Run every check, print one line each, and return whether all passed."""
    ok = True
    for name, fn, tol in CHECKS:
        value = fn()
        passed = value <= tol
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3g} (tol {tol:g})")
    return ok
