"""Spline projection density estimators from observed or simulated samples."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import floor, log2

import numpy as np

from .errors import ContractError
from .models import ParametricModel, SharedDraws, simulate_sample
from .spline_core import (
    MAX_LEVEL,
    GramFactor,
    SplineBasis,
    basis_moments,
    inf_norm_inverse_gram,
    project,
    spline_eval,
    sum_basis,
)

#: points per dyadic cell used to decide positivity of a fitted density
A_N_POINTS_PER_CELL = 33


@dataclass(frozen=True, eq=False)
class SplineDensity:
    """A fitted spline ``sum_l coeffs[l] N_l``; ``source`` is ``"observed"`` or ``"simulated"``.

    The estimator is not clipped at zero, so it may dip below 0 when the
    sample is small.
    """

    basis: SplineBasis
    coeffs: np.ndarray
    source: str = "observed"
    size: int = 0
    theta: tuple | None = None

    def __call__(self, x, deriv_order: int = 0) -> np.ndarray:
        return spline_eval(self.basis, self.coeffs, x, deriv_order)

    def integral(self) -> float:
        return float(self.coeffs @ basis_integrals(self.basis))

    @cached_property
    def grid_min(self) -> tuple[float, float]:
        return min_on_grid(self, A_N_POINTS_PER_CELL)

    @property
    def positive(self) -> bool:
        """Whether the density is positive on [0, 1] (the event ``A_n``)."""
        return self.grid_min[0] > 0.0


def basis_integrals(basis: SplineBasis) -> np.ndarray:
    """``int_0^1 N_l`` for each basis function (``2**-j`` away from the boundary)."""
    return basis_moments(basis, np.ones_like, nodes_per_cell=max(basis.order, 1))


def _check_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float).ravel()
    if x.size < 1:
        raise ContractError("cannot fit a density to an empty sample")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ContractError("sample points must lie in [0, 1]")
    return x


def fit_from_points(
    basis: SplineBasis,
    gram: GramFactor,
    points,
    source: str = "observed",
    theta=None,
) -> SplineDensity:
    """Project the empirical measure of ``points`` onto the spline space."""
    x = _check_points(points)
    moments = sum_basis(basis, x) / x.size
    coeffs = project(basis, gram, moments)
    th = None if theta is None else tuple(np.atleast_1d(theta).tolist())
    return SplineDensity(basis, coeffs, source=source, size=x.size, theta=th)


def simulated_coeffs(
    basis: SplineBasis,
    gram: GramFactor,
    model: ParametricModel,
    draws: SharedDraws,
    theta,
    with_gradient: bool = False,
):
    """Coefficients of ``p_{k,J,r}(theta)``, optionally with their theta-Jacobian.

    This is the inner loop of the estimator, so it skips the sample
    validation done by :func:`fit_from_points`.
    """
    x = simulate_sample(model, draws, theta)
    k = draws.k
    coeffs = project(basis, gram, sum_basis(basis, x) / k)
    if not with_gradient:
        return coeffs
    return coeffs, _gradient_from_sample(basis, gram, model, draws, theta, x)


def _gradient_from_sample(basis, gram, model, draws, theta, x):
    if basis.order < 3:
        raise ContractError(
            f"theta-gradient needs a continuously differentiable basis (order >= 3), got {basis.order}"
        )
    drho = model.rho_dtheta(draws.values, theta)
    moments = sum_basis(basis, x, deriv_order=1, weights=drho) / draws.k
    return project(basis, gram, moments)


def theta_gradient_coeffs(
    basis: SplineBasis,
    gram: GramFactor,
    model: ParametricModel,
    draws: SharedDraws,
    theta,
) -> np.ndarray:
    """``d gamma_l / d theta_q`` of the simulated estimator, shape ``(dim, b)``.

    Differentiates through the sample points: each simulated point moves
    with ``d rho / d theta`` and every basis function picks up its
    derivative there.
    """
    if basis.order < 3:
        raise ContractError(
            f"theta-gradient needs a continuously differentiable basis (order >= 3), got {basis.order}"
        )
    th = model.check_theta(theta, interior=True)
    x = simulate_sample(model, draws, th)
    return _gradient_from_sample(basis, gram, model, draws, th, x)


def resolution_rule(sample_size: int, tau: float, c: float = 1.0) -> int:
    """Level ``j`` with ``2**j ≈ c * sample_size**(1/(2 tau + 1))``, rounded half-up, clamped to [1, 14]."""
    if sample_size < 2:
        raise ContractError(f"sample_size must be >= 2, got {sample_size}")
    if tau <= 0.5:
        raise ContractError(f"tau must exceed 1/2, got {tau}")
    if c <= 0:
        raise ContractError(f"resolution constant must be positive, got {c}")
    raw = log2(c) + log2(sample_size) / (2.0 * tau + 1.0)
    return int(min(max(floor(raw + 0.5), 1), MAX_LEVEL))


def min_on_grid(density: SplineDensity, pts_per_cell: int = A_N_POINTS_PER_CELL) -> tuple[float, float]:
    """Minimum of a spline density over Chebyshev points in every cell plus all knots."""
    if pts_per_cell < 2:
        raise ContractError("need at least two points per cell")
    basis = density.basis
    h = basis.knot_step
    k = np.arange(pts_per_cell)
    cheb = 0.5 * (1.0 - np.cos((2 * k + 1) * np.pi / (2 * pts_per_cell)))
    left = np.arange(basis.n_cells) * h
    x = np.concatenate([(left[:, None] + h * cheb[None, :]).ravel(), np.linspace(0.0, 1.0, basis.n_cells + 1)])
    vals = density(x)
    i = int(np.argmin(vals))
    return float(vals[i]), float(x[i])


def sup_norm_bound(basis: SplineBasis, gram: GramFactor) -> float:
    """Deterministic bound ``2**J d_r (2**J + r - 1)`` on any fitted estimator."""
    return basis.n_cells * inf_norm_inverse_gram(gram) * basis.dim
