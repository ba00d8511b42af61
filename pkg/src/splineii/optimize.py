"""Grid search plus local refinement over a compact box."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import ContractError, NumericalError

STATUSES = ("converged", "max_iters", "boundary")


@dataclass(frozen=True)
class OptConfig:
    grid_points_per_dim: int = 25
    refine_method: str = "nelder_mead"
    tol_theta: float = 1e-8
    tol_value: float = 1e-12
    max_iters: int = 500

    def __post_init__(self):
        if self.grid_points_per_dim < 3:
            raise ContractError("grid_points_per_dim must be >= 3")
        if self.refine_method not in ("nelder_mead", "newton_like"):
            raise ContractError(f"unknown refine_method {self.refine_method!r}")
        if self.tol_theta <= 0 or self.tol_value <= 0:
            raise ContractError("tolerances must be positive")
        if self.max_iters < 1:
            raise ContractError("max_iters must be positive")


@dataclass
class OptResult:
    theta: np.ndarray
    value: float
    status: str
    nfev: int = 0
    grid_value: float = np.nan


class _Counted:
    """Wraps the objective: projects into the box, counts calls, rejects non-finite values."""

    def __init__(self, f, lower, upper):
        self.f, self.lower, self.upper = f, lower, upper
        self.nfev = 0

    def __call__(self, theta) -> float:
        th = np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)
        val = float(self.f(th))
        self.nfev += 1
        if not np.isfinite(val):
            raise NumericalError(f"objective is not finite at theta={th.tolist()}", theta=th.tolist(), value=val)
        return val


def grid_search(fc: Callable, lower: np.ndarray, upper: np.ndarray, points: int):
    """Evaluate on the tensor grid; ties go to the lowest lexicographic grid index."""
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(lower, upper)]
    best_val, best_theta = np.inf, None
    for combo in itertools.product(*axes):
        th = np.array(combo)
        val = fc(th)
        if val < best_val:
            best_val, best_theta = val, th
    return best_theta, best_val


def minimize(
    f: Callable[[np.ndarray], float],
    box: tuple,
    cfg: OptConfig | None = None,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
) -> OptResult:
    """Minimize ``f`` over the box ``(lower, upper)``.

    A coarse tensor grid picks the starting point, then either a bounded
    Nelder-Mead simplex or a projected Newton iteration (gradient plus
    finite-difference Hessian) refines it. The refined point is kept only
    if it does not raise the objective above the best grid value.
    """
    cfg = cfg or OptConfig()
    lower = np.atleast_1d(np.asarray(box[0], dtype=float))
    upper = np.atleast_1d(np.asarray(box[1], dtype=float))
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise ContractError("box must satisfy lower < upper componentwise")
    fc = _Counted(f, lower, upper)
    x0, v0 = grid_search(fc, lower, upper, cfg.grid_points_per_dim)
    spacing = (upper - lower) / (cfg.grid_points_per_dim - 1)

    if cfg.refine_method == "newton_like":
        if grad is None:
            raise ContractError("newton_like refinement needs a gradient")
        theta, value, hit_max = _newton(fc, grad, x0, v0, lower, upper, spacing, cfg)
    else:
        theta, value, hit_max = _nelder_mead(fc, x0, v0, lower, upper, spacing, cfg)

    if value > v0:
        theta, value = x0, v0
    theta = np.clip(theta, lower, upper)
    tol = 10.0 * cfg.tol_theta * np.maximum(upper - lower, 1.0)
    if np.any(theta - lower <= tol) or np.any(upper - theta <= tol):
        status = "boundary"
    elif hit_max:
        status = "max_iters"
    else:
        status = "converged"
    return OptResult(theta=theta, value=float(value), status=status, nfev=fc.nfev, grid_value=float(v0))


def _nelder_mead(fc, x0, v0, lower, upper, spacing, cfg):
    b = x0.size
    simplex = [x0.copy()]
    for i in range(b):
        step = np.zeros(b)
        step[i] = 0.5 * spacing[i]
        cand = x0 + step
        if cand[i] > upper[i]:
            cand = x0 - step
        simplex.append(cand)
    res = _scipy_minimize(
        fc,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lower, upper)),
        options={
            "initial_simplex": np.array(simplex),
            "xatol": cfg.tol_theta,
            "fatol": cfg.tol_value,
            "maxiter": cfg.max_iters,
            "maxfev": 4 * cfg.max_iters,
        },
    )
    hit_max = not res.success
    return np.asarray(res.x, dtype=float), float(res.fun), bool(hit_max)


def _newton(fc, grad, x0, v0, lower, upper, spacing, cfg):
    theta, value = x0.copy(), v0
    b = theta.size
    h = 1e-5 * (upper - lower)
    for it in range(cfg.max_iters):
        g = np.asarray(grad(theta), dtype=float).reshape(b)
        H = np.empty((b, b))
        for q in range(b):
            e = np.zeros(b)
            e[q] = h[q]
            lo_pt, hi_pt = np.clip(theta - e, lower, upper), np.clip(theta + e, lower, upper)
            H[:, q] = (np.asarray(grad(hi_pt)).reshape(b) - np.asarray(grad(lo_pt)).reshape(b)) / (hi_pt[q] - lo_pt[q])
        H = 0.5 * (H + H.T)
        try:
            np.linalg.cholesky(H)
            direction = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            direction = -g * spacing
        t = 1.0
        while True:
            cand = np.clip(theta + t * direction, lower, upper)
            cval = fc(cand)
            if cval <= value or t < 1e-8:
                break
            t *= 0.5
        if cval > value:
            return theta, value, False
        step = np.linalg.norm(cand - theta)
        drop = value - cval
        theta, value = cand, cval
        if step <= cfg.tol_theta or drop <= cfg.tol_value:
            return theta, value, False
    return theta, value, True
