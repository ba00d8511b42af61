"""The indirect-inference objective and its ideal and population counterparts.

On the event that the observed-data estimator ``p_n`` is positive,

    Q_{n,k}(theta) = int (p_n - p_gamma)^2 / p_n
                   = int p_n - 2 gamma . c + gamma' W gamma,

with ``c_l = int N_l`` and ``W_lm = int N_l N_m / p_n``. The three
theta-free pieces are integrated once in :func:`precompute`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import SplineDensity, basis_integrals
from .errors import ContractError
from .models import ParametricModel
from .spline_core import SplineBasis, basis_values, dyadic_nodes, spline_eval

NODES_PER_CELL = 10
#: above this level W is not stored and Q is integrated directly
MAX_QUADRATIC_LEVEL = 10
_IDEAL_MIN_LEVEL = 3
_POP_LEVEL = 5


@dataclass(frozen=True, eq=False)
class ObjectivePrecomp:
    basis: SplineBasis
    p_n: SplineDensity
    weight: np.ndarray | None
    linear: np.ndarray
    constant: float
    a_n_holds: bool
    min_pn: float
    level: int
    nodes_per_cell: int = NODES_PER_CELL

    @property
    def quadratic_mode(self) -> bool:
        return self.weight is not None


def _weighted_gram(basis: SplineBasis, x: np.ndarray, wts: np.ndarray) -> np.ndarray:
    """``sum_i wts_i N_l(x_i) N_m(x_i)`` as a dense matrix."""
    r, dim = basis.order, basis.dim
    c, vals = basis_values(basis, x)
    out = np.zeros((dim, dim))
    for s in range(r):
        for sp in range(r):
            np.add.at(out, (c - s + r - 1, c - sp + r - 1), vals[:, s] * vals[:, sp] * wts)
    return out


def precompute(
    p_n: SplineDensity, basis_J: SplineBasis, nodes_per_cell: int = NODES_PER_CELL
) -> ObjectivePrecomp:
    """Integrate the theta-independent parts of ``Q_{n,k}`` once.

    Quadrature runs over the dyadic cells of the finer of the two levels,
    where both splines are polynomials.
    """
    min_pn, _ = p_n.grid_min
    a_n = min_pn > 0.0
    level = max(p_n.basis.level, basis_J.level)
    x, w = dyadic_nodes(level, nodes_per_cell)
    pn_x = p_n(x)
    constant = float(np.dot(w, pn_x))
    linear = basis_integrals(basis_J)
    weight = None
    if a_n and basis_J.level <= MAX_QUADRATIC_LEVEL:
        weight = _weighted_gram(basis_J, x, w / pn_x)
        weight = 0.5 * (weight + weight.T)
        weight.flags.writeable = False
    return ObjectivePrecomp(
        basis=basis_J,
        p_n=p_n,
        weight=weight,
        linear=linear,
        constant=constant,
        a_n_holds=bool(a_n),
        min_pn=float(min_pn),
        level=level,
        nodes_per_cell=nodes_per_cell,
    )


def _check_gamma(pre: ObjectivePrecomp, gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[0] != pre.basis.dim:
        raise ContractError(f"coefficient vector has length {gamma.shape[0]}, expected {pre.basis.dim}")
    return gamma


def eval_Qnk(pre: ObjectivePrecomp, gamma) -> float:
    """Simulated objective for the coefficient vector of ``p_{k,J,r}(theta)``; 0 off ``A_n``."""
    gamma = _check_gamma(pre, gamma)
    if not pre.a_n_holds:
        return 0.0
    if pre.quadratic_mode:
        return float(pre.constant - 2.0 * gamma @ pre.linear + gamma @ (pre.weight @ gamma))
    x, w = dyadic_nodes(pre.level, pre.nodes_per_cell)
    pn_x = pre.p_n(x)
    diff = pn_x - spline_eval(pre.basis, gamma, x)
    return float(np.dot(w, diff * diff / pn_x))


def eval_Qnk_direct(pre: ObjectivePrecomp, gamma, nodes_per_cell: int | None = None) -> float:
    """``int (p_n - p_gamma)^2 / p_n`` by plain quadrature, bypassing the quadratic form."""
    gamma = _check_gamma(pre, gamma)
    if not pre.a_n_holds:
        return 0.0
    x, w = dyadic_nodes(pre.level, nodes_per_cell or pre.nodes_per_cell)
    pn_x = pre.p_n(x)
    diff = pn_x - spline_eval(pre.basis, gamma, x)
    return float(np.dot(w, diff * diff / pn_x))


def grad_Qnk(pre: ObjectivePrecomp, gamma, dgamma) -> np.ndarray:
    """Chain rule ``2 dgamma' (W gamma - c)``; requires ``A_n``."""
    if not pre.a_n_holds:
        raise ContractError("objective gradient is undefined off the positivity event A_n")
    gamma = _check_gamma(pre, gamma)
    dgamma = np.asarray(dgamma, dtype=float)
    if dgamma.ndim == 1:
        dgamma = dgamma[:, None]
    if pre.quadratic_mode:
        return 2.0 * dgamma.T @ (pre.weight @ gamma - pre.linear)
    x, w = dyadic_nodes(pre.level, pre.nodes_per_cell)
    ratio = spline_eval(pre.basis, gamma, x) / pre.p_n(x)
    dp = spline_eval(pre.basis, dgamma, x)
    return 2.0 * (dp.T @ (w * ratio) - dgamma.T @ pre.linear)


def eval_Qn(p_n: SplineDensity, model: ParametricModel, theta, nodes_per_cell: int = NODES_PER_CELL) -> float:
    """Ideal (``k = infinity``) objective ``int (p_n - p(theta))^2 / p_n``; 0 off ``A_n``."""
    th = model.check_theta(theta)
    if not p_n.positive:
        return 0.0
    x, w = dyadic_nodes(max(p_n.basis.level, _IDEAL_MIN_LEVEL), nodes_per_cell)
    pn_x = p_n(x)
    diff = pn_x - model.density(th, x)
    return float(np.dot(w, diff * diff / pn_x))


def eval_Q_pop(model: ParametricModel, theta, theta0) -> float:
    """Population objective ``int (p(theta0) - p(theta))^2 / p(theta0)``."""
    th = model.check_theta(theta)
    th0 = model.check_theta(theta0)
    x, w = dyadic_nodes(_POP_LEVEL, NODES_PER_CELL)
    p0 = model.density(th0, x)
    diff = p0 - model.density(th, x)
    return float(np.dot(w, diff * diff / p0))
