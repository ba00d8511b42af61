"""Parametric families on [0, 1] with an inverse-CDF simulator.

Every model simulates through ``rho(v, theta)`` with ``v`` uniform on
[0, 1], so a single vector of draws serves all parameter values of an
estimation run (common random numbers).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, NumericalError
from .spline_core import dyadic_nodes, gauss_legendre

_FISHER_LEVEL = 5
_FISHER_NODES = 10


class ParametricModel:
    """Base class: a family ``p(theta, .)`` on [0, 1] over a compact box.

    Subclasses implement the vectorized hooks. ``x`` and ``v`` are 1-d
    arrays; gradients come back with shape ``(len(x), theta_dim)``.
    """

    name: str = "model"
    theta_dim: int = 1
    lower: np.ndarray
    upper: np.ndarray
    #: sampled sup over (v, theta) of |d rho / d theta|, a Lipschitz constant in theta
    rho_lipschitz: float = np.inf

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower, self.upper

    def check_theta(self, theta, interior: bool = False) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if th.shape != (self.theta_dim,):
            raise ContractError(
                f"{self.name}: theta must have {self.theta_dim} entries, got shape {th.shape}"
            )
        if interior:
            ok = np.all(th > self.lower) and np.all(th < self.upper)
        else:
            ok = np.all(th >= self.lower) and np.all(th <= self.upper)
        if not ok:
            where = "interior of" if interior else "inside"
            raise ContractError(
                f"{self.name}: theta={th.tolist()} not {where} "
                f"[{self.lower.tolist()}, {self.upper.tolist()}]"
            )
        return th

    def density(self, theta, x):
        raise NotImplementedError

    def log_density(self, theta, x):
        return np.log(self.density(theta, x))

    def cdf(self, theta, x):
        raise NotImplementedError

    def rho(self, v, theta):
        raise NotImplementedError

    def rho_dtheta(self, v, theta):
        raise NotImplementedError

    def density_dtheta(self, theta, x):
        raise NotImplementedError

    def density_d2theta(self, theta, x):
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"

    def __reduce__(self):
        return (get_model, (self.name,))


@dataclass(frozen=True, eq=False)
class SharedDraws:
    """The single vector ``V_1..V_k`` of uniforms reused for every theta."""

    values: np.ndarray
    seed: int

    @classmethod
    def generate(cls, k: int, seed: int) -> "SharedDraws":
        if k < 1:
            raise ContractError(f"need at least one draw, got k={k}")
        values = np.random.default_rng(np.uint64(seed)).random(k)
        values.flags.writeable = False
        return cls(values=values, seed=int(seed))

    @property
    def k(self) -> int:
        return self.values.size


def simulate_sample(model: ParametricModel, draws: SharedDraws, theta) -> np.ndarray:
    """``[rho(V_1, theta), ..., rho(V_k, theta)]`` clipped to [0, 1] against rounding."""
    th = model.check_theta(theta)
    return np.clip(model.rho(draws.values, th), 0.0, 1.0)


class TruncatedExponential(ParametricModel):
    """``p(theta, x) = theta e^{theta x} / (e^theta - 1)`` on ``Theta = [0.2, 3]``."""

    name = "trunc_exp"
    theta_dim = 1
    rho_lipschitz = 0.15

    def __init__(self):
        self.lower = np.array([0.2])
        self.upper = np.array([3.0])

    @staticmethod
    def _t(theta) -> float:
        return float(np.asarray(theta, dtype=float).reshape(-1)[0])

    def density(self, theta, x):
        t = self._t(theta)
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return np.ones_like(x)
        return t * np.exp(t * x) / np.expm1(t)

    def log_density(self, theta, x):
        t = self._t(theta)
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return np.zeros_like(x)
        return np.log(t / np.expm1(t)) + t * x

    def cdf(self, theta, x):
        t = self._t(theta)
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return x.copy()
        return np.expm1(t * x) / np.expm1(t)

    def rho(self, v, theta):
        t = self._t(theta)
        v = np.asarray(v, dtype=float)
        if t == 0.0:
            return v.copy()
        return np.log1p(v * np.expm1(t)) / t

    def rho_dtheta(self, v, theta):
        t = self._t(theta)
        v = np.asarray(v, dtype=float)
        if t == 0.0:
            # limit of the expression below as theta -> 0
            return (0.5 * v * (1.0 - v))[:, None]
        em = np.expm1(t)
        lg = np.log1p(v * em)
        d = v * (em + 1.0) / (1.0 + v * em) / t - lg / t**2
        return d[:, None]

    def _score(self, t: float, x):
        # d/dtheta log p
        return 1.0 / t + x - 1.0 / (-np.expm1(-t))

    def density_dtheta(self, theta, x):
        t = self._t(theta)
        x = np.asarray(x, dtype=float)
        return (self.density(t, x) * self._score(t, x))[:, None]

    def density_d2theta(self, theta, x):
        t = self._t(theta)
        x = np.asarray(x, dtype=float)
        s = self._score(t, x)
        ds = -1.0 / t**2 + np.exp(t) / np.expm1(t) ** 2
        return (self.density(t, x) * (s * s + ds))[:, None, None]

    @staticmethod
    def fisher_closed_form(theta) -> float:
        """Variance of X under ``p(theta)``, which equals the information."""
        t = float(np.asarray(theta).reshape(-1)[0])
        return 1.0 / t**2 - np.exp(t) / np.expm1(t) ** 2


_TABLE_CELLS = 1024
_TABLE_NODES = 5
_NEWTON_TOL = 1e-12
_NEWTON_MAXIT = 100


@lru_cache(maxsize=4096)
def _tilted_tables(a: float, b: float):
    """Cumulative integrals of ``t**q exp(a t + b t^2)``, q = 0, 1, 2, on a 1024-cell grid."""
    grid = np.linspace(0.0, 1.0, _TABLE_CELLS + 1)
    u, w = gauss_legendre(_TABLE_NODES)
    h = 1.0 / _TABLE_CELLS
    t = grid[:-1, None] + h * u[None, :]
    f = np.exp(a * t + b * t * t)
    cum = []
    for q in range(3):
        cell = (f * t**q) @ (h * w)
        cum.append(np.concatenate([[0.0], np.cumsum(cell)]))
    z = cum[0][-1]
    cum = np.stack(cum) / z
    # raw moments E[X^q], q = 0..4, for the Fisher/Hessian formulas
    xq, wq = dyadic_nodes(4, 10)
    pq = np.exp(a * xq + b * xq * xq) / z
    moments = np.array([np.dot(wq, pq * xq**q) for q in range(5)])
    return grid, cum, z, moments


class TiltedQuadratic(ParametricModel):
    """``p(theta, x) ∝ exp(theta_1 x + theta_2 x^2)`` on ``Theta = [-2, 2]^2``.

    The normalizer and CDF come from Gauss-Legendre tables; ``rho`` inverts
    the CDF by a binary search on the tabulated grid (brackets of width
    1/1024) followed by safeguarded Newton steps.
    """

    name = "tilted_quad"
    theta_dim = 2
    rho_lipschitz = 0.3

    def __init__(self):
        self.lower = np.array([-2.0, -2.0])
        self.upper = np.array([2.0, 2.0])

    @staticmethod
    def _ab(theta) -> tuple[float, float]:
        th = np.asarray(theta, dtype=float).reshape(-1)
        return float(th[0]), float(th[1])

    def _tables(self, theta):
        return _tilted_tables(*self._ab(theta))

    def _unnormalized(self, a, b, x):
        return np.exp(a * x + b * x * x)

    def density(self, theta, x):
        a, b = self._ab(theta)
        _, _, z, _ = self._tables(theta)
        return self._unnormalized(a, b, np.asarray(x, dtype=float)) / z

    def log_density(self, theta, x):
        a, b = self._ab(theta)
        _, _, z, _ = self._tables(theta)
        x = np.asarray(x, dtype=float)
        return a * x + b * x * x - np.log(z)

    def _partial(self, theta, x, q: int):
        """``int_0^x t^q p(theta, t) dt`` for each entry of ``x``."""
        a, b = self._ab(theta)
        grid, cum, z, _ = self._tables(theta)
        x = np.asarray(x, dtype=float)
        g = np.clip(np.floor(x * _TABLE_CELLS).astype(np.int64), 0, _TABLE_CELLS - 1)
        left = grid[g]
        u, w = gauss_legendre(_TABLE_NODES)
        span = (x - left)[:, None]
        t = left[:, None] + span * u[None, :]
        local = (np.exp(a * t + b * t * t) * t**q) @ w * span[:, 0] / z
        return cum[q][g] + local

    def cdf(self, theta, x):
        return self._partial(theta, np.atleast_1d(x), 0)

    def rho(self, v, theta):
        a, b = self._ab(theta)
        grid, cum, z, _ = self._tables(theta)
        v = np.asarray(v, dtype=float)
        F = cum[0]
        g = np.clip(np.searchsorted(F, v, side="right") - 1, 0, _TABLE_CELLS - 1)
        lo, hi = grid[g], grid[g + 1]
        width = F[g + 1] - F[g]
        x = lo + (v - F[g]) / width * (hi - lo)
        for it in range(_NEWTON_MAXIT):
            resid = self._partial(theta, x, 0) - v
            step = resid / (self._unnormalized(a, b, x) / z)
            x_new = np.clip(x - step, lo, hi)
            delta = np.max(np.abs(x_new - x)) if x.size else 0.0
            x = x_new
            if delta <= _NEWTON_TOL:
                return x
        raise NumericalError(
            f"inverse CDF did not converge for theta=({a}, {b})",
            theta=(a, b),
            iterations=_NEWTON_MAXIT,
            last_step=float(delta),
            max_residual=float(np.max(np.abs(resid))),
        )

    def rho_dtheta(self, v, theta):
        x = self.rho(v, theta)
        _, _, _, mom = self._tables(theta)
        F = self._partial(theta, x, 0)
        p = self.density(theta, x)
        out = np.empty((x.size, 2))
        for q in (1, 2):
            dF = self._partial(theta, x, q) - mom[q] * F
            out[:, q - 1] = -dF / p
        return out

    def density_dtheta(self, theta, x):
        x = np.asarray(x, dtype=float)
        _, _, _, mom = self._tables(theta)
        p = self.density(theta, x)
        return np.stack([p * (x - mom[1]), p * (x * x - mom[2])], axis=1)

    def density_d2theta(self, theta, x):
        x = np.asarray(x, dtype=float)
        _, _, _, m = self._tables(theta)
        p = self.density(theta, x)
        dev = np.stack([x - m[1], x * x - m[2]], axis=1)
        cov = np.array(
            [[m[2] - m[1] ** 2, m[3] - m[1] * m[2]], [m[3] - m[1] * m[2], m[4] - m[2] ** 2]]
        )
        return p[:, None, None] * (dev[:, :, None] * dev[:, None, :] - cov[None])


def make_truncated_exponential() -> TruncatedExponential:
    return TruncatedExponential()


def make_tilted_quadratic() -> TiltedQuadratic:
    return TiltedQuadratic()


MODELS = {
    "trunc_exp": make_truncated_exponential,
    "tilted_quad": make_tilted_quadratic,
}


def get_model(model_id: str) -> ParametricModel:
    try:
        return MODELS[model_id]()
    except KeyError:
        raise ContractError(
            f"unknown model {model_id!r}; choose from {sorted(MODELS)}"
        ) from None


def fisher_information(model: ParametricModel, theta) -> np.ndarray:
    """``Psi(theta) = int grad p grad p' / p``, the inverse of the Cramér-Rao bound."""
    th = model.check_theta(theta, interior=True)
    x, w = dyadic_nodes(_FISHER_LEVEL, _FISHER_NODES)
    dp = model.density_dtheta(th, x)
    p = model.density(th, x)
    info = (dp * (w / p)[:, None]).T @ dp
    info = 0.5 * (info + info.T)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"{model.name}: information matrix at theta={th.tolist()} is not positive definite",
            theta=th.tolist(),
            eigenvalues=np.linalg.eigvalsh(info).tolist(),
        ) from None
    return info
