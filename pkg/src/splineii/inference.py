"""End-to-end estimators: simulated indirect inference, the ideal k = infinity
estimator, a maximum-likelihood baseline, and the plug-in variance estimate."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from math import ceil, floor, log2

import numpy as np

from .density import fit_from_points, resolution_rule, simulated_coeffs, theta_gradient_coeffs
from .errors import ContractError, NumericalError
from .models import ParametricModel, SharedDraws
from .objective import NODES_PER_CELL, eval_Qn, eval_Qnk, grad_Qnk, precompute
from .optimize import OptConfig, OptResult, minimize
from .spline_core import MAX_LEVEL, SplineBasis, cached_gram, dyadic_nodes, spline_eval

REGIMES = ("S1", "S2", "S3")
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning of the estimator.

    ``regime`` fixes the simulation budget: S1 ``k = m n^2``, S2
    ``k = ceil(n^1.5)``, S3 ``k = ceil(kappa n)``. ``k`` overrides the rule
    when given. ``j_prime``/``J_prime`` default to the estimation level
    ``j`` and to ``2**J' ≈ k**(1/4)``.
    """

    r_star: int = 2
    r: int = 4
    r_star_prime: int = 2
    r_prime: int = 3
    tau: float = 1.5
    c_j: float = 1.0
    c_J: float = 1.0
    regime: str = "S1"
    m: float = 1.0
    kappa: float = 1.0
    k: int | None = None
    seed: int = 0
    compute_variance: bool = False
    j_prime: int | None = None
    J_prime: int | None = None
    nodes_per_cell: int = NODES_PER_CELL
    opt: OptConfig = field(default_factory=OptConfig)

    def __post_init__(self):
        if self.r < 2 or self.r_star < 2:
            raise ContractError("estimation needs r >= 2 and r_star >= 2")
        if self.r_prime < 3 or self.r_star_prime < 2:
            raise ContractError("variance estimation needs r_prime >= 3 and r_star_prime >= 2")
        if self.tau <= 0.5:
            raise ContractError("tau must exceed 1/2")
        if self.regime not in REGIMES:
            raise ContractError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.regime == "S3" and self.kappa <= 0:
            raise ContractError("S3 needs kappa > 0")
        if self.regime == "S1" and self.m <= 0:
            raise ContractError("S1 needs m > 0")
        if self.k is not None and self.k < 1:
            raise ContractError("k must be positive")

    @classmethod
    def preset(cls, regime: str, **overrides) -> "EstimationConfig":
        """Regime presets; S2 and S3 use ``tau = 1.51`` (their theory needs tau > 3/2)."""
        base = {"regime": regime}
        if regime in ("S2", "S3"):
            base["tau"] = 1.51
        base.update(overrides)
        return cls(**base)

    def simulation_size(self, n: int) -> int:
        if self.k is not None:
            return int(self.k)
        if self.regime == "S1":
            return int(round(self.m * n * n))
        if self.regime == "S2":
            return int(ceil(n**1.5))
        return int(ceil(self.kappa * n))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationConfig":
        d = dict(d)
        opt = d.pop("opt", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown estimation settings: {sorted(unknown)}")
        if isinstance(opt, dict):
            d["opt"] = OptConfig(**opt)
        elif isinstance(opt, OptConfig):
            d["opt"] = opt
        return cls(**d)


@dataclass
class EstimationResult:
    theta_hat: np.ndarray
    obj_value: float
    a_n_held: bool
    j: int
    J: int
    n: int
    k: int
    status: str
    info_inverse_hat: np.ndarray | None = None
    ci_95: np.ndarray | None = None
    variance_error: str | None = None
    nfev: int = 0

    @property
    def ok(self) -> bool:
        return self.a_n_held and bool(np.all(np.isfinite(self.theta_hat)))

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "theta_hat": arr(self.theta_hat),
            "obj_value": self.obj_value,
            "a_n_held": self.a_n_held,
            "levels": {"j": self.j, "J": self.J},
            "sizes": {"n": self.n, "k": self.k},
            "info_inverse_hat": arr(self.info_inverse_hat),
            "ci_95": arr(self.ci_95),
            "status": self.status,
            "variance_error": self.variance_error,
        }


def _check_data(data, min_n: int = 8) -> np.ndarray:
    x = np.asarray(data, dtype=float).ravel()
    if x.size < min_n:
        raise ContractError(f"need at least {min_n} observations, got {x.size}")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ContractError("observations must lie in [0, 1]")
    return x


def _fit_observed(x: np.ndarray, order: int, level: int):
    basis = SplineBasis(order, level)
    return fit_from_points(basis, cached_gram(basis), x)


def _failed(model, j, J, n, k) -> EstimationResult:
    return EstimationResult(
        theta_hat=np.full(model.theta_dim, np.nan),
        obj_value=np.nan,
        a_n_held=False,
        j=j,
        J=J,
        n=n,
        k=k,
        status="a_n_failed",
    )


def indirect_inference_estimate(data, model: ParametricModel, cfg: EstimationConfig | None = None) -> EstimationResult:
    """Simulation-based minimum-distance estimate of theta.

    One draw vector of size ``k`` is generated from ``cfg.seed`` and reused
    for every theta the optimizer visits.
    """
    cfg = cfg or EstimationConfig()
    x = _check_data(data)
    n = x.size
    j = resolution_rule(n, cfg.tau, cfg.c_j)
    p_n = _fit_observed(x, cfg.r_star, j)
    k = cfg.simulation_size(n)
    J = resolution_rule(max(k, 2), cfg.tau, cfg.c_J)
    basis_J = SplineBasis(cfg.r, J)
    gram_J = cached_gram(basis_J)
    pre = precompute(p_n, basis_J, cfg.nodes_per_cell)
    if not pre.a_n_holds:
        return _failed(model, j, J, n, k)
    draws = SharedDraws.generate(k, cfg.seed)

    def objective(theta):
        return eval_Qnk(pre, simulated_coeffs(basis_J, gram_J, model, draws, theta))

    grad = None
    if cfg.opt.refine_method == "newton_like":

        def grad(theta):
            g, dg = simulated_coeffs(basis_J, gram_J, model, draws, theta, with_gradient=True)
            return grad_Qnk(pre, g, dg)

    opt = minimize(objective, model.box, cfg.opt, grad=grad)
    result = EstimationResult(
        theta_hat=opt.theta,
        obj_value=opt.value,
        a_n_held=True,
        j=j,
        J=J,
        n=n,
        k=k,
        status=opt.status,
        nfev=opt.nfev,
    )
    if cfg.compute_variance:
        _attach_variance(result, x, model, draws, cfg)
    return result


def _attach_variance(result: EstimationResult, x, model, draws, cfg) -> None:
    try:
        V = variance_estimate(x, model, draws, result.theta_hat, cfg)
    except (NumericalError, ContractError) as exc:
        result.variance_error = f"{type(exc).__name__}: {exc}"
        return
    result.info_inverse_hat = V
    half = Z_95 * np.sqrt(np.diag(V) / result.n)
    result.ci_95 = np.stack([result.theta_hat - half, result.theta_hat + half], axis=1)


def ideal_estimate(data, model: ParametricModel, cfg: EstimationConfig | None = None) -> EstimationResult:
    """Minimizer of the simulation-free objective (the ``k = infinity`` benchmark)."""
    cfg = cfg or EstimationConfig()
    x = _check_data(data)
    n = x.size
    j = resolution_rule(n, cfg.tau, cfg.c_j)
    p_n = _fit_observed(x, cfg.r_star, j)
    if not p_n.positive:
        return _failed(model, j, 0, n, 0)
    opt = minimize(lambda th: eval_Qn(p_n, model, th, cfg.nodes_per_cell), model.box, cfg.opt)
    return EstimationResult(
        theta_hat=opt.theta,
        obj_value=opt.value,
        a_n_held=True,
        j=j,
        J=0,
        n=n,
        k=0,
        status=opt.status,
        nfev=opt.nfev,
    )


def mle_oracle(data, model: ParametricModel, opt: OptConfig | None = None) -> OptResult:
    """Maximum-likelihood baseline through the same optimizer (``.theta`` is the estimate)."""
    x = _check_data(data, min_n=1)
    return minimize(lambda th: -float(np.mean(model.log_density(th, x))), model.box, opt)


def default_J_prime(k: int) -> int:
    """``2**J' ≈ k**(1/4)``, so that ``J' 2**(3 J') / k -> 0``."""
    return int(min(max(floor(log2(max(k, 2)) / 4.0 + 0.5), 1), MAX_LEVEL))


def variance_estimate(
    data,
    model: ParametricModel,
    draws: SharedDraws,
    theta_bar,
    cfg: EstimationConfig | None = None,
) -> np.ndarray:
    """Plug-in estimate of the Cramér-Rao bound built from simulated-density gradients.

    Inverts ``int grad p_k(theta_bar) grad p_k(theta_bar)' / p_n`` where
    ``p_k`` uses order ``r_prime`` at level ``J'`` and ``p_n`` order
    ``r_star_prime`` at level ``j'``.
    """
    cfg = cfg or EstimationConfig()
    x = _check_data(data)
    th = model.check_theta(theta_bar, interior=True)
    j_p = cfg.j_prime if cfg.j_prime is not None else resolution_rule(x.size, cfg.tau, cfg.c_j)
    J_p = cfg.J_prime if cfg.J_prime is not None else default_J_prime(draws.k)
    p_n = _fit_observed(x, cfg.r_star_prime, j_p)
    if not p_n.positive:
        raise NumericalError("observed-data density is not positive; variance estimate undefined", min_pn=p_n.grid_min[0])
    basis = SplineBasis(cfg.r_prime, J_p)
    dgamma = theta_gradient_coeffs(basis, cached_gram(basis), model, draws, th)
    xq, w = dyadic_nodes(max(j_p, J_p), cfg.nodes_per_cell)
    dp = spline_eval(basis, dgamma, xq)
    A = (dp * (w / p_n(xq))[:, None]).T @ dp
    asym = np.abs(A - A.T).max()
    if asym > 1e-10 * max(1.0, np.abs(A).max()):
        raise NumericalError("plug-in information matrix is not symmetric", asymmetry=float(asym))
    A = 0.5 * (A + A.T)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "plug-in information matrix is not positive definite",
            eigenvalues=np.linalg.eigvalsh(A).tolist(),
        ) from None
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv
