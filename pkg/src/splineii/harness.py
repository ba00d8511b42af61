"""Seeded Monte Carlo campaigns, MISE rate checks and report emission."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .density import resolution_rule, simulated_coeffs
from .errors import ContractError, NumericalError
from .inference import EstimationConfig, indirect_inference_estimate
from .models import ParametricModel, SharedDraws, fisher_information, get_model, simulate_sample
from .spline_core import SplineBasis, cached_gram, dyadic_nodes, spline_eval

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix64(*values: int) -> int:
    """Fold integers into one 64-bit seed with the splitmix64 finalizer.

    Order matters; ``mix64(s, n, rep)`` is the seed of replication ``rep``
    at sample size ``n``.
    """
    h = 0
    for v in values:
        h = _splitmix64(h ^ (int(v) & _MASK64))
    return h


def rep_seeds(master_seed: int, n: int, rep: int) -> tuple[int, int]:
    """(data seed, simulation seed) for one replication."""
    base = mix64(master_seed, n, rep)
    return mix64(base, 0), mix64(base, 1)


@dataclass(frozen=True)
class McConfig:
    model: str
    theta0: tuple
    n_list: tuple
    reps: int
    master_seed: int = 0
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    workers: int = 1
    record_timing: bool = True
    csv_path: str | None = None
    svg_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta0", tuple(float(t) for t in np.atleast_1d(self.theta0)))
        object.__setattr__(self, "n_list", tuple(int(n) for n in np.atleast_1d(self.n_list)))
        if self.reps < 2:
            raise ContractError(f"reps must be >= 2, got {self.reps}")
        if not self.n_list:
            raise ContractError("n_list must be nonempty")
        if min(self.n_list) < 8:
            raise ContractError("every n must be >= 8")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")
        get_model(self.model).check_theta(self.theta0, interior=True)

    @property
    def model_obj(self) -> ParametricModel:
        return get_model(self.model)

    @classmethod
    def from_dict(cls, d: dict) -> "McConfig":
        d = dict(d)
        est = d.pop("estimation", {}) or {}
        regime_keys = {k: d.pop(k) for k in ("regime", "m", "kappa", "k", "tau") if k in d}
        if isinstance(est, dict):
            est = {**est, **regime_keys}
            regime = est.pop("regime", "S1")
            est = EstimationConfig.preset(regime, **est)
        elif regime_keys:
            est = dataclasses.replace(est, **regime_keys)
        outputs = d.pop("outputs", {}) or {}
        d.setdefault("csv_path", outputs.get("csv"))
        d.setdefault("svg_path", outputs.get("svg"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown campaign settings: {sorted(unknown)}")
        return cls(estimation=est, **d)

    @classmethod
    def from_file(cls, path) -> "McConfig":
        """Read a JSON document or ``key = value`` lines (values JSON literals, dotted keys nest)."""
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            doc = parse_key_values(text)
        if not isinstance(doc, dict):
            raise ContractError("campaign config must be a mapping")
        return cls.from_dict(doc)


def parse_key_values(text: str) -> dict:
    doc: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = doc
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = parsed
    return doc


@dataclass
class RepRecord:
    rep: int
    n: int
    k: int
    j: int
    J: int
    theta_hat: np.ndarray
    obj_value: float
    a_n: bool
    status: str
    seconds: float
    info_inverse_hat: np.ndarray | None = None
    ci_95: np.ndarray | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.a_n and bool(np.all(np.isfinite(self.theta_hat)))


@dataclass
class NSummary:
    """Aggregates at one sample size over the successful replications."""

    n: int
    valid: int
    failures: dict
    mean: np.ndarray
    cov: np.ndarray
    reference: np.ndarray
    variance_ratio: np.ndarray
    coverage: np.ndarray | None
    median_info_inverse: np.ndarray | None
    skewness: np.ndarray
    excess_kurtosis: np.ndarray


@dataclass
class McReport:
    config: McConfig
    records: list
    summaries: dict

    def scaled_errors(self, n: int) -> np.ndarray:
        """``sqrt(n) (theta_hat - theta0)`` for the successful reps at ``n``, in rep order."""
        th0 = np.asarray(self.config.theta0)
        rows = [r.theta_hat for r in self.records if r.n == n and r.ok]
        return np.sqrt(n) * (np.array(rows).reshape(-1, th0.size) - th0)


def _run_rep(cfg: McConfig, n: int, rep: int) -> RepRecord:
    t0 = time.perf_counter()
    model = cfg.model_obj
    data_seed, sim_seed = rep_seeds(cfg.master_seed, n, rep)
    est = dataclasses.replace(cfg.estimation, seed=sim_seed)
    k = est.simulation_size(n)
    b = model.theta_dim
    try:
        data = simulate_sample(model, SharedDraws.generate(n, data_seed), cfg.theta0)
        res = indirect_inference_estimate(data, model, est)
        rec = RepRecord(
            rep=rep,
            n=n,
            k=res.k,
            j=res.j,
            J=res.J,
            theta_hat=np.asarray(res.theta_hat, dtype=float),
            obj_value=res.obj_value,
            a_n=res.a_n_held,
            status=res.status,
            seconds=0.0,
            info_inverse_hat=res.info_inverse_hat,
            ci_95=res.ci_95,
            error=res.variance_error,
        )
    except (NumericalError, ContractError, ArithmeticError, ValueError) as exc:
        rec = RepRecord(
            rep=rep,
            n=n,
            k=k,
            j=-1,
            J=-1,
            theta_hat=np.full(b, np.nan),
            obj_value=np.nan,
            a_n=False,
            status="error",
            seconds=0.0,
            error=f"{type(exc).__name__}: {exc}",
        )
    if cfg.record_timing:
        rec.seconds = time.perf_counter() - t0
    return rec


def _run_rep_task(args) -> RepRecord:
    return _run_rep(*args)


def _summarize(cfg: McConfig, records: list, n: int) -> NSummary:
    model = cfg.model_obj
    th0 = np.asarray(cfg.theta0)
    b = th0.size
    here = [r for r in records if r.n == n]
    good = [r for r in here if r.ok]
    failures: dict = {}
    for r in here:
        if not r.ok:
            key = r.status if r.error is None else r.status + ":" + r.error.split(":", 1)[0]
            failures[key] = failures.get(key, 0) + 1
    reference = np.linalg.inv(fisher_information(model, th0))
    z = np.sqrt(n) * (np.array([r.theta_hat for r in good]).reshape(-1, b) - th0)
    if z.shape[0] >= 2:
        mean = z.mean(axis=0)
        cov = np.atleast_2d(np.cov(z, rowvar=False))
        skew = np.atleast_1d(stats.skew(z, axis=0))
        kurt = np.atleast_1d(stats.kurtosis(z, axis=0))
    else:
        mean = np.full(b, np.nan)
        cov = np.full((b, b), np.nan)
        skew = kurt = np.full(b, np.nan)
    with_ci = [r for r in good if r.ci_95 is not None]
    coverage = median_v = None
    if with_ci:
        lo = np.array([r.ci_95[:, 0] for r in with_ci])
        hi = np.array([r.ci_95[:, 1] for r in with_ci])
        coverage = np.mean((lo <= th0) & (th0 <= hi), axis=0)
        median_v = np.median(np.array([r.info_inverse_hat for r in with_ci]), axis=0)
    return NSummary(
        n=n,
        valid=len(good),
        failures=failures,
        mean=mean,
        cov=cov,
        reference=reference,
        variance_ratio=np.diag(cov) / np.diag(reference),
        coverage=coverage,
        median_info_inverse=median_v,
        skewness=skew,
        excess_kurtosis=kurt,
    )


def run_montecarlo(cfg: McConfig, workers: int | None = None) -> McReport:
    """Run every (n, rep) replication and aggregate.

    Records are keyed by ``(n, rep)`` and sorted before aggregation, so the
    report does not depend on the worker count or completion order.
    """
    workers = workers or cfg.workers
    tasks = [(cfg, n, rep) for n in cfg.n_list for rep in range(cfg.reps)]
    if workers == 1:
        records = [_run_rep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_rep_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    records.sort(key=lambda r: (r.n, r.rep))
    summaries = {n: _summarize(cfg, records, n) for n in cfg.n_list}
    return McReport(config=cfg, records=records, summaries=summaries)


def paired_variance_exceedance(
    low: McReport, high: McReport, n: int, coordinate: int = 0, resamples: int = 1000, seed: int = 0
) -> float:
    """Share of paired bootstrap resamples where ``high`` has the larger empirical variance.

    Both campaigns must share ``master_seed`` so replication ``i`` sees the
    same observed data in each. Each resample draws one set of replication
    indices and uses it for both campaigns.
    """
    if low.config.master_seed != high.config.master_seed:
        raise ContractError("paired comparison needs campaigns with the same master seed")
    th0 = low.config.theta0[coordinate]
    a = {r.rep: r.theta_hat[coordinate] for r in low.records if r.n == n and r.ok}
    b = {r.rep: r.theta_hat[coordinate] for r in high.records if r.n == n and r.ok}
    common = sorted(set(a) & set(b))
    if len(common) < 2:
        raise ContractError("fewer than two replications succeeded in both campaigns")
    xa = np.array([a[i] for i in common]) - th0
    xb = np.array([b[i] for i in common]) - th0
    idx = np.random.default_rng(seed).integers(0, len(common), size=(resamples, len(common)))
    return float(np.mean(xb[idx].var(axis=1, ddof=1) > xa[idx].var(axis=1, ddof=1)))


def mise_curve(
    model: ParametricModel,
    theta0,
    k_list,
    tau: float = 1.5,
    r: int = 4,
    reps: int = 50,
    seed: int = 0,
    level: int | None = None,
) -> np.ndarray:
    """Monte Carlo MISE of the simulated spline estimator at each ``k``.

    ``level`` freezes ``J``; otherwise ``J`` follows the resolution rule.
    """
    th0 = model.check_theta(theta0)
    out = np.empty(len(k_list))
    for i, k in enumerate(k_list):
        J = level if level is not None else resolution_rule(int(k), tau)
        basis = SplineBasis(r, J)
        gram = cached_gram(basis)
        x, w = dyadic_nodes(max(J, 5), 10)
        truth = model.density(th0, x)
        errs = np.empty(reps)
        for rep in range(reps):
            draws = SharedDraws.generate(int(k), mix64(seed, int(k), rep))
            g = simulated_coeffs(basis, gram, model, draws, th0)
            errs[rep] = np.dot(w, (spline_eval(basis, g, x) - truth) ** 2)
        out[i] = errs.mean()
    return out


def rate_check(
    model: ParametricModel,
    theta0,
    k_list,
    tau: float = 1.5,
    r: int = 4,
    reps: int = 50,
    seed: int = 0,
    level: int | None = None,
) -> float:
    """Least-squares slope of log MISE against log k."""
    k_arr = np.asarray(k_list, dtype=float)
    if k_arr.size < 3 or k_arr.max() / k_arr.min() < 4.0:
        raise ContractError("k_list needs at least 3 values spanning 2 octaves")
    if reps < 1:
        raise ContractError("reps must be >= 1")
    mise = mise_curve(model, theta0, k_list, tau, r, reps, seed, level)
    slope, _ = np.polyfit(np.log(k_arr), np.log(mise), 1)
    return float(slope)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def csv_text(report: McReport) -> str:
    b = len(report.config.theta0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep", "n", "k", "j", "J", *[f"theta_hat_{q + 1}" for q in range(b)], "obj_value", "a_n", "status", "seconds"])
    for r in report.records:
        w.writerow(
            [r.rep, r.n, r.k, r.j, r.J, *[_fmt(t) for t in r.theta_hat], _fmt(r.obj_value), int(r.a_n), r.status, _fmt(r.seconds)]
        )
    return buf.getvalue()


def _write(path, data, mode: str) -> None:
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(report: McReport, path) -> None:
    """Per-replication CSV; floats carry 17 significant digits so the file is bit-stable."""
    _write(path, csv_text(report), "w")


def summary_dict(report: McReport) -> dict:
    def arr(a):
        return None if a is None else np.asarray(a).tolist()

    out = {"config": _config_dict(report.config), "by_n": {}}
    for n, s in report.summaries.items():
        out["by_n"][str(n)] = {
            "valid": s.valid,
            "failures": s.failures,
            "mean_scaled_error": arr(s.mean),
            "cov_scaled_error": arr(s.cov),
            "info_inverse_reference": arr(s.reference),
            "variance_ratio": arr(s.variance_ratio),
            "ci_coverage": arr(s.coverage),
            "median_info_inverse_hat": arr(s.median_info_inverse),
            "skewness": arr(s.skewness),
            "excess_kurtosis": arr(s.excess_kurtosis),
        }
    return out


def _config_dict(cfg: McConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["theta0"] = list(cfg.theta0)
    d["n_list"] = list(cfg.n_list)
    return d


def emit_svg_hist(report: McReport, coordinate: int, path, n: int | None = None, bins: int = 30) -> np.ndarray:
    """Histogram of ``sqrt(n)(theta_hat_q - theta0_q)`` with the limiting normal density; returns bin counts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cfg = report.config
    if not 0 <= coordinate < len(cfg.theta0):
        raise ContractError(f"coordinate {coordinate} out of range")
    n = n if n is not None else cfg.n_list[0]
    z = report.scaled_errors(n)[:, coordinate]
    sd = float(np.sqrt(report.summaries[n].reference[coordinate, coordinate]))
    edges = np.linspace(min(z.min(initial=0.0), -4 * sd), max(z.max(initial=0.0), 4 * sd), bins + 1)
    counts, _ = np.histogram(z, bins=edges)
    with matplotlib.rc_context({"svg.hashsalt": "splineii", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(z, bins=edges, density=True, color="0.75", edgecolor="0.3")
        grid = np.linspace(edges[0], edges[-1], 400)
        ax.plot(grid, stats.norm.pdf(grid, scale=sd), color="C3")
        ax.set_xlabel(f"sqrt(n) (theta_hat_{coordinate + 1} - theta0), n = {n}")
        ax.set_ylabel("density")
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        finally:
            plt.close(fig)
    return counts
