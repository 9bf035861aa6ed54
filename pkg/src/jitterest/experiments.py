"""Seeded simulation studies: estimator MSE, CRB comparison, EM convergence and more.

Every experiment is a pure function of its :class:`ExperimentConfig`.
Trial ``t`` uses seed ``base_seed + t``: the true coefficients come from
``default_rng((seed, 1))`` and the jitter/noise from ``default_rng(seed)``
(see :func:`jitterest.model.generate_samples`). The same seed is reused at
every grid point, so sweeps use common random numbers.

Trials may run in a process pool; records are collected in submission
order, so outputs do not depend on the number of workers.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import csvio
from .crb import CRB_J, DEFAULT_S, crb_values
from .em import EmSettings, Init, run_em
from .likelihood import LikelihoodContext
from .linear import IllConditionedError, blue_diagnostic, expected_H, linear_nojitter, linear_unbiased
from .model import ModelConfig, generate_samples, sinc

log = logging.getLogger(__name__)

Z95 = 1.96


class Kind(str, enum.Enum):
    HISTOGRAM = "histogram"
    CONVERGENCE = "convergence"
    INIT = "init"
    BLUE = "blue"
    CRB = "crb"
    MSE = "mse"
    IMPROVEMENT = "improvement"


_KIND_ALIASES = {
    "HistogramValidation": Kind.HISTOGRAM,
    "Convergence": Kind.CONVERGENCE,
    "InitSensitivity": Kind.INIT,
    "BlueInvalidity": Kind.BLUE,
    "CrbComparison": Kind.CRB,
    "MsePerformance": Kind.MSE,
    "JitterImprovement": Kind.IMPROVEMENT,
}


def parse_kind(value) -> Kind:
    if isinstance(value, Kind):
        return value
    return _KIND_ALIASES.get(value) or Kind(value)


def log_grid(lo, hi, num):
    return [float(v) for v in np.geomspace(lo, hi, num)]


_SZ_SWEEP = [0.01, 0.02, 0.03, 0.05, 0.07, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5]

# full-scale settings; a config file overrides any of these
DEFAULT_GRIDS = {
    Kind.HISTOGRAM: dict(K=[10], M=[4], sigma_z=[0.75], sigma_w=[0.1], J=[129]),
    Kind.CONVERGENCE: dict(K=[10], M=[4], sigma_z=[0.1, 0.25, 0.4], sigma_w=[0.1], J=[100]),
    Kind.INIT: dict(K=[10], M=[8], sigma_z=[0.05, 0.25], sigma_w=[0.25], J=[100]),
    Kind.BLUE: dict(K=[3], M=[2], sigma_z=[0.25], sigma_w=[0.25], J=[100]),
    Kind.CRB: dict(K=[10], M=[16], sigma_z=[0.01, 0.05, 0.1, 0.2], sigma_w=[0.05], J=[100]),
    Kind.MSE: dict(K=[10], M=[16], sigma_z=_SZ_SWEEP, sigma_w=[0.05], J=[100]),
    Kind.IMPROVEMENT: dict(K=[10], M=[16], sigma_z=_SZ_SWEEP, sigma_w=[0.05], J=[100]),
}

_EM_OPTIONS = dict(I_max=100, delta=1e-8, epsilon=1e-8)
DEFAULT_OPTIONS = {
    Kind.HISTOGRAM: dict(samples=100_000, bin_width=0.05, n=None, min_expected=5.0),
    Kind.CONVERGENCE: dict(I_max=500, tol=1e-8),
    Kind.INIT: dict(_EM_OPTIONS, n_random=10),
    Kind.BLUE: dict(points=21, scale=2.0),
    Kind.CRB: dict(_EM_OPTIONS, S=DEFAULT_S, crb_J=CRB_J),
    Kind.MSE: dict(_EM_OPTIONS),
    Kind.IMPROVEMENT: dict(_EM_OPTIONS),
}

GRID_KEYS = ("K", "M", "sigma_z", "sigma_w", "J")
CONFIG_KEYS = {"kind", "grid", "trials", "base_seed", "output_path", "options"}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: parameter grid, trial count and seeding.

    ``grid`` maps each of K, M, sigma_z, sigma_w, J to a list of values;
    missing entries take the kind's defaults. ``options`` holds the
    kind-specific knobs listed in ``DEFAULT_OPTIONS``.
    """

    kind: Kind
    grid: dict = field(default_factory=dict)
    trials: int = 100
    base_seed: int = 0
    output_path: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = parse_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.grid) - set(GRID_KEYS)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        grid = {k: list(v) for k, v in DEFAULT_GRIDS[kind].items()}
        for k, v in self.grid.items():
            grid[k] = list(v) if isinstance(v, (list, tuple)) else [v]
        for k in GRID_KEYS:
            if not grid[k] or any(not (isinstance(v, (int, float)) and v > 0) for v in grid[k]):
                raise ValueError(f"grid values for {k} must be positive numbers")
            if k in ("K", "M", "J") and any(int(v) != v for v in grid[k]):
                raise ValueError(f"grid values for {k} must be integers")
            grid[k] = [int(v) if k in ("K", "M", "J") else float(v) for v in grid[k]]
        object.__setattr__(self, "grid", grid)
        unknown = set(self.options) - set(DEFAULT_OPTIONS[kind])
        if unknown:
            raise ValueError(f"unknown options for {kind.value}: {sorted(unknown)}")
        object.__setattr__(self, "options", {**DEFAULT_OPTIONS[kind], **self.options})
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("config needs a 'kind'")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def points(self):
        """Grid points as ``(ModelConfig, J)`` in a fixed order, sigma_z varying fastest."""
        g = self.grid
        for K, M, sw, J, sz in itertools.product(g["K"], g["M"], g["sigma_w"], g["J"], g["sigma_z"]):
            yield ModelConfig(int(K), int(M), float(sz), float(sw)), int(J)

    def em_settings(self, J) -> EmSettings:
        o = self.options
        return EmSettings(I_max=int(o["I_max"]), J=J, delta=float(o.get("delta", 0.0)),
                          epsilon=float(o.get("epsilon", 0.0)))


@dataclass
class TrialRecord:
    K: int
    M: int
    sigma_z: float
    sigma_w: float
    J: int
    trial: int
    seed: int
    estimator: str
    ok: bool
    sq_error: float = math.nan
    mse: float = math.nan
    mean_error: float = math.nan
    error: tuple = ()
    iterations: int = 0
    termination: str = ""
    wall_time: float = 0.0


# wall_time is kept in memory but not written, so CSVs stay reproducible
RECORD_COLUMNS = [f.name for f in dataclasses.fields(TrialRecord) if f.name != "wall_time"]


@dataclass
class ExperimentResult:
    kind: Kind
    records: list
    summary: list
    tables: dict = field(default_factory=dict)
    files: list = field(default_factory=list)


def trial_truth(K: int, seed: int) -> np.ndarray:
    """True coefficients for one trial, ``x ~ N(0, I_K)``."""
    return np.random.default_rng((seed, 1)).standard_normal(K)


@lru_cache(maxsize=16)
def _context(cfg: ModelConfig, J: int) -> LikelihoodContext:
    return LikelihoodContext(cfg, J)


@lru_cache(maxsize=16)
def _expected(cfg: ModelConfig, J: int):
    return expected_H(cfg, _context(cfg, J).rule)


def _run_pool(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
        chunk = max(1, len(items) // (4 * threads))
        return list(pool.map(fn, items, chunksize=chunk))


def _record(cfg, J, trial, seed, name, x, estimate, **extra):
    base = dict(K=cfg.K, M=cfg.M, sigma_z=cfg.sigma_z, sigma_w=cfg.sigma_w, J=J, trial=trial, seed=seed,
                estimator=name)
    if estimate is None:
        return TrialRecord(ok=False, **base, **extra)
    err = np.asarray(estimate) - x
    sq = float(err @ err)
    return TrialRecord(ok=True, sq_error=sq, mse=sq / cfg.K, mean_error=float(err.mean()),
                       error=tuple(float(v) for v in err), **base, **extra)


def _estimator_trial(job):
    """Run the linear estimators and EM on one seeded sample set."""
    cfg, J, trial, seed, settings, x, estimators = job
    if x is None:
        x = trial_truth(cfg.K, seed)
    samples = generate_samples(cfg, x, seed)
    out = []
    for name in estimators:
        t0 = time.perf_counter()
        extra = {}
        try:
            if name == "nojitter":
                est = linear_nojitter(cfg, samples)
            elif name == "linear":
                est = linear_unbiased(cfg, _expected(cfg, J), samples)
            else:
                tr = run_em(cfg, samples, settings, ctx=_context(cfg, J))
                est = tr.final
                extra = dict(iterations=tr.iterations, termination=tr.termination.value)
        except IllConditionedError as exc:
            log.warning("trial %d %s failed: %s", trial, name, exc)
            est = None
        out.append(_record(cfg, J, trial, seed, name, x, est, wall_time=time.perf_counter() - t0, **extra))
    return out


def _mean_ci(values):
    v = np.asarray([a for a in values if np.isfinite(a)], dtype=float)
    if len(v) == 0:
        return math.nan, math.nan, 0
    half = Z95 * v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else math.nan
    return float(v.mean()), float(half), len(v)


def _point_key(r):
    return (r.K, r.M, r.sigma_z, r.sigma_w, r.J)


def _group(records):
    groups = {}
    for r in records:
        groups.setdefault((_point_key(r), r.estimator), []).append(r)
    return groups


def summarize_mse(records, metric="mse"):
    """Mean and 95% CI of ``metric`` per grid point and estimator (failures excluded)."""
    rows = []
    for ((K, M, sz, sw, J), name), recs in _group(records).items():
        ok = [r for r in recs if r.ok]
        mean, half, n = _mean_ci([getattr(r, metric) for r in ok])
        its = [r.iterations for r in ok]
        rows.append(dict(K=K, M=M, sigma_z=sz, sigma_w=sw, J=J, estimator=name, trials=n,
                         failures=len(recs) - len(ok), mean=mean, ci_half=half,
                         median_iterations=float(np.median(its)) if name == "em" and its else math.nan))
    return rows


def _finish(cfg: ExperimentConfig, result: ExperimentResult, out_dir=None, record_columns=RECORD_COLUMNS):
    out_dir = out_dir if out_dir is not None else cfg.output_path
    if out_dir is None:
        return result
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg.kind.value
    if result.records:
        rows = [dataclasses.asdict(r) for r in result.records] if dataclasses.is_dataclass(
            result.records[0]) else result.records
        result.files.append(csvio.write_rows(out / f"{name}.csv", rows, record_columns))
    for tname, rows in result.tables.items():
        result.files.append(csvio.write_rows(out / f"{name}_{tname}.csv", rows))
    result.files.append(csvio.write_rows(out / "summary.csv", result.summary))
    return result


# ---------------------------------------------------------------- MSE sweep

def _mse_records(cfg: ExperimentConfig, threads: int, estimators=("nojitter", "linear", "em")):
    jobs = [(pt, J, t, cfg.base_seed + t, cfg.em_settings(J), None, estimators)
            for pt, J in cfg.points() for t in range(cfg.trials)]
    return [r for recs in _run_pool(_estimator_trial, jobs, threads) for r in recs]


def run_mse_sweep(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """MSE, ``||x_hat - x||^2 / K``, of the no-jitter, unbiased linear and EM estimators."""
    records = _mse_records(cfg, threads)
    return _finish(cfg, ExperimentResult(cfg.kind, records, summarize_mse(records)), out_dir)


# ---------------------------------------------------------------- CRB comparison

def run_crb_comparison(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """Bounds versus empirical total squared error at one fixed random ``x``.

    Per grid point: ``crb_y`` (with its Monte Carlo standard error),
    ``crb_yz``, and for the linear unbiased and EM estimators the mean of
    ``||x_hat - x||^2`` with 95% CI and the RMS of the empirical bias vector.
    """
    o = cfg.options
    records, summary = [], []
    for pt, J in cfg.points():
        x = trial_truth(pt.K, cfg.base_seed)
        fe = crb_values(pt, x, S=int(o["S"]), seed=cfg.base_seed, J=int(o["crb_J"]))
        jobs = [(pt, J, t, cfg.base_seed + t, cfg.em_settings(J), x, ("linear", "em"))
                for t in range(cfg.trials)]
        recs = [r for rs in _run_pool(_estimator_trial, jobs, threads) for r in rs]
        records.extend(recs)
        row = dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, S=fe.S, crb_J=fe.J,
                   crb_y=fe.crb_y, crb_y_se=fe.crb_y_se, crb_yz=fe.crb_yz, cond_y=fe.cond_y,
                   cond_yz=fe.cond_yz)
        for name in ("linear", "em"):
            ok = [r for r in recs if r.estimator == name and r.ok]
            mean, half, n = _mean_ci([r.sq_error for r in ok])
            bias = np.mean([r.error for r in ok], axis=0) if ok else np.full(pt.K, np.nan)
            row.update({f"{name}_trials": n, f"{name}_failures": cfg.trials - n, f"{name}_mse": mean,
                        f"{name}_ci_half": half, f"{name}_rms_bias": float(np.sqrt(np.mean(bias**2)))})
        summary.append(row)
    return _finish(cfg, ExperimentResult(cfg.kind, records, summary), out_dir)


# ---------------------------------------------------------------- convergence

def iterations_to_tol(steps, tol):
    """First iteration whose step is below ``tol``; ``None`` if it never is."""
    for i, s in enumerate(steps, start=1):
        if s < tol:
            return i
    return None


def tail_log_slope(errors, lo=1e-10, hi=1e-4):
    """Least-squares fit of ``log(error)`` against iteration where ``lo < error < hi``.

    Returns ``(slope, r_squared, points)``; slope is NaN with fewer than
    five usable points.
    """
    e = np.asarray(errors, dtype=float)
    i = np.flatnonzero((e > lo) & (e < hi))
    if len(i) < 5:
        return math.nan, math.nan, len(i)
    le = np.log(e[i])
    A = np.vstack([i, np.ones_like(i)]).T.astype(float)
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    resid = le - A @ coef
    ss = np.sum((le - le.mean()) ** 2)
    r2 = 1.0 - resid @ resid / ss if ss > 0 else 1.0
    return float(coef[0]), float(r2), len(i)


def _convergence_trial(job):
    pt, J, trial, seed, settings = job
    x = trial_truth(pt.K, seed)
    tr = run_em(pt, generate_samples(pt, x, seed), settings, ctx=_context(pt, J))
    return tr.distance_to_final(), tr.loglik_gap(), np.asarray(tr.steps)


def run_convergence(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """Full fixed-length EM traces (stopping tests disabled), summarized per grid point.

    The ``curves`` table holds, per iteration, the median over trials of
    the distance to the final iterate, the log-likelihood gap to the final
    value, and the step length.
    """
    o = cfg.options
    tol = float(o["tol"])
    records, summary, curves = [], [], []
    for pt, J in cfg.points():
        settings = EmSettings(I_max=int(o["I_max"]), J=J, delta=0.0, epsilon=0.0)
        jobs = [(pt, J, t, cfg.base_seed + t, settings) for t in range(cfg.trials)]
        traces = _run_pool(_convergence_trial, jobs, threads)
        its, slopes, r2s, reached = [], [], [], 0
        for t, (dist, gap, steps) in enumerate(traces):
            hit = iterations_to_tol(steps, tol)
            slope, r2, npts = tail_log_slope(dist)
            its.append(hit if hit is not None else int(o["I_max"]))
            reached += hit is not None
            slopes.append(slope)
            r2s.append(r2)
            records.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, trial=t,
                                seed=cfg.base_seed + t, iterations_to_tol=its[-1], reached=hit is not None,
                                tail_slope=slope, tail_r2=r2, tail_points=npts))
        D = np.array([d for d, _, _ in traces])
        G = np.array([g for _, g, _ in traces])
        St = np.array([s for _, _, s in traces])
        for i in range(D.shape[1]):
            curves.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, iteration=i,
                               distance_to_final=float(np.median(D[:, i])),
                               loglik_gap=float(np.median(G[:, i])),
                               step=float(np.median(St[:, i - 1])) if i else math.nan))
        mean, half, n = _mean_ci(its)
        summary.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, trials=n,
                            median_iterations=float(np.median(its)), mean_iterations=mean, ci_half=half,
                            reached=reached,
                            median_tail_slope=float(np.nanmedian(slopes)) if np.any(np.isfinite(slopes)) else math.nan,
                            median_tail_r2=float(np.nanmedian(r2s)) if np.any(np.isfinite(r2s)) else math.nan))
    res = ExperimentResult(cfg.kind, records, summary, {"curves": curves})
    return _finish(cfg, res, out_dir, record_columns=None)


# ---------------------------------------------------------------- initialization sensitivity

def _init_trial(job):
    pt, J, trial, seed, settings, n_random = job
    x = trial_truth(pt.K, seed)
    samples = generate_samples(pt, x, seed)
    ctx = _context(pt, J)
    starts = [("true", dict(x_true=x), Init.TRUE), ("nojitter", {}, Init.NOJITTER), ("zero", {}, Init.ZERO)]
    starts += [(f"random{r}", {}, Init.RANDOM) for r in range(n_random)]
    out = []
    for r, (label, kw, init) in enumerate(starts):
        s = dataclasses.replace(settings, init=init, seed=(seed, 2, r))
        tr = run_em(pt, samples, s, ctx=ctx, **kw)
        out.append((label, tr.loglik[-1], tr.iterations, tr.termination.value))
    return out


def run_init_sensitivity(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """Final EM log-likelihood from 3 + ``n_random`` starting points, relative to the no-jitter start.

    Per trial, ``spread`` is the range of the final log-likelihoods and
    ``nojitter_gap`` the best value minus the no-jitter start's value.
    """
    o = cfg.options
    records, summary = [], []
    for pt, J in cfg.points():
        jobs = [(pt, J, t, cfg.base_seed + t, cfg.em_settings(J), int(o["n_random"]))
                for t in range(cfg.trials)]
        spreads, gaps = [], []
        for t, runs in enumerate(_run_pool(_init_trial, jobs, threads)):
            ref = dict((lab, ll) for lab, ll, _, _ in runs)["nojitter"]
            lls = [ll for _, ll, _, _ in runs]
            spreads.append(max(lls) - min(lls))
            gaps.append(max(lls) - ref)
            for lab, ll, its, term in runs:
                records.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, trial=t,
                                    seed=cfg.base_seed + t, init=lab, loglik=ll, relative_loglik=ll - ref,
                                    iterations=its, termination=term))
        mean, half, n = _mean_ci(spreads)
        gmean, ghalf, _ = _mean_ci(gaps)
        summary.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, trials=n,
                            median_spread=float(np.median(spreads)), mean_spread=mean, ci_half=half,
                            frac_spread_below_tol=float(np.mean(np.asarray(spreads) < 1e-3)),
                            median_nojitter_gap=float(np.median(gaps)), mean_nojitter_gap=gmean,
                            gap_ci_half=ghalf))
    return _finish(cfg, ExperimentResult(cfg.kind, records, summary), out_dir, record_columns=None)


# ---------------------------------------------------------------- BLUE invalidity

def run_blue_invalidity(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """BLUE estimates for one fixed ``y`` as the assumed coefficients move along a line.

    ``x_assumed = t d`` for ``t`` in ``[0, scale]`` with a seeded random
    direction ``d``; the first row (``t = 0``) is compared bit for bit with
    the unbiased linear estimate.
    """
    o = cfg.options
    rows, summary = [], []
    for pt, J in cfg.points():
        x = trial_truth(pt.K, cfg.base_seed)
        samples = generate_samples(pt, x, cfg.base_seed)
        rule = _context(pt, J).rule
        EH = expected_H(pt, rule)
        lin = linear_unbiased(pt, EH, samples)
        d = np.random.default_rng((cfg.base_seed, 3)).standard_normal(pt.K)
        ests = []
        for t in np.linspace(0.0, float(o["scale"]), int(o["points"])):
            xa = t * d
            est = blue_diagnostic(pt, xa, samples, rule, EH)
            ests.append(est)
            row = dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, t=float(t))
            row.update({f"x_assumed_{k}": float(v) for k, v in enumerate(xa)})
            row.update({f"blue_{k}": float(v) for k, v in enumerate(est)})
            rows.append(row)
        ests = np.array(ests)
        variation = ests.max(axis=0) - ests.min(axis=0)
        summary.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, trials=1,
                            ci_half=math.nan, points=len(ests), max_variation=float(variation.max()),
                            **{f"variation_{k}": float(v) for k, v in enumerate(variation)},
                            equals_linear_at_zero=bool(np.array_equal(ests[0], lin))))
    return _finish(cfg, ExperimentResult(cfg.kind, rows, summary), out_dir, record_columns=None)


# ---------------------------------------------------------------- jitter-tolerance improvement

def _envelope(logs, logm, floor):
    """Running-max MSE curve in log-log space, truncated to ``log sigma >= floor``."""
    logm = np.maximum.accumulate(logm)
    if floor > logs[-1]:
        return None
    if floor > logs[0]:
        k = np.searchsorted(logs, floor)
        start = np.interp(floor, logs[k - 1:k + 1], logm[k - 1:k + 1])
        logs = np.concatenate([[floor], logs[k:]])
        logm = np.concatenate([[start], logm[k:]])
    return logs, logm


def _inverse(logs, logm, level):
    """Smallest log sigma at which the nondecreasing curve reaches ``level``."""
    k = int(np.searchsorted(logm, level, side="left"))
    if k == 0:
        return logs[0]
    if logm[k] == logm[k - 1]:
        return logs[k - 1]
    f = (level - logm[k - 1]) / (logm[k] - logm[k - 1])
    return logs[k - 1] + f * (logs[k] - logs[k - 1])


def improvement_factor(sigma_a, mse_a, sigma_b, mse_b, sigma_min=0.0):
    """Largest horizontal ratio ``sigma_a(m) / sigma_b(m)`` between two MSE-vs-sigma curves.

    Curves are piecewise linear in log-log coordinates, made monotone by a
    running maximum (so sigma(m) is the first crossing of level m), and
    restricted to ``sigma >= sigma_min``. The maximum over the overlapping
    MSE range is attained at a vertex level of one of the curves.

    Returns
    -------
    factor : float or None
        ``None`` when the curves share no MSE range.
    sigma_star : float or None
        The ``sigma_a`` at which the maximum occurs.
    """
    ca = _envelope(np.log(sigma_a), np.log(mse_a), math.log(sigma_min) if sigma_min > 0 else -np.inf)
    cb = _envelope(np.log(sigma_b), np.log(mse_b), math.log(sigma_min) if sigma_min > 0 else -np.inf)
    if ca is None or cb is None:
        return None, None
    lo = max(ca[1][0], cb[1][0])
    hi = min(ca[1][-1], cb[1][-1])
    if not lo <= hi:
        return None, None
    levels = np.concatenate([ca[1], cb[1]])
    levels = np.unique(levels[(levels >= lo) & (levels <= hi)])
    best, star = -np.inf, None
    for m in levels:
        sa = _inverse(*ca, m)
        dist = sa - _inverse(*cb, m)
        if dist > best:
            best, star = dist, sa
    return float(math.exp(best)), float(math.exp(star))


def improvement_table(summary):
    """Improvement factor per (K, M, sigma_w, J) from :func:`summarize_mse` rows.

    Returns ``(curves, rows)``: the paired EM / linear MSE curves and one
    row per curve pair with the factor and the EM sigma_z where it peaks.
    """
    stats = {(r["K"], r["M"], r["sigma_w"], r["J"], r["estimator"], r["sigma_z"]): r for r in summary}
    keys = sorted({k[:4] for k in stats})
    curves, rows = [], []
    for K, M, sw, J in keys:
        sz = sorted(k[5] for k in stats if k[:4] == (K, M, sw, J) and k[4] == "em")
        em = [stats[(K, M, sw, J, "em", s)] for s in sz]
        lin = [stats[(K, M, sw, J, "linear", s)] for s in sz]
        for s, a, b in zip(sz, em, lin):
            curves.append(dict(K=K, M=M, sigma_w=sw, J=J, sigma_z=s, trials=min(a["trials"], b["trials"]),
                               em_mse=a["mean"], em_ci_half=a["ci_half"], linear_mse=b["mean"],
                               linear_ci_half=b["ci_half"]))
        factor, star = improvement_factor(sz, [r["mean"] for r in em], sz, [r["mean"] for r in lin], sw)
        near = min(em, key=lambda r: abs(math.log(r["sigma_z"] / star))) if star else em[0]
        rows.append(dict(K=K, M=M, sigma_w=sw, J=J, trials=near["trials"], measurable=factor is not None,
                         factor=factor if factor is not None else math.nan,
                         sigma_star=star if star is not None else math.nan, ci_half=near["ci_half"]))
    return curves, rows


def run_jitter_improvement(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """Maximum jitter-tolerance gain of EM over the unbiased linear estimator.

    For each (K, M, sigma_w, J) the sigma_z grid gives two mean-MSE curves;
    :func:`improvement_factor` compares them over ``sigma_z >= sigma_w``.
    ``ci_half`` in the summary is the EM MSE half-width at the grid point
    nearest ``sigma_star``.
    """
    records = _mse_records(cfg, threads, estimators=("linear", "em"))
    curves, rows = improvement_table(summarize_mse(records))
    res = ExperimentResult(cfg.kind, records, rows, {"curves": curves})
    return _finish(cfg, res, out_dir)


# ---------------------------------------------------------------- histogram validation

def mixture_bin_masses(means, weights, sigma_w, edges):
    """Probability of each bin under ``sum_j w_j N(means_j, sigma_w^2)``."""
    cdf = ndtr((edges[:, None] - means[None, :]) / sigma_w) @ weights
    return np.diff(cdf)


def histogram_check(ctx: LikelihoodContext, x, n: int, samples: int, bin_width: float, rng,
                    min_expected: float = 5.0):
    """Compare the quadrature density of ``y_n`` with a histogram of direct draws.

    Returns a dict with per-bin arrays (``edges``, ``observed``, ``expected``
    probabilities, ``z`` scores, ``scored`` mask) and the pass fraction at
    3 binomial standard errors. Only bins whose expected count is at least
    ``min_expected`` are scored; below that the normal approximation behind
    the standard error breaks down, and the outermost bins always hold at
    least one draw because the edges follow the sample range.
    """
    cfg = ctx.cfg
    t = n / cfg.M + cfg.sigma_z * rng.standard_normal(samples)
    y = sinc(t[:, None] - np.arange(cfg.K)) @ x + cfg.sigma_w * rng.standard_normal(samples)
    lo = math.floor(y.min() / bin_width) * bin_width
    hi = math.ceil(y.max() / bin_width) * bin_width
    edges = lo + bin_width * np.arange(round((hi - lo) / bin_width) + 1)
    counts, _ = np.histogram(y, edges)
    observed = counts / samples
    expected = mixture_bin_masses(ctx.rows(n) @ x, ctx.weights, cfg.sigma_w, edges)
    se = np.sqrt(np.clip(expected * (1 - expected), 0, None) / samples)
    dev = np.abs(observed - expected)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev == 0, 0.0, np.inf))
    scored = expected * samples >= min_expected
    zs = z[scored]
    return dict(n=n, edges=edges, observed=observed, expected=expected, z=z, scored=scored,
                pass_fraction=float(np.mean(zs <= 3.0)) if zs.size else float("nan"),
                sup_norm=float(dev.max() / bin_width), max_z=float(zs.max()) if zs.size else float("nan"),
                bins=int(scored.sum()))


def run_histogram_validation(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    """Quadrature marginal density versus a histogram of simulated samples, for each ``n``.

    The worst ``n`` (lowest pass fraction, then largest z score) is
    reported in the summary and its bin-by-bin comparison in the ``curve``
    table.
    """
    o = cfg.options
    records, summary, curve = [], [], []
    for pt, J in cfg.points():
        x = trial_truth(pt.K, cfg.base_seed)
        ctx = _context(pt, J)
        rng = np.random.default_rng((cfg.base_seed, 4))
        ns = range(pt.N) if o["n"] is None else [int(o["n"])]
        checks = [histogram_check(ctx, x, n, int(o["samples"]), float(o["bin_width"]), rng,
                                  float(o["min_expected"])) for n in ns]
        for c in checks:
            records.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, n=c["n"],
                                bins=c["bins"], pass_fraction=c["pass_fraction"], sup_norm=c["sup_norm"],
                                max_z=c["max_z"]))
        worst = min(checks, key=lambda c: (c["pass_fraction"], -c["max_z"]))
        e = worst["edges"]
        bw = float(o["bin_width"])
        for i in range(len(e) - 1):
            curve.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J, n=worst["n"],
                              bin_center=0.5 * (e[i] + e[i + 1]), empirical_density=worst["observed"][i] / bw,
                              quadrature_density=worst["expected"][i] / bw, z=worst["z"][i],
                              scored=bool(worst["scored"][i])))
        summary.append(dict(K=pt.K, M=pt.M, sigma_z=pt.sigma_z, sigma_w=pt.sigma_w, J=J,
                            family=ctx.family.value, trials=int(o["samples"]), ci_half=math.nan,
                            worst_n=worst["n"], worst_pass_fraction=worst["pass_fraction"],
                            worst_sup_norm=worst["sup_norm"], min_pass_fraction_all_n=min(
                                c["pass_fraction"] for c in checks)))
    res = ExperimentResult(cfg.kind, records, summary, {"curve": curve})
    return _finish(cfg, res, out_dir, record_columns=None)


RUNNERS = {
    Kind.HISTOGRAM: run_histogram_validation,
    Kind.CONVERGENCE: run_convergence,
    Kind.INIT: run_init_sensitivity,
    Kind.BLUE: run_blue_invalidity,
    Kind.CRB: run_crb_comparison,
    Kind.MSE: run_mse_sweep,
    Kind.IMPROVEMENT: run_jitter_improvement,
}


def run(cfg: ExperimentConfig, threads: int = 1, out_dir=None) -> ExperimentResult:
    threads = threads or os.cpu_count() or 1
    return RUNNERS[cfg.kind](cfg, threads=threads, out_dir=out_dir)
