"""Monte Carlo engine for the summary-statistic mixture model.

Every replicate draws from streams keyed by ``(seed, replicate, purpose)``,
so results do not depend on how replicates are spread over workers.
Aggregation walks replicates in index order with exactly rounded sums.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import estimators as est
from .kernels import KeyedStream, lambda_from_pvalue, norm_quantile, norm_sf
from .rao_blackwell import rao_blackwellize
from .selection import SelectionConfig, select
from .structure import SnpPairs, StructureParams, adjust

log = logging.getLogger(__name__)

# stream purposes
_EFFECTS, _NOISE, _PSEUDO = 1, 2, 3

COMPONENTS = ("valid", "pleiotropic", "outcome_only", "null")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MixtureConfig:
    beta: float = 0.2
    p: int = 200_000
    pi_x: float = 0.02
    pi_y: float = 0.01
    omega: float = 0.0
    eps_x2: float = 5e-5
    tau2: float = 5e-5
    n_x: int = 100_000
    n_y: int = 100_000
    rho: float = 0.0
    c1: float = 1.0
    c2: float = 1.0
    effect_dist: str = "normal"
    seed: int = 2024

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("p must be >= 1")
        for name in ("pi_x", "pi_y", "omega"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.pi_x + self.pi_y > 1.0:
            raise ConfigError("pi_x + pi_y must not exceed 1")
        if not self.eps_x2 > 0:
            raise ConfigError("eps_x2 must be positive")
        if not self.tau2 >= 0:
            raise ConfigError("tau2 must be non-negative")
        if self.n_x < 1 or self.n_y < 1:
            raise ConfigError("sample sizes must be positive")
        if not abs(self.rho) < 1:
            raise ConfigError("|rho| must be < 1")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigError("c1 and c2 must be positive")
        if self.effect_dist not in ("normal", "uniform"):
            raise ConfigError("effect_dist must be 'normal' or 'uniform'")
        h2 = self.heritability
        if not 0.0 < h2 < 1.0:
            raise ConfigError(f"implied heritability p*pi_x*eps_x2 = {h2:.4g} outside (0, 1)")

    @property
    def heritability(self) -> float:
        return self.p * self.pi_x * self.eps_x2

    @property
    def structure(self) -> StructureParams:
        return StructureParams(self.c1, self.c2, self.rho * math.sqrt(self.c1 * self.c2))


@dataclass
class Effects:
    gamma: np.ndarray
    alpha: np.ndarray
    Gamma: np.ndarray
    component: np.ndarray  # index into COMPONENTS


def _effect_draws(stream: KeyedStream, n: int, var: float, dist: str) -> np.ndarray:
    if dist == "uniform":
        half = math.sqrt(3.0 * var)
        return -half + 2.0 * half * stream.uniform(n)
    return stream.normal(n, scale=math.sqrt(var))


def generate_effects(cfg: MixtureConfig, stream: KeyedStream) -> Effects:
    """Assign each SNP to a mixture component and draw its true effects."""
    u = stream.uniform(cfg.p)
    cuts = np.cumsum([cfg.pi_x * (1 - cfg.omega), cfg.pi_x * cfg.omega, cfg.pi_y])
    component = np.searchsorted(cuts, u, side="right").astype(np.int8)
    gamma = np.zeros(cfg.p)
    alpha = np.zeros(cfg.p)
    has_gamma = component <= 1
    has_alpha = (component == 1) | (component == 2)
    gamma[has_gamma] = _effect_draws(stream, int(has_gamma.sum()), cfg.eps_x2, cfg.effect_dist)
    if cfg.tau2 > 0:
        alpha[has_alpha] = _effect_draws(stream, int(has_alpha.sum()), cfg.tau2, cfg.effect_dist)
    return Effects(gamma, alpha, cfg.beta * gamma + alpha, component)


def generate_summary(effects: Effects, cfg: MixtureConfig, stream: KeyedStream) -> SnpPairs:
    """Draw summary statistics around the true effects.

    True standard errors are ``c / sqrt(n)``; the recorded raw SEs are
    ``1 / sqrt(n)`` so :func:`brivw.structure.adjust` recovers the truth.
    """
    p = len(effects.gamma)
    raw_x = 1.0 / math.sqrt(cfg.n_x)
    raw_y = 1.0 / math.sqrt(cfg.n_y)
    sd_x, sd_y = cfg.c1 * raw_x, cfg.c2 * raw_y
    z1 = stream.normal(p)
    z2 = stream.normal(p)
    gamma_hat = effects.gamma + sd_x * z1
    Gamma_hat = effects.Gamma + sd_y * (cfg.rho * z1 + math.sqrt(1.0 - cfg.rho ** 2) * z2)
    return SnpPairs(ids=np.arange(p), gamma_hat=gamma_hat, se_gamma_raw=np.full(p, raw_x),
                    Gamma_hat=Gamma_hat, se_Gamma_raw=np.full(p, raw_y))


# ---------------------------------------------------------------------------
# one replicate

def _replicate(args):
    cfg, sel, methods, replicate, alpha, baseline_lambda = args
    effects = generate_effects(cfg, KeyedStream(cfg.seed, replicate, _EFFECTS))
    pairs = adjust(generate_summary(effects, cfg, KeyedStream(cfg.seed, replicate, _NOISE)),
                   cfg.structure)
    rho = cfg.structure.rho
    zstat = np.abs(pairs.gamma_hat / pairs.se_gamma)
    out = {"replicate": replicate}

    # display quantity: share of genome-wide hits with p in [5e-10, 5e-8)
    gw = zstat > _LAMBDA_5E8
    n_gw = int(gw.sum())
    out["iv_proportion"] = (int((gw & (zstat <= _LAMBDA_5E10)).sum()) / n_gw) if n_gw else math.nan

    hard = zstat > baseline_lambda
    if {"IVW", "dIVW"} & set(methods):
        sub = pairs.subset(hard)
        g_true = effects.gamma[hard]
        for m in ("IVW", "dIVW"):
            if m not in methods:
                continue
            try:
                if m == "IVW":
                    r = est.ivw(sub.gamma_hat, sub.Gamma_hat, sub.se_Gamma, sub.se_gamma, alpha)
                    pb = est.predicted_bias_ivw(g_true, sub.se_gamma, sub.se_Gamma, rho, cfg.beta)
                else:
                    r = est.divw(sub.gamma_hat, sub.se_gamma, sub.Gamma_hat, sub.se_Gamma, alpha)
                    pb = est.predicted_bias_divw(g_true, sub.se_gamma, sub.se_Gamma, rho)
                out[m] = (r.beta_hat, r.var_hat, r.n_selected, pb, None)
            except (est.EstimationError, ZeroDivisionError) as exc:
                out[m] = (math.nan, math.nan, int(hard.sum()), math.nan, str(exc))

    if {"RIVW", "BRIVW"} & set(methods):
        outcome = select(pairs, sel, KeyedStream(cfg.seed, replicate, _PSEUDO))
        for m in ("RIVW", "BRIVW"):
            if m not in methods:
                continue
            try:
                if m == "RIVW":
                    r = est.rivw(rao_blackwellize(pairs, outcome.selected, sel, 0.0), alpha)
                else:
                    r = est.brivw(rao_blackwellize(pairs, outcome.selected, sel, rho), alpha)
                out[m] = (r.beta_hat, r.var_hat, r.n_selected, math.nan, None)
            except est.EstimationError as exc:
                out[m] = (math.nan, math.nan, outcome.n_selected, math.nan, str(exc))
    return out


_LAMBDA_5E8 = lambda_from_pvalue(5e-8)
_LAMBDA_5E10 = lambda_from_pvalue(5e-10)


# ---------------------------------------------------------------------------
# aggregation

@dataclass
class McReport:
    method: str
    bias: float
    bias_proportion: float
    mse: float
    coverage: float
    rejection_rate: float
    mean_selected: float
    n_replicates: int
    mc_se_bias: float
    n_failed: int = 0
    sd_beta: float = math.nan
    mean_se: float = math.nan
    mean_predicted_bias: float = math.nan
    iv_proportion: float = math.nan


@dataclass
class McResult:
    cfg: MixtureConfig
    sel: SelectionConfig
    reports: dict
    estimates: dict = field(repr=False, default_factory=dict)  # method -> (beta_hat, var_hat) arrays
    failures: dict = field(repr=False, default_factory=dict)   # method -> [(replicate, message)]


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def _aggregate(method, rows, cfg, alpha):
    beta_true = cfg.beta
    ok = [r for r in rows if r[method][4] is None]
    failed = len(rows) - len(ok)
    b = [r[method][0] for r in ok]
    v = [r[method][1] for r in ok]
    n = len(b)
    if n == 0:
        return McReport(method, *([math.nan] * 6), n_replicates=0, mc_se_bias=math.nan,
                        n_failed=failed)
    err = [x - beta_true for x in b]
    bias = _mean(err)
    mse = _mean(e * e for e in err)
    mean_b = _mean(b)
    sd = math.sqrt(math.fsum((x - mean_b) ** 2 for x in b) / (n - 1)) if n > 1 else math.nan
    with_var = [(x, s2) for x, s2 in zip(b, v) if math.isfinite(s2)]
    z = norm_quantile(1 - alpha / 2)
    coverage = _mean(float(abs(x - beta_true) <= z * math.sqrt(s2)) for x, s2 in with_var)
    reject = _mean(float(s2 > 0 and 2 * norm_sf(abs(x) / math.sqrt(s2)) < alpha)
                   for x, s2 in with_var)
    return McReport(
        method=method, bias=bias,
        bias_proportion=bias / beta_true if beta_true != 0 else math.nan,
        mse=mse, coverage=coverage, rejection_rate=reject,
        mean_selected=_mean(r[method][2] for r in ok), n_replicates=n,
        mc_se_bias=sd / math.sqrt(n) if n > 1 else math.nan, n_failed=failed, sd_beta=sd,
        mean_se=_mean(math.sqrt(s2) for _, s2 in with_var),
        mean_predicted_bias=_mean(r[method][3] for r in ok),
        iv_proportion=_mean(r["iv_proportion"] for r in rows if math.isfinite(r["iv_proportion"])),
    )


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_mc(cfg: MixtureConfig, sel: SelectionConfig, methods=est.METHODS, replicates: int = 200,
           alpha: float = 0.05, workers: int = 1, baseline_lambda: float | None = None) -> McResult:
    """Simulate ``replicates`` datasets and score every requested method.

    ``baseline_lambda`` is the deterministic cutoff ``|gamma_hat/se| > lambda``
    used by IVW and dIVW (defaults to ``sel.lambda_``; 0 keeps every SNP).
    RIVW and BRIVW always use randomized selection with ``sel``.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    unknown = set(methods) - set(est.METHODS)
    if unknown or not methods:
        raise ConfigError(f"unknown or empty method list: {sorted(unknown) or methods}")
    methods = tuple(m for m in est.METHODS if m in set(methods))
    if baseline_lambda is None:
        baseline_lambda = sel.lambda_
    tasks = [(cfg, sel, methods, r, alpha, baseline_lambda) for r in range(replicates)]
    if workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate, tasks, chunksize=max(1, replicates // (4 * workers))))
    else:
        rows = [_replicate(t) for t in tasks]
    rows.sort(key=lambda r: r["replicate"])
    reports, estimates, failures = {}, {}, {}
    for m in methods:
        reports[m] = _aggregate(m, rows, cfg, alpha)
        estimates[m] = (np.array([r[m][0] for r in rows]), np.array([r[m][1] for r in rows]))
        failures[m] = [(r["replicate"], r[m][4]) for r in rows if r[m][4] is not None]
        if failures[m]:
            log.warning("%s: %d of %d replicates failed", m, len(failures[m]), replicates)
    return McResult(cfg, sel, reports, estimates, failures)


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class Cell:
    cfg: MixtureConfig
    sel: SelectionConfig
    baseline_lambda: float | None = None


def expand_grid(base: MixtureConfig, sel: SelectionConfig, tie_tau2: bool = False,
                tie_pi_y: bool = False, **axes):
    """Cartesian product over the named axes.

    Axes named after :class:`MixtureConfig` fields vary the data model;
    ``lambda_`` and ``eta`` vary the selection. Infeasible combinations
    (e.g. heritability outside (0, 1)) are excluded and returned separately.
    """
    mix_names = {f.name for f in fields(MixtureConfig)}
    sel_names = {"lambda_", "eta"}
    bad = set(axes) - mix_names - sel_names
    if bad:
        raise ConfigError(f"unknown grid axes: {sorted(bad)}")
    names = list(axes)
    cells, excluded = [], []
    for combo in itertools.product(*(axes[n] for n in names)):
        mix = {n: v for n, v in zip(names, combo) if n in mix_names}
        if tie_tau2 and "eps_x2" in mix:
            mix["tau2"] = mix["eps_x2"]
        if tie_pi_y and "pi_x" in mix:
            mix["pi_y"] = mix["pi_x"]
        s = replace(sel, **{n: v for n, v in zip(names, combo) if n in sel_names})
        try:
            cells.append(Cell(replace(base, **mix), s))
        except ConfigError as exc:
            excluded.append((dict(zip(names, combo)), str(exc)))
    return cells, excluded


METRICS = ("bias", "bias_proportion", "mse", "coverage", "rejection_rate", "mean_selected",
           "n_replicates", "mc_se_bias", "n_failed", "sd_beta", "mean_se", "mean_predicted_bias",
           "iv_proportion")


def sweep(cells, methods=est.METHODS, replicates: int = 200, alpha: float = 0.05,
          workers: int = 1):
    """Run :func:`run_mc` on every cell; returns the list of :class:`McResult`."""
    if not cells:
        raise ConfigError("empty grid")
    results = []
    for i, cell in enumerate(cells):
        log.info("cell %d/%d: %s", i + 1, len(cells), cell.cfg)
        results.append(run_mc(cell.cfg, cell.sel, methods, replicates, alpha, workers,
                              cell.baseline_lambda))
    return results


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


CELL_COLUMNS = ("beta", "p", "pi_x", "pi_y", "omega", "eps_x2", "tau2", "n_x", "n_y", "rho",
                "c1", "c2", "effect_dist", "seed", "lambda", "eta")


def write_long_csv(results, fh):
    """One row per cell x method x metric."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["cell", *CELL_COLUMNS, "method", "metric", "value"])
    for i, res in enumerate(results):
        c = asdict(res.cfg)
        cell_vals = [c[k] for k in CELL_COLUMNS[:-2]] + [res.sel.lambda_, res.sel.eta]
        for m, rep in res.reports.items():
            for metric in METRICS:
                w.writerow([i, *map(_fmt, cell_vals), m, metric, _fmt(getattr(rep, metric))])


def summary_json(results) -> str:
    def clean(d):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}
    payload = [{"cell": i, "config": asdict(r.cfg), "lambda": r.sel.lambda_, "eta": r.sel.eta,
                "reports": {m: clean(asdict(rep)) for m, rep in r.reports.items()},
                "failures": {m: len(f) for m, f in r.failures.items()}}
               for i, r in enumerate(results)]
    return json.dumps(payload, indent=2, sort_keys=True)


def sample_example1(gamma_over_sigma: float, Gamma_over_sigma: float, rho: float,
                    sel: SelectionConfig, n: int, stream: KeyedStream):
    """Standardized draws of the single-SNP model, returning only the selected ones.

    Returns ``(gamma_std, Gamma_std, z)`` arrays of the selected draws on the
    unit-variance scale. Brute-force rejection; used to draw the empirical
    post-selection densities.
    """
    x = stream.normal(n)
    y = rho * x + math.sqrt(1 - rho * rho) * stream.normal(n)
    z = sel.eta * stream.normal(n)
    g = gamma_over_sigma + x
    G = Gamma_over_sigma + y
    keep = np.abs(g + z) > sel.lambda_
    return g[keep], G[keep], z[keep]
