"""Monte Carlo scenario runs and the two desk-scale table presets.

A replicate is (generate one study, run every requested estimator on it).
Replicates are independent given (seed, replicate index), so they run on a
thread pool and are collected back in index order before any aggregation.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tables
from .core import Design, EstimateReport, Method, ScenarioConfig, StudyDataset, TrueEffects
from .datagen import GenerativeParams, gen_study
from .errors import ConstantColumn, NcoError, ZeroTruth
from .estimators import estimate
from .oracle import calibrated_params, true_effects

log = logging.getLogger(__name__)

# Parameter names carrying beta1* / beta2* in each method's report.
_COMPONENTS = {
    Method.JointNC: ("beta1", "beta2"),
    Method.JointMH: ("beta1", "beta2"),
    Method.JointReg: ("y1:beta", "y2:beta"),
    Method.NaiveMH: ("beta1", None),
    Method.NaiveReg: ("y1:beta", None),
    Method.SSJoint: (None, None),
}


def relative_bias(estimates, truth: float) -> float:
    """|mean(estimates) - truth| / |truth|."""
    est = np.asarray(estimates, dtype=float)
    if truth == 0:
        raise ZeroTruth()
    if est.size == 0:
        raise ValueError("no estimates")
    return float(abs(est.mean() - truth) / abs(truth))


def signed_relative_bias(estimates, truth: float) -> float:
    if truth == 0:
        raise ZeroTruth()
    return float((np.mean(estimates) - truth) / abs(truth))


def corr_y1_y2(data: StudyDataset) -> float:
    """Pearson correlation of Y1 and total Y2 across subjects."""
    y1 = data.y1.astype(float)
    y2 = data.y2.astype(float)
    if np.all(y1 == y1[0]):
        raise ConstantColumn("y1")
    if np.all(y2 == y2[0]):
        raise ConstantColumn("y2")
    return float(np.corrcoef(y1, y2)[0, 1])


@dataclass(frozen=True)
class ReplicateEstimate:
    replicate: int
    method: str
    contrast: float = math.nan
    contrast_se: float = math.nan
    beta1: float = math.nan
    beta1_se: float = math.nan
    beta2: float = math.nan
    beta2_se: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def value(self, quantity: str) -> tuple[float, float]:
        return getattr(self, quantity), getattr(self, f"{quantity}_se")


def _summarize(replicate: int, method: Method, rep: EstimateReport) -> ReplicateEstimate:
    vals = {"contrast": rep.contrast, "contrast_se": rep.contrast_se}
    for key, name in zip(("beta1", "beta2"), _COMPONENTS[method]):
        if name is not None:
            vals[key] = rep.param(name)
            vals[f"{key}_se"] = rep.se(name)
    return ReplicateEstimate(replicate, method.value, **vals)


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    corr: float
    estimates: tuple[ReplicateEstimate, ...]


def run_replicate(params: GenerativeParams, config: ScenarioConfig, replicate: int) -> ReplicateResult:
    data = gen_study(params, config.design, config.n, config.seed, replicate)
    try:
        corr = corr_y1_y2(data)
    except ConstantColumn:
        corr = math.nan
    out = []
    for m in config.methods:
        try:
            out.append(_summarize(replicate, m, estimate(data, m)))
        except NcoError as exc:
            out.append(ReplicateEstimate(replicate, m.value, error=type(exc).__name__))
    return ReplicateResult(replicate, corr, tuple(out))


@dataclass(frozen=True)
class MetricRow:
    method: str
    quantity: str  # contrast | beta1 | beta2
    truth_used: str  # log_nde | log_ate | log_nie
    truth_value: float
    mean_relative_bias: float
    signed_relative_bias: float
    sample_sd: float
    mean_sandwich_se: float
    n_converged: int
    n_failed: int
    degenerate: bool = False


def truth_map(design: Design) -> dict[str, str]:
    """Which true effect each reported quantity is scored against."""
    if Design(design) is Design.Observational:
        return {"contrast": "log_nde"}
    return {"contrast": "log_nde", "beta1": "log_ate", "beta2": "log_nie"}


def aggregate(method: Method, quantity: str, truth_name: str, truth: float, ests: Sequence[ReplicateEstimate]) -> MetricRow:
    good = [e for e in ests if e.ok]
    vals = np.array([e.value(quantity)[0] for e in good])
    ses = np.array([e.value(quantity)[1] for e in good])
    n_ok = len(good)
    if n_ok == 0:
        nan = math.nan
        return MetricRow(method.value, quantity, truth_name, truth, nan, nan, nan, nan, 0, len(ests), True)
    sd = float(vals.std(ddof=1)) if n_ok > 1 else 0.0
    return MetricRow(
        method=method.value,
        quantity=quantity,
        truth_used=truth_name,
        truth_value=truth,
        mean_relative_bias=relative_bias(vals, truth),
        signed_relative_bias=signed_relative_bias(vals, truth),
        sample_sd=sd,
        mean_sandwich_se=float(ses.mean()),
        n_converged=n_ok,
        n_failed=len(ests) - n_ok,
        degenerate=n_ok < 2,
    )


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    truths: TrueEffects
    rows: list[MetricRow]
    mean_corr: float
    n_corr_missing: int
    replicates: list[ReplicateResult] = field(repr=False, default_factory=list)

    def row(self, method, quantity: str = "contrast") -> MetricRow:
        method = Method(method).value
        for r in self.rows:
            if r.method == method and r.quantity == quantity:
                return r
        raise KeyError((method, quantity))

    def estimates(self, method, quantity: str = "contrast") -> np.ndarray:
        method = Method(method).value
        return np.array([e.value(quantity)[0] for r in self.replicates for e in r.estimates if e.method == method and e.ok])

    def replicate_corrs(self) -> np.ndarray:
        return np.array([r.corr for r in self.replicates])


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_scenario(config: ScenarioConfig, threads: int = 1, params: GenerativeParams | None = None) -> ScenarioResult:
    """Calibrate, compute truths, run all replicates, aggregate per method and quantity."""
    if params is None:
        params = calibrated_params(config.a_levels, config.p_y1_target, config.design)
    truths = true_effects(params, config.design)
    wanted = truth_map(config.design)
    if getattr(truths, wanted["contrast"]) == 0:
        raise ZeroTruth()

    reps = _map(lambda r: run_replicate(params, config, r), range(config.reps), threads)

    rows = []
    for m in config.methods:
        ests = [e for r in reps for e in r.estimates if e.method == m.value]
        comps = _COMPONENTS[m]
        for quantity, truth_name in wanted.items():
            if quantity == "beta1" and comps[0] is None or quantity == "beta2" and comps[1] is None:
                continue
            truth = getattr(truths, truth_name)
            if truth == 0:
                log.warning("%s %s skipped: true %s is 0", m.value, quantity, truth_name)
                continue
            rows.append(aggregate(m, quantity, truth_name, truth, ests))

    corrs = np.array([r.corr for r in reps])
    ok = np.isfinite(corrs)
    mean_corr = float(corrs[ok].mean()) if ok.any() else math.nan
    return ScenarioResult(config, truths, rows, mean_corr, int((~ok).sum()), reps)


# Output writers

ROW_FIELDS = [f for f in MetricRow.__dataclass_fields__]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(result: ScenarioResult, path) -> None:
    """Long-form CSV: one line per (method, quantity)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS + ["mean_corr_y1_y2", "n_corr_missing"])
        for r in result.rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in ROW_FIELDS] + [_fmt(result.mean_corr), result.n_corr_missing])


DUMP_FIELDS = ["scenario", "replicate", "method", "contrast", "contrast_se", "beta1", "beta1_se", "beta2", "beta2_se", "error"]


def write_estimates(results: Iterable[tuple[str, ScenarioResult]], path) -> None:
    """Replicate-level dump, one line per (scenario, replicate, method)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DUMP_FIELDS)
        for label, res in results:
            for rep in res.replicates:
                for e in rep.estimates:
                    d = asdict(e)
                    w.writerow([label] + [_fmt(d[k]) for k in DUMP_FIELDS[1:]])


# Table presets

PRESETS = {
    "table1": (Design.Observational, (Method.JointMH, Method.JointReg, Method.NaiveMH, Method.NaiveReg)),
    "table_s11": (Design.UnblindedRCT, (Method.JointNC,)),
}

TABLE1_COLUMNS = (
    ["p_y1", "a_levels"]
    + [f"bias_{m}" for m in ("JointMH", "JointReg", "NaiveMH", "NaiveReg")]
    + ["sd_JointMH", "sd_JointReg", "se_JointMH", "se_JointReg", "corr_y1_y2"]
    + [f"n_failed_{m}" for m in ("JointMH", "JointReg", "NaiveMH", "NaiveReg")]
    + ["truth_used", "truth_value"]
)

S11_COLUMNS = [
    "p_y1",
    "a_levels",
    "bias_contrast",
    "bias_beta2",
    "bias_beta1",
    "sd_contrast",
    "sd_beta2",
    "sd_beta1",
    "corr_y1_y2",
    "n_failed",
    "truth_contrast",
    "truth_beta2",
    "truth_beta1",
]


def scenario_grid(preset: str, reps: int, n: int, seed: int, methods=None) -> list[ScenarioConfig]:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    design, default_methods = PRESETS[preset]
    return [
        ScenarioConfig(n=n, reps=reps, seed=seed, design=design, p_y1_target=p, a_levels=a, methods=methods or default_methods)
        for p in tables.PREVALENCES
        for a in tables.A_LEVEL_SETS
    ]


def scenario_label(cfg: ScenarioConfig) -> str:
    return f"p={cfg.p_y1_target:g};a={','.join(f'{x:g}' for x in cfg.a_levels)}"


def _table1_line(res: ScenarioResult) -> dict:
    cfg = res.config
    line = {"p_y1": cfg.p_y1_target, "a_levels": " ".join(f"{x:g}" for x in cfg.a_levels)}
    for m in ("JointMH", "JointReg", "NaiveMH", "NaiveReg"):
        r = res.row(m)
        line[f"bias_{m}"] = r.mean_relative_bias
        line[f"n_failed_{m}"] = r.n_failed
        if m.startswith("Joint"):
            line[f"sd_{m}"] = r.sample_sd
            line[f"se_{m}"] = r.mean_sandwich_se
    line["corr_y1_y2"] = res.mean_corr
    line["truth_used"] = "log_nde"
    line["truth_value"] = res.truths.log_nde
    return line


def _s11_line(res: ScenarioResult) -> dict:
    cfg = res.config
    m = cfg.methods[0]
    line = {"p_y1": cfg.p_y1_target, "a_levels": " ".join(f"{x:g}" for x in cfg.a_levels)}
    for q in ("contrast", "beta2", "beta1"):
        r = res.row(m, q)
        line[f"bias_{q}"] = r.mean_relative_bias
        line[f"sd_{q}"] = r.sample_sd
        line[f"truth_{q}"] = r.truth_value
    line["corr_y1_y2"] = res.mean_corr
    line["n_failed"] = res.row(m).n_failed
    return line


def run_table(
    preset: str,
    reps: int,
    n: int,
    out,
    seed: int = 1,
    threads: int = 1,
    dump_estimates=None,
    scenarios: Sequence[int] | None = None,
) -> list[ScenarioResult]:
    """Run the preset's nine-scenario grid (or the chosen subset) and write the wide CSV."""
    grid = scenario_grid(preset, reps, n, seed)
    if scenarios is not None:
        grid = [grid[i] for i in scenarios]
    results = []
    for cfg in grid:
        log.info("running %s %s", preset, scenario_label(cfg))
        results.append(run_scenario(cfg, threads=threads))
    cols, line = (TABLE1_COLUMNS, _table1_line) if preset == "table1" else (S11_COLUMNS, _s11_line)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for res in results:
            w.writerow({k: _fmt(v) for k, v in line(res).items()})
    if dump_estimates is not None:
        write_estimates(((scenario_label(r.config), r) for r in results), dump_estimates)
    return results
