"""Domain types, dataset CSV I/O and validation."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ColumnTypeError,
    ConfigError,
    EmptyArm,
    InvalidDataset,
    MissingColumn,
)


class Method(str, enum.Enum):
    JointNC = "JointNC"
    JointMH = "JointMH"
    JointReg = "JointReg"
    SSJoint = "SSJoint"
    NaiveMH = "NaiveMH"
    NaiveReg = "NaiveReg"

    @property
    def is_naive(self) -> bool:
        return self in (Method.NaiveMH, Method.NaiveReg)


class Design(str, enum.Enum):
    Observational = "Observational"
    BlindedRCT = "BlindedRCT"
    UnblindedRCT = "UnblindedRCT"

    @property
    def randomized(self) -> bool:
        return self is not Design.Observational


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StudyDataset:
    """Subject-level study data in columnar layout.

    ``y2`` is the total count of nontargeted infections; when only the
    per-strain indicator matrix is supplied it is computed as the row sum.
    Arrays are copied and made read-only on construction.
    """

    t: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    y2_strains: np.ndarray | None = None
    w_site: np.ndarray | None = None
    w_age: np.ndarray | None = None
    ids: np.ndarray | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "t", _frozen(self.t, np.int64))
        set_(self, "y1", _frozen(self.y1, np.int64))
        if self.y2 is None:
            if self.y2_strains is None:
                raise MissingColumn("y2")
            set_(self, "y2", np.asarray(self.y2_strains).sum(axis=1))
        set_(self, "y2", _frozen(self.y2, np.int64))
        if self.y2_strains is not None:
            set_(self, "y2_strains", _frozen(self.y2_strains, np.int64))
        if self.w_site is not None:
            set_(self, "w_site", _frozen(self.w_site, np.int64))
        if self.w_age is not None:
            set_(self, "w_age", _frozen(self.w_age, np.float64))
        if self.ids is not None:
            set_(self, "ids", _frozen(self.ids, np.int64))

    @classmethod
    def from_arrays(cls, t, y1, y2=None, *, y2_strains=None, w_site=None, w_age=None, ids=None):
        return cls(t=t, y1=y1, y2=y2, y2_strains=y2_strains, w_site=w_site, w_age=w_age, ids=ids)

    @property
    def n(self) -> int:
        return int(self.t.shape[0])

    @property
    def n_treated(self) -> int:
        return int(self.t.sum())

    @property
    def has_covariates(self) -> bool:
        return self.w_site is not None and self.w_age is not None

    def replace(self, **changes) -> "StudyDataset":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return StudyDataset(**kw)

    def subset(self, mask) -> "StudyDataset":
        mask = np.asarray(mask)
        pick = lambda a: None if a is None else a[mask]  # noqa: E731
        return StudyDataset(
            t=self.t[mask],
            y1=self.y1[mask],
            y2=self.y2[mask],
            y2_strains=pick(self.y2_strains),
            w_site=pick(self.w_site),
            w_age=pick(self.w_age),
            ids=pick(self.ids),
        )


@dataclass(frozen=True)
class Violation:
    kind: str
    column: str | None = None
    index: int | None = None
    detail: str = ""

    def __str__(self):
        where = ", ".join(str(x) for x in (self.column, self.index) if x is not None)
        s = f"{self.kind}({where})"
        return f"{s}: {self.detail}" if self.detail else s


def _first(mask) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def validate(data: StudyDataset) -> list[Violation]:
    """Check every dataset invariant; returns an empty list when all hold."""
    out: list[Violation] = []
    n = data.n
    for name in ("y1", "y2", "y2_strains", "w_site", "w_age", "ids"):
        col = getattr(data, name)
        if col is not None and col.shape[0] != n:
            out.append(Violation("LengthMismatch", name, None, f"{col.shape[0]} rows, expected {n}"))
    if out:
        return out

    for name in ("t", "y1"):
        i = _first((getattr(data, name) != 0) & (getattr(data, name) != 1))
        if i is not None:
            out.append(Violation("BinaryViolation", name, i))
    i = _first(data.y2 < 0)
    if i is not None:
        out.append(Violation("NegativeCount", "y2", i))
    if data.y2_strains is not None:
        s = data.y2_strains
        i = _first(((s != 0) & (s != 1)).any(axis=1))
        if i is not None:
            out.append(Violation("BinaryViolation", "y2_strains", i))
        i = _first(s.sum(axis=1) != data.y2)
        if i is not None:
            out.append(Violation("StrainSumMismatch", None, i))
    if data.w_site is not None:
        i = _first((data.w_site < 0) | (data.w_site > 2))
        if i is not None:
            out.append(Violation("SiteViolation", "w_site", i))
    if data.w_age is not None:
        i = _first(~np.isfinite(data.w_age))
        if i is not None:
            out.append(Violation("NonFinite", "w_age", i))
    if n and data.n_treated == 0:
        out.append(Violation("EmptyArm", "t", None, "no treated subjects"))
    if n and data.n_treated == n:
        out.append(Violation("EmptyArm", "t", None, "no untreated subjects"))
    if n == 0:
        out.append(Violation("EmptyArm", "t", None, "dataset is empty"))
    return out


def require_valid(data: StudyDataset) -> None:
    """Raise EmptyArm / InvalidDataset unless ``data`` is usable by an estimator."""
    problems = validate(data)
    if not problems:
        return
    arms = [v for v in problems if v.kind == "EmptyArm"]
    if arms and len(arms) == len(problems):
        arm = 0 if data.n_treated == data.n else 1
        raise EmptyArm(arm)
    raise InvalidDataset(problems)


# CSV interchange

CANONICAL = ("id", "t", "y1", "y2", "w_site", "w_age")


def _parse_int(column, row, raw):
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        v = float(raw)
    except ValueError:
        raise ColumnTypeError(column, row, raw) from None
    if not v.is_integer():
        raise ColumnTypeError(column, row, raw)
    return int(v)


def _parse_float(column, row, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ColumnTypeError(column, row, raw) from None
    if not math.isfinite(v):
        raise ColumnTypeError(column, row, raw)
    return v


def load_dataset(path, schema: Mapping[str, str] | None = None) -> StudyDataset:
    """Read a dataset CSV.

    ``schema`` maps canonical names (``t``, ``y1``, ``y2``, ``w_site``,
    ``w_age``, ``id``) to the header names used in the file. Strain columns
    are any columns named ``y2_<k>``; if ``y2`` is absent they are summed.
    """
    schema = dict(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn("t") from None
        rows = [r for r in reader if r]

    col = {name: schema.get(name, name) for name in CANONICAL}
    pos = {h: j for j, h in enumerate(header)}
    strain_cols = sorted(
        (h for h in header if h.startswith("y2_") and h[3:].isdigit()),
        key=lambda h: int(h[3:]),
    )
    for req in ("t", "y1"):
        if col[req] not in pos:
            raise MissingColumn(col[req])
    if col["y2"] not in pos and not strain_cols:
        raise MissingColumn(col["y2"])

    def column(name, parse):
        j = pos[name]
        out = []
        for i, r in enumerate(rows):
            if j >= len(r):
                raise ColumnTypeError(name, i, "")
            out.append(parse(name, i, r[j].strip()))
        return out

    t = column(col["t"], _parse_int)
    y1 = column(col["y1"], _parse_int)
    y2 = column(col["y2"], _parse_int) if col["y2"] in pos else None
    strains = None
    if strain_cols:
        strains = np.array([column(h, _parse_int) for h in strain_cols], dtype=np.int64).T
        strains = strains.reshape(len(rows), len(strain_cols))
    w_site = column(col["w_site"], _parse_int) if col["w_site"] in pos else None
    w_age = column(col["w_age"], _parse_float) if col["w_age"] in pos else None
    ids = column(col["id"], _parse_int) if col["id"] in pos else None

    data = StudyDataset(t=t, y1=y1, y2=y2, y2_strains=strains, w_site=w_site, w_age=w_age, ids=ids)
    require_valid(data)
    return data


def _fmt_float(v: float) -> str:
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def write_dataset(data: StudyDataset, path) -> None:
    """Write the canonical CSV layout ``id,t,y1,y2[,w_site,w_age][,y2_1..y2_K]``."""
    header = ["id", "t", "y1", "y2"]
    cols: list[Sequence[str]] = []
    ids = data.ids if data.ids is not None else np.arange(data.n)
    cols += [[str(v) for v in ids], [str(v) for v in data.t], [str(v) for v in data.y1], [str(v) for v in data.y2]]
    if data.w_site is not None:
        header.append("w_site")
        cols.append([str(v) for v in data.w_site])
    if data.w_age is not None:
        header.append("w_age")
        cols.append([_fmt_float(v) for v in data.w_age])
    if data.y2_strains is not None:
        for k in range(data.y2_strains.shape[1]):
            header.append(f"y2_{k + 1}")
            cols.append([str(v) for v in data.y2_strains[:, k]])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(zip(*cols))


# Estimation output


@dataclass
class EstimateReport:
    """Point estimates, sandwich covariance and the targeted-minus-nontargeted contrast.

    For naive methods ``contrast`` is the Y1 log rate ratio itself.
    """

    method: Method
    theta: np.ndarray
    cov: np.ndarray
    names: list[str]
    contrast: float
    contrast_var: float
    info: dict = field(default_factory=dict)

    @property
    def exp_contrast(self) -> float:
        return math.exp(self.contrast)

    @property
    def exp_contrast_var(self) -> float:
        return self.contrast_var * self.exp_contrast**2

    @property
    def contrast_se(self) -> float:
        return math.sqrt(self.contrast_var) if self.contrast_var >= 0 else math.nan

    def index(self, name: str) -> int:
        return self.names.index(name)

    def param(self, name: str) -> float:
        return float(self.theta[self.index(name)])

    def var(self, name: str) -> float:
        i = self.index(name)
        return float(self.cov[i, i])

    def se(self, name: str) -> float:
        return math.sqrt(self.var(name))

    def ci95(self) -> tuple[float, float]:
        from scipy.stats import norm

        z = norm.ppf(0.975)
        h = z * self.contrast_se
        return (self.contrast - h, self.contrast + h)

    def to_dict(self) -> dict:
        lo, hi = self.ci95()
        return {
            "method": self.method.value,
            "names": list(self.names),
            "theta": [float(v) for v in self.theta],
            "cov": [[float(v) for v in row] for row in self.cov],
            "contrast": self.contrast,
            "contrast_var": self.contrast_var,
            "exp_contrast": self.exp_contrast,
            "exp_contrast_var": self.exp_contrast_var,
            "ci95": [lo, hi],
            "info": self.info,
        }


@dataclass(frozen=True)
class TrueEffects:
    """Exact causal effects on the log-ratio scale."""

    log_ate: float
    log_nde: float
    log_nie: float

    def __post_init__(self):
        if abs(self.log_ate - (self.log_nde + self.log_nie)) > 1e-12:
            raise ValueError("log_ate must equal log_nde + log_nie")

    def to_dict(self):
        return {"log_ate": self.log_ate, "log_nde": self.log_nde, "log_nie": self.log_nie}


# Scenario configuration


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    reps: int
    seed: int
    design: Design
    p_y1_target: float
    a_levels: tuple[float, float, float]
    methods: tuple[Method, ...]

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "design", Design(self.design))
        set_(self, "methods", tuple(Method(m) for m in self.methods))
        set_(self, "a_levels", tuple(float(a) for a in self.a_levels))
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigError("reps must be an integer >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if len(self.a_levels) != 3 or any(a < 0 for a in self.a_levels):
            raise ConfigError("a_levels must be three nonnegative numbers")
        if not (self.a_levels[0] <= self.a_levels[1] <= self.a_levels[2]):
            raise ConfigError("a_levels must be nondecreasing")
        if not 0 < self.p_y1_target < 1:
            raise ConfigError("p_y1_target must lie in (0, 1)")
        if not self.methods:
            raise ConfigError("at least one method is required")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = allowed - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "design": self.design.value,
            "p_y1_target": self.p_y1_target,
            "a_levels": list(self.a_levels),
            "methods": [m.value for m in self.methods],
        }


def parse_methods(tags: Iterable[str]) -> tuple[Method, ...]:
    return tuple(Method(t) for t in tags)
