"""Shared domain types, validation and serialization.

State is held in plain numpy arrays wrapped by thin dataclasses:
``WealthVector`` (integer dollars per agent), ``Pmf`` (truncated
probability mass function over dollar counts), ``ModelParams`` (model
kind and simulation parameters) and ``TrajectoryRecord`` (time series
output).  All floating-point text output uses 17 significant digits so
files round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

ENTRY_TOL = 1e-12  # allowed negative slack on pmf entries
MASS_TOL = 1e-9  # allowed deviation of a pmf total from 1

_MASK64 = (1 << 64) - 1


class KinexchError(Exception):
    """Base class for package errors."""


class TruncationError(KinexchError):
    """A truncation bound was too small for the data it must hold."""


class AbsorbingStateError(KinexchError):
    """Total event rate hit zero; the dynamics cannot advance."""


class MassLeakError(KinexchError):
    """Probability mass leaking past the truncation bound exceeded tolerance."""


class NegativeProbabilityError(KinexchError):
    """An integrated pmf entry went below the negativity tolerance."""


class Model(Enum):
    UNBIASED = "unbiased"
    POOR_BIASED = "poor-biased"
    RICH_BIASED = "rich-biased"

    @property
    def code(self) -> int:
        return _MODEL_CODES[self]

    @classmethod
    def parse(cls, text: str) -> "Model":
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "unbiased": cls.UNBIASED,
            "poor-biased": cls.POOR_BIASED,
            "poor": cls.POOR_BIASED,
            "rich-biased": cls.RICH_BIASED,
            "rich": cls.RICH_BIASED,
        }
        if key not in aliases:
            raise ValueError(f"unknown model {text!r}")
        return aliases[key]


_MODEL_CODES = {Model.UNBIASED: 0, Model.POOR_BIASED: 1, Model.RICH_BIASED: 2}


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (lossless round-trip)."""
    return format(float(x), ".17g")


def derive_seed(seed: int, index: int) -> int:
    """Child stream seed for replica ``index``, splitmix64-style."""
    x = (seed ^ ((index + 1) * 0x9E3779B97F4A7C15)) & _MASK64
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class WealthVector:
    """Dollar holdings of the N agents (non-negative 64-bit integers)."""

    dollars: np.ndarray

    def __post_init__(self):
        self.dollars = np.asarray(self.dollars, dtype=np.int64)
        if self.dollars.ndim != 1 or self.dollars.size < 1:
            raise ValueError("dollars must be a non-empty 1-D array")
        if np.any(self.dollars < 0):
            raise ValueError("negative wealth entry")

    @property
    def n_agents(self) -> int:
        return int(self.dollars.size)

    def total(self) -> int:
        return int(self.dollars.sum())

    def validate_total(self, expected: int) -> None:
        if self.total() != expected:
            raise ValueError(f"total wealth {self.total()} != expected {expected}")

    @classmethod
    def equal_split(cls, n_agents: int, mu: int) -> "WealthVector":
        return cls(np.full(n_agents, mu, dtype=np.int64))


@dataclass
class Pmf:
    """Probability mass function over dollar counts 0..n_max (dense)."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or self.probs.size < 2:
            raise ValueError("probs must be 1-D with at least two entries")

    @property
    def n_max(self) -> int:
        return int(self.probs.size - 1)

    def validate(self) -> "Pmf":
        if np.any(self.probs < -ENTRY_TOL):
            raise ValueError(f"pmf entry below -{ENTRY_TOL:g}")
        s = self.probs.sum()
        if abs(s - 1.0) > MASS_TOL:
            raise ValueError(f"pmf mass {s!r} deviates from 1 by more than {MASS_TOL:g}")
        return self

    def mean(self) -> float:
        n = np.arange(self.probs.size, dtype=np.float64)
        return float(np.dot(n, self.probs))

    def variance(self) -> float:
        n = np.arange(self.probs.size, dtype=np.float64)
        m = self.mean()
        return float(np.dot((n - m) ** 2, self.probs))

    def copy(self) -> "Pmf":
        return Pmf(self.probs.copy())


def as_probs(p) -> np.ndarray:
    """Accept a Pmf or a raw 1-D array; return the float64 array."""
    if isinstance(p, Pmf):
        return p.probs
    return np.asarray(p, dtype=np.float64)


@dataclass(frozen=True)
class ModelParams:
    """Exchange-model parameters: kind, event rate, population and mean."""

    model: Model
    lam: float = 1.0
    n_agents: int = 500
    mu: int = 10
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.model, Model):
            object.__setattr__(self, "model", Model.parse(str(self.model)))
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.n_agents < 2:
            raise ValueError("need at least two agents")
        if self.mu < 1:
            raise ValueError("mean dollars per agent must be >= 1")
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)

    def total_wealth(self) -> int:
        return self.n_agents * self.mu

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "lambda": self.lam,
            "n_agents": self.n_agents,
            "mu": self.mu,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(
            model=Model.parse(d["model"]),
            lam=float(d.get("lambda", 1.0)),
            n_agents=int(d.get("n_agents", 500)),
            mu=int(d.get("mu", 10)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class TrajectoryRecord:
    """Time-stamped series of snapshots and summary statistics."""

    times: np.ndarray
    stats: dict = field(default_factory=dict)
    pmfs: list | None = None
    absorbed: bool = False
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("snapshot times must be strictly increasing")
        for name, series in self.stats.items():
            if len(series) != self.times.size:
                raise ValueError(f"stat {name!r} length mismatch")

    def stat(self, name: str) -> np.ndarray:
        return np.asarray(self.stats[name], dtype=np.float64)


# ---------------------------------------------------------------------------
# Construction operations
# ---------------------------------------------------------------------------


def empirical_pmf(state: WealthVector | np.ndarray, n_max: int) -> Pmf:
    """Fraction of agents at each dollar count, as a pmf on 0..n_max."""
    dollars = state.dollars if isinstance(state, WealthVector) else np.asarray(state)
    hi = int(dollars.max()) if dollars.size else 0
    if hi > n_max:
        raise TruncationError(f"state holds {hi} dollars, beyond n_max={n_max}")
    counts = np.bincount(dollars.astype(np.int64), minlength=n_max + 1)
    return Pmf(counts / dollars.size)


def dirac_pmf(m: int, n_max: int) -> Pmf:
    """Point mass at ``m`` on the lattice 0..n_max."""
    if not 0 <= m <= n_max:
        raise ValueError(f"atom {m} outside [0, {n_max}]")
    probs = np.zeros(n_max + 1)
    probs[m] = 1.0
    return Pmf(probs)


# ---------------------------------------------------------------------------
# Serialization: CSV columns (index, value) plus a JSON envelope
# ---------------------------------------------------------------------------


def pmf_to_csv(pmf: Pmf) -> str:
    lines = ["n,p_n"]
    lines.extend(f"{n},{fmt17(v)}" for n, v in enumerate(pmf.probs))
    return "\n".join(lines) + "\n"


def state_to_csv(state: WealthVector) -> str:
    lines = ["agent,dollars"]
    lines.extend(f"{i},{int(v)}" for i, v in enumerate(state.dollars))
    return "\n".join(lines) + "\n"


def trajectory_long_csv(rec: TrajectoryRecord) -> str:
    """Long-format pmf snapshots: columns t, n, p_n."""
    if rec.pmfs is None:
        raise ValueError("record holds no pmf snapshots")
    lines = ["t,n,p_n"]
    for t, pmf in zip(rec.times, rec.pmfs):
        ts = fmt17(t)
        lines.extend(f"{ts},{n},{fmt17(v)}" for n, v in enumerate(pmf.probs))
    return "\n".join(lines) + "\n"


def trajectory_stats_csv(rec: TrajectoryRecord) -> str:
    """Per-snapshot summary statistics: one column per observer."""
    names = sorted(rec.stats)
    lines = ["t," + ",".join(names)]
    for idx, t in enumerate(rec.times):
        row = [fmt17(t)] + [fmt17(rec.stats[n][idx]) for n in names]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def json_envelope(kind: str, params: dict, data: dict | None = None) -> str:
    doc = {"format": f"kinexch-{kind}-v1", "params": params}
    if data:
        doc.update(data)
    return json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Model):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj)!r}")


def save_pmf(path_base: str | Path, pmf: Pmf, params: dict | None = None) -> None:
    """Write ``<base>.csv`` with the mass function and ``<base>.json`` metadata."""
    base = Path(path_base)
    base.with_suffix(".csv").write_text(pmf_to_csv(pmf))
    envelope = json_envelope("pmf", params or {}, {"n_max": pmf.n_max, "csv": base.with_suffix(".csv").name})
    base.with_suffix(".json").write_text(envelope)


def load_pmf_csv(path: str | Path) -> Pmf:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    body = rows[1:]  # header
    probs = np.empty(len(body))
    for row in body:
        n_str, v_str = row.split(",")
        probs[int(n_str)] = float(v_str)
    return Pmf(probs)


def save_state(path_base: str | Path, state: WealthVector, params: dict | None = None) -> None:
    base = Path(path_base)
    base.with_suffix(".csv").write_text(state_to_csv(state))
    envelope = json_envelope(
        "state", params or {}, {"n_agents": state.n_agents, "csv": base.with_suffix(".csv").name}
    )
    base.with_suffix(".json").write_text(envelope)


def load_state_csv(path: str | Path) -> WealthVector:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    body = rows[1:]
    dollars = np.empty(len(body), dtype=np.int64)
    for row in body:
        i_str, v_str = row.split(",")
        dollars[int(i_str)] = int(v_str)
    return WealthVector(dollars)
