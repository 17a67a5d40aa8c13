"""Univariate series container, CSV I/O, block splitting and synthetic generators.

Indices are 1-based. A position inside a missing block may hold NaN (value
genuinely unknown) or a finite held-out truth value; forecasting code treats
both the same way and only feedback/evaluation code reads the held-out value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArtifactError, ParseError, StructureError, ValidationError

Block = tuple[int, int]

CATS_LENGTH = 5000
CATS_PERIOD = 1000
CATS_TEST_LENGTH = 20
CATS_BLOCKS: tuple[Block, ...] = tuple(
    (k * CATS_PERIOD - CATS_TEST_LENGTH + 1, k * CATS_PERIOD) for k in range(1, 6)
)


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    start_index: int = 1
    missing_blocks: tuple[Block, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        blocks = tuple((int(a), int(b)) for a, b in self.missing_blocks)
        object.__setattr__(self, "missing_blocks", blocks)
        if values.size == 0:
            raise ValidationError("time series is empty")
        lo, hi = self.start_index, self.end_index
        prev_end = lo - 1
        for a, b in blocks:
            if a > b or a < lo or b > hi:
                raise StructureError(f"missing block ({a},{b}) outside [{lo},{hi}]")
            if a <= prev_end:
                raise StructureError("missing blocks must be sorted and disjoint")
            prev_end = b
        bad = ~np.isfinite(values) & ~self.missing_mask()
        if bad.any():
            first = int(np.flatnonzero(bad)[0]) + lo
            raise ValidationError(f"non-finite value at index {first} outside missing blocks")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_index(self) -> int:
        return self.start_index + self.values.size - 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start_index, self.end_index + 1)

    def pos(self, index: int) -> int:
        """Array position of a 1-based series index."""
        if not self.start_index <= index <= self.end_index:
            raise ValidationError(f"index {index} outside [{self.start_index},{self.end_index}]")
        return index - self.start_index

    def value(self, index: int) -> float:
        return float(self.values[self.pos(index)])

    def missing_mask(self) -> np.ndarray:
        mask = np.zeros(self.values.size, dtype=bool)
        for a, b in self.missing_blocks:
            mask[a - self.start_index : b - self.start_index + 1] = True
        return mask

    def is_missing(self, index: int) -> bool:
        return any(a <= index <= b for a, b in self.missing_blocks)

    @property
    def has_truth(self) -> bool:
        """True when every position, including missing blocks, holds a finite value."""
        return bool(np.isfinite(self.values).all())

    def masked(self) -> np.ndarray:
        """Copy of the values with every missing-block position set to NaN."""
        out = self.values.copy()
        out[self.missing_mask()] = np.nan
        return out

    def with_missing_blocks(self, blocks: Iterable[Block]) -> "TimeSeries":
        return TimeSeries(self.values, self.start_index, tuple(blocks))

    def known_variance(self) -> float:
        known = self.values[~self.missing_mask()]
        return float(np.var(known))


@dataclass(frozen=True)
class SplitPlan:
    train_segments: tuple[Block, ...]
    test_segments: tuple[Block, ...]
    episode_length: int
    episodes_per_pass: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "episodes_per_pass", len(self.train_segments))
        if self.episode_length <= 0 or not self.train_segments:
            raise ValidationError("split plan needs at least one non-empty training segment")
        train = {i for a, b in self.train_segments for i in range(a, b + 1)}
        test = {i for a, b in self.test_segments for i in range(a, b + 1)}
        if train & test:
            raise StructureError("train and test segments overlap")
        if len(train) != self.episode_length * self.episodes_per_pass:
            raise StructureError("total train length is not episode_length * episodes_per_pass")

    @property
    def train_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(a, b + 1) for a, b in self.train_segments])

    @property
    def test_indices(self) -> np.ndarray:
        if not self.test_segments:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(a, b + 1) for a, b in self.test_segments])


# ---------------------------------------------------------------- CSV I/O


def _parse_float(cell: str, row: int) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise ParseError(f"cannot parse value {cell!r}", row) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {cell!r}", row)
    return x


def load_csv(path, missing_policy: str = "empty-cell", sentinel: str = "-9999") -> TimeSeries:
    """Read an ``index,value`` CSV. Missing values become NaN inside inferred blocks.

    With ``missing_policy="sentinel"`` a cell equal to ``sentinel`` (string or
    numeric match) also counts as missing.
    """
    if missing_policy not in ("empty-cell", "sentinel"):
        raise ValidationError(f"unknown missing_policy {missing_policy!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    sentinel_value = None
    if missing_policy == "sentinel":
        try:
            sentinel_value = float(sentinel)
        except ValueError:
            pass

    indices: list[int] = []
    values: list[float] = []
    for row_no, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", row_no)
        idx_cell, val_cell = row[0].strip(), row[1].strip()
        try:
            idx = int(idx_cell)
        except ValueError:
            if row_no == 1 and not indices:
                continue  # header
            raise ParseError(f"cannot parse index {idx_cell!r}", row_no) from None
        if indices and idx <= indices[-1]:
            raise StructureError(f"row {row_no}: index {idx} is not increasing")
        if indices and idx != indices[-1] + 1:
            raise StructureError(f"row {row_no}: index gap {indices[-1]} -> {idx}")
        missing = val_cell == ""
        if not missing and missing_policy == "sentinel":
            missing = val_cell == sentinel or (
                sentinel_value is not None and _is_float_equal(val_cell, sentinel_value)
            )
        indices.append(idx)
        values.append(math.nan if missing else _parse_float(val_cell, row_no))
    if not indices:
        raise ParseError("no data rows")

    arr = np.asarray(values, dtype=float)
    return TimeSeries(arr, indices[0], _runs(np.isnan(arr), indices[0]))


def _is_float_equal(cell: str, target: float) -> bool:
    try:
        return float(cell) == target
    except ValueError:
        return False


def _runs(mask: np.ndarray, start_index: int) -> tuple[Block, ...]:
    blocks = []
    i = 0
    n = mask.size
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            blocks.append((i + start_index, j + start_index))
            i = j + 1
        else:
            i += 1
    return tuple(blocks)


def save_csv(series: TimeSeries, path, include_missing_values: bool = False) -> None:
    """Write ``index,value`` rows; values use ``repr`` so a reload is bit-exact.

    Missing-block positions are written as empty cells unless
    ``include_missing_values`` is set (used for held-out truth files).
    """
    mask = series.missing_mask()
    lines = ["index,value"]
    for k, (idx, v) in enumerate(zip(series.indices, series.values)):
        hidden = (mask[k] and not include_missing_values) or not math.isfinite(v)
        lines.append(f"{idx}," + ("" if hidden else repr(float(v))))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def merge_truth(series: TimeSeries, truth: TimeSeries) -> TimeSeries:
    """Fill missing-block positions of ``series`` from a held-out truth series.

    Blocks stay annotated, so forecasting still treats them as unknown.
    """
    values = series.values.copy()
    for a, b in series.missing_blocks:
        for idx in range(a, b + 1):
            if not truth.start_index <= idx <= truth.end_index:
                raise StructureError(f"truth file has no value for index {idx}")
            v = truth.value(idx)
            if not math.isfinite(v):
                raise StructureError(f"truth file value at index {idx} is missing")
            values[series.pos(idx)] = v
    return TimeSeries(values, series.start_index, series.missing_blocks)


# ---------------------------------------------------------------- splitting


def block_split(series: TimeSeries, period: int, test_length: int) -> SplitPlan:
    """Every ``period`` samples, the last ``test_length`` are test, the rest train.

    If the series already carries missing blocks they must coincide with the
    test segments.
    """
    n = len(series)
    if period <= 0 or not 0 < test_length < period:
        raise ValidationError("need period > test_length > 0")
    if n % period:
        raise StructureError(f"series length {n} is not a multiple of period {period}")
    s = series.start_index
    train, test = [], []
    for k in range(n // period):
        a = s + k * period
        train.append((a, a + period - test_length - 1))
        test.append((a + period - test_length, a + period - 1))
    if series.missing_blocks and tuple(series.missing_blocks) != tuple(test):
        raise StructureError(
            f"missing blocks do not match layout: expected {test}, found {list(series.missing_blocks)}"
        )
    return SplitPlan(tuple(train), tuple(test), period - test_length)


def cats_split(series: TimeSeries) -> SplitPlan:
    """Split a series with the 5000-sample, five-gap competition layout."""
    if len(series) != CATS_LENGTH or series.start_index != 1 or series.missing_blocks != CATS_BLOCKS:
        raise StructureError(
            f"not a CATS layout: expected length {CATS_LENGTH} from index 1 with blocks "
            f"{list(CATS_BLOCKS)}, found length {len(series)} from index {series.start_index} "
            f"with blocks {list(series.missing_blocks)}"
        )
    return block_split(series, CATS_PERIOD, CATS_TEST_LENGTH)


# ---------------------------------------------------------------- synthesis

SEGMENT_KINDS = ("linear-trend", "sine", "ar2", "white-noise")
_KIND_ALIASES = {"AR(2)": "ar2", "ar(2)": "ar2", "linear": "linear-trend", "noise": "white-noise"}


def _segment(desc: dict, rng: np.random.Generator) -> np.ndarray:
    kind = _KIND_ALIASES.get(desc.get("kind"), desc.get("kind"))
    if kind not in SEGMENT_KINDS:
        raise ValidationError(f"unknown segment kind {desc.get('kind')!r}")
    length = desc.get("length")
    if not isinstance(length, (int, np.integer)) or isinstance(length, bool) or length <= 0:
        raise ValidationError(f"segment length must be a positive integer, got {length!r}")
    noise_std = float(desc.get("noise_std", 0.0))
    if noise_std < 0 or not math.isfinite(noise_std):
        raise ValidationError(f"noise_std must be >= 0, got {noise_std}")
    offset = float(desc.get("offset", 0.0))
    t = np.arange(1, length + 1, dtype=float)

    if kind == "linear-trend":
        clean = desc.get("intercept", 0.0) + desc.get("slope", 1.0) * t
    elif kind == "sine":
        period = float(desc.get("period", 20.0))
        if period <= 0:
            raise ValidationError("sine period must be positive")
        clean = desc.get("amplitude", 1.0) * np.sin(2 * np.pi * t / period + desc.get("phase", 0.0))
    elif kind == "ar2":
        phi1, phi2 = (float(c) for c in desc.get("coefficients", (0.5, -0.3)))
        if not (abs(phi2) < 1 and phi2 + phi1 < 1 and phi2 - phi1 < 1):
            raise ValidationError("AR(2) coefficients are not stationary")
        innov = float(desc.get("innovation_std", 1.0))
        if innov < 0:
            raise ValidationError("innovation_std must be >= 0")
        burn = int(desc.get("burn_in", 100))
        e = rng.normal(0.0, 1.0, size=burn + length) * innov
        y = np.zeros(burn + length + 2)
        for k in range(burn + length):
            y[k + 2] = phi1 * y[k + 1] + phi2 * y[k] + e[k]
        clean = y[burn + 2 :]
    else:  # white-noise: the noise term below is the whole signal
        clean = np.full(length, float(desc.get("mean", 0.0)))

    out = clean + offset
    if noise_std > 0:
        out = out + rng.normal(0.0, noise_std, size=length)
    return np.asarray(out, dtype=float)


def synth_regimes(segments: Sequence[dict], seed: int) -> TimeSeries:
    """Concatenate regime segments into one series, deterministic in ``seed``.

    Descriptor keys: ``kind`` (linear-trend | sine | ar2 | white-noise),
    ``length``, ``noise_std`` and ``offset`` plus kind parameters
    (``slope``/``intercept``; ``amplitude``/``period``/``phase``;
    ``coefficients``/``innovation_std``; ``mean``). Segment time runs 1..length.
    """
    if not segments:
        raise ValidationError("need at least one segment")
    rng = np.random.default_rng(seed)
    return TimeSeries(np.concatenate([_segment(d, rng) for d in segments]))


def regime_benchmark_segments(length: int = 2000, n_regimes: int = 4) -> list[dict]:
    """Default planted-regime layout: AR(2), trend+noise, sine, noisy level, repeated."""
    base = [
        {"kind": "ar2", "coefficients": (1.6, -0.8), "innovation_std": 0.15, "noise_std": 0.02, "offset": 3.0},
        {"kind": "sine", "amplitude": 1.2, "period": 37.0, "noise_std": 0.25, "offset": 3.0},
        {"kind": "linear-trend", "slope": 0.004, "intercept": 2.0, "noise_std": 0.35},
        {"kind": "white-noise", "mean": 3.0, "noise_std": 0.5},
    ]
    seg_len = length // n_regimes
    out = []
    for k in range(n_regimes):
        d = dict(base[k % len(base)])
        d["length"] = seg_len if k < n_regimes - 1 else length - seg_len * (n_regimes - 1)
        out.append(d)
    return out


def synth_cats_like(seed: int) -> TimeSeries:
    """5000-sample series with held-out truth in the five competition gaps.

    Stand-in for the competition file when it is not available locally.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(1, CATS_LENGTH + 1, dtype=float)
    slow = 1.5 * np.sin(2 * np.pi * t / 1700.0) + 0.8 * np.sin(2 * np.pi * t / 430.0 + 1.0)
    e = rng.normal(0.0, 0.05, size=CATS_LENGTH + 200)
    ar = np.zeros(CATS_LENGTH + 202)
    for k in range(CATS_LENGTH + 200):
        ar[k + 2] = 1.85 * ar[k + 1] - 0.9 * ar[k] + e[k]
    values = 2.5 + slow + 0.6 * np.sin(2 * np.pi * t / 53.0) + ar[202:]
    values += rng.normal(0.0, 0.03, size=CATS_LENGTH)
    return TimeSeries(values, 1, CATS_BLOCKS)
