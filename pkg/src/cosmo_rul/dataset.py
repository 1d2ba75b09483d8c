"""Trajectory data model: parsing, RUL targets, nominal pools, synthetic fleets.

Input files are whitespace-separated text with 26 numeric columns per row:
unit id, cycle, three operating settings (altitude, Mach number, throttle
resolver angle), then 21 sensor channels.  Rows are grouped by unit with
cycles counting 1, 2, 3, ... per unit.  Training trajectories run to failure;
test trajectories stop early and carry their remaining life at the cut-off in
a companion file (one integer per unit, same order as the data file).
"""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_SETTINGS = 3
N_SENSORS = 21
N_FEATURES = N_SETTINGS + N_SENSORS  # columns of one sample vector
N_COLUMNS = 2 + N_FEATURES           # file columns: unit, cycle, features

TAU_MAX_DEFAULT = 130  # cap of the piecewise-linear RUL target
TAU_DEFAULT = 30       # early-cycle window that defines the nominal pool

SUBSET_IDS = ("FD001", "FD002", "FD003", "FD004")

# Sensor channels (0-based indices into the 21 sensor columns) that carry the
# monotone degradation ramp in synthesize_fleet.  Fixed so tests can check the
# pre-onset / post-onset behaviour channel by channel.
DEGRADING_SENSORS = (1, 3, 4, 6, 8, 10, 12, 14, 16, 18)
SYNTH_NOISE_BOUND = 0.1


class CmapssParseError(ValueError):
    """Malformed or structurally inconsistent trajectory text."""


def _as_sample_matrix(values: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[1] != N_FEATURES:
        raise ValueError(f"sample matrix must be (n, {N_FEATURES}), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("trajectory must contain at least one sample")
    if not np.isfinite(arr).all():
        raise ValueError("sample values must all be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One unit's cycle-indexed sample matrix.

    ``samples`` has shape (n_cycles, 24); row ``t-1`` is cycle ``t``.  A
    trajectory without ``censored_rul`` ran to failure (its last cycle is end
    of life); with ``censored_rul`` set, recording stopped that many cycles
    before failure.
    """

    unit_id: int
    samples: np.ndarray
    censored_rul: int | None = None

    def __post_init__(self) -> None:
        if int(self.unit_id) <= 0:
            raise ValueError(f"unit_id must be positive, got {self.unit_id}")
        object.__setattr__(self, "unit_id", int(self.unit_id))
        object.__setattr__(self, "samples", _as_sample_matrix(self.samples))
        if self.censored_rul is not None:
            rul = int(self.censored_rul)
            if rul < 0:
                raise ValueError(f"censored_rul must be nonnegative, got {rul}")
            object.__setattr__(self, "censored_rul", rul)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_cycles(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Subset:
    """A named collection of trajectories from one data split.

    ``split`` is "alpha" for run-to-failure training data (no trajectory may
    carry a censored RUL) or "beta" for censored test data (every trajectory
    must carry one).
    """

    id: str
    split: str
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        if self.id not in SUBSET_IDS:
            raise ValueError(f"unknown subset id {self.id!r}; expected one of {SUBSET_IDS}")
        if self.split not in ("alpha", "beta"):
            raise ValueError(f"split must be 'alpha' or 'beta', got {self.split!r}")
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for traj in self.trajectories:
            if self.split == "alpha" and traj.censored_rul is not None:
                raise ValueError(f"alpha split contains censored unit {traj.unit_id}")
            if self.split == "beta" and traj.censored_rul is None:
                raise ValueError(f"beta split unit {traj.unit_id} lacks a censored RUL")

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class RulTarget:
    """Per-cycle remaining-useful-life target for one trajectory.

    ``values[t-1]`` is the target at cycle ``t``: capped at ``tau_max`` far
    from failure, then decreasing by exactly one per cycle.
    """

    values: np.ndarray
    tau_max: int = TAU_MAX_DEFAULT

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("target values must be a non-empty vector")
        if vals.min() < 0 or vals.max() > self.tau_max:
            raise ValueError(f"targets must lie in [0, {self.tau_max}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class NominalPool:
    """Early-cycle ("healthy") samples pooled across trajectories."""

    samples: np.ndarray
    tau: int = TAU_DEFAULT

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", _as_sample_matrix(self.samples))
        if int(self.tau) < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        object.__setattr__(self, "tau", int(self.tau))

    def __len__(self) -> int:
        return self.samples.shape[0]


# ---------------------------------------------------------------------------
# parsing


def _read_lines(source: str | os.PathLike | io.TextIOBase | Iterable[str]) -> list[str]:
    if isinstance(source, os.PathLike):
        return Path(source).read_text().splitlines()
    if isinstance(source, str):
        # plain str: a path if it names an existing file, else raw content
        if "\n" not in source:
            try:
                if Path(source).is_file():
                    return Path(source).read_text().splitlines()
            except OSError:
                pass
        return source.splitlines()
    if isinstance(source, io.TextIOBase):
        return source.read().splitlines()
    return [str(line) for line in source]


def _diagnose_lines(lines: list[str]) -> tuple[np.ndarray, list[int]]:
    """Slow validating pass: returns (rows, line numbers), or raises with the
    first offending 1-based line number."""
    rows: list[list[float]] = []
    linenos: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != N_COLUMNS:
            raise CmapssParseError(
                f"line {lineno}: expected {N_COLUMNS} fields, found {len(fields)}"
            )
        row = []
        for tok in fields:
            try:
                val = float(tok)
            except ValueError:
                raise CmapssParseError(f"line {lineno}: non-numeric token {tok!r}") from None
            row.append(val)
        if not all(np.isfinite(v) for v in row):
            raise CmapssParseError(f"line {lineno}: non-finite value")
        rows.append(row)
        linenos.append(lineno)
    if not rows:
        raise CmapssParseError("no data rows found")
    return np.asarray(rows, dtype=np.float64), linenos


def _fast_table(lines: list[str]) -> np.ndarray | None:
    """Optimistic parse of the whole stream; None means fall back to the
    diagnosing pass for a precise error.  np.loadtxt is correctly rounded, so
    values written at full precision read back bit-exactly."""
    buf = io.StringIO("\n".join(lines))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty input warns; diagnosed later
            arr = np.loadtxt(buf, dtype=np.float64, ndmin=2)
    except Exception:
        return None
    if arr.shape[0] == 0 or arr.shape[1] != N_COLUMNS or not np.isfinite(arr).all():
        return None
    return arr


def parse_cmapss(source: str | os.PathLike | io.TextIOBase | Iterable[str]) -> list[Trajectory]:
    """Parse 26-column trajectory text into one Trajectory per unit.

    Accepts a path, raw text, an open text file, or an iterable of lines.
    Blank lines and trailing whitespace are tolerated.  Malformed lines raise
    CmapssParseError with the 1-based line number; inconsistent unit/cycle
    structure raises CmapssParseError naming the unit.
    """
    lines = _read_lines(source)
    table = _fast_table(lines)
    if table is None:
        table, linenos = _diagnose_lines(lines)  # raises with a line number on malformed input
    else:
        linenos = [i for i, line in enumerate(lines, start=1) if line.split()]

    units = table[:, 0]
    cycles = table[:, 1]
    for name, col in (("unit id", units), ("cycle", cycles)):
        bad_mask = (col != np.floor(col)) | (col < 1)
        if bad_mask.any():
            bad = int(np.flatnonzero(bad_mask)[0])
            raise CmapssParseError(
                f"line {linenos[bad]}: {name} must be a positive integer, got {col[bad]}"
            )

    # contiguous unit blocks; a unit id must not reappear after its block ends
    boundaries = np.flatnonzero(np.diff(units) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(units)]))
    block_units = units[starts].astype(np.int64)
    seen: set[int] = set()
    trajectories: list[Trajectory] = []
    for unit, lo, hi in zip(block_units, starts, ends):
        unit = int(unit)
        if unit in seen:
            raise CmapssParseError(f"unit {unit}: rows split into non-adjacent blocks")
        seen.add(unit)
        got = cycles[lo:hi]
        expected = np.arange(1, hi - lo + 1, dtype=np.float64)
        if not np.array_equal(got, expected):
            first = int(np.flatnonzero(got != expected)[0])
            raise CmapssParseError(
                f"unit {unit}: cycles must run 1..{hi - lo} consecutively "
                f"(found {int(got[first])} at position {first + 1})"
            )
        trajectories.append(Trajectory(unit_id=unit, samples=table[lo:hi, 2:]))
    return trajectories


def read_rul_file(source: str | os.PathLike | io.TextIOBase | Iterable[str]) -> np.ndarray:
    """Read a companion RUL file: one nonnegative integer per line."""
    lines = _read_lines(source)
    values: list[int] = []
    for lineno, line in enumerate(lines, start=1):
        tok = line.strip()
        if not tok:
            continue
        try:
            val = float(tok)
        except ValueError:
            raise CmapssParseError(f"line {lineno}: non-numeric RUL token {tok!r}") from None
        if val != np.floor(val) or val < 0:
            raise CmapssParseError(f"line {lineno}: RUL must be a nonnegative integer, got {tok}")
        values.append(int(val))
    if not values:
        raise CmapssParseError("no RUL values found")
    return np.asarray(values, dtype=np.int64)


def attach_censored_rul(
    trajectories: Sequence[Trajectory], ruls: Sequence[int] | np.ndarray
) -> list[Trajectory]:
    """Pair censored trajectories with their remaining life, by position.

    Returns new Trajectory objects with ``censored_rul`` set; their per-cycle
    truth is then ``censored_rul + (n_cycles - t)`` capped at the target cap
    (see censored_rul_target).
    """
    ruls = np.asarray(ruls)
    if len(ruls) != len(trajectories):
        raise ValueError(
            f"got {len(ruls)} RUL values for {len(trajectories)} trajectories"
        )
    if ruls.size:
        if np.any(ruls != np.floor(ruls)):
            raise ValueError("RUL values must be integers")
        if ruls.min() < 0:
            raise ValueError("RUL values must be nonnegative")
    return [
        Trajectory(unit_id=t.unit_id, samples=t.samples, censored_rul=int(r))
        for t, r in zip(trajectories, ruls)
    ]


def label_rul(trajectory: Trajectory, tau_max: int = TAU_MAX_DEFAULT) -> RulTarget:
    """Piecewise-linear target for a run-to-failure trajectory.

    The last cycle gets 0, each earlier cycle one more, capped at tau_max.
    """
    if trajectory.censored_rul is not None:
        raise ValueError(
            "trajectory is censored; use attach_censored_rul / censored_rul_target "
            "for test units"
        )
    n = trajectory.n_cycles
    values = np.minimum(n - np.arange(1, n + 1), tau_max)
    return RulTarget(values=values, tau_max=tau_max)


def censored_rul_target(trajectory: Trajectory, tau_max: int = TAU_MAX_DEFAULT) -> RulTarget:
    """Per-cycle truth for a censored trajectory, back-extended linearly from
    the censor point and capped at tau_max."""
    if trajectory.censored_rul is None:
        raise ValueError("trajectory is not censored; use label_rul")
    n = trajectory.n_cycles
    values = np.minimum(trajectory.censored_rul + (n - np.arange(1, n + 1)), tau_max)
    return RulTarget(values=values, tau_max=tau_max)


def extract_nominal(trajectories: Sequence[Trajectory], tau: int = TAU_DEFAULT) -> NominalPool:
    """Pool every sample from the first ``tau`` cycles of each trajectory.

    Trajectories shorter than tau contribute all their samples; pool size is
    therefore sum over units of min(tau, length).
    """
    if int(tau) < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if not trajectories:
        raise ValueError("cannot build a nominal pool from an empty trajectory list")
    parts = [t.samples[: min(tau, t.n_cycles)] for t in trajectories]
    return NominalPool(samples=np.vstack(parts), tau=int(tau))


# ---------------------------------------------------------------------------
# synthetic fleets


def condition_triples(n_conditions: int) -> np.ndarray:
    """``n_conditions`` distinct, well-separated setting triples.

    Points are spread on a sphere of radius 25 around (50, 50, 50) using the
    golden-angle (Fibonacci) construction; n_conditions=1 yields the centre.
    """
    q = int(n_conditions)
    if q < 1:
        raise ValueError(f"n_conditions must be >= 1, got {n_conditions}")
    if q == 1:
        return np.full((1, N_SETTINGS), 50.0)
    i = np.arange(q, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / q
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    r = np.sqrt(1.0 - z * z)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return 50.0 + 25.0 * pts


def synthesize_fleet(
    n_units: int,
    n_conditions: int,
    fault_onset_range: tuple[int, int] = (40, 90),
    seed: int = 0,
    *,
    post_onset_life: tuple[int, int] = (60, 140),
) -> list[Trajectory]:
    """Generate a deterministic run-to-failure fleet for desk-scale testing.

    Each unit cycles uniformly among ``n_conditions`` distinct setting
    triples.  Sensor channels hold a baseline plus bounded uniform noise;
    the channels in DEGRADING_SENSORS additionally ramp up linearly (strictly,
    per cycle) after a per-unit onset drawn from ``fault_onset_range``
    (inclusive).  Degrading channels use condition-independent baselines so
    the ramp is observable directly; the others vary by condition.  The last
    cycle is end of life.
    """
    if int(n_units) < 1:
        raise ValueError(f"n_units must be >= 1, got {n_units}")
    lo, hi = int(fault_onset_range[0]), int(fault_onset_range[1])
    if lo > hi or lo < 1:
        raise ValueError(f"empty or invalid fault onset range ({lo}, {hi})")
    life_lo, life_hi = int(post_onset_life[0]), int(post_onset_life[1])
    if life_lo > life_hi or life_lo < 1:
        raise ValueError(f"empty or invalid post-onset life range ({life_lo}, {life_hi})")

    rng = np.random.default_rng(seed)
    triples = condition_triples(n_conditions)
    q = triples.shape[0]

    # per-(condition, sensor) baselines; degrading channels get one shared row
    baselines = rng.normal(100.0, 20.0, size=(q, N_SENSORS))
    degrading = np.asarray(DEGRADING_SENSORS, dtype=np.intp)
    baselines[:, degrading] = baselines[0, degrading]
    # per-channel ramp slopes comfortably above the noise band so the
    # post-onset trend is strictly increasing cycle over cycle
    slopes = rng.uniform(0.3, 0.9, size=degrading.size)

    fleet: list[Trajectory] = []
    for unit in range(1, int(n_units) + 1):
        onset = int(rng.integers(lo, hi + 1))
        length = onset + int(rng.integers(life_lo, life_hi + 1))
        cond = rng.integers(0, q, size=length)
        severity = rng.uniform(0.9, 1.1)
        x = np.empty((length, N_FEATURES))
        x[:, :N_SETTINGS] = triples[cond]
        sensors = baselines[cond].copy()
        sensors += rng.uniform(-SYNTH_NOISE_BOUND, SYNTH_NOISE_BOUND, size=sensors.shape)
        t = np.arange(1, length + 1)
        ramp = np.maximum(t - onset, 0).astype(np.float64)
        sensors[:, degrading] += severity * ramp[:, None] * slopes[None, :]
        x[:, N_SETTINGS:] = sensors
        fleet.append(Trajectory(unit_id=unit, samples=x))
    return fleet


# ---------------------------------------------------------------------------
# file layout and caching


def subset_paths(data_root: str | os.PathLike, subset_id: str) -> dict[str, Path]:
    root = Path(data_root)
    return {
        "train": root / f"train_{subset_id}.txt",
        "test": root / f"test_{subset_id}.txt",
        "rul": root / f"RUL_{subset_id}.txt",
    }


def load_subset(data_root: str | os.PathLike, subset_id: str, split: str) -> Subset:
    """Load ``train_FD00x.txt`` (alpha) or ``test_FD00x.txt`` + ``RUL_FD00x.txt``
    (beta) from a data root directory."""
    paths = subset_paths(data_root, subset_id)
    if split == "alpha":
        path = paths["train"]
        if not path.is_file():
            raise FileNotFoundError(f"missing trajectory file: {path}")
        return Subset(id=subset_id, split="alpha", trajectories=tuple(parse_cmapss(path)))
    if split == "beta":
        for key in ("test", "rul"):
            if not paths[key].is_file():
                raise FileNotFoundError(f"missing trajectory file: {paths[key]}")
        trajectories = parse_cmapss(paths["test"])
        ruls = read_rul_file(paths["rul"])
        return Subset(
            id=subset_id,
            split="beta",
            trajectories=tuple(attach_censored_rul(trajectories, ruls)),
        )
    raise ValueError(f"split must be 'alpha' or 'beta', got {split!r}")


CACHE_FORMAT = "cosmo-rul-subset-v1"


def save_subset_cache(subset: Subset, path: str | os.PathLike) -> None:
    """Write a subset to a structured .npz cache (bit-exact round trip)."""
    lengths = np.asarray([t.n_cycles for t in subset.trajectories], dtype=np.int64)
    ruls = np.asarray(
        [-1 if t.censored_rul is None else t.censored_rul for t in subset.trajectories],
        dtype=np.int64,
    )
    units = np.asarray([t.unit_id for t in subset.trajectories], dtype=np.int64)
    data = np.vstack([t.samples for t in subset.trajectories])
    np.savez(
        path,
        format=np.array(CACHE_FORMAT),
        subset_id=np.array(subset.id),
        split=np.array(subset.split),
        unit_ids=units,
        lengths=lengths,
        censored_ruls=ruls,
        data=data,
    )


def load_subset_cache(path: str | os.PathLike) -> Subset:
    with np.load(path, allow_pickle=False) as archive:
        if str(archive["format"]) != CACHE_FORMAT:
            raise ValueError(f"unrecognized cache format in {path}")
        units = archive["unit_ids"]
        lengths = archive["lengths"]
        ruls = archive["censored_ruls"]
        data = archive["data"]
        subset_id = str(archive["subset_id"])
        split = str(archive["split"])
    offsets = np.concatenate(([0], np.cumsum(lengths)))
    trajectories = tuple(
        Trajectory(
            unit_id=int(u),
            samples=data[offsets[i] : offsets[i + 1]],
            censored_rul=None if ruls[i] < 0 else int(ruls[i]),
        )
        for i, u in enumerate(units)
    )
    return Subset(id=subset_id, split=split, trajectories=trajectories)


def write_cmapss(trajectories: Sequence[Trajectory], path: str | os.PathLike) -> None:
    """Write trajectories back to the 26-column text format (full precision)."""
    with open(path, "w") as fh:
        for traj in trajectories:
            for t in range(traj.n_cycles):
                fields = [str(traj.unit_id), str(t + 1)]
                fields += [repr(float(v)) for v in traj.samples[t]]
                fh.write(" ".join(fields) + "\n")


def write_rul_file(ruls: Sequence[int] | np.ndarray, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for r in np.asarray(ruls, dtype=np.int64):
            fh.write(f"{int(r)}\n")
