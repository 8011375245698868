"""Input points, simulation grids, train/test splitting and delimited-text I/O.

Inputs are kept in raw fertiliser units. The design range is [0, 100] on both
axes; the kernel's correlation lengths are only meaningful on that scale, so
no rescaling happens anywhere in the package.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataError

DESIGN_RANGE = (0.0, 100.0)
DEFAULT_SCHEMA = {"n": "n", "p": "p", "yield": "yield"}
DELIMITERS = (",", "\t", ";")


class InputPoint(NamedTuple):
    """A fertiliser setting: nitrogen and phosphorus application rates."""

    n_level: float
    p_level: float


class SimulationRecord(NamedTuple):
    point: InputPoint
    yield_value: float


def as_points(points) -> np.ndarray:
    """Coerce an InputPoint, a sequence of points or an array to shape (m, 2)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected points of shape (m, 2), got {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SimulationGrid:
    """Simulator output for one scenario: distinct input points and their yields.

    Records are stored column-wise as read-only arrays; ``records`` gives the
    row view.
    """

    points: np.ndarray
    yields: np.ndarray
    scenario_id: str = ""

    def __post_init__(self):
        points = _frozen(as_points(self.points) if len(self.points) else np.empty((0, 2)))
        yields = _frozen(np.asarray(self.yields, dtype=float).reshape(-1))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "yields", yields)
        if len(yields) == 0:
            raise DataError("no records")
        if len(points) != len(yields):
            raise DataError(f"{len(points)} input points but {len(yields)} yields")
        if not np.all(np.isfinite(points)):
            raise DataError("non-finite input level")
        bad = np.flatnonzero(~np.isfinite(yields))
        if bad.size:
            raise DataError(f"non-finite yield at record {bad[0]}")
        lo, hi = DESIGN_RANGE
        out = np.flatnonzero(np.any((points < lo) | (points > hi), axis=1))
        if out.size:
            n, p = points[out[0]]
            raise DataError(f"record {out[0]} at ({n:g}, {p:g}) lies outside the design range [0, 100]")
        dups = duplicate_rows(points)
        if dups:
            i, j = dups[0]
            raise DataError(f"duplicate input point ({points[i, 0]:g}, {points[i, 1]:g}) at records {i} and {j}")

    @classmethod
    def from_records(cls, records: Iterable[SimulationRecord], scenario_id: str = "") -> "SimulationGrid":
        records = list(records)
        points = [tuple(r.point) for r in records]
        return cls(np.array(points, dtype=float).reshape(-1, 2), [r.yield_value for r in records], scenario_id)

    @property
    def records(self) -> list[SimulationRecord]:
        return [
            SimulationRecord(InputPoint(float(n), float(p)), float(y))
            for (n, p), y in zip(self.points, self.yields)
        ]

    def subset(self, index) -> "SimulationGrid":
        index = np.asarray(index, dtype=int)
        return SimulationGrid(self.points[index], self.yields[index], self.scenario_id)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def __len__(self):
        return len(self.yields)

    def __eq__(self, other):
        if not isinstance(other, SimulationGrid):
            return NotImplemented
        return (
            self.scenario_id == other.scenario_id
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.yields, other.yields)
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitGrid:
    train: SimulationGrid
    test: SimulationGrid
    seed: int | None
    fraction: float


def duplicate_rows(points: np.ndarray) -> list[tuple[int, int]]:
    """Return (first, repeat) index pairs for exactly coincident points."""
    seen: dict[tuple[float, float], int] = {}
    dups = []
    for j, (n, p) in enumerate(points):
        key = (float(n), float(p))
        if key in seen:
            dups.append((seen[key], j))
        else:
            seen[key] = j
    return dups


def _detect_delimiter(header: str) -> str:
    counts = {d: header.count(d) for d in DELIMITERS}
    best = max(DELIMITERS, key=lambda d: counts[d])
    return best if counts[best] else ","


def load_grid(
    path,
    schema: Mapping[str, str] | None = None,
    delimiter: str | None = None,
    scenario_id: str | None = None,
) -> SimulationGrid:
    """Read a delimited text file with a header row into a SimulationGrid.

    Parameters
    ----------
    path : path-like
        UTF-8 file, one record per row.
    schema : mapping, optional
        Maps the logical columns ``"n"``, ``"p"`` and ``"yield"`` to header
        names. Missing keys fall back to the logical name itself.
    delimiter : str, optional
        Field separator. Detected among comma, tab and semicolon when omitted.
    scenario_id : str, optional
        Label for the grid; defaults to the file stem.

    Raises
    ------
    DataError
        Missing file, no records, unparseable row (reported by line number),
        duplicate input point or non-finite value.
    """
    path = Path(path)
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(cols)
        if unknown:
            raise ConfigError(f"unknown schema keys {sorted(unknown)}; expected n, p, yield")
        cols.update(schema)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no such data file: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None

    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: no records")
    delim = delimiter or _detect_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delim)
    header = [h.strip() for h in next(reader)]
    try:
        idx = {key: header.index(name) for key, name in cols.items()}
    except ValueError:
        missing = [name for name in cols.values() if name not in header]
        raise DataError(f"{path}: columns {missing} not found in header {header}") from None

    points, yields, lines_no = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        try:
            n = float(row[idx["n"]])
            p = float(row[idx["p"]])
            y = float(row[idx["yield"]])
        except (IndexError, ValueError):
            raise DataError(f"{path}: cannot parse row at line {lineno}: {delim.join(row)!r}") from None
        if not (math.isfinite(n) and math.isfinite(p)):
            raise DataError(f"{path}: non-finite input level at line {lineno}")
        if not math.isfinite(y):
            raise DataError(f"{path}: non-finite yield at line {lineno}")
        points.append((n, p))
        yields.append(y)
        lines_no.append(lineno)

    if not yields:
        raise DataError(f"{path}: no records")
    pts = np.array(points, dtype=float)
    dups = duplicate_rows(pts)
    if dups:
        i, j = dups[0]
        raise DataError(
            f"{path}: duplicate input point ({pts[i, 0]:g}, {pts[i, 1]:g}) "
            f"at lines {lines_no[i]} and {lines_no[j]}"
        )
    try:
        return SimulationGrid(pts, yields, path.stem if scenario_id is None else scenario_id)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_grid(grid: SimulationGrid, path, delimiter: str = ",") -> None:
    """Write a grid in the format ``load_grid`` reads; values round-trip exactly."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["n", "p", "yield"])
        for (n, p), y in zip(grid.points, grid.yields):
            w.writerow([repr(float(n)), repr(float(p)), repr(float(y))])


def train_size(m: int, fraction: float) -> int:
    # the rounding guard keeps e.g. 0.29 * 100 from flooring to 28
    return math.floor(round(fraction * m, 9))


def split(grid: SimulationGrid, fraction: float = 0.8, seed: int = 0) -> SplitGrid:
    """Seeded uniform random train/test partition without replacement.

    The first ``floor(fraction * len(grid))`` entries of a seeded permutation
    go to training. Both halves keep the parent's record order.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    m = len(grid)
    k = train_size(m, fraction)
    if m < 2 or k < 1:
        raise DataError(f"grid of {m} records is too small for a non-empty training set at fraction {fraction}")
    perm = np.random.default_rng(seed).permutation(m)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    return SplitGrid(grid.subset(train_idx), grid.subset(test_idx), seed, fraction)


def block_split(
    grid: SimulationGrid,
    n_range: Sequence[float] = DESIGN_RANGE,
    p_range: Sequence[float] = DESIGN_RANGE,
) -> SplitGrid:
    """Hold out every record inside the closed box ``n_range x p_range``."""
    pts = grid.points
    inside = (
        (pts[:, 0] >= n_range[0]) & (pts[:, 0] <= n_range[1])
        & (pts[:, 1] >= p_range[0]) & (pts[:, 1] <= p_range[1])
    )
    if inside.all() or not inside.any():
        raise DataError("held-out box must contain some but not all records")
    train_idx = np.flatnonzero(~inside)
    return SplitGrid(grid.subset(train_idx), grid.subset(np.flatnonzero(inside)), None, len(train_idx) / len(grid))


def outside_box(points, lower, upper) -> np.ndarray:
    """Boolean mask of points outside the closed axis-aligned box."""
    pts = as_points(points)
    return np.any((pts < np.asarray(lower)) | (pts > np.asarray(upper)), axis=1)


def validate_extrapolation(point, grid: SimulationGrid) -> bool:
    """True iff ``point`` lies outside the bounding box of the grid's inputs."""
    lo, hi = grid.bounds()
    return bool(outside_box(point, lo, hi)[0])


def grid_levels(count: int, lo: float = DESIGN_RANGE[0], hi: float = DESIGN_RANGE[1]) -> np.ndarray:
    """``count`` equally spaced levels spanning [lo, hi]."""
    if count < 1:
        raise ConfigError(f"level count must be positive, got {count}")
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def cartesian(n_levels, p_levels) -> np.ndarray:
    """Row-major product of the level lists: n outer, p inner."""
    n_levels = np.asarray(n_levels, dtype=float).reshape(-1)
    p_levels = np.asarray(p_levels, dtype=float).reshape(-1)
    nn, pp = np.meshgrid(n_levels, p_levels, indexing="ij")
    return np.column_stack([nn.ravel(), pp.ravel()])
