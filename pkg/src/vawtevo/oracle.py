"""Fitness evaluation: a simulated wind-torque proxy and a hardware file loop.

The simulated oracle is NOT an aerodynamic model.  It is a deterministic test
function with a turbine-like structure, cheap enough to drive thousands of
evaluations, and it is the only fitness used by the test-suite.  The model
per z-layer, with the wind blowing toward +y:

* scanning each x-column from the upwind side, the first filled cell is the
  exposed cell of that column;
* an exposed cell recessed behind the exposed cell of a neighbouring column
  (its surface lies further downwind) sits in a pocket and catches more wind:
  its drag weight is ``1 + CUP_DRAG`` per such neighbour, otherwise 1;
* its torque is ``weight * lever * v_local**2`` where ``lever`` is the
  signed distance of the column centre from the rotor axis, in voxels;
* ``rpm = C * max(0, spin * torque) / (mass + 1)`` with ``mass`` the number of
  filled voxels.

Every column of a cross-shaped turbine is exposed in every layer, so without
the pocket weighting the lever arms cancel and every design would score the
same; the pocket term is what makes blade shape matter.

For two turbines side by side, the 20 columns of each turbine facing the
other are fed accelerated flow ``v0 * (1 + GAP_GAIN * f)``, with ``f`` the
fill fraction of the neighbour's 20 gap-side columns.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from filelock import FileLock, Timeout

from .genome import Genotype
from .mesh import SMOOTHING_STEPS, TriMesh, extract_surface, smooth, write_stl
from .morphology import GRID, VOXEL_PITCH, build_grid

log = logging.getLogger(__name__)

RPM_SCALE = 5000.0  # arbitrary calibration constant C
CUP_DRAG = 0.2
GAP_COLUMNS = 20
GAP_GAIN = 0.25
PAIR_SPACING_VOXELS = 110  # 33 mm centre to centre

# doubled lever arm of column x about the rotor axis at 49.5: an exact integer
_LEVER2 = 2 * np.arange(GRID, dtype=np.int64) - (GRID - 1)


@dataclass(frozen=True)
class WindSetup:
    speed: float = 4.4  # m/s
    direction: str = "+y"
    spacing_mm: float = PAIR_SPACING_VOXELS * VOXEL_PITCH
    fan_distance_mm: float = 30.0
    gap_gain: float = GAP_GAIN

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError(f"wind speed must be positive, got {self.speed}")


@dataclass(frozen=True)
class FitnessResult:
    rpm: float
    per_turbine: tuple[float, ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.rpm) and self.rpm >= 0):
            raise ValueError(f"rpm must be finite and non-negative, got {self.rpm}")


def exposure(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per (layer, column): whether anything is hit and the pocket count.

    Returns ``exposed`` (bool, [z, x]) and ``pockets`` (0..2, [z, x]).
    """
    exposed = grid.any(axis=1)
    depth = np.where(exposed, grid.argmax(axis=1), GRID)
    pockets = np.zeros(exposed.shape, dtype=np.int64)
    pockets[:, 1:] += exposed[:, :-1] & (depth[:, :-1] < depth[:, 1:])
    pockets[:, :-1] += exposed[:, 1:] & (depth[:, 1:] < depth[:, :-1])
    pockets *= exposed
    return exposed, pockets


def torque(grid: np.ndarray, column_speed: np.ndarray) -> float:
    """Net torque about the rotor axis for per-column wind speeds.

    Columns sharing a speed are summed in exact integer arithmetic first, so
    a mirrored grid yields exactly the negated torque.
    """
    exposed, pockets = exposure(grid)
    plain = (exposed * _LEVER2).sum(axis=0)  # per column, integer
    cupped = (pockets * _LEVER2).sum(axis=0)
    total = 0.0
    for speed in np.unique(column_speed):
        cols = column_speed == speed
        a = int(plain[cols].sum())
        b = int(cupped[cols].sum())
        total += float(speed) ** 2 * (a + CUP_DRAG * b) / 2.0
    return total


def _rpm(grid: np.ndarray, spin: int, column_speed: np.ndarray) -> float:
    if spin not in (1, -1):
        raise ValueError(f"spin must be +1 or -1, got {spin}")
    t = spin * torque(grid, column_speed)
    # max() would keep a -0.0; the comparison does not
    return RPM_SCALE * t / (int(grid.sum()) + 1) if t > 0 else 0.0


def sim_single(grid: np.ndarray, spin: int = 1, wind: WindSetup = WindSetup()) -> FitnessResult:
    rpm = _rpm(grid, spin, np.full(GRID, wind.speed))
    return FitnessResult(rpm, (rpm,))


def gap_fill(grid: np.ndarray, side: str) -> float:
    """Fill fraction of the 20 columns on one side ("left" or "right")."""
    band = grid[..., :GAP_COLUMNS] if side == "left" else grid[..., GRID - GAP_COLUMNS :]
    return float(band.mean())


def sim_pair(
    grid_a: np.ndarray,
    spin_a: int,
    grid_b: np.ndarray,
    spin_b: int,
    wind: WindSetup = WindSetup(),
) -> FitnessResult:
    """Two turbines side by side, A on the left (low x) and B on the right."""
    speed_a = np.full(GRID, wind.speed)
    speed_a[GRID - GAP_COLUMNS :] = wind.speed * (1 + wind.gap_gain * gap_fill(grid_b, "left"))
    speed_b = np.full(GRID, wind.speed)
    speed_b[:GAP_COLUMNS] = wind.speed * (1 + wind.gap_gain * gap_fill(grid_a, "right"))
    rpm_a = _rpm(grid_a, spin_a, speed_a)
    rpm_b = _rpm(grid_b, spin_b, speed_b)
    return FitnessResult(rpm_a + rpm_b, (rpm_a, rpm_b))


def spin_of(g: Genotype) -> int:
    """Designated spin: counter-rotating (mirrored) turbines spin -1."""
    return -1 if g.rotation else 1


class Evaluator:
    """Real fitness for genotypes; engines only talk to this interface."""

    def evaluate(self, batch: Sequence[Genotype]) -> list[float]:
        raise NotImplementedError

    def evaluate_pairs(self, batch: Sequence[tuple[Genotype, Genotype]]) -> list[FitnessResult]:
        raise NotImplementedError

    def describe(self) -> dict[str, str]:
        return {}


class SimulatedEvaluator(Evaluator):
    def __init__(self, wind: WindSetup = WindSetup(), cache_size: int = 256):
        self.wind = wind
        self._grid = lru_cache(maxsize=cache_size)(build_grid)

    def evaluate(self, batch):
        return [sim_single(self._grid(g), spin_of(g), self.wind).rpm for g in batch]

    def evaluate_pairs(self, batch):
        return [
            sim_pair(self._grid(a), spin_of(a), self._grid(b), spin_of(b), self.wind)
            for a, b in batch
        ]

    def describe(self):
        return {"oracle": "sim", "wind_speed": repr(self.wind.speed)}


# --- hardware in the loop -------------------------------------------------

MANIFEST = "manifest.csv"
RESULTS = "results.csv"
LOCK = ".exchange.lock"


class HardwareError(RuntimeError):
    pass


class HardwareTimeout(HardwareError):
    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(missing)
        super().__init__("timed out waiting for results for: " + ", ".join(self.missing))


def read_results(path: Path, wanted: set[str]) -> dict[str, float]:
    """Parse complete lines of results.csv for the requested ids."""
    try:
        text = path.read_text()
    except FileNotFoundError:
        return {}
    # ignore a trailing line the operator is still writing
    if not text.endswith("\n"):
        text = text[: text.rfind("\n") + 1]
    found: dict[str, float] = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (lineno == 1 and row[0].strip() == "id"):
            continue
        ident = row[0].strip()
        if ident not in wanted:
            continue
        if len(row) != 2:
            raise HardwareError(f"{path.name} line {lineno}: malformed row for id {ident!r}: {row}")
        try:
            rpm = float(row[1])
        except ValueError:
            raise HardwareError(f"{path.name} line {lineno}: bad rpm {row[1]!r} for id {ident!r}") from None
        if not (math.isfinite(rpm) and rpm >= 0):
            raise HardwareError(f"{path.name} line {lineno}: rpm for id {ident!r} must be >= 0, got {rpm}")
        found[ident] = rpm
    return found


def hw_evaluate(
    batch: Sequence[tuple[str, TriMesh]],
    exchange_dir: str | Path,
    poll_interval: float = 5.0,
    timeout: float | None = None,
    stl_format: str = "binary",
) -> list[tuple[str, float]]:
    """Hand meshes to an operator through the exchange directory and wait.

    Writes ``<id>.stl`` per mesh and appends ``id,stl_path,status`` rows with
    status ``pending`` to ``manifest.csv``, then polls ``results.csv`` until it
    has an ``id,rpm`` row for every id.  Only one evaluation may use a
    directory at a time.
    """
    root = Path(exchange_dir)
    root.mkdir(parents=True, exist_ok=True)
    ids = [ident for ident, _ in batch]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in batch")
    lock = FileLock(str(root / LOCK))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise HardwareError(f"exchange directory {root} is in use by another evaluation") from None
    try:
        wanted = set(ids)
        results = read_results(root / RESULTS, wanted)
        pending = [(i, m) for i, m in batch if i not in results]
        if pending:
            manifest = root / MANIFEST
            new_file = not manifest.exists()
            for ident, mesh in pending:
                (root / f"{ident}.stl").write_bytes(write_stl(mesh, stl_format, name=ident))
            with manifest.open("a", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                if new_file:
                    writer.writerow(["id", "stl_path", "status"])
                for ident, _ in pending:
                    writer.writerow([ident, f"{ident}.stl", "pending"])
            log.info("waiting for %d result(s) in %s", len(pending), root)
        start = time.monotonic()
        while len(results) < len(wanted):
            if timeout is not None and time.monotonic() - start >= timeout:
                raise HardwareTimeout(wanted - set(results))
            time.sleep(poll_interval)
            results = read_results(root / RESULTS, wanted)
        return [(i, results[i]) for i in ids]
    finally:
        lock.release()


@dataclass
class HardwareEvaluator(Evaluator):
    """Fabricate-and-measure through ``hw_evaluate``; meshes are smoothed first."""

    exchange_dir: Path
    poll_interval: float = 5.0
    timeout: float | None = None
    smooth_steps: int = SMOOTHING_STEPS
    stl_format: str = "binary"
    prefix: str = "e"
    _counter: int = field(default=0, init=False)

    def _mesh(self, g: Genotype) -> TriMesh:
        return smooth(extract_surface(build_grid(g)), self.smooth_steps)

    def _next_id(self) -> str:
        self._counter += 1
        return f"{self.prefix}{self._counter:05d}"

    def _run(self, batch):
        return dict(hw_evaluate(batch, self.exchange_dir, self.poll_interval, self.timeout, self.stl_format))

    def evaluate(self, batch):
        jobs = [(self._next_id(), self._mesh(g)) for g in batch]
        got = self._run(jobs)
        return [got[i] for i, _ in jobs]

    def evaluate_pairs(self, batch):
        jobs, keys = [], []
        for a, b in batch:
            base = self._next_id()
            jobs += [(base + "a", self._mesh(a)), (base + "b", self._mesh(b))]
            keys.append(base)
        got = self._run(jobs)
        out = []
        for base in keys:
            ra, rb = got[base + "a"], got[base + "b"]
            out.append(FitnessResult(ra + rb, (ra, rb)))
        return out

    def describe(self):
        return {"oracle": "hw", "exchange_dir": str(self.exchange_dir)}
