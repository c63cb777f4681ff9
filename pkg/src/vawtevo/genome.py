"""Integer genotype for a four-bladed VAWT and its variation operators.

A genotype always carries ten x-y alleles (blade heights above the baseline,
1..42).  The z-varying encoding adds five section transforms (-42..42) and the
array encoding adds a spin-direction bit on top of that.

Random numbers come from ``numpy.random.Generator`` backed by PCG64, which
yields the same stream for the same seed on every platform.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

N_XY = 10
N_Z = 5
XY_MIN, XY_MAX = 1, 42
Z_MIN, Z_MAX = -42, 42

MUTATION_RATE = 0.25
MAX_STEP = 10
TOURNAMENT_SIZE = 3


class Mode(str, enum.Enum):
    FLAT = "flat"
    Z_VARYING = "z-varying"
    ARRAY = "array"


class GenomeError(ValueError):
    """Invalid genotype contents or text."""

    def __init__(self, message: str, column: Optional[int] = None):
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)
        self.column = column


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit unsigned seed."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class Genotype:
    xy: tuple[int, ...]
    z: Optional[tuple[int, ...]] = None
    rotation: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "xy", tuple(int(a) for a in self.xy))
        if self.z is not None:
            object.__setattr__(self, "z", tuple(int(a) for a in self.z))
        if self.rotation is not None:
            object.__setattr__(self, "rotation", bool(self.rotation))
        if len(self.xy) != N_XY:
            raise GenomeError(f"expected {N_XY} xy alleles, got {len(self.xy)}")
        for a in self.xy:
            if not XY_MIN <= a <= XY_MAX:
                raise GenomeError(f"xy allele {a} outside [{XY_MIN},{XY_MAX}]")
        if self.z is not None:
            if len(self.z) != N_Z:
                raise GenomeError(f"expected {N_Z} z alleles, got {len(self.z)}")
            for a in self.z:
                if not Z_MIN <= a <= Z_MAX:
                    raise GenomeError(f"z allele {a} outside [{Z_MIN},{Z_MAX}]")
        if self.rotation is not None and self.z is None:
            raise GenomeError("array genotypes need z alleles as well as a rotation bit")

    @property
    def mode(self) -> Mode:
        if self.rotation is not None:
            return Mode.ARRAY
        if self.z is not None:
            return Mode.Z_VARYING
        return Mode.FLAT

    def with_rotation(self, rotation: bool) -> "Genotype":
        z = self.z if self.z is not None else (0,) * N_Z
        return Genotype(self.xy, z, rotation)

    def __str__(self) -> str:
        return format_genotype(self)


def format_genotype(g: Genotype) -> str:
    """``xy=..;z=..;rot=..`` text form used by the CLI and the run logs."""
    parts = ["xy=" + ",".join(map(str, g.xy))]
    if g.z is not None:
        parts.append("z=" + ",".join(map(str, g.z)))
    if g.rotation is not None:
        parts.append(f"rot={int(g.rotation)}")
    return ";".join(parts)


_INT = re.compile(r"[+-]?\d+")


def _parse_ints(text: str, offset: int, lo: int, hi: int, field: str) -> list[int]:
    values = []
    pos = 0
    for chunk in text.split(","):
        col = offset + pos + (len(chunk) - len(chunk.lstrip()))
        token = chunk.strip()
        if not _INT.fullmatch(token):
            raise GenomeError(f"{field}: expected an integer, got {token!r}", col)
        v = int(token)
        if not lo <= v <= hi:
            raise GenomeError(f"{field}: allele {v} outside [{lo},{hi}]", col)
        values.append(v)
        pos += len(chunk) + 1
    return values


def parse_genotype(text: str) -> Genotype:
    """Parse the text form; errors carry the 0-based column of the offending token.

    >>> parse_genotype("xy=2,2,3,4,5,8,13,20,34,40;z=2,-5,10,3,-2").z
    (2, -5, 10, 3, -2)
    """
    fields: dict[str, tuple[str, int]] = {}
    pos = 0
    for part in text.split(";"):
        start = pos
        pos += len(part) + 1
        if not part.strip():
            continue
        if "=" not in part:
            raise GenomeError(f"expected key=value, got {part!r}", start)
        key, value = part.split("=", 1)
        key_s = key.strip()
        if key_s not in ("xy", "z", "rot"):
            raise GenomeError(f"unknown field {key_s!r}", start)
        if key_s in fields:
            raise GenomeError(f"duplicate field {key_s!r}", start)
        fields[key_s] = (value, start + len(key) + 1)
    if "xy" not in fields:
        raise GenomeError("missing xy field", 0)

    value, col = fields["xy"]
    xy = _parse_ints(value, col, XY_MIN, XY_MAX, "xy")
    if len(xy) != N_XY:
        raise GenomeError(f"xy: expected {N_XY} alleles, got {len(xy)}", col)
    z = None
    if "z" in fields:
        value, col = fields["z"]
        z = _parse_ints(value, col, Z_MIN, Z_MAX, "z")
        if len(z) != N_Z:
            raise GenomeError(f"z: expected {N_Z} alleles, got {len(z)}", col)
    rotation = None
    if "rot" in fields:
        value, col = fields["rot"]
        if value.strip() not in ("0", "1"):
            raise GenomeError(f"rot: expected 0 or 1, got {value.strip()!r}", col)
        rotation = value.strip() == "1"
        if z is None:
            raise GenomeError("rot requires a z field", col)
    return Genotype(tuple(xy), None if z is None else tuple(z), rotation)


def random_genotype(rng: np.random.Generator, mode: Mode | str = Mode.FLAT) -> Genotype:
    mode = Mode(mode)
    xy = rng.integers(XY_MIN, XY_MAX + 1, size=N_XY)
    z = None
    rotation = None
    if mode in (Mode.Z_VARYING, Mode.ARRAY):
        z = rng.integers(Z_MIN, Z_MAX + 1, size=N_Z)
    if mode is Mode.ARRAY:
        rotation = bool(rng.integers(0, 2))
    return Genotype(tuple(xy), None if z is None else tuple(z), rotation)


def _mutate_alleles(values, lo, hi, rng, rate, max_step):
    out = []
    for a in values:
        if rng.random() < rate:
            # uniform over the 2*max_step non-zero steps
            step = int(rng.integers(1, max_step + 1)) * (1 if rng.random() < 0.5 else -1)
            a = min(hi, max(lo, a + step))
        out.append(a)
    return tuple(out)


def mutate(
    g: Genotype,
    rng: np.random.Generator,
    rate: float = MUTATION_RATE,
    max_step: int = MAX_STEP,
) -> Genotype:
    """Per-allele creep mutation with clamping at the allele bounds.

    Each allele is hit independently with probability ``rate`` and moved by a
    non-zero integer step drawn uniformly from ``[-max_step, max_step]``.  The
    rotation bit, when present, flips with the same probability.
    """
    if rate <= 0:
        return g
    xy = _mutate_alleles(g.xy, XY_MIN, XY_MAX, rng, rate, max_step)
    z = None if g.z is None else _mutate_alleles(g.z, Z_MIN, Z_MAX, rng, rate, max_step)
    rotation = g.rotation
    if rotation is not None and rng.random() < rate:
        rotation = not rotation
    return Genotype(xy, z, rotation)


def crossover(a: Genotype, b: Genotype, rng: np.random.Generator, rate: float = 0.0) -> Genotype:
    """Uniform crossover; a no-op at the default rate of 0."""
    if rate <= 0 or rng.random() >= rate:
        return a

    def mix(x, y):
        return tuple(u if rng.random() < 0.5 else v for u, v in zip(x, y))

    z = None if a.z is None or b.z is None else mix(a.z, b.z)
    return Genotype(mix(a.xy, b.xy), z if a.z is not None else None, a.rotation)


def tournament_winner(fitnesses: Sequence[float], entrants: Sequence[int], direction: str = "best") -> int:
    """Index of the fittest (or least fit) entrant; ties go to the lowest index."""
    if direction not in ("best", "worst"):
        raise ValueError(f"direction must be 'best' or 'worst', got {direction!r}")
    sign = 1.0 if direction == "best" else -1.0
    winner = None
    for i in sorted(set(int(e) for e in entrants)):
        if winner is None or sign * fitnesses[i] > sign * fitnesses[winner]:
            winner = i
    return winner


def tournament_select(
    fitnesses: Sequence[float],
    rng: np.random.Generator,
    k: int = TOURNAMENT_SIZE,
    direction: str = "best",
) -> int:
    """Sample ``k`` entrants with replacement and return the tournament winner."""
    n = len(fitnesses)
    if n == 0:
        raise ValueError("tournament over an empty population")
    if k < 1:
        raise ValueError(f"tournament size must be >= 1, got {k}")
    entrants = rng.integers(0, n, size=k)
    return tournament_winner(fitnesses, entrants, direction)
