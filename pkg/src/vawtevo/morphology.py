"""Genotype -> 100x100x100 voxel turbine.

Grids are boolean arrays indexed ``[z, y, x]``.  Wind blows toward +y.  Each
layer is a four-bladed cross: the north-east blade is drawn from the profile
along columns x = 50..99 above the baseline y = 50, and the other three blades
are quarter turns of it about the grid centre.  The mounting platform (a
one-voxel ring around a 14x14 empty channel) is stamped last.
"""

from __future__ import annotations

from typing import Iterable, Sequence, TextIO

import numpy as np

from .genome import N_XY, XY_MAX, XY_MIN, GenomeError, Genotype

GRID = 100
WORKSPACE_MM = 30.0
VOXEL_PITCH = WORKSPACE_MM / GRID  # 0.3 mm
CENTER = GRID // 2
COLUMNS_PER_GENE = (GRID - CENTER) // N_XY  # 5 columns per gene
SUPPORT = 2  # extra voxels drawn for structural support

CHANNEL = 14
CHANNEL_LO = CENTER - CHANNEL // 2  # 43
CHANNEL_HI = CHANNEL_LO + CHANNEL  # 57, exclusive
RING_LO, RING_HI = CHANNEL_LO - 1, CHANNEL_HI  # ring rows/cols 42 and 57

# z-sections: 100/6 rounded, giving 17,16,17,17,16,17 layers
SECTION_BOUNDS = tuple(round(k * GRID / 6) for k in range(7))


def translate_profile(xy: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open fill interval ``[lo, hi)`` above the baseline for each gene.

    >>> translate_profile([5, 8, 2, 4])
    [(0, 5), (3, 8), (2, 5), (2, 4)]
    """
    intervals: list[tuple[int, int]] = []
    for i, a in enumerate(xy):
        a = int(a)
        if not XY_MIN <= a <= XY_MAX:
            raise GenomeError(f"allele {a} at gene {i} outside [{XY_MIN},{XY_MAX}]")
        if not intervals:
            lo, hi = 0, a
        else:
            prev_lo, prev_hi = intervals[-1]
            if a >= prev_hi:
                lo, hi = prev_hi - SUPPORT, a
            elif a <= prev_lo:
                lo, hi = a, prev_lo + SUPPORT
            else:
                lo, hi = a - SUPPORT, a
        intervals.append((max(0, lo), min(XY_MAX, hi)))
    return intervals


def platform_mask() -> np.ndarray:
    """Ring cells of one layer (the channel inside it is excluded)."""
    mask = np.zeros((GRID, GRID), dtype=bool)
    mask[RING_LO : RING_HI + 1, RING_LO : RING_HI + 1] = True
    mask[CHANNEL_LO:CHANNEL_HI, CHANNEL_LO:CHANNEL_HI] = False
    return mask


def channel_mask() -> np.ndarray:
    mask = np.zeros((GRID, GRID), dtype=bool)
    mask[CHANNEL_LO:CHANNEL_HI, CHANNEL_LO:CHANNEL_HI] = True
    return mask


_PLATFORM = platform_mask()
_CHANNEL = channel_mask()


def blade_layer(xy: Sequence[int]) -> np.ndarray:
    """The four blades only, without the platform stamped in."""
    layer = np.zeros((GRID, GRID), dtype=bool)
    for gene, (lo, hi) in enumerate(translate_profile(xy)):
        x0 = CENTER + gene * COLUMNS_PER_GENE
        layer[CENTER + lo : CENTER + hi, x0 : x0 + COLUMNS_PER_GENE] = True
    blades = layer.copy()
    for k in (1, 2, 3):
        blades |= np.rot90(layer, k)
    return blades


def build_layer(xy: Sequence[int]) -> np.ndarray:
    layer = blade_layer(xy)
    layer |= _PLATFORM
    layer &= ~_CHANNEL
    return layer


def apply_z_transform(xy: Sequence[int], z_allele: int) -> list[int]:
    """Shift every allele by ``z_allele`` and clamp to the legal range.

    >>> apply_z_transform([2, 2, 3, 4, 5, 8, 13, 20, 34, 40], 2)
    [4, 4, 5, 6, 7, 10, 15, 22, 36, 42]
    """
    return [min(XY_MAX, max(XY_MIN, int(a) + int(z_allele))) for a in xy]


def section_genomes(g: Genotype) -> list[list[int]]:
    """x-y genome for each of the six z-sections (cumulative transforms)."""
    current = list(g.xy)
    sections = [current]
    for dz in g.z if g.z is not None else (0,) * 5:
        current = apply_z_transform(current, dz)
        sections.append(current)
    return sections


def mirror(grid: np.ndarray) -> np.ndarray:
    """Reflect across the central x plane; reverses spin handedness."""
    return grid[..., ::-1].copy()


def build_grid(g: Genotype) -> np.ndarray:
    if g.z is None:
        grid = np.broadcast_to(build_layer(g.xy), (GRID, GRID, GRID)).copy()
    else:
        grid = np.empty((GRID, GRID, GRID), dtype=bool)
        for k, xy in enumerate(section_genomes(g)):
            grid[SECTION_BOUNDS[k] : SECTION_BOUNDS[k + 1]] = build_layer(xy)
    if g.rotation:
        grid = mirror(grid)
    return grid


def check_grid(grid: np.ndarray) -> None:
    """Raise ValueError unless every layer carries the platform and an empty channel."""
    if grid.shape != (GRID, GRID, GRID) or grid.dtype != bool:
        raise ValueError(f"expected a {GRID}^3 boolean grid, got {grid.shape} {grid.dtype}")
    if not grid[:, _PLATFORM].all():
        raise ValueError("platform ring incomplete")
    if grid[:, _CHANNEL].any():
        raise ValueError("mounting channel obstructed")


def dump_pbm(grid: np.ndarray, out: TextIO, layers: Iterable[int] | None = None) -> None:
    """Write layers as plain PBM (P1) bitmaps, one after another.

    Each block starts with a ``# z=<k>`` comment; row 0 of the bitmap is the
    highest y so that the picture reads with +y pointing up.
    """
    for z in range(grid.shape[0]) if layers is None else layers:
        out.write(f"P1\n# z={z}\n{grid.shape[2]} {grid.shape[1]}\n")
        for row in grid[z, ::-1]:
            out.write(" ".join("1" if v else "0" for v in row))
            out.write("\n")
