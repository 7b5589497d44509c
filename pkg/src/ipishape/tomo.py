"""Three-view volumetric recombination (visual hull).

Three orthogonal binary masks are back-projected into prisms whose
intersection is the largest volume consistent with all three views. Masks
coming from reconstructions carry translation and point-reflection
ambiguities, so recombination optionally registers each view (support-box
centering) and brute-forces the 8 per-view reflection combinations, keeping
the one whose hull reprojects most consistently onto the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import iou
from .shapes import AXES


def visual_hull(m_xy: np.ndarray, m_yz: np.ndarray, m_zx: np.ndarray) -> np.ndarray:
    """Voxel (x,y,z) is occupied iff m_xy[x,y] and m_yz[y,z] and m_zx[z,x]."""
    if not (m_xy.shape == m_yz.shape == m_zx.shape) or m_xy.shape[0] != m_xy.shape[1]:
        raise ValueError(
            f"masks must be square and equal-sized, got {m_xy.shape}, {m_yz.shape}, {m_zx.shape}"
        )
    a = m_xy != 0
    b = m_yz != 0
    c = m_zx != 0
    hull = a[:, :, None] & b[None, :, :] & c.T[:, None, :]
    return hull.astype(np.uint8)


def reproject(grid: np.ndarray, axis: str) -> np.ndarray:
    """Logical-OR projection of a voxel grid, same axis convention as
    silhouettes: "xy" -> (x,y), "yz" -> (y,z), "zx" -> (z,x)."""
    if axis == "xy":
        out = grid.any(axis=2)
    elif axis == "yz":
        out = grid.any(axis=0)
    elif axis == "zx":
        out = grid.any(axis=1).T
    else:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return out.astype(np.uint8)


def _axis_centering_shift(mask: np.ndarray, axis: int) -> int:
    """Integer shift placing the support midpoint of `axis` at the grid center."""
    n = mask.shape[axis]
    idx = np.flatnonzero(mask.any(axis=1 - axis))
    if len(idx) == 0:
        return 0
    center = (idx[0] + idx[-1]) / 2.0
    return int(np.rint((n - 1) / 2.0 - center))


def center_mask(mask: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Cyclically shift a mask so its support box is grid-centered."""
    s0 = _axis_centering_shift(mask, 0)
    s1 = _axis_centering_shift(mask, 1)
    return np.roll(mask, (s0, s1), axis=(0, 1)), (s0, s1)


def _reflect(mask: np.ndarray) -> np.ndarray:
    """Point reflection about the (n-1)/2 grid center."""
    return mask[::-1, ::-1]


@dataclass
class RecombineResult:
    hull: np.ndarray
    shifts: dict[str, tuple[int, int]]
    reflections: dict[str, bool]
    consistency: float  # sum over views of IoU(reprojection, input)


def recombine(m_xy: np.ndarray, m_yz: np.ndarray, m_zx: np.ndarray, register: bool = True) -> RecombineResult:
    """Visual hull with optional registration of reconstructed views.

    Registration centers each view's support box (reconstructions carry no
    absolute position) and then tries all 8 per-view point-reflection
    combinations, scoring each candidate hull by the summed IoU between its
    reprojections and the inputs. Ties keep the lowest combination index, so
    already-consistent silhouettes pass through unchanged.
    """
    masks = {"xy": m_xy, "yz": m_yz, "zx": m_zx}
    shifts = {axis: (0, 0) for axis in AXES}
    if register:
        for axis in AXES:
            masks[axis], shifts[axis] = center_mask(masks[axis])

    if not all(m.any() for m in masks.values()):
        hull = visual_hull(masks["xy"], masks["yz"], masks["zx"])
        return RecombineResult(hull, shifts, {a: False for a in AXES}, 0.0)

    best = None
    for combo in range(8 if register else 1):
        flags = {axis: bool((combo >> (2 - i)) & 1) for i, axis in enumerate(AXES)}
        cand = {axis: _reflect(masks[axis]) if flags[axis] else masks[axis] for axis in AXES}
        hull = visual_hull(cand["xy"], cand["yz"], cand["zx"])
        if hull.any():
            score = sum(iou(reproject(hull, axis), cand[axis]) for axis in AXES)
        else:
            score = 0.0
        if best is None or score > best.consistency:
            best = RecombineResult(hull, shifts, flags, score)
    return best


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def to_runs(grid: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Run-length rows (z, y, x_start, x_end), x_end inclusive."""
    runs = []
    n = grid.shape[0]
    occ = grid != 0
    for z in range(n):
        for y in range(n):
            line = occ[:, y, z]
            if not line.any():
                continue
            edges = np.flatnonzero(np.diff(np.concatenate(([0], line.view(np.uint8), [0]))))
            for x0, x1 in zip(edges[::2], edges[1::2]):
                runs.append((z, y, int(x0), int(x1 - 1)))
    return runs


def write_runs(grid: np.ndarray, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={grid.shape[0]} rows: z y x_start x_end (inclusive)\n")
        for run in to_runs(grid):
            fh.write(" ".join(str(v) for v in run) + "\n")


def read_runs(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        n = int(header.split("n=")[1].split()[0])
        grid = np.zeros((n, n, n), dtype=np.uint8)
        for line in fh:
            z, y, x0, x1 = (int(v) for v in line.split())
            grid[x0 : x1 + 1, y, z] = 1
    return grid
