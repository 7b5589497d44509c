"""Programmable rough pseudo-particle geometry.

Six planar particle families (stick, cross, dendrite, L, T, Y) are modeled as
unions of rectangles in their local plane. Each family is generated with a
random size (maximum Feret diameter) and random 3D orientation, projected
orthographically onto a pixel grid, and optionally extruded into a voxel
volume for multi-view work. Stick, cross and dendrite are centrosymmetric by
construction; L, T and Y are not.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import OutOfBoundsError


class Family(str, Enum):
    STICK = "stick"
    CROSS = "cross"
    DENDRITE = "dendrite"
    L = "l"
    T = "t"
    Y = "y"


ALL_FAMILIES = tuple(Family)
CENTROSYMMETRIC = frozenset({Family.STICK, Family.CROSS, Family.DENDRITE})

# Bar width as a fraction of the Feret diameter. Dendrites use thinner bars
# so the six arms and their branchlets stay visually distinct.
_WIDTH_FRAC_RANGE: dict[Family, tuple[float, float]] = {f: (0.10, 0.25) for f in Family}
_WIDTH_FRAC_RANGE[Family.DENDRITE] = (0.05, 0.12)
_BRANCH_FRAC_RANGE = (0.2, 0.4)
_ARM_RATIO_RANGE = (0.6, 1.0)

# Poses whose projected area falls below this fraction of the identity-pose
# area are rejected as degenerate (fully edge-on planar particles would
# rasterize to nothing).
MIN_PROJECTED_AREA_FACTOR = 0.01


@dataclass(frozen=True)
class ShapeSpec:
    """Parametric description of one particle."""

    family: Family
    feret_um: float
    params: dict
    seed: int

    def __post_init__(self):
        if not self.feret_um > 0:
            raise ValueError(f"feret_um must be positive, got {self.feret_um}")
        for k, v in self.params.items():
            if not 0 < v <= 1:
                raise ValueError(f"param {k}={v} outside (0, 1]")
        wf = self.params.get("width_frac", 0.0)
        if wf > 0.5:
            raise ValueError(f"width_frac {wf} exceeds 0.5")

    @property
    def centrosymmetric(self) -> bool:
        return self.family in CENTROSYMMETRIC


@dataclass(frozen=True)
class Pose:
    """3D orientation as a unit quaternion (w, x, y, z), local -> lab frame."""

    quaternion: tuple[float, float, float, float]

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.quaternion))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} not within 1e-9 of 1")

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    @property
    def projected_area_factor(self) -> float:
        """|cos| of the tilt between the shape plane and the viewing plane.

        For a planar shape this is exactly (projected area) / (true area).
        """
        return abs(float(self.rotation_matrix()[2, 2]))


IDENTITY_POSE = Pose((1.0, 0.0, 0.0, 0.0))


@dataclass(frozen=True)
class GridSpec:
    """Square raster grid: n cells per side, cell_um micrometers per cell."""

    n: int
    cell_um: float

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1) != 0:
            raise ValueError(f"grid side must be a power of two >= 4, got {self.n}")
        if not self.cell_um > 0:
            raise ValueError(f"cell_um must be positive, got {self.cell_um}")

    def coords_um(self) -> np.ndarray:
        """Cell-center coordinates, symmetric about 0."""
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.cell_um


def default_object_grid(max_feret_um: float = 1500.0, n: int = 128, max_span_cells: int = 120) -> GridSpec:
    """Grid sized so the largest particle spans at most max_span_cells cells."""
    if max_span_cells > n - 4:
        raise ValueError("max_span_cells leaves no border margin")
    return GridSpec(n=n, cell_um=max_feret_um / max_span_cells)


# ---------------------------------------------------------------------------
# family layouts
#
# A layout is an array of rectangles, one per row: (cx, cy, ux, uy, a, b)
# with u the unit vector along the bar, a the half-length and b the
# half-width. Layouts are built at nominal scale, then rescaled so the exact
# maximum Feret diameter (max pairwise corner distance) equals feret_um, and
# recentered so the bounding box sits on the origin.
# ---------------------------------------------------------------------------


def _rect(cx, cy, ang, length, width):
    return [cx, cy, math.cos(ang), math.sin(ang), 0.5 * length, 0.5 * width]


def _bar(p0, ang, length, width):
    """Rectangle extending from point p0 by `length` along direction `ang`."""
    return _rect(
        p0[0] + 0.5 * length * math.cos(ang),
        p0[1] + 0.5 * length * math.sin(ang),
        ang,
        length,
        width,
    )


def _family_rects(family: Family, params: dict) -> np.ndarray:
    w = params["width_frac"]
    rects: list[list[float]]
    if family is Family.STICK:
        rects = [_rect(0, 0, 0.0, 1.0, w)]
    elif family is Family.CROSS:
        rects = [_rect(0, 0, 0.0, 1.0, w), _rect(0, 0, math.pi / 2, 1.0, w)]
    elif family is Family.DENDRITE:
        bf = params["branch_frac"]
        rects = []
        for k in range(6):
            ang = k * math.pi / 3
            rects.append(_bar((0.0, 0.0), ang, 0.5, w))
            # two branchlets halfway along each arm, fanning outward at +-60 deg
            attach = (0.25 * math.cos(ang), 0.25 * math.sin(ang))
            for s in (-1, 1):
                rects.append(_bar(attach, ang + s * math.pi / 3, 0.5 * bf, w))
    elif family is Family.L:
        r = params["arm_ratio"]
        rects = [_bar((0.0, 0.0), 0.0, 1.0, w), _bar((0.0, 0.0), math.pi / 2, r, w)]
    elif family is Family.T:
        r = params["arm_ratio"]
        rects = [_rect(0, 0, 0.0, 1.0, w), _bar((0.0, 0.0), -math.pi / 2, r, w)]
    elif family is Family.Y:
        rects = [
            _bar((0.0, 0.0), math.pi / 2, 1.0, w),
            _bar((0.0, 0.0), math.pi / 2 + 2 * math.pi / 3, 1.0, w),
            _bar((0.0, 0.0), math.pi / 2 - 2 * math.pi / 3, 1.0, w),
        ]
    else:  # pragma: no cover
        raise ValueError(f"unknown family {family}")
    return np.array(rects, dtype=np.float64)


def _corners(rects: np.ndarray) -> np.ndarray:
    c = rects[:, :2]
    u = rects[:, 2:4]
    v = np.stack([-u[:, 1], u[:, 0]], axis=1)
    au = rects[:, 4:5] * u
    bv = rects[:, 5:6] * v
    return np.concatenate([c + au + bv, c + au - bv, c - au + bv, c - au - bv], axis=0)


def _max_feret(corners: np.ndarray) -> float:
    d = corners[:, None, :] - corners[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def planar_rectangles(spec: ShapeSpec) -> np.ndarray:
    """Scaled planar layout of `spec` in micrometers.

    Scaled so the exact maximum Feret diameter equals spec.feret_um, and
    translated so the bounding box is centered on the origin (which keeps the
    centrosymmetric families exactly point symmetric about the origin).
    """
    rects = _family_rects(spec.family, spec.params)
    scale = spec.feret_um / _max_feret(_corners(rects))
    rects[:, [0, 1, 4, 5]] *= scale
    cor = _corners(rects)
    rects[:, :2] -= (cor.min(axis=0) + cor.max(axis=0)) / 2.0
    return rects


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_shape(family: Family, size_range_um: tuple[float, float], seed: int) -> ShapeSpec:
    """Draw a random particle of the given family.

    feret_um is uniform over size_range_um; family ratios are drawn from the
    documented per-family ranges. Deterministic for fixed arguments.
    """
    lo, hi = float(size_range_um[0]), float(size_range_um[1])
    if not (1.0 <= lo <= hi <= 1e5):
        raise ValueError(f"size range [{lo}, {hi}] empty, inverted or outside [1, 1e5] um")
    rng = np.random.default_rng(seed)
    feret = lo if lo == hi else float(rng.uniform(lo, hi))
    params = {"width_frac": float(rng.uniform(*_WIDTH_FRAC_RANGE[family]))}
    if family is Family.DENDRITE:
        params["branch_frac"] = float(rng.uniform(*_BRANCH_FRAC_RANGE))
    elif family in (Family.L, Family.T):
        params["arm_ratio"] = float(rng.uniform(*_ARM_RATIO_RANGE))
    return ShapeSpec(family=family, feret_um=feret, params=params, seed=seed)


def sample_pose(seed: int) -> Pose:
    """Uniform random rotation (normalized 4-Gaussian quaternion)."""
    rng = np.random.default_rng(seed)
    while True:
        q = rng.normal(size=4)
        norm = float(np.linalg.norm(q))
        if norm > 1e-12:
            break
    q = q / norm
    if q[0] < 0:
        q = -q
    return Pose(tuple(float(c) for c in q))


def sample_valid_pose(spec: ShapeSpec, grid: GridSpec, seed: int) -> tuple[Pose, np.ndarray]:
    """Draw a pose whose projection is non-degenerate, plus its raster mask.

    Poses with projected area below MIN_PROJECTED_AREA_FACTOR of the
    identity-pose area, or whose raster comes out empty, are resampled with
    an incremented seed.
    """
    for attempt in itertools.count():
        if attempt >= 1000:
            raise RuntimeError(f"no valid pose found for {spec} after 1000 attempts")
        pose = sample_pose(seed + attempt)
        if pose.projected_area_factor < MIN_PROJECTED_AREA_FACTOR:
            continue
        mask = rasterize_projection(spec, pose, grid)
        if mask.any():
            return pose, mask


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


def _fill_rects_2d(rects_2d: list[tuple], grid: GridSpec) -> np.ndarray:
    """OR of cell-center-inside tests over projected parallelograms.

    Each entry is (center(2,), e1(2,), e2(2,)): the parallelogram
    {center + t1*e1 + t2*e2 : |t1|<=1, |t2|<=1}.
    """
    xs = grid.coords_um()
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = np.zeros((grid.n, grid.n), dtype=bool)
    for c, e1, e2 in rects_2d:
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(det) < 1e-30:
            continue
        dx = X - c[0]
        dy = Y - c[1]
        t1 = (e2[1] * dx - e2[0] * dy) / det
        t2 = (-e1[1] * dx + e1[0] * dy) / det
        mask |= (np.abs(t1) <= 1.0) & (np.abs(t2) <= 1.0)
    return mask


def _projected_rects(spec: ShapeSpec, pose: Pose) -> list[tuple]:
    rects = planar_rectangles(spec)
    A = pose.rotation_matrix()[:2, :2]
    out = []
    for cx, cy, ux, uy, a, b in rects:
        u = np.array([ux, uy])
        v = np.array([-uy, ux])
        out.append((A @ np.array([cx, cy]), A @ (a * u), A @ (b * v)))
    return out


def _check_fit_2d(points: np.ndarray, grid: GridSpec, what: str) -> None:
    half = (grid.n - 2) / 2.0 * grid.cell_um
    over = np.abs(points).max(axis=0) - half
    if (over > 0).any():
        cells = over / grid.cell_um
        raise OutOfBoundsError(
            f"{what} exceeds the grid (1-cell border kept clear) by "
            f"{max(cells[0], 0):.2f} cells along x and {max(cells[1], 0):.2f} cells along y"
        )


def rasterize_projection(spec: ShapeSpec, pose: Pose, grid: GridSpec) -> np.ndarray:
    """Orthographic projection of the posed planar particle onto the grid.

    The union of rectangles is rotated by `pose`, projected along the viewing
    axis, and filled with a cell-center-inside test. Returns a {0,1} uint8
    mask indexed [x, y].
    """
    proj = _projected_rects(spec, pose)
    corners = np.concatenate(
        [np.stack([c + s1 * e1 + s2 * e2 for s1 in (-1, 1) for s2 in (-1, 1)]) for c, e1, e2 in proj]
    )
    _check_fit_2d(corners, grid, "projected shape")
    return _fill_rects_2d(proj, grid).astype(np.uint8)


# ---------------------------------------------------------------------------
# volumes and silhouettes
# ---------------------------------------------------------------------------

AXES = ("xy", "yz", "zx")


def build_volume(spec: ShapeSpec, grid: GridSpec) -> np.ndarray:
    """Voxel model: the planar layout extruded into a slab along z.

    Thickness is width_frac * feret_um, so bars get a square cross-section.
    Returns a {0,1} uint8 grid indexed [x, y, z], bounding box centered.
    """
    rects = planar_rectangles(spec)
    thickness = spec.params["width_frac"] * spec.feret_um
    cor = _corners(rects)
    _check_fit_2d(cor, grid, "particle footprint")
    half = (grid.n - 2) / 2.0 * grid.cell_um
    if thickness / 2.0 > half:
        raise OutOfBoundsError(
            f"slab thickness exceeds the grid by {(thickness / 2.0 - half) / grid.cell_um:.2f} cells along z"
        )
    proj = [
        (np.array([cx, cy]), a * np.array([ux, uy]), b * np.array([-uy, ux]))
        for cx, cy, ux, uy, a, b in rects
    ]
    footprint = _fill_rects_2d(proj, grid)
    z_ok = np.abs(grid.coords_um()) <= thickness / 2.0
    return (footprint[:, :, None] & z_ok[None, None, :]).astype(np.uint8)


def silhouette(volume: np.ndarray, axis: str) -> np.ndarray:
    """Logical-OR projection of a voxel grid along the third axis.

    Axis convention: "xy" masks index (x, y), "yz" index (y, z) and
    "zx" index (z, x).
    """
    if axis == "xy":
        out = volume.any(axis=2)
    elif axis == "yz":
        out = volume.any(axis=0)
    elif axis == "zx":
        out = volume.any(axis=1).T
    else:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return out.astype(np.uint8)


def bounding_box(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(lo0, hi0, lo1, hi1) inclusive bounds of the nonzero cells."""
    if not mask.any():
        raise ValueError("empty mask has no bounding box")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])
