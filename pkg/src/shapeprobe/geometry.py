"""Polygon sampling, rasterization and elastic mask warping.

All functions are pure: results depend only on arguments and the supplied
generator state, so scenes can be produced in parallel from per-index child
seeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GenerationError, PlacementError, ValidationError

# Gaussian smoothing scale of the random displacement field, in pixels.
ELASTIC_SIGMA = 8.0
# Peak displacement per deformation degree, as a fraction of the short mask
# side. 1/128 of the side per degree keeps degree-10 warps strong but
# connected on paper-scale (256 px) masks; calibrated in tests.
ELASTIC_UNIT_FRACTION = 1.0 / 128.0

_SAMPLE_BUDGET = 64


@dataclass(frozen=True)
class Polygon:
    """Closed simple ring in continuous pixel coordinates."""

    vertices: np.ndarray  # (n, 2) float64, columns (x, y)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValidationError("polygon needs at least 3 (x, y) vertices")
        object.__setattr__(self, "vertices", v)

    @property
    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def perimeter(self) -> float:
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def aabb(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y)."""
        v = self.vertices
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.vertices + np.array([dx, dy]))

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(self.vertices * float(factor))

    def flipped_h(self, width: float) -> "Polygon":
        v = self.vertices.copy()
        v[:, 0] = width - v[:, 0]
        return Polygon(v)

    def flipped_v(self, height: float) -> "Polygon":
        v = self.vertices.copy()
        v[:, 1] = height - v[:, 1]
        return Polygon(v)


def polygon_is_simple(p: Polygon) -> bool:
    """Pairwise segment-intersection check (no shared-endpoint crossings)."""
    v = p.vertices
    n = len(v)
    segs = [(v[i], v[(i + 1) % n]) for i in range(n)]

    def _cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def _intersects(a, b, c, d):
        d1 = _cross(c, d, a)
        d2 = _cross(c, d, b)
        d3 = _cross(a, b, c)
        d4 = _cross(a, b, d)
        return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))

    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent segments share an endpoint
            if _intersects(*segs[i], *segs[j]):
                return False
    return True


def polygon_contains(p: Polygon, point) -> bool:
    """Even-odd point-in-polygon test in continuous coordinates."""
    x, y = float(point[0]), float(point[1])
    v = p.vertices
    inside = False
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def mask_centroid(mask: np.ndarray) -> tuple[float, float]:
    """(x, y) centroid of set pixels."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise ValidationError("centroid of an empty mask")
    return float(xs.mean()), float(ys.mean())


def aligned_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IOU after translating and uniformly scaling b onto a.

    b is resampled (nearest) so its centroid and pixel area match a's; the
    result measures shape identity irrespective of placement and size.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    area_a, area_b = int(a.sum()), int(b.sum())
    if area_a == 0 or area_b == 0:
        return 1.0 if area_a == area_b else 0.0
    cax, cay = mask_centroid(a)
    cbx, cby = mask_centroid(b)
    s = np.sqrt(area_b / area_a)  # maps a-frame offsets into b's scale
    h, w = a.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_x = np.rint(cbx + (xx - cax) * s).astype(np.int64)
    src_y = np.rint(cby + (yy - cay) * s).astype(np.int64)
    valid = (src_x >= 0) & (src_x < w) & (src_y >= 0) & (src_y < h)
    b_aligned = np.zeros_like(a)
    b_aligned[valid] = b[src_y[valid], src_x[valid]]
    inter = int((a & b_aligned).sum())
    union = int((a | b_aligned).sum())
    return inter / union if union else 1.0


def sample_polygon(rng: np.random.Generator,
                   vertex_count: tuple[int, int] = (5, 12),
                   irregularity: float = 0.6,
                   max_aspect: float = 1.8) -> Polygon:
    """Sample a simple polygon with unit circumradius centred on the origin.

    Vertices sit at sorted angular positions with radii jittered by
    ``irregularity``; angular jitter stays below half the vertex spacing so
    the ring is star-shaped and therefore simple. A log-uniform horizontal
    stretch up to ``max_aspect`` keeps sampled shapes mutually distinctive
    under translation-and-scale alignment.
    """
    lo, hi = int(vertex_count[0]), int(vertex_count[1])
    if lo < 3 or hi > 32 or lo > hi:
        raise ValidationError(f"vertex_count range {vertex_count} outside [3, 32]")
    if not 0.0 <= irregularity <= 1.0:
        raise ValidationError("irregularity must lie in [0, 1]")
    if max_aspect < 1.0:
        raise ValidationError("max_aspect must be >= 1")

    for _ in range(_SAMPLE_BUDGET):
        n = int(rng.integers(lo, hi + 1))
        base = rng.uniform(0.0, 2.0 * np.pi)
        spacing = 2.0 * np.pi / n
        angles = base + spacing * np.arange(n)
        angles = angles + rng.uniform(-0.45, 0.45, size=n) * spacing * irregularity
        radii = 1.0 - 0.9 * irregularity * rng.uniform(0.0, 1.0, size=n)
        stretch = np.exp(rng.uniform(-np.log(max_aspect), np.log(max_aspect)))
        poly = Polygon(np.column_stack([stretch * radii * np.cos(angles),
                                        radii * np.sin(angles)]))
        if polygon_is_simple(poly) and abs(poly.signed_area) > 1e-9:
            return poly
    raise GenerationError(
        f"no simple polygon after {_SAMPLE_BUDGET} tries (rng state {rng.bit_generator.state['state']})")


def fit_polygon_to_box(p: Polygon, size_px: float, position: tuple[float, float],
                       canvas: tuple[int, int] | None = None) -> Polygon:
    """Scale so the bounding box's longest side equals ``size_px`` and anchor
    its top-left corner at ``position``. No rotation: orientation is part of
    a shape's identity here.
    """
    if size_px <= 0:
        raise ValidationError("size_px must be positive")
    min_x, min_y, max_x, max_y = p.aabb()
    extent = max(max_x - min_x, max_y - min_y)
    if extent <= 0:
        raise ValidationError("degenerate polygon: zero extent")
    s = size_px / extent
    v = (p.vertices - np.array([min_x, min_y])) * s + np.asarray(position, dtype=np.float64)
    out = Polygon(v)
    if canvas is not None:
        w, h = canvas
        bx0, by0, bx1, by1 = out.aabb()
        if bx0 < 0 or by0 < 0 or bx1 > w or by1 > h:
            raise PlacementError(
                f"polygon box ({bx0:.1f},{by0:.1f})-({bx1:.1f},{by1:.1f}) outside canvas {w}x{h}")
    return out


def rasterize(p: Polygon, width: int, height: int) -> np.ndarray:
    """Even-odd fill evaluated at pixel centres (x+0.5, y+0.5).

    Boundary ties resolve by the strict crossing test below, so output is
    identical across platforms.
    """
    px = np.arange(width, dtype=np.float64) + 0.5
    py = np.arange(height, dtype=np.float64) + 0.5
    inside = np.zeros((height, width), dtype=bool)
    v = p.vertices
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if y1 == y2:
            continue
        straddle = (y1 > py) != (y2 > py)  # (height,)
        if not straddle.any():
            continue
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)  # (height,)
        inside ^= straddle[:, None] & (px[None, :] < xint[:, None])
    return inside


@dataclass(frozen=True)
class DisplacementField:
    """Smooth per-pixel offsets; ``amplitude`` is the peak offset in pixels."""

    dx: np.ndarray
    dy: np.ndarray
    sigma: float
    amplitude: float

    def __post_init__(self):
        if self.dx.shape != self.dy.shape:
            raise ValidationError("dx/dy shapes differ")
        if self.amplitude == 0 and (np.any(self.dx) or np.any(self.dy)):
            raise ValidationError("zero amplitude requires zero offsets")


def displacement_field(shape: tuple[int, int], amplitude: float,
                       rng: np.random.Generator, sigma: float = ELASTIC_SIGMA) -> DisplacementField:
    """Gaussian-smoothed random offsets, normalized so max |offset| == amplitude."""
    h, w = shape
    if amplitude == 0:
        z = np.zeros((h, w))
        return DisplacementField(z, z.copy(), sigma, 0.0)
    fields = []
    for _ in range(2):
        raw = rng.uniform(-1.0, 1.0, size=(h, w))
        smooth = ndimage.gaussian_filter(raw, sigma=sigma, mode="reflect")
        peak = np.abs(smooth).max()
        fields.append(smooth * (amplitude / peak) if peak > 0 else smooth)
    return DisplacementField(fields[0], fields[1], sigma, float(amplitude))


def warp_mask(mask: np.ndarray, field: DisplacementField) -> np.ndarray:
    """Inverse-map the mask through the field with nearest-neighbour sampling."""
    if mask.shape != field.dx.shape:
        raise ValidationError(f"mask shape {mask.shape} != field shape {field.dx.shape}")
    h, w = mask.shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    coords = np.stack([yy + field.dy, xx + field.dx])
    out = ndimage.map_coordinates(mask.astype(np.uint8), coords, order=0,
                                  mode="constant", cval=0)
    return out.astype(bool)


def elastic_unit(shape: tuple[int, int]) -> float:
    """Peak displacement contributed by one deformation degree."""
    return min(shape) * ELASTIC_UNIT_FRACTION


def elastic_deform(mask: np.ndarray, degree: int, rng: np.random.Generator) -> np.ndarray:
    """Warp a binary mask by a smooth random field scaled with ``degree``.

    Degree 0 returns the input bit-exactly.
    """
    if not 0 <= degree <= 10:
        raise ValidationError(f"degree {degree} outside [0, 10]")
    mask = np.asarray(mask, dtype=bool)
    if degree == 0:
        return mask.copy()
    field = displacement_field(mask.shape, degree * elastic_unit(mask.shape), rng)
    return warp_mask(mask, field)
