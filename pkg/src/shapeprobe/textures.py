"""Texture pools: atlas loading, hermetic procedural synthesis, partitioning
and region fills.

Procedural swatches are strictly tileable (integer cycle counts, periods
dividing the swatch side, wrap-mode smoothing), so tiling from any phase
preserves their statistics.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import PartitionError, StorageError, ValidationError
from .rng import DOMAIN_TEXTURE, child_rng

SWATCH_SIDE = 64
MIN_SWATCH_SIDE = 32


@dataclass(frozen=True)
class Texture:
    id: str
    swatch: np.ndarray  # uint8 (h, w, 3)
    source_pool: str

    def __post_init__(self):
        s = self.swatch
        if s.ndim != 3 or s.shape[2] != 3 or s.dtype != np.uint8:
            raise ValidationError(f"swatch must be uint8 HxWx3, got {s.dtype} {s.shape}")
        if s.shape[0] < MIN_SWATCH_SIDE or s.shape[1] < MIN_SWATCH_SIDE:
            raise ValidationError(
                f"swatch {s.shape[0]}x{s.shape[1]} below minimum {MIN_SWATCH_SIDE}")


@dataclass(frozen=True)
class TexturePool:
    name: str
    textures: tuple[Texture, ...]
    origin: str

    def __post_init__(self):
        ids = [t.id for t in self.textures]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate texture ids in pool {self.name}")

    def __len__(self) -> int:
        return len(self.textures)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.textures]

    def get(self, texture_id: str) -> Texture:
        for t in self.textures:
            if t.id == texture_id:
                return t
        raise ValidationError(f"texture id {texture_id!r} not in pool {self.name}")


@dataclass(frozen=True)
class PoolPartition:
    target: tuple[str, ...]
    non_target: tuple[str, ...]
    background: tuple[str, ...]

    def __post_init__(self):
        a, b, c = set(self.target), set(self.non_target), set(self.background)
        if a & b or a & c or b & c:
            raise PartitionError("partition sets are not pairwise disjoint")

    def to_json(self) -> dict:
        return {"target": list(self.target), "non_target": list(self.non_target),
                "background": list(self.background)}

    @classmethod
    def from_json(cls, obj: dict) -> "PoolPartition":
        return cls(tuple(obj["target"]), tuple(obj["non_target"]),
                   tuple(obj["background"]))


def load_pool(directory: str | Path, name: str | None = None) -> TexturePool:
    """One texture per image file, filename-sorted for reproducible ids."""
    directory = Path(directory)
    if not directory.is_dir():
        raise StorageError(f"texture atlas directory {directory} does not exist")
    name = name if name is not None else directory.name
    files = sorted(p for p in directory.iterdir() if p.is_file())
    textures = []
    for path in files:
        try:
            with Image.open(path) as im:
                swatch = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except OSError as e:
            raise StorageError(f"unreadable texture file {path}: {e}") from e
        textures.append(Texture(id=f"{name}#{path.stem}", swatch=swatch, source_pool=name))
    if not textures:
        raise ValidationError(f"texture atlas directory {directory} contains no textures")
    return TexturePool(name=name, textures=tuple(textures), origin=str(directory))


# --------------------------------------------------------------------------
# procedural families

def _pick_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    while True:
        a = rng.integers(0, 256, size=3)
        b = rng.integers(0, 256, size=3)
        if np.abs(a - b).sum() >= 120:  # keep the pattern visible
            return a.astype(np.float64), b.astype(np.float64)


def _blend(weight: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w = weight[..., None]
    return np.clip(a * (1.0 - w) + b * w, 0, 255).astype(np.uint8)


def _grating(rng: np.random.Generator, side: int) -> np.ndarray:
    while True:
        kx, ky = int(rng.integers(-4, 5)), int(rng.integers(-4, 5))
        if kx or ky:
            break
    phase = rng.uniform(0.0, 2.0 * np.pi)
    y, x = np.mgrid[0:side, 0:side]
    w = 0.5 * (1.0 + np.sin(2.0 * np.pi * (kx * x + ky * y) / side + phase))
    return _blend(w, *_pick_colors(rng))


def _checker(rng: np.random.Generator, side: int) -> np.ndarray:
    cells = int(rng.choice([2, 4, 8, 16]))
    cell = side // cells
    y, x = np.mgrid[0:side, 0:side]
    w = (((x // cell) + (y // cell)) % 2).astype(np.float64)
    return _blend(w, *_pick_colors(rng))


def _value_noise(rng: np.random.Generator, side: int) -> np.ndarray:
    w = np.zeros((side, side))
    for level, weight in ((4, 1.0), (8, 0.5), (16, 0.25)):
        grid = rng.uniform(0.0, 1.0, size=(level, level))
        up = np.kron(grid, np.ones((side // level, side // level)))
        w += weight * ndimage.gaussian_filter(up, sigma=side / (2 * level), mode="wrap")
    w -= w.min()
    peak = w.max()
    if peak > 0:
        w /= peak
    return _blend(w, *_pick_colors(rng))


def _stripes(rng: np.random.Generator, side: int) -> np.ndarray:
    period = int(rng.choice([4, 8, 16, 32]))
    duty = rng.uniform(0.25, 0.75)
    horizontal = bool(rng.integers(0, 2))
    y, x = np.mgrid[0:side, 0:side]
    coord = y if horizontal else x
    w = ((coord % period) < duty * period).astype(np.float64)
    return _blend(w, *_pick_colors(rng))


_FAMILIES = (_grating, _checker, _value_noise, _stripes)


def procedural_origin(seed: int, count: int) -> str:
    return f"procedural:{int(seed)}:{int(count)}"


def procedural_pool(seed: int, count: int, side: int = SWATCH_SIDE) -> TexturePool:
    """Deterministic pool of ``count`` swatches cycling through the four
    pattern families; parameters derive from (seed, index) only.
    """
    if count < 1:
        raise ValidationError("procedural pool count must be >= 1")
    if side < MIN_SWATCH_SIDE or side % 16:
        raise ValidationError(f"swatch side must be a multiple of 16 and >= {MIN_SWATCH_SIDE}")
    name = procedural_origin(seed, count)
    textures = []
    for index in range(count):
        rng = child_rng(seed, DOMAIN_TEXTURE, index)
        family = _FAMILIES[index % len(_FAMILIES)]
        textures.append(Texture(id=f"{name}#{index:03d}", swatch=family(rng, side),
                                source_pool=name))
    return TexturePool(name=name, textures=tuple(textures), origin=name)


def pool_from_origin(origin: str, atlas_root: str | Path | None = None) -> TexturePool:
    """Rebuild a pool from its manifest identifier."""
    if origin.startswith("procedural:"):
        parts = origin.split(":")
        if len(parts) != 3:
            raise ValidationError(f"malformed procedural pool id {origin!r}")
        try:
            return procedural_pool(int(parts[1]), int(parts[2]))
        except ValueError as e:
            raise ValidationError(f"malformed procedural pool id {origin!r}") from e
    base = Path(atlas_root) if atlas_root is not None else Path(".")
    return load_pool(base / origin if not Path(origin).is_absolute() else origin)


def partition_pool(pool: TexturePool, rng: np.random.Generator,
                   target_count: int = 5) -> PoolPartition:
    """Disjoint target/non-target/background id sets; the two remainder sets
    each keep at least one texture.
    """
    n = len(pool)
    if target_count < 1:
        raise PartitionError("target_count must be >= 1")
    if n < target_count + 2:
        raise PartitionError(
            f"pool {pool.name} has {n} textures; need >= {target_count + 2}")
    order = rng.permutation(n)
    ids = [pool.textures[i].id for i in order]
    rest = n - target_count
    non_target_n = max(1, rest // 2)
    return PoolPartition(
        target=tuple(ids[:target_count]),
        non_target=tuple(ids[target_count:target_count + non_target_n]),
        background=tuple(ids[target_count + non_target_n:]),
    )


# --------------------------------------------------------------------------
# region fills

def apply_texture(img: np.ndarray, mask: np.ndarray, texture: Texture,
                  phase: tuple[int, int]) -> np.ndarray:
    """Overwrite masked pixels with the swatch tiled from ``phase`` (row, col).

    Pixels outside the mask are untouched; the fill depends only on absolute
    pixel coordinates, so disjoint masks can be filled in any order.
    """
    img = np.asarray(img)
    mask = np.asarray(mask, dtype=bool)
    if img.shape[:2] != mask.shape:
        raise ValidationError(f"image {img.shape[:2]} vs mask {mask.shape} size mismatch")
    th, tw = texture.swatch.shape[:2]
    py, px = int(phase[0]) % th, int(phase[1]) % tw
    rows = (np.arange(img.shape[0]) + py) % th
    cols = (np.arange(img.shape[1]) + px) % tw
    tiled = texture.swatch[rows[:, None], cols[None, :]]
    img[mask] = tiled[mask]
    return img


def sample_phase(texture: Texture, rng: np.random.Generator) -> tuple[int, int]:
    th, tw = texture.swatch.shape[:2]
    return int(rng.integers(0, th)), int(rng.integers(0, tw))


def fill_region(img: np.ndarray, mask: np.ndarray, texture: Texture,
                rng: np.random.Generator) -> np.ndarray:
    return apply_texture(img, mask, texture, sample_phase(texture, rng))
