"""3D visual-input geometry and projector token flows.

Covers ViT patch-token arithmetic, AnyResolution crop planning and forward
passes of three projector families (MLP, spatial pooling, TokenPacker-3D)
with seeded synthetic weights. Token lattices are stored row-major in
depth, height, width order.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt
from typing import NamedTuple

import numpy as np
from scipy.special import erf

from . import _kernels

AXES = ("depth", "height", "width")


class NonDivisible(ValueError):
    def __init__(self, axis: str, size: int, step: int):
        self.axis = axis
        self.size = size
        self.step = step
        self.nearest = nearest_valid(size, step)
        super().__init__(
            f"{axis} {size} is not divisible by {step}; nearest valid sizes: "
            + ", ".join(str(v) for v in self.nearest))


class DimMismatch(ValueError):
    pass


def nearest_valid(size: int, step: int) -> tuple[int, ...]:
    lower = (size // step) * step
    upper = lower + step
    return tuple(v for v in (lower, upper) if v > 0)


class Dims3(NamedTuple):
    depth: int
    height: int
    width: int

    @classmethod
    def of(cls, value) -> "Dims3":
        dims = cls(*(int(v) for v in value))
        if any(v <= 0 for v in dims):
            raise ValueError(f"dimensions must be positive, got {tuple(dims)}")
        return dims

    def volume(self) -> int:
        return self.depth * self.height * self.width

    def __str__(self) -> str:
        return "x".join(str(v) for v in self)


VolumeDims = Dims3
PatchDims = Dims3


def _divide(outer, inner) -> Dims3:
    for axis, n, k in zip(AXES, outer, inner):
        if n % k:
            raise NonDivisible(axis, n, k)
    return Dims3(*(n // k for n, k in zip(outer, inner)))


def token_count(vol, patch) -> int:
    """Number of ViT patch tokens for a volume."""
    return _divide(Dims3.of(vol), Dims3.of(patch)).volume()


@dataclass(frozen=True)
class Box:
    offset: Dims3
    extent: Dims3

    def contains(self, z: int, y: int, x: int) -> bool:
        return all(o <= c < o + e for o, e, c in zip(self.offset, self.extent, (z, y, x)))


@dataclass(frozen=True)
class CropPlan:
    volume: Dims3
    crops: tuple[Box, ...]
    global_view: Dims3

    def __post_init__(self):
        if not self.crops:
            raise ValueError("a crop plan needs at least one crop")
        extent = self.crops[0].extent
        if any(c.extent != extent for c in self.crops):
            raise ValueError("crop extents differ")
        if extent.volume() * len(self.crops) != self.volume.volume():
            raise ValueError("crops do not cover the volume")
        for c in self.crops:
            if any(o < 0 or o + e > v for o, e, v in zip(c.offset, c.extent, self.volume)):
                raise ValueError(f"crop {c} lies outside the volume")
        # equal-extent boxes with total volume equal to the whole are a
        # partition iff they are pairwise disjoint
        for i, a in enumerate(self.crops):
            for b in self.crops[i + 1:]:
                if all(ao < bo + be and bo < ao + ae
                       for ao, ae, bo, be in zip(a.offset, a.extent, b.offset, b.extent)):
                    raise ValueError(f"crops {a} and {b} overlap")

    def to_dict(self) -> dict:
        return {
            "volume": list(self.volume),
            "crops": [{"offset": list(c.offset), "extent": list(c.extent)} for c in self.crops],
            "global_view": list(self.global_view),
        }


def anyres_plan(vol, crop, global_view) -> CropPlan:
    """Tile ``vol`` into a regular grid of ``crop``-sized boxes plus a global view."""
    vol, crop, global_view = Dims3.of(vol), Dims3.of(crop), Dims3.of(global_view)
    grid = _divide(vol, crop)
    boxes = tuple(
        Box(Dims3(i * crop.depth, j * crop.height, k * crop.width), crop)
        for i in range(grid.depth) for j in range(grid.height) for k in range(grid.width)
    )
    return CropPlan(vol, boxes, global_view)


def anyres_token_budget(plan: CropPlan, patch, per_view_tokens_after_projector: int) -> int:
    """Sequence length handed to the language model: every crop plus the global view."""
    patch = Dims3.of(patch)
    _divide(plan.crops[0].extent, patch)
    _divide(plan.global_view, patch)
    return (len(plan.crops) + 1) * int(per_view_tokens_after_projector)


@dataclass(frozen=True)
class TokenGrid:
    grid: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        grid = tuple(int(g) for g in self.grid)
        if data.ndim != 2:
            raise ValueError("token data must be a 2D (tokens, dim) array")
        if not grid or any(g <= 0 for g in grid) or int(np.prod(grid)) != data.shape[0]:
            raise ValueError(f"grid {grid} does not match {data.shape[0]} tokens")
        if not np.all(np.isfinite(data)):
            raise ValueError("token data contains non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "data", data)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def lattice(self) -> np.ndarray:
        if len(self.grid) != 3:
            raise ValueError("token grid is not a 3D lattice")
        return self.data.reshape(*self.grid, self.dim)

    @classmethod
    def from_lattice(cls, arr: np.ndarray) -> "TokenGrid":
        d, h, w, c = arr.shape
        return cls((d, h, w), arr.reshape(d * h * w, c))


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / sqrt(2.0)))


@dataclass(frozen=True)
class MLPWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def seeded(cls, in_dim: int, out_dim: int, seed: int) -> "MLPWeights":
        rng = np.random.default_rng(seed)
        a1, a2 = 1.0 / sqrt(in_dim), 1.0 / sqrt(out_dim)
        return cls(
            w1=rng.uniform(-a1, a1, (in_dim, out_dim)),
            b1=rng.uniform(-a1, a1, out_dim),
            w2=rng.uniform(-a2, a2, (out_dim, out_dim)),
            b2=rng.uniform(-a2, a2, out_dim),
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2


def mlp_project(tokens: TokenGrid, out_dim: int, seed: int, weights: MLPWeights | None = None) -> TokenGrid:
    """Two affine layers with GELU between; grid and token count unchanged."""
    weights = weights or MLPWeights.seeded(tokens.dim, out_dim, seed)
    return TokenGrid(tokens.grid, weights(tokens.data))


def spatial_pool(tokens: TokenGrid, pool) -> TokenGrid:
    pool = Dims3.of(pool)
    lattice = tokens.lattice()
    _divide(lattice.shape[:3], pool)
    return TokenGrid.from_lattice(_kernels.mean_pool3d(lattice, tuple(pool)))


def spp_project(tokens: TokenGrid, pool=(2, 2, 2), out_dim: int = 0, seed: int = 0,
                weights: MLPWeights | None = None) -> TokenGrid:
    """Mean-pool non-overlapping 3D blocks of the lattice, then an MLP."""
    pooled = spatial_pool(tokens, pool)
    return mlp_project(pooled, out_dim or tokens.dim, seed, weights)


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centres, edge-clamped linear weights
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        m[i, lo] += 1.0 - t
        m[i, hi] += t
    return m


def trilinear_resize(lattice: np.ndarray, out_grid) -> np.ndarray:
    d, h, w, _ = lattice.shape
    od, oh, ow = out_grid
    return np.einsum("ad,bh,cw,dhwe->abce", _interp_matrix(d, od), _interp_matrix(h, oh),
                     _interp_matrix(w, ow), lattice)


def _blocks(lattice: np.ndarray, down: Dims3) -> np.ndarray:
    d, h, w, c = lattice.shape
    kd, kh, kw = down
    b = lattice.reshape(d // kd, kd, h // kh, kh, w // kw, kw, c)
    b = b.transpose(0, 2, 4, 1, 3, 5, 6)
    return b.reshape(-1, kd * kh * kw, c)


@dataclass(frozen=True)
class TokenPackerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    mlp: MLPWeights

    @classmethod
    def seeded(cls, dim: int, out_dim: int, seed: int) -> "TokenPackerWeights":
        rng = np.random.default_rng(seed)
        a = 1.0 / sqrt(dim)
        wq, wk, wv = (rng.uniform(-a, a, (dim, dim)) for _ in range(3))
        mlp_seed = int(rng.integers(0, 2**63 - 1))
        return cls(wq, wk, wv, MLPWeights.seeded(dim, out_dim, mlp_seed))

    @classmethod
    def identity(cls, dim: int, out_dim: int, seed: int) -> "TokenPackerWeights":
        eye = np.eye(dim)
        return cls(eye, eye, eye, MLPWeights.seeded(dim, out_dim, seed))


@dataclass(frozen=True)
class PackerTrace:
    queries: np.ndarray
    attention: np.ndarray
    attended: np.ndarray


def tokenpacker3d_project(tokens: TokenGrid, down=(2, 2, 2), out_dim: int = 0, seed: int = 0,
                          weights: TokenPackerWeights | None = None, return_trace: bool = False):
    """Interpolated low-resolution queries attending over their local block.

    Each query is formed by trilinear resizing of the lattice; it attends
    (single head, scaled dot product) over the original tokens of the block
    it summarizes. The query plus its attended value goes through an MLP.
    """
    down = Dims3.of(down)
    lattice = tokens.lattice()
    out_grid = _divide(lattice.shape[:3], down)
    weights = weights or TokenPackerWeights.seeded(tokens.dim, out_dim or tokens.dim, seed)

    queries = trilinear_resize(lattice, out_grid).reshape(-1, tokens.dim)
    keys = _blocks(lattice, down)
    attended, attn = _kernels.local_attention(queries @ weights.wq, keys @ weights.wk, keys @ weights.wv)
    out = TokenGrid(tuple(out_grid), weights.mlp(queries + attended))
    if return_trace:
        return out, PackerTrace(queries, attn, attended)
    return out


def concat_streams(a: TokenGrid, b: TokenGrid) -> TokenGrid:
    """Stack two token streams (e.g. image then mask) as one sequence."""
    if a.dim != b.dim:
        raise DimMismatch(f"stream widths differ: {a.dim} vs {b.dim}")
    return TokenGrid((a.count + b.count,), np.concatenate([a.data, b.data], axis=0))


PROJECTORS = ("mlp", "spp", "tokenpacker")


def geometry_report(vol, patch, projector: str = "mlp", crop=None, global_view=None,
                    pool=(2, 2, 2), down=(2, 2, 2), with_mask: bool = False) -> dict:
    """Token counts at every stage for one configuration."""
    if projector not in PROJECTORS:
        raise ValueError(f"unknown projector {projector!r}")
    vol, patch = Dims3.of(vol), Dims3.of(patch)
    view = Dims3.of(crop) if crop is not None else vol
    vit_grid = _divide(view, patch)
    report: dict = {
        "volume": list(vol),
        "patch": list(patch),
        "projector": projector,
        "vit_tokens_full_volume": token_count(vol, patch),
        "vit_grid_per_view": list(vit_grid),
        "vit_tokens_per_view": vit_grid.volume(),
    }
    if projector == "spp":
        pool = Dims3.of(pool)
        per_view = _divide(vit_grid, pool).volume()
        report["pool"] = list(pool)
    elif projector == "tokenpacker":
        down = Dims3.of(down)
        per_view = _divide(vit_grid, down).volume()
        report["down"] = list(down)
    else:
        per_view = vit_grid.volume()
    report["projector_tokens_per_view"] = per_view

    if crop is not None:
        plan = anyres_plan(vol, view, global_view if global_view is not None else view)
        report["anyres"] = {**plan.to_dict(), "n_crops": len(plan.crops), "n_views": len(plan.crops) + 1}
        seq = anyres_token_budget(plan, patch, per_view)
    else:
        seq = per_view
    streams = 2 if with_mask else 1
    report["streams"] = streams
    report["sequence_length"] = seq * streams
    return report
