"""Gaussian voxel maps and point-to-voxel correspondence matching."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from rolo._validation import check_int, check_points, check_positive, check_vector3, thread_count
from rolo.exceptions import EmptyScan, OutOfBounds
from rolo.scan import DEFAULT_NOISE_SIGMA, Point, Scan

COVARIANCE_FLOOR = 1e-6


class GaussianVoxel(NamedTuple):
    count: int
    mean: np.ndarray
    cov: np.ndarray


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _grid_coords(points, ref_point, resolution):
    return round_half_away((points - ref_point) / resolution).astype(np.int64)


def _flatten(coords, dims):
    W, H = dims[0], dims[1]
    return coords[..., 0] + W * coords[..., 1] + W * H * coords[..., 2]


def _in_bounds(coords, dims):
    return np.all((coords >= 0) & (coords < np.asarray(dims)), axis=-1)


def voxel_index(p, ref_point, resolution, dims):
    """Scalar voxel index of one point; raises :class:`OutOfBounds`."""
    check_positive(resolution, "resolution")
    dims = tuple(int(d) for d in dims)
    if len(dims) == 2:
        dims = dims + (np.iinfo(np.int64).max,)
    if min(dims) <= 0:
        raise ValueError("dims must be positive")
    coords = _grid_coords(check_vector3(p, "p"), check_vector3(ref_point, "ref_point"), resolution)
    if not _in_bounds(coords, dims):
        raise OutOfBounds(f"grid coordinate {coords.tolist()} outside dims {dims}")
    return int(_flatten(coords, dims))


def voxel_indices(points, ref_point, resolution, dims):
    """Vectorized :func:`voxel_index`; out-of-bounds points get -1."""
    coords = _grid_coords(points, ref_point, resolution)
    keys = _flatten(coords, dims)
    return np.where(_in_bounds(coords, dims), keys, -1)


@dataclass(frozen=True, eq=False)
class VoxelMap:
    """Sparse voxel statistics stored as arrays sorted by voxel key."""

    resolution: float
    ref_point: np.ndarray
    dims: tuple
    keys: np.ndarray
    coords: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def index_set(self):
        return frozenset(self.keys.tolist())

    @property
    def voxels(self):
        return {int(k): self.voxel(i) for i, k in enumerate(self.keys)}

    def voxel(self, slot) -> GaussianVoxel:
        return GaussianVoxel(int(self.counts[slot]), self.means[slot], self.covs[slot])

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        i = np.searchsorted(self.keys, key)
        return bool(i < len(self.keys) and self.keys[i] == key)

    def __getitem__(self, key):
        i = np.searchsorted(self.keys, key)
        if i >= len(self.keys) or self.keys[i] != key:
            raise KeyError(key)
        return self.voxel(i)

    def lookup(self, points):
        """Slot of the voxel containing each point, or -1."""
        keys = voxel_indices(points, self.ref_point, self.resolution, self.dims)
        slot = np.searchsorted(self.keys, keys)
        slot = np.minimum(slot, len(self.keys) - 1)
        hit = (keys >= 0) & (len(self.keys) > 0)
        if len(self.keys):
            hit &= self.keys[slot] == keys
        return np.where(hit, slot, -1)


def _accumulate(points, covs, ref_point, resolution, dims):
    """Raw per-voxel sums (keys, coords, n, sum p, sum cov, sum p p^T)."""
    coords = _grid_coords(points, ref_point, resolution)
    ok = _in_bounds(coords, dims)
    coords, points, covs = coords[ok], points[ok], covs[ok]
    keys = _flatten(coords, dims)
    ukeys, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    m = len(ukeys)
    n = np.bincount(inv, minlength=m).astype(np.int64)
    sp = np.stack([np.bincount(inv, points[:, j], minlength=m) for j in range(3)], axis=1)
    flat_cov = covs.reshape(-1, 9)
    sc = np.stack([np.bincount(inv, flat_cov[:, j], minlength=m) for j in range(9)], axis=1)
    outer = (points[:, :, None] * points[:, None, :]).reshape(-1, 9)
    so = np.stack([np.bincount(inv, outer[:, j], minlength=m) for j in range(9)], axis=1)
    return ukeys, coords[first], n, sp, sc, so


def _merge(parts):
    keys = np.concatenate([p[0] for p in parts])
    ukeys, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    m = len(ukeys)
    coords = np.concatenate([p[1] for p in parts])[first]
    out = [ukeys, coords]
    for j, width in ((2, None), (3, 3), (4, 9), (5, 9)):
        vals = np.concatenate([p[j] for p in parts])
        if width is None:
            out.append(np.bincount(inv, vals, minlength=m).astype(np.int64))
        else:
            out.append(np.stack([np.bincount(inv, vals[:, c], minlength=m) for c in range(width)], axis=1))
    return tuple(out)


def worker_count(n_jobs=None):
    if n_jobs is not None and n_jobs > 0:
        return int(n_jobs)
    return thread_count()


def build_voxel_map(target, resolution=1.0, min_bounds=None, *, noise_cov=None,
                    covariance="noise", n_jobs=1) -> VoxelMap:
    """Voxelize ``target`` into per-cell Gaussian statistics.

    ``covariance="noise"`` stores the mean of the member points' noise
    covariances; ``"sample"`` stores the sample covariance of the member
    positions plus that mean. Partitioned builds (``n_jobs > 1``) merge raw
    sums and divide once, so the result matches the sequential build.
    """
    if isinstance(target, Scan):
        points, covs = target.points, target.noise_cov
    else:
        points = check_points(target)
        covs = noise_cov if noise_cov is not None else np.broadcast_to(
            DEFAULT_NOISE_SIGMA**2 * np.eye(3), (len(points), 3, 3))
    if len(points) == 0:
        raise EmptyScan("cannot voxelize an empty point set")
    check_positive(resolution, "resolution")
    if covariance not in ("noise", "sample"):
        raise ValueError("covariance must be 'noise' or 'sample'")
    ref = points.min(axis=0) if min_bounds is None else check_vector3(min_bounds, "min_bounds")
    top = round_half_away((points.max(axis=0) - ref) / resolution).astype(np.int64)
    dims = tuple(int(d) for d in np.maximum(top + 1, 1))

    jobs = min(worker_count(n_jobs), max(1, len(points) // 2048))
    if jobs <= 1:
        acc = _accumulate(points, covs, ref, resolution, dims)
    else:
        chunks = np.array_split(np.arange(len(points)), jobs)
        with ThreadPoolExecutor(jobs) as pool:
            parts = list(pool.map(lambda c: _accumulate(points[c], covs[c], ref, resolution, dims), chunks))
        acc = _merge(parts)
    keys, coords, n, sp, sc, so = acc
    nf = n[:, None].astype(float)
    means = sp / nf
    cov = (sc / nf).reshape(-1, 3, 3)
    if covariance == "sample":
        second = (so / nf).reshape(-1, 3, 3)
        cov = cov + second - means[:, :, None] * means[:, None, :]
    return VoxelMap(float(resolution), ref, dims, keys, coords, n, means, cov)


class Correspondence(NamedTuple):
    source_point: Point
    voxel: GaussianVoxel


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Column-wise correspondence list: source point ``i`` <-> voxel ``slot``."""

    source_index: np.ndarray
    slot: np.ndarray
    map: VoxelMap

    def __len__(self):
        return len(self.source_index)

    @property
    def means(self):
        return self.map.means[self.slot]

    @property
    def covs(self):
        return self.map.covs[self.slot]

    @property
    def counts(self):
        return self.map.counts[self.slot]

    @property
    def keys(self):
        return self.map.keys[self.slot]

    def pairs(self):
        """Set of ``(source_index, voxel_key)`` tuples."""
        return set(zip(self.source_index.tolist(), self.keys.tolist()))

    def as_list(self, source: Scan):
        return [Correspondence(source.point(i), self.map.voxel(s))
                for i, s in zip(self.source_index, self.slot)]

    def subset(self, mask):
        return Correspondences(self.source_index[mask], self.slot[mask], self.map)


def match(source, vmap: VoxelMap, n_min=5) -> Correspondences:
    """Pair each source point with the voxel it falls into (count >= n_min)."""
    check_int(n_min, "n_min", 1)
    points = source.points if isinstance(source, Scan) else check_points(source)
    if len(points) == 0 or len(vmap) == 0:
        return Correspondences(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), vmap)
    slot = vmap.lookup(points)
    ok = slot >= 0
    ok[ok] = vmap.counts[slot[ok]] >= n_min
    idx = np.flatnonzero(ok)
    return Correspondences(idx, slot[idx], vmap)
