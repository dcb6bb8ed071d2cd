"""Synthetic planar worlds, trajectories, ray-cast scans and brute-force oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from rolo.geometry import RigidTransform, from_euler, interpolate, so3_exp
from rolo.scan import DEFAULT_NOISE_SIGMA, Scan, empty_scan
from rolo.voxel_grid import Correspondences, VoxelMap


@dataclass(frozen=True, eq=False)
class Plane:
    """Rectangle centered at ``point``; ``extent`` holds half-lengths along
    ``axis`` and ``normal x axis`` (``inf`` for an unbounded plane)."""

    point: np.ndarray
    normal: np.ndarray
    axis: np.ndarray
    extent: tuple = (np.inf, np.inf)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        u = np.asarray(self.axis, dtype=float)
        n = n / np.linalg.norm(n)
        u = u - (u @ n) * n
        u = u / np.linalg.norm(u)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "axis", u)
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))

    @property
    def axis2(self):
        return np.cross(self.normal, self.axis)

    def transformed(self, T: RigidTransform):
        R = T.rotation
        return Plane(T.apply(self.point), R @ self.normal, R @ self.axis, self.extent)


@dataclass(frozen=True, eq=False)
class Edge:
    point: np.ndarray
    direction: np.ndarray
    length: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction", d / np.linalg.norm(d))

    def distance(self, points):
        """Distance from points to the finite segment starting at ``point``."""
        rel = np.atleast_2d(points) - self.point
        s = np.clip(rel @ self.direction, 0.0, self.length)
        return np.linalg.norm(rel - s[:, None] * self.direction, axis=1)

    def transformed(self, T: RigidTransform):
        return Edge(T.apply(self.point), T.rotation @ self.direction, self.length)


@dataclass(frozen=True, eq=False)
class World:
    planes: tuple
    edges: tuple = ()
    seed: int = 0
    name: str = "custom"

    def transformed(self, T: RigidTransform):
        return World(tuple(p.transformed(T) for p in self.planes),
                     tuple(e.transformed(T) for e in self.edges), self.seed, self.name)

    def edge_distance(self, points):
        if not self.edges:
            return np.full(len(np.atleast_2d(points)), np.inf)
        return np.min([e.distance(points) for e in self.edges], axis=0)


@dataclass(frozen=True)
class LidarModel:
    rings: int = 32
    vertical_fov: tuple = (-25.0, 15.0)
    azimuth_step: float = 0.4
    max_range: float = 100.0
    range_noise_sigma: float = 0.02
    sweep_duration: float = 0.1
    min_range: float = 0.5

    def __post_init__(self):
        if self.rings < 1:
            raise ValueError("rings must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")

    @property
    def elevations(self):
        lo, hi = np.radians(self.vertical_fov)
        if self.rings == 1:
            return np.array([0.5 * (lo + hi)])
        return np.linspace(lo, hi, self.rings)

    @property
    def azimuths(self):
        n = int(round(360.0 / self.azimuth_step))
        return np.arange(n) * (2 * np.pi / n)

    def directions(self):
        """(rings, n_az, 3) unit rays in the sensor frame."""
        el = self.elevations[:, None]
        az = self.azimuths[None, :]
        return np.stack(np.broadcast_arrays(np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)), axis=-1)


# -- worlds ----------------------------------------------------------------------

def box_primitives(center, half, yaw=0.0):
    """Six inward/outward-agnostic faces and twelve edges of an oriented box."""
    center = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    R = from_euler(0.0, 0.0, yaw)
    ax = [R[:, 0], R[:, 1], R[:, 2]]
    planes = []
    for k in range(3):
        i, j = [a for a in range(3) if a != k]
        for sgn in (-1.0, 1.0):
            planes.append(Plane(center + sgn * half[k] * ax[k], ax[k], ax[i], (half[i], half[j])))
    edges = []
    for k in range(3):
        i, j = [a for a in range(3) if a != k]
        for si, sj in itertools.product((-1.0, 1.0), repeat=2):
            start = center + si * half[i] * ax[i] + sj * half[j] * ax[j] - half[k] * ax[k]
            edges.append(Edge(start, ax[k], 2 * half[k]))
    return planes, edges


def ground_profile(x, amplitude, wavelength):
    return amplitude * np.sin(2 * np.pi * np.asarray(x) / wavelength)


def _ground_tiles(x0, x1, amplitude, wavelength, half_width, tile=1.0):
    if amplitude == 0:
        return [Plane(((x0 + x1) / 2, 0.0, 0.0), (0, 0, 1), (1, 0, 0), ((x1 - x0) / 2, half_width))]
    xs = np.arange(x0, x1 + tile / 2, tile)
    zs = ground_profile(xs, amplitude, wavelength)
    tiles = []
    for xa, xb, za, zb in zip(xs[:-1], xs[1:], zs[:-1], zs[1:]):
        u = np.array([xb - xa, 0.0, zb - za])
        length = np.linalg.norm(u)
        n = np.array([-(zb - za), 0.0, xb - xa])
        # tiny overlap so shared tile borders never leak rays
        tiles.append(Plane(((xa + xb) / 2, 0.0, (za + zb) / 2), n, u, (length / 2 + 1e-6, half_width)))
    return tiles


@dataclass
class WorldParams:
    preset: str = "box"
    room_half: tuple = (10.0, 7.0, 2.5)
    length: float = 100.0
    undulation_amplitude: float = 2.0
    wavelength: float = 30.0
    corridor_half_width: float = 12.0
    side: float = 30.0
    n_random: int = 6


def generate_world(seed=0, params: WorldParams | None = None, **overrides) -> World:
    """Deterministic planar scene.

    Presets: ``box`` (one room, 6 planes / 12 edges), ``ground`` (one
    infinite plane), ``course`` (undulating ground strip lined with
    buildings and randomly oriented walls) and ``square-loop`` (flat ground,
    buildings inside and around a square path).
    """
    params = replace(params or WorldParams(), **overrides)
    rng = np.random.default_rng(seed)
    planes, edges = [], []
    if params.preset == "box":
        p, e = box_primitives((0.0, 0.0, params.room_half[2] - 1.5), params.room_half)
        planes += p
        edges += e
    elif params.preset == "ground":
        planes.append(Plane((0, 0, 0), (0, 0, 1), (1, 0, 0)))
    elif params.preset == "course":
        L, A, W = params.length, params.undulation_amplitude, params.corridor_half_width
        planes += _ground_tiles(-30.0, L + 30.0, A, params.wavelength, W + 15.0)
        x = -25.0
        while x < L + 25.0:
            for side in (-1.0, 1.0):
                depth = rng.uniform(2.0, 4.0)
                width = rng.uniform(3.0, 7.0)
                yc = side * (W - rng.uniform(0.0, 3.0) + depth)
                p, e = box_primitives((x + width, yc, 0.0), (width, depth, A + 8.0), rng.uniform(-0.3, 0.3))
                planes += p
                edges += e
            x += 2 * width + rng.uniform(3.0, 8.0)
        for _ in range(params.n_random):
            xc = rng.uniform(0.0, L)
            yc = rng.choice([-1.0, 1.0]) * rng.uniform(4.0, W - 3.0)
            p, e = box_primitives((xc, yc, 0.0), (rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0), A + 6.0),
                                  rng.uniform(0, np.pi))
            planes += p
            edges += e
    elif params.preset == "square-loop":
        S = params.side
        planes.append(Plane((S / 2, S / 2, 0.0), (0, 0, 1), (1, 0, 0), (S + 40.0, S + 40.0)))
        # inner block and outer ring of buildings
        p, e = box_primitives((S / 2, S / 2, 0.0), (S / 2 - 7.0, S / 2 - 7.0, 6.0), rng.uniform(-0.05, 0.05))
        planes += p
        edges += e
        for k in range(12):
            ang = 2 * np.pi * k / 12 + rng.uniform(-0.1, 0.1)
            r = S / np.sqrt(2) + rng.uniform(13.0, 18.0)
            c = (S / 2 + r * np.cos(ang), S / 2 + r * np.sin(ang), 0.0)
            p, e = box_primitives(c, (rng.uniform(2.0, 5.0), rng.uniform(2.0, 5.0), 8.0), rng.uniform(0, np.pi))
            planes += p
            edges += e
        for _ in range(params.n_random):
            leg = rng.integers(4)
            s = rng.uniform(0.2, 0.8) * S
            off = rng.choice([-1.0, 1.0]) * rng.uniform(3.5, 5.0)
            base = [(s, off), (S + off, s), (s, S + off), (off, s)][leg]
            p, e = box_primitives((base[0], base[1], 0.0), (0.3, 0.3, 4.0), rng.uniform(0, np.pi))
            planes += p
            edges += e
    else:
        raise ValueError(f"unknown world preset {params.preset!r}")
    return World(tuple(planes), tuple(edges), int(seed), params.preset)


# -- trajectories ----------------------------------------------------------------------

@dataclass
class TrajectoryParams:
    kind: str = "undulating"
    n_scans: int = 200
    rate: float = 10.0
    speed: float = 2.0
    height: float = 1.8
    amplitude: float = 2.0
    wavelength: float = 30.0
    roll_amplitude: float = 0.0
    yaw_amplitude: float = 0.0
    lateral_amplitude: float = 0.0
    side: float = 30.0
    corner_radius: float = 4.0
    start: tuple = (0.0, 0.0, 0.0)
    start_time: float = 0.0


def _square_point(s, side, radius):
    """Position and heading at arc length ``s`` on a rounded square."""
    straight = side - 2 * radius
    arc = 0.5 * np.pi * radius
    leg = straight + arc
    perim = 4 * leg
    s = np.mod(s, perim)
    k = int(min(s // leg, 3))
    r = s - k * leg
    heading = k * np.pi / 2
    # leg k starts at the end of the previous corner
    starts = [(radius, 0.0), (side, radius), (side - radius, side), (0.0, side - radius)]
    x0, y0 = starts[k]
    c, sn = np.cos(heading), np.sin(heading)
    if r <= straight:
        return np.array([x0 + r * c, y0 + r * sn]), heading
    a = (r - straight) / radius
    cx, cy = x0 + straight * c - radius * sn, y0 + straight * sn + radius * c
    ang = heading - np.pi / 2 + a
    return np.array([cx + radius * np.cos(ang), cy + radius * np.sin(ang)]), heading + a


def trajectory_pose(params: TrajectoryParams, time) -> RigidTransform:
    """Continuous pose of the parametric trajectory at ``time``."""
    tau = time - params.start_time
    start = np.asarray(params.start, dtype=float)
    if params.kind == "straight":
        return RigidTransform(np.eye(3), start + np.array([params.speed * tau, 0.0, 0.0]))
    if params.kind == "undulating":
        x = params.speed * tau
        k = 2 * np.pi / params.wavelength
        z = params.amplitude * np.sin(k * x) + params.height
        dz = params.amplitude * k * np.cos(k * x)
        y = params.lateral_amplitude * np.sin(0.5 * k * x)
        dy = params.lateral_amplitude * 0.5 * k * np.cos(0.5 * k * x)
        yaw = np.arctan2(dy, 1.0) + params.yaw_amplitude * np.sin(0.7 * k * x)
        pitch = -np.arctan(dz / np.hypot(1.0, dy))
        roll = params.roll_amplitude * np.sin(1.3 * k * x)
        return RigidTransform(from_euler(roll, pitch, yaw), start + np.array([x, y, z]))
    if params.kind == "square":
        straight = params.side - 2 * params.corner_radius
        perim = 4 * (straight + 0.5 * np.pi * params.corner_radius)
        duration = (params.n_scans - 1) / params.rate
        s = perim * tau / duration
        xy, heading = _square_point(s, params.side, params.corner_radius)
        return RigidTransform(from_euler(0.0, 0.0, heading), start + np.array([xy[0], xy[1], params.height]))
    raise ValueError(f"unknown trajectory kind {params.kind!r}")


def generate_trajectory(params: TrajectoryParams | None = None, **overrides):
    """``[(stamp, pose), ...]`` sampled at ``params.rate``.

    For ``square`` the speed is implied: the loop is closed exactly at the
    last sample.
    """
    params = replace(params or TrajectoryParams(), **overrides)
    stamps = params.start_time + np.arange(params.n_scans) / params.rate
    out = [(float(t), trajectory_pose(params, t)) for t in stamps]
    if params.kind == "square" and params.n_scans > 1:
        out[-1] = (out[-1][0], out[0][1])
    return out


# -- ray casting -------------------------------------------------------------------------

def cast_rays(world: World, origins, directions, max_range, min_range=0.0):
    """Nearest hit distance per ray (``inf`` for a miss)."""
    best = np.full(len(directions), np.inf)
    for pl in world.planes:
        denom = directions @ pl.normal
        num = (pl.point - origins) @ pl.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        ok = (np.abs(denom) > 1e-12) & (t > min_range) & (t < np.minimum(best, max_range))
        if not np.any(ok):
            continue
        hit = origins[ok] + t[ok, None] * directions[ok] - pl.point
        a, b = pl.extent
        inside = (np.abs(hit @ pl.axis) <= a) & (np.abs(hit @ pl.axis2) <= b)
        idx = np.flatnonzero(ok)[inside]
        best[idx] = t[idx]
    return best


def simulate_scan(world: World, pose: RigidTransform, model: LidarModel | None = None, seed=0,
                  motion: RigidTransform | None = None, stamp=0.0) -> Scan:
    """Ray-cast one sweep from ``pose``.

    Without ``motion`` all rays leave from ``pose``. With ``motion`` (the
    sweep-end pose in the sweep-start frame) ``pose`` is the sweep-end pose
    and each azimuth column is cast from the pose interpolated at its time,
    producing the distortion that :func:`rolo.scan.deskew` removes.
    Points are returned in the sensor frame at their capture time.
    """
    model = model or LidarModel()
    dirs = model.directions()
    n_r, n_a = dirs.shape[:2]
    frac = np.arange(n_a) / n_a
    if motion is None:
        R_col = np.broadcast_to(pose.rotation, (n_a, 3, 3))
        t_col = np.broadcast_to(pose.translation, (n_a, 3))
    else:
        start = pose @ motion.inverse()
        parts = [start @ interpolate(motion, s) for s in frac]
        R_col = np.stack([p.rotation for p in parts])
        t_col = np.stack([p.translation for p in parts])
    world_dirs = np.einsum("aij,raj->rai", R_col, dirs).reshape(-1, 3)
    origins = np.broadcast_to(t_col, (n_r, n_a, 3)).reshape(-1, 3)
    rng_dist = cast_rays(world, origins, world_dirs, model.max_range, model.min_range)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n_r * n_a) * model.range_noise_sigma
    hit = np.isfinite(rng_dist)
    if not np.any(hit):
        return empty_scan(model.rings, stamp, model.sweep_duration)
    r = (rng_dist + noise)[hit]
    local = dirs.reshape(-1, 3)[hit] * r[:, None]
    ring = np.repeat(np.arange(n_r), n_a)[hit]
    t_off = np.tile(frac * model.sweep_duration, n_r)[hit]
    sigma = model.range_noise_sigma if model.range_noise_sigma > 0 else DEFAULT_NOISE_SIGMA
    cov = np.broadcast_to(sigma**2 * np.eye(3), (len(r), 3, 3)).copy()
    return Scan(local, t_off, ring, cov, stamp, model.sweep_duration, model.rings)


@dataclass
class SyntheticSequence:
    world: World
    model: LidarModel
    scans: list
    poses: list
    stamps: list = field(default_factory=list)


def simulate_sequence(world: World, trajectory: TrajectoryParams, model: LidarModel | None = None,
                      seed=0, distortion=True) -> SyntheticSequence:
    """Scans along a trajectory; ``poses[k]`` is the sweep-end pose of scan ``k``.

    ``scans[k].stamp`` is the sweep start, so the sweep-end time is
    ``stamp + sweep_duration`` (the trajectory sample time).
    """
    model = model or LidarModel(sweep_duration=1.0 / trajectory.rate)
    samples = generate_trajectory(trajectory)
    scans, poses, stamps = [], [], []
    for k, (t, pose) in enumerate(samples):
        motion = None
        if distortion:
            start = trajectory_pose(trajectory, t - model.sweep_duration)
            motion = start.inverse() @ pose
        scan = simulate_scan(world, pose, model, seed=seed * 100003 + k, motion=motion,
                             stamp=t - model.sweep_duration)
        scans.append(scan)
        poses.append(pose)
        stamps.append(t)
    return SyntheticSequence(world, model, scans, poses, stamps)


def drifted_odometry(poses, seed=0, yaw_bias_deg=0.15, rotation_sigma_deg=0.02, translation_sigma=0.03):
    """Chain the true relative motions with a per-step error ``[so3_exp(w) | e]``.

    ``w`` adds a constant yaw bias to Gaussian rotation noise and ``e`` is
    Gaussian translation noise, so the chained estimate drifts like
    uncorrected odometry. The first pose is kept exact.
    """
    rng = np.random.default_rng(seed)
    out = [poses[0]]
    bias = np.array([0.0, 0.0, np.radians(yaw_bias_deg)])
    for a, b in zip(poses[:-1], poses[1:]):
        w = bias + rng.normal(0.0, np.radians(rotation_sigma_deg), 3)
        err = RigidTransform(so3_exp(w), rng.normal(0.0, translation_sigma, 3))
        out.append(out[-1] @ (a.inverse() @ b) @ err)
    return out


# -- oracles ------------------------------------------------------------------------------------

def _cell_interval(coord):
    """Half-away-from-zero rounding cell ``[lo, hi)`` / ``(lo, hi]`` in grid units."""
    return coord - 0.5, coord + 0.5


def oracle_match(source, vmap: VoxelMap, n_min=5) -> Correspondences:
    """Exhaustive point-in-cell test against every stored voxel."""
    points = source.points if isinstance(source, Scan) else np.asarray(source, dtype=float)
    if len(points) == 0 or len(vmap) == 0:
        return Correspondences(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), vmap)
    g = (points - vmap.ref_point) / vmap.resolution
    lo, hi = _cell_interval(vmap.coords.astype(float))
    src_idx, slots = [], []
    chunk = max(1, 2_000_000 // max(len(vmap), 1))
    for a in range(0, len(points), chunk):
        gp = g[a:a + chunk, None, :]
        # a coordinate c >= 0 owns [c - .5, c + .5); c = 0 also owns (-.5, 0)
        left = np.where(lo[None] < 0, gp > lo[None], gp >= lo[None])
        inside = np.all(left & (gp < hi[None]), axis=2)
        pi, vi = np.nonzero(inside)
        src_idx.append(pi + a)
        slots.append(vi)
    src_idx = np.concatenate(src_idx)
    slots = np.concatenate(slots)
    ok = vmap.counts[slots] >= n_min
    order = np.argsort(src_idx[ok], kind="stable")
    return Correspondences(src_idx[ok][order], slots[ok][order], vmap)


def spherical_cost(rotations, source_points, means, weights):
    """Weighted radial-residual cost for a batch of rotations (r, 3, 3)."""
    n = means / np.linalg.norm(means, axis=1, keepdims=True)
    q = np.einsum("rij,mj->rmi", rotations, source_points)
    d = np.einsum("rmi,mi->rm", q, n)[..., None] * n[None] - q
    W = np.asarray(weights, dtype=float)
    if W.ndim == 1:
        return np.einsum("rmi,m->r", d * d, W)
    return np.einsum("rmi,mij,rmj->r", d, W, d)


def oracle_rotation(source_points, target_means, weights=None, span_deg=12.0, step_deg=0.25):
    """Grid minimizer of the spherical cost over roll/pitch/yaw in ``+-span``."""
    source_points = np.asarray(source_points, dtype=float)
    target_means = np.asarray(target_means, dtype=float)
    if weights is None:
        weights = np.ones(len(source_points))
    grid = np.radians(np.arange(-span_deg, span_deg + step_deg / 2, step_deg))
    best_cost, best = np.inf, None
    cy, sy = np.cos(grid), np.sin(grid)
    Rz = np.zeros((len(grid), 3, 3))
    Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = cy, -sy, sy, cy, 1.0
    for roll in grid:
        for pitch in grid:
            Ryx = from_euler(roll, pitch, 0.0)
            Rs = Rz @ Ryx
            c = spherical_cost(Rs, source_points, target_means, weights)
            j = int(np.argmin(c))
            if c[j] < best_cost:
                best_cost, best = float(c[j]), Rs[j]
    return best, best_cost
