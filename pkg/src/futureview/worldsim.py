"""Synthetic 2D world with a panoramic camera, nonholonomic robot, and moving agents.

The camera is a 360-degree cylindrical panorama: column c looks along the
world azimuth theta + alpha(c) with alpha(c) = (0.5 - (c + 0.5) / W) * 2*pi,
and row r along the vertical slope zeta(r) = (0.5 - (r + 0.5) / H) * 2*zmax
where zmax = tan(vertical_fov / 2).  A pure yaw rotation of the robot is an
exact horizontal circular pixel shift of (d_theta / 2*pi) * W, which gives the
renderer closed-form oracles for warping and flow.

All geometry is 2.5D: vertical wall segments and vertical cylinders standing
on a flat floor, colored by band-limited procedural textures so that renders
are smooth under small pose changes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Pose, Twist, integrate_pose, wrap_angle

ROBOT_RADIUS = 0.2
_EPS = 1e-9

# id-plane codes for non-surface pixels
FLOOR_ID = -1
SKY_ID = -2


# ---------------------------------------------------------------------------
# Textures
# ---------------------------------------------------------------------------


@dataclass
class TextureSpec:
    """Band-limited procedural color: base + sum of sinusoids over two coords.

    Each component is (freq_a, freq_b, phase, (amp_r, amp_g, amp_b)); the
    color at texture coordinates (a, b) is
    base + sum_i amp_i * sin(freq_a_i * a + freq_b_i * b + phase_i).
    """

    base: tuple[float, float, float]
    comps: list[tuple[float, float, float, tuple[float, float, float]]] = field(
        default_factory=list
    )

    def sample(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        out = np.empty(a.shape + (3,), dtype=np.float64)
        out[...] = self.base
        for fa, fb, ph, amp in self.comps:
            wave = np.sin(fa * a + fb * b + ph)
            out += wave[..., None] * np.asarray(amp)
        return out

    def mirrored(self, axis: int) -> "TextureSpec":
        """Texture seen under a world reflection: negate one coordinate."""
        comps = []
        for fa, fb, ph, amp in self.comps:
            if axis == 0:
                comps.append((-fa, fb, ph, amp))
            else:
                comps.append((fa, -fb, ph, amp))
        return TextureSpec(self.base, comps)


def _random_texture(rng: np.random.Generator, base, n=3, freq=(0.8, 4.0), amp=0.10) -> TextureSpec:
    comps = []
    for _ in range(n):
        fa = float(rng.uniform(*freq)) * float(rng.choice([-1.0, 1.0]))
        fb = float(rng.uniform(*freq)) * float(rng.choice([-1.0, 1.0]))
        ph = float(rng.uniform(0, 2 * math.pi))
        a = rng.uniform(0.3 * amp, amp, size=3)
        comps.append((fa, fb, ph, (float(a[0]), float(a[1]), float(a[2]))))
    return TextureSpec(tuple(float(x) for x in base), comps)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass
class Wall:
    p0: tuple[float, float]
    p1: tuple[float, float]
    height: float
    tex: TextureSpec


@dataclass
class Cylinder:
    center: tuple[float, float]
    radius: float
    height: float
    tex: TextureSpec


@dataclass
class MotionProfile:
    """Constant-speed motion along a polyline, looping or ping-ponging."""

    waypoints: list[tuple[float, float]]
    speed: float
    mode: str = "loop"  # "loop" | "pingpong"
    phase: float = 0.0  # arclength offset at t = 0

    def _segments(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(self.waypoints, dtype=np.float64)
        if self.mode == "loop" and len(pts) > 1:
            pts = np.vstack([pts, pts[:1]])
        deltas = np.diff(pts, axis=0)
        lengths = np.hypot(deltas[:, 0], deltas[:, 1])
        return pts, lengths

    def path_length(self) -> float:
        _, lengths = self._segments()
        total = float(lengths.sum())
        return 2.0 * total if self.mode == "pingpong" else total

    def position(self, t: float) -> tuple[float, float]:
        pts, lengths = self._segments()
        if len(self.waypoints) < 2 or lengths.sum() < _EPS or self.speed <= 0.0:
            return tuple(self.waypoints[0])
        total = float(lengths.sum())
        s = math.fmod(self.phase + self.speed * t, self.path_length())
        if s < 0:
            s += self.path_length()
        if self.mode == "pingpong" and s > total:
            s = 2.0 * total - s
        for i, seg_len in enumerate(lengths):
            if s <= seg_len or i == len(lengths) - 1:
                f = 0.0 if seg_len < _EPS else s / seg_len
                p = pts[i] + min(f, 1.0) * (pts[i + 1] - pts[i])
                return (float(p[0]), float(p[1]))
            s -= seg_len
        return tuple(self.waypoints[-1])


@dataclass
class Agent:
    radius: float
    height: float
    tex: TextureSpec
    profile: MotionProfile

    def cylinder_at(self, t: float) -> Cylinder:
        return Cylinder(self.profile.position(t), self.radius, self.height, self.tex)


@dataclass
class CameraModel:
    """Cylindrical panorama: 360 deg horizontal, given vertical FOV."""

    width: int = 64
    height: int = 64
    v_fov_deg: float = 90.0
    cam_height: float = 0.35

    @property
    def zmax(self) -> float:
        return math.tan(math.radians(self.v_fov_deg) / 2.0)

    def column_azimuths(self) -> np.ndarray:
        c = np.arange(self.width, dtype=np.float64)
        return (0.5 - (c + 0.5) / self.width) * 2.0 * math.pi

    def row_slopes(self) -> np.ndarray:
        r = np.arange(self.height, dtype=np.float64)
        return (0.5 - (r + 0.5) / self.height) * 2.0 * self.zmax


@dataclass
class WorldSpec:
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    walls: list[Wall]
    obstacles: list[Cylinder]
    agents: list[Agent]
    floor_tex: TextureSpec
    sky_tex: TextureSpec
    spawn: Pose
    seed: int = 0


@dataclass
class WorldState:
    spec: WorldSpec
    time: float = 0.0


def step_world(state: WorldState, dt: float) -> WorldState:
    """Advance every agent along its motion profile by dt (closed form in t)."""
    return WorldState(state.spec, state.time + dt)


def _surfaces_at(state: WorldState) -> list[tuple[str, object]]:
    out: list[tuple[str, object]] = [("wall", w) for w in state.spec.walls]
    out += [("cyl", c) for c in state.spec.obstacles]
    out += [("cyl", a.cylinder_at(state.time)) for a in state.spec.agents]
    return out


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------


def _ray_hits(origin: np.ndarray, dirs: np.ndarray, surfaces) -> tuple[np.ndarray, np.ndarray]:
    """Intersect rays (N, 2 dirs) with each surface.

    Returns (dist, param), both (K, N); dist is +inf where a ray misses.
    param is arclength along a wall, or surface azimuth on a cylinder.
    """
    n = dirs.shape[0]
    k = len(surfaces)
    dist = np.full((k, n), np.inf)
    param = np.zeros((k, n))
    ox, oy = origin
    dx, dy = dirs[:, 0], dirs[:, 1]
    for i, (kind, s) in enumerate(surfaces):
        if kind == "wall":
            ex, ey = s.p1[0] - s.p0[0], s.p1[1] - s.p0[1]
            rx, ry = s.p0[0] - ox, s.p0[1] - oy
            denom = dx * ey - dy * ex
            ok = np.abs(denom) > _EPS
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (rx * ey - ry * ex) / denom
                u = (rx * dy - ry * dx) / denom
            ok &= (t > _EPS) & (u >= -1e-9) & (u <= 1.0 + 1e-9)
            seg_len = math.hypot(ex, ey)
            dist[i] = np.where(ok, t, np.inf)
            param[i] = np.where(ok, np.clip(u, 0.0, 1.0) * seg_len, 0.0)
        else:
            cx, cy = s.center
            fx, fy = cx - ox, cy - oy
            b = dx * fx + dy * fy
            disc = b * b - (fx * fx + fy * fy - s.radius**2)
            ok = disc >= 0.0
            root = np.sqrt(np.where(ok, disc, 0.0))
            t_near = b - root
            t_far = b + root
            t = np.where(t_near > _EPS, t_near, t_far)
            ok &= t > _EPS
            hx = ox + t * dx - cx
            hy = oy + t * dy - cy
            dist[i] = np.where(ok, t, np.inf)
            param[i] = np.where(ok, np.arctan2(hy, hx), 0.0)
    return dist, param


def _check_pose_in_bounds(spec: WorldSpec, pose: Pose) -> None:
    xmin, ymin, xmax, ymax = spec.bounds
    if not (xmin <= pose.x <= xmax and ymin <= pose.y <= ymax):
        raise ValueError(f"pose ({pose.x:.3f}, {pose.y:.3f}) outside world bounds {spec.bounds}")


def _trace(state: WorldState, pose: Pose, camera: CameraModel, want_points: bool):
    """Shared raycast core: per-pixel winner id, distance, color, world point."""
    _check_pose_in_bounds(state.spec, pose)
    w, h = camera.width, camera.height
    surfaces = _surfaces_at(state)
    alphas = camera.column_azimuths()
    phis = pose.theta + alphas
    dirs = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    origin = np.array([pose.x, pose.y])
    dist, param = _ray_hits(origin, dirs, surfaces)  # (K, W)

    zeta = camera.row_slopes()  # (H,)
    heights = np.array([s.height for _, s in surfaces]) if surfaces else np.zeros(0)
    z_hit = camera.cam_height + dist[:, None, :] * zeta[None, :, None]  # (K, H, W)
    cand = np.isfinite(dist)[:, None, :] & (z_hit >= 0.0) & (z_hit <= heights[:, None, None])
    surf_dist = np.where(cand, np.broadcast_to(dist[:, None, :], z_hit.shape), np.inf)

    with np.errstate(divide="ignore"):
        floor_t = np.where(zeta < 0.0, -camera.cam_height / zeta, np.inf)  # (H,)
    floor_dist = np.broadcast_to(floor_t[:, None], (h, w))

    all_dist = np.concatenate([surf_dist, floor_dist[None]], axis=0)  # (K+1, H, W)
    winner = np.argmin(all_dist, axis=0)  # K entries = surfaces, K = floor
    best = np.take_along_axis(all_dist, winner[None], axis=0)[0]
    n_surf = len(surfaces)
    ids = np.where(winner < n_surf, winner, FLOOR_ID)
    ids = np.where(np.isinf(best), SKY_ID, ids)

    color = np.zeros((h, w, 3))
    points = np.zeros((h, w, 3)) if want_points else None
    for i, (kind, s) in enumerate(surfaces):
        mask = ids == i
        if not mask.any():
            continue
        d_pix = np.broadcast_to(dist[i][None, :], (h, w))[mask]
        z_pix = z_hit[i][mask]
        p_pix = np.broadcast_to(param[i][None, :], (h, w))[mask]
        if kind == "wall":
            color[mask] = s.tex.sample(p_pix, z_pix)
        else:
            color[mask] = s.tex.sample(p_pix, z_pix)
        if want_points:
            cc = np.broadcast_to(np.cos(phis)[None, :], (h, w))[mask]
            ss = np.broadcast_to(np.sin(phis)[None, :], (h, w))[mask]
            points[mask] = np.stack(
                [pose.x + d_pix * cc, pose.y + d_pix * ss, z_pix], axis=-1
            )
    floor_mask = ids == FLOOR_ID
    if floor_mask.any():
        t_pix = floor_dist[floor_mask]
        cc = np.broadcast_to(np.cos(phis)[None, :], (h, w))[floor_mask]
        ss = np.broadcast_to(np.sin(phis)[None, :], (h, w))[floor_mask]
        fx = pose.x + t_pix * cc
        fy = pose.y + t_pix * ss
        color[floor_mask] = state.spec.floor_tex.sample(fx, fy)
        if want_points:
            points[floor_mask] = np.stack([fx, fy, np.zeros_like(fx)], axis=-1)
    sky_mask = ids == SKY_ID
    if sky_mask.any():
        az = np.broadcast_to(phis[None, :], (h, w))[sky_mask]
        zz = np.broadcast_to(zeta[:, None], (h, w))[sky_mask]
        color[sky_mask] = state.spec.sky_tex.sample(az, zz)
        if want_points:
            points[sky_mask] = np.nan

    return ids, best, np.clip(color, 0.0, 1.0), points, phis, zeta


def render_view(state: WorldState, pose: Pose, camera: CameraModel) -> np.ndarray:
    """Deterministic column-wise raycast render, (H, W, 3) float32 in [0, 1]."""
    _, _, color, _, _, _ = _trace(state, pose, camera, want_points=False)
    return color.astype(np.float32)


def render_with_ids(state: WorldState, pose: Pose, camera: CameraModel):
    """Render plus the per-pixel surface index map (floor = -1, sky = -2).

    Surfaces are indexed walls first, then static obstacles, then agents.
    """
    ids, _, color, _, _, _ = _trace(state, pose, camera, want_points=False)
    return color.astype(np.float32), ids


def agent_surface_index(spec: WorldSpec, agent_idx: int) -> int:
    return len(spec.walls) + len(spec.obstacles) + agent_idx


# ---------------------------------------------------------------------------
# Analytic flow oracle
# ---------------------------------------------------------------------------


def analytic_flow(
    state: WorldState, pose_a: Pose, pose_b: Pose, camera: CameraModel
) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth correspondence field between two robot poses.

    For each pixel of the view at pose_b, gives the normalized coordinate of
    the same static world point in the view at pose_a, plus a validity mask.
    Invalid pixels are those occluded in view a, outside its vertical span,
    or whose source column would wrap around the panorama seam (the
    border-clamping sampler cannot wrap).
    """
    _check_pose_in_bounds(state.spec, pose_a)
    w, h = camera.width, camera.height
    ids, dist_b, _, points, phis_b, zeta = _trace(state, pose_b, camera, want_points=True)

    sky = ids == SKY_ID
    px = np.where(sky, 0.0, points[..., 0])
    py = np.where(sky, 0.0, points[..., 1])
    pz = np.where(sky, 0.0, points[..., 2])

    dxy = np.stack([px - pose_a.x, py - pose_a.y], axis=-1)
    d_a = np.hypot(dxy[..., 0], dxy[..., 1])
    d_a = np.maximum(d_a, 1e-9)
    phi_a = np.arctan2(dxy[..., 1], dxy[..., 0])
    zeta_a = (pz - camera.cam_height) / d_a

    # sky pixels keep their world direction; distance is infinite
    phi_sky = np.broadcast_to(phis_b[None, :], (h, w))
    phi_a = np.where(sky, phi_sky, phi_a)
    zeta_a = np.where(sky, np.broadcast_to(zeta[:, None], (h, w)), zeta_a)
    d_a = np.where(sky, np.inf, d_a)

    rel = np.mod(phi_a - pose_a.theta + math.pi, 2.0 * math.pi) - math.pi
    col = w * (0.5 - rel / (2.0 * math.pi)) - 0.5
    row = h * (0.5 - zeta_a / (2.0 * camera.zmax)) - 0.5
    u = 2.0 * col / (w - 1) - 1.0
    v = 2.0 * row / (h - 1) - 1.0

    slack = 1.0 + 1e-9  # absorb float noise at the exact image border
    in_range = (np.abs(u) <= slack) & (np.abs(v) <= slack)
    u = np.clip(u, -1.0, 1.0)
    v = np.clip(v, -1.0, 1.0)

    # visibility from pose a: nearest blocking surface along each pixel's ray
    surfaces = _surfaces_at(state)
    dirs = np.stack([np.cos(phi_a).ravel(), np.sin(phi_a).ravel()], axis=1)
    dist_k, _ = _ray_hits(np.array([pose_a.x, pose_a.y]), dirs, surfaces)  # (K, H*W)
    zr = zeta_a.ravel()
    z_at = camera.cam_height + dist_k * zr[None, :]
    heights = np.array([s.height for _, s in surfaces]) if surfaces else np.zeros(0)
    blocked_k = np.isfinite(dist_k) & (z_at >= 0.0) & (z_at <= heights[:, None])
    t_block = np.where(blocked_k, dist_k, np.inf).min(axis=0) if surfaces else np.full(h * w, np.inf)
    t_block = t_block.reshape(h, w)

    tol = 1e-4 + 1e-3 * np.where(np.isfinite(d_a), d_a, 0.0)
    visible = np.where(sky, np.isinf(t_block), t_block >= d_a - tol)

    flow = np.stack([u, v], axis=0).astype(np.float32)
    valid = in_range & visible
    return flow, valid


# ---------------------------------------------------------------------------
# Collision and traversability
# ---------------------------------------------------------------------------


def _point_segment_dist(px, py, a, b) -> np.ndarray:
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    if ll < _EPS:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / ll, 0.0, 1.0)
    return np.hypot(px - (ax + t * ex), py - (ay + t * ey))


def collision_free(state: WorldState, pose: Pose, radius: float = ROBOT_RADIUS) -> bool:
    """Is a static robot footprint at this pose clear of everything?"""
    return bool(
        _poses_clear(
            state, np.array([pose.x]), np.array([pose.y]), np.array([state.time]), radius
        )[0]
    )


def _poses_clear(state, xs, ys, times, radius) -> np.ndarray:
    xmin, ymin, xmax, ymax = state.spec.bounds
    ok = (xs - radius >= xmin) & (xs + radius <= xmax) & (ys - radius >= ymin) & (ys + radius <= ymax)
    for wall in state.spec.walls:
        ok &= _point_segment_dist(xs, ys, wall.p0, wall.p1) >= radius
    for cyl in state.spec.obstacles:
        ok &= np.hypot(xs - cyl.center[0], ys - cyl.center[1]) >= radius + cyl.radius
    for agent in state.spec.agents:
        pos = np.array([agent.profile.position(float(t)) for t in times])
        ok &= np.hypot(xs - pos[:, 0], ys - pos[:, 1]) >= radius + agent.radius
    return ok


def traversability_oracle(
    state: WorldState,
    pose: Pose,
    lookahead: Twist,
    dt: float,
    robot_radius: float = ROBOT_RADIUS,
    substeps: int = 64,
) -> bool:
    """True iff sweeping the robot footprint along the lookahead arc stays clear.

    Agents advance along their own profiles during the sweep, so a crossing
    agent can make a step untraversable even when both endpoints are free.
    """
    taus = np.linspace(0.0, dt, substeps + 1)
    xs = np.empty_like(taus)
    ys = np.empty_like(taus)
    for i, tau in enumerate(taus):
        p = pose if tau == 0.0 else integrate_pose(pose, lookahead, float(tau))
        xs[i], ys[i] = p.x, p.y
    return bool(_poses_clear(state, xs, ys, state.time + taus, robot_radius).all())


def sample_free_pose(
    state: WorldState, rng: np.random.Generator, radius: float = ROBOT_RADIUS, margin: float = 0.05
) -> Pose:
    xmin, ymin, xmax, ymax = state.spec.bounds
    for _ in range(10_000):
        pose = Pose(
            float(rng.uniform(xmin + radius + margin, xmax - radius - margin)),
            float(rng.uniform(ymin + radius + margin, ymax - radius - margin)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        if collision_free(state, pose, radius):
            return pose
    raise RuntimeError("world has no free space for the robot")


# ---------------------------------------------------------------------------
# World generation and mirroring
# ---------------------------------------------------------------------------


def random_world(
    seed: int,
    size: float = 6.0,
    n_inner_walls: tuple[int, int] = (1, 2),
    n_obstacles: tuple[int, int] = (1, 3),
    n_agents: int = 0,
    agent_speed: tuple[float, float] = (0.3, 1.2),
    wall_height: float = 1.4,
) -> WorldSpec:
    """Seeded random enclosed world with textured walls, obstacles, agents."""
    rng = np.random.default_rng(seed)
    half = size / 2.0
    bounds = (-half, -half, half, half)
    corners = [(-half, -half), (half, -half), (half, half), (-half, half)]
    walls = []
    for i in range(4):
        base = rng.uniform(0.35, 0.7, size=3)
        tex = _random_texture(rng, base, n=3, freq=(0.6, 3.0), amp=0.12)
        walls.append(Wall(corners[i], corners[(i + 1) % 4], wall_height, tex))
    for _ in range(int(rng.integers(n_inner_walls[0], n_inner_walls[1] + 1))):
        cx, cy = rng.uniform(-half + 1.0, half - 1.0, size=2)
        ang = rng.uniform(0, math.pi)
        length = rng.uniform(0.8, 2.0)
        dx, dy = 0.5 * length * math.cos(ang), 0.5 * length * math.sin(ang)
        tex = _random_texture(rng, rng.uniform(0.3, 0.75, size=3), n=3, freq=(0.8, 3.5), amp=0.12)
        walls.append(
            Wall((cx - dx, cy - dy), (cx + dx, cy + dy), float(rng.uniform(0.8, wall_height)), tex)
        )
    obstacles = []
    for _ in range(int(rng.integers(n_obstacles[0], n_obstacles[1] + 1))):
        cx, cy = rng.uniform(-half + 0.8, half - 0.8, size=2)
        obstacles.append(
            Cylinder(
                (float(cx), float(cy)),
                float(rng.uniform(0.15, 0.35)),
                float(rng.uniform(0.6, 1.2)),
                _random_texture(rng, rng.uniform(0.3, 0.8, size=3), n=2, freq=(1.0, 4.0), amp=0.15),
            )
        )
    agents = []
    palettes = [(0.85, 0.2, 0.2), (0.2, 0.3, 0.85), (0.85, 0.7, 0.15), (0.2, 0.75, 0.3)]
    for i in range(n_agents):
        n_wp = int(rng.integers(2, 4))
        wps = [tuple(rng.uniform(-half + 0.7, half - 0.7, size=2)) for _ in range(n_wp)]
        profile = MotionProfile(
            waypoints=[(float(x), float(y)) for x, y in wps],
            speed=float(rng.uniform(*agent_speed)),
            mode=str(rng.choice(["loop", "pingpong"])),
            phase=float(rng.uniform(0.0, 3.0)),
        )
        tex = _random_texture(rng, palettes[i % len(palettes)], n=2, freq=(2.0, 6.0), amp=0.18)
        agents.append(
            Agent(
                radius=float(rng.uniform(0.22, 0.34)),
                height=float(rng.uniform(1.0, 1.5)),
                tex=tex,
                profile=profile,
            )
        )
    floor = _random_texture(rng, (0.25, 0.25, 0.3), n=3, freq=(0.7, 2.5), amp=0.10)
    # sky frequencies over azimuth must be integers so the texture is
    # 2*pi-periodic and the panorama seam is exact
    sky_comps = []
    for _ in range(2):
        fa = float(rng.integers(1, 4)) * float(rng.choice([-1.0, 1.0]))
        fb = float(rng.uniform(0.5, 1.5))
        ph = float(rng.uniform(0, 2 * math.pi))
        amp = rng.uniform(0.02, 0.08, size=3)
        sky_comps.append((fa, fb, ph, (float(amp[0]), float(amp[1]), float(amp[2]))))
    sky = TextureSpec((0.75, 0.8, 0.9), sky_comps)
    spec = WorldSpec(bounds, walls, obstacles, agents, floor, sky, Pose(0, 0, 0), seed=seed)
    spawn = sample_free_pose(WorldState(spec), rng)
    spec.spawn = spawn
    return spec


def mirror_world(spec: WorldSpec) -> WorldSpec:
    """Reflect the world across the x axis (y -> -y).

    A render from the mirrored pose of the mirrored world is the exact
    horizontal flip of the original render, which is what image-flip
    augmentation assumes when it negates the angular velocity.
    """

    def mp(p):
        return (p[0], -p[1])

    walls = [Wall(mp(w.p0), mp(w.p1), w.height, w.tex) for w in spec.walls]
    obstacles = [Cylinder(mp(c.center), c.radius, c.height, c.tex.mirrored(0)) for c in spec.obstacles]
    agents = [
        Agent(
            a.radius,
            a.height,
            a.tex.mirrored(0),
            MotionProfile([mp(p) for p in a.profile.waypoints], a.profile.speed, a.profile.mode, a.profile.phase),
        )
        for a in spec.agents
    ]
    return WorldSpec(
        spec.bounds,
        walls,
        obstacles,
        agents,
        spec.floor_tex.mirrored(1),
        spec.sky_tex.mirrored(0),
        mirror_pose(spec.spawn),
        seed=spec.seed,
    )


def mirror_pose(pose: Pose) -> Pose:
    return Pose(pose.x, -pose.y, wrap_angle(-pose.theta))


# ---------------------------------------------------------------------------
# Serialization (structured text, key-value with nested lists)
# ---------------------------------------------------------------------------


def _tex_to_dict(t: TextureSpec) -> dict:
    return {"base": list(t.base), "comps": [[fa, fb, ph, list(amp)] for fa, fb, ph, amp in t.comps]}


def _tex_from_dict(d: dict) -> TextureSpec:
    return TextureSpec(
        tuple(d["base"]), [(c[0], c[1], c[2], tuple(c[3])) for c in d["comps"]]
    )


def spec_to_dict(spec: WorldSpec) -> dict:
    return {
        "bounds": list(spec.bounds),
        "seed": spec.seed,
        "spawn": [spec.spawn.x, spec.spawn.y, spec.spawn.theta],
        "walls": [
            {"p0": list(w.p0), "p1": list(w.p1), "height": w.height, "tex": _tex_to_dict(w.tex)}
            for w in spec.walls
        ],
        "obstacles": [
            {
                "center": list(c.center),
                "radius": c.radius,
                "height": c.height,
                "tex": _tex_to_dict(c.tex),
            }
            for c in spec.obstacles
        ],
        "agents": [
            {
                "radius": a.radius,
                "height": a.height,
                "tex": _tex_to_dict(a.tex),
                "profile": {
                    "waypoints": [list(p) for p in a.profile.waypoints],
                    "speed": a.profile.speed,
                    "mode": a.profile.mode,
                    "phase": a.profile.phase,
                },
            }
            for a in spec.agents
        ],
        "floor_tex": _tex_to_dict(spec.floor_tex),
        "sky_tex": _tex_to_dict(spec.sky_tex),
    }


def spec_from_dict(d: dict) -> WorldSpec:
    return WorldSpec(
        bounds=tuple(d["bounds"]),
        walls=[
            Wall(tuple(w["p0"]), tuple(w["p1"]), w["height"], _tex_from_dict(w["tex"]))
            for w in d["walls"]
        ],
        obstacles=[
            Cylinder(tuple(c["center"]), c["radius"], c["height"], _tex_from_dict(c["tex"]))
            for c in d["obstacles"]
        ],
        agents=[
            Agent(
                a["radius"],
                a["height"],
                _tex_from_dict(a["tex"]),
                MotionProfile(
                    [tuple(p) for p in a["profile"]["waypoints"]],
                    a["profile"]["speed"],
                    a["profile"]["mode"],
                    a["profile"]["phase"],
                ),
            )
            for a in d["agents"]
        ],
        floor_tex=_tex_from_dict(d["floor_tex"]),
        sky_tex=_tex_from_dict(d["sky_tex"]),
        spawn=Pose(*d["spawn"]),
        seed=d["seed"],
    )


def save_world(spec: WorldSpec, path) -> None:
    with open(path, "w") as f:
        json.dump(spec_to_dict(spec), f, indent=1)


def load_world(path) -> WorldSpec:
    with open(path) as f:
        return spec_from_dict(json.load(f))
