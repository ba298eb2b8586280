"""Episode datasets: synthetic generation, on-disk format, augmentation, splits.

On-disk layout, one directory per episode::

    <root>/<location_id>/<episode_id>/frame_00000.png   (8-bit RGB, lossless)
    <root>/<location_id>/<episode_id>/meta.jsonl        (one record per frame)
    <root>/<location_id>/<episode_id>/episode.json      (regime, camera, world)

Frames carry the twist that was *executed* to reach the next frame, the robot
pose, an oracle traversability label, and a timestamp on the fixed sampling
period grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image as PILImage

from . import worldsim
from .core import Pose, Twist, integrate_pose
from .imaging import to_tensor
from .models import SpatialNet, snet_forward

SAMPLING_PERIOD = 0.33
REGIMES = ("robot-motion", "fixed-robot-dynamic", "mixed")

# a frame is "traversable" when driving straight ahead at full speed for one
# sampling period keeps the swept footprint clear
LABEL_PROBE = Twist(0.5, 0.0)


@dataclass
class Frame:
    image: np.ndarray  # (H, W, 3) uint8
    twist: Twist  # command executed between this frame and the next
    pose: Pose
    traversable: bool | None
    timestamp: float


@dataclass
class Episode:
    location_id: str
    episode_id: str
    regime: str
    frames: list[Frame]
    camera: worldsim.CameraModel
    world: worldsim.WorldSpec | None = None

    def __post_init__(self):
        if len(self.frames) < 3:
            raise ValueError("an episode needs at least 3 frames")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    test: float = 0.15
    val: float = 0.15

    def __post_init__(self):
        if abs(self.train + self.test + self.val - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def frame_float(frame: Frame) -> np.ndarray:
    return frame.image.astype(np.float32) / 255.0


def frame_tensor(frame: Frame) -> torch.Tensor:
    return to_tensor(frame_float(frame))


def location_id_for(spec: worldsim.WorldSpec) -> str:
    return f"loc{spec.seed:05d}"


def _episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _label(state: worldsim.WorldState, pose: Pose) -> bool:
    return worldsim.traversability_oracle(state, pose, LABEL_PROBE, SAMPLING_PERIOD)


def _drive_episode(
    spec: worldsim.WorldSpec,
    camera: worldsim.CameraModel,
    rng: np.random.Generator,
    n_frames: int,
    regime: str,
    episode_id: str,
) -> Episode:
    """Random smooth teleoperation with collision-avoiding fallback turns."""
    state = worldsim.WorldState(spec, time=float(rng.uniform(0.0, 30.0)))
    pose = worldsim.sample_free_pose(state, rng)
    v, w = float(rng.uniform(0.1, 0.4)), 0.0
    turn_dir = 1.0 if rng.random() < 0.5 else -1.0
    frames = []
    for i in range(n_frames):
        img = quantize(worldsim.render_view(state, pose, camera))
        label = _label(state, pose)
        v = float(np.clip(v + rng.normal(0.0, 0.08), 0.05, 0.5))
        w = float(np.clip(w + rng.normal(0.0, 0.25), -1.0, 1.0))
        twist = Twist(v, w)
        if not worldsim.traversability_oracle(state, pose, twist, SAMPLING_PERIOD):
            # rotate in place toward a persistent side; footprint is unchanged
            twist = Twist(0.0, turn_dir * 0.9)
            w = twist.w
        else:
            turn_dir = 1.0 if rng.random() < 0.5 else -1.0
        frames.append(Frame(img, twist, pose, label, i * SAMPLING_PERIOD))
        pose = integrate_pose(pose, twist, SAMPLING_PERIOD)
        state = worldsim.step_world(state, SAMPLING_PERIOD)
    return Episode(location_id_for(spec), episode_id, regime, frames, camera, spec)


def generate_static_episodes(
    worlds: list[worldsim.WorldSpec],
    count: int,
    seed: int,
    frames_per_episode: int = 60,
    camera: worldsim.CameraModel | None = None,
) -> list[Episode]:
    """Teleoperated-motion episodes; intended for worlds without agents."""
    if count < 1:
        raise ValueError("count must be >= 1")
    camera = camera or worldsim.CameraModel()
    episodes = []
    for e in range(count):
        spec = worlds[e % len(worlds)]
        rng = _episode_rng(seed, e)
        episodes.append(
            _drive_episode(spec, camera, rng, frames_per_episode, "robot-motion", f"ep{e:03d}")
        )
    return episodes


def generate_dynamic_episodes(
    worlds: list[worldsim.WorldSpec],
    count: int,
    seed: int,
    frames_per_episode: int = 60,
    camera: worldsim.CameraModel | None = None,
) -> list[Episode]:
    """Fixed robot position, zero twists, agents moving."""
    if count < 1:
        raise ValueError("count must be >= 1")
    camera = camera or worldsim.CameraModel()
    episodes = []
    for e in range(count):
        spec = worlds[e % len(worlds)]
        rng = _episode_rng(seed ^ 0x5EED, e)
        t0 = float(rng.uniform(0.0, 30.0))
        duration = frames_per_episode * SAMPLING_PERIOD
        pose = _fixed_pose_clear(spec, rng, t0, duration)
        frames = []
        state = worldsim.WorldState(spec, time=t0)
        for i in range(frames_per_episode):
            img = quantize(worldsim.render_view(state, pose, camera))
            frames.append(
                Frame(img, Twist(0.0, 0.0), pose, _label(state, pose), i * SAMPLING_PERIOD)
            )
            state = worldsim.step_world(state, SAMPLING_PERIOD)
        episodes.append(
            Episode(location_id_for(spec), f"ep{e:03d}", "fixed-robot-dynamic", frames, camera, spec)
        )
    return episodes


def generate_mixed_episodes(
    worlds: list[worldsim.WorldSpec],
    count: int,
    seed: int,
    frames_per_episode: int = 60,
    camera: worldsim.CameraModel | None = None,
) -> list[Episode]:
    """Robot motion and moving agents together (evaluation scenario)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    camera = camera or worldsim.CameraModel()
    episodes = []
    for e in range(count):
        spec = worlds[e % len(worlds)]
        rng = _episode_rng(seed ^ 0xD1CE, e)
        episodes.append(
            _drive_episode(spec, camera, rng, frames_per_episode, "mixed", f"ep{e:03d}")
        )
    return episodes


def _fixed_pose_clear(spec, rng, t0: float, duration: float) -> Pose:
    """A pose that stays clear of every agent for the whole episode."""
    state = worldsim.WorldState(spec, time=t0)
    for _ in range(200):
        pose = worldsim.sample_free_pose(state, rng)
        times = t0 + np.linspace(0.0, duration, 64)
        clear = True
        for agent in spec.agents:
            pos = np.array([agent.profile.position(float(t)) for t in times])
            d = np.hypot(pos[:, 0] - pose.x, pos[:, 1] - pose.y)
            if (d < worldsim.ROBOT_RADIUS + agent.radius + 0.05).any():
                clear = False
                break
        if clear:
            return pose
    raise RuntimeError("could not find a pose clear of agent paths")


# ---------------------------------------------------------------------------
# Training samples
# ---------------------------------------------------------------------------


@dataclass
class SNetPair:
    """One spatial-net training sample: image + executed twist -> next image."""

    image: np.ndarray  # uint8
    twist: Twist
    target: np.ndarray  # uint8


@dataclass
class DNetTriple:
    """One dynamics-net sample: two (possibly preprocessed) frames -> future."""

    prev: np.ndarray  # float32 (H, W, 3)
    cur: np.ndarray  # float32
    target: np.ndarray  # uint8


def snet_pairs(episodes: list[Episode]) -> list[SNetPair]:
    pairs = []
    for ep in episodes:
        for a, b in zip(ep.frames[:-1], ep.frames[1:]):
            pairs.append(SNetPair(a.image, a.twist, b.image))
    return pairs


def raw_triples(episodes: list[Episode]) -> list[DNetTriple]:
    """Unpreprocessed consecutive triples, e.g. for direct dynamics-net eval."""
    out = []
    for ep in episodes:
        fr = ep.frames
        for i in range(len(fr) - 2):
            out.append(
                DNetTriple(frame_float(fr[i]), frame_float(fr[i + 1]), fr[i + 2].image)
            )
    return out


def augment_flip(pair: SNetPair, rng: np.random.Generator, prob: float = 0.5) -> SNetPair:
    """Horizontally mirror the images and negate the angular velocity.

    A mirrored panorama is the render of the mirrored world, in which the
    same linear motion turns the opposite way.
    """
    if prob > 0.0 and rng.random() < prob:
        return SNetPair(
            np.ascontiguousarray(pair.image[:, ::-1]),
            Twist(pair.twist.v, -pair.twist.w),
            np.ascontiguousarray(pair.target[:, ::-1]),
        )
    return pair


def preprocess_dnet_pairs(
    episodes: list[Episode],
    snet: SpatialNet,
    seed: int,
    epsilon: float = 0.05,
    batch_size: int = 64,
) -> list[DNetTriple]:
    """Pass input frames through the spatial net under small random twists.

    Each input frame gets its own perturbation, drawn uniformly within
    +/- epsilon per velocity dimension, so the dynamics net trains on the
    kind of disturbance the spatial net produces.  Targets stay real frames.
    """
    rng = np.random.default_rng(seed)
    inputs: list[np.ndarray] = []
    twists: list[Twist] = []
    targets: list[np.ndarray] = []
    for ep in episodes:
        fr = ep.frames
        for i in range(len(fr) - 2):
            for j in (i, i + 1):
                inputs.append(frame_float(fr[j]))
                twists.append(
                    Twist(float(rng.uniform(-epsilon, epsilon)), float(rng.uniform(-epsilon, epsilon)))
                )
            targets.append(fr[i + 2].image)
    processed: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(inputs), batch_size):
            chunk = inputs[start : start + batch_size]
            tw = twists[start : start + batch_size]
            batch = torch.stack([to_tensor(x) for x in chunk])
            out = snet_forward(snet, batch, tw).predicted
            processed.extend(out.permute(0, 2, 3, 1).numpy())
    triples = []
    for k in range(len(targets)):
        triples.append(DNetTriple(processed[2 * k], processed[2 * k + 1], targets[k]))
    return triples


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split_by_location(
    episodes: list[Episode], spec: SplitSpec = SplitSpec(), seed: int = 0
) -> tuple[list[Episode], list[Episode], list[Episode]]:
    """Partition whole locations 70/15/15 by largest-remainder counts.

    Every split receives at least one location (seats are moved from the
    largest split if rounding left one empty); locations never straddle
    splits.
    """
    locations = sorted({ep.location_id for ep in episodes})
    if len(locations) < 3:
        raise ValueError(f"need at least 3 locations, got {len(locations)}")
    rng = np.random.default_rng(seed)
    rng.shuffle(locations)
    n = len(locations)
    fracs = [spec.train, spec.test, spec.val]
    floors = [int(math.floor(f * n)) for f in fracs]
    rema = [f * n - fl for f, fl in zip(fracs, floors)]
    while sum(floors) < n:
        i = max(range(3), key=lambda j: (rema[j], -j))
        floors[i] += 1
        rema[i] = -1.0
    for i in range(3):  # no empty split
        while floors[i] == 0:
            donor = max(range(3), key=lambda j: floors[j])
            floors[donor] -= 1
            floors[i] += 1
    cut1, cut2 = floors[0], floors[0] + floors[1]
    groups = {
        "train": set(locations[:cut1]),
        "test": set(locations[cut1:cut2]),
        "val": set(locations[cut2:]),
    }
    by = {
        name: [ep for ep in episodes if ep.location_id in locs]
        for name, locs in groups.items()
    }
    return by["train"], by["test"], by["val"]


def split_counts(n_locations: int, spec: SplitSpec = SplitSpec()) -> tuple[int, int, int]:
    """Location counts per split for a given total (same rounding as above)."""
    fake = [f"l{i}" for i in range(n_locations)]
    fracs = [spec.train, spec.test, spec.val]
    floors = [int(math.floor(f * n_locations)) for f in fracs]
    rema = [f * n_locations - fl for f, fl in zip(fracs, floors)]
    while sum(floors) < n_locations:
        i = max(range(3), key=lambda j: (rema[j], -j))
        floors[i] += 1
        rema[i] = -1.0
    for i in range(3):
        while floors[i] == 0:
            donor = max(range(3), key=lambda j: floors[j])
            floors[donor] -= 1
            floors[i] += 1
    del fake
    return tuple(floors)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Labeled evaluation references
# ---------------------------------------------------------------------------


def balanced_labeled_refs(
    episodes: list[Episode],
    n_per_class: int,
    seed: int,
    horizon: int = 1,
    history: int = 2,
) -> list[tuple[int, int]]:
    """Balanced (episode, frame) refs whose frame is `horizon` steps after an
    anchor with `history` preceding frames; balanced on the frame's label."""
    pos, neg = [], []
    for ei, ep in enumerate(episodes):
        for j in range(history + horizon - 1, len(ep.frames)):
            label = ep.frames[j].traversable
            if label is None:
                continue
            (pos if label else neg).append((ei, j))
    rng = np.random.default_rng(seed)
    if len(pos) < n_per_class or len(neg) < n_per_class:
        raise ValueError(
            f"not enough labeled frames for {n_per_class}/class "
            f"(have {len(pos)} traversable, {len(neg)} untraversable)"
        )
    pick_p = [pos[i] for i in rng.choice(len(pos), n_per_class, replace=False)]
    pick_n = [neg[i] for i in rng.choice(len(neg), n_per_class, replace=False)]
    return pick_p + pick_n


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------


def save_episode(root, ep: Episode) -> Path:
    d = Path(root) / ep.location_id / ep.episode_id
    d.mkdir(parents=True, exist_ok=True)
    for i, fr in enumerate(ep.frames):
        PILImage.fromarray(fr.image).save(d / f"frame_{i:05d}.png")
    with open(d / "meta.jsonl", "w") as f:
        for i, fr in enumerate(ep.frames):
            rec = {
                "index": i,
                "timestamp": fr.timestamp,
                "v": fr.twist.v,
                "w": fr.twist.w,
                "x": fr.pose.x,
                "y": fr.pose.y,
                "theta": fr.pose.theta,
                "traversable": fr.traversable,
            }
            f.write(json.dumps(rec) + "\n")
    info = {
        "location_id": ep.location_id,
        "episode_id": ep.episode_id,
        "regime": ep.regime,
        "camera": {
            "width": ep.camera.width,
            "height": ep.camera.height,
            "v_fov_deg": ep.camera.v_fov_deg,
            "cam_height": ep.camera.cam_height,
        },
        "world_seed": ep.world.seed if ep.world else None,
        "world": worldsim.spec_to_dict(ep.world) if ep.world else None,
    }
    with open(d / "episode.json", "w") as f:
        json.dump(info, f, indent=1)
    return d


def load_episode(path) -> Episode:
    d = Path(path)
    with open(d / "episode.json") as f:
        info = json.load(f)
    camera = worldsim.CameraModel(**info["camera"])
    frames = []
    with open(d / "meta.jsonl") as f:
        for line in f:
            rec = json.loads(line)
            img = np.asarray(PILImage.open(d / f"frame_{rec['index']:05d}.png").convert("RGB"))
            frames.append(
                Frame(
                    img,
                    Twist(rec["v"], rec["w"]),
                    Pose(rec["x"], rec["y"], rec["theta"]),
                    rec["traversable"],
                    rec["timestamp"],
                )
            )
    world = worldsim.spec_from_dict(info["world"]) if info.get("world") else None
    return Episode(info["location_id"], info["episode_id"], info["regime"], frames, camera, world)


def save_dataset(root, episodes: list[Episode]) -> None:
    for ep in episodes:
        save_episode(root, ep)


def load_dataset(root) -> list[Episode]:
    root = Path(root)
    episodes = []
    for ep_json in sorted(root.glob("*/*/episode.json")):
        episodes.append(load_episode(ep_json.parent))
    if not episodes:
        raise FileNotFoundError(f"no episodes under {root}")
    return episodes
