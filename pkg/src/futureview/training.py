"""Optimization loops for the synthesis nets, metrics logging, checkpoints.

Both nets minimize mean per-pixel L1 to the real future frame with Adam.
The best-validation weights are restored at the end of a run.  Checkpoints
are directories holding ``manifest.json`` (model kind, architecture config,
content hash, metadata) next to a ``weights.bin`` tensor blob; loading with
a mismatched architecture is an error, never a silent reshape.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import data as datamod
from .core import Twist
from .imaging import ssim
from .models import (
    BackboneConfig,
    DynamicsNet,
    SpatialNet,
    build_dnet,
    build_snet,
    dnet_forward,
    snet_forward,
)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16  # full-scale runs use 80
    max_steps: int = 2000
    seed: int = 0
    epsilon_bound: float = 0.05
    eval_every: int = 200
    loss: str = "l1"
    flip_prob: float = 0.5
    early_stop_train_l1: float | None = None  # stop once a 50-step window beats this

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "l1":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass
class TrainResult:
    model: torch.nn.Module
    history: list[dict] = field(default_factory=list)
    best_val_l1: float = float("inf")
    steps_run: int = 0


class CheckpointError(Exception):
    pass


def _check_finite(loss: torch.Tensor, step: int) -> None:
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite training loss {loss.item()} at step {step}")


def _img_batch(arrays: list[np.ndarray]) -> torch.Tensor:
    stack = np.stack(arrays)
    if stack.dtype == np.uint8:
        stack = stack.astype(np.float32) / 255.0
    return torch.from_numpy(stack.transpose(0, 3, 1, 2)).float()


def _run_loop(cfg, model, params, make_batch, eval_fn) -> TrainResult:
    opt = torch.optim.Adam(params, lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    result = TrainResult(model=model)
    best_state = None
    recent: list[float] = []
    for step in range(1, cfg.max_steps + 1):
        loss = make_batch(step)
        _check_finite(loss, step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        train_l1 = float(loss.item())
        recent.append(train_l1)
        result.steps_run = step
        if step % cfg.eval_every == 0 or step == cfg.max_steps:
            with torch.no_grad():
                if not all(torch.isfinite(p).all() for p in model.parameters()):
                    raise RuntimeError(f"non-finite parameters after step {step}")
                val_l1, val_ssim = eval_fn()
            row = {
                "step": step,
                "train_l1": float(np.mean(recent[-cfg.eval_every :])),
                "val_l1": val_l1,
                "val_ssim": val_ssim,
            }
            result.history.append(row)
            if val_l1 < result.best_val_l1:
                result.best_val_l1 = val_l1
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if (
            cfg.early_stop_train_l1 is not None
            and len(recent) >= 50
            and float(np.mean(recent[-50:])) <= cfg.early_stop_train_l1
        ):
            with torch.no_grad():
                val_l1, val_ssim = eval_fn()
            result.history.append(
                {"step": step, "train_l1": float(np.mean(recent[-50:])), "val_l1": val_l1, "val_ssim": val_ssim}
            )
            if val_l1 < result.best_val_l1:
                result.best_val_l1 = val_l1
                best_state = None  # current weights are the best; keep them
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


def _subsample(items: list, limit: int, seed: int) -> list:
    if len(items) <= limit:
        return list(items)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(items), limit, replace=False)
    return [items[i] for i in idx]


def train_snet(
    cfg: TrainConfig,
    train_episodes: list[datamod.Episode],
    val_episodes: list[datamod.Episode],
    backbone: BackboneConfig,
) -> TrainResult:
    """Fit the spatial net on (frame, executed twist) -> next frame pairs."""
    pairs = datamod.snet_pairs(train_episodes)
    if not pairs:
        raise ValueError("no training pairs: dataset has no robot-motion episodes")
    val_pairs = _subsample(datamod.snet_pairs(val_episodes), 192, cfg.seed)
    torch.manual_seed(cfg.seed)
    model = build_snet(backbone)
    rng = np.random.default_rng(cfg.seed)

    def make_batch(step: int) -> torch.Tensor:
        idx = rng.integers(0, len(pairs), cfg.batch_size)
        chosen = [datamod.augment_flip(pairs[i], rng, cfg.flip_prob) for i in idx]
        images = _img_batch([p.image for p in chosen])
        targets = _img_batch([p.target for p in chosen])
        out = snet_forward(model, images, [p.twist for p in chosen])
        return (out.predicted - targets).abs().mean()

    def eval_fn():
        return _eval_snet(model, val_pairs)

    return _run_loop(cfg, model, model.parameters(), make_batch, eval_fn)


def _eval_snet(model: SpatialNet, val_pairs, chunk: int = 64) -> tuple[float, float]:
    if not val_pairs:
        return float("nan"), float("nan")
    l1s, ssims = [], []
    for start in range(0, len(val_pairs), chunk):
        part = val_pairs[start : start + chunk]
        images = _img_batch([p.image for p in part])
        targets = _img_batch([p.target for p in part])
        pred = snet_forward(model, images, [p.twist for p in part]).predicted
        l1s.append((pred - targets).abs().mean(dim=(1, 2, 3)).numpy())
        if start == 0:  # SSIM on the first chunk keeps eval cheap
            for k in range(min(16, len(part))):
                ssims.append(
                    ssim(pred[k].permute(1, 2, 0).numpy(), targets[k].permute(1, 2, 0).numpy())
                )
    return float(np.concatenate(l1s).mean()), float(np.mean(ssims))


def train_dnet(
    cfg: TrainConfig,
    train_episodes: list[datamod.Episode],
    val_episodes: list[datamod.Episode],
    snet: SpatialNet,
    backbone: BackboneConfig,
) -> TrainResult:
    """Fit the dynamics net on spatial-net-disturbed frame pairs.

    Inputs are preprocessed through the trained spatial net under small
    random velocity perturbations (the disturbance it will see when composed);
    targets remain the real future frames.
    """
    if snet is None:
        raise ValueError("a trained spatial net is required to preprocess pairs")
    triples = datamod.preprocess_dnet_pairs(
        train_episodes, snet, seed=cfg.seed, epsilon=cfg.epsilon_bound
    )
    if not triples:
        raise ValueError("no training triples: dataset has no dynamic episodes")
    val_triples = _subsample(
        datamod.preprocess_dnet_pairs(val_episodes, snet, seed=cfg.seed + 1, epsilon=cfg.epsilon_bound),
        192,
        cfg.seed,
    )
    torch.manual_seed(cfg.seed)
    model = build_dnet(backbone)
    rng = np.random.default_rng(cfg.seed)

    def make_batch(step: int) -> torch.Tensor:
        idx = rng.integers(0, len(triples), cfg.batch_size)
        chosen = [triples[i] for i in idx]
        prev = _img_batch([t.prev for t in chosen])
        cur = _img_batch([t.cur for t in chosen])
        targets = _img_batch([t.target for t in chosen])
        out = dnet_forward(model, prev, cur)
        return (out.predicted - targets).abs().mean()

    def eval_fn():
        return _eval_dnet(model, val_triples)

    return _run_loop(cfg, model, model.parameters(), make_batch, eval_fn)


def _eval_dnet(model: DynamicsNet, val_triples, chunk: int = 64) -> tuple[float, float]:
    if not val_triples:
        return float("nan"), float("nan")
    l1s, ssims = [], []
    for start in range(0, len(val_triples), chunk):
        part = val_triples[start : start + chunk]
        prev = _img_batch([t.prev for t in part])
        cur = _img_batch([t.cur for t in part])
        targets = _img_batch([t.target for t in part])
        pred = dnet_forward(model, prev, cur).predicted
        l1s.append((pred - targets).abs().mean(dim=(1, 2, 3)).numpy())
        if start == 0:
            for k in range(min(16, len(part))):
                ssims.append(
                    ssim(pred[k].permute(1, 2, 0).numpy(), targets[k].permute(1, 2, 0).numpy())
                )
    return float(np.concatenate(l1s).mean()), float(np.mean(ssims))


def save_metrics_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["step", "train_l1", "val_l1", "val_ssim"])
        writer.writeheader()
        writer.writerows(history)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

MODEL_BUILDERS = {
    "snet": lambda cfg: build_snet(BackboneConfig(**cfg)),
    "dnet": lambda cfg: build_dnet(BackboneConfig(**cfg)),
}


def register_model_kind(kind: str, builder) -> None:
    MODEL_BUILDERS[kind] = builder


def _model_config_dict(model) -> dict:
    if isinstance(model.config, BackboneConfig):
        return asdict(model.config)
    return dict(model.config)


def save_checkpoint(model, path, metadata: dict | None = None) -> Path:
    """Write a checkpoint directory atomically (build aside, then rename)."""
    path = Path(path)
    tmp = Path(tempfile.mkdtemp(prefix=path.name + ".", dir=path.parent or "."))
    try:
        torch.save(model.state_dict(), tmp / "weights.bin")
        digest = hashlib.sha256((tmp / "weights.bin").read_bytes()).hexdigest()
        manifest = {
            "model_kind": model.MODEL_KIND,
            "config": _model_config_dict(model),
            "weights_file": "weights.bin",
            "sha256": digest,
            "metadata": metadata or {},
        }
        with open(tmp / "manifest.json", "w") as f:
            json.dump(manifest, f, indent=1)
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def read_manifest(path) -> dict:
    with open(Path(path) / "manifest.json") as f:
        return json.load(f)


def load_checkpoint(path, expected_kind: str | None = None, expected_config=None):
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise CheckpointError(f"no checkpoint manifest under {path}")
    manifest = read_manifest(path)
    kind = manifest["model_kind"]
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"checkpoint is a {kind!r} model, expected {expected_kind!r}")
    blob = (path / manifest["weights_file"]).read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["sha256"]:
        raise CheckpointError("weights blob does not match its recorded hash")
    if expected_config is not None:
        expected = asdict(expected_config) if isinstance(expected_config, BackboneConfig) else dict(expected_config)
        if expected != manifest["config"]:
            raise CheckpointError(
                f"architecture mismatch: checkpoint {manifest['config']} vs expected {expected}"
            )
    builder = MODEL_BUILDERS.get(kind)
    if builder is None:
        raise CheckpointError(f"unknown model kind {kind!r}")
    model = builder(manifest["config"])
    state = torch.load(path / manifest["weights_file"], weights_only=True)
    model.load_state_dict(state, strict=True)
    model.eval()
    return model
