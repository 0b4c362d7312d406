"""Point-supervised training of the dual-encoder field model."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .field import QueryBatch
from .geometry import ProjectionSet, Volume, load_projections, load_volume, trilinear_sample
from .model import ConfigError, DualEncoderModel, ModelConfig, build_model
from .optim import AdamState, adam_step, cosine_annealing_lr
from .tensor import NonFiniteError, Tensor

LOSS_COLUMNS = ("step", "epoch", "lr", "loss")
CHECKPOINT_NAME = "checkpoint.json"
LOG_NAME = "loss.csv"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 2e-4
    batch_size: int = 1
    points_per_volume: int = 4096
    seed: int = 0
    checkpoint_every: int = 50
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", "epochs")
        for key in ("batch_size", "points_per_volume", "checkpoint_every"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive", key)
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ConfigError("lr must be a finite non-negative number", "lr")

    def to_json(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        if "model" not in d:
            raise ConfigError("train config is missing key 'model'", "model")
        known = {"epochs", "lr", "batch_size", "points_per_volume", "seed", "checkpoint_every", "model"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config key(s): {sorted(unknown)}", sorted(unknown)[0])
        rest = {k: v for k, v in d.items() if k != "model"}
        return cls(model=ModelConfig.from_json(d["model"]), **rest)


class TrainingAborted(RuntimeError):
    pass


@dataclass
class Case:
    case_id: str
    proj: ProjectionSet
    volume: Volume


def list_cases(data_dir) -> list:
    """Case ids in a simulated dataset directory, sorted."""
    data_dir = Path(data_dir)
    ids = sorted(p.name[: -len("_proj.raw")] for p in data_dir.glob("*_proj.raw"))
    if not ids:
        raise FileNotFoundError(f"no projection files (*_proj.raw) in {data_dir}")
    return ids


def case_paths(data_dir, case_id: str) -> tuple:
    data_dir = Path(data_dir)
    return data_dir / f"{case_id}_proj.raw", data_dir / f"{case_id}_vol.raw"


def load_cases(data_dir, need_volume: bool = True) -> list:
    cases = []
    for cid in list_cases(data_dir):
        pp, vp = case_paths(data_dir, cid)
        if need_volume and not vp.exists():
            raise FileNotFoundError(f"ground-truth volume missing for case {cid}: {vp}")
        vol = load_volume(vp) if vp.exists() else None
        cases.append(Case(cid, load_projections(pp), vol))
    geoms = {json.dumps(c.proj.geometry.to_json(), sort_keys=True) for c in cases}
    if len(geoms) > 1:
        raise ValueError("cases in one dataset must share a geometry")
    return cases


def sample_training_points(volume: Volume, n: int, seed) -> QueryBatch:
    """Uniform world points in the volume's bounding box with trilinear targets."""
    if n < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    lo, hi = volume.bbox()
    pts = lo + rng.random((n, 3)) * (hi - lo)
    return QueryBatch(pts, trilinear_sample(volume, pts))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = T.as_tensor(target, dtype=pred.dtype) if not isinstance(target, Tensor) else target
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ in length")
    d = pred - target
    return T.mean(d * d)


def _step_loss(model: DualEncoderModel, images: np.ndarray, batch: QueryBatch, geometry) -> Tensor:
    feats = [model.encode_view(Tensor(img[None])) for img in images]
    pred = model.predict(batch.points, feats, geometry)
    return mse_loss(pred, batch.targets.astype(pred.dtype))


def _write_log_row(fh, row) -> None:
    fh.write(",".join(str(x) for x in row) + "\n")
    fh.flush()


def train(data_dir, config: TrainConfig, out_dir, log=None) -> dict:
    """Train on every case under ``data_dir``; writes ``loss.csv`` and ``checkpoint.json/.bin``.

    Returns a summary dict. Non-finite losses or gradients abort the run and
    leave the most recent checkpoint untouched.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = load_cases(data_dir)
    geometry = cases[0].proj.geometry
    det = geometry.det_pixels[0]
    with threadpool_limits(limits=1):
        model = build_model(config.model, det, config.seed)
        prepared = [model.prepare_images(c.proj.images) for c in cases]
        params = model.parameters()
        ckpt = out_dir / CHECKPOINT_NAME
        extra = {"model_config": config.model.to_json(), "det_size": det, "train_config": config.to_json()}

        steps_per_epoch = math.ceil(len(cases) / config.batch_size)
        total = config.epochs * steps_per_epoch
        save_checkpoint(params, ckpt, dict(extra, step=0))
        state = AdamState()
        order_rng = np.random.default_rng([config.seed, 1])
        epoch_losses = []
        step = 0
        with open(out_dir / LOG_NAME, "w") as fh:
            _write_log_row(fh, LOSS_COLUMNS)
            for epoch in range(config.epochs):
                order = order_rng.permutation(len(cases))
                losses = []
                for b0 in range(0, len(order), config.batch_size):
                    members = order[b0:b0 + config.batch_size]
                    lr = cosine_annealing_lr(step, total, config.lr)
                    model.zero_grad()
                    loss_sum = 0.0
                    for i in members:
                        batch = sample_training_points(cases[i].volume, config.points_per_volume,
                                                       [config.seed, 2, step, int(i)])
                        loss = _step_loss(model, prepared[i], batch, geometry) * (1.0 / len(members))
                        value = loss.item()
                        if not math.isfinite(value):
                            raise TrainingAborted(f"non-finite loss at step {step}; kept checkpoint {ckpt}")
                        loss.backward()
                        loss_sum += value
                    try:
                        adam_step(params, [p.grad for p in params], state, lr)
                    except NonFiniteError as exc:
                        raise TrainingAborted(f"{exc} at step {step}; kept checkpoint {ckpt}") from exc
                    step += 1
                    losses.append(loss_sum)
                    _write_log_row(fh, (step, epoch, repr(lr), repr(loss_sum)))
                epoch_losses.append(float(np.mean(losses)))
                if log:
                    log(f"epoch {epoch + 1}/{config.epochs} loss {epoch_losses[-1]:.6g}")
                if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
                    save_checkpoint(params, ckpt, dict(extra, step=step))
    return {"steps": step, "epoch_losses": epoch_losses, "checkpoint": str(ckpt),
            "num_parameters": model.num_parameters()}


def model_from_checkpoint(path) -> DualEncoderModel:
    _, manifest = read_checkpoint(path)
    for key in ("model_config", "det_size"):
        if key not in manifest:
            raise ConfigError(f"checkpoint manifest is missing {key!r}", key)
    config = ModelConfig.from_json(manifest["model_config"])
    model = build_model(config, manifest["det_size"], 0)
    load_checkpoint(model.parameters(), path)
    return model


def read_loss_log(path) -> list:
    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
