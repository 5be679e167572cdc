"""Training loop: Adam with a step lr schedule, checkpointing, resumption.

Loading and batching run in-process from a seeded numpy generator, so a run
is bit-reproducible and its RNG state can be frozen into checkpoints.
Resuming demands an identical config hash (model + train sections) and
restores optimizer moments, epoch counter, and both RNG streams, making an
interrupted run line up with a straight one.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import (RunConfig, TrainConfig, config_hash, save_config, from_dict,
                     to_dict, diff_configs)
from .data import DatasetManifest, load_sample, augment
from .losses import total_loss
from .metrics import mae
from .network import CamoNet, save_checkpoint, load_checkpoint

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries the offending batch."""


class ConfigMismatchError(RuntimeError):
    """Checkpoint was produced under a different model/train config."""


@dataclass
class TrainResult:
    checkpoint: Path       # final checkpoint
    best: Path | None      # best-by-validation-MAE checkpoint, if val given
    history: list          # (step, edge, det1..det4, total, lr) rows
    out_dir: Path


def _load_batch(manifest, indices, cfg: TrainConfig, rng):
    images, masks, edges = [], [], []
    ids = []
    for i in indices:
        sample = load_sample(manifest.pairs[i], cfg.input_size)
        if cfg.augment:
            sample = augment(sample, rng)
        images.append(sample.image)
        masks.append(sample.mask)
        edges.append(sample.edge)
        ids.append(sample.id)
    return torch.stack(images), torch.stack(masks), torch.stack(edges), ids


@torch.no_grad()
def validate_mae(model, manifest, input_size, device="cpu"):
    model.eval()
    scores = []
    for pair in manifest.pairs:
        sample = load_sample(pair, input_size)
        out = model(sample.image[None].to(device))
        pred = out.prediction[0, 0].cpu().numpy()
        scores.append(mae(pred, sample.mask[0].numpy()))
    model.train()
    return float(np.mean(scores))


def _set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def train(manifest: DatasetManifest, config: RunConfig, out_dir, device="cpu",
          val_manifest=None, resume_from=None) -> TrainResult:
    """Run the configured number of epochs and return checkpoint paths.

    ``out_dir`` receives ``config.yaml``, ``loss.csv``, periodic
    ``epoch_NNN.pt`` checkpoints, ``last.pt``, and ``best.pt`` when a
    validation manifest is supplied.
    """
    if len(manifest) == 0:
        raise ValueError("training manifest is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = config.train
    chash = config_hash(config)
    cdict = to_dict(config)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = CamoNet(backbone=config.model.backbone_spec(),
                    mid_channels=config.model.mid_channels,
                    ablation=config.model.ablation).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=ADAM_BETAS,
                                 eps=ADAM_EPS)

    start_epoch = 0
    best_mae = float("inf")
    if resume_from is not None:
        payload = torch.load(resume_from, map_location="cpu", weights_only=False)
        if payload["config_hash"] != chash:
            saved = from_dict(payload.get("config", {}))
            raise ConfigMismatchError(
                "checkpoint config differs from current config:\n  "
                + "\n  ".join(diff_configs(saved, config)))
        load_checkpoint(resume_from, model=model, optimizer=optimizer)
        start_epoch = payload["epoch"]
        best_mae = payload["metrics"].get("best_val_mae", float("inf"))
        if payload["rng"].get("numpy") is not None:
            rng.bit_generator.state = payload["rng"]["numpy"]
        if payload.get("torch_rng") is not None:
            torch.set_rng_state(payload["torch_rng"])
        log.info("resumed from %s at epoch %d", resume_from, start_epoch)

    save_config(config, out_dir / "config.yaml")
    history = []
    best_path = None
    step = start_epoch * ((len(manifest) + cfg.batch_size - 1) // cfg.batch_size)
    mode = "a" if resume_from is not None and (out_dir / "loss.csv").exists() else "w"
    with open(out_dir / "loss.csv", mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["step", "edge", "det1", "det2", "det3", "det4",
                             "total", "lr"])
        model.train()
        for epoch in range(start_epoch, cfg.epochs):
            lr = cfg.learning_rate_at(epoch)
            _set_lr(optimizer, lr)
            order = rng.permutation(len(manifest))
            for b in range(0, len(order), cfg.batch_size):
                indices = order[b:b + cfg.batch_size]
                images, masks, edges, ids = _load_batch(manifest, indices, cfg, rng)
                images, masks, edges = (t.to(device) for t in (images, masks, edges))
                optimizer.zero_grad()
                outputs = model(images)
                breakdown = total_loss(outputs, masks, edges)
                if not torch.isfinite(breakdown.total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {b // cfg.batch_size}, "
                        f"images {ids}: edge={breakdown.edge}, "
                        f"sides={breakdown.det_per_side}")
                breakdown.total.backward()
                optimizer.step()
                row = (step, breakdown.edge, *breakdown.det_per_side,
                       float(breakdown.total.detach()), lr)
                history.append(row)
                writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
                step += 1
            fh.flush()

            is_last = epoch == cfg.epochs - 1
            if is_last or (epoch + 1) % cfg.checkpoint_every == 0:
                metrics = {"last_total": history[-1][6] if history else None}
                if val_manifest is not None:
                    val = validate_mae(model, val_manifest, cfg.input_size, device)
                    metrics["val_mae"] = val
                    if val < best_mae:
                        best_mae = val
                        metrics["best_val_mae"] = best_mae
                        best_path = out_dir / "best.pt"
                        save_checkpoint(best_path, model, optimizer, epoch + 1, chash,
                                        metrics, rng={"numpy": rng.bit_generator.state},
                                        config_dict=cdict)
                metrics["best_val_mae"] = best_mae
                path = out_dir / f"epoch_{epoch + 1:03d}.pt"
                save_checkpoint(path, model, optimizer, epoch + 1, chash, metrics,
                                rng={"numpy": rng.bit_generator.state}, config_dict=cdict)
                log.info("epoch %d: total %.4f, lr %.2e -> %s", epoch + 1,
                         history[-1][6], lr, path)

    last = out_dir / "last.pt"
    save_checkpoint(last, model, optimizer, cfg.epochs, chash,
                    {"best_val_mae": best_mae},
                    rng={"numpy": rng.bit_generator.state}, config_dict=cdict)
    return TrainResult(checkpoint=last, best=best_path, history=history, out_dir=out_dir)
