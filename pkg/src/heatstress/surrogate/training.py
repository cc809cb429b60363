"""Training loop, masked MSE loss and finite-difference gradient check."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import torch

from .network import UTCINet


class TrainingDiverged(FloatingPointError):
    """Raised when a batch loss is not finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch index {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    err = (pred - target) ** 2
    if mask is None:
        return err.mean()
    return (err * mask).sum() / mask.sum().clamp_min(1.0)


def _forward(model, batch, idx=None):
    pick = (lambda t: t) if idx is None else (lambda t: t[idx])
    return model(pick(batch["ndsm"]), pick(batch["landcover"]), pick(batch["met"]))


def train(model: UTCINet, data: dict, hyper: TrainHyper = TrainHyper()) -> list[float]:
    """AdamW on the masked MSE; returns the per-epoch mean training loss.

    ``data`` holds full-dataset tensors from ``TileNormalizer.transform``.
    Batches are drawn from a seeded permutation each epoch, so identical
    seeds give identical loss histories and parameters.
    """
    n = data["ndsm"].shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if hyper.epochs <= 0:
        return []
    gen = torch.Generator().manual_seed(hyper.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=hyper.lr, weight_decay=hyper.weight_decay)
    bs = max(1, min(hyper.batch_size, n))
    history = []
    model.train()
    for epoch in range(hyper.epochs):
        order = torch.randperm(n, generator=gen)
        total, weight = 0.0, 0
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            opt.zero_grad(set_to_none=True)
            loss = masked_mse(_forward(model, data, idx), data["target"][idx],
                              data["mask"][idx])
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDiverged(epoch + 1, b, value)
            loss.backward()
            opt.step()
            total += value * len(idx)
            weight += len(idx)
        history.append(total / weight)
    model.eval()
    return history


def dataset_loss(model: UTCINet, data: dict) -> float:
    model.eval()
    with torch.no_grad():
        return float(masked_mse(_forward(model, data), data["target"], data["mask"]))


def _pick_entries(groups: dict, n_params: int, rng: np.random.Generator):
    """At least one entry from every tensor, ``n_params`` in total when possible."""
    tensors = [(g, name, p) for g, items in groups.items() for name, p in items]
    quota = [1] * len(tensors)
    remaining = max(0, n_params - len(tensors))
    room = [p.numel() - 1 for _, _, p in tensors]
    while remaining > 0 and any(room):
        for i in range(len(tensors)):
            if remaining and room[i]:
                quota[i] += 1
                room[i] -= 1
                remaining -= 1
    picks = []
    for (g, name, p), q in zip(tensors, quota):
        for k in rng.choice(p.numel(), size=q, replace=False):
            picks.append((g, name, p, int(k)))
    return picks


def gradient_check(model: UTCINet, data: dict, epsilon: float = 1e-4, n_params: int = 200,
                   seed: int = 0, floor: float = 1e-6) -> tuple[float, dict]:
    """Compare autograd gradients with central differences in double precision.

    Returns the maximum relative error ``|a - n| / max(|a|, |n|, floor)`` and
    a per-group breakdown. ``floor`` keeps entries whose true gradient is
    near zero from dividing by round-off.
    """
    m = copy.deepcopy(model).double().eval()
    batch = {k: v.double() for k, v in data.items()}

    def loss_fn():
        return masked_mse(_forward(m, batch), batch["target"], batch.get("mask"))

    m.zero_grad(set_to_none=True)
    loss_fn().backward()
    picks = _pick_entries(m.parameter_groups(), n_params, np.random.default_rng(seed))
    per_group: dict = {}
    worst = 0.0
    with torch.no_grad():
        for g, name, p, k in picks:
            flat = p.data.view(-1)
            analytic = float(p.grad.view(-1)[k]) if p.grad is not None else 0.0
            orig = float(flat[k])
            flat[k] = orig + epsilon
            up = float(loss_fn())
            flat[k] = orig - epsilon
            down = float(loss_fn())
            flat[k] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
            rec = per_group.setdefault(g, {"checked": 0, "max_rel_error": 0.0})
            rec["checked"] += 1
            rec["max_rel_error"] = max(rec["max_rel_error"], err)
    return worst, per_group
