from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import numpy as np
import torch
from torch import nn
from torch.optim.lr_scheduler import ExponentialLR

from app.core.errors import NonFiniteLoss
from app.core.schemas.training import OptimizerConfig

logger = logging.getLogger(__name__)

LossFn = Callable[[nn.Module, Any], torch.Tensor]


def build_optimizer(params: Iterable[nn.Parameter], cfg: OptimizerConfig) -> torch.optim.Optimizer:
    params = [p for p in params if p.requires_grad]
    if cfg.kind == "adamw":
        return torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    return torch.optim.Adam(params, lr=cfg.learning_rate)


@dataclass
class OptimizerState:
    optimizer: torch.optim.Optimizer
    scheduler: ExponentialLR | None = None
    grad_clip: float | None = None
    step: int = 0
    epoch: int = 0

    @classmethod
    def create(cls, params: Iterable[nn.Parameter], cfg: OptimizerConfig) -> "OptimizerState":
        opt = build_optimizer(params, cfg)
        sched = ExponentialLR(opt, gamma=cfg.decay_gamma) if cfg.decay_gamma is not None else None
        return cls(optimizer=opt, scheduler=sched, grad_clip=cfg.grad_clip)

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def end_epoch(self) -> None:
        if self.scheduler is not None:
            self.scheduler.step()
        self.epoch += 1


def _params_of(optimizer: torch.optim.Optimizer) -> list[torch.Tensor]:
    return [p for group in optimizer.param_groups for p in group["params"]]


def train_step(
    module: nn.Module,
    batch: Any,
    loss_fn: LossFn,
    state: OptimizerState,
) -> tuple[float, OptimizerState]:
    """One optimisation step. Raises NonFiniteLoss before touching parameters."""
    module.train()
    state.optimizer.zero_grad(set_to_none=True)
    loss = loss_fn(module, batch)
    value = float(loss.detach())
    if not np.isfinite(value):
        raise NonFiniteLoss(
            f"non-finite loss {value} at step {state.step} (epoch {state.epoch}, lr {state.lr:g})"
        )
    loss.backward()
    if state.grad_clip is not None:
        nn.utils.clip_grad_norm_(_params_of(state.optimizer), state.grad_clip)
    state.optimizer.step()
    state.step += 1
    return value, state


def _to_double(obj: Any) -> Any:
    if isinstance(obj, torch.Tensor):
        return obj.double() if obj.is_floating_point() else obj
    if isinstance(obj, dict):
        return {k: _to_double(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_to_double(v) for v in obj)
    return obj


def gradient_check(
    module: nn.Module,
    loss_fn: LossFn,
    batch: Any,
    *,
    n_coords: int = 10,
    eps: float = 1e-6,
    seed: int = 0,
) -> float:
    """
    Max relative error between autograd and central finite differences on
    `n_coords` random parameter coordinates. Runs on a float64 eval-mode copy.
    """
    twin = copy.deepcopy(module).double().eval()
    batch = _to_double(batch)
    params = [p for p in twin.parameters() if p.requires_grad]
    if not params:
        return 0.0

    twin.zero_grad(set_to_none=True)
    loss_fn(twin, batch).backward()
    analytic = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    with torch.no_grad():
        for idx in flat_idx:
            which = int(np.searchsorted(bounds, idx, side="right"))
            local = int(idx - (bounds[which - 1] if which else 0))
            flat = params[which].view(-1)
            orig = flat[local].item()

            flat[local] = orig + eps
            up = float(loss_fn(twin, batch))
            flat[local] = orig - eps
            down = float(loss_fn(twin, batch))
            flat[local] = orig

            numeric = (up - down) / (2 * eps)
            exact = float(analytic[which].view(-1)[local])
            denom = max(abs(exact), abs(numeric), 1e-6)
            worst = max(worst, abs(exact - numeric) / denom)
    logger.debug("finite-difference gradient check: %d coords, max rel err %.3e", len(flat_idx), worst)
    return worst
