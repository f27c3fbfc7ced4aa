from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, ClassVar

import pandas as pd
from pydantic import BaseModel
from torch import nn

INIT_STD = 0.02

_REGISTRY: dict[str, type["TrainableModule"]] = {}


@dataclass(frozen=True)
class TensorSpec:
    shape: tuple[int, ...]
    role: str = ""

    def __post_init__(self) -> None:
        if any(int(d) < 1 for d in self.shape):
            raise ValueError(f"TensorSpec dims must be >= 1, got {self.shape}")


def config_hash(kind: str, config: dict[str, Any]) -> str:
    """sha256 over the canonical (sorted, compact) JSON of kind + config."""
    blob = json.dumps({"kind": kind, "config": config}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class TrainableModule(nn.Module):
    """
    nn.Module with a pydantic config, a registry `kind` and a stable config hash.

    Subclasses set `kind` and `config_cls`; load_checkpoint rebuilds them
    from the stored config through the registry.
    """

    kind: ClassVar[str] = ""
    config_cls: ClassVar[type[BaseModel]]

    def __init_subclass__(cls, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        if cls.kind:
            if cls.kind in _REGISTRY and _REGISTRY[cls.kind] is not cls:
                raise TypeError(f"duplicate TrainableModule kind: {cls.kind}")
            _REGISTRY[cls.kind] = cls

    def __init__(self, config: BaseModel) -> None:
        super().__init__()
        self.config = config

    def config_dict(self) -> dict[str, Any]:
        return self.config.model_dump(mode="json")

    def config_hash(self) -> str:
        return config_hash(self.kind, self.config_dict())

    def num_parameters(self) -> int:
        return count_parameters(self)


def registered_kinds() -> list[str]:
    return sorted(_REGISTRY)


def build_module(kind: str, config: dict[str, Any]) -> TrainableModule:
    cls = _REGISTRY.get(kind)
    if cls is None:
        raise KeyError(f"unknown module kind: {kind} (known: {registered_kinds()})")
    return cls(cls.config_cls.model_validate(config))


def init_weights(module: nn.Module) -> None:
    """Truncated-normal (std 0.02, +-2 std) for linear/conv/embedding weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv1d, nn.Conv2d, nn.Embedding)):
            nn.init.trunc_normal_(m.weight, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
            if getattr(m, "bias", None) is not None:
                nn.init.zeros_(m.bias)


def zero_init(layer: nn.Module) -> nn.Module:
    for p in layer.parameters():
        nn.init.zeros_(p)
    return layer


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def parameter_table(modules: dict[str, nn.Module | None]) -> pd.DataFrame:
    """Model-size report: one row per component plus a total row."""
    rows = [
        {"component": name, "parameters": count_parameters(m) if m is not None else 0}
        for name, m in modules.items()
    ]
    rows.append({"component": "total", "parameters": sum(r["parameters"] for r in rows)})
    return pd.DataFrame(rows, columns=["component", "parameters"])
