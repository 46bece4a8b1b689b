"""Low-rank adapters injected into every linear projection of a frozen model.

W' x = W x + (alpha / rank) * B A x with A ~ N(0, 0.02), B = 0, so training
starts at the base model's function exactly. Covers torch.nn.Linear and the
transposed Conv1D projection transformers uses in GPT-2-style blocks.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import nn

ADAPTER_STATE_FILE = "adapter_state.pt"
ADAPTER_CONFIG_FILE = "adapter_config.json"


def _is_conv1d(module: nn.Module) -> bool:
    return type(module).__name__ == "Conv1D"


class LoraAdapter(nn.Module):
    """Wraps one frozen projection module and adds the low-rank update."""

    def __init__(self, base: nn.Module, rank: int, alpha: float):
        super().__init__()
        if isinstance(base, nn.Linear):
            in_features, out_features = base.in_features, base.out_features
        elif _is_conv1d(base):
            # transformers Conv1D stores weight as (in, out)
            in_features, out_features = base.weight.shape
        else:
            raise TypeError(f"unsupported module for adaptation: {type(base).__name__}")
        self.base = base
        self.rank = rank
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.randn(rank, in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))

    def forward(self, x):
        update = (x @ self.lora_a.transpose(0, 1)) @ self.lora_b.transpose(0, 1)
        return self.base(x) + self.scaling * update


def inject_adapters(model: nn.Module, rank: int, alpha: float) -> list[str]:
    """Freeze the model and wrap every Linear/Conv1D leaf; returns the
    qualified names that were adapted."""
    for param in model.parameters():
        param.requires_grad = False
    adapted: list[str] = []

    def walk(parent: nn.Module, prefix: str):
        for name, child in list(parent.named_children()):
            qualified = f"{prefix}.{name}" if prefix else name
            if isinstance(child, LoraAdapter):
                continue
            if isinstance(child, nn.Linear) or _is_conv1d(child):
                setattr(parent, name, LoraAdapter(child, rank, alpha))
                adapted.append(qualified)
            else:
                walk(child, qualified)

    walk(model, "")
    if not adapted:
        raise ValueError("model has no Linear/Conv1D modules to adapt")
    return adapted


def adapter_parameters(model: nn.Module):
    for module in model.modules():
        if isinstance(module, LoraAdapter):
            yield module.lora_a
            yield module.lora_b


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    state = {}
    for name, module in model.named_modules():
        if isinstance(module, LoraAdapter):
            state[f"{name}.lora_a"] = module.lora_a.detach().clone()
            state[f"{name}.lora_b"] = module.lora_b.detach().clone()
    return state


def update_norm(before: dict[str, torch.Tensor], after: dict[str, torch.Tensor]) -> float:
    """L2 norm of the adapter parameter change across all modules."""
    total = 0.0
    for key in before:
        total += float(torch.sum((after[key] - before[key]) ** 2))
    return total ** 0.5


def save_adapter(model: nn.Module, out_dir: str | Path, config: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), out_dir / ADAPTER_STATE_FILE)
    (out_dir / ADAPTER_CONFIG_FILE).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out_dir


def load_adapter_state(adapter_dir: str | Path) -> dict[str, torch.Tensor]:
    return torch.load(Path(adapter_dir) / ADAPTER_STATE_FILE, weights_only=True)
