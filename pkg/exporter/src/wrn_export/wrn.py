"""Wide residual network (depth 28, widen factor 10) with optional spectral
normalization on every conv and linear weight.

Pre-activation basic blocks; the penultimate embedding is the global-average
pooled activation entering the classifier (640-d for widen factor 10).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm


def _maybe_sn(module: nn.Module, enabled: bool) -> nn.Module:
    return spectral_norm(module) if enabled else module


class PreActBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int, sn: bool):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(c_in)
        self.conv1 = _maybe_sn(nn.Conv2d(c_in, c_out, 3, stride=stride,
                                         padding=1, bias=False), sn)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.conv2 = _maybe_sn(nn.Conv2d(c_out, c_out, 3, stride=1,
                                         padding=1, bias=False), sn)
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = _maybe_sn(nn.Conv2d(c_in, c_out, 1, stride=stride,
                                                bias=False), sn)

    def forward(self, x):
        out = F.relu(self.bn1(x))
        skip = self.shortcut(out) if self.shortcut is not None else x
        out = self.conv1(out)
        out = self.conv2(F.relu(self.bn2(out)))
        return out + skip


class WideResNet(nn.Module):
    """WRN-d-k: depth d = 6n + 4, widths (16, 16k, 32k, 64k)."""

    def __init__(self, depth: int = 28, widen: int = 10, num_classes: int = 10,
                 sn: bool = True):
        super().__init__()
        if (depth - 4) % 6 != 0:
            raise ValueError(f"depth must be 6n + 4, got {depth}")
        n = (depth - 4) // 6
        widths = [16, 16 * widen, 32 * widen, 64 * widen]
        self.feature_dim = widths[3]
        self.sn = sn
        self.conv0 = _maybe_sn(nn.Conv2d(3, widths[0], 3, padding=1,
                                         bias=False), sn)
        groups = []
        c_in = widths[0]
        for gi, width in enumerate(widths[1:]):
            stride = 1 if gi == 0 else 2
            blocks = [PreActBlock(c_in, width, stride, sn)]
            blocks += [PreActBlock(width, width, 1, sn) for _ in range(n - 1)]
            groups.append(nn.Sequential(*blocks))
            c_in = width
        self.groups = nn.Sequential(*groups)
        self.bn_out = nn.BatchNorm2d(widths[3])
        self.fc = _maybe_sn(nn.Linear(widths[3], num_classes), sn)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate embedding: globally pooled pre-classifier activations."""
        out = self.conv0(x)
        out = self.groups(out)
        out = F.relu(self.bn_out(out))
        return out.mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        feats = self.features(x)
        return feats, self.fc(feats)


def save_checkpoint(model: WideResNet, path, meta: dict | None = None) -> None:
    torch.save({"state_dict": model.state_dict(),
                "feature_dim": model.feature_dim,
                "sn": model.sn,
                "meta": meta or {}}, path)


def load_checkpoint(path, depth: int = 28, widen: int = 10,
                    num_classes: int = 10) -> WideResNet:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = WideResNet(depth=depth, widen=widen, num_classes=num_classes,
                       sn=bool(payload.get("sn", False)))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
