"""Batched extraction of penultimate embeddings into IPFF files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import CIFAR10_MEAN, CIFAR10_STD, resolve_split
from .ipff import write_ipff
from .jobfile import ExportJob
from .wrn import WideResNet, load_checkpoint

EXPECTED_FEATURE_DIM = 640


@torch.no_grad()
def extract_features(model: WideResNet, dataset, batch_size: int,
                     device: str = "cpu") -> tuple[np.ndarray, np.ndarray]:
    """Run the frozen model over a dataset; returns (features, labels)."""
    model.eval()
    model.to(device)
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False,
                        num_workers=0)
    feats, labels = [], []
    for images, targets in loader:
        out = model.features(images.to(device))
        feats.append(out.cpu().numpy().astype(np.float32))
        labels.append(np.asarray(targets, dtype=np.int32))
    return np.concatenate(feats, axis=0), np.concatenate(labels, axis=0)


def export_features(job: ExportJob, model: WideResNet | None = None,
                    datasets: dict | None = None) -> list[Path]:
    """Write one IPFF file per requested split, plus a manifest.

    ``model``/``datasets`` overrides exist for validation runs; normally the
    checkpoint and split identifiers resolve them.
    """
    if model is None:
        model = load_checkpoint(job.checkpoint, depth=job.depth, widen=job.widen)
    if model.feature_dim != EXPECTED_FEATURE_DIM:
        raise ValueError(
            f"feature width {model.feature_dim} != {EXPECTED_FEATURE_DIM}; "
            "the exporter is pinned to WRN-28-10 embeddings")
    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    manifest_lines = [
        f"model=wrn-{job.depth}-{job.widen}",
        f"checkpoint={job.checkpoint}",
        f"spectral_normalization={model.sn}",
        f"preprocessing=cifar10-normalize mean={CIFAR10_MEAN} std={CIFAR10_STD}, "
        "no augmentation",
        f"feature_dim={model.feature_dim}",
    ]
    if not model.sn:
        manifest_lines.append(
            "warning=checkpoint trained without spectral normalization; "
            "results not comparable to the SN pipeline")
    for split in job.splits:
        if datasets is not None and split in datasets:
            dataset, has_labels = datasets[split]
        else:
            dataset, has_labels = resolve_split(split, job.data_root)
        feats, labels = extract_features(model, dataset, job.batch_size,
                                         job.device)
        path = out_dir / f"{split.replace(':', '_')}.ipff"
        write_ipff(path, feats, labels if has_labels else None)
        written.append(path)
        manifest_lines.append(f"split={split} rows={feats.shape[0]} "
                              f"dim={feats.shape[1]} file={path.name}")
    manifest = out_dir / "export.manifest.txt"
    manifest.write_text("\n".join(manifest_lines) + "\n")
    written.append(manifest)
    return written
