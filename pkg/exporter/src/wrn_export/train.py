"""SGD training of the wide residual network on CIFAR-10.

Defaults follow the full-scale recipe (350 epochs, lr 0.01 with cosine
decay, momentum 0.9, batch 1024, spectral normalization on). The full run
needs accelerator hours; the loop itself is exercised at desk scale by the
tests through the dataset override.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from .data import resolve_split
from .jobfile import TrainJob
from .wrn import WideResNet, save_checkpoint


def train_wrn(job: TrainJob, dataset=None, epoch_callback=None) -> WideResNet:
    """Train and checkpoint a WRN; returns the trained model.

    ``dataset`` overrides the CIFAR-10 train split (used by smoke tests).
    Raises RuntimeError on divergence (non-finite loss).
    """
    torch.manual_seed(job.seed)
    if dataset is None:
        dataset, _ = resolve_split("cifar10-train", job.data_root,
                                   train_augmentation=True,
                                   download=job.download)
    model = WideResNet(depth=job.depth, widen=job.widen, sn=job.sn)
    model.to(job.device)
    model.train()
    optimizer = torch.optim.SGD(model.parameters(), lr=job.learning_rate,
                                momentum=job.momentum, nesterov=True,
                                weight_decay=job.weight_decay)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer,
                                                           T_max=job.epochs)
    loader = DataLoader(dataset, batch_size=job.batch_size, shuffle=True,
                        num_workers=0,
                        generator=torch.Generator().manual_seed(job.seed))
    for epoch in range(job.epochs):
        running, seen = 0.0, 0
        for images, targets in loader:
            images = images.to(job.device)
            targets = torch.as_tensor(targets).to(job.device)
            optimizer.zero_grad()
            _, logits = model(images)
            loss = F.cross_entropy(logits, targets)
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: non-finite loss")
            loss.backward()
            optimizer.step()
            running += loss.item() * images.shape[0]
            seen += images.shape[0]
        scheduler.step()
        if epoch_callback is not None:
            epoch_callback(epoch, running / max(seen, 1))
    model.eval()
    save_checkpoint(model, job.output_checkpoint,
                    meta={"epochs": job.epochs, "lr": job.learning_rate,
                          "batch_size": job.batch_size, "seed": job.seed,
                          "schedule": "cosine", "sn": job.sn})
    return model


@torch.no_grad()
def evaluate_accuracy(model: WideResNet, dataset, batch_size: int = 512,
                      device: str = "cpu") -> float:
    model.eval()
    model.to(device)
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    hits, total = 0, 0
    for images, targets in loader:
        _, logits = model(images.to(device))
        hits += (logits.argmax(1).cpu() == torch.as_tensor(targets)).sum().item()
        total += images.shape[0]
    return hits / total
