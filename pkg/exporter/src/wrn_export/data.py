"""Dataset split resolution and the fixed export preprocessing.

Split identifiers: ``cifar10-train``, ``cifar10-test``, ``svhn-test``
(torchvision, rooted at the job's data_root), plus ``random:N`` — a seeded
synthetic split of N 32x32 images for pipeline validation without any
dataset on disk.

Export preprocessing is frozen: tensor conversion plus per-channel CIFAR-10
normalization, no augmentation, so re-exports are bit-identical.
"""

from __future__ import annotations

import torch
from torch.utils.data import Dataset
from torchvision import datasets as tvd
from torchvision import transforms

CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)

EXPORT_TRANSFORM = transforms.Compose([
    transforms.ToTensor(),
    transforms.Normalize(CIFAR10_MEAN, CIFAR10_STD),
])

TRAIN_TRANSFORM = transforms.Compose([
    transforms.RandomCrop(32, padding=4),
    transforms.RandomHorizontalFlip(),
    transforms.ToTensor(),
    transforms.Normalize(CIFAR10_MEAN, CIFAR10_STD),
])


class RandomImages(Dataset):
    """Seeded synthetic 32x32 image split with 10-class labels."""

    def __init__(self, count: int, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        self.images = torch.randn(count, 3, 32, 32, generator=gen)
        self.labels = torch.randint(0, 10, (count,), generator=gen)

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, idx):
        return self.images[idx], int(self.labels[idx])


def resolve_split(name: str, data_root: str, train_augmentation: bool = False,
                  download: bool = False):
    """Return (dataset, has_labels) for a split identifier."""
    transform = TRAIN_TRANSFORM if train_augmentation else EXPORT_TRANSFORM
    if name.startswith("random:"):
        return RandomImages(int(name.split(":", 1)[1])), True
    if name == "cifar10-train":
        return tvd.CIFAR10(data_root, train=True, transform=transform,
                           download=download), True
    if name == "cifar10-test":
        return tvd.CIFAR10(data_root, train=False, transform=transform,
                           download=download), True
    if name == "svhn-test":
        return tvd.SVHN(data_root, split="test", transform=transform,
                        download=download), False
    raise ValueError(f"unknown split {name!r}")
