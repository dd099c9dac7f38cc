"""Datasets: Gaussian clusters, synthetic relation scenes, and CIFAR-10 binary batches."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IngestionError
from ..numerics import make_rng
from ..targets import LabeledBox, match_proposals, target_from_boxes

CIFAR_RECORD = 1 + 3072
CIFAR_PER_FILE = 10000
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    image_shape: tuple[int, ...] | None = None

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes, self.image_shape)


def gen_gaussian_clusters(num_classes, per_class, dim, spread, seed, separation=3.0, dtype=np.float32) -> Dataset:
    """Isotropic Gaussian blobs around random class means at radius ``separation``."""
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    rng = make_rng(seed)
    means = rng.standard_normal((num_classes, dim))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    y = np.repeat(np.arange(num_classes), per_class)
    x = means[y] + spread * rng.standard_normal((len(y), dim))
    order = rng.permutation(len(y))
    return Dataset(x[order].astype(dtype), y[order].astype(np.int64), num_classes)


def split_validation(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split into ``(train, validation)``."""
    rng = make_rng(seed)
    order = rng.permutation(len(ds))
    n_val = int(round(len(ds) * fraction))
    return ds.subset(np.sort(order[n_val:])), ds.subset(np.sort(order[:n_val]))


@dataclass
class Scene:
    proposals: list[LabeledBox]
    gt: list[LabeledBox]
    features: np.ndarray
    labels: np.ndarray
    match: np.ndarray
    target: np.ndarray
    relations: list[tuple[int, int]] = field(default_factory=list)


def _jitter_box(rng, box: LabeledBox, jitter: float) -> LabeledBox:
    w, h = box.x1 - box.x0, box.y1 - box.y0
    if jitter == 0:
        return LabeledBox(*box.coords, class_id=box.class_id, instance_id=box.instance_id)
    while True:
        d = rng.normal(0.0, jitter, size=4) * np.array([w, h, w, h])
        x0, y0, x1, y1 = np.array(box.coords) + d
        if x1 - x0 > 1e-3 and y1 - y0 > 1e-3:
            return LabeledBox(x0, y0, x1, y1, box.class_id, box.instance_id)


def gen_relation_scenes(
    num_scenes,
    objects_per_scene,
    classes,
    jitter,
    seed,
    proposals_per_object=2,
    proposals_per_scene=None,
    feature_dim=16,
    noise=0.5,
    canvas=100.0,
    dtype=np.float32,
) -> list[Scene]:
    """Synthetic scenes with ground-truth objects, jittered proposals, and class-correlated features.

    Each object spawns ``proposals_per_object`` jittered copies; the rest up to
    ``proposals_per_scene`` are random background boxes. Proposal labels come
    from IoU matching (``classes`` marks background). Relations are all pairs of
    objects with different classes.
    """
    if objects_per_scene < 2:
        raise ValueError("need at least two objects per scene")
    rng = make_rng(seed)
    prototypes = rng.standard_normal((classes + 1, feature_dim))
    total = proposals_per_scene or objects_per_scene * proposals_per_object
    scenes = []
    for _ in range(num_scenes):
        gt = []
        for inst in range(objects_per_scene):
            w, h = rng.uniform(10.0, 30.0, size=2)
            x0 = rng.uniform(0.0, canvas - w)
            y0 = rng.uniform(0.0, canvas - h)
            gt.append(LabeledBox(x0, y0, x0 + w, y0 + h, int(rng.integers(classes)), inst))
        props = [_jitter_box(rng, g, jitter) for g in gt for _ in range(proposals_per_object)]
        while len(props) < total:
            w, h = rng.uniform(5.0, 30.0, size=2)
            x0 = rng.uniform(0.0, canvas - w)
            y0 = rng.uniform(0.0, canvas - h)
            props.append(LabeledBox(x0, y0, x0 + w, y0 + h, classes, -1))
        order = rng.permutation(len(props))
        props = [props[i] for i in order]
        match = match_proposals(props, gt)
        labels = np.array([gt[m].class_id if m >= 0 else classes for m in match], dtype=np.int64)
        feats = prototypes[labels] + noise * rng.standard_normal((len(props), feature_dim))
        target = target_from_boxes(props, gt).entries
        relations = [
            (a, b) for a, b in itertools.combinations(range(len(gt)), 2) if gt[a].class_id != gt[b].class_id
        ]
        scenes.append(Scene(props, gt, feats.astype(dtype), labels, match, target, relations))
    return scenes


def _read_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    if len(raw) != CIFAR_RECORD * CIFAR_PER_FILE:
        raise IngestionError(
            f"{path}: expected {CIFAR_RECORD * CIFAR_PER_FILE} bytes, found {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(CIFAR_PER_FILE, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise IngestionError(f"{path}: label byte out of range")
    return rec[:, 1:].reshape(-1, 3, 32, 32).copy(), labels


def load_cifar10(directory, split="train", per_class=None, seed=0):
    """Images ``(N, 3, 32, 32)`` uint8 and labels from the CIFAR-10 binary batches.

    ``per_class`` keeps a seeded subsample of that many images per class.
    Every file is checked before anything is returned.
    """
    directory = Path(directory)
    names = CIFAR_TRAIN_FILES if split == "train" else (CIFAR_TEST_FILE,)
    parts = [_read_cifar_file(directory / n) for n in names]
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    if per_class:
        rng = make_rng(seed)
        keep = []
        for c in range(10):
            idx = np.flatnonzero(labels == c)
            keep.append(rng.choice(idx, size=min(per_class, len(idx)), replace=False))
        keep = np.sort(np.concatenate(keep))
        images, labels = images[keep], labels[keep]
    return images, labels


def cifar_dataset(images: np.ndarray, labels: np.ndarray, dtype=np.float32) -> Dataset:
    x = (images.astype(dtype) / 255.0 - 0.5) / 0.25
    return Dataset(x.reshape(len(x), -1), labels, 10, image_shape=(3, 32, 32))


def hflip(images: np.ndarray) -> np.ndarray:
    """Mirror ``(N, C, H, W)`` images left-right."""
    return images[..., ::-1].copy()


def pad_crop(images: np.ndarray, rng, pad: int = 4) -> np.ndarray:
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oy = rng.integers(0, 2 * pad + 1, size=n)
    ox = rng.integers(0, 2 * pad + 1, size=n)
    out = np.empty_like(images)
    for i in range(n):
        out[i] = padded[i, :, oy[i] : oy[i] + h, ox[i] : ox[i] + w]
    return out


def augment(x: np.ndarray, image_shape, rng) -> np.ndarray:
    """Random horizontal flip followed by 4-pixel pad and random crop."""
    imgs = x.reshape(len(x), *image_shape)
    flip = rng.random(len(x)) < 0.5
    imgs = np.where(flip[:, None, None, None], imgs[..., ::-1], imgs)
    return pad_crop(imgs, rng).reshape(len(x), -1)
