"""Supervision targets built from class labels or from proposal/ground-truth boxes.

No relation annotations are needed: box targets come from class labels plus
IoU matching alone.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .affinity import TargetMatrix
from .errors import DegenerateTargetError, IngestionError

DEFAULT_IOU_THRESH = 0.5


class PairMode(str, enum.Enum):
    DIFFERENT_CATEGORY = "different_category"
    DIFFERENT_INSTANCE = "different_instance"


@dataclass(frozen=True)
class LabeledBox:
    x0: float
    y0: float
    x1: float
    y1: float
    class_id: int = 0
    instance_id: int = 0

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "instance_id", int(self.instance_id))
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"box must have positive width and height: {self}")

    @property
    def coords(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def iou(a: LabeledBox, b: LabeledBox) -> float:
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


def box_array(boxes: Sequence[LabeledBox]) -> np.ndarray:
    return np.array([b.coords for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(a: Sequence[LabeledBox], b: Sequence[LabeledBox]) -> np.ndarray:
    return kernels.pairwise_iou(box_array(a), box_array(b))


def target_same_class(labels) -> TargetMatrix:
    """Pairs of distinct batch entries sharing a label."""
    lab = np.asarray(labels).reshape(-1)
    return TargetMatrix((lab[:, None] == lab[None, :]).astype(np.uint8))


def match_proposals(
    proposals: Sequence[LabeledBox],
    gt: Sequence[LabeledBox],
    iou_thresh: float = DEFAULT_IOU_THRESH,
) -> np.ndarray:
    """Index of the best ground truth per proposal, or -1 when none clears ``iou_thresh``.

    Ties go to the lowest ground-truth index.
    """
    if not len(gt):
        return np.full(len(proposals), -1, dtype=np.int64)
    ious = iou_matrix(proposals, gt)
    best = ious.argmax(axis=1)
    ok = ious[np.arange(len(proposals)), best] > iou_thresh
    return np.where(ok, best, -1).astype(np.int64)


def target_from_boxes(
    proposals: Sequence[LabeledBox],
    gt: Sequence[LabeledBox],
    mode: PairMode | str = PairMode.DIFFERENT_CATEGORY,
    iou_thresh: float = DEFAULT_IOU_THRESH,
) -> TargetMatrix:
    """Proposal pairs whose matched ground-truth objects differ (and, by default, differ in class)."""
    mode = PairMode(mode)
    if not len(proposals):
        raise DegenerateTargetError("no proposals to build a target from")
    if not 0 < iou_thresh < 1:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    match = match_proposals(proposals, gt, iou_thresh)
    matched = match >= 0
    both = matched[:, None] & matched[None, :]
    diff_obj = match[:, None] != match[None, :]
    t = both & diff_obj
    if mode is PairMode.DIFFERENT_CATEGORY:
        cls = np.array([g.class_id for g in gt], dtype=np.int64)
        pc = np.where(matched, cls[np.maximum(match, 0)], -1)
        t &= pc[:, None] != pc[None, :]
    return TargetMatrix(t.astype(np.uint8))


def target_from_pairs(n: int, pairs: Iterable[tuple[int, int]], symmetric: bool = True) -> TargetMatrix:
    """Target from an explicit relation list, e.g. annotated relations."""
    t = np.zeros((n, n), dtype=np.uint8)
    for i, j in pairs:
        t[i, j] = 1
        if symmetric:
            t[j, i] = 1
    return TargetMatrix(t)


# scene files: one box per line, "kind class_id instance_id x0 y0 x1 y1", kind in {P, G}


def write_scene(path, proposals: Sequence[LabeledBox], gt: Sequence[LabeledBox]) -> None:
    lines = []
    for kind, boxes in (("G", gt), ("P", proposals)):
        for b in boxes:
            lines.append(f"{kind} {b.class_id} {b.instance_id} {b.x0!r} {b.y0!r} {b.x1!r} {b.y1!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scene(path) -> tuple[list[LabeledBox], list[LabeledBox]]:
    """Parse a scene file into ``(proposals, ground_truth)``."""
    proposals: list[LabeledBox] = []
    gt: list[LabeledBox] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7 or parts[0] not in ("P", "G"):
            raise IngestionError(f"{path}:{lineno}: malformed box line {line!r}")
        try:
            box = LabeledBox(*map(float, parts[3:]), class_id=int(parts[1]), instance_id=int(parts[2]))
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
        (proposals if parts[0] == "P" else gt).append(box)
    return proposals, gt
