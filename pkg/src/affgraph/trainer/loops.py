"""Training loops for batch-affinity classification and relation attention."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..affinity import AffinityMatrix, affinity_l2, combine_losses, evaluate_mass_loss
from ..errors import DegenerateTargetError
from ..kernels import BACKEND, l2_affinity_backward
from ..metrics import accuracy, scatter_ratio, scene_recall
from ..numerics import spawn_rngs
from ..targets import target_same_class
from .config import ExperimentConfig, Task
from .data import (
    Dataset,
    augment,
    cifar_dataset,
    gen_gaussian_clusters,
    gen_relation_scenes,
    load_cifar10,
    split_validation,
)
from .model import MLP, RelationModel, softmax_cross_entropy
from .optim import OptimizerState, sgd_step

log = logging.getLogger(__name__)

BASE_COLUMNS = ["epoch", "lr", "main_loss", "aff_loss", "mass", "train_acc", "val_acc"]


@dataclass
class TrainingLog:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "log.csv", out / "summary.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json())
        return csv_path, json_path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _optimizer(cfg: ExperimentConfig) -> OptimizerState:
    return OptimizerState(cfg.lr, cfg.momentum, cfg.weight_decay, list(cfg.lr_steps))


def _batch_data(cfg: ExperimentConfig, data_seed: int):
    if cfg.data == "cifar10":
        images, labels = load_cifar10(cfg.cifar_dir, "train", cfg.subsample_per_class or None, cfg.val_seed)
        full = cifar_dataset(images, labels)
        test = cifar_dataset(*load_cifar10(cfg.cifar_dir, "test"))
    else:
        pool = gen_gaussian_clusters(
            cfg.num_classes, cfg.per_class + cfg.test_per_class, cfg.dim, cfg.spread, data_seed, cfg.separation
        )
        train_idx, test_idx = [], []
        for c in range(cfg.num_classes):
            idx = np.flatnonzero(pool.y == c)
            train_idx.append(idx[: cfg.per_class])
            test_idx.append(idx[cfg.per_class :])
        full = pool.subset(np.sort(np.concatenate(train_idx)))
        test = pool.subset(np.sort(np.concatenate(test_idx)))
    train, val = split_validation(full, cfg.val_fraction, cfg.val_seed)
    return train, val, test


def _evaluate(model: MLP, ds: Dataset, chunk: int = 4096):
    logits, feats = [], []
    for s in range(0, len(ds), chunk):
        lg, f, _ = model.forward(ds.x[s : s + chunk])
        logits.append(lg)
        feats.append(f)
    if not logits:
        return 0.0, np.zeros((0, 0))
    return accuracy(np.concatenate(logits), ds.y), np.concatenate(feats)


def train_batch_affinity(cfg: ExperimentConfig) -> TrainingLog:
    """Cross-entropy plus ``lam`` times the affinity mass loss on a same-class batch target."""
    data_rng, init_rng, batch_rng, aug_rng = spawn_rngs(cfg.seed, 4)
    train, val, test = _batch_data(cfg, int(data_rng.integers(2**63)))
    model = MLP.init(train.x.shape[1], cfg.hidden, train.num_classes, init_rng)
    opt = _optimizer(cfg)
    lcfg = cfg.loss
    result = TrainingLog(list(BASE_COLUMNS))
    best_acc, best_epoch, best_params = -1.0, -1, model.copy_params()
    skipped_total = 0
    n = len(train)
    for epoch in range(cfg.epochs):
        lr = opt.set_epoch(epoch)
        order = batch_rng.permutation(n)
        sums = dict(main=0.0, aff=0.0, mass=0.0, density=0.0, correct=0, seen=0, batches=0, aff_batches=0)
        for s in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            xb, yb = train.x[idx], train.y[idx]
            if cfg.augment and train.image_shape is not None:
                xb = augment(xb, train.image_shape, aug_rng)
            logits, feats, acts = model.forward(xb)
            main_loss, d_logits = softmax_cross_entropy(logits, yb)
            main_grads = model.backward(acts, d_logits=d_logits)
            target = target_same_class(yb)
            sums["density"] += target.selected_count / len(yb) ** 2
            try:
                res = evaluate_mass_loss(affinity_l2(feats), target, lcfg)
            except DegenerateTargetError:
                skipped_total += 1
                log.debug("epoch %d: batch without same-class pairs, affinity term skipped", epoch)
                res = None
            if res is not None:
                d_feats = l2_affinity_backward(feats, res.grad_raw)
                aff_grads = model.backward(acts, d_feats=d_feats)
                _, grads = combine_losses(main_loss, main_grads, res.loss, aff_grads, lcfg)
                sums["aff"] += res.loss
                sums["mass"] += res.report.mass
                sums["aff_batches"] += 1
            else:
                grads = main_grads
            sgd_step(model.params, grads, opt)
            sums["main"] += main_loss
            sums["correct"] += int((np.argmax(logits, axis=1) == yb).sum())
            sums["seen"] += len(yb)
            sums["batches"] += 1
        val_acc, _ = _evaluate(model, val)
        nb, na = max(sums["batches"], 1), max(sums["aff_batches"], 1)
        result.rows.append(
            dict(
                epoch=epoch + 1,
                lr=float(lr),
                main_loss=sums["main"] / nb,
                aff_loss=sums["aff"] / na,
                mass=sums["mass"] / na,
                train_acc=sums["correct"] / max(sums["seen"], 1),
                val_acc=val_acc,
            )
        )
        density = sums["density"] / nb
        if val_acc > best_acc:
            best_acc, best_epoch, best_params = val_acc, epoch + 1, model.copy_params()
    final_params = model.params
    model.params = best_params
    test_acc, test_feats = _evaluate(model, test)
    ratio = scatter_ratio(test_feats, test.y) if len(test) > 1 else float("nan")
    model.params = final_params
    _, final_feats = _evaluate(model, test)
    result.summary = dict(
        task=cfg.task.value,
        seed=cfg.seed,
        backend=BACKEND,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        test_acc=test_acc,
        scatter_ratio=ratio,
        final_scatter_ratio=scatter_ratio(final_feats, test.y) if len(test) > 1 else float("nan"),
        final=result.rows[-1],
        # uniform-affinity mass |S|/N^2, averaged over the final epoch's batches
        uniform_mass=density,
        skipped_affinity_batches=skipped_total,
        config=cfg.as_dict(),
    )
    return result


def _split_scenes(scenes, fraction):
    n_test = int(round(len(scenes) * fraction))
    if n_test == 0:
        return scenes, scenes
    return scenes[: len(scenes) - n_test], scenes[len(scenes) - n_test :]


def _scene_metrics(model: RelationModel, scenes, ks, lcfg):
    recalls = {k: [] for k in ks}
    correct = seen = 0
    masses = []
    for sc in scenes:
        logits, raw, _ = model.forward(sc.features)
        correct += int((np.argmax(logits, axis=1) == sc.labels).sum())
        seen += len(sc.labels)
        if sc.target.any():
            masses.append(evaluate_mass_loss(raw, sc.target, lcfg).report.mass)
        if sc.relations:
            for k in ks:
                recalls[k].append(scene_recall(raw, sc.match, sc.relations, k))
    acc = correct / max(seen, 1)
    return acc, {k: float(np.mean(v)) if v else float("nan") for k, v in recalls.items()}, masses


def train_relation_attention(cfg: ExperimentConfig) -> TrainingLog:
    """Proposal classification plus affinity supervision of the attention scores."""
    data_rng, init_rng, batch_rng, _ = spawn_rngs(cfg.seed, 4)
    scenes = gen_relation_scenes(
        cfg.num_scenes,
        cfg.objects_per_scene,
        cfg.scene_classes,
        cfg.jitter,
        int(data_rng.integers(2**63)),
        proposals_per_object=cfg.proposals_per_object,
        proposals_per_scene=cfg.proposals_per_scene,
        feature_dim=cfg.dim,
        noise=cfg.feature_noise,
    )
    train, test = _split_scenes(scenes, cfg.test_fraction)
    width = cfg.hidden[-1] if cfg.hidden else cfg.dim
    model = RelationModel.init(cfg.dim, width, cfg.d_k, cfg.scene_classes + 1, init_rng)
    opt = _optimizer(cfg)
    lcfg = cfg.loss
    ks = tuple(cfg.recall_ks)
    columns = BASE_COLUMNS + [f"recall@{k}" for k in ks]
    result = TrainingLog(columns)
    skipped_total = 0
    for epoch in range(cfg.epochs):
        lr = opt.set_epoch(epoch)
        order = batch_rng.permutation(len(train))
        sums = dict(main=0.0, aff=0.0, mass=0.0, correct=0, seen=0, steps=0, aff_n=0)
        for s in range(0, len(order), cfg.batch_size):
            acc_grads = None
            for i in order[s : s + cfg.batch_size]:
                sc = train[i]
                logits, raw, state = model.forward(sc.features)
                main_loss, d_logits = softmax_cross_entropy(logits, sc.labels)
                main_grads = model.backward(state, d_logits=d_logits)
                if sc.target.any():
                    res = evaluate_mass_loss(raw, sc.target, lcfg)
                    aff_grads = model.backward(state, d_raw=res.grad_raw)
                    _, grads = combine_losses(main_loss, main_grads, res.loss, aff_grads, lcfg)
                    sums["aff"] += res.loss
                    sums["mass"] += res.report.mass
                    sums["aff_n"] += 1
                else:
                    skipped_total += 1
                    grads = main_grads
                sums["main"] += main_loss
                sums["correct"] += int((np.argmax(logits, axis=1) == sc.labels).sum())
                sums["seen"] += len(sc.labels)
                sums["steps"] += 1
                if acc_grads is None:
                    acc_grads = grads
                else:
                    for k in acc_grads:
                        acc_grads[k] += grads[k]
            sgd_step(model.params, acc_grads, opt)
        test_acc, recalls, _ = _scene_metrics(model, test, ks, lcfg)
        row = dict(
            epoch=epoch + 1,
            lr=float(lr),
            main_loss=sums["main"] / max(sums["steps"], 1),
            aff_loss=sums["aff"] / max(sums["aff_n"], 1),
            mass=sums["mass"] / max(sums["aff_n"], 1),
            train_acc=sums["correct"] / max(sums["seen"], 1),
            val_acc=test_acc,
        )
        row.update({f"recall@{k}": recalls[k] for k in ks})
        result.rows.append(row)
    _, _, test_masses = _scene_metrics(model, test, ks, lcfg)
    result.summary = dict(
        task=cfg.task.value,
        seed=cfg.seed,
        backend=BACKEND,
        final=result.rows[-1],
        test_mass=float(np.mean(test_masses)) if test_masses else float("nan"),
        skipped_affinity_scenes=skipped_total,
        config=cfg.as_dict(),
    )
    return result


def run(cfg: ExperimentConfig) -> TrainingLog:
    if cfg.task is Task.RELATION:
        return train_relation_attention(cfg)
    return train_batch_affinity(cfg)
