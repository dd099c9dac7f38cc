import math
from pathlib import Path

import numpy as np
import pytest

import affgraph
from affgraph.errors import ConfigError, IngestionError, NumericError, ShapeError
from affgraph.numerics import grad_check, make_rng
from affgraph.targets import iou
from affgraph.trainer import build_config, load_config, run
from affgraph.trainer.config import TASK_DEFAULTS, ExperimentConfig, Task, parse_config_text, parse_value
from affgraph.trainer.data import (
    CIFAR_RECORD,
    augment,
    gen_gaussian_clusters,
    gen_relation_scenes,
    hflip,
    load_cifar10,
    split_validation,
)
from affgraph.trainer.model import MLP, RelationModel, softmax_cross_entropy
from affgraph.trainer.optim import OptimizerState, sgd_step

# optimizer


def test_sgd_zero_grads_noop():
    p = {"w": np.array([1.0, -2.0])}
    sgd_step(p, {"w": np.zeros(2)}, OptimizerState(0.1, weight_decay=0.0))
    assert p["w"].tolist() == [1.0, -2.0]


def test_sgd_plain_step():
    p = {"w": np.array([1.0, -2.0])}
    sgd_step(p, {"w": np.array([0.5, 1.0])}, OptimizerState(0.1, momentum=0.0, weight_decay=0.0))
    np.testing.assert_allclose(p["w"], [0.95, -2.1])


def test_sgd_momentum_two_steps():
    p = {"w": np.zeros(3)}
    g = {"w": np.array([1.0, -2.0, 0.5])}
    st = OptimizerState(0.1, momentum=0.9, weight_decay=0.0)
    sgd_step(p, g, st)
    sgd_step(p, g, st)
    np.testing.assert_allclose(p["w"], -0.1 * g["w"] * (1 + 1.9))


def test_sgd_weight_decay():
    p = {"w": np.array([2.0])}
    sgd_step(p, {"w": np.zeros(1)}, OptimizerState(0.5, momentum=0.0, weight_decay=0.1))
    np.testing.assert_allclose(p["w"], [2.0 - 0.5 * 0.2])


def test_sgd_non_finite_aborts():
    p = {"a": np.ones(2), "b": np.ones(2)}
    st = OptimizerState(0.1)
    with pytest.raises(NumericError):
        sgd_step(p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, st)
    assert p["a"].tolist() == [1.0, 1.0] and not st.velocity


def test_sgd_shape_checks():
    with pytest.raises(ShapeError):
        sgd_step({"a": np.ones(2)}, {"b": np.ones(2)}, OptimizerState(0.1))
    with pytest.raises(ShapeError):
        sgd_step({"a": np.ones(2)}, {"a": np.ones(3)}, OptimizerState(0.1))


def test_optimizer_validation_and_schedule():
    with pytest.raises(ConfigError):
        OptimizerState(0.1, momentum=1.0)
    with pytest.raises(ConfigError):
        OptimizerState(0.0)
    st = OptimizerState(0.1, schedule=[(10, 0.01), (5, 0.05)])
    assert [st.lr_at(e) for e in (0, 4, 5, 9, 10, 50)] == [0.1, 0.1, 0.05, 0.05, 0.01, 0.01]


# models


def test_cross_entropy_gradient(rng):
    logits = rng.normal(size=(5, 3))
    y = np.array([0, 2, 1, 1, 0])
    _, g = softmax_cross_entropy(logits, y)
    assert grad_check(lambda z: softmax_cross_entropy(z, y)[0], g, logits) < 1e-6


def test_mlp_backward(rng):
    m = MLP.init(4, (6, 3), 3, rng, dtype=np.float64)
    x = rng.normal(size=(7, 4))
    y = rng.integers(0, 3, 7)
    d_feats = rng.normal(size=(7, 3))

    def loss(params):
        m2 = MLP(m.widths, 3, params)
        lg, f, _ = m2.forward(x)
        return softmax_cross_entropy(lg, y)[0] + (f * d_feats).sum()

    lg, _, acts = m.forward(x)
    grads = m.backward(acts, softmax_cross_entropy(lg, y)[1], d_feats)
    for k in m.params:
        def f(v, k=k):
            return loss({**m.params, k: v})
        assert grad_check(f, grads[k], m.params[k]) < 1e-5, k


def test_relation_model_backward(rng):
    m = RelationModel.init(5, 4, 3, 3, rng, dtype=np.float64)
    x = rng.normal(size=(6, 5))
    y = rng.integers(0, 3, 6)
    d_raw = rng.normal(size=(6, 6))

    def loss(params):
        lg, raw, _ = RelationModel(params).forward(x)
        return softmax_cross_entropy(lg, y)[0] + (raw.raw * d_raw).sum()

    lg, _, state = m.forward(x)
    grads = m.backward(state, softmax_cross_entropy(lg, y)[1], d_raw)
    for k in m.params:
        def f(v, k=k):
            return loss({**m.params, k: v})
        assert grad_check(f, grads[k], m.params[k]) < 1e-5, k


# data


def test_clusters_examples():
    assert len(gen_gaussian_clusters(3, 0, 4, 1.0, 0)) == 0
    a = gen_gaussian_clusters(3, 20, 4, 1.0, 7)
    b = gen_gaussian_clusters(3, 20, 4, 1.0, 7)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    assert np.bincount(a.y).tolist() == [20, 20, 20]
    with pytest.raises(ValueError):
        gen_gaussian_clusters(3, 20, 4, 0.0, 7)


def test_clusters_tiny_spread_linearly_separable():
    cfg = build_config(num_classes=5, per_class=60, spread=1e-3, hidden=(), lam=0.0, epochs=15, val_fraction=0.0)
    result = run(cfg)
    assert result.rows[-1]["train_acc"] == 1.0


def test_split_validation_stable():
    ds = gen_gaussian_clusters(2, 50, 3, 1.0, 1)
    tr, va = split_validation(ds, 0.1, 5)
    tr2, va2 = split_validation(ds, 0.1, 5)
    assert len(va) == 10 and len(tr) == 90
    np.testing.assert_array_equal(va.x, va2.x)


def test_scenes_zero_jitter():
    scenes = gen_relation_scenes(3, 4, 3, 0.0, 0, proposals_per_object=2)
    for sc in scenes:
        for p in sc.proposals:
            assert max(iou(p, g) for g in sc.gt) == 1.0


def test_scene_relation_counts():
    for sc in gen_relation_scenes(20, 3, 3, 0.1, 3):
        classes = {g.class_id for g in sc.gt}
        expected = {1: 0, 2: 2, 3: 3}[len(classes)]
        assert len(sc.relations) == expected
    # three classes forced by using many scenes and keeping the all-distinct ones
    distinct = [sc for sc in gen_relation_scenes(50, 3, 3, 0.1, 4) if len({g.class_id for g in sc.gt}) == 3]
    assert distinct and all(len(sc.relations) == 3 for sc in distinct)
    same = [sc for sc in gen_relation_scenes(50, 2, 2, 0.1, 5) if sc.gt[0].class_id == sc.gt[1].class_id]
    assert same and all(sc.relations == [] for sc in same)


def test_scene_structure():
    sc = gen_relation_scenes(1, 5, 3, 0.1, 9, proposals_per_scene=16)[0]
    assert len(sc.proposals) == 16 and sc.features.shape == (16, 16)
    np.testing.assert_array_equal(sc.target, sc.target.T)
    assert ((sc.match >= 0) == (sc.labels < 3)).all()
    with pytest.raises(ValueError):
        gen_relation_scenes(1, 1, 3, 0.1, 0)


@pytest.fixture(scope="module")
def cifar_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cifar")
    rng = np.random.default_rng(0)
    for i, name in enumerate([f"data_batch_{k}.bin" for k in range(1, 6)] + ["test_batch.bin"]):
        rec = rng.integers(0, 256, size=(10000, CIFAR_RECORD), dtype=np.uint8)
        rec[:, 0] = np.arange(10000) % 10
        (d / name).write_bytes(rec.tobytes())
    return d


def test_cifar_full_train(cifar_dir):
    images, labels = load_cifar10(cifar_dir)
    assert images.shape == (50000, 3, 32, 32) and images.dtype == np.uint8
    assert np.bincount(labels).tolist() == [5000] * 10
    raw = (cifar_dir / "data_batch_1.bin").read_bytes()
    assert labels[3] == raw[3 * CIFAR_RECORD]
    assert images[3].tobytes() == raw[3 * CIFAR_RECORD + 1 : 4 * CIFAR_RECORD]


def test_cifar_subsample_deterministic(cifar_dir):
    a = load_cifar10(cifar_dir, per_class=500, seed=3)
    b = load_cifar10(cifar_dir, per_class=500, seed=3)
    assert len(a[1]) == 5000 and np.bincount(a[1]).tolist() == [500] * 10
    np.testing.assert_array_equal(a[0], b[0])


def test_cifar_truncated_and_missing(tmp_path, cifar_dir):
    for name in ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin"]:
        (tmp_path / name).symlink_to(cifar_dir / name)
    (tmp_path / "data_batch_5.bin").write_bytes((cifar_dir / "data_batch_5.bin").read_bytes()[:-1])
    with pytest.raises(IngestionError, match="data_batch_5.bin"):
        load_cifar10(tmp_path)
    with pytest.raises(IngestionError, match="test_batch.bin"):
        load_cifar10(tmp_path, "test")


def test_flip_of_flip_and_augment_shapes(rng):
    imgs = rng.integers(0, 256, size=(4, 3, 32, 32), dtype=np.uint8)
    np.testing.assert_array_equal(hflip(hflip(imgs)), imgs)
    assert not np.array_equal(hflip(imgs), imgs)
    x = rng.normal(size=(4, 3 * 32 * 32)).astype(np.float32)
    assert augment(x, (3, 32, 32), make_rng(0)).shape == x.shape


def test_augment_only_for_images():
    # cluster data has no image shape, so augment = true must leave training unchanged
    a = run(build_config(per_class=40, epochs=2, augment=True))
    b = run(build_config(per_class=40, epochs=2, augment=False))
    assert a.to_csv() == b.to_csv()


# config


def test_parse_config_text():
    vals = parse_config_text("# c\nlam = 0.5  # inline\nhidden = 8,4\nmask_diagonal = yes\nlr_steps = 3:0.1,6:0.01\n")
    assert vals == {"lam": 0.5, "hidden": (8, 4), "mask_diagonal": True, "lr_steps": ((3, 0.1), (6, 0.01))}
    with pytest.raises(ConfigError):
        parse_config_text("lam 0.5")
    with pytest.raises(ConfigError):
        parse_value("nope", "1")
    with pytest.raises(ConfigError):
        parse_value("epochs", "ten")


def test_config_rules():
    assert build_config(task="relation").lam == 0.01
    assert build_config(task="relation", lam=0.5).lam == 0.5
    with pytest.raises(ConfigError):
        build_config(batch_size=1)
    assert build_config(batch_size=1, lam=0.0).batch_size == 1
    with pytest.raises(ConfigError):
        build_config(task="detection")
    with pytest.raises(ConfigError):
        build_config(gamma=-1)
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg.txt")


def test_config_roundtrip(tmp_path):
    cfg = build_config(task="relation", hidden=(8,), lr_steps=((2, 0.1),), mask_diagonal=True)
    path = tmp_path / "c.txt"
    path.write_text(cfg.dumps())
    assert load_config(path) == cfg


def test_defaults_file_matches_config():
    text = (Path(affgraph.__file__).parent / "defaults.cfg").read_text()
    plain = "\n".join(l for l in text.splitlines() if not l.startswith("relation."))
    rel = "\n".join(l[len("relation.") :] for l in text.splitlines() if l.startswith("relation."))
    assert build_config(parse_config_text(plain)) == ExperimentConfig()
    assert parse_config_text(rel) == {k: v for k, v in TASK_DEFAULTS[Task.RELATION].items()}


# training runs


def test_lambda_zero_equals_baseline():
    a = run(build_config(per_class=60, epochs=3, lam=0.0, loss_form="focal"))
    b = run(build_config(per_class=60, epochs=3, lam=0.0, loss_form="entry_bce"))
    for col in a.columns:
        if col != "aff_loss":
            assert a.column(col) == b.column(col), col
    assert a.summary["test_acc"] == b.summary["test_acc"]


def test_determinism():
    cfg = build_config(per_class=60, epochs=3)
    assert run(cfg).to_csv() == run(cfg).to_csv()
    rcfg = build_config(task="relation", num_scenes=10, epochs=2)
    assert run(rcfg).to_csv() == run(rcfg).to_csv()
    assert run(cfg).to_csv() != run(cfg.replace(seed=1)).to_csv()


@pytest.mark.parametrize("task", ["batch", "relation"])
def test_total_loss_decreases_default_config(task):
    cfg = build_config(task=task)
    result = run(cfg)
    total = [r["main_loss"] + cfg.lam * r["aff_loss"] for r in result.rows]
    assert total[9] < total[0]


def test_batch_log_columns():
    result = run(build_config(per_class=40, epochs=2))
    assert result.columns == ["epoch", "lr", "main_loss", "aff_loss", "mass", "train_acc", "val_acc"]
    assert result.summary["best_epoch"] in (1, 2)
    assert math.isfinite(result.summary["scatter_ratio"])


def test_degenerate_batches_skipped():
    # 40 classes, batch of 4: most batches have no same-class pair
    cfg = build_config(num_classes=40, per_class=5, test_per_class=2, batch_size=4, epochs=2)
    assert run(cfg).summary["skipped_affinity_batches"] > 0


@pytest.mark.parametrize("seed", range(5))
def test_single_scene_overfit(seed):
    cfg = build_config(
        task="relation", num_scenes=1, objects_per_scene=4, test_fraction=0.0, epochs=200, batch_size=1, seed=seed
    )
    result = run(cfg)
    assert max(result.column("recall@50")) == 1.0


def test_gamma_sweep_arms():
    finals = {}
    for g in (0.0, 2.0, 5.0):
        result = run(build_config(task="relation", num_scenes=20, epochs=3, gamma=g))
        assert len(result.rows) == 3
        finals[g] = result.rows[-1]
        assert all(math.isfinite(v) for v in finals[g].values())
    assert len({r["aff_loss"] for r in finals.values()}) == 3


def test_cifar_training_path(cifar_dir):
    cfg = build_config(data="cifar10", cifar_dir=str(cifar_dir), subsample_per_class=8, augment=True, epochs=1, hidden=(8,))
    result = run(cfg)
    assert len(result.rows) == 1 and result.summary["config"]["data"] == "cifar10"
