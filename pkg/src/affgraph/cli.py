"""Command-line entry point: run, sweep, recall, gradcheck, gen-data."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .affinity import AffinityMatrix, LossConfig, LossForm, Scope, evaluate_mass_loss
from .errors import AffGraphError, ConfigError, IngestionError
from .metrics import rank_pairs, recall_at_k
from .numerics import grad_check, make_rng
from .targets import write_scene
from .trainer.config import FIELDS, load_config
from .trainer.data import gen_gaussian_clusters, gen_relation_scenes
from .trainer.loops import run as run_training

log = logging.getLogger("affgraph")

SWEEP_AXES = {"loss_form": "loss_form", "gamma": "gamma", "lambda": "lam"}


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for name in FIELDS:
        if name in ("seed", "out"):
            continue
        p.add_argument(f"--{name.replace('_', '-')}", dest=f"cfg_{name}", metavar="V")
    p.add_argument("--seed", dest="cfg_seed")
    p.add_argument("--out", dest="cfg_out")


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    for name in FIELDS:
        v = getattr(args, f"cfg_{name}", None)
        if v is not None:
            out[name] = v
    return out


def _final_metric(summary: dict) -> tuple[str, float]:
    final = summary["final"]
    if "recall@50" in final:
        return "recall@50", final["recall@50"]
    return "best_val_acc", summary["best_val_acc"]


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    result = run_training(cfg)
    csv_path, json_path = result.write(cfg.out)
    (Path(cfg.out) / "config.txt").write_text(cfg.dumps())
    sys.stdout.write(result.to_csv() if args.format == "csv" else result.to_json())
    log.info("wrote %s and %s", csv_path, json_path)
    return 0


def cmd_sweep(args) -> int:
    base = load_config(args.config, _overrides(args))
    key = SWEEP_AXES[args.axis]
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values given")
    cfgs = [load_config(args.config, {**_overrides(args), key: v}) for v in values]  # validate all first
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    merged_rows, arms = [], []
    columns = None
    status = 0
    try:
        for value, cfg in zip(values, cfgs):
            arm_dir = out / f"{args.axis}={value}"
            cfg = cfg.replace(out=str(arm_dir))
            result = run_training(cfg)
            result.write(arm_dir)
            columns = columns or ["value", *result.columns]
            for row in result.rows:
                merged_rows.append({"value": value, **row})
            metric, score = _final_metric(result.summary)
            arms.append({"value": value, "metric": metric, "score": score, "final": result.summary["final"]})
    except AffGraphError as exc:
        log.error("sweep aborted at %s=%s: %s", args.axis, value, exc)
        status = exc.exit_code
    if columns:
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in merged_rows:
                w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    ranking = sorted(arms, key=lambda a: (-a["score"], values.index(a["value"])))
    summary = {"axis": args.axis, "values": values, "complete": status == 0, "ranking": ranking}
    (out / "sweep_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if args.format == "json":
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    else:
        sys.stdout.write("rank,value,metric,score\n")
        for i, a in enumerate(ranking, 1):
            sys.stdout.write(f"{i},{a['value']},{a['metric']},{a['score']!r}\n")
    return status


def _read_matrix(path) -> np.ndarray:
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    return m


def _read_pairs(path) -> list[tuple[int, int]]:
    pairs = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        parts = line.replace(",", " ").split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 2:
            raise IngestionError(f"{path}:{lineno}: expected 'i j'")
        pairs.append((int(parts[0]), int(parts[1])))
    return pairs


def cmd_recall(args) -> int:
    scores = _read_matrix(args.scores)
    truth = _read_pairs(args.truth)
    ranked = rank_pairs(scores)
    ks = [int(k) for k in args.k.split(",")]
    results = {f"recall@{k}": recall_at_k(ranked, truth, k) for k in ks}
    if args.format == "json":
        sys.stdout.write(json.dumps(results, indent=2) + "\n")
    else:
        sys.stdout.write("k,recall\n")
        for k in ks:
            sys.stdout.write(f"{k},{results[f'recall@{k}']!r}\n")
    return 0


def _random_target(rng, n: int, density: float = 0.3) -> np.ndarray:
    while True:
        t = (rng.random((n, n)) < density).astype(np.uint8)
        np.fill_diagonal(t, 0)
        if t.any():
            return t


def gradcheck_report(forms, scopes, gamma: float, n: int, trials: int, seed: int, step: float = 1e-6):
    """Worst relative error per (form, scope) over random instances."""
    rng = make_rng(seed)
    rows = []
    for form in forms:
        for scope in scopes:
            cfg = LossConfig(form=form, gamma=gamma, scope=scope)
            worst = 0.0
            for _ in range(trials):
                raw = rng.standard_normal((n, n))
                t = _random_target(rng, n)
                res = evaluate_mass_loss(AffinityMatrix(raw), t, cfg)
                err = grad_check(lambda x: evaluate_mass_loss(AffinityMatrix(x), t, cfg).loss, res.grad_raw, raw, step)
                worst = max(worst, err)
            rows.append({"form": LossForm(form).value, "scope": Scope(scope).value, "gamma": gamma, "max_rel_error": worst})
    return rows


def cmd_gradcheck(args) -> int:
    forms = [LossForm(f) for f in args.form.split(",")] if args.form != "all" else list(LossForm)
    scopes = [Scope(s) for s in args.scope.split(",")] if args.scope != "all" else list(Scope)
    rows = gradcheck_report(forms, scopes, args.gamma, args.n, args.trials, args.seed)
    if args.format == "json":
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        sys.stdout.write("form,scope,gamma,max_rel_error\n")
        for r in rows:
            sys.stdout.write(f"{r['form']},{r['scope']},{r['gamma']!r},{r['max_rel_error']!r}\n")
    worst = max(r["max_rel_error"] for r in rows)
    return 0 if worst < args.tol else 4


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "clusters":
        ds = gen_gaussian_clusters(args.num_classes, args.per_class, args.dim, args.spread, args.seed)
        with open(out / "clusters.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", *[f"f{i}" for i in range(ds.x.shape[1])]])
            for xi, yi in zip(ds.x, ds.y):
                w.writerow([int(yi), *[repr(float(v)) for v in xi]])
        sys.stdout.write(f"{len(ds)} samples -> {out / 'clusters.csv'}\n")
    else:
        scenes = gen_relation_scenes(args.num_scenes, args.objects_per_scene, args.num_classes, args.jitter, args.seed)
        for i, sc in enumerate(scenes):
            write_scene(out / f"scene_{i:04d}.txt", sc.proposals, sc.gt)
            np.savetxt(out / f"scene_{i:04d}.features.csv", sc.features, delimiter=",", fmt="%.9g")
        sys.stdout.write(f"{len(scenes)} scenes -> {out}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affgraph", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one experiment and write log.csv / summary.json")
    _config_flags(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per value of a loss-form, gamma, or lambda axis")
    _config_flags(p)
    p.add_argument("--axis", choices=tuple(SWEEP_AXES), required=True)
    p.add_argument("--values", required=True, help="comma separated")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("recall", help="recall@K of a score matrix against truth pairs")
    p.add_argument("--scores", required=True, help="N x N comma-separated score matrix")
    p.add_argument("--truth", required=True, help="file with one 'i j' pair per line")
    p.add_argument("-k", default="10,50,100", help="comma separated K values")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_recall)

    p = sub.add_parser("gradcheck", help="finite-difference check of the mass-loss gradients")
    p.add_argument("--form", default="all")
    p.add_argument("--scope", default="all")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="write a synthetic dataset to disk")
    p.add_argument("--kind", choices=("clusters", "scenes"), default="clusters")
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--num-scenes", type=int, default=10)
    p.add_argument("--objects-per-scene", type=int, default=8)
    p.add_argument("--jitter", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except AffGraphError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except ValueError as exc:
        # bad enum names and similar argument mistakes
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
