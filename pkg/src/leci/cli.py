"""Batch experiment entry point: generate, train, evaluate, explain, verify.

Runs are driven by a flat ``key = value`` config file (``#`` comments,
unknown keys rejected) with command-line overrides; every run writes a
resolved-config echo next to its outputs so it can be reproduced exactly.

Exit codes: 0 success, 2 configuration error, 3 numeric failure during
training, 4 oracle counterexample.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .datasets import GenConfig, build_micro_universe, generate, manifest
from .errors import ConfigError, LeciError, NumericError
from .graphs import DatasetSplit, load_jsonl, save_jsonl
from .metrics import (
    MetricsReport,
    accuracy,
    edge_selection_score,
    oracle_check_lemma1,
    selector_edge_probs,
)
from .nn import load_params, assign_params
from .selector import explain as explain_graph
from .tensor import Rng, Tensor
from .training import (
    ErmModel,
    LeciModel,
    TrainConfig,
    save_checkpoint,
    train,
    train_erm,
)

_SPLITS = ("train", "id_val", "ood_val", "ood_test")

# config key registry: name -> (kind, parser-id)
_GEN_KEYS = {
    "seed": "int",
    "split_by": "str",
    "n_per_class_per_env": "int",
    "n_val_per_class": "int",
    "n_id_val_per_class_per_env": "int",
    "train_bases": "strlist",
    "oodval_base": "str",
    "oodtest_base": "str",
    "base_size_range": "range",
    "size_buckets": "rangelist",
    "oodval_size_range": "range",
    "oodtest_size_range": "range",
    "n_color_envs": "int",
    "feature_mode": "str",
    "noise_edge_prob": "float",
}
_TRAIN_KEYS = {
    "seed": "int",
    "epochs": "int",
    "batch_size": "int",
    "lr": "float",
    "weight_decay": "float",
    "lambda_L_max": "float",
    "lambda_E_max": "float",
    "lambda_PFSC_max": "float",
    "warmup_epochs": "int",
    "ramp_shape": "str",
    "info_r": "optfloat",
    "info_weight": "float",
    "strict_alternation": "bool",
    "use_pfsc": "bool",
    "hidden_dim": "int",
    "num_layers": "int",
    "dropout_p": "float",
    "use_virtual_node": "bool",
    "tau": "float",
    "eval_batch_size": "int",
}
_MISC_KEYS = {"out": "str", "seeds": "int"}


def _parse_value(kind: str, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return None if raw.lower() in ("none", "") else float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "strlist":
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        if kind == "range":
            lo, hi = raw.split("-")
            return (int(lo), int(hi))
        if kind == "rangelist":
            return tuple(_parse_value("range", part, key)
                         for part in raw.split(",") if part.strip())
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for key '{key}': {raw!r}") from e
    raise ConfigError(f"unknown value kind {kind}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment; keys must be known."""
    values: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key.startswith("sweep."):
                base = key[len("sweep."):]
                if base not in _TRAIN_KEYS:
                    raise ConfigError(f"unknown sweep key '{base}'")
                kind = _TRAIN_KEYS[base]
                values.setdefault("sweep", {})[base] = [
                    _parse_value(kind, part, base)
                    for part in value.split(",") if part.strip()]
                continue
            if key in _GEN_KEYS:
                values[key] = _parse_value(_GEN_KEYS[key], value, key)
            elif key in _TRAIN_KEYS:
                values[key] = _parse_value(_TRAIN_KEYS[key], value, key)
            elif key in _MISC_KEYS:
                values[key] = _parse_value(_MISC_KEYS[key], value, key)
            else:
                raise ConfigError(f"unknown config key '{key}'")
    return values


def _subset(values: dict, keys: dict) -> dict:
    return {k: v for k, v in values.items() if k in keys}


def gen_config_from(values: dict) -> GenConfig:
    return GenConfig(**_subset(values, _GEN_KEYS))


def train_config_from(values: dict) -> TrainConfig:
    return TrainConfig(**_subset(values, _TRAIN_KEYS))


def write_config_echo(path, values: dict):
    lines = []
    for key in sorted(k for k in values if k != "sweep"):
        v = values[key]
        if isinstance(v, tuple) and v and isinstance(v[0], tuple):
            v = ",".join(f"{lo}-{hi}" for lo, hi in v)
        elif isinstance(v, tuple):
            v = ", ".join(str(s) for s in v)
        lines.append(f"{key} = {v}")
    for key, options in values.get("sweep", {}).items():
        lines.append(f"sweep.{key} = " + ", ".join(str(o) for o in options))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# data directory layout helpers


def write_dataset_dir(split: DatasetSplit, cfg: GenConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, graphs in split.parts():
        part = DatasetSplit(**{name: graphs})
        save_jsonl(part, out_dir / f"{name}.jsonl")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest(cfg, split), indent=2) + "\n", encoding="utf-8")


def load_dataset_dir(data_dir: Path) -> tuple[DatasetSplit, dict]:
    split = DatasetSplit()
    for name in _SPLITS:
        path = data_dir / f"{name}.jsonl"
        if not path.exists():
            raise ConfigError(f"missing dataset file {path}")
        part = load_jsonl(path)
        getattr(split, name).extend(getattr(part, name))
    manifest_path = data_dir / "manifest.json"
    meta = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    return split, meta


def _format_mean_std(values: list[float]) -> str:
    arr = np.asarray(values, dtype=np.float64) * 100.0
    return f"{arr.mean():.2f}({arr.std():.2f})"


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = gen_config_from(values)
    out_dir = Path(args.out)
    split = generate(cfg)
    write_dataset_dir(split, cfg, out_dir)
    write_config_echo(out_dir / "resolved_config.txt", values)
    counts = {name: len(graphs) for name, graphs in split.parts()}
    print(json.dumps({"out": str(out_dir), "counts": counts}))
    return 0


def _select_epochs(logs) -> dict:
    by_ood = max(range(len(logs)), key=lambda i: logs[i].acc_ood_val)
    by_id = max(range(len(logs)), key=lambda i: logs[i].acc_id_val)
    return {
        "best_ood_val_epoch": by_ood,
        "best_id_val_epoch": by_id,
        "ood_val_selected_test_acc": logs[by_ood].acc_ood_test,
        "id_val_selected_test_acc": logs[by_id].acc_ood_test,
        "final_test_acc": logs[-1].acc_ood_test,
    }


def _run_one_seed(split, config_values, method, seed, seed_dir: Path) -> dict:
    seed_dir.mkdir(parents=True, exist_ok=True)
    values = dict(config_values)
    values["seed"] = seed
    tcfg = train_config_from(values)
    log_path = seed_dir / "epochlogs.jsonl"
    with open(log_path, "w", encoding="utf-8") as log_file:
        def hook(log):
            log_file.write(log.to_json() + "\n")

        if method == "leci":
            model, logs = train(split, tcfg, log_hook=hook)
        else:
            model, logs = train_erm(split, tcfg, log_hook=hook)
    save_checkpoint(seed_dir / "checkpoint.bin", model)
    result = {"seed": seed}
    if logs:
        result.update(_select_epochs(logs))
    else:
        result.update({"best_ood_val_epoch": None, "best_id_val_epoch": None,
                       "ood_val_selected_test_acc": accuracy(
                           model, split.ood_test) if split.ood_test else None,
                       "id_val_selected_test_acc": None,
                       "final_test_acc": None})
        if result["ood_val_selected_test_acc"] is None:
            result["ood_val_selected_test_acc"] = 0.0
    return result


def cmd_train(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    for key in ("seed", "epochs"):
        override = getattr(args, key, None)
        if override is not None:
            values[key] = override
    split, _ = load_dataset_dir(Path(args.data))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_echo(out_dir / "resolved_config.txt", values)
    base_seed = values.get("seed", 0)
    n_seeds = args.seeds if args.seeds else values.get("seeds", 1)
    per_seed = []
    for s in range(base_seed, base_seed + n_seeds):
        per_seed.append(_run_one_seed(split, values, args.method, s,
                                      out_dir / f"seed_{s}"))
    report = {
        "schema_version": 1,
        "method": args.method,
        "config": {k: v for k, v in sorted(values.items()) if k != "sweep"},
        "n_seeds": n_seeds,
        "per_seed": per_seed,
        "ood_val_selected": _format_mean_std(
            [r["ood_val_selected_test_acc"] for r in per_seed]),
        "id_val_selected": _format_mean_std(
            [r["id_val_selected_test_acc"] or 0.0 for r in per_seed]),
        "mean_ood_val_selected_test_acc": float(np.mean(
            [r["ood_val_selected_test_acc"] for r in per_seed])),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=str)
                                         + "\n", encoding="utf-8")
    print(json.dumps({"ood_val_selected": report["ood_val_selected"],
                      "out": str(out_dir)}))
    return 0


def _load_model(checkpoint_path: Path):
    meta, arrays = load_params(checkpoint_path)
    cfg = TrainConfig(
        epochs=1, warmup_epochs=0,
        hidden_dim=meta["hidden_dim"], num_layers=meta["num_layers"],
        dropout_p=meta["dropout_p"], use_virtual_node=meta["use_virtual_node"],
        use_pfsc=meta.get("use_pfsc", False), tau=meta.get("tau", 1.0),
    )
    if meta["method"] == "leci":
        model = LeciModel(meta["in_dim"], meta["n_classes"], meta["n_envs"],
                          cfg, Rng(0))
    else:
        model = ErmModel(meta["in_dim"], meta["n_classes"], cfg, Rng(0))
    assign_params(model.named_params(), arrays)
    return model, meta


def cmd_eval(args) -> int:
    model, meta = _load_model(Path(args.checkpoint))
    split, data_meta = load_dataset_dir(Path(args.data))
    n_envs = int(data_meta.get("num_envs", meta.get("n_envs", 2)))
    n_classes = int(data_meta.get("num_classes", meta["n_classes"]))
    report = MetricsReport(
        accuracy_train=accuracy(model, split.train),
        accuracy_id_val=accuracy(model, split.id_val),
        accuracy_ood_val=accuracy(model, split.ood_val),
        accuracy_ood_test=accuracy(model, split.ood_test),
        n_envs=n_envs, n_classes=n_classes,
        env_chance=1.0 / n_envs, label_chance=1.0 / n_classes,
    )
    if meta["method"] == "leci":
        score = edge_selection_score(selector_edge_probs(model), split.ood_test)
        report.edge_precision = score.precision
        report.edge_recall = score.recall
        report.edge_f1 = score.f1
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_explain(args) -> int:
    model, meta = _load_model(Path(args.checkpoint))
    if meta["method"] != "leci":
        raise ConfigError("explain needs a selector-based checkpoint")
    split, _ = load_dataset_dir(Path(args.data))
    graphs = getattr(split, args.split)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [int(s) for s in args.graph_ids.split(",")] if args.graph_ids else [0]
    written = []
    for gid in ids:
        if not 0 <= gid < len(graphs):
            raise ConfigError(f"graph id {gid} outside split of {len(graphs)}")
        g = graphs[gid]
        x_pure = model.purify(Tensor(g.x)) if meta.get("use_pfsc") else None
        ex = explain_graph(model.selector, g, threshold=args.threshold,
                           top_k=args.top_k, x=x_pure)
        path = out_dir / f"{args.split}_{gid}.dot"
        path.write_text(ex.dot, encoding="utf-8")
        written.append(str(path))
        if ex.warning:
            print(f"warning: {ex.warning}", file=sys.stderr)
    print(json.dumps({"written": written}))
    return 0


def cmd_oracle(args) -> int:
    universe = build_micro_universe()
    report = oracle_check_lemma1(universe)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0 if report.passed else 4


def _sweep_points(values: dict) -> list[dict]:
    grid = values.get("sweep", {})
    if not grid:
        raise ConfigError("sweep needs at least one 'sweep.<key> = a, b' line")
    points = [{}]
    for key, options in grid.items():
        points = [dict(p, **{key: o}) for p in points for o in options]
    return points


def _run_sweep_point(payload) -> dict:
    values, overrides, data_dir, run_dir, index = payload
    merged = dict(values)
    merged.pop("sweep", None)
    merged.update(overrides)
    split, _ = load_dataset_dir(Path(data_dir))
    result = _run_one_seed(split, merged, "leci", merged.get("seed", 0),
                           Path(run_dir))
    write_config_echo(Path(run_dir) / "resolved_config.txt", merged)
    return {"run": index, "dir": str(run_dir), "overrides": overrides,
            "ood_val_selected_test_acc": result["ood_val_selected_test_acc"],
            "best_ood_val_epoch": result["best_ood_val_epoch"]}


def cmd_sweep(args) -> int:
    values = read_config_file(args.config)
    points = _sweep_points(values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payloads = [
        (values, overrides, args.data, str(out_dir / f"run_{i}"), i)
        for i, overrides in enumerate(points)
    ]
    jobs = args.jobs or 1
    cap = os.environ.get("LECI_THREADS")
    if cap:
        jobs = max(1, min(jobs, int(cap)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_sweep_point, payloads))
    else:
        results = [_run_sweep_point(p) for p in payloads]
    ranking = sorted(results, key=lambda r: -r["ood_val_selected_test_acc"])
    (out_dir / "ranking.json").write_text(json.dumps(ranking, indent=2) + "\n",
                                          encoding="utf-8")
    print(json.dumps({"runs": len(results), "best": ranking[0]}))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leci",
        description="adversarial causal subgraph discovery experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset directory")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("leci", "erm"), default="leci")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None,
                   help="number of seeds; reports mean(std)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("explain", help="export selected subgraphs as DOT")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=_SPLITS, default="ood_test")
    p.add_argument("--graph-ids", default="0")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("oracle", help="run the micro-universe independence check")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("sweep", help="grid-expand config lists and rank runs")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, LeciError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
