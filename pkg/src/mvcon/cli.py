"""Command-line entry point: ``mvcon {gen-data,train,crossval,ablate,knn-probe}``.

Exit codes: 0 success, 1 runtime/data/config error, 2 usage error.
Settings are layered: flags > ``--config`` file > ``MVC_SEED`` (seed only) > defaults.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dataset import (SynthConfig, fingerprint, flatten, generate_synthetic, load_manifest,
                      save_dataset)
from .errors import ConfigError
from .evaluation import default_k_grid, knn_auc_sweep, sweep_to_csv
from .pairing import PairVariant
from .tensor import EncoderParams, l2_normalize_rows
from .trainer import (ABLATION_AXES, TrainConfig, cross_validate, embed, format_table,
                      run_ablation, train_one_fold)

MANIFEST_FILE = "run_manifest.json"
SYNTH_KEYS = {f.name for f in fields(SynthConfig)}
VARIANT_CHOICES = ["baseline"] + [v.name for v in PairVariant] + [v.value for v in PairVariant]


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _env_seed():
    raw = os.environ.get("MVC_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"MVC_SEED={raw!r} is not an integer")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_run_manifest(out_dir: Path, command: str, config: dict, data_fp: str | None,
                       outputs: list[str], started: str) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "dataset_fingerprint": data_fp,
        "toolkit_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": outputs,
    }
    path = out_dir / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload, run_manifest=MANIFEST_FILE)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- config assembly ----------------------------------------------------------

def synth_config(args) -> SynthConfig:
    values = {}
    if args.config:
        values = {k: v for k, v in read_config_file(args.config).items() if k in SYNTH_KEYS}
    base = SynthConfig()
    cfg = {}
    for key, val in values.items():
        if key == "views_per_lesion":
            lo, hi = val.replace(",", ":").split(":")
            cfg[key] = (int(lo), int(hi))
        elif key == "lesions_per_class":
            parts = val.replace(",", " ").split()
            cfg[key] = int(parts[0]) if len(parts) == 1 else (int(parts[0]), int(parts[1]))
        else:
            cfg[key] = type(getattr(base, key))(val)
    env = _env_seed()
    if env is not None and "seed" not in cfg:
        cfg["seed"] = env
    flag_map = {"latent_dim": args.latent_dim, "view_dim": args.view_dim,
                "class_separation": args.separation, "view_noise_sigma": args.noise,
                "max_view_angle": args.max_view_angle, "seed": args.seed}
    cfg.update({k: v for k, v in flag_map.items() if v is not None})
    if args.benign is not None or args.malignant is not None:
        lpc = cfg.get("lesions_per_class", base.lesions_per_class)
        b, m = (lpc, lpc) if isinstance(lpc, int) else lpc
        cfg["lesions_per_class"] = (args.benign if args.benign is not None else b,
                                    args.malignant if args.malignant is not None else m)
    if args.lesions_per_class is not None:
        cfg["lesions_per_class"] = args.lesions_per_class
    if args.views is not None:
        lo, hi = args.views.split(":") if ":" in args.views else (args.views, args.views)
        cfg["views_per_lesion"] = (int(lo), int(hi))
    return SynthConfig(**cfg)


def train_config(args) -> TrainConfig:
    values = {}
    if args.config:
        values = {k: v for k, v in read_config_file(args.config).items() if k not in SYNTH_KEYS}
    env = _env_seed()
    if env is not None and "seed" not in values:
        values["seed"] = env
    flags = {"alpha": args.alpha, "temperature": args.temperature, "epochs": args.epochs,
             "base_lr": args.lr, "seed": args.seed, "groups_per_batch": args.groups,
             "views_per_group": args.views_per_group, "threshold": args.threshold}
    if getattr(args, "single_view", False):
        flags["dual_view"] = False
    variant = getattr(args, "variant", None)
    if variant == "baseline":
        flags.update(alpha=0.0, contrastive=False)
    elif variant is not None:
        flags["variant"] = PairVariant.parse(variant)
    values.update({k: v for k, v in flags.items() if v is not None})
    return TrainConfig.from_flat(values)


# -- commands -------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    started = _now()
    cfg = synth_config(args)
    out = Path(args.out)
    records = generate_synthetic(cfg)
    manifest = save_dataset(records, out, fmt=args.format)
    fp = fingerprint(records)
    echo = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    write_run_manifest(out, "gen-data", echo, fp, [manifest.name, "features/"], started)
    print(f"wrote {len(records)} lesions ({sum(r.n_views for r in records)} views) to {out}")
    print(f"dataset fingerprint {fp}")
    return 0


def _load(args):
    records = load_manifest(args.data)
    return records, fingerprint(records)


def cmd_train(args) -> int:
    started = _now()
    cfg = train_config(args)
    records, fp = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, curve = train_one_fold(records, cfg)
    params.save(out / "model.npz")
    _write_json(out / "loss_curve.json", {"loss_curve": curve, "config": cfg.echo()})
    write_run_manifest(out, "train", cfg.echo(), fp, ["model.npz", "loss_curve.json"], started)
    print(f"final epoch loss {curve[-1]:.6f}; model saved to {out / 'model.npz'}")
    return 0


def cmd_crossval(args) -> int:
    started = _now()
    cfg = train_config(args)
    records, fp = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = cross_validate(records, cfg, args.folds, jobs=args.jobs)
    outputs = []
    for fold in result.folds:
        name = f"fold_{fold['fold']}.json"
        _write_json(out / name, {"config": result.config, **fold})
        outputs.append(name)
    _write_json(out / "result.json", result.to_dict())
    label = "baseline" if args.variant == "baseline" else cfg.variant.value
    table = format_table("Method", [(label, result)])
    (out / "table.txt").write_text(table + f"# run manifest: {MANIFEST_FILE}\n", encoding="utf-8")
    write_run_manifest(out, "crossval", cfg.echo(), fp,
                       outputs + ["result.json", "table.txt"], started)
    print(table, end="")
    return 0


def cmd_ablate(args) -> int:
    started = _now()
    cfg = train_config(args)
    records, fp = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = args.values
    if values and args.axis == "alpha":
        values = [float(v) for v in values]
    table = run_ablation(records, cfg, args.axis, values, args.folds, jobs=args.jobs)
    _write_json(out / "ablation.json", table.to_dict())
    text = table.format()
    (out / "table.txt").write_text(text + f"# run manifest: {MANIFEST_FILE}\n", encoding="utf-8")
    write_run_manifest(out, "ablate", dict(cfg.echo(), axis=args.axis), fp,
                       ["ablation.json", "table.txt"], started)
    print(text, end="")
    return 0


def cmd_knn_probe(args) -> int:
    started = _now()
    model_path = Path(args.model)
    if not model_path.exists():
        raise FileNotFoundError(f"model file {model_path} not found")
    params = EncoderParams.load(model_path)
    ref_records = load_manifest(args.data)
    query_records = load_manifest(args.queries) if args.queries else ref_records
    X_ref, y_ref, _ = flatten(ref_records)
    X_q, y_q, _ = flatten(query_records)
    ref = l2_normalize_rows(embed(params, X_ref))
    queries = l2_normalize_rows(embed(params, X_q))
    if args.k:
        ks = sorted(set(args.k))
    else:
        ks = [k for k in default_k_grid() if k <= ref.shape[0]]
    series = knn_auc_sweep(ref, y_ref, queries, y_q, ks, args.knn_temperature)
    csv_text = sweep_to_csv(series)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv_text, encoding="utf-8")
    write_run_manifest(out.parent, "knn-probe",
                       {"model": str(model_path), "data": str(args.data),
                        "queries": str(args.queries) if args.queries else None, "ks": ks,
                        "knn_temperature": args.knn_temperature},
                       fingerprint(ref_records), [out.name], started)
    print(csv_text, end="")
    return 0


# -- parser -----------------------------------------------------------------------

def _training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory or manifest.csv")
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--seed", type=int)
    p.add_argument("--groups", type=int, help="lesions per batch")
    p.add_argument("--views-per-group", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--single-view", action="store_true",
                   help="anchors double as candidates (no second augmentation)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvcon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic multi-view dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--lesions-per-class", type=int)
    g.add_argument("--benign", type=int, help="benign lesion count (overrides per-class)")
    g.add_argument("--malignant", type=int)
    g.add_argument("--views", help="views per lesion, MIN:MAX")
    g.add_argument("--latent-dim", type=int)
    g.add_argument("--view-dim", type=int)
    g.add_argument("--separation", type=float)
    g.add_argument("--noise", type=float, help="view noise sigma")
    g.add_argument("--max-view-angle", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=("binary", "text"), default="binary")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train on a whole dataset and save the model")
    _training_flags(t)
    t.add_argument("--variant", choices=VARIANT_CHOICES)
    t.add_argument("--out", default="runs/train")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("crossval", help="lesion-level k-fold cross-validation")
    _training_flags(c)
    c.add_argument("--variant", choices=VARIANT_CHOICES)
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", default="runs/crossval")
    c.set_defaults(func=cmd_crossval)

    a = sub.add_parser("ablate", help="negative-set, alpha or task comparison tables")
    _training_flags(a)
    a.add_argument("--axis", required=True, choices=ABLATION_AXES)
    a.add_argument("--values", nargs="+", help="override the axis grid")
    a.add_argument("--folds", type=int, default=5)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--out", default="runs/ablate")
    a.set_defaults(func=cmd_ablate)

    k = sub.add_parser("knn-probe", help="weighted-KNN AUC over a grid of k")
    k.add_argument("--model", required=True, help="model.npz written by 'train'")
    k.add_argument("--data", required=True, help="reference set")
    k.add_argument("--queries", help="query set (defaults to the reference set)")
    k.add_argument("--k", type=int, nargs="+")
    k.add_argument("--knn-temperature", type=float, default=0.07)
    k.add_argument("--out", default="runs/knn/knn_auc.csv")
    k.set_defaults(func=cmd_knn_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"mvcon {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
