"""Command-line driver for the 2-D experiments and feature-file scoring.

One binary, five subcommands: ``gen-data``, ``train``, ``score``, ``sweep``,
``heatmap``. Option precedence is flags > config file > built-in defaults;
every run writes a ``manifest.json`` capturing the resolved config, the seed,
and a checksum per artifact, so any output can be reproduced from its
manifest.

Exit codes: 0 success, 2 usage errors, 3 data/file errors, 4 numerical
failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, featfile, gridmap, metrics, net
from .field import (IpfField, calibrate_threshold, silverman_bandwidth,
                    sweep_bandwidth, write_scores_csv)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_REQUIRED = object()

_DATA_ERRORS = (featfile.FeatureFileError, net.CheckpointError,
                FileNotFoundError, IsADirectoryError, PermissionError,
                ValueError)


class UsageError(Exception):
    pass


# dest -> (default, type); shared across the subcommands that use them
_OPTION_SPECS = {
    "gen-data": {
        "dataset": ("moons", str), "n_per_class": (None, int),
        "noise": (None, float), "seed": (0, int), "out": (_REQUIRED, str),
    },
    "train": {
        "data": (None, str), "dataset": ("moons", str),
        "n_per_class": (None, int), "noise": (None, float),
        "epochs": (300, int), "lr": (0.05, float), "momentum": (0.9, float),
        "batch_size": (128, int), "sn": (True, bool), "sn_coeff": (1.0, float),
        "hidden_dim": (128, int), "num_blocks": (4, int),
        "seed": (0, int), "out": (_REQUIRED, str),
    },
    "score": {
        "ref_features": (None, str), "test_id_features": (None, str),
        "test_ood_features": (None, str), "checkpoint": (None, str),
        "ref_data": (None, str), "id_data": (None, str), "ood_data": (None, str),
        "bandwidth": (None, float), "threshold_percentile": (5.0, float),
        "seed": (0, int), "out": (_REQUIRED, str),
    },
    "sweep": {
        "ref_features": (None, str), "test_id_features": (None, str),
        "test_ood_features": (None, str), "checkpoint": (None, str),
        "ref_data": (None, str), "id_data": (None, str), "ood_data": (None, str),
        "bandwidth_grid": (_REQUIRED, str),
        "seed": (0, int), "out": (_REQUIRED, str),
    },
    "heatmap": {
        "mode": ("feature", str), "data": (_REQUIRED, str),
        "checkpoint": (None, str), "bandwidth": (None, float),
        "seed": (0, int), "out": (_REQUIRED, str),
    },
}

# per-dataset defaults used when --n-per-class / --noise are not given
_DATASET_DEFAULTS = {"moons": (2000, 0.1), "spirals": (1200, 0.08)}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipfield",
        description="density-field uncertainty experiments and OOD scoring")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(cmd, helptext):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument("--config", help="key=value config file (flags win)")
        spec = _OPTION_SPECS[cmd]
        for dest, (_, typ) in spec.items():
            flag = "--" + dest.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=dest, default=None,
                               action=argparse.BooleanOptionalAction)
            elif dest == "dataset":
                p.add_argument(flag, dest=dest, default=None,
                               choices=["moons", "spirals"])
            elif dest == "mode":
                p.add_argument(flag, dest=dest, default=None,
                               choices=[gridmap.MODE_FEATURE, gridmap.MODE_INPUT])
            else:
                p.add_argument(flag, dest=dest, default=None,
                               type=str if typ is str else typ)
        return p

    add("gen-data", "generate a synthetic labeled 2-D dataset CSV")
    add("train", "train the residual MLP and save a checkpoint")
    add("score", "fit a density field and score iD/OOD inputs")
    add("sweep", "cross-validate the kernel width by AUROC")
    add("heatmap", "render the viewport uncertainty grid")
    return parser


def _read_config_file(path) -> dict:
    config = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        config[key.strip().replace("-", "_")] = value.strip()
    return config


def _coerce(raw: str, typ):
    if typ is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"cannot parse boolean from {raw!r}")
    return typ(raw)


def _resolve_options(args) -> dict:
    config = _read_config_file(args.config) if args.config else {}
    spec = _OPTION_SPECS[args.command]
    resolved = {}
    for dest, (default, typ) in spec.items():
        value = getattr(args, dest)
        if value is None and dest in config:
            value = _coerce(config[dest], typ)
        if value is None:
            value = default
        if value is _REQUIRED:
            flag = "--" + dest.replace("_", "-")
            raise UsageError(f"{args.command}: {flag} is required")
        resolved[dest] = value
    return resolved


def parse_bandwidth_grid(spec: str) -> list[float]:
    """Parse ``0.1,0.2,...``, ``lin:lo:hi:n``, or ``log:lo:hi:n`` grids."""
    spec = spec.strip()
    if spec.startswith(("lin:", "log:")):
        kind, *rest = spec.split(":")
        if len(rest) != 3:
            raise UsageError(f"bad grid spec {spec!r}, want {kind}:lo:hi:n")
        lo, hi, count = float(rest[0]), float(rest[1]), int(rest[2])
        if count < 1 or lo <= 0 or hi < lo:
            raise UsageError(f"bad grid bounds in {spec!r}")
        if kind == "lin":
            return list(np.linspace(lo, hi, count))
        return list(np.geomspace(lo, hi, count))
    try:
        values = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid spec {spec!r}: {exc}") from exc
    if not values:
        raise UsageError("bandwidth grid is empty")
    return values


def _write_manifest(out_dir: Path, command: str, options: dict,
                    artifacts: list[Path]) -> Path:
    entries = []
    for art in artifacts:
        data = Path(art).read_bytes()
        entries.append({"path": Path(art).name, "bytes": len(data),
                        "checksum64": featfile.checksum64(data)})
    manifest = {
        "command": command,
        "config": {k: v for k, v in options.items()},
        "seed": options.get("seed"),
        "artifacts": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(options: dict) -> Path:
    out = Path(options["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_dataset(options: dict) -> datasets.LabeledDataset2D:
    name = options["dataset"]
    n_default, noise_default = _DATASET_DEFAULTS[name]
    n = options["n_per_class"] if options["n_per_class"] is not None else n_default
    noise = options["noise"] if options["noise"] is not None else noise_default
    maker = (datasets.make_two_moons if name == "moons"
             else datasets.make_three_spirals)
    return maker(n, noise, options["seed"])


def _cmd_gen_data(options: dict) -> int:
    out = _out_dir(options)
    dataset = _make_dataset(options)
    csv_path = out / f"{options['dataset']}.csv"
    datasets.export_csv(dataset, csv_path)
    _write_manifest(out, "gen-data", options, [csv_path])
    print(f"wrote {csv_path} ({dataset.n} points, {dataset.num_classes} classes)")
    return EXIT_OK


def _load_labeled_csv(path) -> datasets.LabeledDataset2D:
    m = featfile.read_csv_features(path)
    if m.labels is None:
        raise ValueError(f"{path}: a label column is required")
    return datasets.LabeledDataset2D(points=m.data, labels=m.labels,
                                     num_classes=int(m.labels.max()) + 1)


def _cmd_train(options: dict) -> int:
    out = _out_dir(options)
    if options["data"]:
        dataset = _load_labeled_csv(options["data"])
    else:
        dataset = _make_dataset(options)
    config = net.TrainConfig(
        epochs=options["epochs"], learning_rate=options["lr"],
        momentum=options["momentum"], batch_size=options["batch_size"],
        seed=options["seed"], sn_enabled=options["sn"],
        sn_coeff=options["sn_coeff"], hidden_dim=options["hidden_dim"],
        num_blocks=options["num_blocks"])
    model, losses = net.train(dataset, config)
    ckpt = out / "model.ckpt"
    net.save_checkpoint(model, ckpt)
    loss_csv = out / "loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses):
            fh.write(f"{epoch},{loss:.17g}\n")
    _write_manifest(out, "train", options, [ckpt, loss_csv])
    print(f"wrote {ckpt} (final loss {losses[-1]:.6g})")
    return EXIT_OK


def _gather_features(options: dict):
    """Resolve (ref, id, ood, id_labels, id_logits) from files or checkpoint.

    Either the three --*-features IPFF paths are used directly, or a
    checkpoint plus CSV datasets are pushed through the network.
    """
    if options["ref_features"]:
        ref = featfile.read_features(options["ref_features"]).data
        if not options["test_id_features"]:
            raise UsageError("--test-id-features is required with --ref-features")
        idm = featfile.read_features(options["test_id_features"])
        ood = (featfile.read_features(options["test_ood_features"]).data
               if options["test_ood_features"] else None)
        return ref, idm.data, ood, None, None
    if not options["checkpoint"]:
        raise UsageError("either --ref-features or --checkpoint is required")
    model = net.load_checkpoint(options["checkpoint"])
    if not options["ref_data"] or not options["id_data"]:
        raise UsageError("--checkpoint mode needs --ref-data and --id-data")
    ref_ds = featfile.read_csv_features(options["ref_data"])
    id_ds = featfile.read_csv_features(options["id_data"])
    ref, _ = net.forward(model, ref_ds.data)
    id_feats, id_logits = net.forward(model, id_ds.data)
    ood = None
    if options["ood_data"]:
        ood_ds = featfile.read_csv_features(options["ood_data"])
        ood, _ = net.forward(model, ood_ds.data)
    return ref, id_feats, ood, id_ds.labels, id_logits


def _cmd_score(options: dict) -> int:
    out = _out_dir(options)
    ref, id_feats, ood_feats, id_labels, id_logits = _gather_features(options)
    h = options["bandwidth"]
    if h is None:
        h = silverman_bandwidth(ref)
    field = IpfField(reference=ref, bandwidth_h=h)
    threshold = calibrate_threshold(field, options["threshold_percentile"])
    id_scores = field.evaluate(id_feats)
    artifacts = []
    id_csv = out / "scores_id.csv"
    write_scores_csv(id_scores, id_csv, threshold=threshold)
    artifacts.append(id_csv)
    auroc_val = None
    n_ood = 0
    if ood_feats is not None:
        ood_scores = field.evaluate(ood_feats)
        ood_csv = out / "scores_ood.csv"
        write_scores_csv(ood_scores, ood_csv, threshold=threshold)
        artifacts.append(ood_csv)
        auroc_val = metrics.auroc(id_scores, ood_scores)
        n_ood = ood_feats.shape[0]
    acc = ece_val = None
    if id_labels is not None and id_logits is not None:
        preds = id_logits.argmax(axis=1)
        acc = metrics.accuracy(preds, id_labels)
        probs_max = np.exp(net._log_softmax(id_logits)).max(axis=1)
        ece_val = metrics.ece(probs_max, preds == id_labels)
    report = metrics.EvalReport(auroc=auroc_val, accuracy=acc, ece=ece_val,
                                n_id=id_feats.shape[0], n_ood=n_ood,
                                bandwidth_used=h)
    report_path = out / "report.txt"
    report_path.write_text(report.to_kv_text())
    artifacts.append(report_path)
    _write_manifest(out, "score", options, artifacts)
    print(report.to_kv_text(), end="")
    return EXIT_OK


def _cmd_sweep(options: dict) -> int:
    out = _out_dir(options)
    ref, id_feats, ood_feats, _, _ = _gather_features(options)
    if ood_feats is None:
        raise UsageError("sweep needs OOD inputs (--test-ood-features or --ood-data)")
    grid = parse_bandwidth_grid(options["bandwidth_grid"])
    best_h, table = sweep_bandwidth(ref, id_feats, ood_feats, grid)
    sweep_csv = out / "sweep.csv"
    metrics.write_sweep_csv(table, sweep_csv)
    best_path = out / "best_h.txt"
    best_path.write_text(f"best_h={best_h:.17g}\n")
    _write_manifest(out, "sweep", options, [sweep_csv, best_path])
    print(f"best_h={best_h:.17g}")
    return EXIT_OK


def _cmd_heatmap(options: dict) -> int:
    out = _out_dir(options)
    points = featfile.read_csv_features(options["data"]).data
    model = None
    if options["mode"] == gridmap.MODE_FEATURE:
        if not options["checkpoint"]:
            raise UsageError("feature mode requires --checkpoint")
        model = net.load_checkpoint(options["checkpoint"])
        reference, _ = net.forward(model, points)
    else:
        reference = points
    h = options["bandwidth"]
    if h is None:
        h = silverman_bandwidth(reference)
    field = IpfField(reference=reference, bandwidth_h=h)
    grid = gridmap.build_grid(field, model, options["mode"])
    image = gridmap.render(grid, out / "heatmap.pgm")
    _write_manifest(out, "heatmap", options, [image, image.with_suffix(".csv")])
    print(f"wrote {image}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "score": _cmd_score,
    "sweep": _cmd_sweep,
    "heatmap": _cmd_heatmap,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        options = _resolve_options(args)
        return _COMMANDS[args.command](options)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (net.TrainingDivergedError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
