"""Command-line surface for reproducible runs with persisted reports.

Commands: validate, metrics, matrix, diagnose, separability, promptgen,
simulate, split. Every persisted report embeds the toolkit version, the
fully resolved run configuration, and the seed; re-running a command with
the same configuration reproduces the report byte-for-byte except for the
timestamp field. Exit codes: 0 success, 1 I/O failure, 2 validation or
domain error, 3 internal numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, classify, geometry, metrics, promptgen, separability, simulator
from .dataset import (
    ClassLabel,
    Modality,
    apply_label_overrides,
    load_label_overrides,
    load_set,
    save_set,
    split_set,
)
from .errors import (
    EmbedLensError,
    IoFailure,
    ManifestParse,
    NumericalFailure,
    ValidationError,
)

THREADS_ENV_VAR = "EMBEDLENS_THREADS"


def resolve_threads(value: int | None) -> int:
    """--threads flag, then EMBEDLENS_THREADS, then available cores."""
    if value is not None:
        if value < 1:
            raise ValidationError(f"--threads must be >= 1, got {value}")
        return value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            parsed = int(env)
        except ValueError as exc:
            raise ValidationError(
                f"{THREADS_ENV_VAR} must be an integer, got {env!r}"
            ) from exc
        if parsed < 1:
            raise ValidationError(f"{THREADS_ENV_VAR} must be >= 1, got {parsed}")
        return parsed
    return os.cpu_count() or 1


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _config_dict(args: argparse.Namespace) -> dict:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        config[key] = value
    return config


def _report(command: str, args: argparse.Namespace, results) -> dict:
    return {
        "version": __version__,
        "command": command,
        "config": _config_dict(args),
        "seed": getattr(args, "seed", None),
        "timestamp": _timestamp(),
        "results": results,
    }


def _emit_json(report: dict, out) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_csv(report: dict, columns, rows, out) -> None:
    buf = io.StringIO()
    for key in ("version", "command", "seed", "timestamp"):
        buf.write(f"# {key}={report[key]}\n")
    buf.write(f"# config={json.dumps(report['config'], sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _pct(fraction: float) -> str:
    return f"{100.0 * fraction:.1f}"


def _load_labels_file(path) -> list[ClassLabel]:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read class file {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestParse(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise ManifestParse(f"{p}: class file must be a non-empty JSON array")
    labels = []
    for entry in data:
        try:
            labels.append(ClassLabel(int(entry["id"]), str(entry["name"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestParse(f"{p}: bad class entry {entry!r}: {exc}") from exc
    return labels


def cmd_validate(args: argparse.Namespace) -> int:
    results = []
    saw_io = False
    saw_invalid = False
    for path in args.sets:
        try:
            es = load_set(path)
        except IoFailure as exc:
            saw_io = True
            results.append({"path": str(path), "status": "io-error", "error": str(exc)})
            continue
        except ValidationError as exc:
            saw_invalid = True
            results.append({"path": str(path), "status": "invalid", "error": str(exc)})
            continue
        results.append({
            "path": str(path),
            "status": "ok",
            "name": es.name,
            "dimension": es.dimension,
            "modality": es.modality.value,
            "split": es.split.value,
            "classes": len(es.labels),
            "rows": es.n_total,
            "per_class": {str(lb.id): int(es.classes[lb.id].shape[0])
                          for lb in es.labels},
        })
    _emit_json(_report("validate", args, results), args.out)
    if saw_io:
        return 1
    if saw_invalid:
        return 2
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    sets = [load_set(p) for p in args.sets]
    results: dict = {"sets": []}
    for es in sets:
        sm = metrics.set_centroid_distance(es)
        results["sets"].append({
            "name": es.name,
            "split": es.split.value,
            "set_centroid_distance": sm.set_centroid_distance,
            "per_class": [
                {"class_id": cm.class_id, "centroid_distance": cm.centroid_distance,
                 "n": cm.n}
                for cm in sm.per_class
            ],
        })
    if len(sets) == 2:
        a, b = sets
        if set(a.class_ids) != set(b.class_ids):
            raise ValidationError(
                f"sets '{a.name}' and '{b.name}' have different class ids; "
                "per-class comparison is undefined"
            )
        shifts = [
            {"class_id": cid,
             "centroid_shift": metrics.centroid_shift(a.classes[cid], b.classes[cid])}
            for cid in a.class_ids
        ]
        pooled_a, _ = a.stacked()
        pooled_b, _ = b.stacked()
        fd_sq_mean, fd_trace = metrics.frechet_terms(pooled_a, pooled_b,
                                                     squared_mean=True)
        fd_abs_mean, _ = metrics.frechet_terms(pooled_a, pooled_b,
                                               squared_mean=False)
        results["comparison"] = {
            "per_class_shift": shifts,
            "mean_centroid_shift": float(
                np.mean([s["centroid_shift"] for s in shifts])
            ),
            "frechet": {
                "squared_mean_variant": fd_sq_mean + fd_trace,
                "absolute_mean_variant": fd_abs_mean + fd_trace,
                "mean_term_squared": fd_sq_mean,
                "mean_term_absolute": fd_abs_mean,
                "trace_term": fd_trace,
            },
        }
    report = _report("metrics", args, results)
    if args.format == "csv":
        columns = ["set", "class_id", "centroid_distance", "centroid_shift"]
        shift_by_class = {}
        if "comparison" in results:
            shift_by_class = {
                s["class_id"]: s["centroid_shift"]
                for s in results["comparison"]["per_class_shift"]
            }
        rows = []
        for entry in results["sets"]:
            for cm in entry["per_class"]:
                shift = shift_by_class.get(cm["class_id"], "")
                rows.append([
                    entry["name"], cm["class_id"],
                    f"{cm['centroid_distance']:.6e}",
                    f"{shift:.6e}" if shift != "" else "",
                ])
            rows.append([entry["name"], "set",
                         f"{entry['set_centroid_distance']:.6e}", ""])
        _emit_csv(report, columns, rows, args.out)
    else:
        _emit_json(report, args.out)
    return 0


def _matrix_cells_json(cells: list[classify.MatrixCell]) -> list[dict]:
    out = []
    for cell in cells:
        entry = {
            "experiment": cell.experiment,
            "reference_set": cell.reference_set,
            "query_set": cell.query_set,
            "method": cell.method,
        }
        if cell.skipped:
            entry["skipped"] = True
        elif cell.error is not None:
            entry["error"] = cell.error
        else:
            entry["accuracy"] = cell.result.overall_accuracy
            entry["avg_cos_similarity"] = cell.result.avg_cos_similarity
            entry["n_queries"] = cell.result.n_queries
            entry["per_class_accuracy"] = {
                str(cid): acc
                for cid, acc in sorted(cell.result.per_class_accuracy.items())
            }
        out.append(entry)
    return out


def cmd_matrix(args: argparse.Namespace) -> int:
    sets = [load_set(p) for p in args.sets]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    skip = []
    if args.skip:
        try:
            skip = json.loads(Path(args.skip).read_text())
        except OSError as exc:
            raise IoFailure(f"cannot read skip list {args.skip}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestParse(f"bad skip list {args.skip}: {exc}") from exc
        if not isinstance(skip, list):
            raise ManifestParse(f"{args.skip}: skip list must be a JSON array")
    cells = classify.run_experiment_matrix(
        sets, methods, args.seed, skip=skip, threads=resolve_threads(args.threads)
    )
    report = _report("matrix", args, _matrix_cells_json(cells))
    if args.format == "json":
        _emit_json(report, args.out)
    else:
        columns = ["experiment", "reference_set", "query_set", "method",
                   "accuracy", "avg_cos_similarity", "error"]
        rows = []
        for cell in cells:
            if cell.skipped:
                rows.append([cell.experiment, cell.reference_set, cell.query_set,
                             cell.method, "", "", "skipped"])
            elif cell.error is not None:
                rows.append([cell.experiment, cell.reference_set, cell.query_set,
                             cell.method, "", "", cell.error])
            else:
                rows.append([
                    cell.experiment, cell.reference_set, cell.query_set,
                    cell.method, _pct(cell.result.overall_accuracy),
                    f"{cell.result.avg_cos_similarity:.4f}", "",
                ])
        _emit_csv(report, columns, rows, args.out)
    if any(cell.result is not None for cell in cells):
        return 0
    return 2


def cmd_diagnose(args: argparse.Namespace) -> int:
    refs = load_set(args.references)
    natural = load_set(args.natural_queries)
    synthetic = load_set(args.synthetic_queries)
    natural_result = classify.centroid_accuracy(refs, natural, args.seed)
    synthetic_result = classify.centroid_accuracy(refs, synthetic, args.seed)
    tags = classify.diagnose_class_failures(
        natural_result, synthetic_result,
        low_threshold=args.low_threshold, high_threshold=args.high_threshold,
    )
    names = {lb.id: lb.name for lb in refs.labels}
    results = [
        {
            "class_id": cid,
            "class_name": names.get(cid, ""),
            "natural_accuracy": natural_result.per_class_accuracy[cid],
            "synthetic_accuracy": synthetic_result.per_class_accuracy[cid],
            "tag": tags[cid].value,
        }
        for cid in sorted(tags)
    ]
    report = _report("diagnose", args, results)
    if args.format == "csv":
        columns = ["class_id", "class_name", "natural_accuracy",
                   "synthetic_accuracy", "tag"]
        rows = [
            [r["class_id"], r["class_name"], _pct(r["natural_accuracy"]),
             _pct(r["synthetic_accuracy"]), r["tag"]]
            for r in results
        ]
        _emit_csv(report, columns, rows, args.out)
    else:
        _emit_json(report, args.out)
    return 0


def cmd_separability(args: argparse.Namespace) -> int:
    set_a = load_set(args.set_a)
    set_b = load_set(args.set_b)
    rows_a, _ = set_a.stacked()
    rows_b, _ = set_b.stacked()
    probe = separability.train_linear_probe(
        geometry.normalize_rows(rows_a),
        geometry.normalize_rows(rows_b),
        max_epochs=args.max_epochs,
        seed=args.seed,
    )
    results = {
        "set_a": set_a.name,
        "set_b": set_b.name,
        "points_a": rows_a.shape[0],
        "points_b": rows_b.shape[0],
        "separable": probe.separable,
        "training_accuracy": probe.training_accuracy,
        "epochs_used": probe.epochs_used,
        "margin": probe.margin,
        "bias": probe.bias,
        "weights": [float(w) for w in probe.weights],
    }
    _emit_json(_report("separability", args, results), args.out)
    return 0


def cmd_promptgen(args: argparse.Namespace) -> int:
    labels = _load_labels_file(args.classes)
    if args.overrides:
        labels = apply_label_overrides(labels, load_label_overrides(args.overrides))
    lexicon = (
        promptgen.load_lexicon(args.lexicon) if args.lexicon
        else promptgen.default_lexicon()
    )
    records = promptgen.generate_prompt_set(
        labels, args.per_class, lexicon, args.seed
    )
    promptgen.write_prompt_manifest(records, args.manifest)
    results = {
        "classes": len(labels),
        "per_class": args.per_class,
        "records": len(records),
        "manifest": str(args.manifest),
        "manifest_sha256": _sha256(args.manifest),
    }
    _emit_json(_report("promptgen", args, results), args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = simulator.ClusterSpec(
        dimension=args.dimension,
        classes=args.classes,
        per_class=args.per_class,
        spread=args.spread,
        shift_degrees=args.shift_degrees,
        seed=args.seed,
    )
    references, queries = simulator.simulate_experiment(
        spec, name=args.name, modality=Modality(args.modality)
    )
    save_set(references, args.out_ref)
    save_set(queries, args.out_query)
    results = {
        "references": {"path": str(args.out_ref), "sha256": _sha256(args.out_ref)},
        "queries": {"path": str(args.out_query), "sha256": _sha256(args.out_query)},
        "rows_per_set": references.n_total,
    }
    _emit_json(_report("simulate", args, results), args.out)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    es = load_set(args.set)
    train, evaluation = split_set(es, args.eval_fraction, args.seed)
    save_set(train, args.out_train)
    save_set(evaluation, args.out_eval)
    results = {
        "train": {"path": str(args.out_train), "rows": train.n_total,
                  "sha256": _sha256(args.out_train)},
        "eval": {"path": str(args.out_eval), "rows": evaluation.n_total,
                 "sha256": _sha256(args.out_eval)},
    }
    _emit_json(_report("split", args, results), args.out)
    return 0


def _add_common(parser: argparse.ArgumentParser, default_format: str = "json") -> None:
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for every random choice (default 0)")
    parser.add_argument("--out", type=Path, default=None,
                        help="write the report here instead of stdout")
    parser.add_argument("--format", choices=("csv", "json"), default=default_format,
                        help=f"report format (default {default_format})")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap internal parallelism (default: all cores, "
                             f"or {THREADS_ENV_VAR})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedlens",
        description="Diagnostics for labeled embedding sets in a joint "
                    "text/image space.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load sets and report their invariants")
    p.add_argument("sets", nargs="+", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="diversity metrics for one set, plus "
                                       "shift and Frechet distance for a pair")
    p.add_argument("sets", nargs="+", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("matrix", help="run the full reference x query x method "
                                      "experiment matrix")
    p.add_argument("sets", nargs="+", type=Path)
    p.add_argument("--methods", default="centroid,knn1,knn5",
                   help="comma list of centroid/knn<k> (default "
                        "centroid,knn1,knn5)")
    p.add_argument("--skip", type=Path, default=None,
                   help="JSON array of {reference?,query?,method?} cells to skip")
    _add_common(p, default_format="csv")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("diagnose", help="tag per-class failure modes from "
                                        "natural vs synthetic query accuracy")
    p.add_argument("references", type=Path)
    p.add_argument("natural_queries", type=Path)
    p.add_argument("synthetic_queries", type=Path)
    p.add_argument("--low-threshold", type=float, default=0.65)
    p.add_argument("--high-threshold", type=float, default=0.75)
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("separability", help="linear separability probe between "
                                            "two sets' pooled embeddings")
    p.add_argument("set_a", type=Path)
    p.add_argument("set_b", type=Path)
    p.add_argument("--max-epochs", type=int, default=separability.DEFAULT_MAX_EPOCHS)
    _add_common(p)
    p.set_defaults(func=cmd_separability)

    p = sub.add_parser("promptgen", help="generate a unique-prompt manifest "
                                         "from a class list")
    p.add_argument("classes", type=Path, help="JSON array of {id, name}")
    p.add_argument("manifest", type=Path, help="output JSON-lines manifest")
    p.add_argument("--lexicon", type=Path, default=None,
                   help="modifier lexicon JSON (default: built-in)")
    p.add_argument("--overrides", type=Path, default=None,
                   help="label-override JSON to apply before generation")
    p.add_argument("--per-class", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_promptgen)

    p = sub.add_parser("simulate", help="generate a synthetic reference/query "
                                        "set pair with known dials")
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--shift-degrees", type=float, default=0.0)
    p.add_argument("--name", default="simulated")
    p.add_argument("--modality", choices=("IM", "PRMT"), default="IM")
    p.add_argument("--out-ref", type=Path, required=True)
    p.add_argument("--out-query", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("split", help="partition a set into train/eval splits")
    p.add_argument("set", type=Path)
    p.add_argument("--eval-fraction", type=float, default=0.04)
    p.add_argument("--out-train", type=Path, required=True)
    p.add_argument("--out-eval", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_split)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EmbedLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
