"""Command-line front end: corpus generation, condensation, evaluation, and
artifact inspection.

Exit codes: 0 success, 1 I/O or file-format error, 2 flag or config error,
3 numerical divergence. Failures put one JSON object on stderr; stdout
carries only data and progress lines.
"""

from __future__ import annotations

import os

if os.environ.get("CFCONDENSE_THREADS"):
    # Caps BLAS parallelism; only effective before numpy first initializes.
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CFCONDENSE_THREADS"])

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import condenser, data_model, evaluator
from .errors import (
    CondensationError,
    ConfigError,
    DivergenceError,
    FormatError,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _emit_error(exc: BaseException) -> None:
    print(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        file=sys.stderr,
    )


def _apply_overrides(config_dict: dict, overrides: list[str]) -> dict:
    """Apply key=value pairs over a config dict. Keys may be dotted
    (weights.cross); every key must already exist in the config."""
    out = json.loads(json.dumps(config_dict))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(target, dict) or part not in target:
                raise ConfigError(f"override references unknown config key {key!r}")
            target = target[part]
        if not isinstance(target, dict) or parts[-1] not in target:
            raise ConfigError(f"override references unknown config key {key!r}")
        target[parts[-1]] = value
    return out


def cmd_generate(args) -> int:
    total = args.per_class + args.test_per_class
    corpus = data_model.generate_corpus(
        num_classes=args.classes,
        per_class=total,
        dim=args.dim,
        modality_count=args.modalities,
        class_separation=args.separation,
        cross_modal_coupling=args.coupling,
        seed=args.seed,
    )
    out = Path(args.out)
    if args.test_per_class > 0:
        train, test = data_model.split_corpus(corpus, args.per_class)
        manifest = data_model.save_dataset(train, out, seed=args.seed)
        test_manifest = data_model.save_dataset(
            test, out / "test", seed=args.seed, manifest_name="manifest.json"
        )
        summary = {"manifest": str(manifest), "test_manifest": str(test_manifest)}
    else:
        manifest = data_model.save_dataset(corpus, out, seed=args.seed)
        summary = {"manifest": str(manifest)}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_condense(args) -> int:
    config_dict = json.loads(Path(args.config).read_text())
    if not isinstance(config_dict, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    config_dict = _apply_overrides(config_dict, args.override)
    config = condenser.CondenseConfig.from_dict(config_dict)
    dataset = data_model.load_dataset(args.data, normalize=args.normalize)
    config.validate(dataset.num_classes, len(dataset.modalities))
    syn, trace = condenser.condense(dataset, config)
    condenser.save_checkpoint(syn, trace, args.out)
    print(
        json.dumps(
            {
                "checkpoint": str(Path(args.out) / "checkpoint.json"),
                "iterations": len(trace.entries),
                "initial_total": trace.entries[0].total,
                "final_total": trace.entries[-1].total,
            }
        )
    )
    return EXIT_OK


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from e


def cmd_eval(args) -> int:
    dataset = data_model.load_dataset(args.data, normalize=args.normalize)
    test = (
        data_model.load_dataset(args.test, normalize=args.normalize)
        if args.test
        else dataset
    )
    seeds = _parse_int_list(args.seeds)
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    probe = evaluator.ProbeConfig()

    if args.syn:
        syn, trace = condenser.load_checkpoint(args.syn)
        full = [
            evaluator.train_linear_probe(dataset, test, replace(probe, seed=s))
            for s in seeds
        ]
        rows = []
        for s in seeds:
            acc = evaluator.train_linear_probe(syn, test, replace(probe, seed=s))
            row = {
                "method": "checkpoint",
                "dpc": syn.dpc,
                "seed": s,
                "probe_accuracy": acc,
            }
            row.update(evaluator.retrieval_recalls(syn, (1, 5, 10)))
            rows.append(row)
        accs = np.array([r["probe_accuracy"] for r in rows])
        aggregates = [
            {
                "method": "checkpoint",
                "dpc": syn.dpc,
                "probe_accuracy_mean": float(accs.mean()),
                "probe_accuracy_std": float(accs.std()),
            }
        ]
        trace_summary = []
        if trace is not None and trace.entries:
            trace_summary.append(
                {
                    "method": "checkpoint",
                    "dpc": syn.dpc,
                    "seed": None,
                    "initial_total": trace.entries[0].total,
                    "final_total": trace.entries[-1].total,
                }
            )
        report = evaluator.EvalReport(
            full_data_accuracy_mean=float(np.mean(full)),
            full_data_accuracy_std=float(np.std(full)),
            rows=rows,
            aggregates=aggregates,
            trace_summary=trace_summary,
        )
        report.validate()
    else:
        if not args.method:
            raise ConfigError("eval needs either --syn or --method")
        dpc_list = _parse_int_list(args.dpc)
        if not dpc_list:
            raise ConfigError("--dpc must name at least one value")
        cfg = condenser.CondenseConfig(dpc=max(dpc_list), seed=seeds[0])
        if args.iterations is not None:
            cfg = replace(cfg, iterations=args.iterations)
        report = evaluator.compare_methods(
            dataset, test, dpc_list, args.method, seeds, condense_config=cfg
        )

    csv_path, json_path = evaluator.write_report(report, args.report_out)
    print(json.dumps({"csv": str(csv_path), "json": str(json_path)}))
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.file)
    if path.suffix == ".json":
        from .errors import NotFoundError, ValidationError

        if not path.exists():
            raise NotFoundError(f"no such file: {path}")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON: {e}") from e
        if "iterations" in payload:
            entries = payload["iterations"]
            print(
                json.dumps(
                    {
                        "kind": "trace",
                        "iterations": len(entries),
                        "final_total": entries[-1]["total"] if entries else None,
                    }
                )
            )
        else:
            print(json.dumps({"kind": "json", "keys": sorted(payload)}))
        return EXIT_OK

    es = data_model.read_embedding_file(path)
    counts = np.bincount(es.labels)
    print(
        json.dumps(
            {
                "kind": "embd",
                "modality": es.modality_name,
                "dim": es.dim,
                "count": es.count,
                "num_labels": int(es.labels.max()) + 1,
                "per_class_counts": counts.tolist(),
                "mean_norm": float(np.linalg.norm(es.data, axis=1).mean()),
                "finite": bool(np.all(np.isfinite(es.data))),
            }
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfcondense",
        description="Condense paired multi-modal embedding datasets by "
        "characteristic-function matching.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic paired corpus")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--modalities", type=int, default=2)
    g.add_argument("--separation", type=float, default=2.0)
    g.add_argument("--coupling", type=float, default=0.8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--test-per-class", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("condense", help="optimize a synthetic set against a corpus")
    c.add_argument("--data", required=True, help="dataset manifest path")
    c.add_argument("--config", required=True, help="condense config JSON path")
    c.add_argument("--out", required=True, help="checkpoint output directory")
    c.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable; dotted keys allowed)",
    )
    c.add_argument(
        "--normalize",
        action="store_true",
        help="L2-normalize embedding rows on load (default: use stored values)",
    )
    c.set_defaults(func=cmd_condense)

    e = sub.add_parser("eval", help="evaluate a checkpoint or run baselines")
    e.add_argument("--data", required=True, help="dataset manifest path")
    e.add_argument("--test", default=None, help="held-out manifest (default: --data)")
    e.add_argument("--syn", default=None, help="checkpoint directory to evaluate")
    e.add_argument(
        "--method",
        action="append",
        default=None,
        choices=list(evaluator.METHODS),
        help="baseline method to run (repeatable)",
    )
    e.add_argument("--dpc", default="10", help="comma-separated dpc list")
    e.add_argument("--seeds", default="0", help="comma-separated seed list")
    e.add_argument("--iterations", type=int, default=None)
    e.add_argument(
        "--normalize",
        action="store_true",
        help="L2-normalize embedding rows on load (default: use stored values)",
    )
    e.add_argument("--report-out", required=True)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="print header and statistics of an artifact")
    i.add_argument("--file", required=True)
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_CONFIG
    try:
        return args.func(args)
    except DivergenceError as e:
        _emit_error(e)
        return EXIT_DIVERGED
    except FormatError as e:
        _emit_error(e)
        return EXIT_IO
    except CondensationError as e:
        _emit_error(e)
        return EXIT_CONFIG
    except OSError as e:
        _emit_error(e)
        return EXIT_IO
    except json.JSONDecodeError as e:
        _emit_error(e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
