"""Command-line entry point.

Subcommands: synth, train, evaluate, predict, gradcheck, serve.  Each
file-writing command drops a manifest next to its primary output with
the fully resolved configuration and seeds, so any run can be
reproduced from the manifest alone.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or
configuration error.  Informational output goes to stderr (verbosity
via the IARN_LOG environment variable); data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .data import SYNTH_KINDS, parse_csv, synth_series, write_csv
from .errors import ConfigError, IarnError
from .metrics import CSV_HEADER
from .model import ModelConfig, load_model, save_model
from .pipeline import (
    evaluate_on_records,
    full_network_grad_check,
    predict_ahead,
    train_on_records,
)
from .training import TrainConfig

log = logging.getLogger("iarn.cli")


def _setup_logging() -> None:
    level_name = os.environ.get("IARN_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        print(
            f"warning: IARN_LOG={level_name!r} not one of error|info|debug; "
            "using info",
            file=sys.stderr,
        )
        level_name = "info"
    logging.basicConfig(
        level=levels[level_name],
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _manifest_path(output: Path) -> Path:
    return output.parent / (output.stem + ".manifest.json")


def _write_manifest(output: Path, command: str, config: dict, seeds: dict,
                    inputs: dict, outputs: dict) -> None:
    doc = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
    }
    path = _manifest_path(output)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_seeds(args) -> tuple[int, int]:
    init_seed = args.init_seed if args.init_seed is not None else args.seed
    shuffle_seed = args.shuffle_seed if args.shuffle_seed is not None else args.seed
    return init_seed, shuffle_seed


def cmd_synth(args) -> int:
    records = synth_series(args.kind, args.n, args.noise, args.seed)
    if args.out is None:
        write_csv(records, sys.stdout)
        return 0
    out = Path(args.out)
    write_csv(records, out)
    _write_manifest(
        out, "synth",
        {"kind": args.kind, "n": args.n, "noise": args.noise},
        {"noise": args.seed},
        {}, {"data": str(out)},
    )
    log.info("wrote %d records to %s", len(records), out)
    return 0


def cmd_train(args) -> int:
    init_seed, shuffle_seed = _resolve_seeds(args)
    mcfg = ModelConfig(
        window_len=args.window,
        hidden_channels=args.hidden,
        kernel_size=args.kernel,
        num_blocks=args.blocks,
        seed=init_seed,
    )
    tcfg = TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=shuffle_seed,
    )
    records = parse_csv(args.data)
    log.info("training on %d records (window=%d, epochs=%d)",
             len(records), mcfg.window_len, tcfg.epochs)
    result = train_on_records(records, mcfg, tcfg, train_fraction=args.train_fraction)

    out = Path(args.out)
    save_model(result.params, result.config, result.scaler, out)
    history_path = out.parent / (out.stem + ".history.csv")
    history_path.write_text(result.history.to_csv(), encoding="utf-8")
    _write_manifest(
        out, "train",
        {
            "window_len": mcfg.window_len, "hidden_channels": mcfg.hidden_channels,
            "kernel_size": mcfg.kernel_size, "num_blocks": mcfg.num_blocks,
            "learning_rate": tcfg.learning_rate, "beta1": tcfg.beta1,
            "beta2": tcfg.beta2, "epsilon": tcfg.epsilon,
            "weight_decay": tcfg.weight_decay, "epochs": tcfg.epochs,
            "batch_size": tcfg.batch_size, "train_fraction": args.train_fraction,
        },
        {"init": init_seed, "shuffle": shuffle_seed},
        {"data": str(args.data)},
        {"model": str(out), "history": str(history_path)},
    )
    final_loss = result.history.train_loss[-1]
    log.info("final train loss %.6g; model saved to %s", final_loss, out)
    print(repr(final_loss))
    return 0


def cmd_evaluate(args) -> int:
    params, config, scaler = load_model(args.model)
    records = parse_csv(args.data)
    report, rows = evaluate_on_records(
        params, config, scaler, records, train_fraction=args.split
    )
    prefix = Path(args.out_prefix)
    metrics_json = prefix.parent / (prefix.name + ".metrics.json")
    metrics_csv = prefix.parent / (prefix.name + ".metrics.csv")
    predictions_csv = prefix.parent / (prefix.name + ".predictions.csv")
    metrics_json.write_text(report.to_json() + "\n", encoding="utf-8")
    metrics_csv.write_text(
        CSV_HEADER + "\n" + report.to_csv_row() + "\n", encoding="utf-8"
    )
    with open(predictions_csv, "w", encoding="utf-8") as fh:
        fh.write("timestamp,actual,predicted\n")
        for row in rows:
            ts = row.timestamp.isoformat().replace("+00:00", "Z")
            fh.write(f"{ts},{row.actual!r},{row.predicted!r}\n")
    _write_manifest(
        prefix, "evaluate",
        {"split": args.split},
        {},
        {"model": str(args.model), "data": str(args.data)},
        {
            "metrics_json": str(metrics_json),
            "metrics_csv": str(metrics_csv),
            "predictions": str(predictions_csv),
        },
    )
    log.info("evaluated %d predictions; EVS=%.4f", report.n, report.evs)
    print(report.to_json())
    return 0


def cmd_predict(args) -> int:
    params, config, scaler = load_model(args.model)
    records = parse_csv(args.data)
    values = predict_ahead(params, config, scaler, records, steps=args.steps)
    lines = "".join(f"{v!r}\n" for v in values)
    if args.out is None:
        sys.stdout.write(lines)
        return 0
    out = Path(args.out)
    out.write_text(lines, encoding="utf-8")
    _write_manifest(
        out, "predict",
        {"steps": args.steps},
        {},
        {"model": str(args.model), "data": str(args.data)},
        {"predictions": str(out)},
    )
    return 0


def cmd_gradcheck(args) -> int:
    error = full_network_grad_check(seed=args.seed)
    print(repr(error))
    if error < args.threshold:
        log.info("gradient check passed: %.3g < %.3g", error, args.threshold)
        return 0
    log.error("gradient check FAILED: %.3g >= %.3g", error, args.threshold)
    return 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iarn",
        description="Train, evaluate and serve the attention-residual flow forecaster.",
    )
    parser.add_argument("--version", action="version", version=f"iarn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic hourly series CSV")
    p.add_argument("--kind", required=True, choices=SYNTH_KINDS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV (stdout when omitted)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a timestamp,value CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--blocks", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--weight-decay", type=float, default=0.0005)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0, help="sets both seeds below")
    p.add_argument("--init-seed", type=int, default=None,
                   help="parameter init seed (overrides --seed)")
    p.add_argument("--shuffle-seed", type=int, default=None,
                   help="epoch shuffle seed (overrides --seed)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score one-step predictions on the test split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", type=float, default=0.8,
                   help="chronological train fraction; the rest is scored")
    p.add_argument("--out-prefix", default="eval")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="forecast values after the last record")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the HTTP forecasting service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IarnError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
