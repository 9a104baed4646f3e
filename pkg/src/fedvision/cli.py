"""Command-line entry point: gen-data, train, eval, anonymize, sweep.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
Every command validates its full configuration before touching the
filesystem. The FEDVISION_THREADS environment variable caps per-round
client-training parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import anonymize as anonymize_mod
from . import data as data_mod
from . import experiments, fedcore, metrics, simnet
from .config import ConfigError, load_config
from .detector import (
    ModelConfig,
    TrainConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .netpbm import read_netpbm, write_netpbm
from .types import Detection

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedvision",
        description="Federated grid-detector pipeline: data, training, "
        "evaluation, anonymization and table sweeps.",
    )
    parser.add_argument("--config", help="JSON config file (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--count", type=int, help="total number of samples")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--image-size", type=int, dest="image_size")
    p.add_argument("--max-objects", type=int, dest="max_objects")

    p = sub.add_parser("train", help="train a detector, write a checkpoint")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--mode", choices=["centralized", "federated"], required=True)
    p.add_argument("--epochs", type=int, help="epochs (per round when federated)")
    p.add_argument("--rounds", type=int, help="federated rounds / centralized seed blocks")
    p.add_argument("--method", choices=["fedavg", "fedopt"])
    p.add_argument("--clients", type=int)
    p.add_argument("--drop-prob", type=float, dest="drop_prob")
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics-csv", dest="metrics_csv", help="append a metrics row here")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", help="checkpoint path (omit with --oracle)")
    p.add_argument("--oracle", action="store_true", help="score ground truth fed back as detections")
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics-csv", dest="metrics_csv")

    p = sub.add_parser("anonymize", help="blur detected regions of an image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input PGM/PPM image")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--report", help="write the anonymization report JSON here")
    p.add_argument("--debug-boxes", action="store_true", dest="debug_boxes",
                   help="also write an outlined (unblurred) variant")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="run a full experiment table")
    p.add_argument("--preset", required=True, help="sweep preset (paper-shape)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int)
    p.add_argument("--loss-series-dir", dest="loss_series_dir")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "anonymize": cmd_anonymize,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def _apply_overrides(cfg, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    for attr, target in (
        ("count", ("data", "count")),
        ("image_size", ("data", "image_size")),
        ("max_objects", ("data", "max_objects")),
        ("epochs", ("train", "epochs")),
        ("rounds", ("federated", "rounds")),
        ("method", ("federated", "method")),
        ("clients", ("federated", "clients")),
        ("drop_prob", ("federated", "drop_prob")),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(getattr(cfg, target[0]), target[1], value)


def _model_config(cfg) -> ModelConfig:
    return ModelConfig(
        image_size=cfg.data.image_size,
        grid_s=cfg.model.grid_size,
        num_classes=cfg.model.num_classes,
        hidden_units=cfg.model.hidden_units,
        seed=cfg.module_seed("model"),
    )


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.train.epochs,
        batch_size=cfg.train.batch_size,
        learning_rate=cfg.train.learning_rate,
        seed=cfg.module_seed("train"),
    )


def cmd_gen_data(cfg, args) -> int:
    samples = data_mod.generate_dataset(
        cfg.data.count,
        cfg.data.image_size,
        cfg.data.max_objects,
        cfg.module_seed("data"),
    )
    split = data_mod.split_dataset(
        samples,
        (cfg.data.train_frac, cfg.data.val_frac, cfg.data.test_frac),
        cfg.module_seed("split"),
    )
    manifest = data_mod.save_dataset(split, args.out)
    print(
        f"wrote {len(split.train)}/{len(split.val)}/{len(split.test)} "
        f"train/val/test samples to {args.out}"
    )
    print(f"manifest: {manifest} sha256={data_mod.manifest_digest(args.out)}")
    return 0


def cmd_train(cfg, args) -> int:
    if args.mode == "federated" and args.rounds is None:
        raise ConfigError("--mode federated requires --rounds")
    split = data_mod.load_dataset(args.data)
    mc = _model_config(cfg)
    tc = _train_config(cfg)
    started = time.process_time()
    if args.mode == "centralized":
        blocks = args.rounds if args.rounds is not None else 1
        params = experiments.centralized_train(split.train, tc, mc, blocks=blocks)
        epochs, rounds, method = tc.epochs, blocks, "centralized"
    else:
        partition = data_mod.partition_iid(
            split.train, cfg.federated.clients, cfg.module_seed("partition")
        )
        fl = simnet.FLConfig(
            rounds=cfg.federated.rounds,
            strategy=cfg.federated.method,
            min_fit_clients=cfg.federated.min_fit_clients,
            fedopt=fedcore.FedOptConfig(
                server_lr=cfg.federated.server_lr,
                beta1=cfg.federated.beta1,
                beta2=cfg.federated.beta2,
                tau=cfg.federated.tau,
            ),
        )
        policy = simnet.DropoutPolicy(cfg.federated.drop_prob, cfg.module_seed("dropout"))
        state, ledger, _ = simnet.simulate_training(mc, tc, fl, policy, partition)
        params = state.global_params
        epochs, rounds, method = tc.epochs, cfg.federated.rounds, cfg.federated.method
        print(
            f"communication: {ledger.total_bytes(simnet.UPLINK)} uplink bytes, "
            f"{ledger.total_bytes(simnet.DOWNLINK)} downlink bytes"
        )
    elapsed = time.process_time() - started
    save_checkpoint(params, mc, args.out)
    print(f"checkpoint written to {args.out} ({params.shape[0]} parameters)")
    if args.metrics_csv:
        result = metrics.evaluate(
            params, split.test, mc, cfg.eval.score_threshold, cfg.eval.nms_iou
        )
        _append_metrics_row(
            args.metrics_csv,
            experiments.MetricsReport(epochs, rounds, method, result, elapsed),
        )
    return 0


def cmd_eval(cfg, args) -> int:
    if not args.oracle and not args.checkpoint:
        raise ConfigError("eval requires --checkpoint (or --oracle)")
    split = data_mod.load_dataset(args.data)
    mc = _model_config(cfg)
    if args.oracle:
        dets = [
            [Detection(a.class_id, a.box, 1.0) for a in s.annotations]
            for s in split.test
        ]
        truths = [s.annotations for s in split.test]
        result = metrics.evaluate_detections(
            dets, truths, mc.num_classes, mean_loss=0.0,
            pr_score_threshold=cfg.eval.score_threshold,
        )
        label = "oracle"
    else:
        params = load_checkpoint(args.checkpoint, expected_config=mc)
        result = metrics.evaluate(
            params, split.test, mc, cfg.eval.score_threshold, cfg.eval.nms_iou
        )
        label = str(args.checkpoint)
    print(
        f"{label}: mAP50={result.map50:.4f} mAP50-95={result.map50_95:.4f} "
        f"recall={result.recall:.4f} precision={result.precision:.4f} "
        f"loss={result.mean_loss:.4f}"
    )
    if args.metrics_csv:
        _append_metrics_row(
            args.metrics_csv,
            experiments.MetricsReport(0, 0, label if args.oracle else "eval", result, 0.0),
        )
    return 0


def cmd_anonymize(cfg, args) -> int:
    mc = _model_config(cfg)
    params = load_checkpoint(args.checkpoint, expected_config=mc)
    image = read_netpbm(args.image)

    def sigma_rule(w_px: float, h_px: float) -> float:
        return max(cfg.anonymize.sigma_floor, max(w_px, h_px) / cfg.anonymize.sigma_divisor)

    blurred, report = anonymize_mod.anonymize_image(
        params,
        image,
        mc,
        cfg.eval.score_threshold,
        cfg.eval.nms_iou,
        sigma_rule,
        cfg.anonymize.pad_frac,
    )
    write_netpbm(blurred, args.out)
    print(f"blurred {len(report.blurred_boxes)} region(s) -> {args.out}")
    if args.debug_boxes:
        outlined = anonymize_mod.outline_regions(
            image, [box for box, _ in report.blurred_boxes]
        )
        debug_path = _with_suffix(args.out, ".boxes")
        write_netpbm(outlined, debug_path)
        print(f"outlined debug copy -> {debug_path}")
    if args.report:
        tree = {
            "pixels_modified": report.pixels_modified,
            "boxes": [
                {
                    "cx": box.cx,
                    "cy": box.cy,
                    "w": box.w,
                    "h": box.h,
                    "sigma": sigma,
                }
                for box, sigma in report.blurred_boxes
            ],
        }
        Path(args.report).write_text(json.dumps(tree, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_sweep(cfg, args) -> int:
    if args.preset != "paper-shape":
        raise ConfigError(f"unknown preset {args.preset!r}")
    split = data_mod.load_dataset(args.data)
    mc = _model_config(cfg)
    result = experiments.run_paper_shape_sweep(
        split,
        model=mc,
        seed=cfg.module_seed("train"),
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
        loss_series_dir=args.loss_series_dir,
    )
    experiments.write_reports_csv(result.all_rows, args.out)
    print(f"{len(result.all_rows)} rows -> {args.out}")
    for metric, method in sorted(result.method_winners.items()):
        print(f"  better {metric}: {method}")
    return 0


def _append_metrics_row(path: str, report: experiments.MetricsReport) -> None:
    target = Path(path)
    new_file = not target.exists()
    with open(target, "a", newline="") as fh:
        import csv

        writer = csv.writer(fh)
        if new_file:
            writer.writerow(experiments.CSV_HEADER)
        writer.writerow(report.csv_row())


def _with_suffix(path: str, extra: str) -> str:
    p = Path(path)
    return str(p.with_name(p.stem + extra + p.suffix))


if __name__ == "__main__":
    sys.exit(main())
