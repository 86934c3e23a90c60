"""
``sdp`` command-line entry point.

Stages read and write SDPB files::

    sdp generate  --seed S --out rec.sdpb            scene preset -> recording
    sdp ingest    rec.sdpb --out canon.sdpb          adapter ordering
    sdp window    canon.sdpb --out blocks.sdpb       sliding windows (+ session stats)
    sdp decompose blocks.sdpb --seed S --out cp.sdpb CP-ALS per block
    sdp pool      cp.sdpb --out h.sdpb --csv h.csv   descriptor table
    sdp train     h.sdpb --seed S --out model.sdpb   multi-task heads (+ CSV history)
    sdp eval      model.sdpb h.sdpb --out m.json     per-task metrics
    sdp bench     --seeds 992,863 --out dir          seeded benchmark reports
    sdp inspect   file.sdpb                          header as JSON

Exit codes: 0 success, 1 other protocol error, 2 configuration or usage
error, 3 I/O or container error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import secrets
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from . import artifacts
from .bench import (BenchConfig, SplitPlan, VARIANTS, primary_metric, run_benchmark,
                    split_cross_user, task_metrics, write_reports)
from .channel import NoiseConfig, SamplingGrid, scene_preset, synth_csi
from .config import PipelineConfig
from .container import deserialize_blocks, deserialize_recording, read_header, serialize_blocks, serialize_recording
from .cpals import cp_als
from .errors import ConfigError, ContainerError, NumericalError, SdpError
from .mtl import TASKS, TrainConfig, label_mask, predict, train
from .pipeline import block_view, raw_features
from .pooling import field_names, pool
from .schema import AdapterDescriptor, SessionStats, ingest, window
from .seeding import derive_seed

log = logging.getLogger("sdp")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    """Usage errors raise instead of exiting so ``main`` owns the exit code."""

    def error(self, message):
        raise _UsageError(message, self.format_usage())


class _UsageError(Exception):
    def __init__(self, message, usage):
        super().__init__(message)
        self.usage = usage


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path: str, data: bytes):
    with open(path, "wb") as fh:
        fh.write(data)


def _resolve_seed(args, cfg: PipelineConfig, required: bool = True) -> Optional[int]:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        return args.seed
    if cfg.seed is not None:
        return cfg.seed
    if args.seed_from_entropy:
        seed = secrets.randbits(63)
        print(f"sdp: seed from entropy: {seed}", file=sys.stderr)
        return seed
    if required:
        raise ConfigError("no seed given: pass --seed N (or set 'seed' in the config), "
                          "or opt into --seed-from-entropy")
    return None


def _plan(args, cfg, seed, inputs, outputs, **extra) -> bool:
    """Print the resolved plan under ``--dry-run``; returns True when dry."""
    if not args.dry_run:
        return False
    plan = {"command": args.command, "seed": seed, "inputs": list(inputs),
            "outputs": [o for o in outputs if o], "config": cfg.to_dict(), **extra}
    print(json.dumps(plan, indent=2, sort_keys=True))
    return True


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _csv_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_generate(args, cfg: PipelineConfig) -> int:
    seed = _resolve_seed(args, cfg)
    params = dict(cfg.scene.params)
    params.update(dict(_parse_param(p) for p in args.param or ()))
    kind = args.kind or cfg.scene.kind
    if _plan(args, cfg, seed, [], [args.out], scene={"kind": kind, "params": params}):
        return EXIT_OK
    g = cfg.grid
    grid = SamplingGrid.uniform(n_rx=g.n_rx, n_tx=g.n_tx, n_subcarriers=g.n_subcarriers,
                                center_freq=g.center_freq, spacing=g.spacing,
                                packet_rate=g.packet_rate, n_packets=g.n_packets, t0=g.t0)
    scene = scene_preset(kind, params, seed)
    noise = NoiseConfig(cfg.noise.sigma2, derive_seed(seed, 1), cfg.noise.timing_offset_std)
    user = params.get("user", 0)
    rec = synth_csi(scene, grid, noise, session_id=args.session or f"{kind}-u{user}-s{seed}",
                    user_id=args.user_id or f"u{user}")
    _write(args.out, serialize_recording(rec))
    return EXIT_OK


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    if _plan(args, cfg, args.seed, [args.input] + ([args.adapter] if args.adapter else []), [args.out]):
        return EXIT_OK
    rec = deserialize_recording(_read(args.input))
    if args.adapter:
        adapter = AdapterDescriptor.from_json(_read(args.adapter).decode("utf-8"))
    elif cfg.adapter is not None:
        adapter = cfg.adapter
    else:
        adapter = AdapterDescriptor.identity(rec)
    _write(args.out, serialize_recording(ingest(rec, adapter)))
    return EXIT_OK


def cmd_window(args, cfg: PipelineConfig) -> int:
    if _plan(args, cfg, args.seed, [args.input], [args.out]):
        return EXIT_OK
    rec = deserialize_recording(_read(args.input))
    stats = SessionStats.from_recording(rec)
    blocks = window(rec, cfg.window)
    for b in blocks:
        b.meta["norm_stats"] = stats.to_dict()
    _write(args.out, serialize_blocks(blocks, extra={"window": {
        "length": cfg.window.length, "stride": cfg.window.stride, "pad_last": cfg.window.pad_last}}))
    return EXIT_OK


def _block_stats(blocks) -> List[SessionStats]:
    fallback = None
    out = []
    for b in blocks:
        ns = b.meta.get("norm_stats")
        if ns is None:
            if fallback is None:
                fallback = SessionStats.from_blocks(blocks)
            out.append(fallback)
        else:
            out.append(SessionStats(mean=ns["mean"], std=ns["std"], eps=ns["eps"]))
    return out


def cmd_decompose(args, cfg: PipelineConfig) -> int:
    seed = _resolve_seed(args, cfg)
    if _plan(args, cfg, seed, [args.input], [args.out]):
        return EXIT_OK
    fcfg = cfg.feature_config()
    if not fcfg.use_cpals:
        raise ConfigError("features.use_cpals is false; there is nothing to decompose")
    cp = replace(fcfg.cp, seed=derive_seed(seed, 2))
    blocks = deserialize_blocks(_read(args.input))
    items = []
    for b, stats in zip(blocks, _block_stats(blocks)):
        tensor = block_view(b, fcfg.view, stats)
        d = cp_als(tensor, cp)
        items.append((artifacts.block_record(b, artifacts.block_id(b)), d,
                      float(tensor.mean()), float(tensor.std())))
    _write(args.out, artifacts.pack_decompositions(items, fcfg.view))
    return EXIT_OK


def _write_table_csv(path: str, header: dict, H: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block_id", "session_id", "user_id", "start_frame",
                    "presence", "activity", "vitals"] + list(header["fields"]))
        for rec, row in zip(header["records"], H):
            lab = rec["labels"]
            w.writerow([rec["block_id"], rec["session_id"], rec["user_id"], rec["start_frame"]]
                       + [_csv_value(lab.get(k)) for k in ("presence", "activity", "vitals")]
                       + [repr(float(x)) for x in row])


def cmd_pool(args, cfg: PipelineConfig) -> int:
    if _plan(args, cfg, args.seed, [args.input], [args.out, args.csv]):
        return EXIT_OK
    data = _read(args.input)
    kind = read_header(data)[0].get("kind")
    if kind == "decompositions":
        header, items = artifacts.unpack_decompositions(data)
        records, rows, rank = [], [], None
        for rec, d in items:
            rank = d.rank
            rows.append(pool(d, rec["amp_mean"], rec["amp_std"]).h)
            records.append({k: rec[k] for k in ("block_id", "session_id", "user_id",
                                                 "start_frame", "labels")})
        extra = {"view": header.get("view")}
    elif kind == "blocks":  # the no-CP-ALS ablation pools raw view statistics
        fcfg = cfg.feature_config()
        blocks = deserialize_blocks(data)
        records, rows, rank = [], [], None
        for b, stats in zip(blocks, _block_stats(blocks)):
            rows.append(raw_features(block_view(b, fcfg.view, stats)))
            records.append(artifacts.block_record(b, artifacts.block_id(b)))
        extra = {"view": fcfg.view, "raw": True}
    else:
        raise ConfigError(f"pool expects a decompositions or blocks container, found {kind!r}")
    if not rows:
        raise ConfigError("input holds no blocks")
    H = np.vstack(rows)
    out = artifacts.pack_descriptors(records, H, rank, extra)
    _write(args.out, out)
    if args.csv:
        hdr, H2 = artifacts.unpack_descriptors(out)
        _write_table_csv(args.csv, hdr, H2)
    return EXIT_OK


def _load_tables(paths: Sequence[str]):
    headers, mats = [], []
    for p in paths:
        h, H = artifacts.unpack_descriptors(_read(p))
        headers.append(h)
        mats.append(H)
    fields = headers[0]["fields"]
    if any(h["fields"] != fields for h in headers):
        raise ConfigError("descriptor tables have different layouts")
    merged = {"fields": fields, "records": [r for h in headers for r in h["records"]]}
    return artifacts.descriptor_dataset(merged, np.vstack(mats))


def _available_tasks(data: dict) -> List[str]:
    return [t for t in TASKS if label_mask(t, data[t]).any()]


def cmd_train(args, cfg: PipelineConfig) -> int:
    seed = _resolve_seed(args, cfg)
    if _plan(args, cfg, seed, args.inputs, [args.out, args.history]):
        return EXIT_OK
    data = _load_tables(args.inputs)
    tasks = [t.strip() for t in args.tasks.split(",")] if args.tasks else _available_tasks(data)
    if not tasks:
        raise ConfigError("no task has labels in the descriptor table")
    n_classes = cfg.train.n_classes
    if "recognition" in tasks:
        n_classes = max(n_classes, int(data["recognition"].max()) + 1)
    tcfg = replace(cfg.train, tasks=tuple(tasks), n_classes=n_classes, seed=seed)
    users = list(dict.fromkeys(str(u) for u in data["user"]))
    holdout = tuple(args.holdout.split(",")) if args.holdout else ()
    if holdout or len(users) >= 3:
        if not holdout:
            holdout = tuple(users[-max(1, min(cfg.bench.test_users, len(users) - 2)):])
        split = split_cross_user(data["user"], SplitPlan(holdout=holdout,
                                                         val_fraction=cfg.bench.val_fraction,
                                                         seed=seed))
        tr, va, manifest = split.train, split.val, split.manifest
    else:  # too few users for a cross-user split: train on everything
        tr, va = np.arange(len(data["h"])), np.array([], dtype=int)
        manifest = {u: "train" for u in users}
    take = lambda idx: {k: v[idx] for k, v in data.items()}
    result = train(take(tr), tcfg, take(va) if va.size else None)
    extra = {"train_config": tcfg.to_dict(), "best_epoch": result.best_epoch,
             "manifest": manifest}
    _write(args.out, artifacts.pack_model(result.model, extra))
    if args.history:
        cols = ["epoch", "lr", "train_loss", "val_loss"] + [f"sigma_{t}" for t in tcfg.tasks]
        with open(args.history, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in result.history:
                w.writerow([_csv_value(row[c]) for c in cols])
    return EXIT_OK


def cmd_eval(args, cfg: PipelineConfig) -> int:
    if _plan(args, cfg, args.seed, [args.model] + args.inputs, [args.out]):
        return EXIT_OK
    header, model = artifacts.unpack_model(_read(args.model))
    data = _load_tables(args.inputs)
    manifest = header.get("extra", {}).get("manifest", {})
    users = np.array([str(u) for u in data["user"]])
    if args.split == "all":
        rows = np.arange(users.size)
    else:
        # users absent from the training manifest were never seen, so they count as test
        default = "test" if args.split == "test" else None
        rows = np.flatnonzero([manifest.get(u, default) == args.split for u in users])
    if rows.size == 0:
        raise ConfigError(f"no rows belong to the {args.split!r} split")
    preds = predict(model, data["h"][rows])
    report = {"split": args.split, "n_rows": int(rows.size), "tasks": {}}
    for task in model.tasks:
        y = data[task][rows]
        keep = label_mask(task, y)
        if not keep.any():
            continue
        m = task_metrics(task, preds[task][keep], y[keep], model.n_classes)
        report["tasks"][task] = {"n": int(keep.sum()), **m}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args, cfg: PipelineConfig) -> int:
    bcfg = cfg.bench_config()
    if args.seeds:
        try:
            seeds = tuple(int(s) for s in args.seeds.split(","))
        except ValueError:
            raise ConfigError(f"--seeds expects comma-separated integers, got {args.seeds!r}") from None
    else:
        seeds = (_resolve_seed(args, cfg, required=False),) if (
            args.seed is not None or args.seed_from_entropy) else bcfg.seeds
        if seeds == (None,):
            seeds = bcfg.seeds
    over = {"seeds": seeds}
    if args.repeats is not None:
        over["repeats"] = args.repeats
    if args.variants:
        over["variants"] = tuple(v.strip() for v in args.variants.split(","))
    if args.task:
        over["task"] = args.task
    if args.efficiency_repeats is not None:
        over["efficiency_repeats"] = args.efficiency_repeats
    if args.test_users is not None:
        over["test_users"] = args.test_users
    ds = bcfg.dataset
    if args.users is not None:
        ds = replace(ds, n_users=args.users)
    if args.sessions is not None:
        ds = replace(ds, sessions_per_class=args.sessions)
    fields = {k: getattr(bcfg, k) for k in BenchConfig.__dataclass_fields__}
    fields.update(over)
    fields["dataset"] = replace(ds, task=fields["task"])
    bcfg = BenchConfig(**fields)
    if _plan(args, cfg, list(bcfg.seeds), [], [args.out], bench=bcfg.to_dict()):
        return EXIT_OK
    result = run_benchmark(bcfg, log=log.info)
    paths = write_reports(result, args.out)
    summary = result.summary()
    metric = primary_metric(bcfg.head)
    for v, per in summary["variants"].items():
        s = per.get(metric)
        if s:
            print(f"{v:10s} {metric} {s['mean']:.4f} +/- {s['std']:.4f} (n={s['n']})")
    if result.failures:
        print(f"{len(result.failures)} run(s) failed; see summary.json", file=sys.stderr)
    log.info("reports: %s", ", ".join(sorted(paths.values())))
    return EXIT_OK if result.records else EXIT_ERROR


def cmd_inspect(args, cfg: PipelineConfig) -> int:
    header, _ = read_header(_read(args.input))
    print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON pipeline config (strict; needs a 'version' field)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--seed-from-entropy", action="store_true",
                   help="draw the master seed from the OS (printed to stderr)")
    p.add_argument("--dry-run", action="store_true",
                   help="validate the config, print the resolved plan and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdp", description="Sensing data protocol pipeline")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", help="synthesize a recording from a scene preset")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", help="scene preset (overrides the config)")
    p.add_argument("--param", action="append", help="scene parameter key=value (JSON value)")
    p.add_argument("--session", help="session id")
    p.add_argument("--user-id", help="user id")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="apply an adapter (canonical axis order)")
    _common(p)
    p.add_argument("input")
    p.add_argument("--adapter", help="adapter descriptor JSON; default identity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("window", help="cut a recording into data blocks")
    _common(p)
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("decompose", help="CP-ALS per block")
    _common(p)
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("pool", help="pool decompositions into descriptors")
    _common(p)
    p.add_argument("input")
    p.add_argument("--out", required=True, help="SDPB descriptor table")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("train", help="train the multi-task heads")
    _common(p)
    p.add_argument("inputs", nargs="+", help="descriptor tables")
    p.add_argument("--tasks", help="comma-separated subset of " + ",".join(TASKS))
    p.add_argument("--holdout", help="comma-separated test user ids")
    p.add_argument("--out", required=True, help="model checkpoint")
    p.add_argument("--history", help="per-epoch CSV history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on descriptor tables")
    _common(p)
    p.add_argument("model")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--split", choices=("test", "val", "train", "all"), default="test")
    p.add_argument("--out", help="metrics JSON (stdout when omitted)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="seeded benchmark with ablations")
    _common(p)
    p.add_argument("--seeds", help="comma-separated seeds (default: the five protocol seeds)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--variants", help="comma-separated subset of " + ",".join(VARIANTS))
    p.add_argument("--task", choices=("presence", "gesture", "gait", "breathing"))
    p.add_argument("--users", type=int, help="synthetic users per seed")
    p.add_argument("--sessions", type=int, help="sessions per class and user")
    p.add_argument("--test-users", type=int, help="held-out users per seed")
    p.add_argument("--efficiency-repeats", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print an SDPB header as JSON")
    _common(p)
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc.usage.rstrip(), file=sys.stderr)
        print(f"sdp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        print("sdp: error: a subcommand is required", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = PipelineConfig.load(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"sdp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContainerError as exc:
        print(f"sdp: container error ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"sdp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ArithmeticError) as exc:
        print(f"sdp: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SdpError as exc:
        print(f"sdp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
