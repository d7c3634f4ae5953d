"""Command-line entry point.

Reports go to stdout as tab-separated text with a header row (or one JSON
object per line with ``--json``); diagnostics go to stderr. Exit codes:
0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import synthgen
from .canlog import LogParseError, ids, read_gps, read_log
from .config import PipelineConfig, dump_config, load_config
from .decomposer import (
    CandidateKey,
    bit_distribution,
    candidate_series,
    drop_reason,
    extract_series,
    normalize,
    windows,
)
from .features import FeatureSpec, extract_many
from .groundtruth import exclusivity_search, find_accel_episodes, spike_platform_search
from .learner import (
    ConfigMismatch,
    ModelFormatError,
    candidates_for,
    feature_importances,
    load_model,
    locate_signal,
    save_model,
    train_signal_model,
    window_table,
)
from .reid import REID_SIGNALS, build_driver_samples, cohort_reid, summarize
from .tsmatch import gps_to_velocity, rank_by_dtw, remove_velocity_outliers


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4f}"
    if v is None:
        return ""
    return v


def _jsonable(v: Any) -> Any:
    if isinstance(v, (float, np.floating)):
        return round(float(v), 4)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, CandidateKey):
        return str(v)
    return v


class Output:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout

    def table(self, columns: Sequence[str], rows: Sequence[Sequence[Any]], kind: str = "row") -> None:
        if self.as_json:
            for r in rows:
                obj = {"type": kind, **{c: _jsonable(v) for c, v in zip(columns, r)}}
                self.stream.write(json.dumps(obj, sort_keys=False) + "\n")
            return
        self.stream.write("\t".join(columns) + "\n")
        for r in rows:
            self.stream.write("\t".join(str(_fmt(v)) for v in r) + "\n")

    def record(self, kind: str, fields: dict) -> None:
        if self.as_json:
            self.stream.write(json.dumps({"type": kind, **{k: _jsonable(v) for k, v in fields.items()}}) + "\n")
        else:
            self.stream.write("\t".join(f"{k}={_fmt(v)}" for k, v in fields.items()) + "\n")


def _key(text: str) -> CandidateKey:
    try:
        return CandidateKey.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CANLIFT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"CANLIFT_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    for name in ("min_variation", "window_s", "overlap", "max_jump"):
        v = getattr(args, name, None)
        if v is not None:
            changes[name] = v
    if getattr(args, "little_endian", False):
        changes["little_endian"] = True
    if getattr(args, "seed", None) is not None and args.command in ("train",):
        changes["seed"] = args.seed
    return cfg.with_(**changes) if changes else cfg


def _log(path: str, strict: bool = False):
    log = read_log(path, strict=strict)
    if log.skipped:
        print(f"{path}: skipped {log.skipped} malformed line(s)", file=sys.stderr)
    return log


# --- subcommands ---------------------------------------------------------------


def cmd_ids(args, out: Output) -> None:
    log = _log(args.log, args.strict)
    out.table(["id", "frames", "dlc"], [(f"{s.can_id:04x}", s.frame_count, s.dominant_dlc) for s in ids(log)])


def cmd_decompose(args, out: Output) -> None:
    cfg = _config(args)
    log = _log(args.log)
    rows = []
    for s in candidate_series(log, cfg.little_endian):
        reason = drop_reason(s, cfg.min_variation, cfg.drop_redundant_pairs)
        n_win = 0
        if reason is None:
            n_win = len(windows(normalize(s), cfg.window_s, cfg.overlap, cfg.min_variation))
        rows.append((str(s.key), len(s), s.distinct_count, n_win, "kept" if reason is None else f"dropped:{reason}"))
    out.table(["candidate", "samples", "distinct", "windows", "status"], rows)


def cmd_bits(args, out: Output) -> None:
    log = _log(args.log)
    chosen = [int(x, 16) for x in args.id] if args.id else sorted(log.index)
    rows = []
    for cid in chosen:
        try:
            bd = bit_distribution(log, cid)
        except KeyError as exc:
            raise DataError(str(exc.args[0]))
        rows += [(f"{cid:04x}", i, float(p)) for i, p in enumerate(bd.probs)]
    out.table(["id", "bit", "probability"], rows)


def cmd_features(args, out: Output) -> None:
    cfg = _config(args)
    log = _log(args.log)
    spec = FeatureSpec.named(args.spec, max_bins=cfg.max_bins, cid_ce=cfg.cid_ce)
    if args.candidate:
        series = [normalize(extract_series(log, k)) for k in args.candidate]
    else:
        series = candidates_for(log, cfg)
    wins = [w for s in series for w in windows(s, cfg.window_s, cfg.overlap, cfg.min_variation)]
    X = extract_many(wins, spec) if wins else np.empty((0, len(spec)))
    rows = [(str(w.source), float(w.t_start), *x.tolist()) for w, x in zip(wins, X)]
    out.table(["candidate", "t_start", *spec.names], rows)


def cmd_find_velocity(args, out: Output) -> None:
    cfg = _config(args)
    log = _log(args.log)
    ref = remove_velocity_outliers(gps_to_velocity(read_gps(args.gps)), cfg.max_jump)
    cands = [c for c in candidates_for(log, cfg)]
    ranked = rank_by_dtw(ref, cands, args.band)
    out.table(["rank", "candidate", "distance"], [(i, str(c.key), d) for i, (c, d) in enumerate(ranked[: args.top], 1)])


def cmd_find_pedals(args, out: Output) -> None:
    cfg = _config(args)
    scores = exclusivity_search(candidates_for(_log(args.log), cfg))
    out.table(
        ["rank", "first", "second", "co_active", "active_first", "active_second"],
        [(i, str(s.pair[0]), str(s.pair[1]), s.co_active_fraction, s.active_fraction_a, s.active_fraction_b)
         for i, s in enumerate(scores[: args.top], 1)],
    )


def cmd_find_clutch(args, out: Output) -> None:
    cfg = _config(args)
    log = _log(args.log)
    velocity = normalize(extract_series(log, args.velocity))
    episodes = find_accel_episodes(velocity)
    print(f"{len(episodes)} standing start(s)", file=sys.stderr)
    cands = [c for c in candidates_for(log, cfg) if c.key != args.velocity]
    scores = spike_platform_search(cands, episodes)
    out.table(
        ["rank", "rpm", "clutch", "matched", "episodes", "spikes", "platforms"],
        [(i, str(s.pair[0]), str(s.pair[1]), s.matched_episodes, s.episode_count, s.spike_count, s.platform_count)
         for i, s in enumerate(scores[: args.top], 1)],
    )


def cmd_train(args, out: Output) -> None:
    cfg = _config(args)
    model = train_signal_model(_log(args.base), args.signal, args.truth, cfg, _threads(args))
    save_model(model, args.out)
    f = model.forest
    out.record("model", {
        "signal": model.signal, "truth": model.base_truth, "trees": len(f), "samples_per_class": f.samples_per_class,
        "oob": f.oob_score, "config_hash": model.config_hash, "path": str(args.out),
    })
    if args.importances:
        out.table(["feature", "importance"], feature_importances(f), kind="importance")


def cmd_match(args, out: Output) -> None:
    model = load_model(args.model)
    cfg = load_config(args.config) if args.config else model.config
    if cfg.hash != model.config_hash:
        raise ConfigMismatch(f"model config {model.config_hash} differs from --config {cfg.hash}")
    table = window_table(candidates_for(_log(args.target), cfg), cfg)
    report = locate_signal(model, table, cfg, args.truth)
    ev = report.evaluation
    summary = {"signal": report.signal, "config_hash": report.config_hash, "best": str(report.best.key)}
    if ev is not None:
        summary.update(rank=ev.rank, precision=ev.precision, recall=ev.recall, gap=ev.gap)
    out.record("match", summary)
    rows = [
        (i, str(c.key), c.votes, c.windows, c.fraction, ("true" if c.key in report.true_keys else ""))
        for i, c in enumerate(report.candidates[: args.top], 1)
    ]
    out.table(["rank", "candidate", "votes", "windows", "fraction", "truth"], rows, kind="candidate")


def _signal_map(text: str) -> dict[str, CandidateKey]:
    alias = {"acc": "accelerator", "velo": "velocity"}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"expected name=<id:span>, got {part!r}")
        name, key = part.split("=", 1)
        name = alias.get(name.strip(), name.strip())
        if name not in REID_SIGNALS:
            raise argparse.ArgumentTypeError(f"unknown signal {name!r}")
        out[name] = _key(key)
    missing = set(REID_SIGNALS) - set(out)
    if missing:
        raise argparse.ArgumentTypeError(f"missing signals: {sorted(missing)}")
    return out


def cmd_reid(args, out: Output) -> None:
    cfg = _config(args)
    root = Path(args.drives)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    drivers = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        samples = []
        for path in sorted(d.glob("*.log")):
            log = _log(str(path))
            sig = {name: normalize(extract_series(log, key)) for name, key in args.signals.items()}
            samples += build_driver_samples(sig, d.name, cfg)
        if samples:
            drivers[d.name] = samples
    print(f"{len(drivers)} driver(s): " + ", ".join(f"{k}={len(v)}" for k, v in drivers.items()), file=sys.stderr)
    results = cohort_reid(drivers, args.k, args.seed, args.folds, threads=_threads(args))
    out.table(
        ["driver_a", "driver_b", "mean_precision", "min_fold", "max_fold"],
        [(*r.drivers, r.mean_precision, min(r.fold_precisions), max(r.fold_precisions)) for r in results],
        kind="pair",
    )
    s = summarize(results)
    out.record("summary", {"pairs": s.pairs, "mean": s.mean, "worst": s.worst, "best": s.best})


STYLES = {"default": synthgen.DriverStyle(), "smooth": synthgen.SMOOTH, "aggressive": synthgen.AGGRESSIVE}


def _style(v) -> synthgen.DriverStyle:
    if isinstance(v, dict):
        return synthgen.DriverStyle(**{**v, **({"speed_range": tuple(v["speed_range"])} if "speed_range" in v else {})})
    if v not in STYLES:
        raise DataError(f"unknown style {v!r}; choose from {sorted(STYLES)} or give a mapping")
    return STYLES[v]


def cmd_synth(args, out: Output) -> None:
    scenario = json.loads(Path(args.scenario).read_text(encoding="utf-8")) if args.scenario else {}
    outdir = Path(args.out)
    written = {}
    if args.pair:
        base, target = synthgen.make_car_pair(
            args.seed, scenario.get("duration_s", 1800.0), _style(scenario.get("style", "default")),
            scenario.get("target_duration_s"),
        )
        written["base"] = synthgen.write_bundle(base, outdir, "base")
        written["target"] = synthgen.write_bundle(target, outdir, "target")
    else:
        if "messages" in scenario:
            spec = synthgen.ScenarioSpec.from_dict({**scenario, "seed": args.seed})
        else:
            unknown = set(scenario) - {"duration_s", "style", "layout_seed", "n_noise_ids"}
            if unknown:
                raise DataError(f"unknown scenario keys: {sorted(unknown)}")
            spec = synthgen.make_scenario(
                args.seed, scenario.get("duration_s", 600.0), _style(scenario.get("style", "default")),
                scenario.get("layout_seed"), n_noise_ids=scenario.get("n_noise_ids", 15),
            )
        written["drive"] = synthgen.write_bundle(synthgen.generate(spec), outdir, args.stem)
    out.table(["bundle", "kind", "path"], [(b, k, str(p)) for b, paths in written.items() for k, p in paths.items()])


def cmd_config(args, out: Output) -> None:
    cfg = _config(args)
    if args.dump:
        dump_config(cfg, args.dump)
    if out.as_json:
        out.record("config", {"hash": cfg.hash, "config": cfg.to_dict()})
    else:
        sys.stdout.write(cfg.to_json())
        sys.stdout.write(f"hash\t{cfg.hash}\n")


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="line-delimited JSON reports")
    common.add_argument("--threads", type=int, help="worker threads (default: $CANLIFT_THREADS or all cores)")
    common.add_argument("--config", help="pipeline config JSON file")

    windowing = _Parser(add_help=False)
    windowing.add_argument("--min-variation", dest="min_variation", type=int)
    windowing.add_argument("--window", dest="window_s", type=float)
    windowing.add_argument("--overlap", type=float)
    windowing.add_argument("--little-endian", action="store_true")

    p = _Parser(prog="canlift", description="Locate sensor signals in CAN logs and re-identify drivers.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("ids", parents=[common], help="list message ids")
    s.add_argument("log")
    s.add_argument("--strict", action="store_true", help="fail on the first malformed line")
    s.set_defaults(func=cmd_ids)

    s = sub.add_parser("decompose", parents=[common, windowing], help="candidate manifest")
    s.add_argument("log")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("bits", parents=[common], help="per-bit set probabilities")
    s.add_argument("log")
    s.add_argument("--id", action="append", help="id in hex (repeatable; default all)")
    s.set_defaults(func=cmd_bits)

    s = sub.add_parser("features", parents=[common, windowing], help="window features as a table")
    s.add_argument("log")
    s.add_argument("--spec", default="full15", choices=["full15", "reid11"])
    s.add_argument("--candidate", action="append", type=_key, help="limit to candidate(s), e.g. 0410:1-2")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("find-velocity", parents=[common, windowing], help="rank candidates against GPS speed")
    s.add_argument("log")
    s.add_argument("gps")
    s.add_argument("--max-jump", dest="max_jump", type=float)
    s.add_argument("--band", type=int)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_find_velocity)

    s = sub.add_parser("find-pedals", parents=[common, windowing], help="mutually exclusive candidate pairs")
    s.add_argument("log")
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_find_pedals)

    s = sub.add_parser("find-clutch", parents=[common, windowing], help="rpm/clutch pairs around standing starts")
    s.add_argument("log")
    s.add_argument("--velocity", type=_key, required=True)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_find_clutch)

    s = sub.add_parser("train", parents=[common, windowing], help="train a signal model on a base car")
    s.add_argument("--base", required=True)
    s.add_argument("--signal", required=True)
    s.add_argument("--truth", type=_key, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--importances", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("match", parents=[common], help="locate a trained signal in a target log")
    s.add_argument("--model", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--truth", type=_key)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("reid", parents=[common], help="pairwise driver re-identification")
    s.add_argument("--signals", type=_signal_map, required=True,
                   help="acc=<id:span>,brake=<id:span>,velo=<id:span>,rpm=<id:span>")
    s.add_argument("--drives", required=True, help="directory with one sub-directory of .log files per driver")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--folds", type=int, default=10)
    s.set_defaults(func=cmd_reid)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic drive (log, GPS, truth)")
    s.add_argument("--scenario", help="scenario JSON (full spec or make_scenario keys)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--stem", default="drive")
    s.add_argument("--pair", action="store_true", help="write a base car and a target car instead")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("config", parents=[common, windowing], help="show (and optionally save) the config")
    s.add_argument("--max-jump", dest="max_jump", type=float)
    s.add_argument("--dump", help="write the effective config here")
    s.set_defaults(func=cmd_config)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return 1
        args.func(args, Output(args.json))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (DataError, LogParseError, ModelFormatError, ConfigMismatch, OSError, ValueError, KeyError) as exc:
        print(f"canlift: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
