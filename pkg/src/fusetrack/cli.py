"""Command line: simulate, train, track, eval, selftest.

Exit codes: 0 ok, 1 selftest failure, 2 usage or invalid input,
3 numerical failure, 4 file or format error. Set FUSETRACK_LOG_LEVEL
(DEBUG, INFO, WARNING, ...) for log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import fileio
from .config import RunConfig
from .metrics import EvalConfig, evaluate_scenario
from .network import NetConfig
from .simgen import PRESETS, ScenarioConfig, generate, make_training_set, preset, to_training_pairs
from .tracker import HeuristicAffinity, LearnedAffinity, TrackerOptions, run_scenario
from .training import NumericalError, TrainConfig, train

logger = logging.getLogger("fusetrack")

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


def _configure_logging():
    level = os.environ.get("FUSETRACK_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _class_list(text):
    classes = [c.strip() for c in text.split(",") if c.strip()]
    if not classes:
        raise argparse.ArgumentTypeError("empty class list")
    return classes


def _count(text):
    cls, _, n = text.partition("=")
    if not n:
        raise argparse.ArgumentTypeError(f"expected CLASS=N, got {text!r}")
    return cls, int(n)


# -- simulate ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides.update(json.load(fh))
    for key in ("seed", "fp_rate", "fn_rate"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    counts = dict(overrides.get("counts", {}))
    if args.cars is not None:
        counts["car"] = args.cars
    for cls, n in args.count or []:
        counts[cls] = n
    if counts:
        overrides["counts"] = counts
    try:
        cfg = preset(args.preset, **overrides) if args.preset else ScenarioConfig.from_dict({**ScenarioConfig().to_dict(), **overrides})
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid scenario config: {exc}") from exc
    scenario = generate(cfg)
    fileio.write_scenario(args.output, scenario)
    n_obj = len({o.identity for fr in scenario.frames for o in fr.gt})
    n_det = sum(len(fr.dets3d) for fr in scenario.frames)
    n_fp = sum(1 for fr in scenario.frames for d in fr.dets3d if d.gt_id is None)
    n_gt = sum(len(fr.gt) for fr in scenario.frames)
    n_fn = n_gt - (n_det - n_fp)
    print(f"objects {n_obj}  frames {len(scenario.frames)}  detections {n_det}  fp {n_fp}  fn {n_fn}")
    print(f"wrote {args.output}")
    return EXIT_OK


# -- train ------------------------------------------------------------------


def cmd_train(args) -> int:
    run = RunConfig.from_file(args.config)
    n_max = run.n_max()
    tv = dict(run.values["train"])
    for key in ("lr", "epochs", "batch_size"):
        if getattr(args, key) is not None:
            tv[key] = getattr(args, key)
    tcfg = TrainConfig(**tv)
    net_values = dict(run.values["network"])
    net_values["hidden"] = tuple(net_values["hidden"])

    scenarios = [fileio.read_scenario(p) for p in args.scenario or []]
    if not scenarios and not args.synthetic_pairs:
        raise UsageError("give --scenario files or --synthetic-pairs")
    if args.classes:
        classes = args.classes
    else:
        classes = sorted({c for s in scenarios for c in s.classes()}) or ["car"]
    os.makedirs(args.out_dir, exist_ok=True)

    for cls in classes:
        pairs = []
        for k, s in enumerate(scenarios):
            pairs.extend(to_training_pairs(s, s.config.fp_downsample_ratio, n_max, cls, seed=run.values["seed"] + k))
        if args.synthetic_pairs:
            base = preset(args.preset, counts={cls: 10})
            pairs.extend(make_training_set(args.synthetic_pairs, run.values["seed"], base, n_max, cls))
        if not pairs:
            raise UsageError(f"no training pairs for class {cls!r}")
        f_shape, f_cue = pairs[0][0].shape_prev.shape[1], pairs[0][0].cue_prev.shape[1]
        net_cfg = NetConfig(n_max=n_max, **{**net_values, "f_shape": f_shape, "f_cue": f_cue})
        logger.info("training %s on %d pairs", cls, len(pairs))
        net, curve = train(pairs, tcfg, net_config=net_cfg)
        ckpt = os.path.join(args.out_dir, f"{cls}.ckpt.json")
        table = os.path.join(args.out_dir, f"{cls}.loss.tsv")
        fileio.write_checkpoint(ckpt, net, cls, {"train": tcfg.to_dict(), "pairs": len(pairs), "loss_curve": curve})
        fileio.atomic_write_text(table, fileio.loss_table(curve))
        print(f"{cls}: {len(pairs)} pairs, loss {curve[0]:.6f} -> {curve[-1]:.6f}; wrote {ckpt}")
    return EXIT_OK


# -- track ------------------------------------------------------------------


def cmd_track(args) -> int:
    run = RunConfig.from_file(args.config)
    scenario = fileio.read_scenario(args.scenario)
    affinities = {}
    if args.affinity == "learned":
        if not args.checkpoint:
            raise UsageError("--affinity learned needs at least one --checkpoint")
        for path in args.checkpoint:
            net, cls, _ = fileio.read_checkpoint(path)
            if cls in affinities:
                raise UsageError(f"two checkpoints for class {cls!r}")
            affinities[cls] = LearnedAffinity(net)
        if args.classes:
            missing = [c for c in args.classes if c not in affinities]
            if missing:
                raise UsageError(f"no checkpoint for classes {missing}; checkpoints cover {sorted(affinities)}")
            affinities = {c: affinities[c] for c in args.classes}
    else:
        classes = args.classes or scenario.classes()
        gate = run.values["heuristic_gate"]
        affinities = {c: HeuristicAffinity(run.n_max(), gate) for c in classes}
    options = TrackerOptions(
        thresholds=run.lifecycle(),
        refine=not args.no_refine,
        max_misses=int(run.values["max_misses"]),
    )
    frames = run_scenario(scenario, affinities, options, refine_params={c: run.refine_params(c) for c in affinities})
    meta = {"affinity": args.affinity, "refine": not args.no_refine, "classes": sorted(affinities)}
    fileio.write_tracks(args.output, frames, meta)
    n_tracks = len({r.track_id for fr in frames for r in fr})
    print(f"tracked {sorted(affinities)}: {n_tracks} tracks over {len(frames)} frames; wrote {args.output}")
    return EXIT_OK


# -- eval -------------------------------------------------------------------


def cmd_eval(args) -> int:
    run = RunConfig.from_file(args.config)
    scenario = fileio.read_scenario(args.scenario)
    frames, _ = fileio.read_tracks(args.tracks)
    if len(frames) != len(scenario.frames):
        raise UsageError(f"track file has {len(frames)} frames, scenario has {len(scenario.frames)}")
    cfg = EvalConfig(run.values["eval"]["n_recall"], run.values["eval"]["tp_distance"], args.classes)
    report = evaluate_scenario(scenario, frames, cfg)
    if args.output:
        fileio.write_report(args.output, report)
    if args.recall_table:
        fileio.atomic_write_text(args.recall_table, fileio.recall_table(report))
    print(f"AMOTA {report.amota:.4f}  AMOTP {report.amotp:.4f}")
    for cls, m in report.per_class.items():
        print(f"  {cls}: AMOTA {m.amota:.4f}  AMOTP {m.amotp:.4f}  gt {m.gt}")
    for cls in report.skipped:
        print(f"  {cls}: skipped (no ground truth)")
    return EXIT_OK


# -- selftest ---------------------------------------------------------------


def cmd_selftest(args) -> int:
    from .selftest import run_all

    ok = run_all(verbose=True)
    return EXIT_OK if ok else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusetrack", description="Learned-affinity 3D multi-object tracking on synthetic scenes.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scenario file")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--config", help="JSON file of scenario settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--cars", type=int)
    s.add_argument("--count", type=_count, action="append", metavar="CLASS=N")
    s.add_argument("--fp-rate", dest="fp_rate", type=float)
    s.add_argument("--fn-rate", dest="fn_rate", type=float)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train one affinity network per class")
    t.add_argument("--scenario", action="append", help="scenario file (repeatable)")
    t.add_argument("--synthetic-pairs", type=int, default=0, help="also draw this many pairs from fresh scenes")
    t.add_argument("--preset", choices=sorted(PRESETS), default="moderate", help="preset for --synthetic-pairs")
    t.add_argument("--classes", type=_class_list)
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--config", help="JSON run configuration overriding the defaults")
    t.add_argument("-o", "--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="run the tracker over a scenario")
    k.add_argument("--scenario", required=True)
    k.add_argument("--affinity", choices=("learned", "heuristic"), default="learned")
    k.add_argument("--checkpoint", action="append", help="per-class checkpoint (repeatable)")
    k.add_argument("--classes", type=_class_list)
    k.add_argument("--no-refine", action="store_true", help="use raw detection confidences")
    k.add_argument("--config")
    k.add_argument("-o", "--output", required=True)
    k.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="compute AMOTA/AMOTP")
    e.add_argument("--scenario", required=True)
    e.add_argument("--tracks", required=True)
    e.add_argument("--classes", type=_class_list)
    e.add_argument("--config")
    e.add_argument("-o", "--output", help="report file")
    e.add_argument("--recall-table", help="per-recall TSV file")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fusetrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"fusetrack {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, fileio.FormatError) as exc:
        print(f"fusetrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"fusetrack {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
