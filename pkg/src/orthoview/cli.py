"""orthoview command line: features, teaching sessions, protocol batches and grasps."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO

from .cloud_io import (
    FORMATS,
    generate_shape,
    load_dataset,
    read_cloud,
    save_cloud,
    save_dataset,
    synthetic_category_dataset,
)
from .descriptor import DescriptorConfig, extract, global_feature, load_external_dataset
from .errors import NotFamiliar, OrthoviewError, UnknownLabel
from .grasp import GripperPose, TemplateStore, learn_grasp, recognize_grasp
from .memory import METRICS, CategoryMemory
from .protocol import (
    METRIC_FIELDS,
    ProtocolConfig,
    events_to_jsonl,
    report_row,
    run_experiment,
    summarize,
    summary_csv,
)

log = logging.getLogger("orthoview")

EXIT_OK, EXIT_OUTCOME, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _configure_logging() -> None:
    level = os.environ.get("ORTHOVIEW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _descriptor(args) -> DescriptorConfig:
    return DescriptorConfig((args.resolution, args.resolution), args.blocks)


def _add_descriptor_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    p.add_argument("--resolution", type=int, default=64 if defaults else None,
                   help="view grid side in cells (default 64)")
    p.add_argument("--blocks", type=int, default=8 if defaults else None,
                   help="descriptor blocks per grid side (default 8)")


# --------------------------------------------------------------------------- feature


def cmd_feature(args) -> int:
    config = _descriptor(args)
    for name in args.inputs:
        path = Path(name)
        cloud = read_cloud(path)
        ex = extract(cloud, config)
        out_dir = Path(args.out) if args.out else path.parent
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{path.stem}.feat").write_text(_fmt(ex.feature.values) + "\n")
        if args.views:
            for grid in ex.grids:
                (out_dir / f"{path.stem}.{grid.view}.pgm").write_bytes(grid.to_pgm())
                (out_dir / f"{path.stem}.{grid.view}.csv").write_text(grid.to_csv())
        if args.figure:
            from .plotting import plot_views

            plot_views(ex.grids, out_dir / f"{path.stem}.views.png", title=path.stem)
        log.info("%s -> %s (%d values)", path, out_dir / f"{path.stem}.feat", ex.feature.dim)
    return EXIT_OK


# --------------------------------------------------------------------------- protocol

PROTOCOL_KEYS = {
    "dataset", "seeds", "seed", "resolution", "blocks", "metric", "tau_unknown", "intro_threshold",
    "threshold", "window_factor", "max_stall", "external_features", "out", "context_schedule",
    "figures",
}


def read_config_file(path: Path) -> Dict[str, str]:
    """Flat ``key = value`` text with ``#`` comments."""
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PROTOCOL_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_schedule(text: str):
    schedule = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        ctx, _, start = part.rpartition(":")
        if not ctx:
            raise UsageError(f"context_schedule entries look like 'context:start', got {part!r}")
        schedule.append((ctx, int(start)))
    return tuple(schedule)


def _protocol_settings(args) -> dict:
    settings: Dict[str, str] = {}
    base = Path(".")
    if args.config:
        cfg = Path(args.config)
        if not cfg.is_file():
            raise UsageError(f"config file {cfg} not found")
        settings = read_config_file(cfg)
        base = cfg.parent
    flags = {
        "resolution": args.resolution, "blocks": args.blocks, "metric": args.metric,
        "tau_unknown": args.tau_unknown, "intro_threshold": args.threshold,
        "window_factor": args.window_factor, "max_stall": args.max_stall,
        "external_features": args.external_features, "out": args.out, "dataset": args.dataset,
    }
    for key, value in flags.items():
        if value is not None:
            settings[key] = str(value)
    if "threshold" in settings:
        settings.setdefault("intro_threshold", settings.pop("threshold"))
    try:
        seeds = args.seed or [int(s) for s in settings.get("seeds", settings.get("seed", "0")).replace(",", " ").split()]
        resolved = {
            "dataset": settings.get("dataset"),
            "out": settings.get("out", "protocol_out"),
            "seeds": seeds,
            "resolution": int(settings.get("resolution", 64)),
            "blocks": int(settings.get("blocks", 8)),
            "metric": settings.get("metric", "cosine"),
            "tau_unknown": float(settings.get("tau_unknown", "inf")),
            "intro_threshold": float(settings.get("intro_threshold", 0.67)),
            "window_factor": int(settings.get("window_factor", 3)),
            "max_stall": int(settings.get("max_stall", 100)),
            "external_features": int(settings.get("external_features", 0)),
            "context_schedule": _parse_schedule(settings.get("context_schedule", "")),
            "figures": _parse_bool(settings.get("figures", "true")) and not args.no_figures,
        }
    except ValueError as exc:
        raise UsageError(f"bad protocol setting: {exc}") from None
    if not resolved["dataset"]:
        raise UsageError("no dataset given (config key 'dataset' or --dataset)")
    if not resolved["seeds"]:
        raise UsageError("at least one seed is required")
    for key in ("dataset", "out"):
        path = Path(resolved[key])
        resolved[key] = path if path.is_absolute() or not args.config else base / path
    return resolved


def _load_protocol_dataset(settings: dict, pipeline: DescriptorConfig):
    root: Path = settings["dataset"]
    if not root.is_dir():
        raise UsageError(f"dataset path {root} does not exist")

    def features(path: Path):
        if settings["external_features"]:
            return load_external_dataset(path, settings["external_features"])
        return load_dataset(path)

    if settings["context_schedule"]:
        contexts = {ctx for ctx, _ in settings["context_schedule"]}
        return {ctx: features(root / ctx) for ctx in sorted(contexts)}
    return features(root)


def cmd_protocol(args) -> int:
    settings = _protocol_settings(args)
    pipeline = DescriptorConfig((settings["resolution"], settings["resolution"]), settings["blocks"])
    dataset = _load_protocol_dataset(settings, pipeline)
    out: Path = settings["out"]
    out.mkdir(parents=True, exist_ok=True)

    reports, rows = [], []
    cache: dict = {}
    for seed in settings["seeds"]:
        config = ProtocolConfig(
            intro_threshold=settings["intro_threshold"], window_factor=settings["window_factor"],
            max_stall=settings["max_stall"], seed=seed, metric=settings["metric"],
            tau_unknown=settings["tau_unknown"], context_schedule=settings["context_schedule"],
        )
        report = run_experiment(dataset, config, pipeline, cache)
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(exist_ok=True)
        (run_dir / "report.json").write_text(report.to_json())
        (run_dir / "events.jsonl").write_text(events_to_jsonl(report.events))
        row = report_row(report, seed=seed)
        (run_dir / "summary.csv").write_text(summary_csv([row]))
        if settings["figures"]:
            from .plotting import plot_protocol_run

            plot_protocol_run(report, run_dir / "protocol.png")
        reports.append(report)
        rows.append(row)
        print(f"seed {seed}: {report.termination} categories={report.learned_categories} "
              f"qci={report.qc_iterations} gca={report.gca:.4f} apa={report.apa:.4f}")

    (out / "summary.csv").write_text(summary_csv(rows))
    agg = summarize(reports)
    (out / "aggregate.csv").write_text(summary_csv(
        [{"metric": name, "mean": agg[name]["mean"], "std": agg[name]["std"]} for name in METRIC_FIELDS]
    ))
    if settings["figures"]:
        from .plotting import plot_summary

        plot_summary(reports, out / "summary.png")
    return EXIT_OK


# --------------------------------------------------------------------------- teach REPL


class TeachSession:
    """Line-oriented teaching session; every command yields exactly one response line."""

    def __init__(self, config: DescriptorConfig, metric: str = "cosine", tau_unknown: float = math.inf,
                 memory: Optional[CategoryMemory] = None):
        self.config = config
        self.metric = metric
        self.tau_unknown = tau_unknown
        self.memory = memory or CategoryMemory()

    def handle(self, line: str) -> Optional[str]:
        """Return the response, or None when the session should end."""
        parts = line.split()
        if not parts:
            return ""
        cmd, rest = parts[0].lower(), parts[1:]
        try:
            if cmd in ("quit", "exit"):
                return None
            if cmd == "teach" and len(rest) == 2:
                feature = global_feature(read_cloud(rest[1]), self.config)
                self.memory.teach(rest[0], feature)
                n = len(self.memory.instances(rest[0]))
                return f"taught {rest[0]} ({n} instance{'s' if n != 1 else ''})"
            if cmd == "ask" and len(rest) == 1:
                pred = self.memory.classify(global_feature(read_cloud(rest[0]), self.config),
                                            self.metric, self.tau_unknown)
                return "unknown" if pred is None else f"{pred.label} (distance {pred.distance:.4f})"
            if cmd == "forget" and len(rest) == 1:
                self.memory.forget(rest[0])
                return f"forgot {rest[0]}"
            if cmd == "stats" and not rest:
                s = self.memory.stats()
                counts = " ".join(f"{k}:{v}" for k, v in s.counts.items())
                return (f"{s.n_categories} categories, {s.n_instances} instances, "
                        f"{s.average:.2f} per category" + (f" ({counts})" if counts else ""))
            if cmd == "save" and len(rest) == 1:
                Path(rest[0]).write_text(self.memory.to_json())
                return f"saved {rest[0]}"
        except UnknownLabel:
            return "error: unknown label"
        except (OrthoviewError, OSError, ValueError) as exc:
            return f"error: {exc}"
        return f"error: bad command {line.strip()!r} (teach <label> <file> | ask <file> | " \
               "forget <label> | stats | save <file> | quit)"

    def run(self, stdin: TextIO, stdout: TextIO) -> None:
        for line in stdin:
            response = self.handle(line)
            if response is None:
                break
            if response:
                print(response, file=stdout, flush=True)


def cmd_teach(args) -> int:
    memory = CategoryMemory.from_json(Path(args.load).read_text()) if args.load else None
    session = TeachSession(_descriptor(args), args.metric, args.tau_unknown, memory)
    session.run(sys.stdin, sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------------------- grasp


def cmd_grasp_learn(args) -> int:
    store_path = Path(args.store)
    if store_path.exists():
        store = TemplateStore.from_json(store_path.read_text())
    else:
        store = TemplateStore(_descriptor(args))
    pose = GripperPose.from_values(args.pose)
    learn_grasp(store, read_cloud(args.cloud), args.label, pose)
    store_path.write_text(store.to_json())
    print(f"learned {args.label} ({len(store)} templates)")
    return EXIT_OK


def cmd_grasp_query(args) -> int:
    store = TemplateStore.from_json(Path(args.store).read_text())
    try:
        match = recognize_grasp(store, read_cloud(args.cloud), args.tau)
    except NotFamiliar as exc:
        print(f"orthoview: {exc}", file=sys.stderr)
        return EXIT_OUTCOME
    print(f"{match.affordance_label} {_fmt(match.pose.as_values())} {match.similarity!r}")
    return EXIT_OK


# --------------------------------------------------------------------------- synthetic data


def cmd_synth(args) -> int:
    dataset = synthetic_category_dataset(args.categories, args.instances, args.points,
                                         args.noise, seed=args.seed)
    save_dataset(dataset, args.out, args.format)
    print(f"wrote {len(dataset)} categories x {args.instances} instances to {args.out}")
    return EXIT_OK


def cmd_shape(args) -> int:
    cloud = generate_shape(args.kind, args.dims, args.points, args.noise, args.seed)
    save_cloud(cloud, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthoview", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feature", help="compute global features for cloud files")
    p.add_argument("inputs", nargs="+")
    _add_descriptor_flags(p)
    p.add_argument("--out", help="output directory (default: next to each input)")
    p.add_argument("--views", action="store_true", help="also write PGM and CSV view grids")
    p.add_argument("--figure", action="store_true", help="also render the three views to PNG")
    p.set_defaults(func=cmd_feature)

    p = sub.add_parser("protocol", help="run simulated-teacher experiments")
    p.add_argument("config", nargs="?", help="flat key = value config file")
    p.add_argument("--dataset")
    _add_descriptor_flags(p, defaults=False)
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--tau-unknown", type=float)
    p.add_argument("--threshold", type=float, help="category introduction threshold")
    p.add_argument("--window-factor", type=int)
    p.add_argument("--max-stall", type=int, help="stall limit per known category")
    p.add_argument("--seed", type=int, action="append", help="repeat for several runs")
    p.add_argument("--external-features", type=int, metavar="DIM",
                   help="read <instance>.<view>.feat embeddings of this dimension")
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("teach", help="interactive teaching session on stdin")
    _add_descriptor_flags(p)
    p.add_argument("--metric", choices=METRICS, default="cosine")
    p.add_argument("--tau-unknown", type=float, default=math.inf)
    p.add_argument("--load", help="resume from a saved memory snapshot")
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("grasp", help="learn or query grasp templates")
    gsub = p.add_subparsers(dest="grasp_command", required=True)
    g = gsub.add_parser("learn")
    g.add_argument("cloud")
    g.add_argument("--label", required=True)
    g.add_argument("--pose", type=float, nargs=7, required=True, metavar="V",
                   help="px py pz qw qx qy qz in the cloud's frame")
    g.add_argument("--store", required=True)
    _add_descriptor_flags(g)
    g.set_defaults(func=cmd_grasp_learn)
    g = gsub.add_parser("query")
    g.add_argument("cloud")
    g.add_argument("--store", required=True)
    g.add_argument("--tau", type=float, default=0.1, help="familiarity threshold")
    g.set_defaults(func=cmd_grasp_query)

    p = sub.add_parser("synth", help="write a synthetic labelled dataset")
    p.add_argument("out")
    p.add_argument("--categories", type=int, default=10)
    p.add_argument("--instances", type=int, default=30)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="pcd_ascii")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("shape", help="write one synthetic shape")
    p.add_argument("kind", choices=("box", "cylinder", "sphere", "lshape"))
    p.add_argument("dims", type=float, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_shape)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OrthoviewError, UsageError, OSError, ValueError) as exc:
        print(f"orthoview: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
