"""Command-line front end: generate, sort, eval, bench, power, snapshot."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as nio
from .evaluate import match, report, scores
from .model import ConfigError, SorterConfig, default_config, validate_config
from .network import BLANK_FRACTION, PerceptionLayer
from .pipeline import ChannelSorter, MultiChannelSorter, bench_throughput, estimate_power
from .synth import (
    HYBRID_NOISE_LEVELS,
    SynthSpec,
    gen_analysis,
    gen_hybrid,
    gen_syn1,
    gen_syn2,
    gen_syn3,
)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4
ACTIVE_LEVEL = 0.9


class ValidationError(Exception):
    pass


# ---------------------------------------------------------------- config flags

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sorter configuration (SorterConfig fields)")
    for f in dataclasses.fields(SorterConfig):
        if f.type in ("bool", bool):
            g.add_argument(f"--{f.name}", action="store_true", default=None)
        else:
            kind = int if f.type in ("int", int) else float
            g.add_argument(f"--{f.name}", type=kind, default=None, metavar=kind.__name__.upper())


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("NEUSORT_SEED")
    if env is None:
        return default_config().seed
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"NEUSORT_SEED must be an integer, got {env!r}") from None


def config_from_args(args) -> SorterConfig:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(SorterConfig)
                 if getattr(args, f.name, None) is not None}
    overrides["seed"] = _resolve_seed(args)
    if getattr(args, "config", None):
        base = SorterConfig.from_dict(nio.read_json(args.config))
    else:
        base = default_config()
    cfg = base.replace(**overrides)
    problems = validate_config(cfg)
    if problems:
        raise ValidationError("invalid configuration: " + "; ".join(problems))
    return cfg


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    if args.kind == "hybrid":
        if args.noise is None:
            raise ValidationError("hybrid needs --noise")
        if args.noise not in HYBRID_NOISE_LEVELS and not args.allow_any_noise:
            raise ValidationError(
                f"unsupported noise level {args.noise}; expected one of {HYBRID_NOISE_LEVELS} "
                "(or pass --allow-any-noise)"
            )
        ds = gen_hybrid(noise_level=args.noise, seed=seed, n_spikes=args.n_spikes,
                        duration_s=args.duration, sample_rate_hz=args.sample_rate)
    else:
        spec = SynthSpec(duration_s=args.duration, sample_rate_hz=args.sample_rate,
                         noise_std=args.noise_std, seed=seed)
        if args.kind == "syn1":
            ds = gen_syn1(spec)
        elif args.kind == "syn2":
            ds = gen_syn2(spec, 3, args.onset_fraction)
        elif args.kind == "syn3":
            ds = gen_syn3(spec, 2, args.max_ratio)
        else:
            ds = gen_analysis(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nio.write_trace(f"{out}.trace", ds.trace.samples, ds.trace.sample_rate_hz)
    nio.write_truth(f"{out}.truth.csv", ds.truth)
    meta = dict(ds.metadata, seed=seed)
    nio.write_json(f"{out}.meta.json", meta)
    print(f"wrote {out}.trace ({len(ds.truth)} events, {ds.trace.duration_s:.2f} s)")
    return EXIT_OK


# ---------------------------------------------------------------- sort

def cmd_sort(args) -> int:
    cfg = config_from_args(args)
    traces = nio.read_trace(args.trace)
    fs = traces[0].sample_rate_hz
    sorter = MultiChannelSorter(cfg, fs, [t.channel_id for t in traces], workers=args.workers)
    chunk = args.chunk or max(max(len(t.samples) for t in traces), 1)
    out = []
    n = len(traces[0].samples)
    for i in range(0, n, chunk):
        blocks = {t.channel_id: t.samples[i : i + chunk] for t in traces}
        for spikes in sorter.push(blocks).values():
            out.extend(spikes)
    sorter.finish()
    out.sort(key=lambda s: (s.timestamp_samples, s.channel_id))
    nio.write_spikes(args.out, out)

    channels = [s.summary() for s in sorter.channels.values()]
    total = sum(c["candidates"] for c in channels)
    summary = {
        "config": cfg.to_dict(),
        "channels": channels,
        "candidates": total,
        "n_valid_units": sum(c["n_valid_units"] for c in channels),
        "provisional_fraction": (sum(c["provisional"] for c in channels) / total) if total else 0.0,
        "events_per_input": (
            sum(c["events_per_input"] * c["candidates"] for c in channels) / total if total else 0.0
        ),
    }
    if args.summary:
        nio.write_json(args.summary, summary)
    if args.save_state:
        nio.write_json(args.save_state, {
            "config": cfg.to_dict(),
            "channels": [s.state_dict() for s in sorter.channels.values()],
        })
    print(json.dumps({k: summary[k] for k in
                      ("candidates", "n_valid_units", "provisional_fraction", "events_per_input")}))
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    spikes = nio.read_spikes(args.results)
    truth = nio.read_truth(args.truth)
    channels = {s.channel_id for s in spikes}
    if args.channel is not None:
        if channels - {args.channel}:
            raise ValidationError(
                f"results contain channel ids {sorted(channels)}, truth is for channel {args.channel}"
            )
    elif len(channels) > 1:
        raise ValidationError(
            f"results span channels {sorted(channels)}; pick one with --channel"
        )
    m = match(spikes, truth, args.tolerance, args.method)
    sys.stdout.write(report(scores(m), m, args.format, args.label))
    return EXIT_OK


# ---------------------------------------------------------------- bench

def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def cmd_bench(args) -> int:
    if any(n < 100 for n in args.n):
        raise ValidationError("every --n must be >= 100")
    cfg = config_from_args(args)
    rows = []
    for n in args.n:
        res = bench_throughput(ChannelSorter(cfg), n, cfg.seed)
        rows.append((n, res.seconds))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n", "seconds"])
    for n, t in rows:
        w.writerow([n, f"{t:.6f}"])
    if len(rows) >= 2:
        slope, intercept, r2 = linear_fit(*zip(*rows))
        print(f"# slope_s_per_spike={slope:.6e} intercept_s={intercept:.6e} r2={r2:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- power

def cmd_power(args) -> int:
    epi = args.events_per_input
    if args.summary:
        epi = float(nio.read_json(args.summary)["events_per_input"])
    if epi is None:
        raise ValidationError("give --events-per-input or --summary")
    try:
        watts = estimate_power(epi, args.inputs_per_second, args.channels, args.alpha_pj * 1e-12)
    except ValueError as e:
        raise ValidationError(str(e)) from None
    print(json.dumps({"events_per_input": epi, "inputs_per_second": args.inputs_per_second,
                      "channels": args.channels, "alpha_pj": args.alpha_pj,
                      "power_w": watts, "power_mw": watts * 1e3}))
    return EXIT_OK


# ---------------------------------------------------------------- snapshot

def classify_node(weights: np.ndarray, w_max: float) -> str:
    peak = float(np.max(weights))
    if peak >= ACTIVE_LEVEL * w_max:
        return "active"
    if peak < BLANK_FRACTION * w_max:
        return "blank"
    return "partial"


def _load_state(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"no saved state at {path} (run sort with --save-state)") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise nio.FormatError(f"{path}: corrupted state at offset {e.pos}: {e.msg}") from None


def cmd_snapshot(args) -> int:
    if args.fresh:
        cfg = config_from_args(args)
        layers = {0: PerceptionLayer.from_config(cfg)}
    else:
        if not args.state:
            raise ValidationError("give a state file or --fresh")
        state = _load_state(args.state)
        try:
            layers = {int(c["channel_id"]): PerceptionLayer.from_state(c["layer"])
                      for c in state["channels"]}
        except (KeyError, TypeError, ValueError) as e:
            raise nio.FormatError(f"{args.state}: malformed state: {e}") from None
    out = {"channels": []}
    for ch, layer in sorted(layers.items()):
        nodes = []
        for k, w in enumerate(layer.weights, 1):
            nodes.append({"node": k, "status": classify_node(w, layer.w_max),
                          "max_weight": float(w.max()), "weights": w.tolist()})
            if args.csv_dir:
                d = Path(args.csv_dir)
                d.mkdir(parents=True, exist_ok=True)
                np.savetxt(d / f"channel{ch}_node{k}.csv", w, delimiter=",", fmt="%.6g")
        out["channels"].append({"channel_id": ch, "nodes": nodes})
    if args.out:
        nio.write_json(args.out, out)
    for c in out["channels"]:
        status = [n["status"] for n in c["nodes"]]
        print(json.dumps({"channel_id": c["channel_id"],
                          "active": status.count("active"), "blank": status.count("blank"),
                          "partial": status.count("partial"), "status": status}))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neusort", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic trace, ground truth and metadata")
    g.add_argument("kind", choices=["syn1", "syn2", "syn3", "analysis", "hybrid"])
    g.add_argument("--out", required=True, help="output prefix")
    g.add_argument("--seed", type=int)
    g.add_argument("--duration", type=float, default=60.0)
    g.add_argument("--sample-rate", type=float, default=30000.0)
    g.add_argument("--noise-std", type=float, default=5.0)
    g.add_argument("--onset-fraction", type=float, default=0.3)
    g.add_argument("--max-ratio", type=float, default=2.0)
    g.add_argument("--noise", type=float, help="hybrid noise level (fraction of peak amplitude)")
    g.add_argument("--allow-any-noise", action="store_true")
    g.add_argument("--n-spikes", type=int, default=849)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sort", help="sort a trace file into JSON-lines spikes")
    s.add_argument("trace")
    s.add_argument("--out", required=True)
    s.add_argument("--summary")
    s.add_argument("--save-state")
    s.add_argument("--config", help="JSON SorterConfig to start from")
    s.add_argument("--chunk", type=int, help="samples per push (default: whole trace)")
    s.add_argument("--workers", type=int, default=1)
    _add_config_flags(s)
    s.set_defaults(func=cmd_sort)

    e = sub.add_parser("eval", help="score sorted spikes against ground truth")
    e.add_argument("results")
    e.add_argument("truth")
    e.add_argument("--tolerance", type=int, default=15)
    e.add_argument("--format", choices=["text", "json", "csv"], default="text")
    e.add_argument("--method", choices=["optimal", "greedy"], default="optimal")
    e.add_argument("--channel", type=int)
    e.add_argument("--label")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time the classifier over growing spike counts")
    b.add_argument("--n", type=int, nargs="+", default=[1000, 2000, 4000])
    b.add_argument("--config")
    _add_config_flags(b)
    b.set_defaults(func=cmd_bench)

    w = sub.add_parser("power", help="estimate power from event counts")
    w.add_argument("--events-per-input", type=float)
    w.add_argument("--summary", help="sort summary JSON supplying events_per_input")
    w.add_argument("--inputs-per-second", type=float, default=3.42e3)
    w.add_argument("--channels", type=int, default=96)
    w.add_argument("--alpha-pj", type=float, default=23.6)
    w.set_defaults(func=cmd_power)

    n = sub.add_parser("snapshot", help="export learned weight maps")
    n.add_argument("state", nargs="?")
    n.add_argument("--fresh", action="store_true", help="snapshot an untrained layer")
    n.add_argument("--out")
    n.add_argument("--csv-dir")
    n.add_argument("--config")
    _add_config_flags(n)
    n.set_defaults(func=cmd_snapshot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, nio.FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # raised by preconditions in the library (bad parameters)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # invariant violations and bugs
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
