"""Command-line interface: ``dnaengine <command> [options]``.

Exit codes: 0 on success, 1 on a validation or runtime failure (with one
``error: <kind>: <message>`` line on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import ann, chem, device, plotting, stochastic, trace
from .config import ConfigError, default_config, load_config
from .data import dump_json, load_dataset, load_json
from .fluidics import ProtocolError, simulate_layer


class CommandFailed(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _write_or_print(text: str, path):
    if path:
        Path(path).write_text(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)


def _held_out(args):
    data = load_dataset(args.dataset)
    if args.dataset.startswith("builtin"):
        _, data = data.split(args.test_size, args.split_seed)
    return data


def _load_network(args, cfg) -> ann.NetworkSpec:
    path = args.network or cfg.network.spec_path
    if not path:
        raise CommandFailed("usage", "no network given (use --network or network.spec_path)")
    return ann.NetworkSpec.from_dict(load_json(path))


def cmd_gates(args, cfg):
    value = stochastic.evaluate_expression(args.expression)
    print(f"value\t{value:.12g}")
    if args.bitstream:
        est = stochastic.evaluate_expression_bitstream(args.expression, args.bitstream, args.seed)
        print(f"bitstream\t{est:.12g}\tn={args.bitstream}\tseed={args.seed}")


def cmd_multiply(args, cfg):
    mode = chem.Mode(args.mode)
    t = args.t or cfg.chemistry.t
    seed = cfg.chemistry.seed if args.seed is None else args.seed
    print(f"{chem.multiply(args.a, args.b, t, mode, seed, cfg.error_model()):.12g}")


def cmd_simulate_layer(args, cfg):
    mode = chem.Mode(args.mode)
    seed = cfg.chemistry.seed if args.seed is None else args.seed
    if args.network or cfg.network.spec_path:
        net = _load_network(args, cfg)
        w, th = net.weights[args.layer], net.thresholds[args.layer]
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        w = rng.uniform(0, 1, (args.k, args.k))
        th = np.full(args.k, cfg.network.theta_default)
    if args.inputs:
        x = np.array(_floats(args.inputs))
    else:
        x = np.random.Generator(np.random.PCG64(seed + 1)).uniform(0, 1, w.shape[1])
    run = simulate_layer(x, w, th, args.t or cfg.chemistry.t, mode, seed, cfg.device_config().timing,
                         cfg.error_model(), args.n_next, cfg.chemistry.output_cap,
                         gain=cfg.chemistry.activation_gain)
    print("neuron\tpre_activation\toutput")
    for i, (p, o) in enumerate(zip(run.pre_activations, run.activations)):
        print(f"{i}\t{p:.12g}\t{o:.12g}")
    print(f"events\t{len(run.events)}\tend_time_hr\t{run.end_time_s / device.HOUR:.6f}")
    violations = trace.validate(run.events)
    trace_path = args.trace or cfg.run.trace_path
    if trace_path:
        trace.write_trace(run.events, trace_path)
        print(f"wrote {trace_path}")
    if args.figure:
        plotting.plot_trace_timeline(run.events, args.figure)
        print(f"wrote {args.figure}")
    if violations:
        raise CommandFailed(violations[0].rule, violations[0].message)


def cmd_explore(args, cfg):
    timing = cfg.device_config().timing
    if args.paper_configs:  # flag name is part of the CLI contract
        configs = [device.DeviceConfig(c.k_physical, timing=timing, name=c.name) for c in device.PUBLISHED_CONFIGS]
    elif args.k:
        configs = [device.DeviceConfig(k, timing=timing) for k in _ints(args.k)]
    else:
        configs = [cfg.device_config()]
    rows = device.explore(configs, _ints(args.layers), args.exact_optimistic)
    _write_or_print(device.rows_to_csv(rows), args.report or cfg.run.report_path)
    if args.figure:
        plotting.plot_design_space(rows, args.figure)
        print(f"wrote {args.figure}")


def cmd_train(args, cfg):
    data = load_dataset(args.dataset)
    train_set, test_set = data.split(args.test_size, args.split_seed)
    tcfg = cfg.train_config()
    if args.epochs:
        tcfg = dataclasses.replace(tcfg, epochs=args.epochs)
    seed = cfg.training.seed if args.seed is None else args.seed
    history = []
    net = ann.train(train_set, tcfg, seed, history=history)
    spec = ann.to_spec(net, cfg.chemistry.output_cap)
    dump_json(spec.to_dict(), args.out)
    print(f"layers\t{','.join(map(str, spec.layer_sizes))}")
    print(f"train_accuracy\t{ann.accuracy(net, train_set):.4f}")
    print(f"test_accuracy\t{ann.accuracy(net, test_set):.4f}")
    print(f"min_weight\t{min(float(w.min()) for w in net.weights):.6g}")
    print(f"wrote {args.out}")
    if args.figure:
        plotting.plot_training_curve(history, args.figure)
        print(f"wrote {args.figure}")


def cmd_infer(args, cfg):
    net = _load_network(args, cfg)
    data = _held_out(args)
    if not 0 <= args.index < len(data):
        raise CommandFailed("usage", f"index {args.index} outside 0..{len(data) - 1}")
    mode = cfg.execution_mode(args.mode)
    dev = device.DeviceConfig(args.device_k, timing=cfg.device_config().timing) if args.device_k \
        else cfg.device_config()
    res = ann.infer(net, data.images[args.index], mode, dev, cfg.error_model(), sample=args.index,
                    gain=cfg.chemistry.activation_gain)
    print(f"mode\t{mode}")
    print(f"predicted\t{res.predicted_class}")
    print(f"label\t{data.labels[args.index]}")
    print("outputs\t" + ",".join(f"{v:.6g}" for v in res.outputs))
    for n, lat in zip(net.layer_sizes, res.layer_latencies_hr):
        print(f"layer_latency_hr\tk_layer={n}\t{lat:.4f}")
    print(f"latency_hr\t{res.latency_hr:.4f}")
    trace_path = args.trace or cfg.run.trace_path
    if trace_path and res.events:
        trace.write_trace(res.events, trace_path)
        print(f"wrote {trace_path}")


def cmd_compare(args, cfg):
    net = _load_network(args, cfg)
    data = _held_out(args)
    n = min(args.samples, len(data))
    t = args.t or cfg.chemistry.t
    seeds = _ints(args.seeds) if args.seeds else [cfg.chemistry.seed]
    modes = []
    for name in args.modes.split(","):
        kind = ann.ModeKind(name.strip())
        if kind in (ann.ModeKind.SAMPLED, ann.ModeKind.FLUIDICS):
            modes.extend(ann.ExecutionMode(kind, t, s) for s in seeds)
        else:
            modes.append(ann.ExecutionMode(kind, t))
    reports = ann.compare_modes(net, data.images[:n], modes, cfg.error_model())
    _write_or_print(ann.reports_to_csv(reports), args.report or cfg.run.report_path)
    if args.figure:
        plotting.plot_agreement(reports, args.figure)
        print(f"wrote {args.figure}")


def cmd_trace_validate(args, cfg):
    events = trace.read_trace(args.trace_file)
    violations = trace.validate(events)
    if violations:
        for v in violations[1:]:
            print(f"violation\t{v}")
        raise CommandFailed(violations[0].rule, violations[0].message)
    print(f"ok\t{len(events)} events")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration (JSON)")
    p = argparse.ArgumentParser(prog="dnaengine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--dataset", default="builtin", help="'builtin' or 'IMAGES.idx,LABELS.idx'")
        sp.add_argument("--test-size", type=int, default=400)
        sp.add_argument("--split-seed", type=int, default=0)

    sp = sub.add_parser("gates", parents=[common], help="evaluate a stochastic gate expression")
    sp.add_argument("expression", help="e.g. 'XOR(0.3, NOT(0.2))'")
    sp.add_argument("--bitstream", type=int, default=0, help="also estimate with bitstreams of this length")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gates)

    sp = sub.add_parser("multiply", parents=[common], help="encode a, nick with b, read out a*b")
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--b", type=float, required=True)
    sp.add_argument("--t", type=int)
    sp.add_argument("--mode", choices=[m.value for m in chem.Mode], default="ideal")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_multiply)

    sp = sub.add_parser("simulate-layer", parents=[common], help="run one layer through the microfluidic array")
    sp.add_argument("--network")
    sp.add_argument("--layer", type=int, default=0)
    sp.add_argument("--k", type=int, default=4, help="size of a random square layer when no network is given")
    sp.add_argument("--inputs", help="comma-separated input fractions")
    sp.add_argument("--t", type=int)
    sp.add_argument("--mode", choices=[m.value for m in chem.Mode], default="ideal")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-next", type=int, default=1, help="droplets per neuron after separation")
    sp.add_argument("--trace", help="write the event log here")
    sp.add_argument("--figure", help="write a timeline figure here")
    sp.set_defaults(func=cmd_simulate_layer)

    sp = sub.add_parser("explore", parents=[common], help="area/latency design-space table (CSV)")
    sp.add_argument("--paper-configs", action="store_true", help="the four published array sizes")
    sp.add_argument("--k", help="comma-separated array sizes")
    sp.add_argument("--layers", default="784,784,10")
    sp.add_argument("--exact-optimistic", action="store_true",
                    help="use (3 * 35 um)^2 per cell instead of the rounded 0.01 mm^2")
    sp.add_argument("--report", help="CSV output path (default stdout)")
    sp.add_argument("--figure", help="write an area/latency figure here")
    sp.set_defaults(func=cmd_explore)

    sp = sub.add_parser("train", parents=[common], help="train a nonnegative float network and quantize it")
    data_args(sp)
    sp.add_argument("--out", required=True, help="network JSON output path")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--figure", help="write the loss curve here")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", parents=[common], help="classify one held-out sample")
    data_args(sp)
    sp.add_argument("--network")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--mode", choices=[m.value for m in ann.ModeKind])
    sp.add_argument("--device-k", type=int, help="array size for the latency estimate")
    sp.add_argument("--trace", help="event log path (fluidics mode)")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("compare", parents=[common], help="agreement between execution modes")
    data_args(sp)
    sp.add_argument("--network")
    sp.add_argument("--modes", default="float,ideal,sampled")
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--t", type=int)
    sp.add_argument("--seeds", help="comma-separated seeds for sampled modes")
    sp.add_argument("--report", help="CSV output path (default stdout)")
    sp.add_argument("--figure", help="write an agreement bar chart here")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("trace-validate", parents=[common], help="check an event log against the protocol rules")
    sp.add_argument("trace_file")
    sp.set_defaults(func=cmd_trace_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else default_config()
        args.func(args, cfg)
    except CommandFailed as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, OSError, ProtocolError, trace.TraceFormatError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
