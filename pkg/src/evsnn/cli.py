"""Command-line entry point: ``evsnn {simulate,analyze,compare,calibrate,encode}``.

Reports are JSON bodies preceded by a single ``# generated:`` line, so two
runs with the same inputs differ only in that line. Exit codes: 0 ok,
1 invalid input or failed check, 2 internal error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core_model import ConfigError, Model, NetworkConfig, random_model, validate_config
from .fileio import FormatError, config_to_dict, load_config, load_features, load_trace, load_weights, save_config, save_trace, trace_to_text
from .power_model import FITTED_ENERGY_PJ, CalibrationError, PowerParams, calibrate_model, inference_energy, run_power
from .rate_coding import BnnModel, InputWindow, bnn_forward, compare_snn_to_oracle, decode, encode, encode_stream, sliding_windows
from .sim_kernel import SpikeTrace, TraceError, run
from .starvation import LayerLoad, loads_from_oracle, propagate_loads, single_block_case, sweep, verify_against_sim

log = logging.getLogger("evsnn")

EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would exit with 2, which this tool reserves for internal errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# reports


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    tool_version: str = __version__
    inputs: dict = field(default_factory=dict)  # role -> {"path", "sha256"}
    parameters: dict = field(default_factory=dict)

    def add_input(self, role: str, path) -> None:
        if path:
            self.inputs[role] = {"path": str(path), "sha256": _sha256(path)}

    def to_dict(self) -> dict:
        return asdict(self)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def render_report(body: dict, now: _dt.datetime | None = None) -> str:
    now = now or _dt.datetime.now(_dt.timezone.utc)
    text = json.dumps(_jsonable(body), indent=2, sort_keys=True)
    return f"# generated: {now.isoformat(timespec='seconds')}\n{text}\n"


def read_report(path) -> dict:
    """Parse a report written by this tool, skipping the timestamp line."""
    lines = Path(path).read_text().splitlines()
    if lines and lines[0].startswith("# generated:"):
        lines = lines[1:]
    return json.loads("\n".join(lines))


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def clock_report(config: NetworkConfig) -> dict:
    """Nominal clocks next to the tick-rounded ones the simulator uses."""
    rows = {}
    for name, hz, period in (
        ("neuron", config.neuron_clock_hz, config.neuron_period),
        ("arbiter", config.arbiter_clock_hz, config.arbiter_period),
    ):
        rows[name] = {"nominal_hz": hz, "period_ticks": period, "effective_hz": 1e6 / period}
    return rows


# ---------------------------------------------------------------------------
# shared loading


def power_params(config: NetworkConfig) -> PowerParams:
    """Shipped calibration, overridden by any constants in the config's power section."""
    return PowerParams.from_dict({**FITTED_ENERGY_PJ, **config.power})


def _load_model(args, manifest: RunManifest) -> Model:
    manifest.add_input("config", args.config)
    config = load_config(args.config)
    if args.weights:
        manifest.add_input("weights", args.weights)
        return validate_config(config, load_weights(args.weights))
    if len(config.layers) == 1:
        return validate_config(config, [])
    seed = getattr(args, "seed", None)
    if seed is None:
        raise UsageError("--weights is required for multi-layer networks")
    manifest.parameters["weight_seed"] = seed
    return random_model(config.sizes, config.thresholds, seed=seed, **_config_kwargs(config))


def _config_kwargs(config: NetworkConfig) -> dict:
    data = config_to_dict(config)
    for key in ("format_version", "layers", "thresholds"):
        data.pop(key)
    return data


def _input_trace(args, model: Model, manifest: RunManifest) -> tuple[SpikeTrace, int, list]:
    """Trace, natural duration and windows (empty for raw traces)."""
    frame = model.config.frame_ticks
    if getattr(args, "features", None):
        manifest.add_input("features", args.features)
        frames = load_features(args.features, model.config.activation_bits)
        windows = sliding_windows(frames)
        if windows and len(windows[0]) != model.config.sizes[0]:
            raise ConfigError(f"feature windows have {len(windows[0])} inputs, layer 0 has {model.config.sizes[0]}")
        return encode_stream(windows, frame), max(len(windows), 1) * frame, windows
    if getattr(args, "trace", None):
        manifest.add_input("trace", args.trace)
        trace = load_trace(args.trace, model.config.sizes[0])
        last = int(trace.times.max()) if len(trace) else 0
        return trace, (last // frame + 1) * frame, []
    return SpikeTrace.empty(), frame, []


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    manifest = RunManifest("simulate")
    model = _load_model(args, manifest)
    trace, natural, _ = _input_trace(args, model, manifest)
    duration = args.duration if args.duration is not None else natural
    manifest.parameters.update(duration_ticks=duration, config=config_to_dict(model.config))
    result = run(model, trace, duration)
    params = power_params(model.config)
    power = run_power(result.ledger, params, duration)
    frames = result.output_spike_counts
    decisions = [decode(frames[i]) for i in range(frames.shape[0])]
    body = {
        "manifest": manifest.to_dict(),
        "clocks": clock_report(model.config),
        "output_spike_counts": frames,
        "decisions": [{"frame": i, "label": d.label, "no_spike": d.no_spike} for i, d in enumerate(decisions)],
        "ledger": result.ledger.to_dict(),
        "power": {"params": params.to_dict(), "rows_nw": dict(power.rows())},
        "conformance": {
            "conforming": result.conforming,
            "lost_spikes": result.ledger.lost_spikes,
            "starved": {f"layer_{i}": list(s) for i, s in enumerate(result.starved) if s},
            "collisions": result.collisions,
            "illegal_steps": result.illegal_steps,
            "duplicate_reqs": result.duplicate_reqs,
            "same_tick_pairs": result.same_tick_pairs,
        },
        "warnings": list(model.warnings),
    }
    if duration >= model.config.frame_ticks:
        body["inference_energy"] = inference_energy(result, params).to_dict()
    _emit(render_report(body), args.out)
    return EXIT_OK


def _parse_range(text: str, cast=int) -> list:
    """``a:b`` or ``a:b:step`` (inclusive), or a comma list."""
    try:
        if ":" in text:
            parts = [cast(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            values = list(np.arange(lo, hi + step / 2, step))
            return [cast(v) for v in values]
        return [cast(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None


def cmd_analyze(args) -> int:
    manifest = RunManifest("analyze")
    manifest.add_input("config", args.config)
    config = load_config(args.config)
    blocks = len(config.layers) - 1
    if blocks < 1:
        raise ConfigError("a single-layer network has no synapse block to analyze")
    if args.n_spk:
        n_spk = [float(v) for v in args.n_spk.split(",")]
        if len(n_spk) != blocks:
            raise UsageError(f"--n-spk needs {blocks} values")
        loads = [LayerLoad(s, n, th) for s, n, th in zip(n_spk, config.sizes, config.thresholds)]
        mode = "given"
    else:
        model = _load_model(args, manifest)
        trace, natural, windows = _input_trace(args, model, manifest)
        if args.mode == "estimate":
            if not windows:
                raise UsageError("estimate mode needs --features")
            bnn = BnnModel.from_model(model)
            outs = [bnn_forward(bnn, w) for w in windows]
            acts = [np.stack([o.activations[i] for o in outs]) for i in range(len(config.layers))]
            loads = loads_from_oracle(config, acts)
        else:
            result = run(model, trace, natural)
            loads = propagate_loads(config, None, mode="ledger", result=result)
        mode = args.mode
    th_ranges = [_parse_range(r) for r in args.th_range] if args.th_range else [list(range(1, 65))]
    if not args.coupled and len(th_ranges) == 1 and blocks > 1:
        raise UsageError("give one --th-range per synapse block, or --coupled")
    f_values = _parse_range(args.f_range, float)
    res = sweep(loads, th_ranges, f_values, config.arbiter_cycles_per_request, config.frame_ticks / 1e6, args.coupled)
    manifest.parameters.update(load_mode=mode, loads=[asdict(l) for l in loads], coupled=args.coupled)
    summary = {
        "manifest": manifest.to_dict(),
        "clocks": clock_report(config),
        "points": len(res.points),
        "feasible": sum(p.feasible for p in res.points),
        "recommended": [
            {"thresholds": p.thresholds, "f_clk_a_hz": p.f_clk_a, "margin": p.margin} for p in res.recommended
        ],
    }
    if args.verify:
        checks = []
        for p in res.recommended[:1]:
            load = max(loads, key=lambda l: l.n_spk * l.n_nrn / l.threshold)
            m, tr, dur, pt = single_block_case(load.with_threshold(max(p.thresholds)), p.f_clk_a, config.arbiter_cycles_per_request, config.frame_ticks)
            v = verify_against_sim(pt, m, tr, dur)
            checks.append({"agrees": v.agrees, "in_band": v.in_band, "evidence": v.evidence})
        summary["verification"] = checks
    _emit(res.to_csv(), args.out)
    sys.stderr.write(render_report(summary))
    return EXIT_OK


def cmd_compare(args) -> int:
    manifest = RunManifest("compare")
    model = _load_model(args, manifest)
    manifest.add_input("features", args.features)
    frames = load_features(args.features, model.config.activation_bits)
    if not frames:
        raise UsageError("compare needs at least one feature frame")
    index = len(frames) - 1 if args.frame is None else args.frame
    if not 0 <= index < len(frames):
        raise UsageError(f"--frame {index} outside 0..{len(frames) - 1}")
    window = InputWindow.from_frames(frames, index)
    cfg = model.config
    # hold the window steady so the last frame shows the settled counts
    trace = SpikeTrace.concat([encode(window, cfg.frame_ticks, f) for f in range(args.settle)])
    result = run(model, trace, cfg.frame_ticks * args.settle)
    report = compare_snn_to_oracle(result, bnn_forward(BnnModel.from_model(model), window), activation_bits=cfg.activation_bits)
    manifest.parameters.update(window_index=index, settle_frames=args.settle, config=config_to_dict(cfg))
    body = {
        "manifest": manifest.to_dict(),
        "passed": report.ok,
        "pass_fraction": report.pass_fraction,
        "max_deviation": {f"layer_{l}": report.max_deviation(l) for l in range(len(cfg.layers))},
        "explanation": report.explain(),
        "rows": [
            {"layer": r.layer, "neuron": r.neuron, "snn": r.snn, "bnn": r.bnn, "tolerance": r.tolerance, "pass": r.passed}
            for r in report.rows
        ],
    }
    _emit(render_report(body), args.out)
    for note in report.explain():
        sys.stderr.write(note + "\n")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_calibrate(args) -> int:
    manifest = RunManifest("calibrate")
    model = _load_model(args, manifest)
    params = power_params(model.config)
    if args.e_sop is not None:
        params = PowerParams.from_dict({**params.to_dict(), "e_sop_pj": args.e_sop})
    cal = calibrate_model(model, params, n_frames=args.frames, strict=args.strict)
    fitted = cal.params.to_dict()
    config = model.config.replace(power={**model.config.power, **fitted})
    save_config(config, args.out or args.config)
    manifest.parameters.update(anchor_frames=args.frames)
    sys.stderr.write(render_report({"manifest": manifest.to_dict(), "calibration": cal.to_dict()}))
    return EXIT_OK


def cmd_encode(args) -> int:
    manifest = RunManifest("encode")
    manifest.add_input("config", args.config)
    config = load_config(args.config)
    frames = load_features(args.features, config.activation_bits)
    trace = encode_stream(sliding_windows(frames), config.frame_ticks, burst=args.burst)
    if args.out:
        save_trace(trace, args.out)
    else:
        sys.stdout.write(trace_to_text(trace))
    log.info("encoded %d spikes", len(trace))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evsnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evsnn {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, weights_required=False):
        p.add_argument("--config", required=True, help="network config (JSON)")
        p.add_argument("--weights", required=weights_required, help="binary weight file")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("simulate", help="run the event simulator and report activity and power")
    common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--features", help="feature file; encoded with the sliding window")
    src.add_argument("--trace", help="input spike trace")
    p.add_argument("--duration", type=int, help="ticks to simulate (default: cover the input)")
    p.add_argument("--seed", type=int, help="use seeded random weights instead of --weights")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="threshold and arbiter-clock starvation sweep (CSV)")
    common(p)
    p.add_argument("--n-spk", help="comma list of incoming spikes/frame/neuron per synapse block")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--features")
    src.add_argument("--trace")
    p.add_argument("--mode", choices=("estimate", "ledger"), default="estimate", help="how deeper-layer loads are obtained")
    p.add_argument("--th-range", action="append", help="threshold range a:b[:step] or list; repeat per block")
    p.add_argument("--f-range", default="1000:70000:1000", help="arbiter clock range in Hz")
    p.add_argument("--coupled", action="store_true", help="one threshold for every layer")
    p.add_argument("--verify", action="store_true", help="cross-check the first recommended point in simulation")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="compare SNN spike counts with the BNN oracle")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--frame", type=int, help="window index (default: last)")
    p.add_argument("--settle", type=int, default=4, help="frames the window is held before comparing")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="fit power constants to the idle and max-rate anchors")
    common(p)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--e-sop", type=float, help="SOP energy to hold (pJ)")
    p.add_argument("--strict", action="store_true", help="fail instead of rescaling the SOP energy")
    p.add_argument("--seed", type=int, default=0, help="random weights when --weights is absent")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("encode", help="convert a feature file to an input spike trace")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--burst", action="store_true", help="place each input's spikes at the frame start")
    p.set_defaults(func=cmd_encode)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FormatError, TraceError, CalibrationError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        sys.stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
