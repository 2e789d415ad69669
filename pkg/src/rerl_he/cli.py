"""Command-line entry point: ``rerl-he {synth,serve,outsource,sweep,calibrate}``.

Results go to ``--out DIR`` (results.csv, trace.csv, report.json). Failures
print a JSON object ``{"error": ..., "message": ...}`` to stderr and exit
with a nonzero status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, protocol
from .encrypted import client_finish
from .errors import ConfigurationError, RerlError
from .he import BACKENDS, NoiseBounds, make_backend
from .he import serialize as ser
from .mdp import build_grid_world
from .rerl import build_linear_system, greedy_actions, reconstruct_policy, solve_direct
from .analysis import err_metric

log = logging.getLogger("rerl_he")

EXIT_FAILURE = 1
EXIT_USAGE = 2


def _grid(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be WxH, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--grid", type=_grid, help="grid size WxH")
    p.add_argument("--goal", help="goal cell R,C")
    p.add_argument("--obstacles", help="blocked cells 'R,C;R,C'")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--ring-n", type=int, help="ring degree N")
    p.add_argument("--scale-log2", type=int, help="log2 of the scaling factor")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--iters", type=int, help="number of encrypted iterations T")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=bench.MODES)
    p.add_argument("--preset", type=int, choices=sorted(bench.PRESETS),
                   help="start from a numbered preset configuration")
    p.add_argument("--bounds", help="noise bounds JSON (from 'calibrate') for noise-sim")
    p.add_argument("--out", default="out", help="output directory")


def build_config(args) -> bench.ExperimentConfig:
    """Preset, then config file, then flags."""
    values = {}
    if args.preset:
        values.update(bench.PRESETS[args.preset].as_dict())
        values.pop("S")
    if args.config:
        values.update(bench.parse_config_text(Path(args.config).read_text()))
    if args.grid:
        values["width"], values["height"] = args.grid
    if args.goal:
        values["goal"] = bench.parse_cell(args.goal)
    if args.obstacles is not None:
        values["obstacles"] = bench._convert("obstacles", args.obstacles)[1]
    for flag, attr in [("lam", "lam"), ("ring_n", "ring_degree"), ("scale_log2", "scale_bits"),
                       ("backend", "backend"), ("iters", "T"), ("seed", "seed"), ("mode", "mode")]:
        v = getattr(args, flag, None)
        if v is not None:
            values[attr] = v
    return bench.ExperimentConfig(**values)


def _load_bounds(args):
    if not getattr(args, "bounds", None):
        return None
    d = json.loads(Path(args.bounds).read_text())
    return NoiseBounds(**d.get("bounds", d))


def cmd_synth(args) -> dict:
    cfg = build_config(args)
    res = bench.run_experiment(cfg, bounds=_load_bounds(args))
    res.write(args.out)
    return {"err_T": res.err_T, "greedy_match": res.greedy_match, "out": str(args.out),
            "timing_seconds": res.timing}


def cmd_calibrate(args) -> dict:
    cfg = build_config(args)
    bounds = bench.calibrate_for(cfg, trials=args.trials)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    body = {"config": cfg.as_dict(), "trials": args.trials, "bounds": bounds.as_dict()}
    (out / "bounds.json").write_text(json.dumps(body, indent=2))
    return body


def cmd_sweep(args) -> dict:
    cfg = build_config(args)
    scales = [int(s) for s in args.scales.split(",")]
    seeds = range(args.seeds)
    table = bench.sweep_scale_factors(cfg, scales, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench.write_sweep_csv(out / "sweep.csv", scales, table)
    summary = {f"2^{sb}": bench.mean_err_T(runs) for sb, runs in zip(scales, table)}
    (out / "report.json").write_text(json.dumps({"config": cfg.as_dict(), "err_T": summary}, indent=2))
    return {"err_T": summary, "out": str(out)}


def cmd_serve(args) -> dict:
    if args.job:
        protocol.serve_file(args.job, args.result)
        return {"result": args.result}
    protocol.serve(args.host, args.port, jobs=args.jobs)
    return {"jobs": args.jobs}


def _client_setup(args):
    cfg = build_config(args)
    mdp = build_grid_world(cfg.grid)
    sys_ = build_linear_system(mdp, cfg.lam)
    bounds = _load_bounds(args)
    if cfg.backend == "noise-sim" and bounds is None:
        bounds = bench.calibrate_for(cfg)
    backend = make_backend(cfg.backend, cfg.params, bounds)
    return cfg, mdp, sys_, backend


def cmd_outsource(args) -> dict:
    cfg, mdp, sys_, backend = _client_setup(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys_path = out / "client_keys.bin"
    Z0 = np.ones(sys_.size)

    if args.write_job:
        keys = backend.keygen()
        keys_path.write_bytes(ser.dump_key_material(keys))
        Path(args.write_job).write_bytes(protocol.client_job(backend, keys, sys_, Z0, cfg.T))
        return {"job": args.write_job, "keys": str(keys_path)}

    if args.read_result:
        keys = ser.load_key_material(keys_path.read_bytes(), cfg.params)
        ZT, trace, counts = protocol.read_result_file(args.read_result, cfg.params)
    else:
        host, port = args.endpoint.rsplit(":", 1)
        keys = backend.keygen()
        ZT, trace, counts, transcript = protocol.outsource(backend, keys, sys_, Z0, cfg.T, host, int(port))
        leaks = protocol.scan_transcript(transcript, sys_, cfg.params)
        if leaks and cfg.backend == "toy-ckks":
            raise RerlError(f"transcript contains {len(leaks)} plaintext patterns")

    fin = client_finish(backend, ZT, keys, mdp, cfg.lam)
    Z_star = solve_direct(sys_)
    plain = reconstruct_policy(mdp, Z_star, cfg.lam)
    trace.write_csv(out / "trace.csv")
    report = {
        "config": cfg.as_dict(),
        "err_T": err_metric(fin.Z_tilde, Z_star),
        "Z_tilde": fin.Z_tilde.tolist(),
        "greedy_actions": greedy_actions(fin.policy).tolist(),
        "greedy_match": bool(np.array_equal(greedy_actions(fin.policy), greedy_actions(plain))),
        "clamped": fin.clamped,
        "server_op_counts": counts,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    return {"err_T": report["err_T"], "greedy_match": report["greedy_match"], "out": str(out)}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rerl-he", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="run the encrypted synthesis in-process")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="measure per-operation noise bounds")
    _common(p)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", help="Err(T) across scaling factors")
    _common(p)
    p.add_argument("--scales", default="28,30", help="comma-separated log2 scaling factors")
    p.add_argument("--seeds", type=int, default=1, help="runs per scaling factor")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the server role")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=5555)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--job", help="file mode: job file to read")
    p.add_argument("--result", help="file mode: result file to write")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("outsource", help="run the client role")
    _common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--endpoint", help="server HOST:PORT")
    g.add_argument("--write-job", help="file mode: write the job and keep keys in --out")
    g.add_argument("--read-result", help="file mode: finish from a result file")
    p.set_defaults(func=cmd_outsource)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve" and bool(args.job) != bool(args.result):
        parser.error("--job and --result go together")
    try:
        out = args.func(args)
    except (ConfigurationError, argparse.ArgumentTypeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except (RerlError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps(out, indent=2, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
