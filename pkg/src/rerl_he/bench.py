"""Experiment harness: configurations, runs, sweeps and result files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import ErrorReport, bound_parameters, err_metric, verify_run
from .encrypted import IterationTrace, client_finish, encrypt_model, run_encrypted_vi
from .errors import CapacityError, ConfigurationError
from .he import BackendParams, NoiseBounds, calibrate_noise_bounds, make_backend
from .he.toy_ckks import ToyCkksBackend
from .mdp import GridWorldSpec, build_grid_world
from .rerl import build_linear_system, greedy_actions, reconstruct_policy, solve_direct

log = logging.getLogger(__name__)

MODES = ("in-process", "client-server")
CALIBRATION_SEED_OFFSET = 10_000


@dataclass(frozen=True)
class ExperimentConfig:
    """One encrypted synthesis experiment.

    ``S`` follows from the grid. Calibration for the bound report runs on a
    separate toy backend seeded with ``seed + 10000``.
    """

    width: int = 2
    height: int = 2
    goal: Tuple[int, int] = (0, 0)
    obstacles: Tuple[Tuple[int, int], ...] = ()
    stage_cost: float = 0.5
    lam: float = 10.0
    ring_degree: int = 128
    scale_bits: int = 28
    levels: int = 2
    base_headroom_bits: int = 10
    boot_noise_factor: float = 512.0
    backend: str = "toy-ckks"
    T: int = 50
    tol: float = 1e-10
    seed: int = 0
    mode: str = "in-process"
    test_mode: bool = True
    calibration_trials: int = 100

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "obstacles", tuple(sorted(tuple(c) for c in self.obstacles)))
        if self.T < 1:
            raise ConfigurationError("T must be at least 1")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.lam <= 0:
            raise ConfigurationError("lambda must be positive")
        if self.S > self.params.slot_count:
            raise CapacityError(f"S={self.S} exceeds {self.params.slot_count} slots")

    @property
    def grid(self) -> GridWorldSpec:
        return GridWorldSpec(self.width, self.height, self.goal, frozenset(self.obstacles), self.stage_cost)

    @property
    def S(self) -> int:
        return len(self.grid.free_cells()) - 1

    @property
    def params(self) -> BackendParams:
        return BackendParams(
            ring_degree=self.ring_degree,
            scale_bits=self.scale_bits,
            levels=self.levels,
            base_headroom_bits=self.base_headroom_bits,
            boot_noise_factor=self.boot_noise_factor,
            seed=self.seed,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["S"] = self.S
        return d


# Preset grid layouts: S=3 is a 2x2 grid with the
# goal in a corner, S=7 a 3x3 grid with the goal in the centre and one
# blocked corner.
_S3 = dict(width=2, height=2, goal=(0, 0))
_S7 = dict(width=3, height=3, goal=(1, 1), obstacles=((2, 2),))

PRESETS: Dict[int, ExperimentConfig] = {
    1: ExperimentConfig(**_S3, ring_degree=2**7, scale_bits=28),
    2: ExperimentConfig(**_S3, ring_degree=2**7, scale_bits=30),
    3: ExperimentConfig(**_S7, ring_degree=2**7, scale_bits=28),
    4: ExperimentConfig(**_S7, ring_degree=2**7, scale_bits=32),
    5: ExperimentConfig(**_S3, ring_degree=2**8, scale_bits=29),
    6: ExperimentConfig(**_S3, ring_degree=2**10, scale_bits=30),
}


@dataclass
class RunResult:
    config: ExperimentConfig
    Z_star: np.ndarray
    Z_tilde: np.ndarray
    err_T: float
    policy: np.ndarray
    plain_policy: np.ndarray
    trace: IterationTrace
    bounds: Optional[NoiseBounds] = None
    report: Optional[ErrorReport] = None
    op_counts: Dict[str, int] = field(default_factory=dict)
    clamped: int = 0
    transcript: Optional[bytes] = None

    @property
    def err_trajectory(self) -> Optional[List[float]]:
        return None if self.report is None else self.report.err_trajectory

    @property
    def bound_curve(self) -> Optional[List[float]]:
        return None if self.report is None else self.report.bound_curve

    @property
    def timing(self) -> Dict[str, float]:
        w = np.asarray(self.trace.wall_seconds)
        return {"mean": float(w.mean()), "min": float(w.min()), "max": float(w.max())}

    @property
    def greedy_match(self) -> bool:
        return bool(np.array_equal(greedy_actions(self.policy), greedy_actions(self.plain_policy)))

    def summary(self) -> dict:
        out = {
            "config": self.config.as_dict(),
            "err_T": self.err_T,
            "timing_seconds": self.timing,
            "greedy_match": self.greedy_match,
            "clamped": self.clamped,
            "op_counts": dict(self.op_counts),
            "Z_tilde": self.Z_tilde.tolist(),
            "Z_star": self.Z_star.tolist(),
        }
        if self.bounds is not None:
            out["noise_bounds"] = self.bounds.as_dict()
        if self.report is not None:
            out["bounds_check"] = self.report.summary()
        return out

    def write(self, out_dir) -> Path:
        """Write results.csv, trace.csv and report.json into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.report is not None:
            self.report.write_csv(out / "results.csv")
        else:
            with open(out / "results.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["k", "err_k", "resid_k", "bound_k"])
                w.writerow([self.config.T, repr(self.err_T), "", ""])
        self.trace.write_csv(out / "trace.csv")
        with open(out / "report.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2)
        return out


def calibrate_for(cfg: ExperimentConfig, trials: Optional[int] = None) -> NoiseBounds:
    """Calibrate toy-engine bounds at the configuration's parameters."""
    params = cfg.params.replace(seed=cfg.seed + CALIBRATION_SEED_OFFSET)
    backend = ToyCkksBackend(params)
    keys = backend.keygen()
    return calibrate_noise_bounds(backend, keys, trials=trials or cfg.calibration_trials).bounds


def run_experiment(cfg: ExperimentConfig, bounds: Optional[NoiseBounds] = None) -> RunResult:
    """Solve for ``Z*``, run the encrypted iteration and compare.

    Args:
        cfg: Experiment configuration.
        bounds: Per-operation bounds. They drive the simulator and the bound
            check. Calibrated from the toy engine when omitted and needed.

    Returns:
        The run result; ``report`` is filled in test mode.
    """
    mdp = build_grid_world(cfg.grid)
    sys = build_linear_system(mdp, cfg.lam)
    Z_star = solve_direct(sys)
    plain_policy = reconstruct_policy(mdp, Z_star, cfg.lam)
    Z0 = np.ones(sys.size)

    if bounds is None and (cfg.backend == "noise-sim" or cfg.test_mode):
        bounds = calibrate_for(cfg)
    backend = make_backend(cfg.backend, cfg.params, bounds)
    keys = backend.keygen()

    transcript = None
    if cfg.mode == "in-process":
        # Client encrypts the model and Z0, the server side sees evaluation keys only.
        model = encrypt_model(sys, backend, keys)
        enc_z0 = backend.encrypt(Z0, keys)
        ZT, trace = run_encrypted_vi(
            backend, model, enc_z0, cfg.T, keys.evaluation_keys(),
            snapshot_keys=keys if cfg.test_mode else None,
        )
        counts = dict(backend.counts)
    else:
        from .protocol import outsource_local

        ZT, trace, counts, transcript = outsource_local(backend, keys, sys, Z0, cfg.T)
    fin = client_finish(backend, ZT, keys, mdp, cfg.lam)

    report = None
    if trace.snapshots is not None:
        bp = bound_parameters(sys, bounds, Z0, Z_star)
        report = verify_run(trace.snapshots, sys, bp, Z_star)
    return RunResult(
        config=cfg,
        Z_star=Z_star,
        Z_tilde=fin.Z_tilde,
        err_T=err_metric(fin.Z_tilde, Z_star),
        policy=fin.policy,
        plain_policy=plain_policy,
        trace=trace,
        bounds=bounds,
        report=report,
        op_counts=counts,
        clamped=fin.clamped,
        transcript=transcript,
    )


def sweep_scale_factors(
    base_cfg: ExperimentConfig, scale_bits: Sequence[int], seeds: Sequence[int] = (0,)
) -> List[List[RunResult]]:
    """Run ``base_cfg`` at every ``log2(Δ)`` in ``scale_bits``, once per seed."""
    if len(scale_bits) < 2:
        raise ValueError("a sweep needs at least two scale factors")
    return [
        [run_experiment(base_cfg.replace(scale_bits=sb, seed=s)) for s in seeds] for sb in scale_bits
    ]


def mean_err_T(runs: Sequence[RunResult]) -> float:
    return float(np.mean([r.err_T for r in runs]))


def write_sweep_csv(path, scale_bits: Sequence[int], table: Sequence[Sequence[RunResult]]) -> None:
    """Plot-ready ``k, err_k`` columns per Δ (seed-averaged)."""
    curves = []
    for runs in table:
        if any(r.err_trajectory is None for r in runs):
            raise ValueError("sweep CSV needs test-mode trajectories")
        curves.append(np.mean([r.err_trajectory for r in runs], axis=0))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"err_k_delta_2^{sb}" for sb in scale_bits])
        for k in range(len(curves[0])):
            w.writerow([k] + [repr(float(c[k])) for c in curves])


# -- key = value configuration files --------------------------------------

_KEYS = {
    "width": ("width", int),
    "height": ("height", int),
    "goal": ("goal", None),
    "obstacles": ("obstacles", None),
    "stage_cost": ("stage_cost", float),
    "lambda": ("lam", float),
    "ring_n": ("ring_degree", int),
    "scale_log2": ("scale_bits", int),
    "levels": ("levels", int),
    "boot_noise_factor": ("boot_noise_factor", float),
    "backend": ("backend", str),
    "iters": ("T", int),
    "tol": ("tol", float),
    "seed": ("seed", int),
    "mode": ("mode", str),
    "test_mode": ("test_mode", None),
}


def parse_cell(text: str) -> Tuple[int, int]:
    parts = [p.strip() for p in text.replace("(", "").replace(")", "").split(",")]
    if len(parts) != 2:
        raise ConfigurationError(f"cell must be 'row,col', got {text!r}")
    return int(parts[0]), int(parts[1])


def _convert(key: str, value: str):
    attr, conv = _KEYS[key]
    if key == "goal":
        return attr, parse_cell(value)
    if key == "obstacles":
        cells = [c for c in value.split(";") if c.strip()]
        return attr, tuple(parse_cell(c) for c in cells)
    if key == "test_mode":
        return attr, value.strip().lower() in ("1", "true", "yes", "on")
    return attr, conv(value.strip())


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key = value`` lines into :class:`ExperimentConfig` field values.

    Keys: width, height, goal (``r,c``), obstacles (``r,c; r,c``), stage_cost,
    lambda, ring_n, scale_log2, levels, boot_noise_factor, backend, iters,
    tol, seed, mode, test_mode. ``#`` starts a comment.
    """
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"line {n}: unknown key {key!r}")
        try:
            attr, val = _convert(key, value)
        except ValueError as exc:
            raise ConfigurationError(f"line {n}: {exc}") from None
        out[attr] = val
    return out


def format_config_text(cfg: ExperimentConfig) -> str:
    inverse = {attr: key for key, (attr, _) in _KEYS.items()}
    lines = []
    for f in fields(cfg):
        if f.name not in inverse:
            continue
        v = getattr(cfg, f.name)
        if f.name == "goal":
            v = f"{v[0]},{v[1]}"
        elif f.name == "obstacles":
            v = "; ".join(f"{r},{c}" for r, c in v)
        lines.append(f"{inverse[f.name]} = {v}")
    return "\n".join(lines) + "\n"
