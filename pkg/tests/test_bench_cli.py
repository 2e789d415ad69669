import csv
import json
import statistics
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rerl_he import bench
from rerl_he.bench import ExperimentConfig, PRESETS, run_experiment
from rerl_he.cli import main
from rerl_he.encrypted import encrypt_model, run_encrypted_vi
from rerl_he.errors import CapacityError, ConfigurationError
from rerl_he.he import NoiseBounds, ToyCkksBackend
from rerl_he.mdp import build_grid_world
from rerl_he.rerl import build_linear_system

CFG1 = PRESETS[1]


@pytest.fixture(scope="module")
def cfg1_run():
    return run_experiment(CFG1)


def test_table_configs_shape():
    got = {i: (c.S, c.ring_degree, c.scale_bits) for i, c in PRESETS.items()}
    assert got == {
        1: (3, 128, 28), 2: (3, 128, 30), 3: (7, 128, 28),
        4: (7, 128, 32), 5: (3, 256, 29), 6: (3, 1024, 30),
    }


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(T=0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(mode="cloud")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(lam=0)
    with pytest.raises(CapacityError):
        ExperimentConfig(width=3, height=3, ring_degree=8)


@given(
    w=st.integers(2, 4), h=st.integers(1, 3), lam=st.floats(0.01, 100), seed=st.integers(0, 2**31),
    T=st.integers(1, 200), sb=st.integers(20, 40), backend=st.sampled_from(["toy-ckks", "noise-sim"]),
    mode=st.sampled_from(bench.MODES), tm=st.booleans(),
)
@settings(max_examples=40, deadline=None)
def test_config_text_roundtrip(w, h, lam, seed, T, sb, backend, mode, tm):
    cfg = ExperimentConfig(width=w, height=h, goal=(0, 0), obstacles=((h - 1, w - 1),) if h > 1 else (),
                           lam=lam, seed=seed, T=T, scale_bits=sb, backend=backend, mode=mode, test_mode=tm)
    text = bench.format_config_text(cfg)
    assert ExperimentConfig(**bench.parse_config_text(text)) == cfg


def test_config_text_errors():
    assert bench.parse_config_text("# c\n\ngoal = (1, 2)  # tail\n") == {"goal": (1, 2)}
    with pytest.raises(ConfigurationError, match="line 1"):
        bench.parse_config_text("colour = red")
    with pytest.raises(ConfigurationError):
        bench.parse_config_text("iters")
    with pytest.raises(ConfigurationError):
        bench.parse_config_text("iters = many")
    with pytest.raises(ConfigurationError):
        bench.parse_cell("1,2,3")


def test_run_result_contents(cfg1_run, tmp_path):
    r = cfg1_run
    t = r.timing
    assert t["min"] <= t["mean"] <= t["max"]
    assert len(r.err_trajectory) == len(r.bound_curve) == CFG1.T + 1
    assert r.err_trajectory[-1] == pytest.approx(r.err_T, rel=1e-12)
    assert r.report.violations == 0 and r.greedy_match
    assert r.op_counts["rotate"] == CFG1.T * 9
    r.write(tmp_path)
    with open(tmp_path / "results.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == CFG1.T + 1
    with open(tmp_path / "trace.csv", newline="") as fh:
        assert next(csv.reader(fh)) == ["iter", "wall_seconds", "boot_seconds"]
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["err_T"] == r.err_T and rep["config"]["S"] == 3


def test_modes_agree(cfg1_run):
    other = run_experiment(CFG1.replace(mode="client-server"))
    assert other.Z_tilde.tobytes() == cfg1_run.Z_tilde.tobytes()
    assert other.report is None and other.transcript


def test_simulator_within_tenfold_of_toy(cfg1_run):
    sim = run_experiment(CFG1.replace(backend="noise-sim"), bounds=cfg1_run.bounds)
    ratio = sim.err_T / cfg1_run.err_T
    assert 0.1 <= ratio <= 10


def test_zero_noise_run_reaches_truncation_floor():
    r = run_experiment(CFG1.replace(backend="noise-sim"), bounds=NoiseBounds.zero())
    # Plaintext truncation error after 50 steps from all-ones.
    mdp = build_grid_world(CFG1.grid)
    sys_ = build_linear_system(mdp, CFG1.lam)
    Z = np.ones(3)
    for _ in range(50):
        Z = sys_.A @ Z + sys_.w
    assert r.Z_tilde == pytest.approx(Z, abs=1e-14)


def test_timing_grows_with_S():
    def median_step(cfg):
        mdp = build_grid_world(cfg.grid)
        sys_ = build_linear_system(mdp, cfg.lam)
        b = ToyCkksBackend(cfg.params)
        k = b.keygen()
        model = encrypt_model(sys_, b, k)
        times = []
        for _ in range(3):
            _, tr = run_encrypted_vi(b, model, np.ones(sys_.size), 2, k.evaluation_keys())
            times.extend(tr.wall_seconds)
        return statistics.median(times)

    assert median_step(PRESETS[3]) > median_step(PRESETS[1])


def test_sweep_csv(tmp_path):
    base = CFG1.replace(T=50)
    table = bench.sweep_scale_factors(base, [28, 30])
    bench.write_sweep_csv(tmp_path / "s.csv", [28, 30], table)
    with open(tmp_path / "s.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "err_k_delta_2^28", "err_k_delta_2^30"]
    assert len(rows) == 52
    with pytest.raises(ValueError):
        bench.sweep_scale_factors(base, [28])


# -- command line ---------------------------------------------------------


def test_cli_synth(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("width = 2\nheight = 2\ngoal = 0,0\niters = 50\nseed = 3\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["greedy_match"] is True
    for name in ("results.csv", "trace.csv", "report.json"):
        assert (tmp_path / "o" / name).exists()
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["seed"] == 3


def test_cli_flags_override_file(tmp_path):
    from rerl_he.cli import build_config, make_parser

    cfg = tmp_path / "c.txt"
    cfg.write_text("seed = 3\nscale_log2 = 30\n")
    args = make_parser().parse_args(
        ["synth", "--preset", "3", "--config", str(cfg), "--seed", "9", "--grid", "3x3"]
    )
    c = build_config(args)
    assert (c.seed, c.scale_bits, c.S, c.goal) == (9, 30, 7, (1, 1))


def test_cli_calibrate_then_sim(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path)]) == 0
    body = json.loads((tmp_path / "bounds.json").read_text())
    assert set(body["bounds"]) == {"b_enc", "b_mult", "b_rot", "b_boot"}
    capsys.readouterr()
    rc = main(["synth", "--backend", "noise-sim", "--bounds", str(tmp_path / "bounds.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["greedy_match"] is True


def test_cli_file_mode_outsourcing(tmp_path, capsys):
    job, result = str(tmp_path / "job.bin"), str(tmp_path / "result.bin")
    out = ["--out", str(tmp_path / "client")]
    assert main(["outsource", "--write-job", job, *out]) == 0
    assert main(["serve", "--job", job, "--result", result]) == 0
    assert main(["outsource", "--read-result", result, *out]) == 0
    lines = capsys.readouterr().out
    report = json.loads((tmp_path / "client" / "report.json").read_text())
    assert report["greedy_match"] and report["server_op_counts"]["bootstrap"] == 50
    assert "err_T" in lines


def test_cli_capacity_error(tmp_path, capsys):
    rc = main(["synth", "--grid", "3x3", "--ring-n", "8", "--out", str(tmp_path)])
    err = json.loads(capsys.readouterr().err)
    assert rc == 1 and err["error"] == "CapacityError"


def test_cli_configuration_error(tmp_path, capsys):
    rc = main(["synth", "--ring-n", "12", "--out", str(tmp_path)])
    err = json.loads(capsys.readouterr().err)
    assert rc == 2 and err["error"] == "ConfigurationError"


def test_cli_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("colour = red\n")
    assert main(["synth", "--config", str(cfg)]) == 2
    assert "colour" in json.loads(capsys.readouterr().err)["message"]
