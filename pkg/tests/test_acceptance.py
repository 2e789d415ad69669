"""Acceptance gate: criteria 1 to 10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py``; the verdicts are repeated in
the terminal summary under "acceptance criteria".
"""

import threading
import time

import numpy as np
import pytest

from rerl_he import protocol
from rerl_he.analysis import bound_parameters, verify_run
from rerl_he.bench import PRESETS, calibrate_for, run_experiment
from rerl_he.encrypted import client_finish, encrypt_model, run_encrypted_vi
from rerl_he.errors import SynthesisError
from rerl_he.he import NoiseSimBackend, ToyCkksBackend, make_backend
from rerl_he.he import serialize as ser
from rerl_he.mdp import GridWorldSpec, build_grid_world
from rerl_he.rerl import (
    bellman_fixed_point_oracle,
    build_linear_system,
    desirability_to_value,
    greedy_actions,
    minimizer_sets,
    reconstruct_policy,
    rot_vec,
    solve_direct,
    standard_min_vi,
    value_iterate,
)

from conftest import system_for

pytestmark = pytest.mark.slow

SWEEP_SEEDS = range(100)
TREND_SEEDS = range(5)
T = 50


# -- 1, 2: plaintext core ---------------------------------------------------


def test_criterion_01_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst_vi = worst_bell = 0.0
    for S in (1, 3, 7, 15):
        for lam in (0.5, 10.0):
            mdp, sys_ = system_for(S, lam)
            Z = solve_direct(sys_)
            vi = value_iterate(sys_, tol=1e-14, max_iter=100_000)
            worst_vi = max(worst_vi, float(np.max(np.abs(vi.Z - Z))))
            V_or = bellman_fixed_point_oracle(mdp, lam)
            worst_bell = max(worst_bell, float(np.max(np.abs(desirability_to_value(Z, lam) - V_or))))
    dt = time.perf_counter() - t0
    ok = worst_vi < 1e-9 and worst_bell < 1e-7 and dt < 1.0
    assert verdict(1, ok, f"|VI - direct| = {worst_vi:.2e}, |V - Bellman| = {worst_bell:.2e}, {dt:.2f}s")


def test_criterion_02_convergence_speed(verdict):
    t0 = time.perf_counter()
    counts = {}
    for i in (1, 3):
        cfg = PRESETS[i]
        sys_ = build_linear_system(build_grid_world(cfg.grid), 10.0)
        res = value_iterate(sys_, tol=1e-10, max_iter=100_000)
        counts[cfg.S] = res.iterations
    dt = time.perf_counter() - t0
    ok = all(k < 30 for k in counts.values()) and dt < 1.0
    detail = ", ".join(f"S={S}: {k} iterations" for S, k in counts.items())
    assert verdict(2, ok, f"{detail} (needs < 30), {dt:.2f}s")


# -- 3, 4: bound conformance over seeded simulator runs ---------------------


@pytest.fixture(scope="module")
def sim_sweep():
    """100 simulator runs per size with toy-calibrated bounds."""
    out = {}
    for i in (1, 3):
        cfg = PRESETS[i]
        bounds = calibrate_for(cfg)
        mdp = build_grid_world(cfg.grid)
        sys_ = build_linear_system(mdp, cfg.lam)
        Z_star = solve_direct(sys_)
        bp = bound_parameters(sys_, bounds, np.ones(sys_.size), Z_star)
        t0 = time.perf_counter()
        reports = []
        for seed in SWEEP_SEEDS:
            b = NoiseSimBackend(cfg.params.replace(seed=seed), bounds)
            k = b.keygen()
            model = encrypt_model(sys_, b, k)
            _, tr = run_encrypted_vi(b, model, b.encrypt(np.ones(sys_.size), k), T,
                                     k.evaluation_keys(), snapshot_keys=k)
            reports.append(verify_run(tr.snapshots, sys_, bp, Z_star))
        out[cfg.S] = dict(reports=reports, seconds=time.perf_counter() - t0, cfg=cfg,
                          bounds=bounds, sys=sys_, bp=bp, Z_star=Z_star)
    return out


def test_criterion_03_residual_conformance(verdict, sim_sweep):
    parts, ok = [], True
    for S, run in sim_sweep.items():
        bad = sum(r.residual_violations for r in run["reports"])
        worst = max(max(r.residuals) for r in run["reports"]) / run["bp"].beta
        ok &= bad == 0 and run["seconds"] < 30
        parts.append(f"S={S}: {bad} violations, max resid/beta {worst:.2f}, {run['seconds']:.1f}s")
    assert verdict(3, ok, "; ".join(parts))


def test_criterion_04_error_bound_conformance(verdict, sim_sweep):
    parts, ok = [], True
    for S, run in sim_sweep.items():
        bad = sum(r.bound_violations for r in run["reports"])
        ok &= bad == 0 and run["seconds"] < 30
        parts.append(f"S={S}: {bad} violations")
    # Negative control: adversarial noise at ten times the calibrated bounds.
    run = sim_sweep[3]
    b = NoiseSimBackend(run["cfg"].params, run["bounds"].scaled(10.0), adversarial=True)
    k = b.keygen()
    _, tr = run_encrypted_vi(b, encrypt_model(run["sys"], b, k), np.ones(3), T, k, snapshot_keys=k)
    control = verify_run(tr.snapshots, run["sys"], run["bp"], run["Z_star"]).violations
    ok &= control >= 1
    parts.append(f"10x control: {control} violations")
    assert verdict(4, ok, "; ".join(parts))


# -- 5, 6, 7: toy engine against the table ----------------------------------


@pytest.fixture(scope="module")
def toy_runs():
    """Toy-engine runs for configurations 1 to 4 over five seeds."""
    t0 = time.perf_counter()
    runs = {i: [run_experiment(PRESETS[i].replace(seed=s, test_mode=False)) for s in TREND_SEEDS]
            for i in (1, 2, 3, 4)}
    return runs, time.perf_counter() - t0


def _mean_err(runs):
    return float(np.mean([r.err_T for r in runs]))


def test_criterion_05_scale_trend(verdict, toy_runs):
    runs, dt = toy_runs
    e = {i: _mean_err(runs[i]) for i in runs}
    factor = e[1] / e[2]
    ok = e[2] < e[1] and e[4] < e[3] and 2 <= factor <= 20 and dt < 600
    detail = (f"S=3: {e[1]:.2e} -> {e[2]:.2e} (x{factor:.2f}); "
              f"S=7: {e[3]:.2e} -> {e[4]:.2e}; mean of {len(TREND_SEEDS)} seeds, {dt:.0f}s")
    assert verdict(5, ok, detail)


def test_criterion_06_magnitude(verdict, toy_runs):
    err = toy_runs[0][1][0].err_T
    assert verdict(6, 1e-5 <= err <= 1e-2, f"Config 1 Err(T) = {err:.2e} (bracket [1e-5, 1e-2])")


def test_criterion_07_policy_fidelity(verdict, toy_runs):
    runs, _ = toy_runs
    matches = {i: all(r.greedy_match for r in runs[i]) for i in runs}
    for i in (5, 6):
        matches[i] = run_experiment(PRESETS[i].replace(test_mode=False)).greedy_match
    ok = all(matches.values())
    bad = [i for i, m in matches.items() if not m]
    assert verdict(7, ok, f"greedy actions match on configs {sorted(matches)}; mismatches {bad}")


# -- 8: homomorphic layer ----------------------------------------------------


def test_criterion_08_homomorphic_layer(verdict):
    cfg = PRESETS[1]
    bounds = calibrate_for(cfg)
    worst_excess, add_err = -np.inf, 0.0
    g = np.random.default_rng(8)
    for name in ("toy-ckks", "noise-sim"):
        b = make_backend(name, cfg.params.replace(seed=77), bounds)
        k = b.keygen()
        n = b.slot_count
        errs = dict(enc=0.0, mult=0.0, rot=0.0, boot=0.0)
        for _ in range(100):
            x, y = g.uniform(-1, 1, n), g.uniform(-1, 1, n)
            cx, cy = b.encrypt(x, k), b.encrypt(y, k)
            dx, dy = b.decrypt(cx, k), b.decrypt(cy, k)
            errs["enc"] = max(errs["enc"], np.max(np.abs(dx - x)))
            p = b.mult(cx, cy, k)
            errs["mult"] = max(errs["mult"], np.max(np.abs(b.decrypt(p, k) - x * dy)))
            r = int(g.integers(1, n))
            errs["rot"] = max(errs["rot"], np.max(np.abs(b.decrypt(b.rotate(cy, r, k), k) - np.roll(dy, -r))))
            low = b.mod_switch_to(p, 0)
            errs["boot"] = max(errs["boot"], np.max(np.abs(b.decrypt(b.bootstrap(low, k), k) - b.decrypt(low, k))))
            add_err = max(add_err, np.max(np.abs(b.decrypt(b.add(cx, cy), k) - (dx + dy))))
        limits = dict(enc=bounds.b_enc, mult=bounds.b_mult, rot=bounds.b_rot, boot=bounds.b_boot)
        worst_excess = max(worst_excess, max(errs[op] / limits[op] for op in errs))
    rot_ok = rot_vec(np.array([1, 2, 3, 4, 5]), 2).tolist() == [3, 4, 5, 1, 2]
    toy = ToyCkksBackend(cfg.params.replace(ring_degree=16, seed=5))
    tk = toy.keygen()
    ct = toy.rotate(toy.encrypt(np.array([1, 2, 3, 4, 5, 0, 0, 0]) / 5, tk), 2, tk)
    enc_rot = np.allclose(toy.decrypt(ct, tk)[:5] * 5, [3, 4, 5, 0, 0], atol=1e-3)
    ok = worst_excess <= 1.0 and add_err <= 1e-15 and rot_ok and enc_rot
    assert verdict(8, ok, f"max err/bound {worst_excess:.2f} over 100 trials x 2 backends; "
                          f"add error {add_err:.1e}; RotVec_2 example {'ok' if rot_ok and enc_rot else 'wrong'}")


# -- 9: outsourcing -----------------------------------------------------------


def test_criterion_09_outsourcing(verdict):
    cfg = PRESETS[1]
    local = run_experiment(cfg.replace(test_mode=False))

    mdp = build_grid_world(cfg.grid)
    sys_ = build_linear_system(mdp, cfg.lam)
    b = make_backend(cfg.backend, cfg.params)
    k = b.keygen()
    ready, bound = threading.Event(), {}
    srv = threading.Thread(target=protocol.serve, kwargs=dict(port=0, jobs=1, ready=ready, bound=bound))
    srv.start()
    ready.wait(10)
    ZT, _, _, transcript = protocol.outsource(b, k, sys_, np.ones(sys_.size), cfg.T, port=bound["port"])
    srv.join(60)
    remote = client_finish(b, ZT, k, mdp, cfg.lam)
    identical = remote.Z_tilde.tobytes() == local.Z_tilde.tobytes()
    clean = not protocol.scan_transcript(transcript, sys_, cfg.params)

    # Flip one byte of the returned ciphertext's c0 high limb.
    raw = bytearray(ser.dump_ciphertext(ZT, cfg.params))
    raw[18 + 8 * (ZT.level + 1) + 8 + 2] ^= 0xFF
    try:
        client_finish(b, ser.load_ciphertext(bytes(raw), cfg.params), k, mdp, cfg.lam)
        detected = False
    except SynthesisError:
        detected = True
    ok = identical and detected and clean
    assert verdict(9, ok, f"socket vs in-process identical: {identical}; tamper detected: {detected}; "
                          f"transcript clean: {clean}")


# -- 10: small temperature ----------------------------------------------------


def test_criterion_10_small_lambda(verdict):
    mdp = build_grid_world(GridWorldSpec(3, 3, (1, 1)))
    lam = 0.05
    pi = reconstruct_policy(mdp, solve_direct(build_linear_system(mdp, lam)), lam)
    sets = minimizer_sets(mdp, standard_min_vi(mdp).V)
    greedy = greedy_actions(pi)
    agree = sum(int(greedy[x]) in sets[x] for x in mdp.nonabsorbing)
    total = len(mdp.nonabsorbing)
    assert verdict(10, agree == total, f"RERL argmax in min-VI minimizer set at {agree}/{total} states")
