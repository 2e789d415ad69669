"""
Encrypted policy synthesis on a 2x2 grid
========================================

Build the grid, solve the linear desirability system in the clear, then run
the same iteration under the toy CKKS engine and compare.
"""

import numpy as np

from rerl_he import (
    build_grid_world,
    build_linear_system,
    client_finish,
    encrypt_model,
    err_metric,
    reconstruct_policy,
    run_encrypted_vi,
    solve_direct,
)
from rerl_he.he import BackendParams, ToyCkksBackend
from rerl_he.mdp import GridWorldSpec
from rerl_he.rerl import greedy_actions

# Plaintext reference: three free cells plus the goal in the top-left corner.
mdp = build_grid_world(GridWorldSpec(2, 2, goal=(0, 0)))
sys = build_linear_system(mdp, lam=10.0)
Z_star = solve_direct(sys)
print("A =\n", sys.A.round(4))
print("w =", sys.w.round(4))
print("Z* =", Z_star)

# Client: keys and the encrypted model. N = 2^7 gives 64 slots.
backend = ToyCkksBackend(BackendParams(ring_degree=128, scale_bits=28, seed=0))
keys = backend.keygen()
model = encrypt_model(sys, backend, keys)
enc_z0 = backend.encrypt(np.ones(sys.size), keys)

# Server: 50 steps with evaluation keys only.
ZT, trace = run_encrypted_vi(backend, model, enc_z0, 50, keys.evaluation_keys())
print(f"mean step {np.mean(trace.wall_seconds):.3f}s, of which bootstrap "
      f"{np.mean(trace.boot_seconds):.3f}s")
print("server operations:", dict(backend.counts))

# Client: decrypt and rebuild the policy.
fin = client_finish(backend, ZT, keys, mdp, sys.lam)
print("Z~_T =", fin.Z_tilde)
print(f"Err(T) = {err_metric(fin.Z_tilde, Z_star):.2e}")

plain = reconstruct_policy(mdp, Z_star, sys.lam)
print("greedy actions (encrypted):", greedy_actions(fin.policy)[mdp.nonabsorbing])
print("greedy actions (plaintext):", greedy_actions(plain)[mdp.nonabsorbing])
