"""
Client and server over a socket
===============================

The client keeps the secret key, encrypts the model and Z0, and ships the
job to a server thread that only sees evaluation keys. The returned
ciphertext decrypts to the same bytes as an in-process run, and a single
flipped byte is caught by the client's positivity check.
"""

import threading

import numpy as np

from rerl_he import protocol
from rerl_he.bench import PRESETS, run_experiment
from rerl_he.encrypted import client_finish
from rerl_he.errors import SynthesisError
from rerl_he.he import ToyCkksBackend
from rerl_he.he import serialize as ser
from rerl_he.mdp import build_grid_world
from rerl_he.rerl import build_linear_system

cfg = PRESETS[1]
mdp = build_grid_world(cfg.grid)
sys = build_linear_system(mdp, cfg.lam)

ready, bound = threading.Event(), {}
server = threading.Thread(target=protocol.serve, kwargs=dict(port=0, jobs=1, ready=ready, bound=bound))
server.start()
ready.wait()

backend = ToyCkksBackend(cfg.params)
keys = backend.keygen()
ZT, trace, counts, transcript = protocol.outsource(backend, keys, sys, np.ones(sys.size), cfg.T,
                                                   port=bound["port"])
server.join()
print(f"transcript {len(transcript) / 1e6:.1f} MB, server ran {counts['bootstrap']} bootstraps")
print("plaintext patterns found on the wire:", len(protocol.scan_transcript(transcript, sys, cfg.params)))

remote = client_finish(backend, ZT, keys, mdp, cfg.lam)
local = run_experiment(cfg.replace(test_mode=False))
print("identical to in-process run:", remote.Z_tilde.tobytes() == local.Z_tilde.tobytes())

raw = bytearray(ser.dump_ciphertext(ZT, cfg.params))
raw[18 + 8 * (ZT.level + 1) + 10] ^= 0xFF
try:
    client_finish(backend, ser.load_ciphertext(bytes(raw), cfg.params), keys, mdp, cfg.lam)
except SynthesisError as exc:
    print("tampered result rejected:", exc)
