"""Encrypted value iteration built from Hadamard products, rotations and selectors.

One step computes, for every row ``i``,
``g_i = sum_r Rot_r(Enc(A_i) * Z_k)`` and then
``Z_{k+1} = Boot(Enc(w) + sum_i Enc(e_i) * g_i)``, in exactly the order of
:func:`rerl_he.rerl.encryption_friendly_step`.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import CapacityError, SynthesisError
from .he.base import BackendParams, Ciphertext, HEBackend, KeyMaterial
from .mdp import DeterministicMdp
from .rerl import LinearSystem, reconstruct_policy, rotation_offsets

log = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-12
MAX_BAD_FRACTION = 0.10


@dataclass
class EncryptedModel:
    """Ciphertexts of the rows of A, of w and of the selectors e_i."""

    enc_rows: List[Ciphertext]
    enc_w: Ciphertext
    enc_selectors: List[Ciphertext]
    params: BackendParams
    S: int

    def ciphertexts(self) -> List[Ciphertext]:
        return [*self.enc_rows, self.enc_w, *self.enc_selectors]


@dataclass
class StepTiming:
    wall_seconds: float
    boot_seconds: float


@dataclass
class IterationTrace:
    """Per-iteration timings, plus decrypted snapshots in test mode.

    ``snapshots[k]`` is the decryption of ``Z_k`` for ``k = 0..T``.
    """

    wall_seconds: List[float] = field(default_factory=list)
    boot_seconds: List[float] = field(default_factory=list)
    snapshots: Optional[List[np.ndarray]] = None

    def __len__(self) -> int:
        return len(self.wall_seconds)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["iter", "wall_seconds", "boot_seconds"])
            for k, (w, b) in enumerate(zip(self.wall_seconds, self.boot_seconds), start=1):
                out.writerow([k, repr(w), repr(b)])

    @staticmethod
    def read_csv(path) -> "IterationTrace":
        tr = IterationTrace()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                tr.wall_seconds.append(float(row["wall_seconds"]))
                tr.boot_seconds.append(float(row["boot_seconds"]))
        return tr


@dataclass
class FinishResult:
    Z_tilde: np.ndarray
    policy: np.ndarray
    clamped: int


def step_op_counts(S: int) -> dict:
    """Homomorphic operations issued by one :func:`encrypted_step`."""
    return {"mult": 2 * S, "rotate": S * S, "add": S * S, "bootstrap": 1}


def encrypt_model(sys: LinearSystem, backend: HEBackend, keys: KeyMaterial) -> EncryptedModel:
    """Encrypt rows, source vector and selectors, zero-padded to the slot count."""
    S = sys.size
    if S > backend.slot_count:
        raise CapacityError(
            f"S={S} states exceed {backend.slot_count} slots; raise the ring degree"
        )
    rows = [backend.encrypt(sys.A[i], keys) for i in range(S)]
    enc_w = backend.encrypt(sys.w, keys)
    eye = np.eye(S)
    selectors = [backend.encrypt(eye[i], keys) for i in range(S)]
    return EncryptedModel(rows, enc_w, selectors, backend.params, S)


def encrypted_step(backend: HEBackend, model: EncryptedModel, Zk: Ciphertext, keys: KeyMaterial):
    """One encrypted update; returns ``(Z_{k+1}, StepTiming)``."""
    S, n = model.S, backend.slot_count
    t0 = time.perf_counter()
    acc = model.enc_w
    for i in range(S):
        prod = backend.mult(model.enc_rows[i], Zk, keys)
        g = None
        for r in rotation_offsets(i, S, n):
            term = backend.rotate(prod, r, keys)
            g = term if g is None else backend.add(g, term)
        acc = backend.add(acc, backend.mult(model.enc_selectors[i], g, keys))
    tb = time.perf_counter()
    out = backend.bootstrap(acc, keys)
    t1 = time.perf_counter()
    return out, StepTiming(t1 - t0, t1 - tb)


def run_encrypted_vi(
    backend: HEBackend,
    model: EncryptedModel,
    Z0,
    T: int,
    keys: KeyMaterial,
    snapshot_keys: Optional[KeyMaterial] = None,
):
    """Run ``T`` encrypted steps from ``Z0``.

    Args:
        backend: Evaluating backend.
        model: Encrypted model.
        Z0: Initial desirability, either a ciphertext or a plaintext vector
            (encrypted here with the public key).
        T: Number of iterations, at least 1.
        keys: Evaluation keys. The secret key is never used.
        snapshot_keys: Test mode only. Keys holding the secret, used to
            decrypt every iterate into ``trace.snapshots``.

    Returns:
        ``(Z_T, trace)``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    Z = Z0 if isinstance(Z0, Ciphertext) else backend.encrypt(Z0, keys)
    trace = IterationTrace()
    if snapshot_keys is not None:
        trace.snapshots = [backend.decrypt(Z, snapshot_keys)[: model.S]]
    for _ in range(T):
        Z, timing = encrypted_step(backend, model, Z, keys)
        trace.wall_seconds.append(timing.wall_seconds)
        trace.boot_seconds.append(timing.boot_seconds)
        if snapshot_keys is not None:
            trace.snapshots.append(backend.decrypt(Z, snapshot_keys)[: model.S])
    return Z, trace


def clamp_desirability(z: np.ndarray, floor: float = CLAMP_FLOOR, bound: float = None):
    """Clamp nonpositive entries to ``floor``; returns ``(z, count)``.

    Raises:
        SynthesisError: more than 10% of the entries were below the floor,
            or an entry exceeds ``bound``.
    """
    z = np.array(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise SynthesisError("decrypted desirability is not finite")
    if bound is not None and np.any(np.abs(z) > bound):
        raise SynthesisError(
            f"decrypted desirability {np.max(np.abs(z)):.3g} exceeds the message bound {bound}"
        )
    low = z < floor
    count = int(low.sum())
    if count > MAX_BAD_FRACTION * z.size:
        raise SynthesisError(
            f"{count} of {z.size} decrypted entries are nonpositive; noise overwhelmed the signal"
        )
    if count:
        log.warning("clamped %d nonpositive desirability entries to %g", count, floor)
    z[low] = floor
    return z, count


def client_finish(
    backend: HEBackend,
    ZT: Ciphertext,
    keys: KeyMaterial,
    mdp: DeterministicMdp,
    lam: float,
    consistency_tol: float = 1e-3,
) -> FinishResult:
    """Decrypt the returned iterate and rebuild the policy (client side)."""
    raw = backend.decrypt(ZT, keys)[: mdp.num_nonabsorbing]
    z, count = clamp_desirability(raw, bound=backend.params.message_bound)
    policy = reconstruct_policy(mdp, z, lam, consistency_tol=consistency_tol)
    return FinishResult(z, policy, count)
