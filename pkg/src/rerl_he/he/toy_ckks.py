"""A small but genuine CKKS engine over Z_Q[X]/(X^N + 1).

NOT SECURE. Parameters mirror desk-scale experiments, and bootstrapping is
replaced by a recryption oracle that decrypts with the secret key, adds
bounded noise and re-encrypts. Use only for experiments.

Layout of a ciphertext payload: ``(c0, c1)`` object arrays of residues
modulo ``Q_level = q0 * Δ^level``; decryption is ``c0 + c1*s``. Key
switching uses a special modulus ``P >= Q_top`` (single-digit hybrid key
switching), so every switching key lives modulo ``P * Q_top``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..errors import ConfigurationError, DecryptionError, LevelExhaustedError
from . import ring
from .base import BackendParams, Ciphertext, HEBackend, KeyMaterial
from .encoding import CkksEncoder

log = logging.getLogger(__name__)

INSECURE_BANNER = (
    "toy CKKS backend: parameters are NOT secure and bootstrapping is an "
    "insecure recryption oracle; experiments only"
)


@dataclass(frozen=True)
class SecretKey:
    s: np.ndarray  # signed ternary coefficients (int64)


@dataclass(frozen=True)
class SwitchingKey:
    """Key-switching pair ``(b, a)`` modulo ``P * Q_top``."""

    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class PublicKey:
    b: np.ndarray
    a: np.ndarray


@dataclass(frozen=True)
class RecryptionToken:
    """Authorization for the recryption oracle.

    Holds the secret key. Handing it to a server is a deliberate breach of
    the threat model, limited to bootstrapping.
    """

    secret: SecretKey


class ToyCkksBackend(HEBackend):
    name = "toy-ckks"

    def __init__(self, params: BackendParams, stream_seeds=None):
        super().__init__(params, stream_seeds)
        self.encoder = CkksEncoder(params.ring_degree)
        self.q_top = params.modulus_at(params.levels)
        self.special_bits = self.q_top.bit_length() - 1
        self.P = 1 << self.special_bits
        self.PQ = self.P * self.q_top

    # -- sampling ---------------------------------------------------------

    def _ternary(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(-1, 2, size=self.params.ring_degree)

    def _gauss(self, rng: np.random.Generator) -> np.ndarray:
        return np.rint(rng.normal(0.0, self.params.noise_stddev, size=self.params.ring_degree)).astype(
            np.int64
        )

    def _uniform(self, rng: np.random.Generator, q: int) -> np.ndarray:
        bits = q.bit_length() - 1
        nbytes = (bits + 7) // 8
        raw = rng.bytes(nbytes * self.params.ring_degree)
        return np.array(
            [int.from_bytes(raw[i * nbytes : (i + 1) * nbytes], "little") % q for i in range(self.params.ring_degree)],
            dtype=object,
        )

    def _switching_key(self, rng, s_mod: np.ndarray, target: np.ndarray) -> SwitchingKey:
        """Encrypt ``P * target`` under ``s`` modulo ``P * Q_top``."""
        PQ = self.PQ
        a = self._uniform(rng, PQ)
        e = ring.from_signed(self._gauss(rng), PQ)
        b = (-ring.negacyclic_mul(a, s_mod, PQ) + e + self.P * target) % PQ
        return SwitchingKey(b, a)

    # -- keys ---------------------------------------------------------------

    def keygen(self) -> KeyMaterial:
        log.warning(INSECURE_BANNER)
        rng = self.rng("keygen")
        N = self.params.ring_degree
        s = self._ternary(rng)
        secret = SecretKey(s)
        Q, PQ = self.q_top, self.PQ

        s_q = ring.from_signed(s, Q)
        a = self._uniform(rng, Q)
        e = ring.from_signed(self._gauss(rng), Q)
        pk = PublicKey((-ring.negacyclic_mul(a, s_q, Q) + e) % Q, a)

        s_pq = ring.from_signed(s, PQ)
        s2 = ring.negacyclic_mul(s_pq, s_pq, PQ)
        relin = self._switching_key(rng, s_pq, s2)

        rotation: Dict[int, SwitchingKey] = {}
        step = 1
        while step < self.slot_count:
            g = self.encoder.galois_element(step)
            s_g = ring.automorphism(s_pq, g, PQ)
            rotation[step] = self._switching_key(rng, s_pq, s_g)
            step <<= 1
        assert len(s) == N
        return KeyMaterial(
            params=self.params,
            backend=self.name,
            secret=secret,
            public=pk,
            relin=relin,
            rotation=rotation,
            recryption_token=RecryptionToken(secret),
        )

    # -- encryption -------------------------------------------------------

    def _encrypt_public(self, z: np.ndarray, pk: PublicKey, rng) -> Ciphertext:
        Q = self.q_top
        m = ring.from_signed(self.encoder.encode(z, self.params.scale), Q)
        v = ring.from_signed(self._ternary(rng), Q)
        e0 = ring.from_signed(self._gauss(rng), Q)
        e1 = ring.from_signed(self._gauss(rng), Q)
        c0 = (ring.negacyclic_mul(pk.b, v, Q) + e0 + m) % Q
        c1 = (ring.negacyclic_mul(pk.a, v, Q) + e1) % Q
        return Ciphertext((c0, c1), self.max_level, self.params.scale, self.slot_count, self.name)

    def _encrypt_symmetric(self, z: np.ndarray, secret: SecretKey, rng) -> Ciphertext:
        Q = self.q_top
        m = ring.from_signed(self.encoder.encode(z, self.params.scale), Q)
        a = self._uniform(rng, Q)
        e = ring.from_signed(self._gauss(rng), Q)
        c0 = (-ring.negacyclic_mul(a, ring.from_signed(secret.s, Q), Q) + e + m) % Q
        return Ciphertext((c0, a), self.max_level, self.params.scale, self.slot_count, self.name)

    def encrypt(self, x, keys: KeyMaterial) -> Ciphertext:
        """Encrypt under the secret key when it is held, else under the public key."""
        self.counts["encrypt"] += 1
        z = self._check_message(x)
        if keys.secret is not None:
            return self._encrypt_symmetric(z, keys.secret, self.rng("enc"))
        return self._encrypt_public(z, keys.public, self.rng("enc"))

    def _decrypt_with(self, c: Ciphertext, secret: SecretKey) -> np.ndarray:
        if c.level < 0:
            raise DecryptionError("ciphertext level underflow")
        Q = self.params.modulus_at(c.level)
        c0, c1 = c.payload
        s = ring.from_signed(secret.s, Q)
        m = ring.center((c0 + ring.negacyclic_mul(c1, s, Q)) % Q, Q)
        return self.encoder.decode(m.astype(float), c.scale).real

    def decrypt(self, c: Ciphertext, keys: KeyMaterial) -> np.ndarray:
        self._check_owner(c)
        self.counts["decrypt"] += 1
        return self._decrypt_with(c, self._require_secret(keys))

    # -- evaluation -------------------------------------------------------

    def mod_switch_to(self, c: Ciphertext, level: int) -> Ciphertext:
        if level == c.level:
            return c
        if level > c.level or level < 0:
            raise ValueError(f"cannot switch level {c.level} to {level}")
        self.counts["modswitch"] += 1
        Q = self.params.modulus_at(level)
        c0, c1 = c.payload
        return Ciphertext((c0 % Q, c1 % Q), level, c.scale, c.slot_count, self.name)

    def add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_owner(c1, c2)
        c1, c2 = self.align(c1, c2)
        if c1.scale != c2.scale:
            raise ValueError(f"scale mismatch {c1.scale} vs {c2.scale}")
        self.counts["add"] += 1
        Q = self.params.modulus_at(c1.level)
        (a0, a1), (b0, b1) = c1.payload, c2.payload
        return Ciphertext(((a0 + b0) % Q, (a1 + b1) % Q), c1.level, c1.scale, c1.slot_count, self.name)

    def _key_switch(self, d: np.ndarray, key: SwitchingKey, level: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(k0, k1)`` with ``k0 + k1*s ≈ d * target`` modulo ``Q_level``."""
        Q = self.params.modulus_at(level)
        PQ = self.P * Q
        kb, ka = key.b % PQ, key.a % PQ
        t0 = ring.negacyclic_mul(d, kb, PQ)
        t1 = ring.negacyclic_mul(d, ka, PQ)
        self.counts["keyswitch"] += 1
        return (
            ring.round_div_pow2(t0, PQ, self.special_bits, Q),
            ring.round_div_pow2(t1, PQ, self.special_bits, Q),
        )

    def mult(self, c1: Ciphertext, c2: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        self._check_owner(c1, c2)
        c1, c2 = self.align(c1, c2)
        if c1.level < 1:
            raise LevelExhaustedError("no level left for multiplication; bootstrap first")
        self.counts["mult"] += 1
        level = c1.level
        Q = self.params.modulus_at(level)
        (a0, a1), (b0, b1) = c1.payload, c2.payload
        d0 = ring.negacyclic_mul(a0, b0, Q)
        d2 = ring.negacyclic_mul(a1, b1, Q)
        d1 = (ring.negacyclic_mul((a0 + a1) % Q, (b0 + b1) % Q, Q) - d0 - d2) % Q
        k0, k1 = self._key_switch(d2, keys.relin, level)
        e0, e1 = (d0 + k0) % Q, (d1 + k1) % Q
        # Rescale by Δ: exact because every chain factor is a power of two.
        bits = self.params.scale_bits
        Qn = self.params.modulus_at(level - 1)
        r0 = ring.round_div_pow2(e0, Q, bits, Qn)
        r1 = ring.round_div_pow2(e1, Q, bits, Qn)
        scale = c1.scale * c2.scale / self.params.scale
        return Ciphertext((r0, r1), level - 1, scale, c1.slot_count, self.name)

    def _rotate_pow2(self, c: Ciphertext, step: int, keys: KeyMaterial) -> Ciphertext:
        try:
            key = keys.rotation[step]
        except KeyError:
            raise ConfigurationError(f"missing rotation key for step {step}") from None
        Q = self.params.modulus_at(c.level)
        g = self.encoder.galois_element(step)
        c0, c1 = c.payload
        c0g = ring.automorphism(c0, g, Q)
        c1g = ring.automorphism(c1, g, Q)
        k0, k1 = self._key_switch(c1g, key, c.level)
        return Ciphertext(((c0g + k0) % Q, k1), c.level, c.scale, c.slot_count, self.name)

    def rotate(self, c: Ciphertext, r: int, keys: KeyMaterial) -> Ciphertext:
        self._check_owner(c)
        r = self._check_rotation(r)
        self.counts["rotate"] += 1
        out = c
        step = 1
        while r:
            if r & 1:
                out = self._rotate_pow2(out, step, keys)
            r >>= 1
            step <<= 1
        if out is c:
            out = Ciphertext(c.payload, c.level, c.scale, c.slot_count, self.name)
        return out

    def bootstrap(self, c: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        """Recryption oracle: decrypt, add uniform noise of size ``boot_noise``, re-encrypt."""
        self._check_owner(c)
        if keys.recryption_token is None:
            raise ConfigurationError("bootstrap needs a recryption token")
        self.counts["bootstrap"] += 1
        rng = self.rng("boot")
        secret = keys.recryption_token.secret
        z = self._decrypt_with(c, secret)
        b = self.params.boot_noise
        if b > 0:
            z = z + rng.uniform(-b, b, size=z.shape)
        return self._encrypt_symmetric(z, secret, rng)
