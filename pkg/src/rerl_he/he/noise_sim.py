"""Error-model simulator: exact plaintext arithmetic plus bounded noise.

Each operation adds independent noise, uniform on ``[-b, b]`` per slot,
where ``b`` is the operation's entry in :class:`NoiseBounds`. A product
with a *fresh* ciphertext (straight from :meth:`encrypt`) uses the exact
message of that operand, so ``Dec(Enc(x) * c) - x * Dec(c)`` is exactly the
injected multiplication noise.

With ``adversarial=True`` every injection is ``+b`` instead of random,
which is the worst case for the accumulated error and serves as a
negative control.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import LevelExhaustedError
from .base import BackendParams, Ciphertext, HEBackend, KeyMaterial, NoiseBounds


@dataclass(frozen=True)
class _SimSecret:
    """Marker standing in for a secret key."""


@dataclass(frozen=True)
class _SimToken:
    """Marker standing in for the recryption token."""


@dataclass
class _SimPayload:
    value: np.ndarray
    exact: Optional[np.ndarray] = None  # message of a fresh encryption


class NoiseSimBackend(HEBackend):
    name = "noise-sim"

    def __init__(
        self, params: BackendParams, bounds: NoiseBounds, adversarial: bool = False, stream_seeds=None
    ):
        super().__init__(params, stream_seeds)
        self.bounds = bounds
        self.adversarial = adversarial

    def _noise(self, b: float, tag: str) -> np.ndarray:
        n = self.slot_count
        if b == 0:
            return np.zeros(n)
        if self.adversarial:
            return np.full(n, b)
        return self.rng(tag).uniform(-b, b, size=n)

    def _ct(self, value, level, exact=None) -> Ciphertext:
        return Ciphertext(_SimPayload(value, exact), level, self.params.scale, self.slot_count, self.name)

    def keygen(self) -> KeyMaterial:
        steps = {1 << j: None for j in range(max(self.slot_count.bit_length() - 1, 0))}
        return KeyMaterial(
            params=self.params,
            backend=self.name,
            secret=_SimSecret(),
            public=None,
            relin=None,
            rotation=steps,
            recryption_token=_SimToken(),
        )

    def encrypt(self, x, keys: KeyMaterial) -> Ciphertext:
        self.counts["encrypt"] += 1
        z = self._check_message(x)
        return self._ct(z + self._noise(self.bounds.b_enc, "enc"), self.max_level, exact=z)

    def decrypt(self, c: Ciphertext, keys: KeyMaterial) -> np.ndarray:
        self._check_owner(c)
        self._require_secret(keys)
        self.counts["decrypt"] += 1
        return c.payload.value.copy()

    def mod_switch_to(self, c: Ciphertext, level: int) -> Ciphertext:
        if level == c.level:
            return c
        if level > c.level or level < 0:
            raise ValueError(f"cannot switch level {c.level} to {level}")
        self.counts["modswitch"] += 1
        return self._ct(c.payload.value, level, c.payload.exact)

    def add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_owner(c1, c2)
        c1, c2 = self.align(c1, c2)
        self.counts["add"] += 1
        return self._ct(c1.payload.value + c2.payload.value, c1.level)

    def mult(self, c1: Ciphertext, c2: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        self._check_owner(c1, c2)
        c1, c2 = self.align(c1, c2)
        if c1.level < 1:
            raise LevelExhaustedError("no level left for multiplication; bootstrap first")
        self.counts["mult"] += 1
        p1, p2 = c1.payload, c2.payload
        if p1.exact is not None:
            prod = p1.exact * p2.value
        elif p2.exact is not None:
            prod = p1.value * p2.exact
        else:
            prod = p1.value * p2.value
        return self._ct(prod + self._noise(self.bounds.b_mult, "eval"), c1.level - 1)

    def rotate(self, c: Ciphertext, r: int, keys: KeyMaterial) -> Ciphertext:
        self._check_owner(c)
        r = self._check_rotation(r)
        self.counts["rotate"] += 1
        if r == 0:
            return self._ct(c.payload.value, c.level, c.payload.exact)
        return self._ct(np.roll(c.payload.value, -r) + self._noise(self.bounds.b_rot, "eval"), c.level)

    def bootstrap(self, c: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        self._check_owner(c)
        self.counts["bootstrap"] += 1
        return self._ct(c.payload.value + self._noise(self.bounds.b_boot, "boot"), self.max_level)
