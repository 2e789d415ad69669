"""Backend-independent types and the homomorphic operation interface."""

from __future__ import annotations

import abc
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from ..errors import ConfigurationError, DecryptionError

# Stream tags for per-role random number generators. Keeping the streams
# separate lets a client and a server process reproduce an in-process run.
STREAM_TAGS = {"keygen": 1, "enc": 2, "eval": 3, "boot": 4}
SERVER_STREAMS = ("eval", "boot")


def stream_entropy(seed: int, tag: str) -> int:
    """128-bit entropy of one role's stream, derived from the master seed.

    A server is handed these values for its own streams instead of the
    master seed, which would also determine the key generation stream.
    """
    words = np.random.SeedSequence(seed, spawn_key=(STREAM_TAGS[tag],)).generate_state(4, np.uint32)
    return int.from_bytes(words.astype("<u4").tobytes(), "little")


@dataclass(frozen=True)
class BackendParams:
    """Parameters shared by both backends.

    The modulus chain is ``[q0, Δ, Δ, ...]`` with power-of-two factors so
    that rescaling by ``Δ`` keeps the scale exactly ``Δ``.

    Attributes:
        ring_degree: N, a power of two; the message has N/2 slots.
        scale_bits: log2 of the scaling factor Δ.
        levels: number of rescalings available before a bootstrap.
        base_headroom_bits: extra bits of q0 above Δ.
        noise_stddev: σ of the RLWE error distribution.
        seed: master seed for every random stream.
        boot_noise_factor: bootstrap precision loss in units of N/Δ.
        message_bound: largest accepted |slot value| at encryption.
    """

    ring_degree: int = 128
    scale_bits: int = 28
    levels: int = 2
    base_headroom_bits: int = 10
    noise_stddev: float = 3.2
    seed: int = 0
    boot_noise_factor: float = 512.0
    message_bound: float = 2.0

    def __post_init__(self):
        N = self.ring_degree
        if N < 8 or N & (N - 1):
            raise ConfigurationError(f"ring degree must be a power of two >= 8, got {N}")
        if self.scale_bits < 10:
            raise ConfigurationError("scale factor must be at least 2^10")
        if self.levels < 2:
            raise ConfigurationError("need at least two levels per iteration")
        if self.base_bits > 63:
            raise ConfigurationError(
                f"q0 = 2^{self.base_bits} does not fit the 8-byte modulus field"
            )
        # Encoded coefficients must be exact in float64 before rounding.
        if self.scale_bits + np.log2(self.message_bound) + 1 > 52:
            raise ConfigurationError("scale too large for exact float64 encoding")
        if self.noise_stddev < 0 or self.boot_noise_factor < 0:
            raise ConfigurationError("noise parameters must be nonnegative")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def scale(self) -> float:
        return float(2**self.scale_bits)

    @property
    def base_bits(self) -> int:
        return self.scale_bits + self.base_headroom_bits

    @property
    def modulus_chain(self) -> list:
        return [1 << self.base_bits] + [1 << self.scale_bits] * self.levels

    def modulus_at(self, level: int) -> int:
        """Ciphertext modulus ``Q_level = q0 * Δ^level``."""
        return 1 << (self.base_bits + self.scale_bits * level)

    @property
    def boot_noise(self) -> float:
        return self.boot_noise_factor * self.ring_degree / self.scale

    def replace(self, **changes) -> "BackendParams":
        return replace(self, **changes)


@dataclass
class Ciphertext:
    """Encrypted slot vector.

    ``payload`` is backend specific and must only be touched by the backend
    that produced it.
    """

    payload: Any
    level: int
    scale: float
    slot_count: int
    backend: str

    def __repr__(self) -> str:
        return (
            f"Ciphertext(backend={self.backend!r}, level={self.level}, "
            f"scale=2^{np.log2(self.scale):g}, slots={self.slot_count})"
        )


@dataclass(frozen=True)
class NoiseBounds:
    """Per-operation error bounds in message units."""

    b_enc: float
    b_mult: float
    b_rot: float
    b_boot: float

    def __post_init__(self):
        for name in ("b_enc", "b_mult", "b_rot", "b_boot"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    @classmethod
    def zero(cls) -> "NoiseBounds":
        return cls(0.0, 0.0, 0.0, 0.0)

    def scaled(self, factor: float) -> "NoiseBounds":
        return NoiseBounds(
            self.b_enc * factor, self.b_mult * factor, self.b_rot * factor, self.b_boot * factor
        )

    def as_dict(self) -> Dict[str, float]:
        return {"b_enc": self.b_enc, "b_mult": self.b_mult, "b_rot": self.b_rot, "b_boot": self.b_boot}


@dataclass(frozen=True)
class KeyMaterial:
    """Keys for one backend instance.

    The server side only ever sees :meth:`evaluation_keys`, which drops the
    secret key. ``recryption_token`` is the insecure bootstrap stand-in: it
    wraps the secret key so the server can refresh ciphertexts.
    """

    params: BackendParams
    backend: str
    secret: Optional[Any]
    public: Any
    relin: Any
    rotation: Dict[int, Any] = field(default_factory=dict)
    recryption_token: Optional[Any] = None

    @property
    def has_secret(self) -> bool:
        return self.secret is not None

    def evaluation_keys(self) -> "KeyMaterial":
        return replace(self, secret=None)


class HEBackend(abc.ABC):
    """Common interface of the homomorphic backends.

    Every operation updates :attr:`counts`, keyed by operation name.
    """

    name = "abstract"

    def __init__(self, params: BackendParams, stream_seeds: Optional[Dict[str, int]] = None):
        self.params = params
        self.counts: Counter = Counter()
        self._streams: Dict[str, np.random.Generator] = {}
        self._stream_seeds = dict(stream_seeds or {})

    def rng(self, tag: str) -> np.random.Generator:
        if tag not in self._streams:
            entropy = self._stream_seeds.get(tag)
            if entropy is None:
                entropy = stream_entropy(self.params.seed, tag)
            self._streams[tag] = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
        return self._streams[tag]

    def server_stream_seeds(self) -> Dict[str, int]:
        return {t: self._stream_seeds.get(t, stream_entropy(self.params.seed, t)) for t in SERVER_STREAMS}

    def reset_counts(self) -> None:
        self.counts.clear()

    @property
    def slot_count(self) -> int:
        return self.params.slot_count

    @property
    def max_level(self) -> int:
        return self.params.levels

    def _check_message(self, x, check_bound: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        n = self.slot_count
        if x.shape[0] > n:
            raise ValueError(f"message of length {x.shape[0]} exceeds {n} slots")
        if check_bound and np.any(np.abs(x) > self.params.message_bound):
            raise ValueError(
                f"message magnitude {np.max(np.abs(x)):.3g} exceeds bound {self.params.message_bound}"
            )
        out = np.zeros(n)
        out[: x.shape[0]] = x
        return out

    @staticmethod
    def _require_secret(keys: KeyMaterial) -> Any:
        if keys.secret is None:
            raise DecryptionError("decryption needs the secret key")
        return keys.secret

    def _check_owner(self, *cts: Ciphertext) -> None:
        for c in cts:
            if c.backend != self.name:
                raise TypeError(f"ciphertext from backend {c.backend!r} given to {self.name!r}")
            if c.slot_count != self.slot_count:
                raise ValueError(
                    f"slot count mismatch: {c.slot_count} vs backend {self.slot_count}"
                )

    @abc.abstractmethod
    def keygen(self) -> KeyMaterial:
        """Generate a fresh, seed-determined key set."""

    @abc.abstractmethod
    def encrypt(self, x, keys: KeyMaterial) -> Ciphertext:
        """Encode and encrypt a real vector of length at most ``slot_count``."""

    @abc.abstractmethod
    def decrypt(self, c: Ciphertext, keys: KeyMaterial) -> np.ndarray:
        """Decrypt and decode to ``slot_count`` real values."""

    @abc.abstractmethod
    def add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        ...

    @abc.abstractmethod
    def mult(self, c1: Ciphertext, c2: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        """Slot-wise product; consumes one level."""

    @abc.abstractmethod
    def rotate(self, c: Ciphertext, r: int, keys: KeyMaterial) -> Ciphertext:
        """Cyclic upward shift of the slots by ``r``."""

    @abc.abstractmethod
    def bootstrap(self, c: Ciphertext, keys: KeyMaterial) -> Ciphertext:
        """Refresh ``c`` to the top level."""

    @abc.abstractmethod
    def mod_switch_to(self, c: Ciphertext, level: int) -> Ciphertext:
        """Drop ``c`` to a lower level without changing its message."""

    def align(self, c1: Ciphertext, c2: Ciphertext):
        level = min(c1.level, c2.level)
        return self.mod_switch_to(c1, level), self.mod_switch_to(c2, level)

    def _check_rotation(self, r: int) -> int:
        r = int(r)
        if not 0 <= r < self.slot_count:
            raise ValueError(f"rotation {r} outside [0, {self.slot_count})")
        return r
