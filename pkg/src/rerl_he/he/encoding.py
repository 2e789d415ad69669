"""Canonical-embedding encoder for N/2 complex slots.

Slot ``j`` holds the evaluation of the message polynomial at
``zeta^(5^j)`` with ``zeta = exp(i*pi/N)``, so the Galois map
``X -> X^(5^r)`` shifts the slots upward by ``r``.
"""

from __future__ import annotations

import numpy as np


class CkksEncoder:
    def __init__(self, ring_degree: int):
        N = ring_degree
        self.N = N
        self.slots = N // 2
        exps = np.array([pow(5, j, 2 * N) for j in range(self.slots)], dtype=np.int64)
        # Evaluation point zeta^t with t = 2k+1 sits at FFT index k.
        self._idx = (exps - 1) // 2
        self._conj_idx = (2 * N - exps - 1) // 2
        self._twist = np.exp(1j * np.pi * np.arange(N) / N)

    def galois_element(self, r: int) -> int:
        return pow(5, r, 2 * self.N)

    def evaluate(self, coeffs: np.ndarray) -> np.ndarray:
        """All N evaluations ``m(zeta^(2k+1))``, indexed by k."""
        return self.N * np.fft.ifft(np.asarray(coeffs, dtype=float) * self._twist)

    def decode(self, coeffs: np.ndarray, scale: float) -> np.ndarray:
        """Real coefficient vector (already divided or not) to complex slots."""
        return self.evaluate(np.asarray(coeffs, dtype=float) / scale)[self._idx]

    def embed_inverse(self, z: np.ndarray) -> np.ndarray:
        """Real polynomial coefficients whose slots equal ``z``."""
        z = np.asarray(z, dtype=complex)
        if z.shape != (self.slots,):
            raise ValueError(f"expected {self.slots} slots, got {z.shape}")
        full = np.empty(self.N, dtype=complex)
        full[self._idx] = z
        full[self._conj_idx] = np.conj(z)
        return np.real(np.fft.fft(full) / self.N / self._twist)

    def encode(self, z: np.ndarray, scale: float) -> np.ndarray:
        """Scale and round to signed int64 coefficients."""
        return np.rint(self.embed_inverse(z) * scale).astype(np.int64)
