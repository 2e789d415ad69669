"""Arithmetic in Z_q[X]/(X^N + 1) for power-of-two moduli.

Polynomials are numpy object arrays of nonnegative Python ints (residues).
Products use Kronecker substitution: both operands are packed into one big
integer, multiplied with GMP, and unpacked before the negacyclic fold.
"""

from __future__ import annotations

import numpy as np

try:
    import gmpy2

    def _bigmul(a: int, b: int):
        return gmpy2.mpz(a) * gmpy2.mpz(b)

except ImportError:  # pragma: no cover
    gmpy2 = None

    def _bigmul(a: int, b: int):
        return a * b


def as_poly(values) -> np.ndarray:
    """Object array of Python ints (no reduction)."""
    return np.array([int(v) for v in values], dtype=object)


def reduce(a, q: int) -> np.ndarray:
    return np.asarray(a, dtype=object) % q


def from_signed(values, q: int) -> np.ndarray:
    """Residues of a signed integer vector."""
    return np.array([int(v) % q for v in np.asarray(values).tolist()], dtype=object)


def center(a: np.ndarray, q: int) -> np.ndarray:
    """Lift residues to the symmetric range ``[-q/2, q/2)``."""
    half = q >> 1
    return np.where(a >= half, a - q, a)


def _pack(a: np.ndarray, width: int) -> int:
    return int.from_bytes(b"".join(int(x).to_bytes(width, "little") for x in a), "little")


def negacyclic_mul(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """``a * b mod (X^N + 1, q)`` for nonnegative coefficient arrays."""
    n = len(a)
    if len(b) != n:
        raise ValueError("operand degrees differ")
    bits_a = max(int(x).bit_length() for x in a) or 1
    bits_b = max(int(x).bit_length() for x in b) or 1
    width = (bits_a + bits_b + n.bit_length() + 8) // 8
    prod = _bigmul(_pack(a, width), _pack(b, width))
    raw = prod.to_bytes(width * 2 * n, "little")
    coeffs = [int.from_bytes(raw[i * width : (i + 1) * width], "little") for i in range(2 * n)]
    lo = np.array(coeffs[:n], dtype=object)
    hi = np.array(coeffs[n:], dtype=object)
    return (lo - hi) % q


def automorphism(a: np.ndarray, g: int, q: int) -> np.ndarray:
    """Apply ``X -> X^g`` (g odd) to ``a`` modulo ``X^N + 1``."""
    n = len(a)
    idx = (np.arange(n, dtype=np.int64) * g) % (2 * n)
    neg = idx >= n
    out = np.empty(n, dtype=object)
    out[idx % n] = np.where(neg, (-a) % q, a)
    return out


def round_div_pow2(a: np.ndarray, q: int, bits: int, q_out: int) -> np.ndarray:
    """Centered ``round(a / 2^bits)``, reduced modulo ``q_out``."""
    c = center(a, q)
    return ((c + (1 << (bits - 1))) >> bits) % q_out
