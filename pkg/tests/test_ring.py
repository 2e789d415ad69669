import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rerl_he.he import ring
from rerl_he.he.encoding import CkksEncoder


def schoolbook(a, b, q):
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return [x % q for x in out]


@settings(max_examples=60, deadline=None)
@given(
    logn=st.integers(1, 5),
    qbits=st.sampled_from([7, 40, 64, 130]),
    seed=st.integers(0, 2**32 - 1),
)
def test_negacyclic_matches_schoolbook(logn, qbits, seed):
    n, q = 1 << logn, 1 << qbits
    g = np.random.default_rng(seed)
    a = np.array([int.from_bytes(g.bytes(20), "little") % q for _ in range(n)], dtype=object)
    b = np.array([int.from_bytes(g.bytes(20), "little") % q for _ in range(n)], dtype=object)
    assert ring.negacyclic_mul(a, b, q).tolist() == schoolbook(a, b, q)


def test_negacyclic_x_times_x_to_n_minus_1():
    n, q = 8, 256
    x = np.zeros(n, dtype=object)
    x[1] = 1
    xn1 = np.zeros(n, dtype=object)
    xn1[n - 1] = 1
    out = ring.negacyclic_mul(x, xn1, q)
    assert out.tolist() == [q - 1] + [0] * (n - 1)  # X^n = -1


def test_automorphism_matches_substitution():
    n, q, g = 16, 1 << 20, 5
    rng = np.random.default_rng(0)
    a = np.array(rng.integers(0, q, n).tolist(), dtype=object)
    out = [0] * n
    for i, c in enumerate(a):
        k = (i * g) % (2 * n)
        if k < n:
            out[k] = (out[k] + c) % q
        else:
            out[k - n] = (out[k - n] - c) % q
    assert ring.automorphism(a, g, q).tolist() == out


def test_automorphism_is_ring_homomorphism():
    n, q = 16, 1 << 30
    rng = np.random.default_rng(1)
    a = np.array(rng.integers(0, q, n).tolist(), dtype=object)
    b = np.array(rng.integers(0, q, n).tolist(), dtype=object)
    lhs = ring.automorphism(ring.negacyclic_mul(a, b, q), 25, q)
    rhs = ring.negacyclic_mul(ring.automorphism(a, 25, q), ring.automorphism(b, 25, q), q)
    assert lhs.tolist() == rhs.tolist()


def test_center_and_round_div():
    q = 1 << 10
    a = np.array([0, 1, 511, 512, 1023], dtype=object)
    assert ring.center(a, q).tolist() == [0, 1, 511, -512, -1]
    # round(x / 4) of the centred values, reduced mod 2^8
    r = ring.round_div_pow2(np.array([6, 5, 1022], dtype=object), q, 2, 1 << 8)
    assert r.tolist() == [2, 1, 0]


def test_from_signed():
    assert ring.from_signed([-1, 0, 1], 8).tolist() == [7, 0, 1]


# -- encoder ---------------------------------------------------------------


def vandermonde_slots(coeffs, N):
    """Evaluate at zeta^(5^j) directly."""
    zeta = np.exp(1j * np.pi / N)
    pts = [zeta ** pow(5, j, 2 * N) for j in range(N // 2)]
    return np.array([sum(c * p**k for k, c in enumerate(coeffs)) for p in pts])


@pytest.mark.parametrize("N", [8, 16, 128])
def test_decode_matches_vandermonde(N):
    enc = CkksEncoder(N)
    c = np.random.default_rng(N).normal(size=N)
    np.testing.assert_allclose(enc.decode(c, 1.0), vandermonde_slots(c, N), atol=1e-9)


@pytest.mark.parametrize("N", [8, 64, 1024])
def test_encode_roundtrip(N):
    enc = CkksEncoder(N)
    z = np.random.default_rng(0).uniform(-1, 1, N // 2)
    coeffs = enc.embed_inverse(z)
    np.testing.assert_allclose(enc.decode(coeffs, 1.0).real, z, atol=1e-12)
    np.testing.assert_allclose(enc.decode(coeffs, 1.0).imag, 0, atol=1e-12)
    scale = 2.0**28
    err = np.abs(enc.decode(enc.encode(z, scale), scale).real - z)
    assert err.max() < N / scale


def test_galois_rotation_shifts_slots_up():
    N = 32
    enc = CkksEncoder(N)
    z = np.arange(N // 2) / 16
    coeffs = enc.embed_inverse(z)
    for r in (1, 2, 5):
        g = enc.galois_element(r)
        rot = np.zeros(N)
        for i, c in enumerate(coeffs):
            k = (i * g) % (2 * N)
            rot[k % N] += c if k < N else -c
        np.testing.assert_allclose(enc.decode(rot, 1.0).real, np.roll(z, -r), atol=1e-12)
