"""Bit-exact binary format for ciphertexts and keys.

Every record starts with the same header (little endian)::

    magic "HERL" | version u16 | N u32 | slot_count u32 | level u8 |
    log2(scale) i16 | modulus count u8 | moduli u64 ...

Ciphertext records follow with two components of N coefficients each.
A coefficient is a residue modulo the product of the listed moduli, stored
as ``ceil(log2(Q) / 64)`` 8-byte limbs, low limb first.

Key records insert ``type u8 | aux u32 | component count u8`` after the
header; ``aux`` carries the rotation step of rotation keys.

Simulator ciphertexts list no moduli and store two components of
slot_count float64 values: the noisy message and the exact message of a
fresh encryption (NaN when absent).
"""

from __future__ import annotations

import math
import struct
from typing import Dict, List, Tuple

import numpy as np

from ..errors import SerializationError
from . import ring
from .base import BackendParams, Ciphertext, KeyMaterial
from .noise_sim import _SimPayload, _SimSecret, _SimToken
from .toy_ckks import PublicKey, RecryptionToken, SecretKey, SwitchingKey

MAGIC = b"HERL"
VERSION = 1
_HEADER = struct.Struct("<4sHIIBhB")
_KEY_EXTRA = struct.Struct("<BIB")

KEY_SECRET = 0x01
KEY_PUBLIC = 0x02
KEY_RELIN = 0x03
KEY_ROTATION = 0x04
KEY_TOKEN = 0x05


def _split_pow2(bits: int) -> List[int]:
    """Moduli of at most 2^63 whose product is ``2^bits``."""
    out = []
    while bits > 0:
        b = min(bits, 63)
        out.append(1 << b)
        bits -= b
    return out


def _limbs(moduli) -> int:
    Q = math.prod(moduli)
    return max(1, -(-(Q.bit_length() - 1) // 64))


def _write_header(params: BackendParams, level: int, scale: float, moduli) -> bytes:
    exp = math.log2(scale)
    if exp != int(exp):
        raise SerializationError(f"scale {scale} is not a power of two")
    head = _HEADER.pack(
        MAGIC, VERSION, params.ring_degree, params.slot_count, level, int(exp), len(moduli)
    )
    return head + b"".join(struct.pack("<Q", m) for m in moduli)


def _read_header(buf: bytes, off: int = 0):
    try:
        magic, ver, N, slots, level, exp, count = _HEADER.unpack_from(buf, off)
    except struct.error as exc:
        raise SerializationError("truncated header") from exc
    if magic != MAGIC:
        raise SerializationError(f"bad magic {magic!r}")
    if ver != VERSION:
        raise SerializationError(f"unsupported format version {ver}")
    off += _HEADER.size
    if len(buf) < off + 8 * count:
        raise SerializationError("truncated modulus list")
    moduli = [struct.unpack_from("<Q", buf, off + 8 * i)[0] for i in range(count)]
    off += 8 * count
    return dict(N=N, slots=slots, level=level, scale=2.0**exp, moduli=moduli), off


def _pack_poly(a: np.ndarray, limbs: int) -> bytes:
    return b"".join(int(x).to_bytes(8 * limbs, "little") for x in a)


def _unpack_poly(buf: bytes, off: int, n: int, limbs: int, Q: int) -> Tuple[np.ndarray, int]:
    width = 8 * limbs
    end = off + n * width
    if len(buf) < end:
        raise SerializationError("truncated coefficient data")
    coeffs = [int.from_bytes(buf[off + i * width : off + (i + 1) * width], "little") for i in range(n)]
    if any(c >= Q for c in coeffs):
        raise SerializationError("coefficient outside the modulus range")
    return np.array(coeffs, dtype=object), end


def _ct_moduli(params: BackendParams, level: int) -> List[int]:
    return params.modulus_chain[: level + 1]


# -- ciphertexts ---------------------------------------------------------


def dump_ciphertext(c: Ciphertext, params: BackendParams) -> bytes:
    if c.backend == "noise-sim":
        head = _write_header(params, c.level, c.scale, [])
        p: _SimPayload = c.payload
        exact = p.exact if p.exact is not None else np.full(c.slot_count, np.nan)
        return head + np.asarray(p.value, "<f8").tobytes() + np.asarray(exact, "<f8").tobytes()
    moduli = _ct_moduli(params, c.level)
    limbs = _limbs(moduli)
    c0, c1 = c.payload
    return _write_header(params, c.level, c.scale, moduli) + _pack_poly(c0, limbs) + _pack_poly(c1, limbs)


def _check_params(h, params: BackendParams) -> None:
    if h["N"] != params.ring_degree or h["slots"] != params.slot_count:
        raise SerializationError(
            f"record for N={h['N']} does not match parameters N={params.ring_degree}"
        )


def load_ciphertext(buf: bytes, params: BackendParams) -> Ciphertext:
    h, off = _read_header(buf)
    _check_params(h, params)
    if not h["moduli"]:
        n = h["slots"]
        if len(buf) != off + 16 * n:
            raise SerializationError("simulator ciphertext has wrong length")
        value = np.frombuffer(buf, "<f8", n, off).astype(float)
        exact = np.frombuffer(buf, "<f8", n, off + 8 * n).astype(float)
        payload = _SimPayload(value, None if np.all(np.isnan(exact)) else exact)
        return Ciphertext(payload, h["level"], h["scale"], n, "noise-sim")
    if h["moduli"] != _ct_moduli(params, h["level"]):
        raise SerializationError("modulus chain does not match parameters")
    Q = math.prod(h["moduli"])
    limbs = _limbs(h["moduli"])
    c0, off = _unpack_poly(buf, off, h["N"], limbs, Q)
    c1, off = _unpack_poly(buf, off, h["N"], limbs, Q)
    if off != len(buf):
        raise SerializationError("trailing bytes after ciphertext")
    return Ciphertext((c0, c1), h["level"], h["scale"], h["slots"], "toy-ckks")


# -- keys ---------------------------------------------------------------


def _key_record(params, kind, aux, comps, moduli) -> bytes:
    limbs = _limbs(moduli) if moduli else 0
    out = [_write_header(params, params.levels, params.scale, moduli), _KEY_EXTRA.pack(kind, aux, len(comps))]
    out.extend(_pack_poly(c, limbs) for c in comps)
    return b"".join(out)


def _read_key_record(buf: bytes, params: BackendParams):
    h, off = _read_header(buf)
    _check_params(h, params)
    try:
        kind, aux, ncomp = _KEY_EXTRA.unpack_from(buf, off)
    except struct.error as exc:
        raise SerializationError("truncated key record") from exc
    off += _KEY_EXTRA.size
    comps = []
    if h["moduli"]:
        Q = math.prod(h["moduli"])
        limbs = _limbs(h["moduli"])
        for _ in range(ncomp):
            c, off = _unpack_poly(buf, off, h["N"], limbs, Q)
            comps.append(c)
    if off != len(buf):
        raise SerializationError("trailing bytes after key record")
    return kind, aux, comps, h["moduli"]


def _frame(records: List[bytes]) -> bytes:
    return struct.pack("<I", len(records)) + b"".join(struct.pack("<I", len(r)) + r for r in records)


def _unframe(buf: bytes) -> List[bytes]:
    try:
        (count,) = struct.unpack_from("<I", buf, 0)
        off, out = 4, []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            if len(buf) < off + n:
                raise SerializationError("truncated record")
            out.append(buf[off : off + n])
            off += n
    except struct.error as exc:
        raise SerializationError("truncated record table") from exc
    if off != len(buf):
        raise SerializationError("trailing bytes after record table")
    return out


def dump_key_material(keys: KeyMaterial) -> bytes:
    """Serialize every key present in ``keys`` (the secret only if held)."""
    params = keys.params
    recs = []
    if keys.backend == "noise-sim":
        if keys.secret is not None:
            recs.append(_key_record(params, KEY_SECRET, 0, [], []))
        recs.append(_key_record(params, KEY_PUBLIC, 0, [], []))
        for step in sorted(keys.rotation):
            recs.append(_key_record(params, KEY_ROTATION, step, [], []))
        if keys.recryption_token is not None:
            recs.append(_key_record(params, KEY_TOKEN, 0, [], []))
        return _frame(recs)

    chain = params.modulus_chain
    Q = params.modulus_at(params.levels)
    special = _split_pow2(Q.bit_length() - 1)
    if keys.secret is not None:
        recs.append(_key_record(params, KEY_SECRET, 0, [ring.from_signed(keys.secret.s, Q)], chain))
    recs.append(_key_record(params, KEY_PUBLIC, 0, [keys.public.b, keys.public.a], chain))
    recs.append(_key_record(params, KEY_RELIN, 0, [keys.relin.b, keys.relin.a], chain + special))
    for step in sorted(keys.rotation):
        k = keys.rotation[step]
        recs.append(_key_record(params, KEY_ROTATION, step, [k.b, k.a], chain + special))
    if keys.recryption_token is not None:
        s = ring.from_signed(keys.recryption_token.secret.s, Q)
        recs.append(_key_record(params, KEY_TOKEN, 0, [s], chain))
    return _frame(recs)


def _signed(a: np.ndarray, Q: int) -> np.ndarray:
    return np.array([int(x) - Q if int(x) > Q // 2 else int(x) for x in a], dtype=np.int64)


def load_key_material(buf: bytes, params: BackendParams) -> KeyMaterial:
    fields: Dict[str, object] = dict(secret=None, public=None, relin=None, recryption_token=None)
    rotation: Dict[int, object] = {}
    backend = None
    for rec in _unframe(buf):
        kind, aux, comps, moduli = _read_key_record(rec, params)
        sim = not moduli
        this = "noise-sim" if sim else "toy-ckks"
        if backend not in (None, this):
            raise SerializationError("key records from different backends")
        backend = this
        if kind == KEY_SECRET:
            fields["secret"] = _SimSecret() if sim else SecretKey(_signed(comps[0], math.prod(moduli)))
        elif kind == KEY_PUBLIC:
            fields["public"] = None if sim else PublicKey(*comps)
        elif kind == KEY_RELIN:
            fields["relin"] = SwitchingKey(*comps)
        elif kind == KEY_ROTATION:
            rotation[aux] = None if sim else SwitchingKey(*comps)
        elif kind == KEY_TOKEN:
            fields["recryption_token"] = (
                _SimToken() if sim else RecryptionToken(SecretKey(_signed(comps[0], math.prod(moduli))))
            )
        else:
            raise SerializationError(f"unknown key type 0x{kind:02x}")
    if backend is None:
        raise SerializationError("empty key file")
    return KeyMaterial(params=params, backend=backend, rotation=rotation, **fields)
