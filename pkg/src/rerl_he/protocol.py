"""Client/server exchange of an encrypted synthesis job.

Wire format: every message is ``length u32 (big endian) | type u8 | payload``
where ``length`` counts the payload bytes. Types: 0x01 model, 0x02 state,
0x03 result, 0x04 error. Model and result payloads are a little-endian
record table (``count u32`` then ``length u32 | bytes`` per record).

A job is a model message followed by a state message, the encrypted
``Z_0``. The model message carries a JSON header (public parameters,
server stream seeds, ``T``), the evaluation keys and the model
ciphertexts. The server answers with a result message holding ``Z_T`` and
its timing trace, or with an error message.

The server never receives the secret key or the master seed. It does
receive the recryption token of the insecure bootstrap stand-in.
"""

from __future__ import annotations

import io
import json
import logging
import socket
import struct
import threading
from dataclasses import dataclass
from typing import BinaryIO, Dict, List, Optional, Tuple

import numpy as np

from .encrypted import EncryptedModel, IterationTrace, encrypt_model, run_encrypted_vi
from .errors import ProtocolError, RerlError
from .he import BackendParams, HEBackend, KeyMaterial, NoiseBounds, make_backend
from .he import serialize as ser
from .he.base import Ciphertext
from .he.encoding import CkksEncoder
from .rerl import LinearSystem

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MSG_MODEL = 0x01
MSG_STATE = 0x02
MSG_RESULT = 0x03
MSG_ERROR = 0x04
_NAMES = {MSG_MODEL: "model", MSG_STATE: "state", MSG_RESULT: "result", MSG_ERROR: "error"}
_PUBLIC_PARAMS = ("ring_degree", "scale_bits", "levels", "base_headroom_bits", "noise_stddev",
                  "boot_noise_factor", "message_bound")


# -- framing --------------------------------------------------------------


def encode_message(kind: int, payload: bytes) -> bytes:
    if kind not in _NAMES:
        raise ProtocolError(f"unknown message type 0x{kind:02x}")
    return struct.pack(">IB", len(payload), kind) + payload


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if buf is None or len(buf) != n:
        raise ProtocolError(f"truncated message: wanted {n} bytes, got {0 if not buf else len(buf)}")
    return buf


def read_message(stream: BinaryIO) -> Tuple[int, bytes]:
    kind_len = _read_exact(stream, 5)
    length, kind = struct.unpack(">IB", kind_len)
    if kind not in _NAMES:
        raise ProtocolError(f"unknown message type 0x{kind:02x}")
    return kind, _read_exact(stream, length)


def expect(stream: BinaryIO, kind: int) -> bytes:
    got, payload = read_message(stream)
    if got == MSG_ERROR and kind != MSG_ERROR:
        err = json.loads(payload.decode())
        raise ProtocolError(f"remote error {err.get('error')}: {err.get('message')}")
    if got != kind:
        raise ProtocolError(f"expected a {_NAMES[kind]} message, got {_NAMES[got]}")
    return payload


def _table(records: List[bytes]) -> bytes:
    return struct.pack("<I", len(records)) + b"".join(struct.pack("<I", len(r)) + r for r in records)


def _untable(buf: bytes) -> List[bytes]:
    return ser._unframe(buf)


# -- messages ---------------------------------------------------------------


def _params_header(backend: HEBackend, S: int, T: int) -> dict:
    p = backend.params
    head = {
        "protocol": PROTOCOL_VERSION,
        "backend": backend.name,
        "params": {k: getattr(p, k) for k in _PUBLIC_PARAMS},
        "stream_seeds": {k: format(v, "x") for k, v in backend.server_stream_seeds().items()},
        "S": S,
        "T": T,
    }
    if backend.name == "noise-sim":
        head["bounds"] = backend.bounds.as_dict()
        head["adversarial"] = backend.adversarial
    return head


def model_message(backend: HEBackend, keys: KeyMaterial, model: EncryptedModel, T: int) -> bytes:
    head = json.dumps(_params_header(backend, model.S, T), sort_keys=True).encode()
    records = [head, ser.dump_key_material(keys.evaluation_keys())]
    records += [ser.dump_ciphertext(c, backend.params) for c in model.ciphertexts()]
    return encode_message(MSG_MODEL, _table(records))


def state_message(Z0: Ciphertext, params: BackendParams) -> bytes:
    return encode_message(MSG_STATE, ser.dump_ciphertext(Z0, params))


def result_message(ZT: Ciphertext, params: BackendParams, trace: IterationTrace, counts: dict) -> bytes:
    timing = np.array([trace.wall_seconds, trace.boot_seconds], dtype="<f8").tobytes()
    meta = json.dumps({"T": len(trace), "counts": counts}, sort_keys=True).encode()
    return encode_message(MSG_RESULT, _table([ser.dump_ciphertext(ZT, params), timing, meta]))


def error_message(exc: BaseException) -> bytes:
    body = {"error": type(exc).__name__, "message": str(exc)}
    return encode_message(MSG_ERROR, json.dumps(body).encode())


@dataclass
class ServerJob:
    backend: HEBackend
    keys: KeyMaterial
    model: EncryptedModel
    T: int


def parse_model(payload: bytes) -> ServerJob:
    records = _untable(payload)
    if len(records) < 2:
        raise ProtocolError("model message is missing records")
    try:
        head = json.loads(records[0].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError("model header is not valid JSON") from exc
    if head.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version {head.get('protocol')} != {PROTOCOL_VERSION}")
    params = BackendParams(**head["params"])
    seeds = {k: int(v, 16) for k, v in head["stream_seeds"].items()}
    bounds = NoiseBounds(**head["bounds"]) if "bounds" in head else None
    extra = {"adversarial": head["adversarial"]} if "adversarial" in head else {}
    backend = make_backend(head["backend"], params, bounds, stream_seeds=seeds, **extra)
    keys = ser.load_key_material(records[1], params)
    if keys.has_secret:
        raise ProtocolError("refusing a job that ships the secret key")
    S = int(head["S"])
    cts = [ser.load_ciphertext(r, params) for r in records[2:]]
    if len(cts) != 2 * S + 1:
        raise ProtocolError(f"expected {2 * S + 1} model ciphertexts, got {len(cts)}")
    model = EncryptedModel(cts[:S], cts[S], cts[S + 1 :], params, S)
    return ServerJob(backend, keys, model, int(head["T"]))


def parse_result(payload: bytes, params: BackendParams):
    records = _untable(payload)
    if len(records) != 3:
        raise ProtocolError("malformed result message")
    ZT = ser.load_ciphertext(records[0], params)
    meta = json.loads(records[2].decode())
    times = np.frombuffer(records[1], "<f8").reshape(2, meta["T"])
    trace = IterationTrace(times[0].tolist(), times[1].tolist())
    return ZT, trace, meta["counts"]


# -- roles ----------------------------------------------------------------


def client_job(backend: HEBackend, keys: KeyMaterial, sys: LinearSystem, Z0, T: int) -> bytes:
    """Encrypt model and ``Z0`` (client side) and frame them as one job."""
    model = encrypt_model(sys, backend, keys)
    enc_z0 = backend.encrypt(Z0, keys)
    return model_message(backend, keys, model, T) + state_message(enc_z0, backend.params)


def handle_job(rfile: BinaryIO, wfile: BinaryIO) -> None:
    """Server side: read one job, run it, write the result or an error."""
    try:
        job = parse_model(expect(rfile, MSG_MODEL))
        Z0 = ser.load_ciphertext(expect(rfile, MSG_STATE), job.backend.params)
        ZT, trace = run_encrypted_vi(job.backend, job.model, Z0, job.T, job.keys)
        out = result_message(ZT, job.backend.params, trace, dict(job.backend.counts))
    except (RerlError, ValueError, KeyError, TypeError) as exc:
        log.error("job failed: %s", exc)
        out = error_message(exc)
    wfile.write(out)
    wfile.flush()


def client_read_result(rfile: BinaryIO, params: BackendParams):
    return parse_result(expect(rfile, MSG_RESULT), params)


class _Recorder(io.RawIOBase):
    """Byte stream wrapper that keeps a copy of everything passing through."""

    def __init__(self, raw: BinaryIO, log_buf: bytearray):
        self.raw, self.log = raw, log_buf

    def readable(self):
        return True

    def writable(self):
        return True

    def read(self, n=-1):
        data = self.raw.read(n)
        self.log.extend(data or b"")
        return data

    def write(self, data):
        self.log.extend(data)
        return self.raw.write(data)

    def flush(self):
        self.raw.flush()


def _exchange(sock: socket.socket, job: bytes, params: BackendParams):
    transcript = bytearray()
    with sock.makefile("rwb") as f:
        rec = _Recorder(f, transcript)
        rec.write(job)
        rec.flush()
        ZT, trace, counts = client_read_result(rec, params)
    return ZT, trace, counts, bytes(transcript)


def outsource(backend: HEBackend, keys: KeyMaterial, sys: LinearSystem, Z0, T: int,
              host: str = "127.0.0.1", port: int = 0, timeout: float = 600.0):
    """Client side over TCP; returns ``(Z_T, trace, counts, transcript)``."""
    job = client_job(backend, keys, sys, Z0, T)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        return _exchange(sock, job, backend.params)


def outsource_local(backend: HEBackend, keys: KeyMaterial, sys: LinearSystem, Z0, T: int):
    """Run client and server on two ends of a socket pair within this process."""
    job = client_job(backend, keys, sys, Z0, T)
    a, b = socket.socketpair()
    with b:
        server = threading.Thread(target=_serve_connection, args=(b,), daemon=True)
        server.start()
        with a:
            out = _exchange(a, job, backend.params)
        server.join()
    return out


def _serve_connection(conn: socket.socket) -> None:
    with conn, conn.makefile("rwb") as f:
        handle_job(f, f)


def serve(host: str = "127.0.0.1", port: int = 0, jobs: int = 1,
          ready: Optional[threading.Event] = None, bound: Optional[Dict[str, int]] = None) -> None:
    """Serve ``jobs`` synthesis jobs over TCP, one at a time.

    Args:
        host: Interface to bind.
        port: Port; 0 picks a free one, reported through ``bound["port"]``.
        jobs: Number of jobs to handle before returning.
        ready: Set once the socket listens.
        bound: Receives the bound port.
    """
    with socket.create_server((host, port)) as srv:
        if bound is not None:
            bound["port"] = srv.getsockname()[1]
        if ready is not None:
            ready.set()
        log.info("serving on %s:%d", host, srv.getsockname()[1])
        for _ in range(jobs):
            conn, _addr = srv.accept()
            _serve_connection(conn)


def serve_file(job_path, result_path) -> None:
    """File mode: read a job file and write the result (or error) file."""
    with open(job_path, "rb") as rf, open(result_path, "wb") as wf:
        handle_job(rf, wf)


def read_result_file(path, params: BackendParams):
    with open(path, "rb") as fh:
        return client_read_result(fh, params)


# -- hygiene --------------------------------------------------------------


def plaintext_patterns(sys: LinearSystem, params: BackendParams, min_coeff: int = 1 << 20) -> List[bytes]:
    """Byte patterns that would betray the plaintext model on the wire.

    These are the float64 encodings of every nonzero entry of ``A`` and
    ``w``, and the 8-byte residues of the large coefficients of their
    encoded plaintext polynomials.
    """
    pats = {np.float64(v).tobytes() for v in np.concatenate([sys.A.ravel(), sys.w]) if v != 0}
    enc = CkksEncoder(params.ring_degree)
    Q = params.modulus_at(params.levels)
    for vec in [*sys.A, sys.w]:
        z = np.zeros(params.slot_count)
        z[: len(vec)] = vec
        for c in enc.encode(z, params.scale):
            if abs(int(c)) >= min_coeff:
                pats.add((int(c) % Q).to_bytes(-(-Q.bit_length() // 8), "little")[:8])
    return sorted(pats)


def scan_transcript(transcript: bytes, sys: LinearSystem, params: BackendParams) -> List[bytes]:
    """Plaintext patterns found in ``transcript`` (empty means clean)."""
    return [p for p in plaintext_patterns(sys, params) if p in transcript]
