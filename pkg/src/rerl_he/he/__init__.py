"""Homomorphic computation layer: interface, simulator and toy CKKS engine."""

from .base import BackendParams, Ciphertext, HEBackend, KeyMaterial, NoiseBounds, stream_entropy
from .calibrate import Calibration, calibrate_noise_bounds
from .noise_sim import NoiseSimBackend
from .toy_ckks import INSECURE_BANNER, ToyCkksBackend

BACKENDS = ("noise-sim", "toy-ckks")


def make_backend(name: str, params: BackendParams, bounds: NoiseBounds = None, **kw) -> HEBackend:
    """Construct a backend by name; the simulator needs ``bounds``."""
    if name == "toy-ckks":
        return ToyCkksBackend(params, **kw)
    if name == "noise-sim":
        if bounds is None:
            raise ValueError("the noise-sim backend needs noise bounds")
        return NoiseSimBackend(params, bounds, **kw)
    raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")


__all__ = [
    "BACKENDS",
    "BackendParams",
    "Calibration",
    "Ciphertext",
    "HEBackend",
    "INSECURE_BANNER",
    "KeyMaterial",
    "NoiseBounds",
    "NoiseSimBackend",
    "ToyCkksBackend",
    "calibrate_noise_bounds",
    "make_backend",
    "stream_entropy",
]
