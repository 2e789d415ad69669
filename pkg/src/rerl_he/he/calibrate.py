"""Empirical per-operation error bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .base import HEBackend, KeyMaterial, NoiseBounds


@dataclass(frozen=True)
class Calibration:
    """Calibrated bounds together with the raw maxima they came from."""

    bounds: NoiseBounds
    observed: Dict[str, float]
    trials: int
    safety: float


def calibrate_noise_bounds(
    backend: HEBackend,
    keys: KeyMaterial,
    trials: int = 100,
    safety: float = 2.0,
    seed: int = 0,
) -> Calibration:
    """Measure the worst error of each operation and inflate it by ``safety``.

    Messages are uniform on ``[-1, 1]`` in every slot. Each trial measures

    * encryption: ``|Dec(Enc(x)) - x|``;
    * multiplication, at the top level and one level below:
      ``|Dec(Enc(x) * c) - x * Dec(c)|``;
    * rotation by a random nonzero step, on a fresh and on a rescaled
      ciphertext: ``|Dec(Rot_r(c)) - RotVec_r(Dec(c))|``;
    * bootstrapping of a level-0 ciphertext: ``|Dec(Boot(c)) - Dec(c)|``.

    The routine draws from the backend's random streams, so calibrate on a
    backend instance that is not reused for the experiment itself.

    Args:
        backend: Backend to measure.
        keys: Key material with the secret key.
        trials: Number of trials per operation; at least 100.
        safety: Multiplier applied to each observed maximum.
        seed: Seed of the message generator.

    Returns:
        The calibrated bounds and the observed maxima.
    """
    if trials < 100:
        raise ValueError("calibration needs at least 100 trials")
    rng = np.random.default_rng(seed)
    n = backend.slot_count
    obs = {"b_enc": 0.0, "b_mult": 0.0, "b_rot": 0.0, "b_boot": 0.0}

    def msg():
        return rng.uniform(-1.0, 1.0, n)

    for _ in range(trials):
        x, y, u = msg(), msg(), msg()
        cx = backend.encrypt(x, keys)
        obs["b_enc"] = max(obs["b_enc"], np.max(np.abs(backend.decrypt(cx, keys) - x)))

        cy = backend.encrypt(y, keys)
        prod = backend.mult(backend.encrypt(u, keys), cy, keys)  # level L-1
        err = np.abs(backend.decrypt(prod, keys) - u * backend.decrypt(cy, keys))
        obs["b_mult"] = max(obs["b_mult"], np.max(err))
        prod2 = backend.mult(cx, prod, keys)  # level L-2
        err = np.abs(backend.decrypt(prod2, keys) - x * backend.decrypt(prod, keys))
        obs["b_mult"] = max(obs["b_mult"], np.max(err))

        for c in (cy, prod):
            r = int(rng.integers(1, n))
            rc = backend.rotate(c, r, keys)
            err = np.abs(backend.decrypt(rc, keys) - np.roll(backend.decrypt(c, keys), -r))
            obs["b_rot"] = max(obs["b_rot"], np.max(err))

        low = backend.mod_switch_to(prod2, 0)
        err = np.abs(backend.decrypt(backend.bootstrap(low, keys), keys) - backend.decrypt(low, keys))
        obs["b_boot"] = max(obs["b_boot"], np.max(err))

    obs = {k: float(v) for k, v in obs.items()}
    bounds = NoiseBounds(**{k: v * safety for k, v in obs.items()})
    return Calibration(bounds, obs, trials, safety)
