"""Error propagation bounds for the noisy iteration and their empirical check.

A noisy run obeys ``Z~_{k+1} = A Z~_k + w + eps_k`` with
``|eps_k|_inf <= beta`` and ``|Z~_0 - Z_0|_inf <= beta0``. Unrolling with
``alpha = |A|_inf`` and ``c = 1`` gives

    |Z~_k - Z*|_inf < c * (alpha^k * (|Z_0 - Z*|_inf + beta0) + beta / (1 - alpha)).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .he.base import NoiseBounds
from .rerl import LinearSystem, contractivity_check, solve_direct

FP_SLACK = 1e-12


@dataclass(frozen=True)
class BoundParameters:
    beta0: float
    beta: float
    alpha: float
    z0_gap: float
    c: float = 1.0

    def __post_init__(self):
        if self.beta0 < 0 or self.beta < 0:
            raise ValueError("beta0 and beta must be nonnegative")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"alpha={self.alpha} is not contractive")
        if self.c < 1:
            raise ValueError("c must be at least 1")

    @property
    def limsup_bound(self) -> float:
        return self.c * self.beta / (1.0 - self.alpha)


@dataclass
class ErrorReport:
    """Measured trajectory against the analytic bounds.

    ``residuals[k-1]`` belongs to the step ``k-1 -> k``; ``inf_errors`` and
    ``bound_curve`` are indexed by ``k = 0..T``.
    """

    err_trajectory: List[float]
    inf_errors: List[float]
    residuals: List[float]
    bound_curve: List[float]
    params: BoundParameters
    residual_violations: int
    bound_violations: int

    @property
    def limsup_bound(self) -> float:
        return self.params.limsup_bound

    @property
    def violations(self) -> int:
        return self.residual_violations + self.bound_violations

    def summary(self) -> dict:
        p = self.params
        return {
            "beta0": p.beta0,
            "beta": p.beta,
            "alpha": p.alpha,
            "c": p.c,
            "z0_gap": p.z0_gap,
            "limsup_bound": self.limsup_bound,
            "violations": self.violations,
            "residual_violations": self.residual_violations,
            "bound_violations": self.bound_violations,
            "err_T": self.err_trajectory[-1],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["k", "err_k", "resid_k", "bound_k"])
            for k, (e, b) in enumerate(zip(self.err_trajectory, self.bound_curve)):
                r = repr(self.residuals[k - 1]) if k > 0 else ""
                out.writerow([k, repr(e), r, repr(b)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def compute_beta(S: int, nb: NoiseBounds):
    """Return ``(beta0, beta)`` for an S-state step under bounds ``nb``."""
    beta0 = nb.b_enc
    beta = S * (2 * nb.b_mult + nb.b_rot) + nb.b_enc + nb.b_boot
    return beta0, beta


def bound_parameters(sys: LinearSystem, nb: NoiseBounds, Z0, Z_star=None) -> BoundParameters:
    if Z_star is None:
        Z_star = solve_direct(sys)
    beta0, beta = compute_beta(sys.size, nb)
    alpha = contractivity_check(sys).max_row_sum
    gap = float(np.max(np.abs(np.asarray(Z0, dtype=float) - Z_star)))
    return BoundParameters(beta0=beta0, beta=beta, alpha=alpha, z0_gap=gap)


def error_bound(bp: BoundParameters, k: int) -> float:
    """Bound on ``|Z~_k - Z*|_inf`` after ``k`` noisy steps."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return bp.c * (bp.alpha**k * (bp.z0_gap + bp.beta0) + bp.beta / (1.0 - bp.alpha))


def err_metric(Z_tilde, Z_star) -> float:
    """Mean absolute deviation over the non-absorbing states, relative to mean ``Z*``."""
    Z_tilde = np.asarray(Z_tilde, dtype=float)
    Z_star = np.asarray(Z_star, dtype=float)
    if Z_tilde.shape != Z_star.shape:
        raise ValueError(f"shape mismatch {Z_tilde.shape} vs {Z_star.shape}")
    m = Z_star.mean()
    if m == 0:
        raise ValueError("mean of Z* is zero")
    return float(np.mean(np.abs(Z_tilde - Z_star)) / m)


def verify_run(
    trajectory: Sequence[np.ndarray],
    sys: LinearSystem,
    bp: BoundParameters,
    Z_star: Optional[np.ndarray] = None,
    fp_slack: float = FP_SLACK,
) -> ErrorReport:
    """Check every step residual against ``beta`` and every iterate against the bound.

    Args:
        trajectory: Decrypted iterates ``Z~_0, ..., Z~_T`` (test mode).
        sys: The plaintext system.
        bp: Bound parameters, usually from :func:`bound_parameters`.
        Z_star: Fixed point; solved directly when omitted.
        fp_slack: Absolute allowance for float round-off in both checks.
            With zero noise the bound is attained exactly on systems whose
            rows of A share one sum, so ties must not count as violations.
    """
    if Z_star is None:
        Z_star = solve_direct(sys)
    traj = [np.asarray(z, dtype=float)[: sys.size] for z in trajectory]
    errs, infs, bounds, resids = [], [], [], []
    bad_res = bad_bound = 0
    for k, z in enumerate(traj):
        errs.append(err_metric(z, Z_star))
        inf = float(np.max(np.abs(z - Z_star)))
        infs.append(inf)
        b = error_bound(bp, k)
        bounds.append(b)
        if not inf < b + fp_slack:
            bad_bound += 1
        if k > 0:
            r = float(np.max(np.abs(z - (sys.A @ traj[k - 1] + sys.w))))
            resids.append(r)
            if r > bp.beta + fp_slack:
                bad_res += 1
    return ErrorReport(errs, infs, resids, bounds, bp, bad_res, bad_bound)


def iterations_to_limit(bp: BoundParameters, eps: float) -> int:
    """Smallest k with the transient term below ``eps``."""
    head = bp.c * (bp.z0_gap + bp.beta0)
    if head <= eps or bp.alpha == 0:
        return 0
    return max(0, math.ceil(math.log(eps / head) / math.log(bp.alpha)))


__all__ = [
    "BoundParameters",
    "ErrorReport",
    "bound_parameters",
    "compute_beta",
    "err_metric",
    "iterations_to_limit",
    "error_bound",
    "verify_run",
]
