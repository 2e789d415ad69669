"""Plaintext relative-entropy-regularized value iteration.

The desirability ``z(x) = exp(-V(x) / lam)`` of the non-absorbing states
solves ``Z = A Z + w``; the absorbing state has ``z = 1`` and is not stored.
Besides the linear iteration this module carries two independent oracles:
a log-sum-exp Bellman iteration in value space and ordinary min-based
value iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import AssumptionError, ConsistencyError, ConvergenceError
from .mdp import DeterministicMdp, validate_assumptions

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class LinearSystem:
    """Contractive system ``Z = A Z + w`` over the non-absorbing states."""

    A: np.ndarray
    w: np.ndarray
    lam: float
    state_order: Tuple[int, ...]

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        w = np.array(self.w, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or w.shape != (A.shape[0],):
            raise ValueError(f"incompatible shapes A{A.shape} w{w.shape}")
        A.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "state_order", tuple(self.state_order))

    @property
    def size(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ContractivityReport:
    max_row_sum: float
    contractive: bool


@dataclass(frozen=True)
class IterationResult:
    Z: np.ndarray
    iterations: int
    converged: bool
    history: List[np.ndarray] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class MinViResult:
    V: np.ndarray
    greedy: np.ndarray
    iterations: int


def build_linear_system(mdp: DeterministicMdp, lam: float) -> LinearSystem:
    """Assemble ``A`` and ``w`` from the exp-weighted default policy."""
    if not lam > 0:
        raise AssumptionError(f"lambda must be positive, got {lam}")
    report = validate_assumptions(mdp)
    if not report.ok:
        raise AssumptionError("; ".join(report.messages[k] for k in report.failures()))

    order = mdp.nonabsorbing
    pos = {x: i for i, x in enumerate(order)}
    weight = mdp.default_policy * np.exp(-mdp.cost / lam)
    S = len(order)
    A = np.zeros((S, S))
    w = np.zeros(S)
    for i, x in enumerate(order):
        for u in range(mdp.num_actions):
            y = mdp.transition[x, u]
            if y == mdp.absorbing:
                w[i] += weight[x, u]
            else:
                A[i, pos[y]] += weight[x, u]
    return LinearSystem(A, w, lam, tuple(order))


def contractivity_check(sys: LinearSystem) -> ContractivityReport:
    m = float(np.abs(sys.A).sum(axis=1).max()) if sys.size else 0.0
    return ContractivityReport(m, m < 1.0)


def value_iterate(
    sys: LinearSystem,
    Z0: Optional[np.ndarray] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    keep_history: bool = False,
) -> IterationResult:
    """Run ``Z <- A Z + w`` until the sup-norm step drops below ``tol``.

    ``Z0`` defaults to the all-ones vector and must be strictly positive.
    """
    Z = np.ones(sys.size) if Z0 is None else np.array(Z0, dtype=float)
    if Z.shape != (sys.size,) or np.any(Z <= 0):
        raise ValueError("Z0 must be a positive vector of the system size")
    if tol <= 0:
        raise ValueError("tol must be positive")
    history = [Z.copy()] if keep_history else []
    for k in range(1, max_iter + 1):
        Z_next = sys.A @ Z + sys.w
        step = np.max(np.abs(Z_next - Z)) if sys.size else 0.0
        Z = Z_next
        if keep_history:
            history.append(Z.copy())
        if step < tol:
            return IterationResult(Z, k, True, history)
    return IterationResult(Z, max_iter, False, history)


def solve_direct(sys: LinearSystem) -> np.ndarray:
    """Solve ``(I - A) Z = w`` by LU with partial pivoting."""
    M = np.eye(sys.size) - sys.A
    try:
        return np.linalg.solve(M, sys.w)
    except np.linalg.LinAlgError as exc:
        raise ConsistencyError(f"I - A is singular: {exc}") from exc


def desirability_to_value(z: np.ndarray, lam: float) -> np.ndarray:
    """Map desirabilities to values, appending ``V = 0`` for the absorbing state."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("desirability entries must be positive")
    return np.append(-lam * np.log(z), 0.0)


def full_desirability(mdp: DeterministicMdp, z: np.ndarray) -> np.ndarray:
    """Scatter ``z`` (non-absorbing order) into a state-indexed vector with z_abs = 1."""
    out = np.ones(mdp.num_states)
    out[mdp.nonabsorbing] = np.asarray(z, dtype=float)
    return out


def values_by_state(mdp: DeterministicMdp, V: np.ndarray) -> np.ndarray:
    """Reorder a ``desirability_to_value`` result (absorbing last) into state order."""
    out = np.zeros(mdp.num_states)
    out[mdp.nonabsorbing] = V[:-1]
    out[mdp.absorbing] = V[-1]
    return out


def reconstruct_policy(
    mdp: DeterministicMdp, z: np.ndarray, lam: float, consistency_tol: float = 1e-3
) -> np.ndarray:
    """Boltzmann policy ``pi(u|x) ∝ b(u|x) exp(-C/lam) z(F(x,u))``.

    The unnormalized rows must sum to ``z(x)`` within ``consistency_tol``
    (relative), otherwise ``z`` does not solve the system and
    :class:`ConsistencyError` is raised. Rows are renormalized afterwards.
    """
    zf = full_desirability(mdp, z)
    num = mdp.default_policy * np.exp(-mdp.cost / lam) * zf[mdp.transition]
    pi = np.empty_like(num)
    for x in range(mdp.num_states):
        if x == mdp.absorbing:
            pi[x] = mdp.default_policy[x]
            continue
        total = num[x].sum()
        if abs(total / zf[x] - 1.0) > consistency_tol:
            raise ConsistencyError(
                f"state {x}: row mass {total / zf[x]:.6g} deviates from 1 by more than {consistency_tol}"
            )
        pi[x] = num[x] / total
    return pi


def greedy_actions(policy: np.ndarray) -> np.ndarray:
    """Most probable action per state; ``np.argmax`` breaks ties at the lowest index."""
    return np.argmax(policy, axis=1)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def bellman_fixed_point_oracle(
    mdp: DeterministicMdp, lam: float, tol: float = 1e-12, max_iter: int = 100_000
) -> np.ndarray:
    """Iterate the soft Bellman equation directly in value space.

    Returns values in the same layout as :func:`desirability_to_value`
    (non-absorbing order, absorbing value 0 appended).
    """
    with np.errstate(divide="ignore"):
        log_b = np.log(mdp.default_policy)
    V = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        rho = mdp.cost + V[mdp.transition]
        V_next = -lam * _logsumexp(log_b - rho / lam, axis=1)
        V_next[mdp.absorbing] = 0.0
        step = np.max(np.abs(V_next - V))
        V = V_next
        if step < tol:
            return np.append(V[mdp.nonabsorbing], 0.0)
    raise ConvergenceError(f"soft Bellman iteration did not converge in {max_iter} steps")


def standard_min_vi(mdp: DeterministicMdp, tol: float = 1e-12, max_iter: int = 100_000) -> MinViResult:
    """Undiscounted min-cost value iteration (shortest path to the absorbing state).

    Values and greedy actions are indexed by state.
    """
    V = np.zeros(mdp.num_states)
    for k in range(1, max_iter + 1):
        Q = mdp.cost + V[mdp.transition]
        V_next = Q.min(axis=1)
        V_next[mdp.absorbing] = 0.0
        step = np.max(np.abs(V_next - V))
        V = V_next
        if step < tol:
            greedy = np.argmin(mdp.cost + V[mdp.transition], axis=1)
            return MinViResult(V, greedy, k)
    raise ConvergenceError(f"min value iteration did not converge in {max_iter} steps")


def minimizer_sets(mdp: DeterministicMdp, V: np.ndarray, atol: float = 1e-9) -> List[set]:
    """All actions attaining the Bellman minimum at each state."""
    Q = mdp.cost + V[mdp.transition]
    best = Q.min(axis=1, keepdims=True)
    return [set(np.flatnonzero(row <= b + atol).tolist()) for row, b in zip(Q, best)]


def rot_vec(x: np.ndarray, r: int) -> np.ndarray:
    """Cyclic shift upward by ``r``: ``rot_vec([1,2,3,4,5], 2) == [3,4,5,1,2]``."""
    return np.roll(np.asarray(x), -r)


def rotation_offsets(i: int, S: int, slots: int) -> List[int]:
    """Rotation amounts that collect row ``i``'s inner product into slot ``i``.

    With ``slots == S`` these are simply ``0, 1, ..., S-1``. For a
    zero-padded vector (``slots > S``) those offsets would wrap past the
    padding, so each offset is shifted by ``-i`` (mod ``slots``).
    """
    if slots == S:
        return list(range(S))
    return [(r - i) % slots for r in range(S)]


def pad(x: np.ndarray, slots: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] > slots:
        raise ValueError(f"vector of length {x.shape[0]} does not fit {slots} slots")
    out = np.zeros(slots)
    out[: x.shape[0]] = x
    return out


def encryption_friendly_step(sys: LinearSystem, Z: np.ndarray, slots: Optional[int] = None) -> np.ndarray:
    """One update written with Hadamard products, rotations and selectors only.

    This is the plaintext mirror of the homomorphic step and performs the
    same operations in the same order.
    """
    S = sys.size
    n = S if slots is None else slots
    Zp = pad(Z, n)
    acc = pad(sys.w, n)
    for i in range(S):
        prod = pad(sys.A[i], n) * Zp
        g = None
        for r in rotation_offsets(i, S, n):
            term = rot_vec(prod, r)
            g = term if g is None else g + term
        acc = acc + pad(np.eye(S)[i], n) * g
    return acc[:S] if slots is None else acc


def encryption_friendly_iterate(
    sys: LinearSystem, Z0: np.ndarray, T: int, slots: Optional[int] = None
) -> np.ndarray:
    if T < 0:
        raise ValueError("T must be nonnegative")
    Z = np.asarray(Z0, dtype=float) if slots is None else pad(Z0, slots)
    for _ in range(T):
        Z = encryption_friendly_step(sys, Z[: sys.size], slots)
    return Z[: sys.size]
