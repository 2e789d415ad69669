"""Deterministic-transition MDPs and Grid-World construction.

States are integers ``0 .. num_states - 1``. Grid-Worlds enumerate free
cells row-major and put the goal (absorbing) cell last.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from .errors import ConstructionError

Cell = Tuple[int, int]

# (d_row, d_col); row 0 is the top of the grid.
ACTIONS: Tuple[Cell, ...] = (
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
    (0, 0),
)
ACTION_NAMES: Tuple[str, ...] = (
    "up",
    "down",
    "left",
    "right",
    "up-left",
    "up-right",
    "down-left",
    "down-right",
    "stay",
)


@dataclass(frozen=True)
class DeterministicMdp:
    """Finite MDP with a deterministic transition table.

    Attributes:
        transition: int array ``(num_states, num_actions)``; ``F[x, u]``.
        cost: float array ``(num_states, num_actions)``; ``C[x, u]``.
        default_policy: float array ``(num_states, num_actions)``; ``b(u|x)``.
        absorbing: index of the absorbing state.
        labels: optional human-readable label per state (grid cells).
    """

    transition: np.ndarray
    cost: np.ndarray
    default_policy: np.ndarray
    absorbing: int
    labels: Optional[Tuple[object, ...]] = None

    def __post_init__(self):
        F = np.asarray(self.transition, dtype=np.int64)
        C = np.asarray(self.cost, dtype=float)
        b = np.asarray(self.default_policy, dtype=float)
        if F.ndim != 2 or C.shape != F.shape or b.shape != F.shape:
            raise ConstructionError(
                f"transition, cost and default_policy must share one 2-D shape, "
                f"got {F.shape}, {C.shape}, {b.shape}"
            )
        if not 0 <= self.absorbing < F.shape[0]:
            raise ConstructionError(f"absorbing state {self.absorbing} out of range")
        for arr in (F, C, b):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", F)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "default_policy", b)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_nonabsorbing(self) -> int:
        return self.num_states - 1

    @property
    def nonabsorbing(self) -> List[int]:
        """Non-absorbing states in enumeration order."""
        return [x for x in range(self.num_states) if x != self.absorbing]


@dataclass(frozen=True)
class GridWorldSpec:
    width: int
    height: int
    goal: Cell
    obstacles: FrozenSet[Cell] = field(default_factory=frozenset)
    stage_cost: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        if self.width < 1 or self.height < 1:
            raise ConstructionError("grid must have positive width and height")
        r, c = self.goal
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ConstructionError(f"goal {self.goal} outside a {self.height}x{self.width} grid")
        if self.goal in self.obstacles:
            raise ConstructionError("goal cell is blocked by an obstacle")
        if self.stage_cost <= 0:
            raise ConstructionError("stage cost must be positive")
        if not self.free_cells()[:-1]:
            raise ConstructionError("grid has no free non-goal cell")

    def free_cells(self) -> List[Cell]:
        """Free cells row-major, goal moved to the end."""
        cells = [
            (r, c)
            for r in range(self.height)
            for c in range(self.width)
            if (r, c) not in self.obstacles and (r, c) != self.goal
        ]
        return cells + [self.goal]


def build_grid_world(spec: GridWorldSpec, num_actions: int = 9) -> DeterministicMdp:
    """Build the Grid-World MDP for ``spec``.

    Moves are clipped coordinate-wise to the grid; a move that lands on an
    obstacle leaves the agent where it is. Every non-goal cell pays
    ``spec.stage_cost`` per action and the default policy is uniform.
    """
    if num_actions != len(ACTIONS):
        raise ConstructionError(f"Grid-World uses {len(ACTIONS)} actions, got {num_actions}")
    cells = spec.free_cells()
    index: Dict[Cell, int] = {cell: i for i, cell in enumerate(cells)}
    n = len(cells)
    goal = index[spec.goal]

    F = np.empty((n, num_actions), dtype=np.int64)
    for cell, x in index.items():
        for u, (dr, dc) in enumerate(ACTIONS):
            if x == goal:
                F[x, u] = goal
                continue
            r = min(max(cell[0] + dr, 0), spec.height - 1)
            c = min(max(cell[1] + dc, 0), spec.width - 1)
            F[x, u] = index.get((r, c), x)

    C = np.full((n, num_actions), float(spec.stage_cost))
    C[goal] = 0.0
    b = np.full((n, num_actions), 1.0 / num_actions)
    return DeterministicMdp(F, C, b, goal, labels=tuple(cells))


@dataclass(frozen=True)
class ValidationReport:
    """Pass/fail per assumption, with a short reason for each failure."""

    checks: Dict[str, bool]
    messages: Dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> List[str]:
        return [name for name, passed in self.checks.items() if not passed]


def reachable_to_absorbing(mdp: DeterministicMdp) -> np.ndarray:
    """Boolean mask of states from which the absorbing state is reachable.

    Only actions with positive default probability count as edges.
    """
    preds: List[List[int]] = [[] for _ in range(mdp.num_states)]
    for x in range(mdp.num_states):
        for u in range(mdp.num_actions):
            if mdp.default_policy[x, u] > 0:
                preds[mdp.transition[x, u]].append(x)
    seen = np.zeros(mdp.num_states, dtype=bool)
    seen[mdp.absorbing] = True
    queue = deque([mdp.absorbing])
    while queue:
        y = queue.popleft()
        for x in preds[y]:
            if not seen[x]:
                seen[x] = True
                queue.append(x)
    return seen


def validate_assumptions(mdp: DeterministicMdp) -> ValidationReport:
    F, C, b = mdp.transition, mdp.cost, mdp.default_policy
    n = mdp.num_states
    others = np.array(mdp.nonabsorbing, dtype=np.int64)
    checks: Dict[str, bool] = {}
    messages: Dict[str, str] = {}

    def record(name: str, passed: bool, why: str) -> None:
        checks[name] = bool(passed)
        messages[name] = "" if passed else why

    record(
        "transition_total",
        bool(np.all((F >= 0) & (F < n))),
        "transition table points outside the state space",
    )
    row_err = np.abs(b.sum(axis=1) - 1.0)
    record(
        "default_policy",
        bool(np.all(b >= 0) and np.all(row_err <= 1e-12)),
        f"default policy rows must be distributions (max row error {row_err.max():.3g})",
    )
    record(
        "cost_positive",
        bool(np.all(C[others] > 0)) if len(others) else True,
        "non-absorbing states need strictly positive costs",
    )
    record(
        "absorbing_zero_cost",
        bool(np.all(C[mdp.absorbing] == 0)),
        "absorbing state must have zero cost",
    )
    record(
        "absorbing_self_loop",
        bool(np.all(F[mdp.absorbing] == mdp.absorbing)),
        "absorbing state must self-loop under every action",
    )
    if checks["transition_total"]:
        reach = reachable_to_absorbing(mdp)
        stuck = [x for x in range(n) if not reach[x]]
        record("reachability", not stuck, f"absorbing state unreachable from {stuck}")
    else:
        record("reachability", False, "skipped: transition table invalid")
    return ValidationReport(checks, messages)
