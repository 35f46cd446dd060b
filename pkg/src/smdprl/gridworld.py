"""Deterministic options-based grid environment with location-dependent step sizes.

The world is an 8x8 grid whose outer ring is wall; the agent lives on the
6x6 interior, starting at the top-left interior cell facing right, with
the goal at the bottom-right interior cell.  An option applies its head
primitive and then ``s`` forward moves, where ``s`` is the step size at
the cell/orientation the option was *initiated* from:

* leftmost interior column, facing down  -> 4
* top interior row (three-tier rule only) -> 1
* everywhere else                         -> 2

The leftmost-facing-down rule wins when both apply.  Option duration is
``k = 1 + s`` (the head counts as its own primitive step), except that
entering the goal ends the episode immediately and truncates the tail.

Per-primitive rewards: +10 on the step that enters the goal;
``crossing_penalty`` on any step that *enters* a third-interior-row cell
outside the rightmost interior column (re-entry fires again; bumping a
wall moves nothing and therefore enters nothing); 0 otherwise.

Instances of :class:`GridEnv` hold mutable episode state — use one per
worker.  The module-level operations are pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import OptionDef, PrimitiveAction, StateVector

INTERIOR_SIZE = 6
GOAL_CELL = (5, 5)
PENALTY_ROW = 2          # third interior row, 0-indexed
SAFE_COLUMN = 5          # rightmost interior column: no crossing penalty
GOAL_REWARD = 10.0
ENCODING_SIZE = 108      # 6*6 cells x 3 channels
N_STATES = INTERIOR_SIZE * INTERIOR_SIZE * 4
N_OPTIONS = 3


class Orientation(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


_DELTA = {
    Orientation.UP: (-1, 0),
    Orientation.DOWN: (1, 0),
    Orientation.LEFT: (0, -1),
    Orientation.RIGHT: (0, 1),
}
# Counterclockwise cycle in top-down view: right -> up -> left -> down.
_TURN_LEFT = {
    Orientation.RIGHT: Orientation.UP,
    Orientation.UP: Orientation.LEFT,
    Orientation.LEFT: Orientation.DOWN,
    Orientation.DOWN: Orientation.RIGHT,
}
_TURN_RIGHT = {after: before for before, after in _TURN_LEFT.items()}


class GridState(tuple):
    """Immutable ``(row, col, orientation, done)`` on the 6x6 interior."""

    __slots__ = ()

    def __new__(cls, row: int, col: int, orientation: Orientation, done: bool = False):
        if not (0 <= row < INTERIOR_SIZE and 0 <= col < INTERIOR_SIZE):
            raise ValueError(f"cell ({row}, {col}) is outside the interior")
        if done and (row, col) != GOAL_CELL:
            raise ValueError("done states must sit on the goal cell")
        return super().__new__(cls, (int(row), int(col), Orientation(orientation), bool(done)))

    @property
    def row(self) -> int:
        return self[0]

    @property
    def col(self) -> int:
        return self[1]

    @property
    def orientation(self) -> Orientation:
        return self[2]

    @property
    def done(self) -> bool:
        return self[3]

    def __repr__(self) -> str:
        tag = ", done" if self.done else ""
        return f"GridState({self.row}, {self.col}, {self.orientation.name}{tag})"


class StepSizeRule(enum.Enum):
    THREE_TIER = "three-tier"
    TWO_TIER = "two-tier"


@dataclass(frozen=True)
class EnvVariant:
    """Environment flavour: reward/discount/step-size configuration."""

    name: str
    crossing_penalty: float
    gamma: float
    step_size_rule: StepSizeRule

    def return_range(self) -> tuple[float, float]:
        """Known bounds of the discounted return, used as clip bounds."""
        if self.gamma < 1.0:
            low = self.crossing_penalty / (1.0 - self.gamma)
        else:
            low = -np.inf
        return (low, GOAL_REWARD)


ONLINE = EnvVariant("online", crossing_penalty=-1.0, gamma=0.9, step_size_rule=StepSizeRule.THREE_TIER)
OFFLINE = EnvVariant("offline", crossing_penalty=-3.0, gamma=0.95, step_size_rule=StepSizeRule.TWO_TIER)

_VARIANTS = {ONLINE.name: ONLINE, OFFLINE.name: OFFLINE}


def variant_by_name(name: str) -> EnvVariant:
    try:
        return _VARIANTS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; expected one of {sorted(_VARIANTS)}") from None


GRID_OPTIONS: tuple[OptionDef, ...] = (
    OptionDef(0, PrimitiveAction.TURN_LEFT),
    OptionDef(1, PrimitiveAction.TURN_RIGHT),
    OptionDef(2, PrimitiveAction.FORWARD),
)

DEFAULT_START = GridState(0, 0, Orientation.RIGHT)


class OptionOutcome(tuple):
    """Result of executing one option: per-primitive rewards, end state,
    duration, terminal flag.  ``len(reward_sequence) == duration``."""

    __slots__ = ()

    def __new__(cls, reward_sequence, next_state: GridState, duration: int, terminal: bool):
        rewards = tuple(float(r) for r in reward_sequence)
        if len(rewards) != duration or duration < 1:
            raise ValueError("reward_sequence length must equal duration >= 1")
        return super().__new__(cls, (rewards, next_state, int(duration), bool(terminal)))

    @property
    def reward_sequence(self) -> tuple[float, ...]:
        return self[0]

    @property
    def next_state(self) -> GridState:
        return self[1]

    @property
    def duration(self) -> int:
        return self[2]

    @property
    def terminal(self) -> bool:
        return self[3]


def reset(start: GridState | None = None, seed: int | None = None) -> GridState:
    """Fresh episode state: the default start, or ``start`` if given.

    ``seed`` is accepted for interface stability; the dynamics are fully
    deterministic so it is unused.  Starting on the goal cell is illegal.
    """
    del seed
    if start is None:
        return DEFAULT_START
    if start.done or (start.row, start.col) == GOAL_CELL:
        raise ValueError("cannot start an episode on the goal cell")
    return GridState(start.row, start.col, start.orientation)


def step_size(state: GridState, variant: EnvVariant) -> int:
    """Forward-run length granted at ``state``; leftmost-facing-down wins
    over the top-row rule on the (only reachable) overlap."""
    if state.done:
        raise ValueError("step_size is undefined on terminal states")
    if state.col == 0 and state.orientation == Orientation.DOWN:
        return 4
    if variant.step_size_rule is StepSizeRule.THREE_TIER and state.row == 0:
        return 1
    return 2


def _apply_primitive(
    state: GridState, action: PrimitiveAction, variant: EnvVariant
) -> tuple[GridState, float, bool]:
    """One primitive step: (next state, reward, entered-goal flag)."""
    row, col, orient = state.row, state.col, state.orientation
    if action == PrimitiveAction.TURN_LEFT:
        return GridState(row, col, _TURN_LEFT[orient]), 0.0, False
    if action == PrimitiveAction.TURN_RIGHT:
        return GridState(row, col, _TURN_RIGHT[orient]), 0.0, False
    if action == PrimitiveAction.NOOP:
        return state, 0.0, False
    # forward: wall bumps keep the position (the step still counts)
    d_row, d_col = _DELTA[orient]
    new_row, new_col = row + d_row, col + d_col
    if not (0 <= new_row < INTERIOR_SIZE and 0 <= new_col < INTERIOR_SIZE):
        return state, 0.0, False
    if (new_row, new_col) == GOAL_CELL:
        return GridState(new_row, new_col, orient, done=True), GOAL_REWARD, True
    reward = 0.0
    if new_row == PENALTY_ROW and new_col != SAFE_COLUMN:
        reward = variant.crossing_penalty
    return GridState(new_row, new_col, orient), reward, False


def execute_option(state: GridState, option: OptionDef, variant: EnvVariant) -> OptionOutcome:
    """Run one option to completion (or goal truncation) from ``state``."""
    if state.done:
        raise ValueError("cannot execute an option from a terminal state")
    if not option.can_initiate(state):
        raise ValueError(f"option {option.option_id} is not initiable at {state}")
    run_length = step_size(state, variant)  # frozen at initiation
    rewards: list[float] = []
    current, reward, entered_goal = _apply_primitive(state, option.head, variant)
    rewards.append(reward)
    if not entered_goal:
        for _ in range(run_length):
            current, reward, entered_goal = _apply_primitive(
                current, PrimitiveAction.FORWARD, variant
            )
            rewards.append(reward)
            if entered_goal:
                break
    return OptionOutcome(rewards, current, len(rewards), entered_goal)


def enumerate_states(variant: EnvVariant | None = None) -> list[GridState]:
    """All 6*6*4 ``(row, col, orientation)`` states; the four goal-cell
    entries carry ``done=True`` and act as the terminal markers."""
    del variant  # the state space is variant-independent
    states = []
    for row in range(INTERIOR_SIZE):
        for col in range(INTERIOR_SIZE):
            for orient in Orientation:
                done = (row, col) == GOAL_CELL
                states.append(GridState(row, col, orient, done))
    return states


def state_index(state: GridState) -> int:
    """Dense index into tabular value arrays; terminal status is implied
    by the goal cell, so the done flag does not affect the index."""
    return (state.row * INTERIOR_SIZE + state.col) * 4 + int(state.orientation)


def is_terminal_index(index: int) -> bool:
    return index >= state_index(GridState(GOAL_CELL[0], GOAL_CELL[1], Orientation.UP, True))


def encode(state: GridState) -> StateVector:
    """Injective binary encoding into a length-108 vector.

    Three 36-entry channels over the 6x6 interior: agent-position
    one-hot, goal-position one-hot, and an orientation one-hot placed in
    the third channel.  ``decode(encode(s)) == s`` for every enumerated
    state (terminal status is recovered from the goal position).
    """
    vec = np.zeros(ENCODING_SIZE, dtype=np.float64)
    cells = INTERIOR_SIZE * INTERIOR_SIZE
    vec[state.row * INTERIOR_SIZE + state.col] = 1.0
    vec[cells + GOAL_CELL[0] * INTERIOR_SIZE + GOAL_CELL[1]] = 1.0
    vec[2 * cells + int(state.orientation)] = 1.0
    return vec


def decode(vector: StateVector) -> GridState:
    """Inverse of :func:`encode`."""
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (ENCODING_SIZE,):
        raise ValueError(f"expected a length-{ENCODING_SIZE} vector, got shape {vec.shape}")
    cells = INTERIOR_SIZE * INTERIOR_SIZE
    agent = int(np.argmax(vec[:cells]))
    orient = Orientation(int(np.argmax(vec[2 * cells : 2 * cells + 4])))
    row, col = divmod(agent, INTERIOR_SIZE)
    return GridState(row, col, orient, done=(row, col) == GOAL_CELL)


def render(state: GridState) -> str:
    """ASCII sketch of the grid for debugging (wall ring included)."""
    pointer = {
        Orientation.UP: "^",
        Orientation.DOWN: "v",
        Orientation.LEFT: "<",
        Orientation.RIGHT: ">",
    }[state.orientation]
    rows = ["#" * (INTERIOR_SIZE + 2)]
    for row in range(INTERIOR_SIZE):
        line = ["#"]
        for col in range(INTERIOR_SIZE):
            if (row, col) == (state.row, state.col):
                line.append(pointer)
            elif (row, col) == GOAL_CELL:
                line.append("G")
            elif row == PENALTY_ROW and col != SAFE_COLUMN:
                line.append("-")
            else:
                line.append(".")
        line.append("#")
        rows.append("".join(line))
    rows.append("#" * (INTERIOR_SIZE + 2))
    return "\n".join(rows)


class GridEnv:
    """Stateful episode wrapper around the pure option dynamics."""

    def __init__(self, variant: EnvVariant):
        self.variant = variant
        self.state = DEFAULT_START

    @property
    def options(self) -> tuple[OptionDef, ...]:
        return GRID_OPTIONS

    def reset(self, start: GridState | None = None, seed: int | None = None) -> GridState:
        self.state = reset(start, seed)
        return self.state

    def execute(self, option_id: int) -> OptionOutcome:
        outcome = execute_option(self.state, GRID_OPTIONS[option_id], self.variant)
        self.state = outcome.next_state
        return outcome

    def iter_nonterminal_states(self) -> Iterator[GridState]:
        for state in enumerate_states(self.variant):
            if not state.done:
                yield state
