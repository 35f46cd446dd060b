"""Exact planning and learning on the enumerable grid.

Value iteration here is the ground truth every function approximator is
measured against: synchronous (Jacobi) sweeps over the precomputed
deterministic option-transition table until the sup-norm update falls
below tolerance.  Terminal rows (the goal cell) are pinned to zero.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import gridworld
from .core import discounted_return, rng_stream
from .gridworld import EnvVariant, GridState, GRID_OPTIONS, N_OPTIONS, N_STATES


class ConvergenceError(RuntimeError):
    """Value iteration failed to reach tolerance; carries the last residual."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(f"no convergence after {sweeps} sweeps (last residual {residual:.3e})")
        self.residual = residual
        self.sweeps = sweeps


@dataclass(frozen=True)
class TabularQ:
    """Dense option-value table indexed by (state index, option id)."""

    values: np.ndarray
    variant_name: str

    def __post_init__(self) -> None:
        if self.values.shape != (N_STATES, N_OPTIONS):
            raise ValueError(f"expected shape {(N_STATES, N_OPTIONS)}, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table entries must be finite")

    def greedy_option(self, index: int) -> int:
        return int(np.argmax(self.values[index]))

    def state_value(self, index: int) -> float:
        return float(self.values[index].max())

    def greedy_policy(self) -> Callable[[GridState], int]:
        def policy(state: GridState) -> int:
            return self.greedy_option(gridworld.state_index(state))

        return policy


class _TransitionTable:
    """Deterministic (rho, duration, next index, terminal) per (state, option)."""

    def __init__(self, variant: EnvVariant):
        self.variant = variant
        self.rho = np.zeros((N_STATES, N_OPTIONS))
        self.duration = np.ones((N_STATES, N_OPTIONS), dtype=np.int64)
        self.next_index = np.zeros((N_STATES, N_OPTIONS), dtype=np.int64)
        self.terminal = np.zeros((N_STATES, N_OPTIONS), dtype=bool)
        self.terminal_rows = np.zeros(N_STATES, dtype=bool)
        for state in gridworld.enumerate_states(variant):
            index = gridworld.state_index(state)
            if state.done:
                self.terminal_rows[index] = True
                self.terminal[index, :] = True
                continue
            for option in GRID_OPTIONS:
                outcome = gridworld.execute_option(state, option, variant)
                column = option.option_id
                self.rho[index, column] = discounted_return(outcome.reward_sequence, variant.gamma)
                self.duration[index, column] = outcome.duration
                self.next_index[index, column] = gridworld.state_index(outcome.next_state)
                self.terminal[index, column] = outcome.terminal


@functools.lru_cache(maxsize=None)
def transition_table(variant: EnvVariant) -> _TransitionTable:
    return _TransitionTable(variant)


def _backup(table: _TransitionTable, q: np.ndarray, gamma: float, duration_aware: bool) -> np.ndarray:
    state_values = q.max(axis=1)
    state_values[table.terminal_rows] = 0.0
    exponent = table.duration if duration_aware else 1
    bootstrap = np.where(table.terminal, 0.0, gamma**exponent * state_values[table.next_index])
    updated = table.rho + bootstrap
    updated[table.terminal_rows, :] = 0.0
    return updated


def smdp_value_iteration(
    variant: EnvVariant,
    tolerance: float = 1e-12,
    max_sweeps: int = 100_000,
    duration_aware: bool = True,
) -> TabularQ:
    """Fixed point of ``Q(x,o) = rho(x,o) + gamma^k max Q(x',.)``.

    ``duration_aware=False`` instead solves the mis-discounted fixed point
    with exponent 1 on every bootstrap — the policy the fixed-step
    baselines converge to, useful as a diagnostic.

    Raises :class:`ConvergenceError` when the sup-norm sweep change has
    not dropped below ``tolerance`` within ``max_sweeps``.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    table = transition_table(variant)
    q = np.zeros((N_STATES, N_OPTIONS))
    delta = np.inf
    for _ in range(max_sweeps):
        updated = _backup(table, q, variant.gamma, duration_aware)
        delta = float(np.abs(updated - q).max())
        q = updated
        if delta < tolerance:
            return TabularQ(q, variant.name)
    raise ConvergenceError(delta, max_sweeps)


def bellman_residual(table_q: TabularQ, variant: EnvVariant, duration_aware: bool = True) -> float:
    """Sup-norm distance between the table and one exact backup of itself."""
    table = transition_table(variant)
    updated = _backup(table, table_q.values.copy(), variant.gamma, duration_aware)
    return float(np.abs(updated - table_q.values).max())


def smdp_q_learning(
    variant: EnvVariant,
    alpha: float = 1.0,
    epsilon: float | Callable[[int], float] = 1.0,
    steps: int = 200_000,
    seed: int = 0,
    episode_cap: int = 100,
) -> TabularQ:
    """Tabular duration-aware Q-learning with exploring starts.

    Each episode begins at a uniformly random non-goal state so that
    every (state, option) pair is visited; the environment is
    deterministic, so with ``alpha=1`` every update is an exact
    asynchronous backup and the table converges to the value-iteration
    fixed point.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    table = transition_table(variant)
    epsilon_at = epsilon if callable(epsilon) else (lambda step: epsilon)
    rng = rng_stream(seed, "tabular-q-learning", variant.name)
    live_indices = np.flatnonzero(~table.terminal_rows)
    q = np.zeros((N_STATES, N_OPTIONS))
    index = int(rng.choice(live_indices))
    in_episode = 0
    for step in range(steps):
        if rng.random() < epsilon_at(step):
            option = int(rng.integers(N_OPTIONS))
        else:
            option = int(np.argmax(q[index]))
        rho = table.rho[index, option]
        duration = table.duration[index, option]
        next_index = table.next_index[index, option]
        if table.terminal[index, option]:
            target = rho
        else:
            target = rho + variant.gamma**duration * q[next_index].max()
        q[index, option] = (1.0 - alpha) * q[index, option] + alpha * target
        in_episode += 1
        if table.terminal[index, option] or in_episode >= episode_cap:
            index = int(rng.choice(live_indices))
            in_episode = 0
        else:
            index = int(next_index)
    return TabularQ(q, variant.name)


def greedy_and_second_best(table_q: TabularQ, index: int) -> tuple[int, int]:
    """Argmax option and runner-up at a state; ties break to the lowest id."""
    values = table_q.values[index]
    if values.size < 2:
        raise ValueError("need at least two options to rank")
    best = int(np.argmax(values))
    masked = values.copy()
    masked[best] = -np.inf
    second = int(np.argmax(masked))
    return best, second
