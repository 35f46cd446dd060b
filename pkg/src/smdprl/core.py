"""Shared domain types and the return/target arithmetic.

Everything that distinguishes variable-duration learning from the
fixed-step baselines lives in two small functions here: ``smdp_target``
discounts the bootstrap by ``gamma**duration`` while
``mdp_baseline_target`` always uses ``gamma**1``.  Both consume the same
option-level transition tuple ``(x, o, rho, x', k, terminal)``, so the
only difference between an agent and its baseline is the exponent.

All functions in this module are pure and operate on immutable inputs;
they are safe to call from any number of workers without coordination.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

StateVector = np.ndarray
"""Fixed-length float64 observation vector (length 108 in the grid domain)."""


class PrimitiveAction(enum.IntEnum):
    """The four lowest-level actions.

    ``NOOP`` exists as a primitive but no temporally extended action is
    built on top of it; option heads are drawn from the other three.
    """

    TURN_LEFT = 0
    TURN_RIGHT = 1
    FORWARD = 2
    NOOP = 3


@dataclass(frozen=True)
class OptionDef:
    """A fixed temporally extended action.

    The option applies its head primitive and then a run of forward
    moves whose length the environment determines from the agent's
    location.  ``can_initiate`` is the initiation predicate; in the grid
    domain every option is initiable everywhere, so the default is the
    constant-true predicate.
    """

    option_id: int
    head: PrimitiveAction
    can_initiate: Callable[[object], bool] = field(default=lambda state: True)
    description: str = "head action then environment-determined forward repetition"

    def __post_init__(self) -> None:
        if self.option_id < 0:
            raise ValueError(f"option_id must be >= 0, got {self.option_id}")
        if self.head == PrimitiveAction.NOOP:
            raise ValueError("NOOP is never the head of an option")


class OptionTransition(NamedTuple):
    """One option-level sample: start state, option, discounted intra-option
    reward, termination state, duration in primitive steps, terminal flag."""

    state: StateVector
    option_id: int
    rho: float
    next_state: StateVector
    duration: int
    terminal: bool

    def validate(
        self,
        gamma: float | None = None,
        reward_bounds: tuple[float, float] | None = None,
    ) -> None:
        """Raise ``ValueError`` on any malformed field.

        With ``gamma`` and per-step ``reward_bounds`` supplied, also
        checks that ``rho`` lies inside the feasible envelope
        ``[r_min*(1-gamma^k)/(1-gamma), r_max*(1-gamma^k)/(1-gamma)]``.
        """
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1, got {self.duration}")
        if not math.isfinite(self.rho):
            raise ValueError(f"rho must be finite, got {self.rho}")
        if not np.all(np.isfinite(self.state)) or not np.all(np.isfinite(self.next_state)):
            raise ValueError("state vectors must be finite")
        if gamma is not None and reward_bounds is not None and gamma < 1.0:
            r_min, r_max = reward_bounds
            scale = (1.0 - gamma**self.duration) / (1.0 - gamma)
            slack = 1e-9 * max(1.0, abs(r_min), abs(r_max))
            if not (r_min * scale - slack <= self.rho <= r_max * scale + slack):
                raise ValueError(
                    f"rho={self.rho} outside feasible range "
                    f"[{r_min * scale}, {r_max * scale}] for duration={self.duration}"
                )


@dataclass(frozen=True)
class RunConfig:
    """Every experiment knob in one validated record.

    Exactly one target-synchronisation mode is active per run: either a
    lump copy every ``target_update_period`` gradient steps, or a
    gradual blend with weight ``target_update_kappa`` on every step.
    """

    gamma: float = 0.9
    learning_rate: float = 0.0005
    minibatch_size: int = 32
    epochs: int = 50
    target_update_period: int | None = 100
    target_update_kappa: float | None = None
    bcq_threshold: float = 0.3
    epsilon_initial: float = 1.0
    epsilon_final: float = 0.1
    epsilon_warmup_steps: int = 5000
    epsilon_anneal_steps: int = 10000
    online_total_steps: int = 20000
    replay_capacity: int = 50000
    eval_period_episodes: int = 20
    episode_step_cap: int = 100
    dataset_sizes: tuple[int, ...] = (100, 1000, 10000)
    random_fractions: tuple[float, ...] = (0.10, 0.25, 0.50)
    second_best_fraction: float = 0.25
    validation_size: int = 250
    validation_scheme: str = "fixed"
    cloner_learning_rate: float = 0.0005
    cloner_epochs: int = 100
    hidden_sizes: tuple[int, ...] = (128, 64)
    clip_min: float | None = None
    clip_max: float | None = None
    seed: int = 1
    seeds: int = 3

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be a positive integer")
        if self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if (self.target_update_period is None) == (self.target_update_kappa is None):
            raise ValueError(
                "exactly one of target_update_period (lump) and "
                "target_update_kappa (gradual) must be set"
            )
        if self.target_update_period is not None and self.target_update_period < 1:
            raise ValueError("target_update_period must be a positive integer")
        if self.target_update_kappa is not None and not 0.0 < self.target_update_kappa <= 1.0:
            raise ValueError("target_update_kappa must be in (0, 1]")
        if not 0.0 <= self.bcq_threshold <= 1.0:
            raise ValueError("bcq_threshold must be in [0, 1]")
        for name in ("epsilon_initial", "epsilon_final"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.epsilon_warmup_steps < 0 or self.epsilon_anneal_steps < 0:
            raise ValueError("epsilon schedule step counts must be nonnegative")
        if (self.clip_min is None) != (self.clip_max is None):
            raise ValueError("clip_min and clip_max must be set together")
        if self.clip_min is not None and self.clip_min > self.clip_max:
            raise ValueError(f"clip_min={self.clip_min} exceeds clip_max={self.clip_max}")
        if not 0.0 <= self.second_best_fraction <= 1.0:
            raise ValueError("second_best_fraction must be in [0, 1]")
        for fraction in self.random_fractions:
            if not 0.0 <= fraction <= 1.0 or fraction + self.second_best_fraction > 1.0:
                raise ValueError(f"random fraction {fraction} leaves no optimal share")
        if self.validation_scheme not in ("fixed", "same-composition"):
            raise ValueError(
                f"validation_scheme must be 'fixed' or 'same-composition', "
                f"got {self.validation_scheme!r}"
            )
        if any(size < 1 for size in self.dataset_sizes):
            raise ValueError("dataset sizes must be positive")

    @property
    def target_sync_mode(self) -> str:
        """``"lump"`` or ``"polyak"`` — exactly one is active."""
        return "lump" if self.target_update_period is not None else "polyak"

    @property
    def clip_bounds(self) -> tuple[float, float] | None:
        if self.clip_min is None:
            return None
        return (self.clip_min, self.clip_max)


def rng_stream(master_seed: int, *labels: object) -> np.random.Generator:
    """Derive an independent, reproducible random stream from a master seed.

    Each component of a run (environment, init, sampling, behaviour, ...)
    pulls its own stream by label, so components stay independently
    reproducible no matter how many draws the others consume.
    """
    entropy = [int(master_seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(master_seed: int, *labels: object) -> int:
    """A deterministic integer seed derived like :func:`rng_stream`."""
    entropy = [int(master_seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Discounted sum of an in-option reward sequence.

    ``rewards[0]`` is the reward received after the *first* primitive
    step following initiation, so the result is
    ``sum(gamma**j * rewards[j])``.
    """
    if len(rewards) == 0:
        raise ValueError("rewards must contain at least one entry")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    total = 0.0
    weight = 1.0
    for reward in rewards:
        if not math.isfinite(reward):
            raise ValueError(f"rewards must be finite, got {reward}")
        total += weight * reward
        weight *= gamma
    return total


def _clipped(value: float, clip: tuple[float, float] | None) -> float:
    if clip is None:
        return value
    low, high = clip
    if low > high:
        raise ValueError(f"clip bounds out of order: ({low}, {high})")
    return min(max(value, low), high)


def smdp_target(
    rho: float,
    duration: int,
    terminal: bool,
    next_values: Sequence[float] | np.ndarray,
    gamma: float,
    clip: tuple[float, float] | None = None,
) -> float:
    """Bootstrap target with duration-aware discounting.

    Terminal transitions return ``rho``; otherwise
    ``rho + gamma**duration * clip(max(next_values))``.  The optional
    ``clip`` bounds the bootstrap term (not ``rho``) to the known return
    range of the environment, which guards against value overflow.
    """
    if not math.isfinite(rho):
        raise ValueError(f"rho must be finite, got {rho}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    if duration < 1:
        raise ValueError(f"duration must be >= 1, got {duration}")
    if terminal:
        return rho
    values = np.asarray(next_values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("next_values must be nonempty for non-terminal transitions")
    if not np.all(np.isfinite(values)):
        raise ValueError("next_values must be finite")
    return rho + gamma**duration * _clipped(float(values.max()), clip)


def mdp_baseline_target(
    rho: float,
    terminal: bool,
    next_values: Sequence[float] | np.ndarray,
    gamma: float,
    clip: tuple[float, float] | None = None,
) -> float:
    """The fixed-step baseline target: identical to :func:`smdp_target`
    except the bootstrap exponent is always 1, regardless of how many
    primitive steps the option actually took."""
    return smdp_target(rho, 1, terminal, next_values, gamma, clip)


def interpolated_option_return(
    signal_start: float,
    signal_end: float,
    duration: int,
    in_range_bounds: tuple[float, float],
    gamma: float,
) -> float:
    """Discounted return of a threshold reward on a linearly interpolated signal.

    A scalar signal is observed only at option boundaries.  The signal is
    interpolated at ``duration`` points ``s_j = start + (j/k)*(end - start)``
    for ``j = 1..k`` (the start observation itself is not rewarded; the
    last point coincides with the next observation).  Each point earns
    reward 1 if it lies inside ``in_range_bounds`` (inclusive) and 0
    otherwise; the rewards are then discount-summed with ``gamma``.
    """
    if duration < 1:
        raise ValueError(f"duration must be >= 1, got {duration}")
    low, high = in_range_bounds
    if not low < high:
        raise ValueError(f"in_range_bounds must satisfy low < high, got ({low}, {high})")
    diff = signal_end - signal_start
    rewards = []
    for j in range(1, duration + 1):
        point = signal_start + (j / duration) * diff
        rewards.append(1.0 if low <= point <= high else 0.0)
    return discounted_return(rewards, gamma)
