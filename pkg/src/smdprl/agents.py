"""The six learners and their shared machinery.

Three duration-aware agents (SDQN, SDDQN, SBCQ) and their fixed-step
baselines (DQN, DDQN, BCQ).  A baseline differs from its counterpart in
exactly one place: the bootstrap discount exponent (1 instead of the
option duration).  Everything else — networks, replay, epoch scheme,
behaviour cloning, masking — is identical, which isolates the effect of
the mis-discounting.

Offline training follows the epoch scheme: refill a working copy of the
dataset, draw uniform minibatches without replacement until it is empty,
one gradient step per minibatch, syncing the target network per config.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import approx, gridworld
from .core import (
    OptionTransition,
    RunConfig,
    StateVector,
    discounted_return,
    rng_stream,
)
from .gridworld import ENCODING_SIZE, EnvVariant, GridEnv, GridState, N_OPTIONS


class Algorithm(enum.Enum):
    """Agent kind; the S-prefixed members discount by option duration."""

    SDQN = "sdqn"
    SDDQN = "sddqn"
    SBCQ = "sbcq"
    DQN = "dqn"
    DDQN = "ddqn"
    BCQ = "bcq"

    @classmethod
    def from_name(cls, name: str) -> "Algorithm":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(
                f"unknown algorithm {name!r}; expected one of "
                f"{[member.value for member in cls]}"
            ) from None

    @property
    def uses_smdp_discounting(self) -> bool:
        return self in (Algorithm.SDQN, Algorithm.SDDQN, Algorithm.SBCQ)

    @property
    def needs_cloner(self) -> bool:
        return self in (Algorithm.SBCQ, Algorithm.BCQ)

    @property
    def decouples_selection(self) -> bool:
        """Selection by the main net, evaluation by the target net."""
        return self in (Algorithm.SDDQN, Algorithm.DDQN, Algorithm.SBCQ, Algorithm.BCQ)


AgentKind = Algorithm

ALL_ALGORITHMS = tuple(Algorithm)
SMDP_ALGORITHMS = (Algorithm.SDQN, Algorithm.SDDQN, Algorithm.SBCQ)
BASELINE_ALGORITHMS = (Algorithm.DQN, Algorithm.DDQN, Algorithm.BCQ)


class TransitionBatch(NamedTuple):
    """Column-major view of a set of option transitions."""

    states: np.ndarray
    option_ids: np.ndarray
    rhos: np.ndarray
    next_states: np.ndarray
    durations: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[OptionTransition]) -> "TransitionBatch":
        if len(transitions) == 0:
            raise ValueError("cannot build a batch from zero transitions")
        return cls(
            states=np.stack([t.state for t in transitions]).astype(np.float64),
            option_ids=np.array([t.option_id for t in transitions], dtype=np.int64),
            rhos=np.array([t.rho for t in transitions], dtype=np.float64),
            next_states=np.stack([t.next_state for t in transitions]).astype(np.float64),
            durations=np.array([t.duration for t in transitions], dtype=np.int64),
            terminals=np.array([t.terminal for t in transitions], dtype=bool),
        )

    def take(self, indices: np.ndarray) -> "TransitionBatch":
        return TransitionBatch(
            self.states[indices],
            self.option_ids[indices],
            self.rhos[indices],
            self.next_states[indices],
            self.durations[indices],
            self.terminals[indices],
        )

    @property
    def count(self) -> int:
        return len(self.option_ids)


@dataclass
class BehaviorCloner:
    """Softmax head over an MLP: estimated option probabilities per state."""

    net: approx.MLP

    def probabilities(self, x: StateVector) -> np.ndarray:
        return approx.softmax(approx.forward(self.net, x))

    def probabilities_batch(self, states: np.ndarray) -> np.ndarray:
        return approx.softmax(approx.forward_batch(self.net, states))


def bcq_mask(probabilities: np.ndarray, tau: float) -> np.ndarray:
    """Option ids whose probability relative to the maximum exceeds ``tau``."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if np.any(probabilities < 0.0):
        raise ValueError("probabilities must be nonnegative")
    top = probabilities.max()
    if top <= 0.0:
        raise ValueError("probabilities must not be all zero")
    return np.flatnonzero(probabilities / top > tau)


def _constrained_argmax(values: np.ndarray, allowed: np.ndarray) -> int:
    """Argmax over ``allowed`` ids (all ids when empty); lowest id wins ties."""
    if len(allowed) == 0:
        # empty constraint set: fall back to the full option set
        return int(np.argmax(values))
    choice = int(allowed[np.argmax(values[allowed])])
    assert choice in allowed
    return choice


def epsilon_at(step: int, config: RunConfig) -> float:
    """Piecewise-linear exploration schedule: hold, anneal, hold."""
    if step < config.epsilon_warmup_steps:
        return config.epsilon_initial
    progressed = step - config.epsilon_warmup_steps
    if config.epsilon_anneal_steps <= 0 or progressed >= config.epsilon_anneal_steps:
        return config.epsilon_final
    fraction = progressed / config.epsilon_anneal_steps
    return config.epsilon_initial + (config.epsilon_final - config.epsilon_initial) * fraction


def _gamma_powers(gamma: float, durations: np.ndarray) -> np.ndarray:
    # scalar pow per distinct duration, so batch targets match the scalar
    # target functions bit for bit
    table = {int(k): gamma ** int(k) for k in np.unique(durations)}
    return np.array([table[int(k)] for k in durations])


def compute_targets(
    kind: Algorithm,
    batch: TransitionBatch,
    main: approx.MLP,
    target: approx.MLP,
    gamma: float,
    tau: float | None = None,
    cloner: BehaviorCloner | None = None,
    clip: tuple[float, float] | None = None,
) -> np.ndarray:
    """Per-sample regression targets for one minibatch.

    Terminal samples always receive ``rho``.  Otherwise the bootstrap is
    the target net's value at the next state, with the option chosen by
    max (DQN family), by the main net's argmax (double family), or by
    the main net's argmax restricted to the cloner's mask (BCQ family).
    The baselines use the identical structure with discount exponent 1.
    Equivalent to composing :func:`smdp_target` / :func:`mdp_baseline_target`
    per sample, exactly.
    """
    if kind.needs_cloner and cloner is None:
        raise ValueError(f"{kind.value} requires a behaviour cloner")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    next_target_values = approx.forward_batch(target, batch.next_states)
    if kind.decouples_selection:
        next_main_values = approx.forward_batch(main, batch.next_states)
        if kind.needs_cloner:
            probabilities = cloner.probabilities_batch(batch.next_states)
            if np.any(probabilities < 0.0) or np.any(probabilities.max(axis=1) <= 0.0):
                raise ValueError("cloner probabilities must be nonnegative, not all zero")
            threshold = 0.0 if tau is None else tau
            allowed = probabilities / probabilities.max(axis=1, keepdims=True) > threshold
            # rows with an empty constraint set fall back to the full option set
            allowed[~allowed.any(axis=1)] = True
        else:
            allowed = np.ones_like(next_main_values, dtype=bool)
        selected = np.where(allowed, next_main_values, -np.inf).argmax(axis=1)
        assert bool(allowed[np.arange(batch.count), selected].all())
        bootstrap = next_target_values[np.arange(batch.count), selected]
    else:
        bootstrap = next_target_values.max(axis=1)
    if not np.all(np.isfinite(batch.rhos)) or not np.all(np.isfinite(bootstrap)):
        raise ValueError("non-finite inputs in target computation")
    if clip is not None:
        low, high = clip
        if low > high:
            raise ValueError(f"clip bounds out of order: ({low}, {high})")
        bootstrap = np.clip(bootstrap, low, high)
    if kind.uses_smdp_discounting:
        if np.any(batch.durations < 1):
            raise ValueError("durations must be >= 1")
        discount = _gamma_powers(gamma, batch.durations)
    else:
        discount = gamma
    targets = batch.rhos + discount * bootstrap
    return np.where(batch.terminals, batch.rhos, targets)


def act(
    kind: Algorithm,
    net: approx.MLP,
    x: StateVector,
    epsilon: float,
    rng: np.random.Generator,
    cloner: BehaviorCloner | None = None,
    tau: float | None = None,
) -> int:
    """Epsilon-greedy option choice; BCQ kinds restrict to the cloner mask."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if kind.needs_cloner:
        if cloner is None:
            raise ValueError(f"{kind.value} requires a behaviour cloner")
        allowed = bcq_mask(cloner.probabilities(x), 0.0 if tau is None else tau)
        if len(allowed) == 0:
            allowed = np.arange(net.output_size)
    else:
        allowed = np.arange(net.output_size)
    if epsilon > 0.0 and rng.random() < epsilon:
        choice = int(rng.choice(allowed))
        assert choice in allowed
        return choice
    values = approx.forward(net, x)
    return _constrained_argmax(values, allowed)


def greedy_policy(
    kind: Algorithm,
    net: approx.MLP,
    cloner: BehaviorCloner | None = None,
    tau: float | None = None,
) -> Callable[[GridState], int]:
    """Deterministic policy over grid states for evaluation rollouts."""
    frozen = np.random.default_rng(0)  # never consulted at epsilon=0

    def policy(state: GridState) -> int:
        return act(kind, net, gridworld.encode(state), 0.0, frozen, cloner, tau)

    return policy


class RolloutResult(NamedTuple):
    undiscounted_return: float
    discounted_return: float
    primitive_steps: int
    option_steps: int
    reached_goal: bool


def rollout(
    policy: Callable[[GridState], int],
    variant: EnvVariant,
    start: GridState | None = None,
    option_cap: int = 100,
) -> RolloutResult:
    """Run one episode under ``policy``; discounting is per primitive step."""
    env = GridEnv(variant)
    state = env.reset(start)
    undiscounted = 0.0
    discounted = 0.0
    weight = 1.0
    primitive_steps = 0
    for option_step in range(1, option_cap + 1):
        outcome = env.execute(policy(state))
        rho = discounted_return(outcome.reward_sequence, variant.gamma)
        discounted += weight * rho
        weight *= variant.gamma**outcome.duration
        undiscounted += sum(outcome.reward_sequence)
        primitive_steps += outcome.duration
        state = outcome.next_state
        if outcome.terminal:
            return RolloutResult(undiscounted, discounted, primitive_steps, option_step, True)
    return RolloutResult(undiscounted, discounted, primitive_steps, option_cap, False)


def _network_shape(config: RunConfig) -> tuple[int, ...]:
    return (ENCODING_SIZE, *config.hidden_sizes, N_OPTIONS)


def _sync_if_due(main: approx.MLP, target: approx.MLP, config: RunConfig, gradient_step: int) -> None:
    if config.target_sync_mode == "lump":
        if gradient_step % config.target_update_period == 0:
            approx.sync_target(main, target, "lump")
    else:
        approx.sync_target(main, target, "polyak", config.target_update_kappa)


def _as_transitions(dataset) -> Sequence[OptionTransition]:
    if hasattr(dataset, "transitions"):
        return dataset.transitions
    return dataset


def train_cloner(dataset, config: RunConfig, seed: int | None = None) -> BehaviorCloner:
    """Fit the option-probability network to logged decisions.

    Minimizes cross-entropy between the softmax output and the logged
    option ids, with the same shuffled-epochs-without-replacement scheme
    as value training.
    """
    transitions = _as_transitions(dataset)
    if len(transitions) == 0:
        raise ValueError("cannot train a cloner on an empty dataset")
    batch_all = TransitionBatch.from_transitions(transitions)
    master = config.seed if seed is None else seed
    net = approx.init_mlp(_network_shape(config), rng_stream(master, "cloner-init"))
    state = approx.init_optimizer(net, config.cloner_learning_rate)
    order_rng = rng_stream(master, "cloner-sampling")
    count = batch_all.count
    for _ in range(config.cloner_epochs):
        order = order_rng.permutation(count)
        for lo in range(0, count, config.minibatch_size):
            chunk = order[lo : lo + config.minibatch_size]
            _, gradient = approx.cross_entropy_and_gradient(
                net, batch_all.states[chunk], batch_all.option_ids[chunk]
            )
            approx.optimizer_step(net, state, gradient)
    return BehaviorCloner(net)


def validation_loss(
    kind: Algorithm,
    batch: TransitionBatch,
    main: approx.MLP,
    target: approx.MLP,
    config: RunConfig,
    cloner: BehaviorCloner | None,
) -> float:
    """Mean squared TD error on a held-out batch with frozen targets."""
    targets = compute_targets(
        kind, batch, main, target, config.gamma, config.bcq_threshold, cloner, config.clip_bounds
    )
    predicted = approx.forward_batch(main, batch.states)
    residual = predicted[np.arange(batch.count), batch.option_ids] - targets
    return float(np.mean(residual**2))


@dataclass
class OfflineResult:
    kind: Algorithm
    final_net: approx.MLP
    best_net: approx.MLP
    best_epoch: int
    train_losses: list[float]
    validation_losses: list[float]
    cloner: BehaviorCloner | None
    gradient_steps: int


def train_offline(
    kind: Algorithm,
    dataset,
    config: RunConfig,
    validation=None,
    cloner: BehaviorCloner | None = None,
) -> OfflineResult:
    """Offline training over a fixed dataset.

    Each epoch consumes every sample exactly once in minibatches drawn
    uniformly without replacement.  When a validation set is supplied,
    the epoch minimizing the mean squared TD error on it is kept as
    ``best_net`` (earliest epoch on ties); otherwise the final network
    doubles as the best one.  The run is fully determined by
    ``(dataset, config, config.seed)``.
    """
    transitions = _as_transitions(dataset)
    if len(transitions) == 0:
        raise ValueError("cannot train on an empty dataset")
    batch_all = TransitionBatch.from_transitions(transitions)
    if kind.needs_cloner and cloner is None:
        cloner = train_cloner(dataset, config, seed=config.seed)
    main = approx.init_mlp(_network_shape(config), rng_stream(config.seed, "offline-init", kind.value))
    target = main.copy()
    optimizer = approx.init_optimizer(main, config.learning_rate)
    order_rng = rng_stream(config.seed, "offline-sampling", kind.value)
    validation_batch = (
        TransitionBatch.from_transitions(_as_transitions(validation))
        if validation is not None
        else None
    )
    count = batch_all.count
    train_losses: list[float] = []
    validation_losses: list[float] = []
    best_loss = np.inf
    best_epoch = -1
    best_net = main.copy()
    gradient_step = 0
    for epoch in range(config.epochs):
        order = order_rng.permutation(count)
        epoch_loss = 0.0
        for lo in range(0, count, config.minibatch_size):
            chunk = order[lo : lo + config.minibatch_size]
            minibatch = batch_all.take(chunk)
            targets = compute_targets(
                kind,
                minibatch,
                main,
                target,
                config.gamma,
                config.bcq_threshold,
                cloner,
                config.clip_bounds,
            )
            loss, gradient = approx.loss_and_gradient(
                main, minibatch.states, minibatch.option_ids, targets
            )
            approx.optimizer_step(main, optimizer, gradient)
            gradient_step += 1
            _sync_if_due(main, target, config, gradient_step)
            epoch_loss += loss
        train_losses.append(epoch_loss / count)
        if validation_batch is not None:
            loss = validation_loss(kind, validation_batch, main, target, config, cloner)
            validation_losses.append(loss)
            if loss < best_loss:
                best_loss = loss
                best_epoch = epoch
                best_net = main.copy()
    if validation_batch is None:
        best_net = main.copy()
        best_epoch = config.epochs - 1
    return OfflineResult(
        kind=kind,
        final_net=main,
        best_net=best_net,
        best_epoch=best_epoch,
        train_losses=train_losses,
        validation_losses=validation_losses,
        cloner=cloner,
        gradient_steps=gradient_step,
    )


class _ReplayBuffer:
    """Fixed-capacity FIFO of option transitions with uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, ENCODING_SIZE))
        self.option_ids = np.zeros(capacity, dtype=np.int64)
        self.rhos = np.zeros(capacity)
        self.next_states = np.zeros((capacity, ENCODING_SIZE))
        self.durations = np.ones(capacity, dtype=np.int64)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def push(self, transition: OptionTransition) -> None:
        i = self.cursor
        self.states[i] = transition.state
        self.option_ids[i] = transition.option_id
        self.rhos[i] = transition.rho
        self.next_states[i] = transition.next_state
        self.durations[i] = transition.duration
        self.terminals[i] = transition.terminal
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, count: int, rng: np.random.Generator) -> TransitionBatch:
        indices = rng.integers(0, self.size, size=count)
        return TransitionBatch(
            self.states[indices],
            self.option_ids[indices],
            self.rhos[indices],
            self.next_states[indices],
            self.durations[indices],
            self.terminals[indices],
        )


class EvalPoint(NamedTuple):
    episode: int
    gradient_step: int
    undiscounted_return: float
    discounted_return: float
    reached_goal: bool


@dataclass
class OnlineResult:
    kind: Algorithm
    net: approx.MLP
    cloner: BehaviorCloner | None
    eval_trace: list[EvalPoint]
    episodes: int
    gradient_steps: int


def train_online(kind: Algorithm, variant: EnvVariant, config: RunConfig) -> OnlineResult:
    """Interactive training with epsilon-greedy exploration and replay.

    One gradient step per environment decision once the buffer holds a
    minibatch; the exploration schedule is indexed by gradient steps.
    After every ``eval_period_episodes`` training episodes, one greedy
    episode from the default start is recorded.
    """
    env = GridEnv(variant)
    main = approx.init_mlp(_network_shape(config), rng_stream(config.seed, "online-init", kind.value))
    target = main.copy()
    optimizer = approx.init_optimizer(main, config.learning_rate)
    cloner = None
    cloner_optimizer = None
    if kind.needs_cloner:
        cloner = BehaviorCloner(
            approx.init_mlp(_network_shape(config), rng_stream(config.seed, "online-cloner", kind.value))
        )
        cloner_optimizer = approx.init_optimizer(cloner.net, config.cloner_learning_rate)
    act_rng = rng_stream(config.seed, "online-act", kind.value)
    replay_rng = rng_stream(config.seed, "online-replay", kind.value)
    buffer = _ReplayBuffer(config.replay_capacity)
    eval_trace: list[EvalPoint] = []
    episodes = 0
    episode_steps = 0
    gradient_step = 0
    state = env.reset()
    while gradient_step < config.online_total_steps:
        epsilon = epsilon_at(gradient_step, config)
        option_id = act(
            kind, main, gridworld.encode(state), epsilon, act_rng, cloner, config.bcq_threshold
        )
        outcome = env.execute(option_id)
        buffer.push(
            OptionTransition(
                gridworld.encode(state),
                option_id,
                discounted_return(outcome.reward_sequence, config.gamma),
                gridworld.encode(outcome.next_state),
                outcome.duration,
                outcome.terminal,
            )
        )
        state = outcome.next_state
        episode_steps += 1
        if outcome.terminal or episode_steps >= config.episode_step_cap:
            episodes += 1
            episode_steps = 0
            state = env.reset()
            if episodes % config.eval_period_episodes == 0:
                result = rollout(
                    greedy_policy(kind, main, cloner, config.bcq_threshold),
                    variant,
                    option_cap=config.episode_step_cap,
                )
                eval_trace.append(
                    EvalPoint(
                        episodes,
                        gradient_step,
                        result.undiscounted_return,
                        result.discounted_return,
                        result.reached_goal,
                    )
                )
        if buffer.size >= config.minibatch_size:
            minibatch = buffer.sample(config.minibatch_size, replay_rng)
            targets = compute_targets(
                kind,
                minibatch,
                main,
                target,
                config.gamma,
                config.bcq_threshold,
                cloner,
                config.clip_bounds,
            )
            _, gradient = approx.loss_and_gradient(
                main, minibatch.states, minibatch.option_ids, targets
            )
            approx.optimizer_step(main, optimizer, gradient)
            if cloner is not None:
                _, cloner_gradient = approx.cross_entropy_and_gradient(
                    cloner.net, minibatch.states, minibatch.option_ids
                )
                approx.optimizer_step(cloner.net, cloner_optimizer, cloner_gradient)
            gradient_step += 1
            _sync_if_due(main, target, config, gradient_step)
    return OnlineResult(
        kind=kind,
        net=main,
        cloner=cloner,
        eval_trace=eval_trace,
        episodes=episodes,
        gradient_steps=gradient_step,
    )
