"""Deterministic toy pixel environments with 4-frame stacking.

Two games stand in for the full-scale benchmarks:

* ``catch`` -- a ball falls one row per step with a per-episode horizontal
  drift (reflecting off walls); a 3-pixel paddle on the bottom row must be
  under it when it lands. Reward +1 on a catch, -1 on a miss, episode
  length is always frame_size - 1 steps. Fully deterministic given the
  reset seed.
* ``gridgoal`` -- an agent pixel navigates to a goal pixel; +1 on arrival,
  0 otherwise, capped episodes. An optional noise level replaces the
  chosen action with a uniform random one, which is the knob used to study
  prediction-model degradation.

States are plain values: ``step`` returns a new state and never mutates
its argument, and ``snapshot``/``restore`` round-trip exactly, including
the frame-stack history and (for the stochastic variant) the rng state.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .seeding import derive_rng

CATCH = "catch"
GRIDGOAL = "gridgoal"
ENV_KINDS = (CATCH, GRIDGOAL)

# catch actions
LEFT, STAY, RIGHT = 0, 1, 2
# gridgoal actions
UP, DOWN, G_LEFT, G_RIGHT = 0, 1, 2, 3

_ACTION_COUNTS = {CATCH: 3, GRIDGOAL: 4}

STACK = 4
PADDLE_HALF = 1  # paddle covers center +/- 1 -> 3 pixels
BALL_VALUE = 1.0
PADDLE_VALUE = 0.5
AGENT_VALUE = 1.0
GOAL_VALUE = 0.5

_SNAP_MAGIC = b"RLAL-SNAP"
_SNAP_VERSION = 1


class SnapshotError(ValueError):
    """Raised when a snapshot blob is corrupt, truncated, or unreadable."""


@dataclass(frozen=True)
class EnvConfig:
    kind: str = CATCH
    frame_size: int = 12
    p_noise: float = 0.0
    max_steps: int = 64

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.kind!r}; expected one of {ENV_KINDS}")
        if self.frame_size < 4:
            raise ValueError("frame_size must be at least 4")
        if not 0.0 <= self.p_noise < 1.0:
            raise ValueError("p_noise must be in [0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


def action_count(config: EnvConfig) -> int:
    return _ACTION_COUNTS[config.kind]


def obs_dim(config: EnvConfig) -> int:
    return STACK * config.frame_size * config.frame_size


class Observation:
    """Stack of the last 4 frames, oldest first; the agent's input."""

    __slots__ = ("frames",)

    def __init__(self, frames: np.ndarray):
        frames = np.asarray(frames, dtype=float)
        if frames.ndim != 3 or frames.shape[0] != STACK:
            raise ValueError(f"observation needs shape (4, F, F), got {frames.shape}")
        frames = frames.copy()
        frames.setflags(write=False)
        self.frames = frames

    @classmethod
    def initial(cls, frame: np.ndarray) -> "Observation":
        return cls(np.repeat(frame[None, :, :], STACK, axis=0))

    def push(self, frame: np.ndarray) -> "Observation":
        return Observation(np.concatenate([self.frames[1:], frame[None, :, :]], axis=0))

    @property
    def flat(self) -> np.ndarray:
        return self.frames.reshape(-1)

    def __eq__(self, other):
        return isinstance(other, Observation) and np.array_equal(self.frames, other.frames)


@dataclass(eq=False)
class EnvState:
    """Shared fields; concrete games subclass and add their own variables."""

    config: EnvConfig
    frames: np.ndarray  # (4, F, F) history, newest last
    t: int = 0
    done: bool = False

    def observation(self) -> Observation:
        return Observation(self.frames)


@dataclass(eq=False)
class CatchState(EnvState):
    ball_row: int = 0
    ball_col: int = 0
    drift: int = 0
    paddle_col: int = 0

    def __eq__(self, other):
        return (
            isinstance(other, CatchState)
            and self.config == other.config
            and (self.t, self.done, self.ball_row, self.ball_col, self.drift, self.paddle_col)
            == (other.t, other.done, other.ball_row, other.ball_col, other.drift, other.paddle_col)
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(eq=False)
class GridGoalState(EnvState):
    agent_row: int = 0
    agent_col: int = 0
    goal_row: int = 0
    goal_col: int = 0
    rng_state: Optional[dict] = None  # only carried when p_noise > 0

    def __eq__(self, other):
        return (
            isinstance(other, GridGoalState)
            and self.config == other.config
            and (self.t, self.done, self.agent_row, self.agent_col, self.goal_row, self.goal_col)
            == (other.t, other.done, other.agent_row, other.agent_col, other.goal_row, other.goal_col)
            and self.rng_state == other.rng_state
            and np.array_equal(self.frames, other.frames)
        )


def render(state: EnvState) -> np.ndarray:
    """Pure function of the game variables; equal states render equal frames."""
    size = state.config.frame_size
    frame = np.zeros((size, size))
    if isinstance(state, CatchState):
        lo = state.paddle_col - PADDLE_HALF
        frame[size - 1, lo : lo + 2 * PADDLE_HALF + 1] = PADDLE_VALUE
        frame[state.ball_row, state.ball_col] = BALL_VALUE
    elif isinstance(state, GridGoalState):
        frame[state.goal_row, state.goal_col] = GOAL_VALUE
        frame[state.agent_row, state.agent_col] = AGENT_VALUE
    else:  # pragma: no cover - guarded by reset
        raise TypeError(f"unknown state type {type(state)}")
    return frame


def reset(config: EnvConfig, seed: int) -> tuple[EnvState, Observation]:
    """Deterministic initial state; the first frame is replicated 4 times."""
    size = config.frame_size
    rng = derive_rng(seed, f"env-reset-{config.kind}")
    if config.kind == CATCH:
        state = CatchState(
            config=config,
            frames=np.zeros((STACK, size, size)),
            ball_row=0,
            ball_col=int(rng.integers(size)),
            drift=int(rng.integers(-1, 2)),
            paddle_col=size // 2,
        )
    else:
        agent = int(rng.integers(size * size))
        goal = int(rng.integers(size * size - 1))
        if goal >= agent:  # sample goal from the remaining cells
            goal += 1
        step_rng = derive_rng(seed, "env-noise") if config.p_noise > 0 else None
        state = GridGoalState(
            config=config,
            frames=np.zeros((STACK, size, size)),
            agent_row=agent // size,
            agent_col=agent % size,
            goal_row=goal // size,
            goal_col=goal % size,
            rng_state=step_rng.bit_generator.state if step_rng else None,
        )
    frame = render(state)
    state.frames = np.repeat(frame[None, :, :], STACK, axis=0)
    return state, state.observation()


def _shift(frames: np.ndarray, frame: np.ndarray) -> np.ndarray:
    return np.concatenate([frames[1:], frame[None, :, :]], axis=0)


def _step_catch(state: CatchState, action: int) -> tuple[CatchState, float, bool]:
    size = state.config.frame_size
    paddle = min(max(state.paddle_col + (action - 1), PADDLE_HALF), size - 1 - PADDLE_HALF)
    drift = state.drift
    col = state.ball_col + drift
    if col < 0 or col >= size:
        drift = -drift
        col = state.ball_col + drift
    row = state.ball_row + 1
    done = row == size - 1 or state.t + 1 >= state.config.max_steps
    reward = 0.0
    if row == size - 1:
        reward = 1.0 if abs(col - paddle) <= PADDLE_HALF else -1.0
    new = CatchState(
        config=state.config,
        frames=state.frames,  # replaced by caller
        t=state.t + 1,
        done=done,
        ball_row=row,
        ball_col=col,
        drift=drift,
        paddle_col=paddle,
    )
    return new, reward, done


def _step_gridgoal(state: GridGoalState, action: int) -> tuple[GridGoalState, float, bool]:
    size = state.config.frame_size
    rng_state = state.rng_state
    if rng_state is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = rng_state
        if rng.random() < state.config.p_noise:
            action = int(rng.integers(_ACTION_COUNTS[GRIDGOAL]))
        rng_state = rng.bit_generator.state
    dr, dc = {UP: (-1, 0), DOWN: (1, 0), G_LEFT: (0, -1), G_RIGHT: (0, 1)}[action]
    row = min(max(state.agent_row + dr, 0), size - 1)
    col = min(max(state.agent_col + dc, 0), size - 1)
    reached = row == state.goal_row and col == state.goal_col
    done = reached or state.t + 1 >= state.config.max_steps
    reward = 1.0 if reached else 0.0
    new = GridGoalState(
        config=state.config,
        frames=state.frames,
        t=state.t + 1,
        done=done,
        agent_row=row,
        agent_col=col,
        goal_row=state.goal_row,
        goal_col=state.goal_col,
        rng_state=rng_state,
    )
    return new, reward, done


def step(state: EnvState, action: int) -> tuple[EnvState, Observation, float, bool]:
    """Advance one step; returns (new_state, observation, reward, done)."""
    if state.done:
        raise RuntimeError("step() called on a finished episode")
    n_actions = _ACTION_COUNTS[state.config.kind]
    if not 0 <= action < n_actions:
        raise ValueError(f"action {action} outside 0..{n_actions - 1}")
    if isinstance(state, CatchState):
        new, reward, done = _step_catch(state, action)
    else:
        new, reward, done = _step_gridgoal(state, action)
    new.frames = _shift(state.frames, render(new))
    return new, new.observation(), reward, done


def optimal_catch_action(state: CatchState) -> int:
    """Hand-coded reference policy: move the paddle toward the ball column."""
    if state.ball_col < state.paddle_col:
        return LEFT
    if state.ball_col > state.paddle_col:
        return RIGHT
    return STAY


@dataclass
class EpisodeRecord:
    observations: list  # observation each action was taken from
    actions: list
    rewards: list
    final_observation: Observation
    episode_return: float = field(init=False)
    length: int = field(init=False)

    def __post_init__(self):
        if not len(self.observations) == len(self.actions) == len(self.rewards):
            raise ValueError("per-step lists must align")
        self.episode_return = float(sum(self.rewards))
        self.length = len(self.actions)


def play_episode(
    config: EnvConfig, seed: int, choose_action: Callable[[EnvState, Observation], int]
) -> EpisodeRecord:
    state, obs = reset(config, seed)
    observations, actions, rewards = [], [], []
    done = False
    while not done:
        a = choose_action(state, obs)
        observations.append(obs)
        state, obs, reward, done = step(state, a)
        actions.append(a)
        rewards.append(reward)
    return EpisodeRecord(observations, actions, rewards, obs)


def snapshot(state: EnvState) -> bytes:
    """Serialize the full state (frames, counters, rng) into a checksummed blob."""
    payload: dict = {
        "kind": state.config.kind,
        "config": {
            "frame_size": state.config.frame_size,
            "p_noise": state.config.p_noise,
            "max_steps": state.config.max_steps,
        },
        "t": state.t,
        "done": state.done,
        "frames": state.frames.tolist(),
    }
    if isinstance(state, CatchState):
        payload["game"] = {
            "ball_row": state.ball_row,
            "ball_col": state.ball_col,
            "drift": state.drift,
            "paddle_col": state.paddle_col,
        }
    else:
        payload["game"] = {
            "agent_row": state.agent_row,
            "agent_col": state.agent_col,
            "goal_row": state.goal_row,
            "goal_col": state.goal_col,
        }
        payload["rng"] = state.rng_state
    body = json.dumps(payload, sort_keys=True).encode("utf-8")
    return (
        _SNAP_MAGIC
        + struct.pack("<HQ", _SNAP_VERSION, len(body))
        + body
        + hashlib.sha256(body).digest()
    )


def restore(blob: bytes) -> EnvState:
    header = len(_SNAP_MAGIC) + 10
    if len(blob) < header or blob[: len(_SNAP_MAGIC)] != _SNAP_MAGIC:
        raise SnapshotError("not a snapshot blob")
    version, length = struct.unpack("<HQ", blob[len(_SNAP_MAGIC) : header])
    if version != _SNAP_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if len(blob) != header + length + 32:
        raise SnapshotError("snapshot blob truncated or padded")
    body = blob[header : header + length]
    if hashlib.sha256(body).digest() != blob[header + length :]:
        raise SnapshotError("snapshot checksum mismatch")
    try:
        payload = json.loads(body.decode("utf-8"))
        config = EnvConfig(kind=payload["kind"], **payload["config"])
        frames = np.array(payload["frames"], dtype=float)
        game = payload["game"]
        if config.kind == CATCH:
            return CatchState(
                config=config, frames=frames, t=payload["t"], done=payload["done"], **game
            )
        return GridGoalState(
            config=config,
            frames=frames,
            t=payload["t"],
            done=payload["done"],
            rng_state=payload["rng"],
            **game,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot payload: {exc}") from exc
