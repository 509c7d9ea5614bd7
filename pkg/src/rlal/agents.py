"""The two agent families under attack: a replay Q-learner and an actor-critic.

Both expose the same surface -- an action distribution and a greedy
action -- so the attack code never branches on agent kind. For the
value-based agent the distribution is softmax(Q / T); for the
policy-gradient agent the network carries action logits plus a scalar
value head at the last output index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .envs import EnvConfig, Observation, action_count, obs_dim, play_episode, reset, step
from .seeding import derive_rng, derive_seed

VALUE_BASED = "value_based"
POLICY_GRADIENT = "policy_gradient"


class TrainingDivergedError(RuntimeError):
    def __init__(self, episode: int):
        super().__init__(f"non-finite loss at episode {episode}")
        self.episode = episode


@dataclass
class AgentPolicy:
    net: nn.Network
    kind: str
    action_count: int
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in (VALUE_BASED, POLICY_GRADIENT):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        expected = self.action_count + (1 if self.kind == POLICY_GRADIENT else 0)
        if self.net.output_dim != expected:
            raise ValueError(
                f"net output_dim {self.net.output_dim} != {expected} for {self.kind}"
            )


@dataclass
class TrainConfig:
    episodes: int = 600
    lr: float = 5e-3
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    entropy_weight: float = 0.01
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 250
    hidden_dims: tuple = (64,)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        self.hidden_dims = tuple(self.hidden_dims)


def _as_input(obs) -> np.ndarray:
    return obs.flat if isinstance(obs, Observation) else np.asarray(obs, dtype=float)


def action_logits(agent: AgentPolicy, obs) -> np.ndarray:
    """Raw preference scores: Q-values for value agents, policy logits otherwise."""
    out = nn.forward(agent.net, _as_input(obs))
    return out if agent.kind == VALUE_BASED else out[: agent.action_count]


def action_dist(agent: AgentPolicy, obs) -> np.ndarray:
    if agent.kind == VALUE_BASED:
        return nn.softmax(action_logits(agent, obs), agent.temperature)
    return nn.softmax(action_logits(agent, obs))


def act_greedy(agent: AgentPolicy, obs) -> int:
    """Argmax of the action distribution; ties break to the lowest index."""
    return int(np.argmax(action_dist(agent, obs)))


def evaluate(agent: AgentPolicy, env_cfg: EnvConfig, episodes: int, seed: int) -> float:
    """Mean undiscounted return of the greedy policy over fresh episodes."""
    total = 0.0
    for ep in range(episodes):
        record = play_episode(
            env_cfg, derive_seed(seed, "eval-episode", ep), lambda s, o: act_greedy(agent, o)
        )
        total += record.episode_return
    return total / episodes


def _value_net(env_cfg: EnvConfig, cfg: TrainConfig) -> nn.Network:
    dims = [obs_dim(env_cfg), *cfg.hidden_dims, action_count(env_cfg)]
    acts = ["relu"] * len(cfg.hidden_dims) + ["identity"]
    return nn.init_network(dims, acts, seed=derive_seed(cfg.seed, "value-init"))


def train_value_agent(env_cfg: EnvConfig, cfg: TrainConfig) -> AgentPolicy:
    """One-step Q-learning with uniform replay and a periodically synced target net."""
    n_actions = action_count(env_cfg)
    net = _value_net(env_cfg, cfg)
    target = net
    rng = derive_rng(cfg.seed, "value-train")
    replay: list[tuple] = []
    updates = 0
    anneal_span = max(1, cfg.episodes // 2)
    for ep in range(cfg.episodes):
        epsilon = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * min(1.0, ep / anneal_span)
        state, obs = reset(env_cfg, derive_seed(cfg.seed, "value-episode", ep))
        done = False
        while not done:
            x = obs.flat
            if rng.random() < epsilon:
                a = int(rng.integers(n_actions))
            else:
                a = int(np.argmax(nn.forward(net, x)))
            state, obs, reward, done = step(state, a)
            if len(replay) >= cfg.replay_capacity:
                replay.pop(0)
            replay.append((x, a, reward, obs.flat, done))
            if len(replay) < cfg.batch_size:
                continue
            idx = rng.integers(len(replay), size=cfg.batch_size)
            xs = np.stack([replay[i][0] for i in idx])
            acts = np.array([replay[i][1] for i in idx])
            rewards = np.array([replay[i][2] for i in idx])
            nxt = np.stack([replay[i][3] for i in idx])
            terminal = np.array([replay[i][4] for i in idx], dtype=float)
            targets = rewards + cfg.gamma * nn.forward_batch(target, nxt).max(axis=1) * (1 - terminal)
            q = nn.forward_batch(net, xs)
            taken = q[np.arange(cfg.batch_size), acts]
            loss = float(np.mean((taken - targets) ** 2))
            if not np.isfinite(loss):
                raise TrainingDivergedError(ep)
            grad_out = np.zeros_like(q)
            grad_out[np.arange(cfg.batch_size), acts] = 2 * (taken - targets) / cfg.batch_size
            param_grads, _ = nn.backward_batch(net, xs, grad_out)
            net = nn.sgd_step(net, param_grads, cfg.lr)
            updates += 1
            if updates % cfg.target_sync == 0:
                target = net
    return AgentPolicy(net, VALUE_BASED, n_actions)


def train_pg_agent(env_cfg: EnvConfig, cfg: TrainConfig) -> AgentPolicy:
    """Single-worker advantage actor-critic with a shared trunk and value head."""
    n_actions = action_count(env_cfg)
    dims = [obs_dim(env_cfg), *cfg.hidden_dims, n_actions + 1]
    acts = ["relu"] * len(cfg.hidden_dims) + ["identity"]
    net = nn.init_network(dims, acts, seed=derive_seed(cfg.seed, "pg-init"))
    rng = derive_rng(cfg.seed, "pg-train")
    for ep in range(cfg.episodes):
        state, obs = reset(env_cfg, derive_seed(cfg.seed, "pg-episode", ep))
        xs, taken, rewards = [], [], []
        done = False
        while not done:
            x = obs.flat
            logits = nn.forward(net, x)
            probs = nn.softmax(logits[:n_actions])
            a = int(rng.choice(n_actions, p=probs))
            state, obs, reward, done = step(state, a)
            xs.append(x)
            taken.append(a)
            rewards.append(reward)
        returns = np.zeros(len(rewards))
        acc = 0.0
        for i in reversed(range(len(rewards))):
            acc = rewards[i] + cfg.gamma * acc
            returns[i] = acc
        batch = np.stack(xs)
        outputs = nn.forward_batch(net, batch)
        logits = outputs[:, :n_actions]
        values = outputs[:, n_actions]
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        advantage = returns - values
        log_p = np.log(probs)
        entropy = -(probs * log_p).sum(axis=1)
        loss = float(
            -np.mean(log_p[np.arange(len(taken)), taken] * advantage)
            - cfg.entropy_weight * np.mean(entropy)
            + 0.5 * np.mean(advantage**2)
        )
        if not np.isfinite(loss):
            raise TrainingDivergedError(ep)
        one_hot = np.zeros_like(probs)
        one_hot[np.arange(len(taken)), taken] = 1.0
        grad_logits = (probs - one_hot) * advantage[:, None]
        grad_logits += cfg.entropy_weight * probs * (log_p + entropy[:, None])
        grad_out = np.zeros_like(outputs)
        grad_out[:, :n_actions] = grad_logits / len(taken)
        grad_out[:, n_actions] = (values - returns) / len(taken)
        param_grads, _ = nn.backward_batch(net, batch, grad_out)
        net = nn.sgd_step(net, param_grads, cfg.lr)
    return AgentPolicy(net, POLICY_GRADIENT, n_actions)


def save_agent(agent: AgentPolicy, path, env_cfg: EnvConfig, train_seed: int) -> list[Path]:
    """Write the network file plus a text metadata side-car; returns both paths."""
    path = Path(path)
    nn.save_network(agent.net, path)
    meta = {
        "kind": agent.kind,
        "action_count": agent.action_count,
        "temperature": agent.temperature,
        "env_kind": env_cfg.kind,
        "frame_size": env_cfg.frame_size,
        "train_seed": train_seed,
    }
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return [path, meta_path]


def load_agent(path) -> tuple[AgentPolicy, dict]:
    path = Path(path)
    net = nn.load_network(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    agent = AgentPolicy(
        net, meta["kind"], meta["action_count"], temperature=meta.get("temperature", 1.0)
    )
    return agent, meta
