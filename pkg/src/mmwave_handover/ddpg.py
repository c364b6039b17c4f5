"""Deterministic policy-gradient learner for backup BS selection.

The actor maps the encoded network state to a score matrix over (UE, BS);
scores decode to one backup BS per handover UE. Because the slot reward is
a sum of per-UE terms, both networks are weight-shared across UEs: the
actor scores each UE from its own feature block (plus the per-BS load
summary), and the critic values the joint action as the sum of per-UE
contributions, each trained against that UE's own reward component. The
summed critic still satisfies the usual one-step recursion
y = r + gamma * Q'(s', mu'(s')).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .env import NetworkState
from .nets import Adam, CriticNet, Mlp, clip_gradients, soft_update

CHECKPOINT_MAGIC = b"MMWHOCK1"
CHECKPOINT_VERSION = 2


@dataclass
class Transition:
    state: np.ndarray      # encoded s^t
    action: np.ndarray     # executed score matrix a^t, flattened
    reward: float          # slot reward (scaled)
    next_state: np.ndarray
    done: bool
    reward_per_ue: np.ndarray | None = None  # per-UE reward split (scaled)


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform minibatch sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, n_ue: int = 1):
        self.capacity = capacity
        self.n_ue = n_ue
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.rewards_per_ue = np.zeros((capacity, n_ue))
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._head = 0

    def add(self, tr: Transition):
        i = self._head
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        if tr.reward_per_ue is None:
            self.rewards_per_ue[i] = tr.reward / self.n_ue
        else:
            self.rewards_per_ue[i] = tr.reward_per_ue
        self.next_states[i] = tr.next_state
        self.dones[i] = tr.done
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample without replacement within the minibatch."""
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.rewards_per_ue[idx],
            self.next_states[idx],
            self.dones[idx],
        )


class OUNoise:
    """Mean-reverting exploration noise: x += theta * (mu - x) + sigma * N(0, 1)."""

    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0):
        self.dim = dim
        self.theta = theta
        self.sigma = sigma
        self.mu = mu
        self.state = np.full(dim, mu)

    def reset(self):
        self.state = np.full(self.dim, self.mu)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        self.state = self.state + self.theta * (self.mu - self.state) \
            + self.sigma * rng.standard_normal(self.dim)
        return self.state


def encode_state(state: NetworkState, cfg: ScenarioConfig) -> np.ndarray:
    """Flatten a network state into a [0, 1] feature vector.

    Per UE: x/width, y/depth, one-hot serving BS, capacity and share, then
    the K-2 stored rates; everything clipped to [0, 1].
    """
    n_ue, n_bs = cfg.n_ue, cfg.n_bs
    per_ue = 2 + n_bs + 2 + (cfg.window_k - 2)
    out = np.zeros(n_ue * per_ue)
    for i in range(n_ue):
        base = i * per_ue
        loc = state.locations[i]
        out[base] = loc.x / cfg.zone_width_m
        out[base + 1] = loc.y / cfg.zone_depth_m
        out[base + 2 + int(state.serving[i])] = 1.0
        out[base + 2 + n_bs] = state.capacity_gbps[i] / cfg.ref_capacity_gbps
        out[base + 3 + n_bs] = state.share[i]
        if cfg.window_k > 2:
            out[base + 4 + n_bs:base + per_ue] = state.rate_history[i] / cfg.ref_rate_gbps
    return np.clip(out, 0.0, 1.0)


def decode_action(
    scores: np.ndarray,
    serving: np.ndarray,
    handover_mask: np.ndarray,
    n_bs: int,
) -> np.ndarray:
    """Backup BS per UE: argmax of that UE's scores, serving BS outside U_h.

    Ties resolve to the lowest BS index (numpy argmax convention).
    """
    table = np.asarray(scores).reshape(-1, n_bs)
    best = np.argmax(table, axis=1)
    return np.where(handover_mask, best, serving).astype(int)


def assignment_scores(backup: np.ndarray, n_bs: int) -> np.ndarray:
    """Score matrix that decodes exactly to `backup`: +1 chosen, -1 elsewhere.

    Used to store the executed decision in the replay buffer.
    """
    backup = np.asarray(backup, dtype=int)
    m = -np.ones((backup.shape[0], n_bs))
    m[np.arange(backup.shape[0]), backup] = 1.0
    return m.ravel()


class DdpgAgent:
    """Actor-critic pair with target copies, replay and exploration noise.

    With n_ue > 1 both networks are shared across UEs: the actor maps each
    UE's local view to its BS scores, and the critic sums shared per-UE
    value heads. With n_ue == 1 this reduces to a plain actor-critic over
    the full state/action.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        seed: int | None = None,
        state_dim: int | None = None,
        action_dim: int | None = None,
    ):
        self.cfg = cfg
        if seed is None:
            seed = cfg.seed
        self.init_seed = int(seed)
        rng = np.random.default_rng([self.init_seed, 77])
        if state_dim is None:
            self.n_ue = cfg.n_ue
            self.n_bs = cfg.n_bs
            self.per_ue = 2 + cfg.n_bs + 2 + (cfg.window_k - 2)
            self.state_dim = cfg.n_ue * self.per_ue
            self.action_dim = cfg.n_ue * cfg.n_bs
            # local view: own block plus the per-BS share load summary
            self.local_dim = self.per_ue + cfg.n_bs
        else:
            self.n_ue = 1
            self.state_dim = state_dim
            self.action_dim = action_dim if action_dim is not None else 1
            self.n_bs = self.action_dim
            self.per_ue = state_dim
            self.local_dim = state_dim
        self.actor = Mlp(
            [self.local_dim, *cfg.actor_hidden, self.n_bs],
            ["relu"] * len(cfg.actor_hidden) + ["tanh"],
            rng,
        )
        self.actor.rescale_output_layer(3e-3, rng)
        self.critic = CriticNet(self.local_dim, self.n_bs, cfg.critic_hidden, rng)
        self.critic.rescale_output_layer(3e-3, rng)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.actor_opt = Adam(self.actor.parameters(), cfg.actor_lr)
        self.critic_opt = Adam(self.critic.parameters(), cfg.critic_lr)
        self.buffer = ReplayBuffer(
            cfg.buffer_capacity, self.state_dim, self.action_dim, self.n_ue
        )
        self.noise = OUNoise(self.action_dim, cfg.ou_theta, cfg.ou_sigma)
        self.train_episodes_done = 0
        self.best_episode = -1

    # ---------- feature plumbing ----------

    def local_views(self, states: np.ndarray) -> np.ndarray:
        """(batch, state_dim) -> (batch * n_ue, local_dim) per-UE slices.

        Appends the per-BS total allocated share (summed over UEs) so each
        UE sees the current load pattern.
        """
        states = np.atleast_2d(states)
        batch = states.shape[0]
        if self.n_ue == 1:
            return states
        blocks = states.reshape(batch, self.n_ue, self.per_ue)
        onehot = blocks[:, :, 2:2 + self.n_bs]
        share = blocks[:, :, 3 + self.n_bs]
        load = np.einsum("bij,bi->bj", onehot, share)  # (batch, n_bs)
        load = np.repeat(load[:, None, :], self.n_ue, axis=1)
        return np.concatenate([blocks, load], axis=2).reshape(
            batch * self.n_ue, self.local_dim
        )

    # ---------- acting ----------

    def policy_scores(self, states: np.ndarray) -> np.ndarray:
        """(batch, state_dim) -> (batch, action_dim) actor scores."""
        states = np.atleast_2d(states)
        out = self.actor.forward(self.local_views(states))
        return out.reshape(states.shape[0], self.action_dim)

    def _target_scores(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        out = self.target_actor.forward(self.local_views(states))
        return out.reshape(states.shape[0], self.action_dim)

    def act(self, state_vec: np.ndarray, noise_sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
        """Raw scores in [-1, 1]; optionally perturbed by the OU process."""
        scores = self.policy_scores(state_vec[None, :])[0]
        if noise_sigma > 0.0:
            if rng is None:
                raise ValueError("exploration needs an rng")
            self.noise.sigma = noise_sigma
            scores = scores + self.noise.sample(rng)
        return np.clip(scores, -1.0, 1.0)

    # ---------- critic evaluation ----------

    def q_per_ue(self, net: CriticNet, states: np.ndarray, actions: np.ndarray):
        """Per-UE critic terms, shape (batch, n_ue)."""
        states = np.atleast_2d(states)
        actions = np.atleast_2d(actions)
        batch = states.shape[0]
        local = self.local_views(states)
        rows = actions.reshape(batch * self.n_ue, self.n_bs)
        q = net.forward(local, rows)
        return q.reshape(batch, self.n_ue)

    def q_values(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Global Q(s, a): sum of the shared per-UE heads."""
        return self.q_per_ue(self.critic, states, actions).sum(axis=1)

    def critic_target(self, rewards, next_states, dones) -> np.ndarray:
        """y = r + gamma * Q'(s', mu'(s')), with no bootstrap on terminal slots."""
        rewards = np.atleast_1d(np.asarray(rewards, dtype=float))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=float))
        dones = np.atleast_1d(np.asarray(dones, dtype=bool))
        next_actions = self._target_scores(next_states)
        q_next = self.q_per_ue(self.target_critic, next_states, next_actions).sum(axis=1)
        return rewards + self.cfg.gamma * np.where(dones, 0.0, q_next)

    def _per_ue_targets(self, rewards_per_ue, next_states, dones) -> np.ndarray:
        """y_i = r_i + gamma * q'(s'_i, mu'(s'_i)); sums to critic_target."""
        next_actions = self._target_scores(next_states)
        q_next = self.q_per_ue(self.target_critic, next_states, next_actions)
        keep = np.where(dones, 0.0, 1.0)[:, None]
        return rewards_per_ue + self.cfg.gamma * keep * q_next

    # ---------- learning ----------

    def critic_loss(self, states, actions, targets_per_ue) -> float:
        states = np.atleast_2d(states)
        q = self.q_per_ue(self.critic, states, actions)
        targets = np.asarray(targets_per_ue, dtype=float).reshape(q.shape)
        return float(np.mean((q - targets) ** 2))

    def critic_gradients(self, states, actions, targets_per_ue):
        """Analytic gradient of the mean squared per-UE Bellman error."""
        states = np.atleast_2d(states)
        actions = np.atleast_2d(actions)
        batch = states.shape[0]
        targets = np.asarray(targets_per_ue, dtype=float).reshape(batch * self.n_ue)
        local = self.local_views(states)
        rows = actions.reshape(batch * self.n_ue, self.n_bs)
        q, cache = self.critic.forward(local, rows, with_cache=True)
        err = q - targets
        grad_q = 2.0 * err / err.shape[0]
        grads, _ = self.critic.backward(cache, grad_q)
        return grads, float(np.mean(err ** 2))

    def actor_objective(self, states) -> float:
        """Mean global critic value of the actor's own actions."""
        states = np.atleast_2d(states)
        actions = self.policy_scores(states)
        return float(np.mean(self.q_values(states, actions)))

    def actor_gradients(self, states):
        """Analytic gradient of -mean_batch Q(s, mu(s)) w.r.t. actor parameters."""
        states = np.atleast_2d(states)
        batch = states.shape[0]
        local = self.local_views(states)
        rows, a_cache = self.actor.forward(local, with_cache=True)
        q, c_cache = self.critic.forward(local, rows, with_cache=True)
        grad_q = np.full(q.shape, -1.0 / batch)
        _, grad_rows = self.critic.backward(c_cache, grad_q)
        gw, gb, _ = self.actor.backward(a_cache, grad_rows)
        grads = []
        for w, b in zip(gw, gb):
            grads.append(w)
            grads.append(b)
        objective = float(q.reshape(batch, self.n_ue).sum(axis=1).mean())
        return grads, objective

    def train_step(self, rng: np.random.Generator) -> tuple[float, float]:
        """One minibatch update of critic then actor, plus soft target updates."""
        cfg = self.cfg
        states, actions, _rewards, rewards_ue, next_states, dones = self.buffer.sample(
            cfg.batch_size, rng
        )
        targets = self._per_ue_targets(rewards_ue, next_states, dones)
        c_grads, c_loss = self.critic_gradients(states, actions, targets)
        clip_gradients(c_grads, cfg.grad_clip_critic)
        self.critic_opt.step(c_grads)
        a_grads, a_obj = self.actor_gradients(states)
        clip_gradients(a_grads, cfg.grad_clip_actor)
        self.actor_opt.step(a_grads)
        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic, self.critic, cfg.tau)
        return c_loss, a_obj

    # ---------- persistence ----------

    def _arrays(self) -> list[np.ndarray]:
        return self.actor.parameters() + self.critic.parameters() \
            + self.target_actor.parameters() + self.target_critic.parameters()

    def save(self, path: str):
        """Atomic write of a self-describing binary checkpoint (bit-exact)."""
        arrays = self._arrays()
        header = {
            "version": CHECKPOINT_VERSION,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "local_dim": self.local_dim,
            "actor_sizes": self.actor.sizes,
            "actor_activations": self.actor.activations,
            "critic_hidden": list(self.cfg.critic_hidden),
            "shapes": [list(a.shape) for a in arrays],
            "seed": self.init_seed,
            "train_episodes": self.train_episodes_done,
            "n_ue": self.n_ue,
            "n_bs": self.n_bs,
            "window_k": self.cfg.window_k,
        }
        blob = json.dumps(header, sort_keys=True).encode()
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        os.replace(tmp, path)

    def load(self, path: str):
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path} is not a policy checkpoint")
            (blob_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(blob_len))
            if header["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {header['version']}")
            for key, mine in (
                ("state_dim", self.state_dim),
                ("action_dim", self.action_dim),
                ("local_dim", self.local_dim),
                ("n_ue", self.n_ue),
                ("n_bs", self.n_bs),
                ("window_k", self.cfg.window_k),
            ):
                if header[key] != mine:
                    raise ValueError(
                        f"checkpoint {key}={header[key]} incompatible with config {mine}"
                    )
            arrays = self._arrays()
            if len(header["shapes"]) != len(arrays):
                raise ValueError("checkpoint parameter count mismatch")
            for shape, arr in zip(header["shapes"], arrays):
                if tuple(shape) != arr.shape:
                    raise ValueError(f"checkpoint shape {shape} != expected {arr.shape}")
                n_bytes = arr.size * 8
                data = fh.read(n_bytes)
                if len(data) != n_bytes:
                    raise ValueError("checkpoint truncated")
                arr[...] = np.frombuffer(data, dtype="<f8").reshape(arr.shape)
            self.init_seed = int(header["seed"])
            self.train_episodes_done = int(header["train_episodes"])
