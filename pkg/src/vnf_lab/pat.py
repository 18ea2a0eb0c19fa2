"""Parameterized-action twin-critic learner.

A discrete actor scores the K+1 placement targets, a parameter actor maps
(state, chosen target) to bounded CPU/memory deltas, and two critics rate
(state, target one-hot, deltas). Targets are lagged copies blended softly
after every update. The discrete actor trains through a softmax relaxation
of its scores fed to the first critic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .env import ParamAction
from . import nn

HIDDEN = (128, 64)


@dataclass(frozen=True)
class PatConfig:
    gamma: float = 0.99
    tau: float = 5e-3
    lr: float = 1e-3
    eps: float = 0.8
    eps_min: float = 0.05
    eps_decay: float = 1e-3
    sigma_noise: float = 0.2
    clip_c: float = 0.5
    clip_c_min: float = 0.1
    beta: float = 0.2
    gamma_max: float = 100.0
    batch_size: int = 128
    buffer_capacity: int = 100_000
    warmup_size: int = 5_000
    updates_per_epoch: int = 1

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.eps_min <= self.eps <= 1:
            raise ValueError("need 0 <= eps_min <= eps <= 1")
        if self.eps_decay < 0 or self.sigma_noise < 0:
            raise ValueError("eps_decay and sigma_noise must be >= 0")
        if not 0 <= self.clip_c_min <= self.clip_c:
            raise ValueError("need 0 <= clip_c_min <= clip_c")
        if self.gamma_max <= 0:
            raise ValueError("gamma_max must be > 0")
        if min(self.batch_size, self.buffer_capacity, self.warmup_size,
               self.updates_per_epoch) < 1:
            raise ValueError("batch/buffer/warmup/updates sizes must be >= 1")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer_capacity")


@dataclass
class Transition:
    """Replay record; reward is the negated training cost."""

    state: np.ndarray
    action_index: int
    params: np.ndarray
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring with uniform with-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, param_dim: int = 2):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.params = np.zeros((capacity, param_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.size = 0
        self.cursor = 0

    def add(self, tr: Transition):
        i = self.cursor
        self.states[i] = tr.state
        self.actions[i] = tr.action_index
        self.params[i] = tr.params
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.states[idx], self.actions[idx], self.params[idx],
                self.rewards[idx], self.next_states[idx])


def one_hot(indices, width: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((indices.shape[0], width))
    out[np.arange(indices.shape[0]), indices] = 1.0
    return out


def ascend_param_actor(actor: nn.Mlp, adam: nn.AdamState, critic: nn.Mlp,
                       states: np.ndarray, onehots: np.ndarray,
                       param_scale=None) -> np.ndarray:
    """One ascent step of the parameter actor through a frozen critic.

    param_scale, when given, is the box bound the critic's param inputs are
    normalized by; the returned chain rule stays in raw units."""
    b = states.shape[0]
    xp = np.concatenate([states, onehots], axis=1)
    p, cache_a = nn.forward_cached(actor, xp)
    p_in = p if param_scale is None else p / param_scale
    xc = np.concatenate([states, onehots, p_in], axis=1)
    _, cache_c = nn.forward_cached(critic, xc)
    gout = np.full((b, 1), 1.0 / b)
    gin = nn.input_grad(critic, cache_c, gout)
    gp = gin[:, xp.shape[1]:]
    if param_scale is not None:
        gp = gp / param_scale
    grads, _ = nn.backward(actor, cache_a, -gp)
    adam.step(actor, grads)
    return p


class PatAgent:
    """Twin-critic learner over parameterized placement actions."""

    def __init__(self, state_dim: int, n_targets: int, param_scale,
                 cfg: PatConfig | None = None, seed=0):
        self.cfg = cfg or PatConfig()
        self.state_dim = int(state_dim)
        self.n_targets = int(n_targets)
        self.scale = np.asarray(param_scale, dtype=np.float64)
        if self.scale.shape != (2,) or (self.scale <= 0).any():
            raise ValueError("param_scale must be two positive bounds")
        # critics see deltas at half-unit scale so the one-hot target coords
        # keep the larger footing; raw-unit gradients recovered by chain rule
        self.p_feat = 2.0 * self.scale
        self.rng = np.random.default_rng(seed)

        s, a = self.state_dim, self.n_targets
        self.actor_action = nn.Mlp((s, *HIDDEN, a))
        self.actor_param = nn.Mlp((s + a, *HIDDEN, 2), head_scale=self.scale)
        self.critic_1 = nn.Mlp((s + a + 2, *HIDDEN, 1))
        self.critic_2 = nn.Mlp((s + a + 2, *HIDDEN, 1))
        for net in (self.actor_action, self.actor_param, self.critic_1, self.critic_2):
            nn.gaussian_init(net, self.rng)
        self.t_actor_action = nn.clone(self.actor_action)
        self.t_actor_param = nn.clone(self.actor_param)
        self.t_critic_1 = nn.clone(self.critic_1)
        self.t_critic_2 = nn.clone(self.critic_2)

        self.adam_actor_action = nn.AdamState(self.actor_action, lr=self.cfg.lr)
        self.adam_actor_param = nn.AdamState(self.actor_param, lr=self.cfg.lr)
        self.adam_critic_1 = nn.AdamState(self.critic_1, lr=self.cfg.lr)
        self.adam_critic_2 = nn.AdamState(self.critic_2, lr=self.cfg.lr)

        self.buffer = ReplayBuffer(self.cfg.buffer_capacity, self.state_dim)
        self.updates = 0
        self.eval_mode = False

    # schedules derive from the update counter so they are exact
    @property
    def eps(self) -> float:
        return max(self.cfg.eps - self.updates * self.cfg.eps_decay, self.cfg.eps_min)

    @property
    def clip_c(self) -> float:
        return max(self.cfg.clip_c - self.updates * self.cfg.eps_decay, self.cfg.clip_c_min)

    @property
    def cloud_action(self) -> int:
        return self.n_targets - 1

    def set_eval(self, flag: bool):
        self.eval_mode = bool(flag)

    def _clipped_noise(self, shape) -> np.ndarray:
        w = self.rng.normal(0.0, self.cfg.sigma_noise, size=shape) * self.scale
        bound = self.clip_c * self.scale
        return np.clip(w, -bound, bound)

    def _critic_input(self, states, onehots, params) -> np.ndarray:
        return np.concatenate([states, onehots, params / self.p_feat], axis=1)

    def select(self, features, vnf: int = 0, state=None, has_user: bool = True) -> ParamAction:
        """Agent-callback: epsilon-greedy target, noisy bounded deltas."""
        s = np.asarray(features, dtype=np.float64)
        explore = not self.eval_mode
        if explore and self.rng.random() < self.eps:
            a = int(self.rng.integers(self.n_targets))
        else:
            a = int(np.argmax(nn.forward(self.actor_action, s)))
        if a == self.cloud_action:
            return ParamAction(a, 0.0, 0.0)
        x = np.concatenate([s, one_hot([a], self.n_targets)[0]])
        p = nn.forward(self.actor_param, x)
        if explore:
            p = p + self._clipped_noise(2)
        p = np.clip(p, -self.scale, self.scale)
        return ParamAction(a, float(p[0]), float(p[1]))

    def store(self, tr: Transition):
        self.buffer.add(tr)

    def compute_targets(self, batch):
        """Bootstrapped values: reward plus the discounted lesser target critic
        at the target policy's smoothed action."""
        _, _, _, rewards, next_states = batch
        b = next_states.shape[0]
        scores = nn.forward(self.t_actor_action, next_states)
        a_next = np.argmax(scores, axis=1)
        oh = one_hot(a_next, self.n_targets)
        p_next = nn.forward(self.t_actor_param, np.concatenate([next_states, oh], axis=1))
        p_next = np.clip(p_next + self._clipped_noise((b, 2)), -self.scale, self.scale)
        p_next[a_next == self.cloud_action] = 0.0  # offloads carry no parameters
        xc = self._critic_input(next_states, oh, p_next)
        q1 = nn.forward(self.t_critic_1, xc)[:, 0]
        q2 = nn.forward(self.t_critic_2, xc)[:, 0]
        y = rewards + self.cfg.gamma * np.minimum(q1, q2)
        info = {"a_next": a_next, "p_next": p_next, "q1": q1, "q2": q2}
        return y, info

    def update_critics(self, batch, y):
        states, actions, params, _, _ = batch
        b = states.shape[0]
        xc = self._critic_input(states, one_hot(actions, self.n_targets), params)
        losses = []
        for net, adam in ((self.critic_1, self.adam_critic_1),
                          (self.critic_2, self.adam_critic_2)):
            q, cache = nn.forward_cached(net, xc)
            resid = q[:, 0] - y
            losses.append(float(np.mean(resid * resid)))
            grads, _ = nn.backward(net, cache, (2.0 / b) * resid[:, None])
            adam.step(net, grads)
        return tuple(losses)

    def update_actors(self, batch):
        """Ascend the first critic: deltas through the parameter head, target
        scores through a softmax relaxation at the stored deltas."""
        states, actions, params, _, _ = batch
        b = states.shape[0]
        oh = one_hot(actions, self.n_targets)
        ascend_param_actor(self.actor_param, self.adam_actor_param,
                           self.critic_1, states, oh, param_scale=self.p_feat)
        scores, cache_a = nn.forward_cached(self.actor_action, states)
        soft = nn.softmax(scores)
        xc = self._critic_input(states, soft, params)
        _, cache_c = nn.forward_cached(self.critic_1, xc)
        gout = np.full((b, 1), 1.0 / b)
        gin = nn.input_grad(self.critic_1, cache_c, gout)
        ga = gin[:, self.state_dim:self.state_dim + self.n_targets]
        gscores = soft * (ga - (ga * soft).sum(axis=1, keepdims=True))
        grads, _ = nn.backward(self.actor_action, cache_a, -gscores)
        self.adam_actor_action.step(self.actor_action, grads)

    def train_step(self) -> dict:
        """One optimization round; a no-op until the warmup fill is reached."""
        if self.buffer.size < self.cfg.warmup_size:
            return {"trained": False, "eps": self.eps, "clip_c": self.clip_c}
        batch = self.buffer.sample(self.cfg.batch_size, self.rng)
        y, _ = self.compute_targets(batch)
        l1, l2 = self.update_critics(batch, y)
        self.update_actors(batch)
        for target, live in ((self.t_actor_action, self.actor_action),
                             (self.t_actor_param, self.actor_param),
                             (self.t_critic_1, self.critic_1),
                             (self.t_critic_2, self.critic_2)):
            nn.soft_update(target, live, self.cfg.tau)
        self.updates += 1
        return {"trained": True, "critic_loss_1": l1, "critic_loss_2": l2,
                "eps": self.eps, "clip_c": self.clip_c}

    # ------------------------------------------------------------------
    # checkpointing

    _NETS = ("actor_action", "actor_param", "critic_1", "critic_2",
             "t_actor_action", "t_actor_param", "t_critic_1", "t_critic_2")
    _ADAMS = ("adam_actor_action", "adam_actor_param", "adam_critic_1", "adam_critic_2")

    def save(self, path):
        data = {}
        for name in self._NETS:
            data.update(nn.mlp_state(getattr(self, name), name))
        for name in self._ADAMS:
            data.update(nn.adam_state(getattr(self, name), name))
        meta = {"kind": "pat", "state_dim": self.state_dim,
                "n_targets": self.n_targets, "scale": self.scale.tolist(),
                "updates": self.updates, "cfg": asdict(self.cfg)}
        data["meta"] = np.array(json.dumps(meta))
        np.savez(path, **data)

    @classmethod
    def load(cls, path, seed=0) -> "PatAgent":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            agent = cls(meta["state_dim"], meta["n_targets"], meta["scale"],
                        PatConfig(**meta["cfg"]), seed=seed)
            for name in cls._NETS:
                setattr(agent, name, nn.mlp_from_state(data, name))
            for name, net in zip(cls._ADAMS,
                                 (agent.actor_action, agent.actor_param,
                                  agent.critic_1, agent.critic_2)):
                setattr(agent, name, nn.adam_from_state(data, name, net, agent.cfg.lr))
            agent.updates = int(meta["updates"])
        return agent
