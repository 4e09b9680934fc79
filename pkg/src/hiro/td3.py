"""TD3 learner: twin critics, target-policy smoothing, delayed actor and target updates.

Used unchanged for both hierarchy levels.  The lower level simply feeds
``concat(state, goal)`` as its state input.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .nn import (AdamState, Mlp, adam_step, backward_from_cache, forward,
                 forward_with_cache, soft_update)

CHECKPOINT_MAGIC = b"HIROTD31"


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    # multiplies the bootstrapped target row-wise (importance weights); None means 1
    target_weights: np.ndarray = None

    def __len__(self):
        return len(self.states)

    def tiled(self, k):
        tile = lambda x: None if x is None else np.concatenate([x] * k)
        return Batch(*(tile(getattr(self, f)) for f in
                       ("states", "actions", "rewards", "next_states", "terminals",
                        "target_weights")))


class Td3Agent:
    """Deterministic actor with twin critics and their target copies.

    ``policy_noise`` and ``noise_clip`` are fractions of the half action range
    (TD3's 0.2 and 0.5 for a unit range).  ``exploration_sigma`` is absolute.
    """

    def __init__(self, state_dim, action_dim, action_low, action_high, rng,
                 hidden=(64, 64), gamma=0.99, tau=0.005, actor_lr=1e-4, critic_lr=1e-3,
                 policy_noise=0.2, noise_clip=0.5, actor_delay=2, exploration_sigma=1.0):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.action_low = np.broadcast_to(np.asarray(action_low, float), (action_dim,)).copy()
        self.action_high = np.broadcast_to(np.asarray(action_high, float), (action_dim,)).copy()
        half = 0.5 * (self.action_high - self.action_low)
        self.gamma = gamma
        self.tau = tau
        self.policy_sigma = policy_noise * half
        self.noise_clip = noise_clip * half
        self.actor_delay = int(actor_delay)
        self.exploration_sigma = exploration_sigma
        hidden = tuple(hidden)

        self.actor = Mlp.initialized((state_dim,) + hidden + (action_dim,), rng,
                                     (self.action_low, self.action_high))
        critic_sizes = (state_dim + action_dim,) + hidden + (1,)
        self.critic1 = Mlp.initialized(critic_sizes, rng)
        self.critic2 = Mlp.initialized(critic_sizes, rng)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = AdamState.for_params(self.actor, actor_lr)
        self.critic1_opt = AdamState.for_params(self.critic1, critic_lr)
        self.critic2_opt = AdamState.for_params(self.critic2, critic_lr)
        self.critic_updates = 0
        self.frozen = False

    # -- acting -------------------------------------------------------------

    def clip_action(self, a):
        return np.clip(a, self.action_low, self.action_high)

    def select_action(self, state_input, explore=False, rng=None):
        a = forward(self.actor, state_input)
        if explore and self.exploration_sigma > 0:
            a = a + rng.normal(0.0, self.exploration_sigma, size=a.shape)
        return self.clip_action(a)

    # -- learning -----------------------------------------------------------

    def _q(self, critic, states, actions):
        return forward(critic, np.concatenate([states, actions], axis=-1))[..., 0]

    def critic_targets(self, rewards, next_states, terminals, rng, target_weights=None):
        a = forward(self.actor_target, next_states)
        noise = rng.normal(0.0, 1.0, size=a.shape) * self.policy_sigma
        a = self.clip_action(a + np.clip(noise, -self.noise_clip, self.noise_clip))
        q = np.minimum(self._q(self.critic1_target, next_states, a),
                       self._q(self.critic2_target, next_states, a))
        y = rewards + self.gamma * (1.0 - terminals) * q
        if target_weights is not None:
            y = target_weights * y
        return y

    def critic_target(self, reward, next_state_input, terminal, rng):
        y = self.critic_targets(np.array([reward], float), np.atleast_2d(next_state_input),
                                np.array([float(terminal)]), rng)
        return float(y[0])

    def train_critics(self, batch, rng):
        """One Adam step on both critics; returns the loss before the step."""
        y = self.critic_targets(batch.rewards, batch.next_states, batch.terminals, rng,
                                batch.target_weights)
        x = np.concatenate([batch.states, batch.actions], axis=1)
        n = len(batch)
        loss = 0.0
        for critic, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q, cache = forward_with_cache(critic, x)
            err = q[:, 0] - y
            loss += 0.5 * float(np.mean(err * err))
            if not np.isfinite(loss):
                raise NumericError("critic loss is not finite")
            grad, _ = backward_from_cache(critic, cache, (err / n)[:, None])
            if not self.frozen:
                adam_step(opt, critic, grad)
        return loss

    def train_actor(self, batch):
        """One ascent step on ``mean Q1(s, actor(s))``; returns that mean before the step."""
        states = batch.states
        n = len(states)
        a, actor_cache = forward_with_cache(self.actor, states)
        q, q_cache = forward_with_cache(self.critic1, np.concatenate([states, a], axis=1))
        _, dx = backward_from_cache(self.critic1, q_cache, np.full((n, 1), -1.0 / n),
                                    want_params=False)
        grad, _ = backward_from_cache(self.actor, actor_cache, dx[:, self.state_dim:])
        if not self.frozen:
            adam_step(self.actor_opt, self.actor, grad)
        return float(np.mean(q))

    def update_targets(self):
        soft_update(self.actor_target, self.actor, self.tau)
        soft_update(self.critic1_target, self.critic1, self.tau)
        soft_update(self.critic2_target, self.critic2, self.tau)

    def update(self, batch, rng):
        """Critic step, plus actor step and target averaging every ``actor_delay`` calls."""
        out = {"critic_loss": self.train_critics(batch, rng)}
        self.critic_updates += 1
        if self.critic_updates % self.actor_delay == 0:
            out["actor_q"] = self.train_actor(batch)
            if not self.frozen:
                self.update_targets()
        return out

    # -- checkpointing ------------------------------------------------------

    def networks(self):
        return [self.actor, self.actor_target, self.critic1, self.critic1_target,
                self.critic2, self.critic2_target]

    def optimizers(self):
        return [self.actor_opt, self.critic1_opt, self.critic2_opt]

    def save(self, path):
        """Binary dump: magic, version, six networks, then the three Adam states."""
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + struct.pack("<IQ", 1, self.critic_updates))
            for net in self.networks():
                fh.write(struct.pack("<I", len(net.layer_sizes)))
                fh.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
                fh.write(net.flat.astype("<f8").tobytes())
            for opt in self.optimizers():
                fh.write(struct.pack("<Qd", opt.step_count, opt.learning_rate))
                fh.write(opt.first_moment.astype("<f8").tobytes())
                fh.write(opt.second_moment.astype("<f8").tobytes())

    def load(self, path):
        """Restore parameters saved by :meth:`save` into an agent of the same shape."""
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != CHECKPOINT_MAGIC:
            raise InvalidArgumentError("not a TD3 checkpoint")
        version, self.critic_updates = struct.unpack_from("<IQ", blob, 8)
        if version != 1:
            raise InvalidArgumentError(f"unsupported checkpoint version {version}")
        pos = 8 + struct.calcsize("<IQ")
        for net in self.networks():
            (n,) = struct.unpack_from("<I", blob, pos)
            sizes = struct.unpack_from(f"<{n}I", blob, pos + 4)
            pos += 4 + 4 * n
            if tuple(sizes) != net.layer_sizes:
                raise InvalidArgumentError("checkpoint network shape mismatch")
            net.flat[...] = np.frombuffer(blob, "<f8", net.flat.size, pos)
            pos += 8 * net.flat.size
        for opt in self.optimizers():
            opt.step_count, opt.learning_rate = struct.unpack_from("<Qd", blob, pos)
            pos += struct.calcsize("<Qd")
            k = opt.first_moment.size
            opt.first_moment[...] = np.frombuffer(blob, "<f8", k, pos)
            opt.second_moment[...] = np.frombuffer(blob, "<f8", k, pos + 8 * k)
            pos += 16 * k
