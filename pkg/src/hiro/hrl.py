"""Two-level training loop and its ablations.

A :class:`HiroTrainer` owns one environment, the two TD3 agents (or a single
flat agent for ``no_hrl``), both replay buffers and the per-component random
streams of a run.

Ablations:

``hiro``               goal-conditioned hierarchy, high level corrected by ``correction``
``no_correction``      as ``hiro`` with stored goals used verbatim
``pretrain_low``       lower level pre-trained on Gaussian goals, frozen, run deterministically
``relabel_low``        as ``hiro`` plus random goal relabeling of lower-level minibatches
``no_hrl``             one flat TD3 agent on the environment reward
``fun_cosine``         lower level rewarded by cosine similarity instead of distance
``fun_transition_pg``  high-level goals replaced by a narrow Gaussian around the state delta
"""

import copy
from dataclasses import asdict, dataclass

import numpy as np

from .correction import CorrectionStrategy, relabel
from .errors import ConfigError
from .goals import cosine_reward, goal_transition, intrinsic_reward
from .nn import forward
from .replay import HighSegment, LowTransition, RingBuffer, SegmentCodec
from .rng import substream
from .td3 import Batch, Td3Agent

ABLATIONS = ("hiro", "no_correction", "pretrain_low", "relabel_low", "no_hrl",
             "fun_cosine", "fun_transition_pg")


@dataclass
class HiroConfig:
    c: int = 10
    low_reward_scale: float = 1.0
    high_reward_scale: float = 0.1
    low_train_every: int = 1
    high_train_every: int = 10
    eval_every: int = 10_000
    eval_episodes: int = 20
    total_steps: int = 300_000
    batch_size: int = 128
    sigma_low: float = 1.0
    sigma_high: float = 1.0
    ablation: str = "hiro"
    correction: str = "max_likelihood"
    pretrain_steps: int = 100_000
    relabel_low_prob: float = 0.5
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_size: int = 200_000
    hidden: tuple = (64, 64)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        positive_ints = ("c", "low_train_every", "high_train_every", "eval_every",
                         "eval_episodes", "batch_size", "buffer_size")
        for key in positive_ints:
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be >= 1")
        for key in ("total_steps", "pretrain_steps"):
            if int(getattr(self, key)) < 0:
                raise ConfigError(key, "must be >= 0")
        for key in ("low_reward_scale", "high_reward_scale", "actor_lr", "critic_lr"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        for key in ("sigma_low", "sigma_high"):
            if not getattr(self, key) >= 0:
                raise ConfigError(key, "must be >= 0")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma", "must lie in [0, 1)")
        if not 0 <= self.tau <= 1:
            raise ConfigError("tau", "must lie in [0, 1]")
        if not 0 <= self.relabel_low_prob <= 1:
            raise ConfigError("relabel_low_prob", "must lie in [0, 1]")
        if self.ablation not in ABLATIONS:
            raise ConfigError("ablation", f"expected one of {ABLATIONS}")
        try:
            CorrectionStrategy(self.correction)
        except ValueError as exc:
            raise ConfigError("correction", str(exc)) from None
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden", "needs at least one positive layer size")

    def strategy(self):
        kind = {"no_correction": "none", "pretrain_low": "none",
                "fun_transition_pg": "transition_pg"}.get(self.ablation, self.correction)
        return CorrectionStrategy(kind)

    def as_dict(self):
        return asdict(self)


def relabel_low_goals(rows, space, prob, rng, reward_fn=intrinsic_reward, reward_scale=1.0):
    """Replace each minibatch goal with probability ``prob`` by a uniform draw from the goal box.

    Reward and next goal of replaced rows are recomputed from their stored states.
    """
    rows = dict(rows)
    n = len(rows["goal"])
    pick = rng.random(n) < prob
    fresh = rng.uniform(space.low, space.high, size=(n, space.dim))
    goal = np.where(pick[:, None], fresh, rows["goal"])
    s, s2 = rows["state"], rows["next_state"]
    rows["goal"] = goal
    rows["next_goal"] = np.where(pick[:, None], goal_transition(s, goal, s2, space),
                                 rows["next_goal"])
    rows["intrinsic_reward"] = np.where(pick, reward_scale * reward_fn(s, goal, s2, space),
                                        rows["intrinsic_reward"])
    return rows


class HiroTrainer:
    """Everything belonging to one seeded training run."""

    def __init__(self, config, env, seed=0):
        self.config = config
        self.env = env
        # evaluation may run mid-episode, so it gets its own instance
        self.eval_env = copy.deepcopy(env)
        self.seed = seed
        self.space = env.goal_space
        self.rng_env = substream(seed, "env")
        self.rng_explore = substream(seed, "explore")
        self.rng_replay = substream(seed, "replay")
        self.rng_correction = substream(seed, "correction")
        self.rng_eval = substream(seed, "eval")
        self.rng_eval_env = substream(seed, "eval_env")
        self.rng_pretrain = substream(seed, "pretrain")
        self.strategy = config.strategy()
        self.reward_fn = cosine_reward if config.ablation == "fun_cosine" else intrinsic_reward
        self.flat = config.ablation == "no_hrl"
        init_rng = substream(seed, "agents")
        common = dict(hidden=config.hidden, gamma=config.gamma, tau=config.tau,
                      actor_lr=config.actor_lr, critic_lr=config.critic_lr)
        goal_dim = 0 if self.flat else self.space.dim
        self.low = Td3Agent(env.obs_dim + goal_dim, env.action_dim, env.action_low,
                            env.action_high, init_rng, exploration_sigma=config.sigma_low,
                            **common)
        self.high = None
        if not self.flat:
            self.high = Td3Agent(env.obs_dim, self.space.dim, self.space.low, self.space.high,
                                 init_rng, exploration_sigma=config.sigma_high, **common)
        self.low_buffer = RingBuffer(config.buffer_size)
        self.high_buffer = RingBuffer(config.buffer_size, SegmentCodec(config.c))
        self.env_steps = 0
        self.episodes = 0
        self.low_frozen = False
        self._correction_stats = []

    # -- acting ---------------------------------------------------------------

    def _low_input(self, obs, goal):
        return obs if self.flat else np.concatenate([obs, goal])

    def _low_act(self, obs, goal, explore):
        mu = forward(self.low.actor, self._low_input(obs, goal))
        if explore and not self.low_frozen and self.config.sigma_low > 0:
            a = self.low.clip_action(mu + self.rng_explore.normal(0.0, self.config.sigma_low, mu.shape))
        else:
            a = mu
        sigma = self.config.sigma_low if self.config.sigma_low > 0 else 1.0
        logp = -float(np.sum((a - mu) ** 2)) / (2.0 * sigma * sigma)
        return a, logp

    def _high_act(self, obs, explore):
        return self.high.select_action(obs, explore, self.rng_explore)

    # -- one episode ----------------------------------------------------------

    def run_episode(self, train=True, on_step=None, step_limit=None):
        """Collect one episode into the buffers, training after every env step.

        ``step_limit`` cuts the episode short once ``env_steps`` reaches it; the
        last segment is then stored as non-terminal.  Returns the undiscounted
        environment return.
        """
        cfg, env = self.config, self.env
        obs = env.reset(self.rng_env)
        goal = np.zeros(0)
        seg = None
        ret = 0.0
        t = 0
        done = False
        while not done:
            if not self.flat and t % cfg.c == 0:
                if seg is not None:
                    self._store_segment(seg, obs, terminal=False)
                goal = self._high_act(obs, explore=True)
                seg = {"states": [], "actions": [], "reward": 0.0, "logp": [], "goal": goal}
            action, logp = self._low_act(obs, goal, explore=True)
            res = env.step(action)
            nxt = res.observation
            done = res.terminal
            ret += res.reward
            if self.flat:
                self.low_buffer.insert(LowTransition(
                    obs, goal, action, cfg.high_reward_scale * res.reward, nxt, goal, done))
                next_goal = goal
            else:
                r = cfg.low_reward_scale * float(self.reward_fn(obs, goal, nxt, self.space))
                next_goal = goal_transition(obs, goal, nxt, self.space)
                if not self.low_frozen:
                    self.low_buffer.insert(LowTransition(obs, goal, action, r, nxt, next_goal, done))
                seg["states"].append(obs)
                seg["actions"].append(action)
                seg["reward"] += res.reward
                seg["logp"].append(logp)
            self.env_steps += 1
            t += 1
            if train:
                self.train_tick(self.env_steps)
            if on_step is not None:
                on_step(self.env_steps)
            obs, goal = nxt, next_goal
            if step_limit is not None and self.env_steps >= step_limit:
                break
        if seg is not None:
            self._store_segment(seg, obs, terminal=done)
        self.episodes += 1
        return ret

    def _store_segment(self, seg, final_obs, terminal):
        self.high_buffer.insert(HighSegment(
            states=np.array(seg["states"]), original_goal=seg["goal"],
            actions=np.array(seg["actions"]), env_reward_sum=seg["reward"],
            final_state=final_obs, terminal=terminal,
            behavior_sigma=self.config.sigma_low if self.config.sigma_low > 0 else 1.0,
            behavior_logp=np.array(seg["logp"])))

    # -- learning -------------------------------------------------------------

    def _low_batch(self, rows):
        if self.flat:
            return Batch(rows["state"], rows["action"], rows["intrinsic_reward"],
                         rows["next_state"], rows["terminal"])
        return Batch(np.concatenate([rows["state"], rows["goal"]], axis=1), rows["action"],
                     rows["intrinsic_reward"],
                     np.concatenate([rows["next_state"], rows["next_goal"]], axis=1),
                     rows["terminal"])

    def train_low(self):
        cfg = self.config
        rows = self.low_buffer.sample_rows(cfg.batch_size, self.rng_replay)
        if cfg.ablation == "relabel_low":
            rows = relabel_low_goals(rows, self.space, cfg.relabel_low_prob, self.rng_replay,
                                     self.reward_fn, cfg.low_reward_scale)
        return self.low.update(self._low_batch(rows), self.rng_replay)

    def high_batch(self):
        """A relabeled high-level minibatch and the fraction of goals the correction changed."""
        cfg = self.config
        rows = self.high_buffer.sample_rows(cfg.batch_size, self.rng_replay)
        rel = relabel(self.strategy, self.low.actor, rows, self.space, self.rng_correction,
                      cfg.high_reward_scale)
        weights = rel.importance_weights if self.strategy.kind == "direct_importance" else None
        batch = Batch(rel.states, rel.goals, rel.scaled_rewards, rel.final_states,
                      rel.terminals, weights)
        return batch, rel.differs_fraction(rows["original_goal"])

    def train_high(self):
        batch, differs = self.high_batch()
        self._correction_stats.append(differs)
        return self.high.update(batch, self.rng_replay)

    def train_tick(self, step):
        cfg = self.config
        losses = {}
        if (step % cfg.low_train_every == 0 and len(self.low_buffer) > 0
                and not self.low_frozen):
            losses["low"] = self.train_low()
        if (not self.flat and step % cfg.high_train_every == 0
                and len(self.high_buffer) > 0):
            losses["high"] = self.train_high()
        return losses

    def pop_correction_stats(self):
        stats, self._correction_stats = self._correction_stats, []
        if not stats:
            return None
        return {"updates": len(stats), "relabel_differs_fraction": float(np.mean(stats))}

    def pretrain_lower(self, steps=None):
        """Train the lower level alone on Gaussian goals, then freeze it.

        Goals are drawn from ``N(0, (limit/2)^2)`` per dim, clipped to the
        goal box, and re-drawn every ``c`` steps.  Returns the env steps used.
        """
        cfg, env, space = self.config, self.env, self.space
        steps = cfg.pretrain_steps if steps is None else steps
        rng = self.rng_pretrain
        done_steps = 0
        while done_steps < steps:
            obs = env.reset(self.rng_env)
            t = 0
            done = False
            while not done and done_steps < steps:
                if t % cfg.c == 0:
                    goal = space.clip(rng.normal(size=space.dim) * (0.5 * space.high))
                action, _ = self._low_act(obs, goal, explore=True)
                res = env.step(action)
                nxt = res.observation
                done = res.terminal
                r = cfg.low_reward_scale * float(self.reward_fn(obs, goal, nxt, space))
                next_goal = goal_transition(obs, goal, nxt, space)
                self.low_buffer.insert(LowTransition(obs, goal, action, r, nxt, next_goal, done))
                done_steps += 1
                if done_steps % cfg.low_train_every == 0:
                    self.train_low()
                obs, goal = nxt, next_goal
                t += 1
        self.freeze_lower()
        return done_steps

    def freeze_lower(self):
        self.low_frozen = True
        self.low.frozen = True

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, episodes=None):
        """Deterministic rollouts at both levels; never touches the replay buffers.

        Navigation tasks are scored at the task's evaluation target.  Returns
        ``{"success_rate", "mean_return", "score"}`` where ``score`` is the
        mean return for gather and the success rate otherwise.
        """
        cfg, env = self.config, self.eval_env
        episodes = cfg.eval_episodes if episodes is None else episodes
        successes, returns = [], []
        for _ in range(episodes):
            obs = env.reset(self.rng_eval_env, target=env.spec.eval_target)
            goal = np.zeros(0)
            ret, t, done, res = 0.0, 0, False, None
            while not done:
                if not self.flat and t % cfg.c == 0:
                    goal = self._high_act(obs, explore=False)
                action = forward(self.low.actor, self._low_input(obs, goal))
                res = env.step(action)
                ret += res.reward
                done = res.terminal
                if not self.flat:
                    goal = goal_transition(obs, goal, res.observation, self.space)
                obs = res.observation
                t += 1
            successes.append(res.success)
            returns.append(ret)
        success_rate = float(np.mean(successes))
        mean_return = float(np.mean(returns))
        score = mean_return if env.spec.gather else success_rate
        return {"success_rate": success_rate, "mean_return": mean_return, "score": score}


def lower_reach_distances(trainer, env, goals, horizon):
    """Final distance to ``start + goal`` after running the frozen lower level for ``horizon`` steps.

    The goal is carried along by the goal transition, so the lower policy sees
    the remaining offset at every step.
    """
    space = trainer.space
    out = []
    for g in goals:
        obs = env.reset(trainer.rng_eval_env)
        start = obs[list(space.dims)].copy()
        goal = np.asarray(g, dtype=np.float64)
        for _ in range(horizon):
            action = forward(trainer.low.actor, np.concatenate([obs, goal]))
            nxt = env.step(action).observation
            goal = goal_transition(obs, goal, nxt, space)
            obs = nxt
        out.append(float(np.linalg.norm(obs[list(space.dims)] - (start + g))))
    return np.array(out)
