"""Relabeling of stored high-level goals against the current lower-level policy.

Every function works on a *segment batch*: the padded row dict produced by
``RingBuffer.sample_rows`` on a segment buffer, with keys ``states (B, c, ds)``,
``actions (B, c, da)``, ``length (B,)``, ``original_goal (B, dg)``,
``final_state (B, ds)``, ``env_reward_sum``, ``terminal``, ``behavior_sigma``
and ``behavior_logp (B, c)``.  Single-segment wrappers convert a
:class:`~hiro.replay.HighSegment` into a batch of one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, PreconditionError
from .goals import goal_transition, project
from .nn import forward
from .replay import SegmentCodec

KINDS = ("none", "max_likelihood", "direct_importance", "importance_relabel",
         "model_based", "transition_pg")

WEIGHT_CLAMP = (1e-3, 1e3)
_CHUNK = 2048


@dataclass
class CorrectionStrategy:
    kind: str = "max_likelihood"
    candidate_count: int = 10
    candidate_scale: float = 0.5  # sigma as a fraction of the half goal range
    model_scale: float = None  # defaults: 0.5 for model_based, 0.1 for transition_pg

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown correction {self.kind!r}; expected one of {KINDS}")
        if self.kind == "max_likelihood" and self.candidate_count < 2:
            raise InvalidArgumentError("max_likelihood needs at least 2 candidates")
        if self.model_scale is None:
            self.model_scale = 0.1 if self.kind == "transition_pg" else 0.5

    def candidate_sigma(self, space):
        return self.candidate_scale * np.asarray(space.limit)

    def model_sigma(self, space):
        return self.model_scale * np.asarray(space.limit)


@dataclass
class RelabeledBatch:
    states: np.ndarray
    goals: np.ndarray
    scaled_rewards: np.ndarray
    final_states: np.ndarray
    terminals: np.ndarray
    importance_weights: np.ndarray
    # index into the candidate set, -1 where no candidate search happened
    chosen: np.ndarray

    def __len__(self):
        return len(self.states)

    def differs_fraction(self, original_goals):
        return float(np.mean(np.any(self.goals != original_goals, axis=-1)))

    def entry(self, i):
        return RelabeledBatchEntry(self.states[i], self.goals[i], float(self.scaled_rewards[i]),
                                   self.final_states[i], bool(self.terminals[i]),
                                   float(self.importance_weights[i]))


@dataclass
class RelabeledBatchEntry:
    state: np.ndarray
    relabeled_goal: np.ndarray
    scaled_reward: float
    final_state: np.ndarray
    terminal: bool
    importance_weight: float = 1.0


def segment_rows(segments):
    """Stack segments into the padded batch layout used below."""
    codec = SegmentCodec(max(len(s) for s in segments))
    rows = [codec.encode(s) for s in segments]
    return {k: np.stack([r[k] for r in rows]) for k in rows[0]}


def _state_delta(rows, space):
    return project(rows["final_state"], space) - project(rows["states"][:, 0], space)


def candidate_goals(rows, space, strategy, rng):
    """``(B, K, dg)`` candidates: original goal, realized delta, then Gaussian draws around it."""
    delta = _state_delta(rows, space)
    n_random = strategy.candidate_count - 2
    sigma = strategy.candidate_sigma(space)
    noise = rng.normal(size=(len(delta), n_random, space.dim)) * sigma
    cands = np.concatenate([rows["original_goal"][:, None], delta[:, None],
                            delta[:, None] + noise], axis=1)
    return space.clip(cands)


def goal_sequences(rows, goals, space):
    """Roll ``goals (B, K, dg)`` through the goal transition along the stored states.

    Returns ``(B, K, c, dg)``; entries past a segment's length are meaningless.
    """
    states = rows["states"]
    c = states.shape[1]
    seq = np.empty(goals.shape[:2] + (c, goals.shape[-1]))
    seq[:, :, 0] = goals
    for i in range(1, c):
        seq[:, :, i] = goal_transition(states[:, None, i - 1], seq[:, :, i - 1],
                                       states[:, None, i], space)
    return seq


def _squared_residuals(lower_actor, rows, goals, space):
    """Masked per-candidate sum of ``||a_i - mu_lo(s_i, g_i)||^2``, shape ``(B, K)``."""
    states, actions = rows["states"], rows["actions"]
    b, c, ds = states.shape
    k = goals.shape[1]
    seq = goal_sequences(rows, goals, space)
    inp = np.concatenate([np.broadcast_to(states[:, None], (b, k, c, ds)), seq], axis=-1)
    flat = inp.reshape(-1, inp.shape[-1])
    # chunked so the hidden activations stay cache-resident
    mu = np.concatenate([forward(lower_actor, flat[i:i + _CHUNK])
                         for i in range(0, len(flat), _CHUNK)]).reshape(b, k, c, -1)
    res = np.sum((actions[:, None] - mu) ** 2, axis=-1)
    mask = np.arange(c)[None, :] < rows["length"][:, None]
    return np.sum(res * mask[:, None, :], axis=-1)


def action_log_likelihood(lower_actor, rows, goals, space):
    """Gaussian log-likelihood (constant dropped) of the stored actions under each goal.

    ``-sum_i ||a_i - mu_lo(s_i, g_i)||^2 / (2 sigma^2)`` with ``sigma`` the
    behavior noise recorded with each segment.  Higher is more likely.
    """
    sigma = rows["behavior_sigma"][:, None]
    return -_squared_residuals(lower_actor, rows, goals, space) / (2.0 * sigma * sigma)


def _stored_logp(rows):
    logp = rows["behavior_logp"]
    mask = np.arange(logp.shape[1])[None, :] < rows["length"][:, None]
    if np.any(np.isnan(logp[mask])):
        raise PreconditionError("segment lacks stored behavior log-densities")
    return np.sum(np.where(mask, logp, 0.0), axis=1)


def _result(rows, goals, reward_scale, weights=None, chosen=None):
    n = len(goals)
    return RelabeledBatch(
        states=rows["states"][:, 0], goals=goals,
        scaled_rewards=reward_scale * rows["env_reward_sum"],
        final_states=rows["final_state"], terminals=rows["terminal"],
        importance_weights=np.ones(n) if weights is None else weights,
        chosen=np.full(n, -1) if chosen is None else chosen)


def relabel_max_likelihood(lower_actor, rows, space, strategy, rng, reward_scale=1.0):
    if strategy.kind == "none":
        return _result(rows, rows["original_goal"].copy(), reward_scale)
    cands = candidate_goals(rows, space, strategy, rng)
    ll = action_log_likelihood(lower_actor, rows, cands, space)
    best = np.argmax(ll, axis=1)  # first maximum, so ties go to the original goal
    return _result(rows, cands[np.arange(len(cands)), best], reward_scale, chosen=best)


def importance_weights(lower_actor, rows, space):
    """Clamped product of current/behavior action densities under the stored goals."""
    current = action_log_likelihood(lower_actor, rows, rows["original_goal"][:, None], space)[:, 0]
    log_w = current - _stored_logp(rows)
    return np.clip(np.exp(np.minimum(log_w, 700.0)), *WEIGHT_CLAMP)


def relabel_direct_importance(lower_actor, rows, space, reward_scale=1.0):
    w = importance_weights(lower_actor, rows, space)
    return _result(rows, rows["original_goal"].copy(), reward_scale, weights=w)


def importance_objective(lower_actor, rows, candidates, space):
    """Squared summed log-ratio per candidate, ``(B, K)``; zero means weight exactly 1."""
    current = action_log_likelihood(lower_actor, rows, candidates, space)
    return (current - _stored_logp(rows)[:, None]) ** 2


def relabel_importance_relabel(lower_actor, rows, space, strategy, rng, reward_scale=1.0,
                               candidates=None):
    if candidates is None:
        candidates = candidate_goals(rows, space, strategy, rng)
    obj = importance_objective(lower_actor, rows, candidates, space)
    best = np.argmin(obj, axis=1)
    return _result(rows, candidates[np.arange(len(candidates)), best], reward_scale, chosen=best)


def relabel_model_based(rows, space, rng, sigma, reward_scale=1.0):
    """Goal drawn around the realized state delta, ``N(delta, sigma^2 I)``, then clipped."""
    delta = _state_delta(rows, space)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (space.dim,))
    goals = space.clip(delta + rng.normal(size=delta.shape) * sigma)
    return _result(rows, goals, reward_scale)


def relabel(strategy, lower_actor, rows, space, rng, reward_scale=1.0):
    """Dispatch on ``strategy.kind``."""
    kind = strategy.kind
    if kind in ("none", "max_likelihood"):
        return relabel_max_likelihood(lower_actor, rows, space, strategy, rng, reward_scale)
    if kind == "direct_importance":
        return relabel_direct_importance(lower_actor, rows, space, reward_scale)
    if kind == "importance_relabel":
        return relabel_importance_relabel(lower_actor, rows, space, strategy, rng, reward_scale)
    return relabel_model_based(rows, space, rng, strategy.model_sigma(space), reward_scale)
