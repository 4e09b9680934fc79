"""Goal space, goal transition, and goal-conditioned rewards.

A goal is a desired *relative* change of the goal-space coordinates of the
state.  All functions broadcast over leading batch axes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class GoalSpace:
    """Which state entries make up a goal, and the legal goal box ``[-limit, limit]``."""

    dims: tuple
    limit: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        limit = np.broadcast_to(np.asarray(self.limit, dtype=np.float64), (len(dims),))
        if len(set(dims)) != len(dims) or any(d < 0 for d in dims):
            raise InvalidArgumentError(f"goal dims must be distinct non-negative indices: {dims}")
        if not np.all(np.isfinite(limit)) or np.any(limit <= 0):
            raise InvalidArgumentError("goal range must be finite and positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "limit", tuple(float(x) for x in limit))

    @property
    def dim(self):
        return len(self.dims)

    @property
    def low(self):
        return -np.asarray(self.limit)

    @property
    def high(self):
        return np.asarray(self.limit)

    def clip(self, goal):
        return np.clip(goal, self.low, self.high)

    def contains(self, goal):
        g = np.asarray(goal)
        return bool(np.all((g >= self.low) & (g <= self.high)))


def project(state, space):
    state = np.asarray(state, dtype=np.float64)
    if max(space.dims) >= state.shape[-1]:
        raise InvalidArgumentError(
            f"goal dim {max(space.dims)} out of range for state of size {state.shape[-1]}")
    return state[..., list(space.dims)]


def goal_transition(s_t, g_t, s_next, space):
    """Keep the absolute target fixed while the state moves: ``s + g - s'``."""
    return project(s_t, space) + np.asarray(g_t, dtype=np.float64) - project(s_next, space)


def intrinsic_reward(s_t, g_t, s_next, space):
    """Negative distance between where the goal pointed and where the agent ended up."""
    return -_norm(goal_transition(s_t, g_t, s_next, space))


def _norm(x):
    # scaled by the largest entry so tiny nonzero residuals do not underflow to 0
    m = np.max(np.abs(x), axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return m[..., 0] * np.linalg.norm(x / safe, axis=-1)


def cosine_reward(s_t, g_t, s_next, space):
    """Cosine between realized movement and the goal direction; 0 if either is zero."""
    move = project(s_next, space) - project(s_t, space)
    g = np.asarray(g_t, dtype=np.float64)
    denom = np.linalg.norm(move, axis=-1) * np.linalg.norm(g, axis=-1)
    dot = np.sum(move * g, axis=-1)
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, dot / safe, 0.0)
