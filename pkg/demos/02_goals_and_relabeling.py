"""Relative goals, the goal transition, and relabeling a stale high-level goal."""

import numpy as np

from hiro.correction import CorrectionStrategy, action_log_likelihood, relabel, segment_rows
from hiro.goals import GoalSpace, goal_transition, intrinsic_reward
from hiro.nn import Mlp, forward
from hiro.replay import HighSegment

space = GoalSpace(dims=(0, 1), limit=10.0)

# the goal (4, 4) asks to move 4 right and 4 up; after moving by (1, 1) it becomes (3, 3)
s, s2 = np.zeros(2), np.ones(2)
print("carried goal:", goal_transition(s, [4.0, 4.0], s2, space))
print("reward for missing by (3, 4):", intrinsic_reward(np.zeros(2), [3.0, 4.0], np.zeros(2), space))

# A toy lower level that steers straight at its goal: a = clip(0.3 * g).
ds = 2
actor = Mlp((ds + 2, 2), output_range=(-np.ones(2), np.ones(2)))
actor.weights[0][:, ds:] = 0.3 * np.eye(2)

# Collect a 10-step segment while the agent was asked for (8, -2) ...
rng = np.random.default_rng(1)
state, goal = np.zeros(ds), np.array([8.0, -2.0])
states, actions = [], []
g = goal
for _ in range(10):
    a = forward(actor, np.concatenate([state, g]))
    states.append(state); actions.append(a)
    nxt = state + a
    g = goal_transition(state, g, nxt, space)
    state = nxt
seg = HighSegment(np.array(states), goal, np.array(actions), -12.0, state, False, 1.0)

# ... then pretend the stored goal was stale: it says (-5, 5), which the actions contradict.
seg.original_goal = np.array([-5.0, 5.0])
rows = segment_rows([seg])
rel = relabel(CorrectionStrategy("max_likelihood"), actor, rows, space, rng)
print("stored goal   ", seg.original_goal)
print("relabeled goal", rel.goals[0], "(candidate", rel.chosen[0], ")")
print("log-likelihoods: stored %.3f, relabeled %.3f" % (
    action_log_likelihood(actor, rows, rows["original_goal"][:, None], space)[0, 0],
    action_log_likelihood(actor, rows, rel.goals[:, None], space)[0, 0]))
