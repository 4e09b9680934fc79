import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiro.correction import (WEIGHT_CLAMP, CorrectionStrategy, action_log_likelihood,
                             candidate_goals, goal_sequences, importance_objective,
                             importance_weights, relabel, relabel_importance_relabel,
                             relabel_max_likelihood, relabel_model_based, segment_rows)
from hiro.errors import InvalidArgumentError, PreconditionError
from hiro.goals import GoalSpace, project
from hiro.nn import Mlp, forward
from hiro.replay import HighSegment

from oracles import gaussian_logpdf_noconst, relabel_loglik, scalar_forward

SPACE = GoalSpace((0, 1), (10.0, 10.0))
DS, DA = 4, 2
ML = CorrectionStrategy("max_likelihood")


def lower_actor(rng, hidden=8):
    return Mlp.initialized((DS + SPACE.dim, hidden, DA), rng, (-np.ones(DA), np.ones(DA)))


def scalar_actor(net):
    return lambda s, g: scalar_forward(net.weights, net.biases, s + g, net.out_low, net.out_high)


def rollout_segment(rng, behavior, length, sigma=0.5, goal=None):
    """Synthetic segment: states drift, actions come from ``behavior`` plus Gaussian noise."""
    goal = rng.uniform(-10, 10, 2) if goal is None else goal
    s = rng.normal(size=DS) * 3
    states, actions, logp = [], [], []
    g = goal
    for _ in range(length):
        mu = forward(behavior, np.concatenate([s, g]))
        a = np.clip(mu + rng.normal(size=DA) * sigma, -1, 1)
        states.append(s)
        actions.append(a)
        logp.append(gaussian_logpdf_noconst(a, mu, sigma))
        s2 = s + np.r_[a, rng.normal(size=DS - DA) * 0.1]
        g = project(s, SPACE) + g - project(s2, SPACE)
        s = s2
    return HighSegment(np.array(states), goal, np.array(actions), float(rng.normal()), s,
                       False, sigma, np.array(logp))


def test_candidate_set_layout():
    rng = np.random.default_rng(0)
    seg = rollout_segment(rng, lower_actor(rng), 10)
    rows = segment_rows([seg])
    cands = candidate_goals(rows, SPACE, ML, rng)[0]
    assert cands.shape == (10, 2)
    assert np.array_equal(cands[0], seg.original_goal)
    delta = project(seg.final_state, SPACE) - project(seg.states[0], SPACE)
    np.testing.assert_array_equal(cands[1], SPACE.clip(delta))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), spread=st.floats(0.1, 40.0))
def test_candidates_always_within_range(seed, spread):
    rng = np.random.default_rng(seed)
    seg = rollout_segment(rng, lower_actor(rng), 5)
    seg.final_state = seg.final_state * spread
    cands = candidate_goals(segment_rows([seg]), SPACE, ML, rng)
    assert cands.shape == (1, 10, 2) and SPACE.contains(cands)


def test_candidate_strategy_validation():
    with pytest.raises(InvalidArgumentError):
        CorrectionStrategy("max_likelihood", candidate_count=1)
    with pytest.raises(InvalidArgumentError):
        CorrectionStrategy("bogus")
    assert CorrectionStrategy("transition_pg").model_scale == 0.1
    assert CorrectionStrategy("model_based").model_scale == 0.5
    np.testing.assert_allclose(ML.candidate_sigma(SPACE), [5.0, 5.0])


def test_exact_action_has_zero_log_likelihood():
    rng = np.random.default_rng(1)
    net = lower_actor(rng)
    s, g = rng.normal(size=DS), np.array([1.0, -2.0])
    a = forward(net, np.concatenate([s, g]))
    seg = HighSegment(s[None], g, a[None], 0.0, s, False, 0.3)
    ll = action_log_likelihood(net, segment_rows([seg]), g[None, None], SPACE)
    assert ll[0, 0] == 0.0


def test_doubling_residuals_quadruples_log_likelihood():
    rng = np.random.default_rng(2)
    net = lower_actor(rng)
    seg = rollout_segment(rng, net, 6)
    rows = segment_rows([seg])
    goals = rows["original_goal"][:, None]
    mu = forward(net, np.concatenate([seg.states, goal_sequences(rows, goals, SPACE)[0, 0]], 1))
    doubled = dict(rows)
    doubled["actions"] = (mu + 2 * (seg.actions - mu))[None]
    base = action_log_likelihood(net, rows, goals, SPACE)[0, 0]
    assert action_log_likelihood(net, doubled, goals, SPACE)[0, 0] == pytest.approx(4 * base, rel=1e-12)


def test_log_likelihood_matches_scalar_oracle_including_short_segments():
    rng = np.random.default_rng(3)
    net = lower_actor(rng)
    segs = [rollout_segment(rng, lower_actor(rng), n) for n in (10, 4, 1, 10, 7)]
    rows = segment_rows(segs)
    goals = rng.uniform(-10, 10, (len(segs), 2, 2))
    ll = action_log_likelihood(net, rows, goals, SPACE)
    for i, seg in enumerate(segs):
        ref = [relabel_loglik(scalar_actor(net), seg.states, seg.actions, g, SPACE.dims,
                              seg.behavior_sigma) for g in goals[i]]
        np.testing.assert_allclose(ll[i], ref, rtol=1e-10, atol=1e-10)
        assert (ll[i, 0] > ll[i, 1]) == (ref[0] > ref[1])


def test_goal_sequences_conserve_absolute_target():
    rng = np.random.default_rng(4)
    seg = rollout_segment(rng, lower_actor(rng), 10)
    rows = segment_rows([seg])
    cands = candidate_goals(rows, SPACE, ML, rng)
    seq = goal_sequences(rows, cands, SPACE)[0]
    anchor = project(seg.states[0], SPACE) + cands[0]
    for i in range(10):
        np.testing.assert_allclose(project(seg.states[i], SPACE) + seq[:, i], anchor, atol=1e-12)


def test_goal_ignoring_actor_keeps_original():
    rng = np.random.default_rng(5)
    net = lower_actor(rng)
    net.weights[0][:, DS:] = 0.0  # no path from the goal inputs
    segs = [rollout_segment(rng, net, 10) for _ in range(20)]
    rows = segment_rows(segs)
    rel = relabel_max_likelihood(net, rows, SPACE, ML, rng)
    assert np.all(rel.chosen == 0)
    np.testing.assert_array_equal(rel.goals, rows["original_goal"])


def test_no_correction_returns_original_unmodified():
    rng = np.random.default_rng(6)
    net = lower_actor(rng)
    rows = segment_rows([rollout_segment(rng, lower_actor(rng), 10) for _ in range(8)])
    rel = relabel(CorrectionStrategy("none"), net, rows, SPACE, rng, 0.1)
    np.testing.assert_array_equal(rel.goals, rows["original_goal"])
    assert rel.differs_fraction(rows["original_goal"]) == 0.0
    np.testing.assert_allclose(rel.scaled_rewards, 0.1 * rows["env_reward_sum"])


def test_relabeled_goal_never_less_likely_than_original():
    rng = np.random.default_rng(7)
    net = lower_actor(rng)
    rows = segment_rows([rollout_segment(rng, lower_actor(rng), 10) for _ in range(64)])
    rel = relabel_max_likelihood(net, rows, SPACE, ML, rng)
    ll_new = action_log_likelihood(net, rows, rel.goals[:, None], SPACE)[:, 0]
    ll_old = action_log_likelihood(net, rows, rows["original_goal"][:, None], SPACE)[:, 0]
    assert np.all(ll_new >= ll_old)
    assert SPACE.contains(rel.goals)


def test_relabel_matches_brute_force_argmax():
    rng = np.random.default_rng(8)
    net = lower_actor(rng)
    segs = [rollout_segment(rng, lower_actor(rng), int(rng.integers(1, 11))) for _ in range(40)]
    rows = segment_rows(segs)
    rel = relabel_max_likelihood(net, rows, SPACE, ML, np.random.default_rng(99))
    cands = candidate_goals(rows, SPACE, ML, np.random.default_rng(99))
    for i, seg in enumerate(segs):
        scores = [relabel_loglik(scalar_actor(net), seg.states, seg.actions, c, SPACE.dims,
                                 seg.behavior_sigma) for c in cands[i]]
        assert rel.chosen[i] == int(np.argmax(scores))
        np.testing.assert_array_equal(rel.goals[i], cands[i, rel.chosen[i]])


def test_relabel_is_pure_given_rng_seed():
    rng = np.random.default_rng(9)
    net = lower_actor(rng)
    rows = segment_rows([rollout_segment(rng, lower_actor(rng), 10) for _ in range(16)])
    a = relabel(ML, net, rows, SPACE, np.random.default_rng(3))
    b = relabel(ML, net, rows, SPACE, np.random.default_rng(3))
    np.testing.assert_array_equal(a.goals, b.goals)


# -- alternatives -----------------------------------------------------------------

def test_direct_importance_weight_one_when_policies_coincide():
    rng = np.random.default_rng(10)
    net = lower_actor(rng)
    rows = segment_rows([rollout_segment(rng, net, 10) for _ in range(16)])
    rel = relabel(CorrectionStrategy("direct_importance"), net, rows, SPACE, rng)
    np.testing.assert_allclose(rel.importance_weights, 1.0, rtol=1e-12)
    np.testing.assert_array_equal(rel.goals, rows["original_goal"])


def test_direct_importance_weight_matches_density_ratio_oracle():
    rng = np.random.default_rng(11)
    behavior, current = lower_actor(rng), lower_actor(rng)
    seg = rollout_segment(rng, behavior, 2, sigma=0.8)
    w = importance_weights(current, segment_rows([seg]), SPACE)[0]
    log_num = relabel_loglik(scalar_actor(current), seg.states, seg.actions, seg.original_goal,
                             SPACE.dims, 0.8)
    log_den = relabel_loglik(scalar_actor(behavior), seg.states, seg.actions, seg.original_goal,
                             SPACE.dims, 0.8)
    expected = np.clip(np.exp(log_num - log_den), *WEIGHT_CLAMP)
    assert w > 0
    assert w == pytest.approx(expected, rel=1e-9)


def test_direct_importance_weights_positive_and_clamped():
    rng = np.random.default_rng(12)
    rows = segment_rows([rollout_segment(rng, lower_actor(rng), 10, sigma=0.05) for _ in range(32)])
    w = importance_weights(lower_actor(rng), rows, SPACE)
    assert np.all(w >= WEIGHT_CLAMP[0]) and np.all(w <= WEIGHT_CLAMP[1])


def test_importance_needs_stored_densities():
    rng = np.random.default_rng(13)
    seg = rollout_segment(rng, lower_actor(rng), 3)
    seg.behavior_logp = None
    with pytest.raises(PreconditionError):
        importance_weights(lower_actor(rng), segment_rows([seg]), SPACE)


def test_importance_relabel_zero_drift_keeps_original():
    rng = np.random.default_rng(14)
    net = lower_actor(rng)
    rows = segment_rows([rollout_segment(rng, net, 10) for _ in range(16)])
    strat = CorrectionStrategy("importance_relabel")
    cands = candidate_goals(rows, SPACE, strat, rng)
    obj = importance_objective(net, rows, cands, SPACE)
    np.testing.assert_allclose(obj[:, 0], 0.0, atol=1e-18)
    rel = relabel_importance_relabel(net, rows, SPACE, strat, rng, candidates=cands)
    np.testing.assert_array_equal(rel.goals, rows["original_goal"])


def test_importance_relabel_matches_brute_force_minimizer():
    rng = np.random.default_rng(15)
    behavior, current = lower_actor(rng), lower_actor(rng)
    segs = [rollout_segment(rng, behavior, 10) for _ in range(20)]
    rows = segment_rows(segs)
    strat = CorrectionStrategy("importance_relabel")
    cands = candidate_goals(rows, SPACE, strat, rng)
    rel = relabel_importance_relabel(current, rows, SPACE, strat, rng, candidates=cands)
    for i, seg in enumerate(segs):
        objective = [(relabel_loglik(scalar_actor(current), seg.states, seg.actions, c,
                                     SPACE.dims, seg.behavior_sigma) - seg.behavior_logp.sum()) ** 2
                     for c in cands[i]]
        assert min(objective) >= 0
        assert rel.chosen[i] == int(np.argmin(objective))


def test_model_based_zero_sigma_is_state_delta():
    rng = np.random.default_rng(16)
    segs = [rollout_segment(rng, lower_actor(rng), 10) for _ in range(8)]
    rows = segment_rows(segs)
    rel = relabel_model_based(rows, SPACE, rng, 0.0)
    delta = project(rows["final_state"], SPACE) - project(rows["states"][:, 0], SPACE)
    np.testing.assert_array_equal(rel.goals, SPACE.clip(delta))


def test_model_based_samples_center_on_delta():
    rng = np.random.default_rng(17)
    seg = rollout_segment(rng, lower_actor(rng), 10)
    seg.final_state = seg.states[0] + np.r_[1.0, -2.0, 0.0, 0.0]
    rows = segment_rows([seg] * 10_000)
    sigma = CorrectionStrategy("model_based").model_sigma(SPACE)
    rel = relabel_model_based(rows, SPACE, rng, sigma)
    assert SPACE.contains(rel.goals)
    assert np.all(np.abs(rel.goals.mean(0) - [1.0, -2.0]) < 5 * sigma / 100)


def test_transition_pg_uses_narrow_sigma():
    rng = np.random.default_rng(18)
    seg = rollout_segment(rng, lower_actor(rng), 10)
    seg.final_state = seg.states[0].copy()
    rows = segment_rows([seg] * 4000)
    rel = relabel(CorrectionStrategy("transition_pg"), None, rows, SPACE, rng)
    assert rel.goals.std(0) == pytest.approx([1.0, 1.0], rel=0.05)
