import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hiro.nn import AdamState, Mlp, adam_step, backward, forward
from hiro.td3 import Batch, Td3Agent


def agent(seed=0, state_dim=3, action_dim=2, low=-1.0, high=1.0, **kw):
    return Td3Agent(state_dim, action_dim, low, high, np.random.default_rng(seed), **kw)


def random_batch(rng, n, state_dim=3, action_dim=2):
    return Batch(rng.normal(size=(n, state_dim)), rng.uniform(-1, 1, (n, action_dim)),
                 rng.normal(size=n), rng.normal(size=(n, state_dim)),
                 (rng.random(n) < 0.2).astype(float))


def zero_critics(a):
    for net in (a.critic1, a.critic2, a.critic1_target, a.critic2_target):
        net.flat[...] = 0.0


def test_target_with_zero_discount_is_reward():
    a = agent(gamma=0.0)
    rng = np.random.default_rng(0)
    for r in (-3.0, 0.0, 7.25):
        assert a.critic_target(r, rng.normal(size=3), False, rng) == r


def test_terminal_target_is_reward():
    a = agent()
    rng = np.random.default_rng(1)
    assert a.critic_target(1.5, rng.normal(size=3) * 10, True, rng) == 1.5


def test_zero_critics_target_is_reward():
    a = agent()
    zero_critics(a)
    assert a.critic_target(2.5, np.ones(3), False, np.random.default_rng(2)) == 2.5


def test_min_target_below_each_twin():
    a = agent(seed=3)
    rng = np.random.default_rng(4)
    b = random_batch(rng, 64)
    y = a.critic_targets(b.rewards, b.next_states, b.terminals, np.random.default_rng(9))
    # recompute the smoothed target action with the same noise stream
    noise_rng = np.random.default_rng(9)
    act = forward(a.actor_target, b.next_states)
    noise = np.clip(noise_rng.normal(size=act.shape) * a.policy_sigma, -a.noise_clip, a.noise_clip)
    act = a.clip_action(act + noise)
    x = np.concatenate([b.next_states, act], axis=1)
    for critic in (a.critic1_target, a.critic2_target):
        twin = b.rewards + a.gamma * (1 - b.terminals) * forward(critic, x)[:, 0]
        assert np.all(y <= twin + 1e-12)
    both = np.minimum(forward(a.critic1_target, x), forward(a.critic2_target, x))[:, 0]
    np.testing.assert_allclose(y, b.rewards + a.gamma * (1 - b.terminals) * both, atol=1e-12)


def test_loss_non_negative_and_regression_to_constant():
    a = agent(seed=5, gamma=0.0)
    b = Batch(np.array([[0.2, -0.1, 0.4]]), np.array([[0.3, -0.5]]), np.array([1.0]),
              np.zeros((1, 3)), np.zeros(1))
    rng = np.random.default_rng(0)
    losses = [a.train_critics(b, rng) for _ in range(2000)]
    assert min(losses) >= 0
    q = forward(a.critic1, np.concatenate([b.states, b.actions], 1))[0, 0]
    assert abs(q - 1.0) < 1e-2


def test_duplicated_batch_gives_same_update():
    rng = np.random.default_rng(6)
    b = random_batch(rng, 8)
    a1, a2 = agent(seed=7, gamma=0.0), agent(seed=7, gamma=0.0)
    l1 = a1.train_critics(b, np.random.default_rng(0))
    l2 = a2.train_critics(b.tiled(4), np.random.default_rng(0))
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(a1.critic1.flat, a2.critic1.flat, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a1.critic2.flat, a2.critic2.flat, rtol=0, atol=1e-12)


def test_actor_unchanged_under_zero_critic():
    a = agent(seed=8)
    zero_critics(a)
    before = a.actor.flat.copy()
    a.train_actor(random_batch(np.random.default_rng(1), 16))
    assert np.array_equal(a.actor.flat, before)


def test_actor_returns_mean_q_before_step():
    a = agent(seed=9)
    b = random_batch(np.random.default_rng(2), 16)
    expected = forward(a.critic1, np.concatenate([b.states, forward(a.actor, b.states)], 1)).mean()
    assert a.train_actor(b) == pytest.approx(expected, rel=1e-14)


def peaked_critic(peak, k=2.0, d=0.5):
    """Q(s, a) = tanh(d + k (a - peak)) + tanh(d - k (a - peak)); even about the peak, maximal there."""
    net = Mlp((2, 2, 1))
    net.weights[0][...] = [[0.0, k], [0.0, -k]]
    net.biases[0][...] = [d - k * peak, d + k * peak]
    net.weights[1][...] = [[1.0, 1.0]]
    return net


def test_actor_climbs_to_critic_maximizer():
    a = agent(seed=10, state_dim=1, action_dim=1, actor_lr=1e-3)
    a.critic1 = peaked_critic(0.3)
    b = Batch(np.array([[0.5]]), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    for _ in range(2000):
        a.train_actor(b)
    assert abs(forward(a.actor, b.states)[0, 0] - 0.3) < 0.05


def fit_quadratic_critic(rng, peak=0.3, steps=3000):
    """Regress a fresh critic onto -(a - peak)^2 for a in [-1, 1] at a fixed state."""
    net = Mlp.initialized((2, 64, 64, 1), rng)
    opt = AdamState.for_params(net, 1e-3)
    for _ in range(steps):
        a = rng.uniform(-1, 1, (64, 1))
        x = np.concatenate([np.full((64, 1), 0.5), a], 1)
        err = forward(net, x) + (a - peak) ** 2
        grad, _ = backward(net, x, err / 64)
        adam_step(opt, net, grad)
    return net


def test_actor_on_fitted_quadratic_critic():
    rng = np.random.default_rng(11)
    a = agent(seed=11, state_dim=1, action_dim=1, actor_lr=1e-3)
    a.critic1 = fit_quadratic_critic(rng)
    b = Batch(np.array([[0.5]]), np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    for _ in range(2000):
        a.train_actor(b)
    assert abs(forward(a.actor, b.states)[0, 0] - 0.3) < 0.05


def test_select_action_determinism_and_noise():
    a = agent(seed=12, low=-10.0, high=10.0, exploration_sigma=1.0)
    a.actor.flat[...] = 0.0  # deterministic action is the range midpoint, 0
    s = np.ones(3)
    assert np.array_equal(a.select_action(s), a.select_action(s))
    quiet = agent(seed=12, exploration_sigma=0.0)
    assert np.array_equal(quiet.select_action(s, True, np.random.default_rng(0)), quiet.select_action(s))
    rng = np.random.default_rng(13)
    draws = np.array([a.select_action(s, True, rng) for _ in range(10_000)])
    assert np.all(np.abs(draws.mean(0)) < 5 * 1.0 / 100)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.0, 1e3))
def test_actions_always_within_range(seed, scale):
    a = agent(seed=seed % 7, low=np.array([-1.0, 0.0]), high=np.array([1.0, 5.0]),
              exploration_sigma=3.0)
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(3,)) * scale
    for explore in (False, True):
        act = a.select_action(s, explore, rng)
        assert np.all(act >= a.action_low) and np.all(act <= a.action_high)


def test_update_schedule_and_determinism():
    def trace(seed):
        a = agent(seed=seed)
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(10):
            res = a.update(random_batch(rng, 32), rng)
            out.append((res["critic_loss"], res.get("actor_q")))
        return a, out

    a, t1 = trace(14)
    _, t2 = trace(14)
    assert t1 == t2
    assert [q is not None for _, q in t1] == [i % 2 == 1 for i in range(10)]
    assert a.actor_opt.step_count == 5 and a.critic1_opt.step_count == 10


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    a = agent(seed=15)
    for _ in range(6):
        a.update(random_batch(rng, 16), rng)
    path = tmp_path / "agent.ckpt"
    a.save(path)
    assert path.read_bytes()[:8] == b"HIROTD31"
    b = agent(seed=99)
    b.load(path)
    for x, y in zip(a.networks(), b.networks()):
        assert np.array_equal(x.flat, y.flat)
    for x, y in zip(a.optimizers(), b.optimizers()):
        assert x.step_count == y.step_count
        assert np.array_equal(x.first_moment, y.first_moment)
        assert np.array_equal(x.second_moment, y.second_moment)
    batch = random_batch(rng, 16)
    ra = a.update(batch, np.random.default_rng(1))
    rb = b.update(batch, np.random.default_rng(1))
    assert ra == rb
