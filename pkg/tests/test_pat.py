"""Parameterized-action learner: selection, targets, updates, persistence."""

import numpy as np
import pytest

from vnf_lab import nn
from vnf_lab.env import ParamAction
from vnf_lab.pat import PatAgent, PatConfig, ReplayBuffer, Transition, ascend_param_actor, one_hot

STATE_DIM = 12
N_TARGETS = 4
SCALE = (50.0, 50.0)


def make_agent(seed=0, **overrides) -> PatAgent:
    cfg = PatConfig(**{"batch_size": 8, "buffer_capacity": 64, "warmup_size": 8,
                       **overrides})
    return PatAgent(STATE_DIM, N_TARGETS, SCALE, cfg, seed=seed)


def random_batch(rng, b=8):
    states = rng.normal(0, 1, (b, STATE_DIM))
    actions = rng.integers(0, N_TARGETS, b)
    params = rng.uniform(-50, 50, (b, 2))
    params[actions == N_TARGETS - 1] = 0.0
    rewards = rng.uniform(-1, 1, b)
    next_states = rng.normal(0, 1, (b, STATE_DIM))
    return states, actions, params, rewards, next_states


def fill_buffer(agent, rng, n):
    states, actions, params, rewards, next_states = random_batch(rng, n)
    for i in range(n):
        agent.store(Transition(states[i], int(actions[i]), params[i],
                               float(rewards[i]), next_states[i]))


def energize(net, rng, std=0.3):
    # fresh inits are near-zero; bigger weights give measurable gradients
    for w in net.weights:
        w[:] = rng.normal(0, std, w.shape)
    for b in net.biases:
        b[:] = rng.normal(0, std, b.shape)


class TestReplayBuffer:
    def test_ring_eviction(self):
        buf = ReplayBuffer(4, 2)
        for i in range(6):
            buf.add(Transition(np.full(2, i), i % 3, np.zeros(2), float(i), np.zeros(2)))
        assert buf.size == 4 and buf.cursor == 2
        kept = sorted(buf.states[:, 0].tolist())
        assert kept == [2.0, 3.0, 4.0, 5.0]

    def test_single_element_sampling(self):
        buf = ReplayBuffer(8, 2)
        buf.add(Transition(np.array([7.0, 8.0]), 1, np.array([1.0, 2.0]), 0.5, np.zeros(2)))
        states, actions, params, rewards, _ = buf.sample(5, np.random.default_rng(0))
        assert (states == [7.0, 8.0]).all()
        assert (actions == 1).all() and (rewards == 0.5).all()
        assert (params == [1.0, 2.0]).all()

    def test_empty_buffer_rejects_sampling(self):
        with pytest.raises(ValueError):
            ReplayBuffer(4, 2).sample(1, np.random.default_rng(0))


class TestSelect:
    def test_full_exploration_is_uniform_over_targets(self):
        agent = make_agent(seed=1, eps=1.0, eps_min=1.0)
        counts = np.zeros(N_TARGETS)
        draws = 20_000
        feats = np.zeros(STATE_DIM)
        for _ in range(draws):
            counts[agent.select(feats).target] += 1
        assert np.abs(counts / draws - 1.0 / N_TARGETS).max() < 0.02

    def test_eval_mode_is_deterministic_and_noiseless(self):
        agent = make_agent(seed=2)
        agent.set_eval(True)
        feats = np.random.default_rng(3).normal(0, 1, STATE_DIM)
        a1 = agent.select(feats)
        a2 = agent.select(feats)
        assert (a1.target, a1.d_cpu, a1.d_mem) == (a2.target, a2.d_cpu, a2.d_mem)
        best = int(np.argmax(nn.forward(agent.actor_action, feats)))
        assert a1.target == best
        if best != agent.cloud_action:
            x = np.concatenate([feats, one_hot([best], N_TARGETS)[0]])
            mu = nn.forward(agent.actor_param, x)
            assert (a1.d_cpu, a1.d_mem) == pytest.approx((mu[0], mu[1]))

    def test_exploration_noise_is_clipped(self):
        agent = make_agent(seed=4, sigma_noise=5.0)
        w = agent._clipped_noise((4000, 2))
        bound = agent.clip_c * np.asarray(SCALE)
        assert (np.abs(w) <= bound + 1e-12).all()
        # wide noise should actually hit the clip rails
        assert (np.abs(w) == bound).any()

    def test_params_stay_inside_box_and_near_policy_mean(self):
        agent = make_agent(seed=5, eps=0.0, eps_min=0.0, sigma_noise=5.0)
        rng = np.random.default_rng(6)
        for _ in range(200):
            feats = rng.normal(0, 1, STATE_DIM)
            act = agent.select(feats)
            assert abs(act.d_cpu) <= SCALE[0] and abs(act.d_mem) <= SCALE[1]
            if act.target != agent.cloud_action:
                x = np.concatenate([feats, one_hot([act.target], N_TARGETS)[0]])
                mu = nn.forward(agent.actor_param, x)
                limit = agent.clip_c * np.asarray(SCALE)
                assert abs(act.d_cpu - mu[0]) <= limit[0] + 1e-9
                assert abs(act.d_mem - mu[1]) <= limit[1] + 1e-9

    def test_offload_choice_carries_zero_deltas(self):
        agent = make_agent(seed=7)
        for w in agent.actor_action.weights:
            w[:] = 0.0
        agent.actor_action.biases[-1][agent.cloud_action] = 1.0
        agent.set_eval(True)
        act = agent.select(np.ones(STATE_DIM))
        assert act == ParamAction(agent.cloud_action, 0.0, 0.0)


class TestTargets:
    def test_bootstrap_combines_min_of_both_target_critics(self):
        agent = make_agent(seed=8)
        rng = np.random.default_rng(9)
        energize(agent.t_critic_1, rng)
        energize(agent.t_critic_2, rng)
        batch = random_batch(rng, 16)
        y, info = agent.compute_targets(batch)
        rewards = batch[3]
        assert (y == rewards + agent.cfg.gamma * np.minimum(info["q1"], info["q2"])).all()
        assert (info["q1"] != info["q2"]).any()

    def test_constant_target_critics_give_known_value(self):
        agent = make_agent(seed=10)
        for net, value in ((agent.t_critic_1, 1.0), (agent.t_critic_2, 2.0)):
            for w in net.weights:
                w[:] = 0.0
            for b in net.biases:
                b[:] = 0.0
            net.biases[-1][0] = value
        batch = random_batch(np.random.default_rng(11), 3)
        batch = (*batch[:3], np.full(3, 0.5), batch[4])
        y, info = agent.compute_targets(batch)
        assert (info["q1"] == 1.0).all() and (info["q2"] == 2.0).all()
        assert y == pytest.approx([1.49] * 3, abs=1e-12)

    def test_next_action_follows_target_score_net(self):
        agent = make_agent(seed=12)
        rng = np.random.default_rng(13)
        energize(agent.t_actor_action, rng, std=0.1)
        batch = random_batch(rng, 32)
        _, info = agent.compute_targets(batch)
        want = np.argmax(nn.forward(agent.t_actor_action, batch[4]), axis=1)
        assert (info["a_next"] == want).all()

    def test_offload_next_actions_have_zero_params(self):
        agent = make_agent(seed=14)
        for w in agent.t_actor_action.weights:
            w[:] = 0.0
        agent.t_actor_action.biases[-1][agent.cloud_action] = 5.0
        batch = random_batch(np.random.default_rng(15), 8)
        _, info = agent.compute_targets(batch)
        assert (info["a_next"] == agent.cloud_action).all()
        assert (info["p_next"] == 0.0).all()

    def test_smoothed_params_respect_box(self):
        agent = make_agent(seed=16, sigma_noise=5.0)
        batch = random_batch(np.random.default_rng(17), 64)
        _, info = agent.compute_targets(batch)
        assert (np.abs(info["p_next"]) <= np.asarray(SCALE)).all()


class TestCriticUpdate:
    def test_perfect_targets_leave_first_critic_alone(self):
        agent = make_agent(seed=18)
        rng = np.random.default_rng(19)
        batch = random_batch(rng, 8)
        states, actions, params = batch[0], batch[1], batch[2]
        xc = agent._critic_input(states, one_hot(actions, N_TARGETS), params)
        y = nn.forward(agent.critic_1, xc)[:, 0]
        before = [w.copy() for w in agent.critic_1.weights]
        l1, l2 = agent.update_critics(batch, y)
        assert l1 == 0.0
        for w0, w1 in zip(before, agent.critic_1.weights):
            assert (w0 == w1).all()
        assert l2 > 0.0

    def test_losses_shrink_under_repeated_fitting(self):
        agent = make_agent(seed=20)
        rng = np.random.default_rng(21)
        batch = random_batch(rng, 8)
        y = rng.normal(0, 0.5, 8)
        first = agent.update_critics(batch, y)
        for _ in range(300):
            last = agent.update_critics(batch, y)
        assert last[0] < first[0] * 0.01
        assert last[1] < first[1] * 0.01


def numeric_grad(fn, arr, idx, h=1e-5):
    old = arr[idx]
    arr[idx] = old + h
    up = fn()
    arr[idx] = old - h
    dn = fn()
    arr[idx] = old
    return (up - dn) / (2 * h)


class TestActorUpdate:
    def test_zeroed_critic_freezes_both_actors(self):
        agent = make_agent(seed=22)
        for w in agent.critic_1.weights:
            w[:] = 0.0
        for b in agent.critic_1.biases:
            b[:] = 0.0
        snap = ([w.copy() for w in agent.actor_action.weights],
                [w.copy() for w in agent.actor_param.weights])
        agent.update_actors(random_batch(np.random.default_rng(23), 8))
        for w0, w1 in zip(snap[0], agent.actor_action.weights):
            assert (w0 == w1).all()
        for w0, w1 in zip(snap[1], agent.actor_param.weights):
            assert (w0 == w1).all()

    def test_critics_untouched_by_actor_step(self):
        agent = make_agent(seed=24)
        rng = np.random.default_rng(25)
        energize(agent.critic_1, rng)
        c1 = [w.copy() for w in agent.critic_1.weights]
        c2 = [w.copy() for w in agent.critic_2.weights]
        agent.update_actors(random_batch(rng, 8))
        for w0, w1 in zip(c1, agent.critic_1.weights):
            assert (w0 == w1).all()
        for w0, w1 in zip(c2, agent.critic_2.weights):
            assert (w0 == w1).all()

    def test_param_actor_ascends_first_critic(self):
        # the Adam step moves each weight by ~lr in the sign of dJ/dw,
        # where J is the mean critic value at the actor's own outputs
        rng = np.random.default_rng(26)
        actor = nn.Mlp((5 + 3, 16, 8, 2), head_scale=(50.0, 50.0))
        critic = nn.Mlp((5 + 3 + 2, 16, 8, 1))
        energize(actor, rng, std=0.2)
        energize(critic, rng, std=0.2)
        states = rng.normal(0, 1, (6, 5))
        onehots = one_hot(rng.integers(0, 3, 6), 3)

        def objective():
            p = nn.forward(actor, np.concatenate([states, onehots], axis=1))
            q = nn.forward(critic, np.concatenate([states, onehots, p], axis=1))
            return float(q.mean())

        probes = []
        for _ in range(12):
            layer = int(rng.integers(len(actor.weights)))
            idx = (int(rng.integers(actor.weights[layer].shape[0])),
                   int(rng.integers(actor.weights[layer].shape[1])))
            g = numeric_grad(objective, actor.weights[layer], idx)
            if abs(g) > 1e-5:
                probes.append((layer, idx, g, actor.weights[layer][idx]))
        assert len(probes) >= 5
        adam = nn.AdamState(actor, lr=1e-4)
        ascend_param_actor(actor, adam, critic, states, onehots)
        for layer, idx, g, old in probes:
            step = actor.weights[layer][idx] - old
            assert np.sign(step) == np.sign(g), (layer, idx, g, step)
            # first Adam step: lr * g / (|g| + eps)
            assert abs(step) == pytest.approx(1e-4 * abs(g) / (abs(g) + adam.eps), rel=1e-2)

    def test_score_actor_ascends_relaxed_objective(self):
        agent = make_agent(seed=27)
        rng = np.random.default_rng(28)
        energize(agent.critic_1, rng, std=0.2)
        energize(agent.actor_action, rng, std=0.2)
        batch = random_batch(rng, 6)
        states, _, params = batch[0], batch[1], batch[2]

        def objective():
            soft = nn.softmax(nn.forward(agent.actor_action, states))
            q = nn.forward(agent.critic_1, agent._critic_input(states, soft, params))
            return float(q.mean())

        probes = []
        for _ in range(16):
            layer = int(rng.integers(len(agent.actor_action.weights)))
            idx = (int(rng.integers(agent.actor_action.weights[layer].shape[0])),
                   int(rng.integers(agent.actor_action.weights[layer].shape[1])))
            g = numeric_grad(objective, agent.actor_action.weights[layer], idx)
            if abs(g) > 1e-5:
                probes.append((layer, idx, g, agent.actor_action.weights[layer][idx]))
        assert len(probes) >= 5
        agent.update_actors(batch)
        for layer, idx, g, old in probes:
            step = agent.actor_action.weights[layer][idx] - old
            assert np.sign(step) == np.sign(g), (layer, idx, g, step)

    def test_ascent_finds_known_critic_peak(self):
        # teach a critic that deltas near +3 are best, then check the
        # parameter actor climbs to that peak from a near-zero start
        rng = np.random.default_rng(29)
        critic = nn.Mlp((3 + 2 + 2, 32, 16, 1))
        nn.gaussian_init(critic, rng)
        adam_c = nn.AdamState(critic, lr=1e-3)
        states = rng.normal(0, 1, (16, 3))
        onehots = one_hot(rng.integers(0, 2, 16), 2)
        for _ in range(3000):
            rows = rng.integers(0, 16, 64)
            p = rng.uniform(-8, 8, (64, 2))
            target = -np.sum((p - 3.0) ** 2, axis=1) / 10.0
            xc = np.concatenate([states[rows], onehots[rows], p], axis=1)
            q, cache = nn.forward_cached(critic, xc)
            resid = q[:, 0] - target
            grads, _ = nn.backward(critic, cache, (2.0 / 64) * resid[:, None])
            adam_c.step(critic, grads)

        actor = nn.Mlp((3 + 2, 16, 8, 2), head_scale=(10.0, 10.0))
        nn.gaussian_init(actor, rng)
        adam_a = nn.AdamState(actor, lr=1e-3)
        start = nn.forward(actor, np.concatenate([states, onehots], axis=1))
        assert np.abs(start).max() < 0.5
        for _ in range(1500):
            mu = ascend_param_actor(actor, adam_a, critic, states, onehots)
        assert np.abs(mu - 3.0).mean() < 1.0


class TestTrainStep:
    def test_warmup_is_a_no_op(self):
        agent = make_agent(seed=30, warmup_size=16)
        fill_buffer(agent, np.random.default_rng(31), 15)
        before = [w.copy() for w in agent.critic_1.weights]
        out = agent.train_step()
        assert out == {"trained": False, "eps": agent.eps, "clip_c": agent.clip_c}
        assert agent.updates == 0
        for w0, w1 in zip(before, agent.critic_1.weights):
            assert (w0 == w1).all()

    def test_exploration_schedules_follow_update_counter(self):
        agent = make_agent(seed=32)
        assert agent.eps == 0.8 and agent.clip_c == 0.5
        agent.updates = 100
        assert agent.eps == pytest.approx(0.7)
        assert agent.clip_c == pytest.approx(0.4)
        agent.updates = 2000
        assert agent.eps == 0.05 and agent.clip_c == 0.1

    def test_targets_lag_by_exact_blend(self):
        agent = make_agent(seed=33)
        fill_buffer(agent, np.random.default_rng(34), 8)
        pre = [w.copy() for w in agent.critic_1.weights]
        out = agent.train_step()
        assert out["trained"] and agent.updates == 1
        tau = agent.cfg.tau
        for w_pre, w_live, w_tgt in zip(pre, agent.critic_1.weights,
                                        agent.t_critic_1.weights):
            assert w_tgt == pytest.approx(tau * w_live + (1 - tau) * w_pre, rel=1e-12, abs=1e-15)
            assert (w_tgt != w_live).any()

    def test_training_is_reproducible_per_seed(self):
        runs = []
        for seed in (7, 7, 8):
            agent = make_agent(seed=seed)
            fill_buffer(agent, np.random.default_rng(99), 16)
            for _ in range(5):
                agent.train_step()
            runs.append([w.copy() for w in agent.critic_1.weights])
        for w0, w1 in zip(runs[0], runs[1]):
            assert (w0 == w1).all()
        assert any((w0 != w2).any() for w0, w2 in zip(runs[0], runs[2]))


class TestCheckpoint:
    def test_roundtrip_restores_everything(self, tmp_path):
        agent = make_agent(seed=35)
        fill_buffer(agent, np.random.default_rng(36), 16)
        for _ in range(3):
            agent.train_step()
        path = tmp_path / "agent.npz"
        agent.save(path)
        again = PatAgent.load(path)
        assert again.updates == agent.updates
        assert again.cfg == agent.cfg
        for name in PatAgent._NETS:
            a, b = getattr(agent, name), getattr(again, name)
            for w0, w1 in zip(a.weights, b.weights):
                assert (w0 == w1).all()
            for b0, b1 in zip(a.biases, b.biases):
                assert (b0 == b1).all()
        for name in PatAgent._ADAMS:
            a, b = getattr(agent, name), getattr(again, name)
            assert a.t == b.t
            for (mw0, mb0), (mw1, mb1) in zip(a.m, b.m):
                assert (mw0 == mw1).all() and (mb0 == mb1).all()
            for (vw0, vb0), (vw1, vb1) in zip(a.v, b.v):
                assert (vw0 == vw1).all() and (vb0 == vb1).all()
        agent.set_eval(True)
        again.set_eval(True)
        feats = np.random.default_rng(37).normal(0, 1, STATE_DIM)
        assert agent.select(feats) == again.select(feats)


class TestConfigValidation:
    def test_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            PatConfig(gamma=1.5)
        with pytest.raises(ValueError):
            PatConfig(tau=0.0)
        with pytest.raises(ValueError):
            PatConfig(eps=0.2, eps_min=0.5)
        with pytest.raises(ValueError):
            PatConfig(clip_c=0.05, clip_c_min=0.1)
        with pytest.raises(ValueError):
            PatConfig(batch_size=256, buffer_capacity=128)
