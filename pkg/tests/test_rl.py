"""Policy nets, advantage estimation, the PPO update, and training."""

import numpy as np
import pytest

from quadloco.gait import GaitConfig, denormalize_action
from quadloco.rl import (
    CheckpointError,
    EvalResult,
    PolicyParams,
    RunningNorm,
    StrideEnv,
    ToyEnv,
    TrainerConfig,
    TrainerFault,
    Transition,
    compute_gae,
    entropy,
    evaluate,
    load_checkpoint,
    log_prob,
    loss_and_grads,
    policy_mean,
    policy_sample,
    ppo_update,
    random_baseline,
    save_checkpoint,
    train,
    write_curve_csv,
)
from quadloco.rl.nets import MLP, Adam, flatten_arrays, unflatten_into
from quadloco.rl.trainer import _RewardScaler
from quadloco.rl.update import make_optimizers
from quadloco.sim import SimConfig, SimulationFault, make_terrain

_trapz = getattr(np, "trapezoid", None) or np.trapz


def small_cfg(**kw):
    base = dict(total_timesteps=1000, rollout_len=64, minibatch_size=16,
                epochs=3, worker_count=1, hidden=8, seed=0)
    base.update(kw)
    return TrainerConfig(**base)


def gae_oracle(transitions, gamma, lam, tail_boot=0.0):
    """Forward-view double loop: sum discounted one-step errors until
    the episode boundary. Slow and obvious on purpose."""
    n = len(transitions)
    next_values = []
    for t, tr in enumerate(transitions):
        if tr.terminal:
            next_values.append(0.0)
        elif tr.truncated:
            next_values.append(tr.bootstrap_value)
        elif t == n - 1:
            next_values.append(tail_boot)
        else:
            next_values.append(transitions[t + 1].value_est)
    deltas = [tr.reward + gamma * nv - tr.value_est
              for tr, nv in zip(transitions, next_values)]
    adv = np.zeros(n)
    for t in range(n):
        acc, w = 0.0, 1.0
        for k in range(t, n):
            acc += w * deltas[k]
            if transitions[k].terminal or transitions[k].truncated:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv


def random_transitions(rng, n, p_end=0.1, with_truncation=False):
    out = []
    for _ in range(n):
        terminal = bool(rng.random() < p_end)
        truncated = False
        boot = 0.0
        if with_truncation and not terminal and rng.random() < p_end:
            truncated = True
            boot = float(rng.normal())
        out.append(Transition(
            norm_obs=rng.normal(size=3),
            raw_action=rng.normal(size=2),
            log_prob=float(rng.normal()),
            reward=float(rng.normal()),
            value_est=float(rng.normal()),
            terminal=terminal,
            truncated=truncated,
            bootstrap_value=boot,
        ))
    return out


class TestNets:
    def test_forward_shapes_and_hidden_bounds(self):
        rng = np.random.default_rng(0)
        net = MLP((5, 7, 7, 3), out_gain=0.01, rng=rng)
        x = rng.normal(size=(11, 5))
        out, cache = net.forward(x)
        assert out.shape == (11, 3)
        assert len(cache) == 4
        for h in cache[1:-1]:
            assert np.all(np.abs(h) <= 1.0)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        net = MLP((3, 4, 4, 2), out_gain=0.5, rng=rng)
        x = rng.normal(size=(6, 3))

        def loss(n):
            out, _ = n.forward(x)
            return 0.5 * float((out * out).sum())

        out, cache = net.forward(x)
        gw, gb = net.backward(cache, out)
        grads = []
        for w, b in zip(gw, gb):
            grads.append(w)
            grads.append(b)
        gflat = flatten_arrays(grads)

        arrays = net.params()
        flat = flatten_arrays(arrays)
        eps = 1e-6
        idx = np.random.default_rng(2).choice(flat.size, 25, replace=False)
        for i in idx:
            probe = net.copy()
            f = flat.copy()
            f[i] += eps
            unflatten_into(probe.params(), f)
            lp = loss(probe)
            f[i] -= 2 * eps
            unflatten_into(probe.params(), f)
            lm = loss(probe)
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - gflat[i]) <= 1e-5 * max(1.0, abs(fd))

    def test_flatten_unflatten_roundtrip(self):
        rng = np.random.default_rng(3)
        arrays = [rng.normal(size=(3, 2)), rng.normal(size=4)]
        flat = flatten_arrays(arrays)
        assert flat.shape == (10,)
        targets = [np.zeros((3, 2)), np.zeros(4)]
        unflatten_into(targets, flat)
        for a, b in zip(arrays, targets):
            assert np.array_equal(a, b)

    def test_unflatten_size_mismatch_raises(self):
        with pytest.raises(ValueError):
            unflatten_into([np.zeros(3)], np.zeros(5))

    def test_adam_single_step_hand_computed(self):
        p = np.array([1.0, -2.0])
        opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        g = np.array([0.5, -0.5])
        opt.step([g.copy()])
        # first step: m_hat = g, v_hat = g^2, so the move is -lr * sign(g)
        # up to the eps in the denominator
        expect = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
        assert np.allclose(p, expect, atol=1e-9)

    def test_adam_grad_norm_clipping(self):
        p1 = np.array([0.0])
        opt = Adam([p1], lr=0.1, max_grad_norm=0.5)
        opt.step([np.array([100.0])])
        p2 = np.array([0.0])
        opt2 = Adam([p2], lr=0.1, max_grad_norm=0.5)
        opt2.step([np.array([0.5])])
        # both gradients collapse to the same clipped magnitude
        assert np.allclose(p1, p2)

    def test_mlp_copy_is_independent(self):
        rng = np.random.default_rng(4)
        net = MLP((2, 3, 3, 1), out_gain=1.0, rng=rng)
        dup = net.copy()
        dup.params()[0][0, 0] += 1.0
        assert net.params()[0][0, 0] != dup.params()[0][0, 0]


class TestPolicyCore:
    def test_near_deterministic_sample_sticks_to_mean(self):
        rng = np.random.default_rng(10)
        params = PolicyParams(4, 3, 8, rng, init_log_std=-5.0)
        obs = rng.normal(size=4)
        mean = policy_mean(params, obs)
        for seed in range(20):
            raw, _ = policy_sample(params, obs, np.random.default_rng(seed))
            assert np.all(np.abs(raw - mean) < 3e-2)

    def test_sampled_log_prob_recomputes_exactly(self):
        rng = np.random.default_rng(11)
        params = PolicyParams(5, 4, 8, rng, init_log_std=-0.3)
        obs = rng.normal(size=5)
        raw, lp = policy_sample(params, obs, np.random.default_rng(7))
        again = log_prob(params, obs, raw)
        assert abs(lp - again) < 1e-12

    def test_different_seeds_different_samples_same_mean(self):
        rng = np.random.default_rng(12)
        params = PolicyParams(4, 3, 8, rng)
        obs = rng.normal(size=4)
        m0 = policy_mean(params, obs)
        a, _ = policy_sample(params, obs, np.random.default_rng(1))
        b, _ = policy_sample(params, obs, np.random.default_rng(2))
        assert not np.allclose(a, b)
        assert np.array_equal(policy_mean(params, obs), m0)

    def test_same_seed_same_sample(self):
        rng = np.random.default_rng(13)
        params = PolicyParams(4, 3, 8, rng)
        obs = rng.normal(size=4)
        a, lpa = policy_sample(params, obs, np.random.default_rng(42))
        b, lpb = policy_sample(params, obs, np.random.default_rng(42))
        assert np.array_equal(a, b) and lpa == lpb

    def test_one_dimensional_density_integrates_to_one(self):
        rng = np.random.default_rng(14)
        params = PolicyParams(2, 1, 6, rng, init_log_std=-0.5)
        obs = rng.normal(size=2)
        mean = policy_mean(params, obs)[0]
        sigma = float(np.exp(params.log_std[0]))
        xs = np.linspace(mean - 10 * sigma, mean + 10 * sigma, 20001)
        dens = np.array([
            np.exp(log_prob(params, obs, np.array([x]))) for x in xs
        ])
        integral = _trapz(dens, xs)
        assert abs(integral - 1.0) < 1e-6

    def test_entropy_matches_gaussian_formula(self):
        rng = np.random.default_rng(15)
        params = PolicyParams(3, 2, 6, rng, init_log_std=0.2)
        sigmas = np.exp(params.log_std)
        expect = float(np.sum(np.log(sigmas))
                       + 0.5 * 2 * (1.0 + np.log(2 * np.pi)))
        assert abs(entropy(params) - expect) < 1e-12

    def test_log_std_clamped(self):
        rng = np.random.default_rng(16)
        params = PolicyParams(3, 2, 6, rng)
        params.log_std[:] = [-100.0, 100.0]
        params.clamp_log_std()
        assert np.array_equal(params.log_std, [-5.0, 1.0])

    def test_non_finite_policy_output_faults(self):
        rng = np.random.default_rng(17)
        params = PolicyParams(3, 2, 6, rng)
        params.policy.params()[0][0, 0] = np.nan
        with pytest.raises(TrainerFault):
            policy_mean(params, np.zeros(3))

    def test_running_norm_matches_batch_statistics(self):
        rng = np.random.default_rng(18)
        data = rng.normal(loc=3.0, scale=2.0, size=(500, 4))
        norm = RunningNorm(4)
        for x in data:
            norm.update(x)
        assert np.allclose(norm.mean, data.mean(axis=0), atol=1e-10)
        assert np.allclose(norm.variance(), data.var(axis=0), atol=1e-8)
        z = norm.normalize(data[0])
        expect = (data[0] - data.mean(axis=0)) / np.sqrt(data.var(axis=0) + 1e-8)
        assert np.allclose(z, expect, atol=1e-6)

    def test_running_norm_clip_and_warmup(self):
        norm = RunningNorm(2, clip=3.0)
        out = norm.normalize(np.array([100.0, -100.0]))
        assert np.array_equal(out, [3.0, -3.0])
        norm.update(np.zeros(2))
        out = norm.normalize(np.array([5.0, -5.0]))
        assert np.array_equal(out, [3.0, -3.0])

    def test_running_norm_state_roundtrip(self):
        rng = np.random.default_rng(19)
        norm = RunningNorm(3)
        for x in rng.normal(size=(50, 3)):
            norm.update(x)
        count, mean, m2 = norm.state_arrays()
        again = RunningNorm.from_state(count[0], mean, m2, clip=norm.clip)
        probe = rng.normal(size=3)
        assert np.array_equal(norm.normalize(probe), again.normalize(probe))


class TestAdvantageEstimation:
    def test_single_terminal_transition(self):
        tr = Transition(np.zeros(3), np.zeros(2), 0.0,
                        reward=2.5, value_est=0.7, terminal=True)
        adv, ret = compute_gae([tr], gamma=0.99, lam=0.95)
        assert abs(adv[0] - (2.5 - 0.7)) < 1e-15
        assert abs(ret[0] - 2.5) < 1e-15

    def test_lambda_zero_is_one_step_td(self):
        rng = np.random.default_rng(20)
        trans = random_transitions(rng, 40)
        adv, _ = compute_gae(trans, gamma=0.97, lam=0.0, bootstrap_value=0.3)
        for t, tr in enumerate(trans):
            if tr.terminal:
                nv = 0.0
            elif t == len(trans) - 1:
                nv = 0.3
            else:
                nv = trans[t + 1].value_est
            delta = tr.reward + 0.97 * nv - tr.value_est
            assert abs(adv[t] - delta) < 1e-12

    def test_random_segment_matches_double_loop(self):
        rng = np.random.default_rng(21)
        trans = random_transitions(rng, 100)
        boot = float(rng.normal())
        adv, ret = compute_gae(trans, gamma=0.99, lam=0.95,
                               bootstrap_value=boot)
        expect = gae_oracle(trans, 0.99, 0.95, boot)
        assert np.max(np.abs(adv - expect)) < 1e-10
        values = np.array([t.value_est for t in trans])
        assert np.max(np.abs(ret - (expect + values))) < 1e-10

    def test_truncated_episodes_bootstrap_their_stored_value(self):
        rng = np.random.default_rng(22)
        trans = random_transitions(rng, 80, with_truncation=True)
        boot = float(rng.normal())
        adv, _ = compute_gae(trans, gamma=0.95, lam=0.9, bootstrap_value=boot)
        expect = gae_oracle(trans, 0.95, 0.9, boot)
        assert np.max(np.abs(adv - expect)) < 1e-10

    def test_chain_cuts_at_episode_ends(self):
        # two episodes in one segment; the second episode's rewards must
        # not leak into the first episode's advantages
        mk = lambda r, v, term: Transition(np.zeros(1), np.zeros(1), 0.0,
                                           reward=r, value_est=v,
                                           terminal=term)
        a = [mk(1.0, 0.5, False), mk(1.0, 0.5, True),
             mk(100.0, 0.5, False), mk(100.0, 0.5, True)]
        adv_joint, _ = compute_gae(a, 0.99, 0.95)
        adv_first, _ = compute_gae(a[:2], 0.99, 0.95)
        assert np.allclose(adv_joint[:2], adv_first, atol=1e-12)

    def test_empty_segment_rejected(self):
        with pytest.raises(ValueError):
            compute_gae([], 0.99, 0.95)

    def test_terminal_and_truncated_conflict_rejected(self):
        with pytest.raises(ValueError):
            Transition(np.zeros(1), np.zeros(1), 0.0, 0.0, 0.0,
                       terminal=True, truncated=True)

    def test_non_finite_transition_rejected(self):
        with pytest.raises(ValueError):
            Transition(np.zeros(1), np.zeros(1), 0.0,
                       reward=float("nan"), value_est=0.0, terminal=False)


class TestLossAndUpdate:
    def _toy_batch(self, seed=3, batch=8, obs_dim=2, act_dim=2, hidden=3):
        rng = np.random.default_rng(seed)
        params = PolicyParams(obs_dim, act_dim, hidden, rng,
                              init_log_std=-0.4)
        obs = rng.normal(size=(batch, obs_dim))
        acts = rng.normal(scale=0.5, size=(batch, act_dim))
        # keep ratios near one so the clip never engages and the
        # surrogate stays smooth for finite differences
        old_lp = log_prob(params, obs, acts) + rng.normal(scale=0.01,
                                                          size=batch)
        adv = rng.normal(size=batch)
        ret = rng.normal(size=batch)
        return params, obs, acts, old_lp, adv, ret

    def test_full_loss_gradient_matches_finite_differences(self):
        cfg = small_cfg(entropy_coef=0.013, value_coef=0.37, hidden=3)
        params, obs, acts, old_lp, adv, ret = self._toy_batch()
        _, grads, _ = loss_and_grads(params, obs, acts, old_lp, adv, ret, cfg)
        gflat = flatten_arrays(grads)
        flat = params.flat()
        eps = 1e-6
        for i in range(flat.size):
            probe = params.copy()
            f = flat.copy()
            f[i] += eps
            probe.set_flat(f)
            lp, _, _ = loss_and_grads(probe, obs, acts, old_lp, adv, ret, cfg)
            f[i] -= 2 * eps
            probe.set_flat(f)
            lm, _, _ = loss_and_grads(probe, obs, acts, old_lp, adv, ret, cfg)
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(gflat[i]), 1e-8)
            assert abs(fd - gflat[i]) / denom < 1e-4

    def test_value_term_alone_matches_finite_differences(self):
        cfg = small_cfg(entropy_coef=0.0, value_coef=1.0, hidden=3)
        params, obs, acts, old_lp, _, ret = self._toy_batch(seed=5)
        adv = np.zeros(obs.shape[0])
        _, grads, _ = loss_and_grads(params, obs, acts, old_lp, adv, ret, cfg)
        gflat = flatten_arrays(grads)
        flat = params.flat()
        eps = 1e-6
        rng = np.random.default_rng(6)
        for i in rng.choice(flat.size, 20, replace=False):
            probe = params.copy()
            f = flat.copy()
            f[i] += eps
            probe.set_flat(f)
            lp, _, _ = loss_and_grads(probe, obs, acts, old_lp, adv, ret, cfg)
            f[i] -= 2 * eps
            probe.set_flat(f)
            lm, _, _ = loss_and_grads(probe, obs, acts, old_lp, adv, ret, cfg)
            fd = (lp - lm) / (2 * eps)
            denom = max(abs(fd), abs(gflat[i]), 1e-8)
            assert abs(fd - gflat[i]) / denom < 1e-4

    def test_large_ratio_with_positive_advantage_is_clipped(self):
        cfg = small_cfg(entropy_coef=0.0, value_coef=0.0, hidden=3,
                        clip_eps=0.2)
        rng = np.random.default_rng(7)
        params = PolicyParams(2, 2, 3, rng)
        obs = rng.normal(size=(1, 2))
        act = rng.normal(size=(1, 2))
        lp = log_prob(params, obs, act)
        old_lp = lp - np.log(2.0)  # current density twice the old one
        adv = np.array([1.5])
        loss_big, grads_big, stats = loss_and_grads(
            params, obs, act, old_lp, adv, np.zeros(1), cfg)
        # clipped surrogate pins the objective at (1 + eps) * advantage
        assert abs(loss_big - (-(1.2 * 1.5))) < 1e-12
        assert stats["clip_fraction"] == 1.0
        # and the policy gradient vanishes outside the trust band
        for g in grads_big[:-1]:
            assert np.allclose(g, 0.0)

    def test_zero_advantages_leave_policy_mean_exactly_alone(self):
        cfg = small_cfg(entropy_coef=0.01, value_coef=0.5, hidden=4,
                        rollout_len=32, minibatch_size=8, epochs=4)
        rng = np.random.default_rng(8)
        params = PolicyParams(3, 2, 4, rng)
        obs = rng.normal(size=(32, 3))
        acts = rng.normal(size=(32, 2))
        old_lp = log_prob(params, obs, acts)
        before = [w.copy() for w in params.policy.params()]
        before_value = [w.copy() for w in params.value.params()]
        before_log_std = params.log_std.copy()
        ppo_update(params, obs, acts, old_lp, np.zeros(32),
                   np.ones(32), cfg, rng=np.random.default_rng(0))
        for a, b in zip(params.policy.params(), before):
            assert np.array_equal(a, b)
        # the value net trains and the entropy bonus moves log-std
        assert any(not np.array_equal(a, b) for a, b in
                   zip(params.value.params(), before_value))
        assert not np.array_equal(params.log_std, before_log_std)

    def test_update_improves_surrogate_on_fixed_batch(self):
        cfg = small_cfg(hidden=4, rollout_len=64, minibatch_size=64,
                        epochs=5, target_kl=None)
        rng = np.random.default_rng(9)
        params = PolicyParams(3, 2, 4, rng)
        obs = rng.normal(size=(64, 3))
        acts = rng.normal(size=(64, 2))
        old_lp = log_prob(params, obs, acts)
        adv = rng.normal(size=64)
        ret = rng.normal(size=64)
        loss_before, _, _ = loss_and_grads(
            params, obs, acts, old_lp,
            (adv - adv.mean()) / (adv.std() + 1e-8), ret, cfg)
        ppo_update(params, obs, acts, old_lp, adv, ret, cfg,
                   rng=np.random.default_rng(1))
        loss_after, _, _ = loss_and_grads(
            params, obs, acts, old_lp,
            (adv - adv.mean()) / (adv.std() + 1e-8), ret, cfg)
        assert loss_after < loss_before

    def test_non_finite_output_faults(self):
        cfg = small_cfg(hidden=3)
        rng = np.random.default_rng(10)
        params = PolicyParams(2, 2, 3, rng)
        params.policy.params()[-1][0] = np.inf  # output bias
        obs = rng.normal(size=(4, 2))
        acts = rng.normal(size=(4, 2))
        with pytest.raises(TrainerFault):
            loss_and_grads(params, obs, acts, np.zeros(4),
                           np.ones(4), np.zeros(4), cfg)

    def test_hidden_corruption_faults_update(self):
        # an inf buried behind a saturating tanh is invisible to the
        # loss, but the end-of-update parameter sweep still finds it
        cfg = small_cfg(hidden=3, rollout_len=16, minibatch_size=16,
                        epochs=1)
        rng = np.random.default_rng(12)
        params = PolicyParams(2, 2, 3, rng)
        params.policy.params()[0][0, 0] = np.inf
        obs = rng.normal(size=(16, 2))
        acts = rng.normal(size=(16, 2))
        old_lp = log_prob(params, obs, acts)
        with pytest.raises(TrainerFault):
            ppo_update(params, obs, acts, old_lp, np.ones(16),
                       np.zeros(16), cfg, rng=np.random.default_rng(0))

    def test_optimizer_split_covers_all_params(self):
        rng = np.random.default_rng(11)
        params = PolicyParams(3, 2, 4, rng)
        cfg = small_cfg(hidden=4)
        pol_opt, val_opt = make_optimizers(params, cfg)
        n_pol = len(params.policy.params()) + 1
        assert len(pol_opt.params) == n_pol
        assert len(val_opt.params) == len(params.value.params())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_cfg(clip_eps=0.0)
        with pytest.raises(ValueError):
            small_cfg(gamma=1.5)
        with pytest.raises(ValueError):
            small_cfg(gae_lambda=-0.1)
        with pytest.raises(ValueError):
            small_cfg(rollout_len=64, minibatch_size=128)
        with pytest.raises(ValueError):
            small_cfg(rollout_len=63, worker_count=4)
        with pytest.raises(ValueError):
            small_cfg(learning_rate=0.0)
        with pytest.raises(ValueError):
            small_cfg(target_kl=0.0)
        with pytest.raises(ValueError):
            small_cfg(total_timesteps=0)


class FaultyEnv:
    """Duck-typed environment that detonates after a few steps."""

    def __init__(self, fail_after=5):
        self.obs_dim = 2
        self.act_dim = 2
        self.fail_after = fail_after
        self._n = 0

    def reset(self, seed):
        self._n = 0
        return np.zeros(2)

    def step(self, raw):
        self._n += 1
        if self._n >= self.fail_after:
            raise SimulationFault("body state went non-finite")
        return np.zeros(2), 0.1, False, {"outcome": "running"}

    def sample_random_action(self, rng):
        return rng.uniform(-1, 1, 2)


class TestTrainingLoop:
    def test_toy_env_reaches_near_optimal(self):
        cfg = TrainerConfig(total_timesteps=50_000, rollout_len=512,
                            minibatch_size=64, epochs=10, seed=0,
                            worker_count=4)
        res = train(lambda task: ToyEnv(), None, cfg)
        env = ToyEnv()
        ev = evaluate(env, res.params, res.normalizer, episodes=5, seed=123)
        per_step = ev.mean_reward / env.episode_len
        assert per_step >= 0.95 * env.optimum

    def test_fixed_seed_bit_identical_curves(self, tmp_path):
        cfg = TrainerConfig(total_timesteps=4096, rollout_len=512,
                            minibatch_size=64, epochs=3, seed=7,
                            worker_count=4)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        r1 = train(lambda task: ToyEnv(), None, cfg, curve_path=p1)
        r2 = train(lambda task: ToyEnv(), None, cfg, curve_path=p2)
        assert r1.curve_rows == r2.curve_rows
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(r1.params.flat(), r2.params.flat())

    def test_different_seed_different_result(self):
        mk = lambda seed: TrainerConfig(total_timesteps=2048,
                                        rollout_len=512, minibatch_size=64,
                                        epochs=2, seed=seed, worker_count=4)
        r1 = train(lambda task: ToyEnv(), None, mk(0))
        r2 = train(lambda task: ToyEnv(), None, mk(1))
        assert not np.array_equal(r1.params.flat(), r2.params.flat())

    def test_curve_rows_have_documented_columns(self):
        cfg = TrainerConfig(total_timesteps=1024, rollout_len=512,
                            minibatch_size=64, epochs=2, seed=0,
                            worker_count=4)
        res = train(lambda task: ToyEnv(), None, cfg)
        for row in res.curve_rows:
            assert tuple(row.keys()) == ("update_idx", "timesteps",
                                         "mean_ep_reward", "std", "fall_rate")

    def test_curve_csv_roundtrips_exact_floats(self, tmp_path):
        rows = [{"update_idx": 1, "timesteps": 512,
                 "mean_ep_reward": 1.0 / 3.0, "std": 2.0 / 7.0,
                 "fall_rate": 0.125}]
        path = tmp_path / "curve.csv"
        write_curve_csv(path, rows)
        text = path.read_text().strip().splitlines()
        assert text[0] == "update_idx,timesteps,mean_ep_reward,std,fall_rate"
        vals = text[1].split(",")
        assert float(vals[2]) == 1.0 / 3.0
        assert float(vals[3]) == 2.0 / 7.0

    def test_simulator_fault_is_replayable(self):
        cfg = TrainerConfig(total_timesteps=1024, rollout_len=64,
                            minibatch_size=16, epochs=2, seed=0,
                            worker_count=1)
        with pytest.raises(TrainerFault) as exc:
            train(lambda task: FaultyEnv(), None, cfg)
        replay = exc.value.replay
        assert isinstance(replay["episode_seed"], int)
        assert len(replay["actions"]) == 5
        assert all(len(a) == 2 for a in replay["actions"])

    def test_checkpoints_written_during_training(self, tmp_path):
        ck = tmp_path / "policy.ckpt"
        cfg = TrainerConfig(total_timesteps=2048, rollout_len=512,
                            minibatch_size=64, epochs=2, seed=0,
                            worker_count=4, checkpoint_every=2)
        res = train(lambda task: ToyEnv(), None, cfg, checkpoint_path=ck)
        params, norm = load_checkpoint(ck)
        assert np.array_equal(params.flat(), res.params.flat())
        assert norm is not None

    def test_reward_scaler_preserves_ordering(self):
        # scaling divides by one positive number per scaler state, so
        # values scaled against the same state keep their order
        scaler = _RewardScaler(gamma=0.99)
        rng = np.random.default_rng(30)
        rewards = list(rng.normal(scale=0.3, size=60)) + [-10.0]
        for i, r in enumerate(rewards):
            scaler.update(r, terminal=(i % 20 == 19))
        scaled = [scaler.scale(r) for r in rewards]
        order_raw = np.argsort(rewards)
        order_scaled = np.argsort(scaled)
        assert np.array_equal(order_raw, order_scaled)
        assert np.argmin(scaled) == len(rewards) - 1
        assert scaled[-1] != rewards[-1]

    def test_reward_scaler_resets_return_at_episode_end(self):
        s = _RewardScaler(gamma=0.5)
        s.update(1.0, terminal=False)
        s.update(1.0, terminal=True)
        assert s.ret == 0.0
        s.update(1.0, terminal=False)
        assert s.ret == 1.0


class TestCheckpointFormat:
    def _params(self, seed=0):
        return PolicyParams(6, 3, 5, np.random.default_rng(seed))

    def test_roundtrip_without_normalizer(self, tmp_path):
        p = self._params()
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, p, None)
        q, norm = load_checkpoint(path)
        assert norm is None
        assert (q.obs_dim, q.act_dim, q.hidden) == (6, 3, 5)
        assert np.array_equal(p.flat(), q.flat())

    def test_roundtrip_with_normalizer(self, tmp_path):
        p = self._params(1)
        norm = RunningNorm(6, clip=7.5)
        for x in np.random.default_rng(2).normal(size=(20, 6)):
            norm.update(x)
        path = tmp_path / "b.ckpt"
        save_checkpoint(path, p, norm)
        _, again = load_checkpoint(path)
        assert again.clip == 7.5
        assert again.count == norm.count
        assert np.array_equal(again.mean, norm.mean)
        assert np.array_equal(again.m2, norm.m2)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, self._params(), None)
        blob = bytearray(path.read_bytes())
        blob[:8] = b"NOTMAGIC"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "d.ckpt"
        save_checkpoint(path, self._params(), None)
        blob = bytearray(path.read_bytes())
        blob[8:12] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "e.ckpt"
        save_checkpoint(path, self._params(), None)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "f.ckpt"
        save_checkpoint(path, self._params(), None)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_header_too_short_rejected(self, tmp_path):
        path = tmp_path / "g.ckpt"
        path.write_bytes(b"QLOCO")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestStrideEnvironment:
    def test_normalized_action_mapping_hits_box_edges(self):
        cfg = GaitConfig()
        low = denormalize_action(-np.ones(12), cfg)
        mid = denormalize_action(np.zeros(12), cfg)
        high = denormalize_action(np.ones(12), cfg)
        assert np.allclose(low.rho, cfg.rho_min_m)
        assert np.allclose(high.rho, cfg.rho_max_m)
        assert np.allclose(mid.rho, 0.5 * (cfg.rho_min_m + cfg.rho_max_m))
        assert np.allclose(low.theta, cfg.theta_min_rad)
        assert np.allclose(high.stride_freq, cfg.freq_max_hz)
        beyond = denormalize_action(5.0 * np.ones(12), cfg)
        assert np.allclose(beyond.rho, cfg.rho_max_m)

    def test_observation_shape_and_step_contract(self):
        env = StrideEnv(make_terrain("flat"))
        assert (env.obs_dim, env.act_dim) == (40, 12)
        obs = env.reset(3)
        assert obs.shape == (40,)
        obs2, r, done, info = env.step(np.zeros(12))
        assert obs2.shape == (40,)
        assert isinstance(r, float) and np.isfinite(r)
        assert done in (False, True)
        assert {"outcome", "distance_m", "strides_used",
                "elapsed_s", "reward_parts"} <= set(info)

    def test_fall_threshold_mismatch_rejected(self):
        terrain = make_terrain("flat")
        sim_cfg = SimConfig(omega_fall=2.0)
        with pytest.raises(ValueError, match="fall thresholds"):
            StrideEnv(terrain, sim_cfg=sim_cfg)

    def test_random_actions_stay_normalized(self):
        env = StrideEnv(make_terrain("flat"))
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = env.sample_random_action(rng)
            assert a.shape == (12,)
            assert np.all(a >= -1.0) and np.all(a <= 1.0)

    def test_toy_env_optimum(self):
        env = ToyEnv()
        assert env.optimum == 0.5
        obs = env.reset(0)
        assert obs.shape == (1,)
        _, r, _, _ = env.step(np.array([50.0]))
        assert abs(r - env.optimum) < 1e-6

    def test_toy_episode_length(self):
        env = ToyEnv(episode_len=5)
        env.reset(0)
        done = False
        n = 0
        while not done:
            _, _, done, _ = env.step(np.zeros(1))
            n += 1
        assert n == 5


class TestEvaluationProtocol:
    def test_same_seed_identical_results(self):
        env = StrideEnv(make_terrain("flat"))
        params = PolicyParams(40, 12, 16, np.random.default_rng(0))
        a = evaluate(env, params, None, episodes=2, seed=9)
        b = evaluate(env, params, None, episodes=2, seed=9)
        assert a == b

    def test_random_baseline_deterministic(self):
        env = StrideEnv(make_terrain("flat"))
        a = random_baseline(env, episodes=2, seed=11)
        b = random_baseline(env, episodes=2, seed=11)
        assert a == b

    def test_result_fields_consistent(self):
        env = ToyEnv(episode_len=10)
        params = PolicyParams(1, 1, 4, np.random.default_rng(1))
        res = evaluate(env, params, None, episodes=3, seed=2)
        assert isinstance(res, EvalResult)
        assert res.episodes == 3
        assert len(res.outcomes) == 3
        assert 0.0 <= res.fall_rate <= 1.0
        lo, hi = res.reward_ci
        assert lo <= res.mean_reward <= hi
