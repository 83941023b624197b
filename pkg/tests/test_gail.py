"""Adversarial imitation machinery: discriminator, trust-region policy step."""

import numpy as np
import pytest

from cfpolicy.gail import (CONVENTIONS, D_CLAMP, REWARD_CLAMP, Discriminator,
                           GailConfig, StochasticPolicy, categorical_kl,
                           disc_accuracy, disc_update, load_gail,
                           make_episode_sampler, policy_reward, policy_update,
                           save_gail, train_gail)
from cfpolicy.numcore import Adam


def test_config_validation():
    with pytest.raises(ValueError):
        GailConfig(lr=0.0)
    with pytest.raises(ValueError):
        GailConfig(convention="sideways")
    with pytest.raises(ValueError):
        GailConfig(entropy_coef=-1.0)
    assert set(CONVENTIONS) == {"paper-eq", "gail-orig"}


def test_discriminator_output_clamped(rng):
    disc = Discriminator(4, rng, hidden=(8,))
    x = rng.normal(size=(10, 4)) * 100
    d = disc.score(x)
    assert np.all(d >= D_CLAMP) and np.all(d <= 1 - D_CLAMP)


def test_disc_update_confused_floor_on_identical_batches(rng):
    """With expert == generated the best achievable loss is 2 ln 2."""
    disc = Discriminator(3, rng, hidden=(8,))
    opt = Adam(disc.params().values(), lr=1e-3)
    batch = rng.normal(size=(32, 3))
    losses = [disc_update(disc, batch, batch, opt) for _ in range(50)]
    assert losses[-1] >= 2 * np.log(2) - 1e-9
    assert losses[-1] == pytest.approx(2 * np.log(2), abs=0.05)


def test_disc_update_separates_separable_data(rng):
    disc = Discriminator(2, rng, hidden=(16,))
    opt = Adam(disc.params().values(), lr=3e-3)
    expert = rng.normal(size=(64, 2)) + 3.0
    gen = rng.normal(size=(64, 2)) - 3.0
    for _ in range(150):
        disc_update(disc, expert, gen, opt, convention="paper-eq")
    assert disc_accuracy(disc, expert, gen, "paper-eq") > 0.95
    # paper-eq labels expert as 1
    assert disc.score(expert).mean() > 0.5 > disc.score(gen).mean()


def test_disc_accuracy_conventions(rng):
    disc = Discriminator(2, rng, hidden=(8,))
    expert, gen = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
    acc_a = disc_accuracy(disc, expert, gen, "paper-eq")
    acc_b = disc_accuracy(disc, expert, gen, "gail-orig")
    assert acc_a + acc_b == pytest.approx(1.0, abs=1e-12)


def test_policy_reward_is_clamped_neg_log_d(rng):
    disc = Discriminator(5 + 3, rng, hidden=(8,))
    obs = rng.normal(size=(6, 5))
    onehot = np.eye(3)[rng.integers(0, 3, 6)]
    r = policy_reward(disc, obs, onehot)
    d = disc.score(np.concatenate([obs, onehot], axis=1))
    assert np.allclose(r, np.clip(-np.log(d), -REWARD_CLAMP, REWARD_CLAMP))
    assert np.all(np.abs(r) <= REWARD_CLAMP)


def test_policy_update_sign_oracle(rng):
    """Positive advantage on one action must raise its probability."""
    cfg = GailConfig()
    pol = StochasticPolicy(4, rng, n_actions=5, hidden=(16,))
    opt = Adam(pol.params().values(), lr=cfg.lr)
    obs = np.ones((1, 4))
    before = pol.probs(obs)[0, 2]
    policy_update(pol, obs, np.array([2]), np.array([1.0]), cfg, opt, beta=1.0)
    assert pol.probs(obs)[0, 2] > before


def test_policy_update_respects_kl_target(rng):
    cfg = GailConfig(lr=0.05, inner_steps=10)  # aggressive step to force backtracking
    pol = StochasticPolicy(6, rng, n_actions=8, hidden=(32,))
    opt = Adam(pol.params().values(), lr=cfg.lr)
    obs = rng.normal(size=(40, 6))
    actions = rng.integers(0, 8, 40)
    adv = rng.normal(size=40) * 5
    stats, _ = policy_update(pol, obs, actions, adv, cfg, opt, beta=1.0)
    assert stats["kl"] <= cfg.kl_target + 1e-12


def test_policy_update_zero_signal_is_fixed_point(rng):
    cfg = GailConfig(entropy_coef=0.0)
    pol = StochasticPolicy(3, rng, n_actions=4, hidden=(8,))
    opt = Adam(pol.params().values(), lr=cfg.lr)
    obs = rng.normal(size=(5, 3))
    before = pol.probs(obs).copy()
    stats, _ = policy_update(pol, obs, np.zeros(5, dtype=int), np.zeros(5),
                             cfg, opt, beta=1.0)
    assert np.array_equal(pol.probs(obs), before)
    assert stats["kl"] == 0.0


def test_categorical_kl_oracle():
    p = np.array([[0.5, 0.5]])
    q = np.array([[0.9, 0.1]])
    expected = 0.5 * np.log(0.5 / 0.9) + 0.5 * np.log(0.5 / 0.1)
    assert categorical_kl(p, q) == pytest.approx(expected, abs=1e-12)
    assert categorical_kl(p, p) == 0.0


@pytest.fixture(scope="module")
def tiny_gail(proc_cohort):
    from cfpolicy.dynamics import DynHyperParams, train_dynamics
    dyn = train_dynamics(proc_cohort, DynHyperParams(epochs=2, seed=0,
                                                     max_windows=600))
    cfg = GailConfig(iterations=8, horizon=6, episodes=4, seed=1,
                     convention="gail-orig", policy_hidden=(32,),
                     disc_hidden=(16, 16))
    return train_gail(proc_cohort, dyn, cfg), dyn


def test_train_gail_log_contract(tiny_gail):
    result, _ = tiny_gail
    assert len(result.log) == 8
    for h in result.log:
        assert set(h) >= {"iteration", "disc_loss", "disc_accuracy",
                          "mean_reward", "mean_abs_gap", "entropy", "kl", "beta"}
        assert h["kl"] <= result.config.kl_target + 1e-12
    assert result.initial_policy_state  # snapshot for before/after comparisons


def test_episode_sampler_shapes(tiny_gail, proc_cohort):
    result, dyn = tiny_gail
    sampler = make_episode_sampler(proc_cohort, dyn, result.config)
    obs, acts = sampler(result.policy, np.random.default_rng(0))
    assert obs.shape == (6, 3 * proc_cohort.schema.n_features)
    assert acts.shape == (6,) and acts.dtype == np.int64
    assert np.all((0 <= acts) & (acts < 25))


def test_gail_save_load_round_trip(tmp_path, tiny_gail, rng):
    result, _ = tiny_gail
    path = tmp_path / "gail.npz"
    save_gail(result, path)
    back = load_gail(path)
    x = rng.normal(size=(5, result.policy.obs_dim))
    assert np.array_equal(back.policy.probs(x), result.policy.probs(x))
    pairs = rng.normal(size=(5, result.policy.obs_dim + 25))
    assert np.array_equal(back.disc.score(pairs), result.disc.score(pairs))
    assert back.config.convention == "gail-orig"
    assert back.log == result.log


def test_frozen_policy_run_does_not_move_policy(proc_cohort):
    from cfpolicy.dynamics import DynHyperParams, train_dynamics
    dyn = train_dynamics(proc_cohort, DynHyperParams(epochs=1, seed=0,
                                                     max_windows=300))
    cfg = GailConfig(iterations=3, horizon=5, episodes=2, seed=2,
                     freeze_policy=True, policy_hidden=(16,), disc_hidden=(8,))
    result = train_gail(proc_cohort, dyn, cfg)
    x = np.random.default_rng(0).normal(size=(4, result.policy.obs_dim))
    frozen = StochasticPolicy(result.policy.obs_dim, np.random.default_rng(9),
                              n_actions=25, hidden=(16,))
    frozen.load_state(result.initial_policy_state)
    assert np.array_equal(result.policy.probs(x), frozen.probs(x))
