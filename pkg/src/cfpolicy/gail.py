"""Adversarial imitation: discriminator-as-reward plus a KL-penalized
policy-gradient update standing in for an exact trust-region step.

Two discriminator labeling conventions are supported and recorded, never
silently corrected:

* ``paper-eq``  - expert pairs labeled 1, generated pairs pushed to D -> 0.
* ``gail-orig`` - the conventional labeling (D = probability the pair is
  generated); with the fixed reward -log D this is the convention under
  which the policy is driven toward expert behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cohort import CohortDataset, SubgroupKey, filter_subgroup
from .dynamics import TransitionModel, rollout, state_window
from .errors import TrainingDivergenceError
from .kernels import discounted_returns
from .numcore import Adam, Mlp, MlpSpec, ParamTensor, load_checkpoint, save_checkpoint, softmax
from .preprocess import N_ACTIONS, action_index_to_doses, normalize_actions

D_CLAMP = 1e-6
REWARD_CLAMP = -np.log(D_CLAMP)  # 13.815...

CONVENTIONS = ("paper-eq", "gail-orig")


@dataclass
class GailConfig:
    lr: float = 3e-4
    disc_lr: float = 3e-4
    batch: int = 64
    entropy_coef: float = 0.03
    kl_penalty: float = 1.0          # initial beta, adapted multiplicatively
    kl_target: float = 0.05
    gamma: float = 0.99
    iterations: int = 200
    horizon: int = 16
    episodes: int = 16
    inner_steps: int = 5
    disc_steps: int = 1
    seed: int = 0
    convention: str = "paper-eq"
    freeze_policy: bool = False  # train the discriminator against a fixed policy
    policy_hidden: tuple = (200, 200)
    disc_hidden: tuple = (64, 64, 64)

    def __post_init__(self):
        if self.lr <= 0 or self.batch <= 0 or self.kl_penalty <= 0:
            raise ValueError("lr, batch and kl_penalty must be positive")
        if self.entropy_coef < 0:
            raise ValueError("entropy coefficient must be nonnegative")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in ((f, getattr(self, f)) for f in self.__dataclass_fields__)}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Discriminator:
    """Feed-forward scorer D(s, a) in (0, 1), output clamped away from 0/1."""

    def __init__(self, n_in: int, rng: np.random.Generator, hidden: tuple = (64, 64, 64)):
        spec = MlpSpec(widths=(n_in,) + tuple(hidden) + (1,), batch_norm=False)
        self.mlp = Mlp(spec, rng)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.mlp.forward(x, train=False)[:, 0]

    def score(self, x: np.ndarray) -> np.ndarray:
        return np.clip(_sigmoid(self.logits(x)), D_CLAMP, 1.0 - D_CLAMP)

    def params(self):
        return self.mlp.params()


def disc_update(disc: Discriminator, expert: np.ndarray, generated: np.ndarray,
                opt: Adam, convention: str = "paper-eq") -> float:
    """One cross-entropy step; returns the post-step loss.

    Loss is the sum of the per-side mean binary cross-entropies, so a
    maximally confused discriminator sits at 2 ln 2.
    """
    if len(expert) == 0 or len(generated) == 0:
        raise ValueError("expert and generated batches must be non-empty")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    expert_label = 1.0 if convention == "paper-eq" else 0.0
    x = np.concatenate([expert, generated], axis=0)
    y = np.concatenate([np.full(len(expert), expert_label),
                        np.full(len(generated), 1.0 - expert_label)])
    logit = disc.mlp.forward(x, train=True)[:, 0]
    # stable BCE on logits: softplus(z) - y z
    p = _sigmoid(logit)
    weights = np.concatenate([np.full(len(expert), 1.0 / len(expert)),
                              np.full(len(generated), 1.0 / len(generated))])
    dlogit = (p - y) * weights
    disc.mlp.backward(dlogit[:, None])
    opt.step()
    logit = disc.mlp.forward(x, train=False)[:, 0]
    bce = np.logaddexp(0.0, logit) - y * logit
    return float(np.sum(bce * weights))


def disc_accuracy(disc: Discriminator, expert: np.ndarray, generated: np.ndarray,
                  convention: str = "paper-eq") -> float:
    de = disc.score(expert)
    dg = disc.score(generated)
    if convention == "paper-eq":
        correct = np.sum(de > 0.5) + np.sum(dg <= 0.5)
    else:
        correct = np.sum(de <= 0.5) + np.sum(dg > 0.5)
    return float(correct / (len(de) + len(dg)))


def policy_reward(disc: Discriminator, obs: np.ndarray, action_onehot: np.ndarray) -> np.ndarray:
    """Reward = -log D(s, a), clamped; the discriminator is the learned
    reward."""
    x = np.concatenate([np.atleast_2d(obs), np.atleast_2d(action_onehot)], axis=1)
    return np.clip(-np.log(disc.score(x)), -REWARD_CLAMP, REWARD_CLAMP)


class StochasticPolicy:
    """Categorical policy over the 25 discrete actions (default), with an
    optional diagonal-Gaussian continuous head."""

    def __init__(self, obs_dim: int, rng: np.random.Generator,
                 n_actions: int = N_ACTIONS, hidden: tuple = (200, 200),
                 continuous: bool = False):
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.continuous = continuous
        n_out = 2 if continuous else n_actions
        spec = MlpSpec(widths=(obs_dim,) + tuple(hidden) + (n_out,), batch_norm=False)
        self.mlp = Mlp(spec, rng)
        self.log_std = ParamTensor(np.zeros(2)) if continuous else None

    # -- discrete head -----------------------------------------------------
    def probs(self, obs: np.ndarray) -> np.ndarray:
        return softmax(self.mlp.forward(np.atleast_2d(obs), train=False))

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> int:
        p = self.probs(obs)[0]
        return int(rng.choice(self.n_actions, p=p))

    def entropy(self, obs: np.ndarray) -> float:
        p = self.probs(obs)
        return float(np.mean(-np.sum(p * np.log(np.clip(p, 1e-300, None)), axis=1)))

    # -- continuous head ---------------------------------------------------
    def gauss_params(self, obs: np.ndarray):
        mean = self.mlp.forward(np.atleast_2d(obs), train=False)
        return mean, np.exp(self.log_std.value)

    def sample_continuous(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mean, std = self.gauss_params(obs)
        return mean[0] + std * rng.standard_normal(2)

    # -- shared ------------------------------------------------------------
    def params(self) -> dict:
        out = dict(self.mlp.params())
        if self.log_std is not None:
            out["log_std"] = self.log_std
        return out

    def state(self) -> dict:
        arrays = dict(self.mlp.state())
        if self.log_std is not None:
            arrays["log_std"] = self.log_std.value
        return arrays

    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self.state().items()}

    def load_state(self, arrays: dict) -> None:
        self.mlp.load_state({k: v for k, v in arrays.items() if k != "log_std"})
        if self.log_std is not None and "log_std" in arrays:
            self.log_std.value = np.array(arrays["log_std"], dtype=np.float64)
            self.log_std.grad = np.zeros_like(self.log_std.value)


def categorical_kl(p_old: np.ndarray, p_new: np.ndarray) -> float:
    p_old = np.clip(p_old, 1e-12, None)
    p_new = np.clip(p_new, 1e-12, None)
    return float(np.mean(np.sum(p_old * (np.log(p_old) - np.log(p_new)), axis=1)))


def policy_update(policy: StochasticPolicy, obs: np.ndarray, actions: np.ndarray,
                  advantages: np.ndarray, config: GailConfig, opt: Adam,
                  beta: float) -> tuple:
    """KL-penalized policy-gradient step with backtracking so the batch
    KL(pi_old || pi_new) never exceeds the trust-region target.

    Returns (stats dict, adapted beta).
    """
    if not np.all(np.isfinite(advantages)):
        raise TrainingDivergenceError("non-finite advantage")
    obs = np.atleast_2d(obs)
    actions = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(advantages, dtype=np.float64)
    n = len(obs)
    lam = config.entropy_coef

    p_old = policy.probs(obs)
    param_snap = policy.snapshot()
    opt_snap = ([m.copy() for m in opt.m], [v.copy() for v in opt.v], opt.t)
    onehot = np.zeros((n, policy.n_actions))
    onehot[np.arange(n), actions] = 1.0

    lr_scale = 1.0
    for attempt in range(9):
        last_loss = 0.0
        for _ in range(config.inner_steps):
            logits = policy.mlp.forward(obs, train=False)
            p = softmax(logits)
            logp = np.log(np.clip(p, 1e-300, None))
            ent_rows = -np.sum(p * logp, axis=1)
            # surrogate: -E[log pi(a|s) A] - lam H + beta KL(p_old || p)
            dz = (adv[:, None] * (p - onehot)
                  + lam * p * (logp + ent_rows[:, None])
                  + beta * (p - p_old)) / n
            last_loss = float(np.mean(-logp[np.arange(n), actions] * adv)
                              - lam * np.mean(ent_rows)
                              + beta * categorical_kl(p_old, p))
            policy.mlp.backward(dz)
            opt.step(lr=config.lr * lr_scale)
        kl = categorical_kl(p_old, policy.probs(obs))
        if kl <= config.kl_target or attempt == 8:
            break
        policy.load_state(param_snap)
        opt.m = [m.copy() for m in opt_snap[0]]
        opt.v = [v.copy() for v in opt_snap[1]]
        opt.t = opt_snap[2]
        lr_scale *= 0.5

    if kl > config.kl_target * 1.5:
        beta = min(beta * 2.0, 1e3)
    elif kl < config.kl_target / 1.5:
        beta = max(beta / 2.0, 1e-3)
    stats = {"kl": kl, "entropy": policy.entropy(obs), "loss": last_loss,
             "lr_scale": lr_scale}
    return stats, beta


@dataclass
class GailResult:
    policy: StochasticPolicy
    disc: Discriminator
    config: GailConfig
    log: list = field(default_factory=list)  # one dict per iteration
    initial_policy_state: dict = field(default_factory=dict)


def train_gail_core(expert_obs: np.ndarray, expert_actions: np.ndarray,
                    sample_episode: Callable, config: GailConfig,
                    n_actions: int = N_ACTIONS) -> GailResult:
    """Alternate rollouts, discriminator steps and policy steps.

    ``sample_episode(policy, rng) -> (obs (H, D), actions (H,))`` generates
    one on-policy episode against the environment model.
    """
    rng = np.random.default_rng(config.seed)
    obs_dim = expert_obs.shape[1]
    policy = StochasticPolicy(obs_dim, rng, n_actions=n_actions,
                              hidden=config.policy_hidden)
    disc = Discriminator(obs_dim + n_actions, rng, hidden=config.disc_hidden)
    policy_opt = Adam(policy.params().values(), lr=config.lr)
    disc_opt = Adam(disc.params().values(), lr=config.disc_lr)
    initial_state = policy.snapshot()
    beta = config.kl_penalty
    log = []

    def onehot(a):
        out = np.zeros((len(a), n_actions))
        out[np.arange(len(a)), a] = 1.0
        return out

    for it in range(config.iterations):
        episodes = [sample_episode(policy, rng) for _ in range(config.episodes)]
        gen_obs = np.concatenate([e[0] for e in episodes], axis=0)
        gen_act = np.concatenate([e[1] for e in episodes], axis=0)
        gen_pairs = np.concatenate([gen_obs, onehot(gen_act)], axis=1)

        rewards = policy_reward(disc, gen_obs, onehot(gen_act))
        returns = np.concatenate([
            discounted_returns(rewards[i:i + len(e[0])], config.gamma)
            for i, e in zip(np.cumsum([0] + [len(e[0]) for e in episodes])[:-1], episodes)])
        # ridge-regularized linear value baseline, refit each iteration;
        # the ridge term keeps it from interpolating small batches, which
        # would zero every advantage
        feats = np.concatenate([gen_obs, np.ones((len(gen_obs), 1))], axis=1)
        gram = feats.T @ feats + 1.0 * np.eye(feats.shape[1])
        w = np.linalg.solve(gram, feats.T @ returns)
        advantages = returns - feats @ w
        spread = advantages.std()
        advantages = (advantages - advantages.mean()) / spread if spread > 1e-8 \
            else np.zeros_like(advantages)

        disc_loss = 0.0
        for _ in range(config.disc_steps):
            eidx = rng.choice(len(expert_obs), min(config.batch, len(expert_obs)),
                              replace=False)
            gidx = rng.choice(len(gen_pairs), min(config.batch, len(gen_pairs)),
                              replace=False)
            expert_pairs = np.concatenate(
                [expert_obs[eidx], onehot(expert_actions[eidx])], axis=1)
            disc_loss = disc_update(disc, expert_pairs, gen_pairs[gidx],
                                    disc_opt, config.convention)

        if config.freeze_policy:
            stats = {"kl": 0.0, "entropy": policy.entropy(gen_obs)}
        else:
            stats, beta = policy_update(policy, gen_obs, gen_act, advantages,
                                        config, policy_opt, beta)
        eidx = rng.choice(len(expert_obs), min(config.batch, len(expert_obs)),
                          replace=False)
        expert_pairs = np.concatenate(
            [expert_obs[eidx], onehot(expert_actions[eidx])], axis=1)
        log.append({
            "iteration": it,
            "disc_loss": disc_loss,
            "disc_accuracy": disc_accuracy(disc, expert_pairs, gen_pairs,
                                           config.convention),
            "mean_reward": float(rewards.mean()),
            "mean_abs_gap": float(np.abs(disc.score(gen_pairs) - 0.5).mean()),
            "entropy": stats["entropy"],
            "kl": stats["kl"],
            "beta": beta,
        })
    return GailResult(policy=policy, disc=disc, config=config, log=log,
                      initial_policy_state=initial_state)


def make_episode_sampler(cohort: CohortDataset, dyn_model: TransitionModel,
                         config: GailConfig):
    """Episode generator: expert test-split initial states, discrete policy
    actions mapped to representative doses, dynamics-model state steps."""
    stats = cohort.norm_stats
    binning = cohort.binning
    starts = [tr.states[0] for tr in cohort.by_split("test")]
    if not starts:
        starts = [tr.states[0] for tr in cohort.by_split("train")]

    def sample_episode(policy: StochasticPolicy, rng: np.random.Generator):
        s0 = starts[rng.integers(len(starts))]
        obs_list, act_list = [], []

        def act(s_win: np.ndarray) -> np.ndarray:
            flat = s_win.reshape(-1)
            a = policy.sample(flat, rng)
            obs_list.append(flat)
            act_list.append(a)
            doses = action_index_to_doses(np.array([a]), binning)[0]
            return normalize_actions(stats, doses)

        rollout(dyn_model, act, [s0, s0, s0], config.horizon)
        return np.stack(obs_list), np.array(act_list, dtype=np.int64)

    return sample_episode


def train_gail(cohort: CohortDataset, dyn_model: TransitionModel,
               config: GailConfig = GailConfig(),
               subgroup: Optional[SubgroupKey] = None) -> GailResult:
    """Fit policy + discriminator against one cohort subgroup's expert
    state-action pairs."""
    data = cohort if subgroup is None else filter_subgroup(cohort, subgroup)
    xs, ys = [], []
    for tr in data.by_split("train"):
        for t in range(tr.T):
            xs.append(state_window(tr.states, t).reshape(-1))
            ys.append(tr.action_bins[t])
    expert_obs = np.stack(xs)
    expert_actions = np.asarray(ys, dtype=np.int64)
    sampler = make_episode_sampler(data, dyn_model, config)
    result = train_gail_core(expert_obs, expert_actions, sampler, config)
    return result


def save_gail(result: GailResult, path) -> None:
    arrays = {f"policy.{k}": v for k, v in result.policy.state().items()}
    arrays.update({f"disc.{k}": v for k, v in result.disc.mlp.state().items()})
    meta = {
        "kind": "gail_bundle",
        "config": result.config.to_json(),
        "obs_dim": result.policy.obs_dim,
        "n_actions": result.policy.n_actions,
        "log": result.log,
    }
    save_checkpoint(path, arrays, meta)


def load_gail(path) -> GailResult:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "gail_bundle":
        raise ValueError(f"{path} is not a GAIL checkpoint")
    cfg_json = dict(meta["config"])
    cfg_json["policy_hidden"] = tuple(cfg_json["policy_hidden"])
    cfg_json["disc_hidden"] = tuple(cfg_json["disc_hidden"])
    config = GailConfig(**cfg_json)
    rng = np.random.default_rng(0)
    policy = StochasticPolicy(meta["obs_dim"], rng, n_actions=meta["n_actions"],
                              hidden=config.policy_hidden)
    policy.load_state({k[7:]: v for k, v in arrays.items() if k.startswith("policy.")})
    disc = Discriminator(meta["obs_dim"] + meta["n_actions"], rng,
                         hidden=config.disc_hidden)
    disc.mlp.load_state({k[5:]: v for k, v in arrays.items() if k.startswith("disc.")})
    return GailResult(policy=policy, disc=disc, config=config, log=meta["log"])
