"""Counterfactual policy evaluation: distribution discrepancy metrics and
the per-subgroup deviation report.

The headline KL direction is D_KL(realized || counterfactual); the reverse
direction is also recorded for diagnostics. The counterfactual discrete
distribution uses mean predicted probability vectors as primary and the
argmax histogram as secondary.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bc import BcPolicy, predict
from .cohort import CohortDataset, SubgroupKey, filter_subgroup
from .dynamics import state_window
from .errors import EmptySubgroupError
from .kernels import rbf_mmd2_biased
from .preprocess import N_ACTIONS, action_index_to_doses, denormalize_actions

DEFAULT_EPS = 1e-6


# ---------------------------------------------------------------------------
# metric primitives


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = DEFAULT_EPS) -> float:
    """KL(p || q) in nats after additive smoothing on both arguments."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    k = p.size
    if eps > 0:
        p = (p + eps) / (1.0 + k * eps)
        q = (q + eps) / (1.0 + k * eps)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence; bounded by ln 2, no smoothing needed."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m, eps=0.0) + 0.5 * kl_divergence(q, m, eps=0.0)


def mmd_rbf(x, y, bandwidth: Optional[float] = None) -> float:
    """RBF-kernel MMD (biased V-statistic, square-rooted).

    Bandwidth defaults to the median pairwise distance of the pooled
    samples, falling back to 1.0 when that median is zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if len(x) < 2 or len(y) < 2:
        raise ValueError("mmd_rbf needs at least 2 samples per side")
    if bandwidth is None:
        pooled = np.concatenate([x, y], axis=0)
        d2 = (np.sum(pooled**2, axis=1)[:, None] + np.sum(pooled**2, axis=1)[None, :]
              - 2.0 * pooled @ pooled.T)
        iu = np.triu_indices(len(pooled), k=1)
        bandwidth = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
        if bandwidth == 0.0:
            warnings.warn("zero median pairwise distance; falling back to bandwidth 1.0",
                          stacklevel=2)
            bandwidth = 1.0
    mmd2 = rbf_mmd2_biased(x, y, bandwidth)
    return float(np.sqrt(max(mmd2, 0.0)))


def wasserstein1(x, y) -> float:
    """Empirical 1-D W1: mean absolute difference of order statistics,
    quantile-aligning the larger sample when sizes differ."""
    x = np.sort(np.asarray(x, dtype=np.float64).ravel())
    y = np.sort(np.asarray(y, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("wasserstein1 needs non-empty samples")
    if x.size != y.size:
        n = min(x.size, y.size)
        grid = (np.arange(n) + 0.5) / n
        if x.size > n:
            x = np.quantile(x, grid, method="linear")
        else:
            y = np.quantile(y, grid, method="linear")
    return float(np.mean(np.abs(x - y)))


# ---------------------------------------------------------------------------
# empirical action distributions


@dataclass
class ActionDistribution:
    """Discrete 25-bin distribution plus pooled continuous dose samples."""

    probs: np.ndarray             # primary 25-vector (mean predicted / histogram)
    n: int
    probs_argmax: Optional[np.ndarray] = None  # secondary argmax histogram
    fluid: Optional[np.ndarray] = None
    vaso: Optional[np.ndarray] = None


def _histogram(labels: np.ndarray) -> np.ndarray:
    h = np.bincount(labels, minlength=N_ACTIONS).astype(np.float64)
    return h / h.sum()


def empirical_action_dist(policy: Optional[BcPolicy], cohort: CohortDataset,
                          split: str = "test", per_timestep: bool = False):
    """Pooled (or per-timestep list of) action distributions.

    With ``policy=None`` the realized distribution of recorded expert
    actions is returned; otherwise the policy's predictions on the same
    states. Doses are reported in raw units.
    """
    trajs = cohort.by_split(split) if cohort.split is not None else cohort.trajectories
    if not trajs:
        raise EmptySubgroupError(f"no trajectories in split {split!r}")
    stats = cohort.norm_stats
    binning = cohort.binning
    T = trajs[0].T

    def dist_at(ts) -> ActionDistribution:
        if policy is None:
            labels = np.concatenate([tr.action_bins[ts] for tr in trajs])
            doses = np.concatenate([denormalize_actions(stats, tr.actions[ts])
                                    for tr in trajs], axis=0)
            h = _histogram(labels)
            return ActionDistribution(probs=h, n=labels.size, probs_argmax=h,
                                      fluid=doses[:, 0], vaso=doses[:, 1])
        windows = np.stack([state_window(tr.states, t).reshape(-1)
                            for tr in trajs for t in np.atleast_1d(ts)])
        out = predict(policy, windows)
        if policy.mode == "classification":
            labels = np.argmax(out, axis=1)
            doses = action_index_to_doses(labels, binning)
            return ActionDistribution(
                probs=out.mean(axis=0), n=len(out), probs_argmax=_histogram(labels),
                fluid=doses[:, 0], vaso=doses[:, 1])
        doses = denormalize_actions(stats, out)
        return ActionDistribution(probs=np.full(N_ACTIONS, 1.0 / N_ACTIONS),
                                  n=len(out), fluid=doses[:, 0], vaso=doses[:, 1])

    if per_timestep:
        return [dist_at(np.array([t])) for t in range(T)]
    return dist_at(np.arange(T))


# ---------------------------------------------------------------------------
# report


@dataclass
class DiscrepancyReport:
    source_subgroup: str
    target_subgroup: str
    metrics: dict                 # aggregate metric name -> value
    control: dict                 # same metrics, source-vs-own-policy
    per_timestep: Optional[dict] = None  # metric name -> list of T values
    mean_actions: dict = field(default_factory=dict)  # series per subgroup/drug
    eps: float = DEFAULT_EPS
    sample_sizes: dict = field(default_factory=dict)
    seed: int = 0
    conventions: dict = field(default_factory=lambda: {
        "kl_direction": "realized||counterfactual",
        "counterfactual_probs": "mean-predicted (argmax secondary)",
        "quantile_convention": "linear",
    })

    def to_json(self) -> dict:
        return {
            "source_subgroup": self.source_subgroup,
            "target_subgroup": self.target_subgroup,
            "metrics": self.metrics,
            "control": self.control,
            "per_timestep": self.per_timestep,
            "mean_actions": self.mean_actions,
            "eps": self.eps,
            "sample_sizes": self.sample_sizes,
            "seed": self.seed,
            "conventions": self.conventions,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiscrepancyReport":
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DiscrepancyReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_csv(self, path) -> None:
        """Flat CSV of every metric cell (aggregate, control, per-timestep)."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scope", "timestep", "metric", "value"])
            for name, v in self.metrics.items():
                writer.writerow(["aggregate", "", name, repr(v)])
            for name, v in self.control.items():
                writer.writerow(["control", "", name, repr(v)])
            if self.per_timestep:
                for name, series in self.per_timestep.items():
                    for t, v in enumerate(series):
                        writer.writerow(["per_timestep", t, name, repr(v)])


def _pair_metrics(realized: ActionDistribution, counterfactual: ActionDistribution,
                  eps: float) -> dict:
    out = {
        "kl": kl_divergence(realized.probs, counterfactual.probs, eps),
        "kl_reverse": kl_divergence(counterfactual.probs, realized.probs, eps),
        "js": js_divergence(realized.probs, counterfactual.probs),
        "w1_fluid": wasserstein1(realized.fluid, counterfactual.fluid),
        "w1_vaso": wasserstein1(realized.vaso, counterfactual.vaso),
    }
    xa = np.stack([realized.fluid, realized.vaso], axis=1)
    ya = np.stack([counterfactual.fluid, counterfactual.vaso], axis=1)
    out["mmd"] = mmd_rbf(xa, ya) if len(xa) >= 2 and len(ya) >= 2 else 0.0
    return out


def counterfactual_report(policy: BcPolicy, cohort: CohortDataset,
                          target: SubgroupKey, eps: float = DEFAULT_EPS,
                          seed: int = 0, per_timestep: bool = False) -> DiscrepancyReport:
    """All discrepancy metrics between the realized actions of the target
    subgroup and the source-trained policy's counterfactual predictions,
    with a same-subgroup control baseline."""
    target_cohort = filter_subgroup(cohort, target)
    realized = empirical_action_dist(None, target_cohort, "test")
    counterfactual = empirical_action_dist(policy, target_cohort, "test")
    metrics = _pair_metrics(realized, counterfactual, eps)

    control = {}
    if policy.source_subgroup is not None:
        source_cohort = filter_subgroup(cohort, policy.source_subgroup)
        ctrl_real = empirical_action_dist(None, source_cohort, "test")
        ctrl_cf = empirical_action_dist(policy, source_cohort, "test")
        control = _pair_metrics(ctrl_real, ctrl_cf, eps)

    per_t = None
    mean_actions = {}
    if per_timestep:
        real_t = empirical_action_dist(None, target_cohort, "test", per_timestep=True)
        cf_t = empirical_action_dist(policy, target_cohort, "test", per_timestep=True)
        per_t = {}
        for name in ("kl", "kl_reverse", "js", "mmd", "w1_fluid", "w1_vaso"):
            per_t[name] = [
                _pair_metrics(r, c, eps)[name] for r, c in zip(real_t, cf_t)]
        mean_actions[f"{target}:realized_fluid"] = [float(d.fluid.mean()) for d in real_t]
        mean_actions[f"{target}:realized_vaso"] = [float(d.vaso.mean()) for d in real_t]
        mean_actions[f"{target}:counterfactual_fluid"] = [float(d.fluid.mean()) for d in cf_t]
        mean_actions[f"{target}:counterfactual_vaso"] = [float(d.vaso.mean()) for d in cf_t]

    return DiscrepancyReport(
        source_subgroup="all" if policy.source_subgroup is None
        else str(policy.source_subgroup),
        target_subgroup=str(target),
        metrics=metrics, control=control, per_timestep=per_t,
        mean_actions=mean_actions, eps=eps,
        sample_sizes={"target": realized.n, "counterfactual": counterfactual.n},
        seed=seed)
