"""Behavioral cloning of expert actions plus its evaluation metrics.

The default observation is a causal sliding window of the current and two
previous timesteps, flattened; regression targets are z-normalized dose
pairs, classification targets the 25-way binned action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cohort import CohortDataset, SubgroupKey, filter_subgroup
from .dynamics import WINDOW, state_window
from .errors import SchemaMismatchError, TrainingDivergenceError, UndefinedMetricError
from .numcore import (Adam, Mlp, MlpSpec, load_checkpoint, nll_loss, rmse_loss,
                      save_checkpoint, softmax)
from .preprocess import N_ACTIONS, ActionBinning, NormStats

# Reference evaluation constants from the original credentialed clinical
# cohorts; reported alongside every evaluation for context. They are not
# attainable on synthetic data.
REFERENCE_METRICS = {
    "binned_action_classification_auroc": {"mean": 0.83, "std": 0.01},
    "continuous_action_regression_rmse_fluid": {"mean": 0.68, "std": 0.05},
    "continuous_action_regression_rmse_vasopressor": {"mean": 0.41, "std": 0.06},
}


@dataclass
class BcHyperParams:
    epochs: int = 300
    batch: int = 64
    lr: float = 3e-4
    hidden: tuple = (64, 64)
    seed: int = 0
    patience: int = 30
    full_encounter: bool = False
    max_windows: Optional[int] = None


@dataclass
class BcPolicy:
    mode: str  # 'regression' | 'classification'
    mlp: Mlp
    n_features: int
    source_subgroup: Optional[SubgroupKey]
    norm_stats: NormStats
    binning: ActionBinning
    full_encounter: bool = False
    encounter_T: Optional[int] = None
    history: list = field(default_factory=list)

    @property
    def input_width(self) -> int:
        if self.full_encounter:
            return self.encounter_T * self.n_features
        return WINDOW * self.n_features


def build_dataset(cohort: CohortDataset, split: str, mode: str,
                  full_encounter: bool = False):
    """Observation matrix and targets for one split."""
    trajs = cohort.by_split(split)
    if full_encounter:
        if mode != "regression":
            raise ValueError("full-encounter flattening supports regression only")
        X = np.stack([tr.states.reshape(-1) for tr in trajs])
        Y = np.stack([tr.actions.reshape(-1) for tr in trajs])
        return X, Y
    xs, ys = [], []
    for tr in trajs:
        for t in range(tr.T):
            xs.append(state_window(tr.states, t).reshape(-1))
            if mode == "regression":
                ys.append(tr.actions[t])
            else:
                ys.append(tr.action_bins[t])
    X = np.stack(xs)
    Y = np.stack(ys) if mode == "regression" else np.asarray(ys, dtype=np.int64)
    return X, Y


def train_bc(cohort: CohortDataset, subgroup: Optional[SubgroupKey], mode: str,
             hp: BcHyperParams = BcHyperParams()) -> BcPolicy:
    """Minimize RMSE (regression) or NLL (classification) on the subgroup's
    train split; returns the best-validation checkpoint."""
    if mode not in ("regression", "classification"):
        raise ValueError(f"unknown mode {mode!r}")
    data = cohort if subgroup is None else filter_subgroup(cohort, subgroup)
    rng = np.random.default_rng(hp.seed)
    X, Y = build_dataset(data, "train", mode, hp.full_encounter)
    Xv, Yv = build_dataset(data, "val", mode, hp.full_encounter)
    if hp.max_windows is not None and len(X) > hp.max_windows:
        keep = rng.choice(len(X), hp.max_windows, replace=False)
        X, Y = X[keep], Y[keep]

    n_out = N_ACTIONS if mode == "classification" else Y.shape[1]
    spec = MlpSpec(widths=(X.shape[1],) + tuple(hp.hidden) + (n_out,),
                   batch_norm=True,
                   output_head="softmax" if mode == "classification" else "linear")
    mlp = Mlp(spec, rng)
    opt = Adam(mlp.params().values(), lr=hp.lr)
    loss_fn = nll_loss if mode == "classification" else rmse_loss

    best = (np.inf, None, -1)
    history = []
    n = len(X)
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hp.batch):
            idx = order[start:start + hp.batch]
            out = mlp.forward(X[idx], train=True)
            loss, grad = loss_fn(out, Y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"BC loss diverged at epoch {epoch}")
            mlp.backward(grad)
            opt.step()
            total += loss * len(idx)
        val_loss, _ = loss_fn(mlp.forward(Xv, train=False), Yv)
        history.append({"epoch": epoch, "train_loss": total / n, "val_loss": val_loss})
        if val_loss < best[0]:
            best = (val_loss, mlp.copy_values(), epoch)
        elif epoch - best[2] >= hp.patience:
            break
    if best[1] is not None:
        mlp.load_state(best[1])
    T = data.trajectories[0].T if hp.full_encounter else None
    return BcPolicy(mode=mode, mlp=mlp, n_features=cohort.schema.n_features,
                    source_subgroup=subgroup, norm_stats=cohort.norm_stats,
                    binning=cohort.binning, full_encounter=hp.full_encounter,
                    encounter_T=T, history=history)


def predict(policy: BcPolicy, window: np.ndarray) -> np.ndarray:
    """Flattened window(s) -> probability vectors or normalized dose pairs."""
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim == 3:  # (B, 3, M) convenience
        x = x.reshape(x.shape[0], -1)
    if x.shape[1] != policy.input_width:
        raise SchemaMismatchError(
            f"expected window width {policy.input_width}, got {x.shape[1]}")
    out = policy.mlp.forward(x, train=False)
    if policy.mode == "classification":
        out = softmax(out)
    return out[0] if single else out


def predict_split(policy: BcPolicy, cohort: CohortDataset, split: str):
    X, Y = build_dataset(cohort, split, policy.mode, policy.full_encounter)
    return predict(policy, X), Y


def eval_rmse(policy: BcPolicy, cohort: CohortDataset, split: str = "test"):
    """(fluid RMSE, vaso RMSE) over all (trajectory, timestep) pairs,
    in normalized units."""
    if policy.mode != "regression":
        raise ValueError("eval_rmse requires a regression policy")
    pred, Y = predict_split(policy, cohort, split)
    if policy.full_encounter:
        pred, Y = pred.reshape(-1, 2), Y.reshape(-1, 2)
    err = pred - Y
    rmse = np.sqrt(np.mean(err * err, axis=0))
    return float(rmse[0]), float(rmse[1])


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-statistic AUROC with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positives and negatives")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def eval_auroc(policy: BcPolicy, cohort: CohortDataset, split: str = "test",
               return_details: bool = False):
    """Macro one-vs-rest AUROC over the 25 classes; absent classes skipped."""
    if policy.mode != "classification":
        raise ValueError("eval_auroc requires a classification policy")
    probs, labels = predict_split(policy, cohort, split)
    if np.unique(labels).size < 2:
        raise UndefinedMetricError("split has fewer than 2 distinct labels")
    per_class = {}
    skipped = []
    for c in range(N_ACTIONS):
        pos = labels == c
        if pos.sum() == 0 or pos.sum() == labels.size:
            skipped.append(c)
            continue
        per_class[c] = binary_auroc(probs[:, c], pos)
    macro = float(np.mean(list(per_class.values())))
    if return_details:
        return macro, per_class, skipped
    return macro


def eval_report(policy: BcPolicy, cohort: CohortDataset, split: str = "test") -> dict:
    report = {
        "mode": policy.mode,
        "split": split,
        "source_subgroup": None if policy.source_subgroup is None
        else str(policy.source_subgroup),
        "history": policy.history,
        "reference_metrics": REFERENCE_METRICS,
    }
    if policy.mode == "regression":
        fluid, vaso = eval_rmse(policy, cohort, split)
        report["rmse_fluid"], report["rmse_vaso"] = fluid, vaso
    else:
        macro, per_class, skipped = eval_auroc(policy, cohort, split, return_details=True)
        report["macro_auroc"] = macro
        report["per_class_auroc"] = {str(k): v for k, v in per_class.items()}
        report["skipped_classes"] = skipped
    return report


def save_policy(policy: BcPolicy, path) -> None:
    meta = {
        "kind": "bc_policy",
        "mode": policy.mode,
        "n_features": policy.n_features,
        "widths": list(policy.mlp.spec.widths),
        "source_subgroup": None if policy.source_subgroup is None
        else [policy.source_subgroup.attribute, policy.source_subgroup.value],
        "norm_stats": policy.norm_stats.to_json(),
        "binning": policy.binning.to_json(),
        "full_encounter": policy.full_encounter,
        "encounter_T": policy.encounter_T,
        "history": policy.history,
    }
    save_checkpoint(path, policy.mlp.state(), meta)


def load_policy(path) -> BcPolicy:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "bc_policy":
        raise ValueError(f"{path} is not a BC policy checkpoint")
    spec = MlpSpec(widths=tuple(meta["widths"]), batch_norm=True,
                   output_head="softmax" if meta["mode"] == "classification" else "linear")
    mlp = Mlp(spec, np.random.default_rng(0))
    mlp.load_state(arrays)
    sg = meta["source_subgroup"]
    return BcPolicy(
        mode=meta["mode"], mlp=mlp, n_features=meta["n_features"],
        source_subgroup=None if sg is None else SubgroupKey(sg[0], sg[1]),
        norm_stats=NormStats.from_json(meta["norm_stats"]),
        binning=ActionBinning.from_json(meta["binning"]),
        full_encounter=meta["full_encounter"], encounter_T=meta["encounter_T"],
        history=meta["history"])
