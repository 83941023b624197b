"""Normalization, imputation, dose equivalence, and discrete action binning.

Statistics are fitted on the train split only. Log-flagged features are
normalized on the ln(1+x) scale. Imputation happens on raw values before
normalization: linear interpolation inside gaps, carry-forward after the
last observation, train-split mean before the first.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .cohort import CohortDataset, PatientTrajectory
from .errors import DegenerateBinningError, IntegrityError, MissingFeatureError
from .kernels import fill_series

# norepinephrine-equivalence conversions; divisions are exact divisions, not
# reciprocal multiplications, so e.g. 7 ug/kg/min dopamine maps to exactly 7/100
VASOPRESSOR_FACTORS = {
    "norepinephrine": lambda d: d,
    "phenylephrine": lambda d: d / 10.0,
    "dopamine": lambda d: d / 100.0,
    "vasopressin": lambda d: d * 2.5,
}
PASS_THROUGH_AGENTS = ("dobutamine", "milrinone")

N_BINS_PER_DRUG = 5
N_ACTIONS = N_BINS_PER_DRUG * N_BINS_PER_DRUG


@dataclass
class NormStats:
    """Per-feature z-normalization statistics plus action statistics.

    ``means``/``stds`` are on the (optionally log) transformed scale;
    ``raw_means`` are untransformed observed means used for imputation.
    """

    means: np.ndarray       # (M,)
    stds: np.ndarray        # (M,)
    log_flags: np.ndarray   # (M,) bool
    raw_means: np.ndarray   # (M,)
    action_mean: np.ndarray  # (2,)
    action_std: np.ndarray   # (2,)

    def to_json(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "log_flags": self.log_flags.astype(bool).tolist(),
            "raw_means": self.raw_means.tolist(),
            "action_mean": self.action_mean.tolist(),
            "action_std": self.action_std.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NormStats":
        return cls(
            means=np.array(obj["means"], dtype=np.float64),
            stds=np.array(obj["stds"], dtype=np.float64),
            log_flags=np.array(obj["log_flags"], dtype=bool),
            raw_means=np.array(obj["raw_means"], dtype=np.float64),
            action_mean=np.array(obj["action_mean"], dtype=np.float64),
            action_std=np.array(obj["action_std"], dtype=np.float64),
        )


@dataclass
class ActionBinning:
    """Quantile cutoffs over nonzero train doses plus per-bin median doses.

    Cutoffs are the 25/50/75% linear-interpolation quantiles; the zero
    boundary is implicit (dose == 0 is always bin 0). ``*_levels`` hold a
    representative (median) raw dose per bin for mapping discrete actions
    back to doses.
    """

    fluid_cutoffs: np.ndarray  # (3,) ascending
    vaso_cutoffs: np.ndarray   # (3,) ascending
    fluid_levels: Optional[np.ndarray] = None  # (5,)
    vaso_levels: Optional[np.ndarray] = None   # (5,)

    def to_json(self) -> dict:
        return {
            "quantile_convention": "linear",
            "fluid_cutoffs": self.fluid_cutoffs.tolist(),
            "vaso_cutoffs": self.vaso_cutoffs.tolist(),
            "fluid_levels": None if self.fluid_levels is None else self.fluid_levels.tolist(),
            "vaso_levels": None if self.vaso_levels is None else self.vaso_levels.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ActionBinning":
        def arr(key):
            v = obj.get(key)
            return None if v is None else np.array(v, dtype=np.float64)
        return cls(
            fluid_cutoffs=np.array(obj["fluid_cutoffs"], dtype=np.float64),
            vaso_cutoffs=np.array(obj["vaso_cutoffs"], dtype=np.float64),
            fluid_levels=arr("fluid_levels"),
            vaso_levels=arr("vaso_levels"),
        )


def _binary_mask(cohort: CohortDataset) -> np.ndarray:
    return np.array([k == "binary" for k in cohort.schema.kinds])


def fit_norm_stats(cohort: CohortDataset) -> NormStats:
    """Mean/std per feature over observed train-split cells (population std)."""
    train = cohort.by_split("train")
    if not train:
        raise IntegrityError("train split is empty")
    M = cohort.schema.n_features
    log_flags = np.array(cohort.schema.log_normalized, dtype=bool)
    binary = _binary_mask(cohort)
    all_states = np.concatenate([tr.states for tr in train], axis=0)
    all_actions = np.concatenate([tr.actions for tr in train], axis=0)

    means = np.zeros(M)
    stds = np.ones(M)
    raw_means = np.zeros(M)
    for j in range(M):
        col = all_states[:, j]
        obs = col[~np.isnan(col)]
        if obs.size == 0:
            raise MissingFeatureError(
                f"feature {cohort.schema.names[j]!r} has no observed train cells")
        raw_means[j] = obs.mean()
        if binary[j]:
            means[j], stds[j] = 0.0, 1.0
            continue
        vals = np.log1p(obs) if log_flags[j] else obs
        means[j] = vals.mean()
        stds[j] = vals.std()  # population (ddof=0)
    return NormStats(
        means=means, stds=stds, log_flags=log_flags, raw_means=raw_means,
        action_mean=all_actions.mean(axis=0), action_std=all_actions.std(axis=0))


def apply_norm(traj: PatientTrajectory, stats: NormStats,
               binary: Optional[np.ndarray] = None,
               normalize_actions: bool = True) -> PatientTrajectory:
    """z-normalize states (after optional ln(1+x)) and actions."""
    states = traj.states.copy()
    M = states.shape[1]
    if binary is None:
        binary = np.zeros(M, dtype=bool)
    for j in range(M):
        if binary[j]:
            continue
        col = states[:, j]
        vals = np.log1p(col) if stats.log_flags[j] else col
        if stats.stds[j] == 0:
            states[:, j] = np.where(np.isnan(col), np.nan, 0.0)
        else:
            states[:, j] = (vals - stats.means[j]) / stats.stds[j]
    actions = traj.actions
    if normalize_actions:
        std = np.where(stats.action_std == 0, 1.0, stats.action_std)
        actions = (traj.actions - stats.action_mean) / std
    out = replace(traj, states=states)
    out.actions = np.asarray(actions, dtype=np.float64)
    return out


def invert_norm_feature(stats: NormStats, j: int, z: np.ndarray) -> np.ndarray:
    """Map normalized feature values back to the raw scale."""
    vals = z * stats.stds[j] + stats.means[j]
    return np.expm1(vals) if stats.log_flags[j] else vals


def denormalize_actions(stats: NormStats, actions: np.ndarray) -> np.ndarray:
    return actions * stats.action_std + stats.action_mean


def normalize_actions(stats: NormStats, actions: np.ndarray) -> np.ndarray:
    std = np.where(stats.action_std == 0, 1.0, stats.action_std)
    return (actions - stats.action_mean) / std


def impute(traj: PatientTrajectory, stats: NormStats) -> PatientTrajectory:
    """Fill every missing cell; idempotent on fully observed trajectories."""
    states = traj.states.copy()
    for j in range(states.shape[1]):
        col = states[:, j]
        if np.any(np.isnan(col)):
            states[:, j] = fill_series(col, stats.raw_means[j])
    return replace(traj, states=states)


def norepi_equivalent(drug: str, dose: float) -> float:
    """Convert a vasopressor dose to norepinephrine-equivalent units."""
    if dose < 0:
        raise ValueError(f"dose must be nonnegative, got {dose}")
    drug = drug.lower()
    if drug in VASOPRESSOR_FACTORS:
        return VASOPRESSOR_FACTORS[drug](dose)
    if drug in PASS_THROUGH_AGENTS:
        warnings.warn(f"no norepinephrine equivalence for {drug!r}; dose passed through",
                      stacklevel=2)
        return dose
    raise ValueError(f"unknown vasopressor {drug!r}")


def fit_binning(cohort: CohortDataset) -> ActionBinning:
    """25/50/75% quantile cutoffs of nonzero train doses, plus bin levels."""
    train = cohort.by_split("train")
    doses = np.concatenate([tr.actions for tr in train], axis=0)
    cutoffs = []
    for d, name in ((0, "fluid"), (1, "vaso")):
        nonzero = doses[:, d][doses[:, d] > 0]
        if nonzero.size == 0:
            raise DegenerateBinningError(f"no nonzero {name} doses in train split")
        cutoffs.append(np.quantile(nonzero, [0.25, 0.5, 0.75], method="linear"))
    binning = ActionBinning(fluid_cutoffs=cutoffs[0], vaso_cutoffs=cutoffs[1])

    levels = []
    for d, cuts in ((0, binning.fluid_cutoffs), (1, binning.vaso_cutoffs)):
        lv = np.zeros(N_BINS_PER_DRUG)
        bins = _bin_dose(doses[:, d], cuts)
        for b in range(1, N_BINS_PER_DRUG):
            members = doses[:, d][bins == b]
            if members.size:
                lv[b] = np.median(members)
            else:  # collapsed cutoffs can empty a bin; fall back to the cutoff
                lv[b] = cuts[min(b - 1, len(cuts) - 1)]
        levels.append(lv)
    binning.fluid_levels, binning.vaso_levels = levels
    return binning


def _bin_dose(dose: np.ndarray, cutoffs: np.ndarray) -> np.ndarray:
    """Per-drug bin: 0 iff dose == 0, else 1 + #cutoffs strictly below dose."""
    dose = np.asarray(dose, dtype=np.float64)
    b = 1 + np.sum(dose[..., None] > cutoffs[None, :], axis=-1)
    return np.where(dose == 0, 0, b).astype(np.int64)


def bin_action(doses, binning: ActionBinning) -> int:
    """Joint 25-way discrete action index: fluid_bin * 5 + vaso_bin."""
    fluid, vaso = float(doses[0]), float(doses[1])
    if fluid < 0 or vaso < 0:
        raise ValueError("doses must be nonnegative")
    fb = int(_bin_dose(np.array([fluid]), binning.fluid_cutoffs)[0])
    vb = int(_bin_dose(np.array([vaso]), binning.vaso_cutoffs)[0])
    return fb * N_BINS_PER_DRUG + vb


def bin_actions_batch(actions: np.ndarray, binning: ActionBinning) -> np.ndarray:
    fb = _bin_dose(actions[:, 0], binning.fluid_cutoffs)
    vb = _bin_dose(actions[:, 1], binning.vaso_cutoffs)
    return fb * N_BINS_PER_DRUG + vb


def action_index_to_doses(index: np.ndarray, binning: ActionBinning) -> np.ndarray:
    """Map joint action indices to representative raw dose pairs."""
    index = np.asarray(index, dtype=np.int64)
    fb, vb = index // N_BINS_PER_DRUG, index % N_BINS_PER_DRUG
    return np.stack([binning.fluid_levels[fb], binning.vaso_levels[vb]], axis=-1)


def preprocess_cohort(cohort: CohortDataset) -> CohortDataset:
    """Full pipeline: fit stats + binning on train, impute, bin, normalize.

    Requires split tags. Returns a new cohort whose states/actions are
    normalized, with ``action_bins`` attached and statistics stored on the
    dataset for serialization alongside trained models.
    """
    stats = fit_norm_stats(cohort)
    binning = fit_binning(cohort)
    binary = _binary_mask(cohort)
    out_trajs = []
    for tr in cohort.trajectories:
        filled = impute(tr, stats)
        bins = bin_actions_batch(filled.actions, binning)
        normed = apply_norm(filled, stats, binary=binary)
        normed.action_bins = bins
        out_trajs.append(normed)
    return CohortDataset(schema=cohort.schema, trajectories=out_trajs,
                         split=dict(cohort.split), norm_stats=stats, binning=binning)
