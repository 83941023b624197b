"""Synthetic generator: determinism, planted disparity, missingness."""

import numpy as np
import pytest

from cfpolicy.synth import (FLUID_POLICY, VASO_POLICY, GroundTruth, SynthConfig,
                            expected_vaso_gap, generate, inject_missingness,
                            load_ground_truth, make_schema, save_ground_truth)


def test_generation_is_bit_deterministic():
    cfg = SynthConfig(n_patients=20, T=20, n_features=12, seed=11,
                      disparity_delta=0.3)
    a, ta = generate(cfg)
    b, tb = generate(cfg)
    for x, y in zip(a.trajectories, b.trajectories):
        assert x.id == y.id and x.attributes == y.attributes
        assert np.array_equal(x.states, y.states)
        assert np.array_equal(x.actions, y.actions)
        assert x.outcome_alive == y.outcome_alive
    for k in ta.severity:
        assert np.array_equal(ta.severity[k], tb.severity[k])


def test_different_seeds_differ():
    a, _ = generate(SynthConfig(n_patients=5, T=10, n_features=10, seed=0))
    b, _ = generate(SynthConfig(n_patients=5, T=10, n_features=10, seed=1))
    assert not np.array_equal(a.trajectories[0].states, b.trajectories[0].states)


def test_schema_layout():
    schema = make_schema(12)
    assert schema.names[:8] == ("mean_bp", "sbp", "heart_rate", "lactate",
                                "resp_rate", "temperature", "age", "mech_vent")
    assert schema.kinds[6] == "demographic" and schema.kinds[7] == "binary"
    assert schema.log_normalized[3] is True  # lactate on the log scale
    assert set(schema.attributes) == {"gender", "ethnicity"}


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_patients=0)
    with pytest.raises(ValueError):
        SynthConfig(T=2)
    with pytest.raises(ValueError):
        SynthConfig(n_features=4)


def test_policy_floor_zeroes_low_propensity():
    # far below the logistic center the propensity drops under the floor
    assert FLUID_POLICY.dose(-5.0) == 0.0
    assert VASO_POLICY.dose(-5.0) == 0.0
    assert FLUID_POLICY.dose(3.0) > 0.9 * FLUID_POLICY.max_dose


def test_planted_disparity_matches_policy_oracle():
    """The realized subgroup vasopressor gap matches the noiseless-policy
    expectation, because dose noise is mean-one multiplicative."""
    cfg = SynthConfig(n_patients=800, T=60, n_features=10, seed=5,
                      disparity_delta=0.5)
    cohort, truth = generate(cfg)
    by = {"F": [], "M": []}
    for tr in cohort.trajectories:
        by[tr.attributes["gender"]].append(tr.actions[:, 1])
    realized_gap = (np.concatenate(by["M"]).mean()
                    - np.concatenate(by["F"]).mean())
    expected = expected_vaso_gap(truth, cohort)
    assert expected > 0.01  # the disparity is material
    assert realized_gap == pytest.approx(expected, rel=0.15)


def test_no_disparity_when_delta_zero():
    cfg = SynthConfig(n_patients=800, T=60, n_features=10, seed=5,
                      disparity_delta=0.0)
    cohort, truth = generate(cfg)
    assert expected_vaso_gap(truth, cohort) == pytest.approx(0.0, abs=0.01)


def test_inject_missingness_rate_and_retention(small_cohort):
    masked = inject_missingness(small_cohort, rate=0.3, seed=9)
    total, missing = 0, 0
    demo_cols = [j for j, k in enumerate(small_cohort.schema.kinds)
                 if k == "demographic"]
    for tr in masked.trajectories:
        total += tr.states.size
        missing += int(np.isnan(tr.states).sum())
        for j in demo_cols:
            assert not np.any(np.isnan(tr.states[:, j]))
        for j in range(tr.states.shape[1]):
            if j not in demo_cols:
                assert np.any(~np.isnan(tr.states[:, j]))  # >=1 observation kept
    assert 0.2 < missing / total < 0.35
    with pytest.raises(ValueError):
        inject_missingness(small_cohort, rate=1.5, seed=0)


def test_ground_truth_json_round_trip(tmp_path, small_truth):
    path = tmp_path / "gt.json"
    save_ground_truth(small_truth, path)
    back = load_ground_truth(path)
    assert back.disparity_delta == small_truth.disparity_delta
    assert back.vaso_policy == small_truth.vaso_policy
    for k in small_truth.severity:
        assert np.allclose(back.severity[k], small_truth.severity[k])


def test_mortality_is_severity_linked():
    # put the mortality threshold inside the realized severity range so the
    # death probability actually varies across patients
    cfg = SynthConfig(n_patients=600, T=60, n_features=10, seed=2,
                      mortality_threshold=0.45, mortality_slope=6.0)
    cohort, truth = generate(cfg)
    dead_sev = [truth.severity[tr.id][-1] for tr in cohort.trajectories
                if not tr.outcome_alive]
    alive_sev = [truth.severity[tr.id][-1] for tr in cohort.trajectories
                 if tr.outcome_alive]
    assert len(dead_sev) >= 30 and len(alive_sev) >= 30
    assert np.mean(dead_sev) > np.mean(alive_sev)
