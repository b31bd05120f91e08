import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadsim.fixture import make_fixture_scenario, make_fixture_truth
from cadsim.kinematics import PoseTrajectory
from cadsim.metrics import (
    AgentTruth,
    compute_batch_metrics,
    compute_min_ade,
    ground_truth_to_dict,
    load_ground_truth,
    metrics_to_csv,
    metrics_to_json,
)
from cadsim.rollout import Rollout, RolloutBatch, RolloutConfig, RolloutDiagnostics, simulate_batch
from oracles import brute_first_collision, brute_min_ade


def _batch(rollouts, diags=None):
    """rollouts: list of {id: (T, 3) positions}."""
    out = []
    for k, r in enumerate(rollouts):
        poses = {i: PoseTrajectory(p, np.zeros(len(p))) for i, p in r.items()}
        out.append(Rollout(poses, diags[k] if diags else RolloutDiagnostics(adv_trials=1)))
    return RolloutBatch("s", tuple(out), {})


def _truth(d):
    return {i: AgentTruth(np.asarray(p, dtype=float), np.ones(len(p), dtype=bool)) for i, p in d.items()}


def test_identical_rollout_scores_zero():
    p = np.random.default_rng(0).normal(size=(10, 3))
    assert compute_min_ade(_batch([{0: p}]), _truth({0: p})) == 0.0


def test_three_four_five():
    T = 7
    rollout = np.tile([3.0, 4.0, 9.0], (T, 1))
    assert compute_min_ade(_batch([{0: rollout}]), _truth({0: np.zeros((T, 3))})) == 5.0


def test_min_over_rollouts():
    T = 4
    truth = np.zeros((T, 3))
    far = np.tile([1.0, 0.0, 0.0], (T, 1))
    near = np.tile([0.0, 0.5, 0.0], (T, 1))
    assert compute_min_ade(_batch([{0: far}, {0: near}]), _truth({0: truth})) == 0.5


def test_only_valid_steps_count():
    truth = np.zeros((4, 3))
    pred = np.array([[1.0, 0, 0], [100.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0]])
    gt = {0: AgentTruth(truth, np.array([True, False, True, True]))}
    assert compute_min_ade(_batch([{0: pred}]), gt) == 1.0


def test_agent_without_valid_truth_is_skipped():
    T = 3
    gt = {
        0: AgentTruth(np.zeros((T, 3)), np.ones(T, dtype=bool)),
        1: AgentTruth(np.zeros((T, 3)), np.zeros(T, dtype=bool)),
    }
    batch = _batch([{0: np.tile([2.0, 0, 0], (T, 1)), 1: np.zeros((T, 3))}])
    with pytest.warns(UserWarning, match="agent 1"):
        assert compute_min_ade(batch, gt) == 2.0


def test_no_scorable_agents():
    gt = {0: AgentTruth(np.zeros((2, 3)), np.zeros(2, dtype=bool))}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            compute_min_ade(_batch([{0: np.zeros((2, 3))}]), gt)


def test_missing_truth_agent():
    with pytest.raises(ValueError, match="agent 4"):
        compute_min_ade(_batch([{4: np.zeros((2, 3))}]), {})


def test_agent_restriction():
    T = 2
    batch = _batch([{0: np.tile([1.0, 0, 0], (T, 1)), 1: np.tile([3.0, 0, 0], (T, 1))}])
    gt = _truth({0: np.zeros((T, 3)), 1: np.zeros((T, 3))})
    assert compute_min_ade(batch, gt) == 2.0
    assert compute_min_ade(batch, gt, agents=[1]) == 3.0


@st.composite
def batches(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    n_agents = draw(st.integers(1, 4))
    T = draw(st.integers(1, 12))
    R = draw(st.integers(1, 6))
    truth = {i: rng.normal(0, 5, size=(T, 3)) for i in range(n_agents)}
    rollouts = [{i: truth[i] + rng.normal(0, 2, size=(T, 3)) for i in truth} for _ in range(R)]
    extra = {i: truth[i] + rng.normal(0, 2, size=(T, 3)) for i in truth}
    return truth, rollouts, extra


@settings(max_examples=200, deadline=None)
@given(batches())
def test_min_ade_property_superset_never_increases(data):
    truth, rollouts, extra = data
    before = compute_min_ade(_batch(rollouts), _truth(truth))
    after = compute_min_ade(_batch(rollouts + [extra]), _truth(truth))
    assert after <= before


@settings(max_examples=300, deadline=None)
@given(batches(), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_min_ade_translation_invariant(data, ox, oy):
    truth, rollouts, _ = data
    offset = np.array([ox, oy, 0.0])
    base = compute_min_ade(_batch(rollouts), _truth(truth))
    moved = compute_min_ade(
        _batch([{i: p + offset for i, p in r.items()} for r in rollouts]),
        _truth({i: p + offset for i, p in truth.items()}),
    )
    assert abs(moved - base) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(batches())
def test_min_ade_matches_brute_force(data):
    truth, rollouts, _ = data
    valid = {i: [True] * len(p) for i, p in truth.items()}
    expected = brute_min_ade(
        [{i: p.tolist() for i, p in r.items()} for r in rollouts], {i: p.tolist() for i, p in truth.items()}, valid
    )
    assert compute_min_ade(_batch(rollouts), _truth(truth)) == pytest.approx(expected, rel=1e-12)


def test_single_agent_collision_rate_zero():
    m = compute_batch_metrics(_batch([{0: np.zeros((3, 3))}] * 4))
    assert m.residual_collision_rate == 0.0
    assert m.mean_trials_adv == 1.0
    assert m.distinct_rollout_count == 1


def test_cross_group_collision_every_rollout():
    """A World-o track parked on the ADV's path hits it in every rollout."""
    T = 10
    rng = np.random.default_rng(1)
    rollouts = []
    for _ in range(5):
        adv = np.column_stack([np.arange(T, dtype=float), rng.normal(0, 0.01, T), np.zeros(T)])
        adv[4] = [4.0, 0.0, 0.0]
        world_o = np.tile([4.0, 0.02, 0.0], (T, 1))
        rollouts.append({0: adv, 5: world_o})
    assert compute_batch_metrics(_batch(rollouts)).residual_collision_rate == 1.0


def test_trial_means_skip_empty_groups():
    diags = [
        RolloutDiagnostics(adv_trials=1, world_p_trials=0),
        RolloutDiagnostics(adv_trials=3, world_p_trials=0),
    ]
    m = compute_batch_metrics(_batch([{0: np.zeros((2, 3))}] * 2, diags))
    assert m.mean_trials_adv == 2.0 and m.mean_trials_world_p == 0.0


def test_collision_rate_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(20):
        rollouts = [{i: rng.uniform(0, 0.6, size=(5, 3)) for i in range(4)} for _ in range(6)]
        expected = sum(brute_first_collision(r, 0.1) is not None for r in rollouts) / len(rollouts)
        assert compute_batch_metrics(_batch(rollouts), 0.1).residual_collision_rate == expected


def test_fixture_batch_metrics_and_outputs(tmp_path):
    sc = make_fixture_scenario(8, 7)
    truth = make_fixture_truth(sc, 7)
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(ground_truth_to_dict(truth)))
    loaded = load_ground_truth(path, horizon=sc.horizon)
    assert set(loaded) == set(truth)
    batch = simulate_batch(sc, RolloutConfig(num_rollouts=8))
    m = compute_batch_metrics(batch, truth=loaded)
    assert m.num_rollouts == 8
    assert 0 <= m.residual_collision_rate <= 1
    assert np.isfinite(m.min_ade) and m.min_ade >= 0
    payload = json.loads(metrics_to_json(batch.scenario_id, m))
    assert payload["scenario_id"] == sc.scenario_id
    lines = metrics_to_csv([(batch.scenario_id, m)]).splitlines()
    assert len(lines) == 2 and lines[0].startswith("scenario_id,")


def test_ground_truth_horizon_check(tmp_path):
    sc = make_fixture_scenario(2, 1, horizon=5)
    path = tmp_path / "t.json"
    path.write_text(json.dumps(ground_truth_to_dict(make_fixture_truth(sc, 1))))
    with pytest.raises(ValueError):
        load_ground_truth(path, horizon=6)
