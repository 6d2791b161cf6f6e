import numpy as np
import pytest
from pydantic import ValidationError

from baselines import (
    BeamConfig,
    BeamItem,
    CemConfig,
    SmcConfig,
    TdsConfig,
    beam_rollout,
    beam_search,
    beam_step,
    cem_rollout,
    effective_sample_size,
    raw_rollout,
    refit_offsets,
    smc_rollout,
    systematic_resample,
    tds_rollout,
    twisted_choice,
    twisted_probabilities,
)
from lpdp import GuidanceConfig, StepRecord, TrajectoryRecord, lpdp_step, prior_order, rollout, score_edit
from oracle import CachedOracle, MotifCountOracle
from proposal import DriftModel, normalized_proposal
from seqcore import KINDS, EditAction, EditSpace, LengthBounds


def test_raw_rollout_has_no_oracle_calls(hashed_model):
    record = raw_rollout("ACGT", 10, hashed_model, seed=[0, 1, 0])
    assert record.method == "raw"
    assert len(record.steps) == 10
    assert record.misses == 0 and record.hits == 0
    assert not any(s.guided for s in record.steps)
    assert raw_rollout("ACGT", 10, hashed_model, seed=[0, 1, 0]).final == record.final


# === Beam ===

@pytest.mark.parametrize("x", ["ACG", "GTTA", "C"])
def test_beam_width_one_depth_one_is_greedy_tilted(hashed_model, hashed_oracle, x):
    beam = beam_search(x, 0, hashed_model, hashed_oracle, BeamConfig(width=1, depth=1, beta=2.0))
    guidance = GuidanceConfig(beta=2.0, delta=0.0, k_root=1, horizon=1)
    action, _ = lpdp_step(x, 0, hashed_model, hashed_oracle, guidance)
    assert beam.first_edit == action


def test_beam_merges_identical_children(uniform):
    oracle = CachedOracle(MotifCountOracle("GT"))
    frontier = beam_step([BeamItem("AC", 0.0)], 0, uniform, oracle, BeamConfig(width=100, beta=1.0))
    states = [item.state for item in frontier]
    assert len(states) == len(set(states))
    # ins A@0 and ins A@1 both give "AAC"; the canonical path survives
    merged = next(item for item in frontier if item.state == "AAC")
    assert merged.path == (EditAction(0, "ins", "A"),)


def test_beam_frontier_is_sorted_and_capped(hashed_model, hashed_oracle):
    frontier = beam_step([BeamItem("ACGT", 0.0)], 0, hashed_model, hashed_oracle, BeamConfig(width=5))
    assert len(frontier) == 5
    assert [i.sort_key for i in frontier] == sorted(i.sort_key for i in frontier)


def test_beam_rollout_respects_window(hashed_model, hashed_oracle):
    record = beam_rollout("ACGT", 6, "first:2", hashed_model, hashed_oracle, BeamConfig(width=2, depth=2), seed=0)
    assert [s.guided for s in record.steps] == [True, True, False, False, False, False]
    assert record.misses > 0


# === CEM ===

def test_cem_elites_cannot_exceed_population():
    with pytest.raises(ValidationError):
        CemConfig(population=4, elites=5)


def test_cem_zero_rounds_is_one_untilted_population(hashed_model, gt_oracle):
    record = cem_rollout("ACGTAC", 6, "first:3", hashed_model, gt_oracle, CemConfig(population=5, elites=2, rounds=0),
                         seed=3)
    assert record.extras["rounds"] == 1
    assert record.extras["offsets"] == {kind: 0.0 for kind in KINDS}
    assert record.method == "cem"
    assert record.misses <= 5


TOKENS = {"sub": "T", "ins": "A", "del": None}


def _record(x0, kinds, guided=True):
    steps = [StepRecord(t, EditAction(0, kind, TOKENS[kind]), -1.0, guided) for t, kind in enumerate(kinds)]
    return TrajectoryRecord(x0=x0, steps=steps)


def test_refit_raises_offset_of_elite_kind(uniform):
    offsets = {kind: 0.0 for kind in KINDS}
    elites = [_record("ACGT", ["ins", "ins"]), _record("ACGT", ["ins", "sub"])]
    refit = refit_offsets(elites, uniform, offsets)
    assert refit["ins"] > refit["sub"] > refit["del"]


def test_refit_keeps_offsets_for_identical_elites(uniform):
    offsets = {"sub": 0.1, "ins": -0.2, "del": 0.3}
    elites = [_record("ACGT", ["ins", "ins"]), _record("ACGT", ["ins", "ins"])]
    assert refit_offsets(elites, uniform, offsets) == offsets


def test_refit_keeps_offsets_without_guided_edits(uniform):
    offsets = {kind: 0.5 for kind in KINDS}
    elites = [_record("ACGT", ["ins"], guided=False), _record("ACGT", ["del"], guided=False)]
    assert refit_offsets(elites, uniform, offsets) == offsets


def test_refit_smoothing_blends_previous_offsets(uniform):
    offsets = {kind: 1.0 for kind in KINDS}
    elites = [_record("ACGT", ["ins", "ins"]), _record("ACGT", ["ins", "sub"])]
    full = refit_offsets(elites, uniform, offsets, smoothing=1.0)
    half = refit_offsets(elites, uniform, offsets, smoothing=0.5)
    for kind in KINDS:
        assert half[kind] == pytest.approx(0.5 * full[kind] + 0.5)


def test_cem_rollout_is_seed_deterministic(hashed_model):
    config = CemConfig(population=4, elites=2, rounds=2)
    a = cem_rollout("ACGTAC", 5, "first:3", hashed_model, CachedOracle(MotifCountOracle("GT")), config, seed=9)
    b = cem_rollout("ACGTAC", 5, "first:3", hashed_model, CachedOracle(MotifCountOracle("GT")), config, seed=9)
    assert a.final == b.final
    assert a.actions == b.actions
    assert a.extras == b.extras


# === SMC ===

def test_ess_of_equal_weights_is_particle_count():
    assert effective_sample_size(np.zeros(16)) == pytest.approx(16.0)
    assert effective_sample_size(np.log([1.0, 1e-12, 1e-12])) == pytest.approx(1.0, abs=1e-6)


def test_systematic_resample_counts():
    idx = systematic_resample(np.array([0.5, 0.25, 0.25, 0.0]), np.random.default_rng(0))
    counts = np.bincount(idx, minlength=4)
    assert counts.tolist() == [2, 1, 1, 0]
    assert np.all(np.diff(idx) >= 0)


def test_systematic_resample_degenerate_weight():
    idx = systematic_resample(np.array([0.0, 1.0, 0.0]), np.random.default_rng(5))
    assert idx.tolist() == [1, 1, 1]


def test_smc_without_tilt_never_resamples(hashed_model, hashed_oracle):
    config = SmcConfig(particles=8, depth=1, proposal_top_k=4, beta=0.0)
    record = smc_rollout("ACGT", 6, "first:4", hashed_model, hashed_oracle, config, seed=0)
    assert record.extras["resamples"] == 0
    assert len(record.steps) == 6
    assert record.method == "smc"


def test_smc_guided_actions_come_from_top_k(hashed_model, hashed_oracle):
    config = SmcConfig(particles=4, depth=2, proposal_top_k=1, beta=5.0)
    record = smc_rollout("ACGT", 3, "all", hashed_model, hashed_oracle, config, seed=2)
    for (x, t), step in zip(record.guided_states(), record.steps):
        probs = normalized_proposal(hashed_model, x, t)
        top = min(probs, key=lambda a: (-probs[a], a.sort_key))
        assert step.action == top


def test_smc_is_seed_deterministic(hashed_model):
    config = SmcConfig(particles=6, depth=1, proposal_top_k=5, beta=3.0)
    runs = [smc_rollout("ACGTAC", 6, "first:4", hashed_model, CachedOracle(MotifCountOracle("GT")), config, seed=4)
            for _ in range(2)]
    assert runs[0].final == runs[1].final
    assert runs[0].extras == runs[1].extras


# === TDS ===

def test_tds_zero_temperature_takes_support_argmax(hashed_model, hashed_oracle):
    config = TdsConfig(temperature=0.0, support_top_k=6, beta=2.0)
    action, log_w = twisted_choice("ACGT", 0, hashed_model, hashed_oracle, config, np.random.default_rng(0))
    table = hashed_model.table("ACGT", 0)
    support = prior_order(table.actions, table)[:6]
    scored = [score_edit("ACGT", a, table, hashed_oracle, 2.0) for a in support]
    assert action == min(scored, key=lambda s: (-s.q, s.action.sort_key)).action
    assert log_w == 0.0


def test_tds_zero_temperature_probabilities_are_one_hot(hashed_model, hashed_oracle):
    config = TdsConfig(temperature=0.0, support_top_k=6, beta=2.0)
    probs = twisted_probabilities("ACGT", 0, hashed_model, hashed_oracle, config)
    action, _ = twisted_choice("ACGT", 0, hashed_model, hashed_oracle, config, np.random.default_rng(0))
    assert len(probs) == 6
    assert probs[action] == 1.0
    assert sum(probs.values()) == 1.0
    assert not any(np.isnan(p) for p in probs.values())


def test_tds_without_tilt_is_renormalized_prior(hashed_model, hashed_oracle):
    config = TdsConfig(temperature=1.0, support_top_k=5, beta=0.0)
    probs = twisted_probabilities("ACGT", 0, hashed_model, hashed_oracle, config)
    prior = normalized_proposal(hashed_model, "ACGT", 0)
    mass = sum(prior[a] for a in probs)
    assert len(probs) == 5
    for a, p in probs.items():
        assert p == pytest.approx(prior[a] / mass)


def test_tds_rollout_records_log_weights(hashed_model, hashed_oracle):
    record = tds_rollout("ACGT", 5, "first:3", hashed_model, hashed_oracle, TdsConfig(support_top_k=4), seed=1)
    assert len(record.extras["log_weights"]) == 3
    assert record.extras["log_weight_total"] == pytest.approx(sum(record.extras["log_weights"]))


def test_guided_methods_share_base_steps_outside_window():
    space = EditSpace(LengthBounds(1, 20))
    model = DriftModel(space, target_length=8)
    oracle = CachedOracle(MotifCountOracle("GT"))
    raw = rollout("ACGTAC", 4, None, model, None, None, [0, 0, 0])
    tds = tds_rollout("ACGTAC", 4, [], model, oracle, TdsConfig(), [0, 0, 0])
    assert tds.actions == raw.actions
    assert tds.misses == 0
