import numpy as np
import pytest
from pydantic import ValidationError

from baselines import raw_rollout
from errors import ConfigError, EmptyActionSetError
from exactdp import enumerate_paths
from lpdp import (
    GuidanceConfig,
    LocalNode,
    LocalSolver,
    backup_value,
    candidate_set,
    guided_rollout,
    local_neighborhood,
    lpdp_step,
    prior_order,
    resolve_window,
    root_band,
    root_scores,
    score_edit,
)
from oracle import CachedOracle, HashedOracle, MotifCountOracle, cache_stats
from proposal import DriftModel, HashedRateModel, UniformModel
from seqcore import EditAction, EditSpace, LengthBounds, apply_edit, parse_action


def test_config_defaults_and_alias():
    config = GuidanceConfig()
    assert (config.beta, config.delta, config.k_root, config.radius, config.k_loc) == (20.0, 2.0, 16, 1, 8)
    assert (config.horizon, config.lam, config.tau, config.gamma) == (2, 0.5, 1.0, 1.0)
    assert GuidanceConfig.model_validate({"lambda": 0.25}).lam == 0.25
    assert GuidanceConfig(delta="inf").delta == float("inf")


@pytest.mark.parametrize("bad", [{"tau": 0}, {"gamma": 1.5}, {"rule": "typed"}, {"horizon": 0}, {"temp": 1}])
def test_config_rejects(bad):
    with pytest.raises(ValidationError):
        GuidanceConfig(**bad)


def test_config_label():
    assert GuidanceConfig(horizon=1).label == "onestep"
    assert GuidanceConfig(lam=0.0).label == "onestep"
    assert GuidanceConfig(rule="st_after", backup="lse").label == "lpdp-st_after-lse"


@pytest.mark.parametrize("window,expected", [
    ("first:3", {0, 1, 2}),
    ("last:2", {8, 9}),
    ("mid:2", {4, 5}),
    ("0,3,7", {0, 3, 7}),
    ("none", set()),
    (None, set()),
    ([1, 2], {1, 2}),
])
def test_resolve_window(window, expected):
    assert resolve_window(window, 10) == expected


@pytest.mark.parametrize("window", ["first:11", "top:2", "first:x", "3,12", "a,b"])
def test_resolve_window_errors(window):
    with pytest.raises(ConfigError):
        resolve_window(window, 10)


def test_resolve_window_all():
    assert resolve_window("all", 4) == {0, 1, 2, 3}


def test_root_band_keeps_ties_at_delta_zero(uniform, gt_oracle):
    scored = root_scores("GA", 0, uniform, gt_oracle, GuidanceConfig(beta=2.0))
    band = root_band(scored, 0.0, None)
    assert [str(s.action) for s in band] == ["sub@1:T", "ins@1:T"]


def test_root_band_cap_and_threshold(hashed_model, hashed_oracle):
    scored = root_scores("GATTACA", 0, hashed_model, hashed_oracle, GuidanceConfig(beta=1.0))
    q_star = max(s.q for s in scored)
    full = root_band(scored, 2.0, None)
    assert all(s.q >= q_star - 2.0 for s in full)
    outside = {s.action for s in scored} - {s.action for s in full}
    assert all(s.q < q_star - 2.0 for s in scored if s.action in outside)
    assert root_band(scored, 2.0, 2) == full[:2]
    with pytest.raises(EmptyActionSetError):
        root_band([], 1.0, None)


def test_score_edit_tilts_by_reward(uniform, gt_oracle):
    table = uniform.table("GA", 0)
    s = score_edit("GA", EditAction(1, "sub", "T"), table, gt_oracle, 3.0)
    assert s.delta_r == 1
    assert s.q == pytest.approx(s.log_p0 + 3.0)


def test_local_neighborhood_radius(uniform):
    prev = EditAction(2, "sub", "A")
    sites = {a.site for a in local_neighborhood("ACATT", prev, 1, uniform.space)}
    assert sites == {1, 2, 3}
    assert len(local_neighborhood("ACATT", prev, None, uniform.space)) == len(uniform.space.actions("ACATT"))


def test_st_after_is_subset_of_mixed_shortlist(hashed_model):
    z, prev = "GATTA", EditAction(2, "ins", "T")
    mixed = candidate_set(z, prev, "mixed", 4, hashed_model, 0, 1)
    after = candidate_set(z, prev, "st_after", 4, hashed_model, 0, 1)
    assert set(after) <= set(mixed)
    assert len(mixed) == 4
    assert all(b.kind == "ins" for b in after) or after == mixed


def test_st_after_falls_back_to_shortlist():
    space = EditSpace(LengthBounds(1, 8))
    model = DriftModel(space, type_weights={"sub": 6.0}, target_length=4, drift_gain=0.0)
    prev = EditAction(1, "del")
    mixed = candidate_set("ACG", prev, "mixed", 2, model, 0, None)
    assert all(b.kind == "sub" for b in mixed)
    assert candidate_set("ACG", prev, "st_after", 2, model, 0, None) == mixed


def test_st_first_reaches_below_the_shortlist():
    space = EditSpace(LengthBounds(1, 8))
    model = DriftModel(space, type_weights={"sub": 5.0}, target_length=4, drift_gain=0.0)
    prev = EditAction(1, "del")
    typed = candidate_set("ACGT", prev, "st_first", 2, model, 0, None)
    ranked = prior_order(space.actions("ACGT"), model.table("ACGT", 0))
    assert [b.kind for b in typed] == ["del", "del"]
    assert min(ranked.index(b) for b in typed) >= 2


def test_unknown_rule(uniform):
    with pytest.raises(ConfigError):
        candidate_set("ACG", EditAction(0, "del"), "greedy", 2, uniform, 0)


def test_backup_depth_zero_is_zero(uniform, gt_oracle):
    assert backup_value("ACG", EditAction(0, "sub", "A"), 0, GuidanceConfig(), uniform, gt_oracle, 0) == 0.0


def test_lse_dominates_max(hashed_model, hashed_oracle):
    base = GuidanceConfig(beta=1.0, k_loc=3, radius=1, horizon=3)
    prev = EditAction(1, "sub", "G")
    v_max = backup_value("AGTA", prev, 2, base.model_copy(update={"backup": "max"}), hashed_model, hashed_oracle, 0)
    v_lse = backup_value("AGTA", prev, 2, base.model_copy(update={"backup": "lse"}), hashed_model, hashed_oracle, 0)
    assert v_lse >= v_max


def test_backup_at_dead_end_is_zero():
    space = EditSpace(LengthBounds(1, 8), left_fixed=2, right_fixed=2)
    model = UniformModel(space)
    oracle = CachedOracle(MotifCountOracle("A"))
    solver = LocalSolver(GuidanceConfig(radius=0), model, oracle)
    # editable span is [2, 2]: only insertions at site 2, all out of radius 0 of anchor 0
    assert solver.value(LocalNode("AAAA", EditAction(0, "sub", "A"), 2), 0) == 0.0


def test_one_step_reduction_matches_band_argmax(hashed_model, hashed_oracle, small_config):
    band = root_band(root_scores("GATTA", 0, hashed_model, hashed_oracle, small_config), small_config.delta,
                     small_config.k_root)
    for config in (small_config.model_copy(update={"horizon": 1}), small_config.model_copy(update={"lam": 0.0})):
        action, scored = lpdp_step("GATTA", 0, hashed_model, hashed_oracle, config)
        assert action == band[0].action
        assert all(s.v_local == 0.0 for s in scored)


def test_lpdp_score_combines_q_and_value(hashed_model, hashed_oracle, small_config):
    action, scored = lpdp_step("GATTA", 0, hashed_model, hashed_oracle, small_config)
    for s in scored:
        assert s.s_lpdp == pytest.approx(s.q + small_config.lam * s.v_local)
        child = apply_edit("GATTA", s.action)
        expected = backup_value(child, s.action, small_config.horizon - 1, small_config, hashed_model,
                                hashed_oracle, 0)
        assert s.v_local == pytest.approx(expected)
    assert action == min(scored, key=lambda s: (-s.s_lpdp, s.action.sort_key)).action


def test_reward_offset_leaves_guidance_unchanged(hashed_model, small_config):
    plain = CachedOracle(HashedOracle(seed=11, scale=2.0))
    shifted = CachedOracle(HashedOracle(seed=11, scale=2.0, offset=17.0))
    for x in ("GATTA", "ACGTAC", "TT"):
        action, scored = lpdp_step(x, 0, hashed_model, plain, small_config)
        shifted_action, shifted_scored = lpdp_step(x, 0, hashed_model, shifted, small_config)
        assert shifted_action == action
        assert [s.action for s in shifted_scored] == [s.action for s in scored]
        for a, b in zip(scored, shifted_scored):
            assert b.delta_r == pytest.approx(a.delta_r, abs=1e-9)
            assert b.q == pytest.approx(a.q, abs=1e-9)
            assert b.v_local == pytest.approx(a.v_local, abs=1e-9)


class StateScaledRates(HashedRateModel):
    """Every rate at x multiplied by exp(3 |x|)."""

    def log_rates(self, x, actions, t):
        return super().log_rates(x, actions, t) + 3.0 * len(x)


def test_rate_scale_leaves_choices_unchanged(space, hashed_oracle, small_config):
    base = HashedRateModel(space, seed=7, scale=1.0)
    scaled = StateScaledRates(space, seed=7, scale=1.0)
    for x in ("GATTA", "ACGTAC"):
        assert np.allclose(scaled.table(x, 0).log_probs, base.table(x, 0).log_probs, atol=1e-12)
        action, scored = lpdp_step(x, 0, base, hashed_oracle, small_config)
        scaled_action, scaled_scored = lpdp_step(x, 0, scaled, hashed_oracle, small_config)
        assert scaled_action == action
        assert [s.q for s in scaled_scored] == pytest.approx([s.q for s in scored], abs=1e-9)


def test_lse_value_falls_toward_max_as_tau_shrinks(hashed_model, hashed_oracle):
    config = GuidanceConfig(beta=2.0, k_root=None, radius=1, k_loc=3, horizon=3, backup="lse", rule="mixed")
    root = EditAction(2, "sub", "C")
    y = apply_edit("GATTA", root)
    v_max = backup_value(y, root, 2, config.model_copy(update={"backup": "max"}), hashed_model, hashed_oracle, 0)
    values = [
        backup_value(y, root, 2, config.model_copy(update={"tau": tau}), hashed_model, hashed_oracle, 0)
        for tau in (4.0, 2.0, 1.0, 0.5, 0.1, 0.01, 1e-4)
    ]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))
    n_paths = len(enumerate_paths(y, root, 2, "mixed", config, hashed_model, hashed_oracle, 0))
    assert v_max - 1e-9 <= values[-1] <= v_max + 1e-4 * np.log(n_paths) + 1e-9


def test_lookahead_prefers_two_step_motif():
    # no single edit of GCC creates GTA, so q is flat; only the lookahead sees the motif
    space = EditSpace(LengthBounds(1, 8))
    model = UniformModel(space)
    oracle = CachedOracle(MotifCountOracle("GTA"))
    config = GuidanceConfig(beta=5.0, delta=0.0, k_root=None, radius=1, k_loc=None, horizon=2, lam=1.0)
    action, scored = lpdp_step("GCC", 0, model, oracle, config)

    assert len({round(s.q, 9) for s in scored}) == 1
    chosen = next(s for s in scored if s.action == action)
    assert chosen.s_lpdp == pytest.approx(max(s.s_lpdp for s in scored))
    assert chosen.v_local > min(s.v_local for s in scored)
    assert action == min(scored, key=lambda s: (-s.s_lpdp, s.action.sort_key)).action

    child = apply_edit("GCC", action)
    assert any("GTA" in apply_edit(child, b) for b in space.actions(child))


def test_empty_window_reproduces_raw_rollout(hashed_model):
    oracle = CachedOracle(HashedOracle(seed=1))
    guided = guided_rollout("ACGTAC", 20, "none", hashed_model, oracle, GuidanceConfig(), seed=[5, 0, 0])
    raw = raw_rollout("ACGTAC", 20, hashed_model, seed=[5, 0, 0])
    assert guided.actions == raw.actions
    assert guided.final == raw.final
    assert guided.misses == raw.misses == 0
    assert cache_stats(oracle) == (0, 0)


def test_guided_rollout_is_deterministic(hashed_model, small_config):
    runs = [
        guided_rollout("ACGTAC", 12, "first:3", hashed_model, CachedOracle(HashedOracle(seed=2)), small_config, 9)
        for _ in range(2)
    ]
    assert runs[0].actions == runs[1].actions
    assert runs[0].misses == runs[1].misses > 0
    assert [s.guided for s in runs[0].steps] == [True] * 3 + [False] * 9
    assert len(runs[0].reward_trace) == 3


def test_guided_states_replay(hashed_model, small_config):
    record = guided_rollout("ACGTAC", 6, "0,2", hashed_model, CachedOracle(HashedOracle(seed=2)), small_config, 1)
    states = record.states()
    assert states[0] == "ACGTAC" and states[-1] == record.final
    assert [t for _, t in record.guided_states()] == [0, 2]


def test_one_guided_step_costs_distinct_sequences(uniform):
    # ins A@0 and ins A@1 both give AAC, so distinct children < |A(x)|
    x = "AC"
    actions = uniform.space.actions(x)
    distinct = {x} | {apply_edit(x, a) for a in actions}
    assert len(distinct) < len(actions) + 1
    oracle = CachedOracle(HashedOracle(seed=4))
    record = guided_rollout(x, 1, "0", uniform, oracle, GuidanceConfig(horizon=1), seed=0)
    assert record.misses == len(distinct)


def test_rollout_stops_when_no_edits_remain():
    space = EditSpace(LengthBounds(4, 4), left_fixed=2, right_fixed=2)
    record = raw_rollout("ACGT", 5, UniformModel(space), seed=0)
    assert record.steps == []
    assert record.final == "ACGT"


def test_record_json_shape(hashed_model, small_config):
    record = guided_rollout("ACGTAC", 3, "first:1", hashed_model, CachedOracle(HashedOracle(seed=2)), small_config, 1)
    data = record.to_json()
    assert set(data) >= {"method", "sample", "x0", "final", "misses", "hits", "steps"}
    assert data["steps"][0]["guided"] is True and "reward" in data["steps"][0]
    assert "reward" not in data["steps"][1]
    assert np.isfinite([s["log_p0"] for s in data["steps"]]).all()
