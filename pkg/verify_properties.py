#!/usr/bin/env python3
"""
verify_properties.py

Property checks for the guidance operator, run against the brute-force
solvers in exactdp.py on small randomized instances.

Each check prints [PASS]/[FAIL] with its observed residual. The `fault`
preset flips the sign of the LSE temperature in the soft/hard gap check, so
that check must fail (negative control for the suite itself).

Usage:
    python3 verify_properties.py
    python3 verify_properties.py --preset default
"""

import argparse
import logging
import sys
import time
from dataclasses import dataclass

import numpy as np

from baselines import raw_rollout
from diagnostics import mixed_ranks
from errors import LpdpError
from exactdp import enumerate_paths, full_graph_dp, max_path_value, optimal_paths, partition_value, \
    path_log_partition, typed_feasible
from lpdp import RULES, GuidanceConfig, backup_value, candidate_set, guided_rollout, lpdp_step, root_band, \
    root_scores
from metrics import KmerDistribution, base_traj_ll, jsd_k
from oracle import CachedOracle, HashedOracle, splice_geomean
from proposal import DriftModel, HashedRateModel, UniformModel, normalized_proposal
from seqcore import ALPHABET, EditAction, EditSpace, LengthBounds, apply_edit, canonical_sorted, inverse_edit

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9
FLOAT_SLACK = 1e-12


class Colors:
    GREEN = '\033[92m'
    RED = '\033[91m'
    YELLOW = '\033[93m'
    BLUE = '\033[94m'
    BOLD = '\033[1m'
    RESET = '\033[0m'


def print_status(name: str, passed: bool, message: str = ""):
    """Print a check result with color coding."""
    if passed:
        status = f"{Colors.GREEN}PASS{Colors.RESET}"
    else:
        status = f"{Colors.RED}FAIL{Colors.RESET}"

    print(f"  [{status}] {name}")
    if message:
        color = Colors.RESET if passed else Colors.YELLOW
        print(f"         {color}{message}{Colors.RESET}")


def print_header(title: str):
    """Print a section header."""
    print(f"\n{Colors.BOLD}{Colors.BLUE}{title}{Colors.RESET}")
    print("-" * 40)


@dataclass(frozen=True)
class Preset:
    identity: int
    band: int
    candidate_sets: int
    reductions: int
    full_dp: int
    fault: bool = False
    seed: int = 0


PRESETS = {
    "tiny": Preset(identity=40, band=100, candidate_sets=1000, reductions=30, full_dp=8),
    "default": Preset(identity=200, band=500, candidate_sets=10_000, reductions=100, full_dp=40),
    "fault": Preset(identity=40, band=100, candidate_sets=1000, reductions=30, full_dp=8, fault=True),
}


@dataclass
class CheckResult:
    name: str
    anchor: str
    passed: bool
    residual: float
    instances: int
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "passed": self.passed,
            "residual": self.residual,
            "instances": self.instances,
            "detail": self.detail,
        }


@dataclass
class LocalInstance:
    """A local lookahead problem: node z reached by prev, h edits deep, at time t."""

    z: str
    prev: EditAction
    h: int
    t: int
    config: GuidanceConfig
    model: HashedRateModel
    oracle: CachedOracle
    parent: str = ""

    def with_config(self, **update) -> GuidanceConfig:
        return self.config.model_copy(update=update)


def pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def random_sequence(rng: np.random.Generator, lo: int, hi: int) -> str:
    n = int(rng.integers(lo, hi + 1))
    return "".join(pick(rng, ALPHABET) for _ in range(n))


def random_model(rng, space: EditSpace) -> HashedRateModel:
    return HashedRateModel(space, seed=int(rng.integers(2 ** 31)), scale=float(pick(rng, (0.5, 1.0, 2.0))))


def random_oracle(rng) -> CachedOracle:
    return CachedOracle(HashedOracle(seed=int(rng.integers(2 ** 31)), scale=float(rng.uniform(0.5, 2.0))))


def random_local_instance(rng, rule: str = None, max_parent: int = 3) -> LocalInstance:
    space = EditSpace(LengthBounds(1, 8))
    x = random_sequence(rng, 1, max_parent)
    model = random_model(rng, space)
    actions = space.actions(x)
    prev = actions[int(rng.integers(len(actions)))]
    h = int(rng.integers(1, 4))
    config = GuidanceConfig(
        beta=float(pick(rng, (0.0, 1.0, 5.0))),
        k_loc=int(rng.integers(1, 5)),
        radius=pick(rng, (0, 1, None)),
        tau=float(pick(rng, (0.5, 1.0, 2.0))),
        gamma=1.0,
        rule=rule or pick(rng, RULES),
        horizon=h + 1,
    )
    return LocalInstance(apply_edit(x, prev), prev, h, int(rng.integers(0, 256)), config, model,
                         random_oracle(rng), parent=x)


def random_root_instance(rng, max_len: int = 5) -> tuple:
    space = EditSpace(LengthBounds(1, 8))
    x = random_sequence(rng, 1, max_len)
    return x, int(rng.integers(0, 256)), random_model(rng, space), random_oracle(rng)


def _result(name, anchor, worst, instances, ok, detail="") -> CheckResult:
    return CheckResult(name, anchor, bool(ok), float(worst), instances, detail)


# === Checks ===

def check_root_band(preset: Preset, rng) -> CheckResult:
    worst = float("-inf")
    violations = 0
    for _ in range(preset.band):
        x, t, model, oracle = random_root_instance(rng)
        delta = float(pick(rng, (0.0, 0.5, 2.0)))
        scored = root_scores(x, t, model, oracle, GuidanceConfig(beta=float(pick(rng, (0.0, 1.0, 5.0)))))
        band = root_band(scored, delta, None)
        threshold = max(s.q for s in scored) - delta
        kept = {s.action for s in band}
        for s in scored:
            if s.action in kept:
                violations += s.q < threshold
            else:
                worst = max(worst, s.q - threshold)
                violations += s.q >= threshold
        capped = root_band(scored, delta, 3)
        violations += [s.action for s in capped] != [s.action for s in band[:3]]
    return _result("root_band_truncation", "edits outside the uncapped band score strictly below q* - delta",
                   worst if worst != float("-inf") else 0.0, preset.band, violations == 0,
                   f"{violations} violations; residual = max(q - (q* - delta)) outside the band")


def check_partition_identity(preset: Preset, rng) -> CheckResult:
    worst = 0.0
    for i in range(preset.identity):
        inst = random_local_instance(rng, rule=RULES[i % len(RULES)])
        config = inst.with_config(backup="lse")
        paths = enumerate_paths(inst.z, inst.prev, inst.h, config.rule, config, inst.model, inst.oracle, inst.t)
        fast = backup_value(inst.z, inst.prev, inst.h, config, inst.model, inst.oracle, inst.t)
        exact = partition_value(paths, config.tau)
        worst = max(worst, abs(fast - exact) / max(1.0, abs(exact)))
    return _result("path_partition_identity", "LSE backup equals tau * log sum over local paths of exp(G / tau)",
                   worst, preset.identity, worst <= IDENTITY_TOL, "relative error, all three candidate rules")


def check_temperature_gap(preset: Preset, rng) -> CheckResult:
    worst = 0.0
    failures = 0
    sign = -1.0 if preset.fault else 1.0
    for i in range(preset.identity):
        inst = random_local_instance(rng, rule=RULES[i % len(RULES)])
        tau = sign * inst.config.tau
        paths = enumerate_paths(inst.z, inst.prev, inst.h, inst.config.rule, inst.config, inst.model, inst.oracle,
                                inst.t)
        v_max = backup_value(inst.z, inst.prev, inst.h, inst.with_config(backup="max"), inst.model, inst.oracle,
                             inst.t)
        v_lse = backup_value(inst.z, inst.prev, inst.h, inst.with_config(backup="lse", tau=tau), inst.model,
                             inst.oracle, inst.t)
        v_cold = backup_value(inst.z, inst.prev, inst.h, inst.with_config(backup="lse", tau=sign * 1e-4),
                              inst.model, inst.oracle, inst.t)
        log_count = np.log(len(paths))
        gap = v_lse - v_max
        if gap < -IDENTITY_TOL or gap > abs(tau) * log_count + IDENTITY_TOL:
            failures += 1
            worst = max(worst, -gap if gap < 0 else gap - abs(tau) * log_count)
        if abs(v_cold - v_max) > 1e-4 * log_count + FLOAT_SLACK:
            failures += 1
            worst = max(worst, abs(v_cold - v_max) - 1e-4 * log_count)
        if abs(v_max - max_path_value(paths)) > IDENTITY_TOL:
            failures += 1
    detail = f"{failures} violations of 0 <= V_lse - V_max <= tau ln|paths| or the tau=1e-4 limit"
    if preset.fault:
        detail += " (temperature sign flipped)"
    return _result("low_temperature_limit", "soft value brackets the hard value within tau ln|paths|",
                   worst, preset.identity, failures == 0, detail)


def typed_witness() -> tuple:
    """
    st_first keeping an edit ranked beyond k_loc by the mixed prior: substitutions
    dominate the prior, so after a deletion the typed list reaches deep.
    """
    space = EditSpace(LengthBounds(1, 8))
    model = DriftModel(space, type_weights={"sub": 5.0}, target_length=4, drift_gain=0.0)
    config = GuidanceConfig(k_loc=2, radius=None, rule="st_first")
    return "ACGT", EditAction(1, "del"), config, model


def check_conservative_typed_rule(preset: Preset, rng) -> CheckResult:
    violations = 0
    worst = 0
    for _ in range(preset.candidate_sets):
        inst = random_local_instance(rng, rule="st_after")
        c = inst.config
        ranks = mixed_ranks(inst.z, inst.prev, c, inst.model, inst.t)
        for b in candidate_set(inst.z, inst.prev, "st_after", c.k_loc, inst.model, inst.t, c.radius):
            worst = max(worst, ranks[b] - c.k_loc)
            violations += ranks[b] > c.k_loc

    z, prev, config, model = typed_witness()
    ranks = mixed_ranks(z, prev, config, model, 0)
    kept = candidate_set(z, prev, "st_first", config.k_loc, model, 0, config.radius)
    deepest = max(ranks[b] for b in kept)
    ok = violations == 0 and deepest > config.k_loc
    return _result("conservative_typed_rule", "st_after keeps only mixed top-k_loc edits; st_first may not",
                   worst, preset.candidate_sets, ok,
                   f"{violations} st_after violations; st_first witness keeps mixed rank {deepest} > k_loc="
                   f"{config.k_loc}")


def check_typed_max_recovery(preset: Preset, rng) -> CheckResult:
    qualifying = 0
    worst = 0.0
    for _ in range(preset.identity):
        inst = random_local_instance(rng, rule="st_after")
        c = inst.with_config(backup="max")
        paths = enumerate_paths(inst.z, inst.prev, inst.h, "mixed", c, inst.model, inst.oracle, inst.t)
        best = optimal_paths(paths, tol=FLOAT_SLACK)
        if not any(typed_feasible(p, inst.prev, "st_after", c, inst.model, inst.t) for p in best):
            continue
        qualifying += 1
        mixed = backup_value(inst.z, inst.prev, inst.h, c.model_copy(update={"rule": "mixed"}), inst.model,
                             inst.oracle, inst.t)
        typed = backup_value(inst.z, inst.prev, inst.h, c, inst.model, inst.oracle, inst.t)
        worst = max(worst, abs(mixed - typed))
    return _result("typed_max_recovery", "typed Max equals mixed Max when a best mixed path is typed-feasible",
                   worst, qualifying, worst <= IDENTITY_TOL, f"{qualifying} qualifying instances")


def check_soft_pruning_gap(preset: Preset, rng) -> CheckResult:
    worst = 0.0
    for _ in range(preset.identity):
        inst = random_local_instance(rng, rule="st_after")
        c = inst.with_config(backup="lse")
        mixed_paths = enumerate_paths(inst.z, inst.prev, inst.h, "mixed", c, inst.model, inst.oracle, inst.t)
        typed_paths = enumerate_paths(inst.z, inst.prev, inst.h, "st_after", c, inst.model, inst.oracle, inst.t)
        v_mixed = backup_value(inst.z, inst.prev, inst.h, c.model_copy(update={"rule": "mixed"}), inst.model,
                               inst.oracle, inst.t)
        v_typed = backup_value(inst.z, inst.prev, inst.h, c, inst.model, inst.oracle, inst.t)
        expected = c.tau * (path_log_partition(mixed_paths, c.tau) - path_log_partition(typed_paths, c.tau))
        worst = max(worst, abs((v_mixed - v_typed) - expected))
    return _result("soft_pruning_gap", "mixed minus st_after LSE value equals tau ln(Z_mixed / Z_sub)",
                   worst, preset.identity, worst <= IDENTITY_TOL, "absolute error")


def check_one_step_reductions(preset: Preset, rng) -> CheckResult:
    mismatches = 0
    for _ in range(preset.reductions):
        x, t, model, oracle = random_root_instance(rng)
        base = GuidanceConfig(beta=float(pick(rng, (0.0, 1.0, 5.0))), delta=float(pick(rng, (0.0, 0.5, 2.0))),
                              k_root=int(rng.integers(1, 6)), k_loc=2, horizon=3, lam=0.5)
        expected = root_band(root_scores(x, t, model, oracle, base), base.delta, base.k_root)[0].action
        for variant in (base.model_copy(update={"horizon": 1}), base.model_copy(update={"lam": 0.0})):
            action, _ = lpdp_step(x, t, model, oracle, variant)
            mismatches += action != expected
    return _result("one_step_reductions", "H=1 and lambda=0 choose the one-step band argmax",
                   mismatches, preset.reductions, mismatches == 0, f"{mismatches} mismatched choices")


def check_full_dp_equivalence(preset: Preset, rng) -> CheckResult:
    worst = 0.0
    mismatches = 0
    for i in range(preset.full_dp):
        horizon = 2 if i % 2 == 0 else 3
        x, t, model, oracle = random_root_instance(rng, max_len=3 if horizon == 2 else 2)
        config = GuidanceConfig(beta=float(pick(rng, (1.0, 5.0))), delta=float("inf"), k_root=None, radius=None,
                                k_loc=None, horizon=horizon, lam=1.0, gamma=1.0, rule="mixed", backup="max")
        action, band = lpdp_step(x, t, model, oracle, config)
        s_best = max(s.s_lpdp for s in band)
        dp_score, dp_action = full_graph_dp(x, t, horizon, config.beta, model, oracle)
        worst = max(worst, abs(s_best - dp_score))
        mismatches += action != dp_action
    return _result("full_dp_equivalence", "unrestricted LPDP with lambda=1 recovers full-graph DP",
                   worst, preset.full_dp, worst <= IDENTITY_TOL and mismatches == 0,
                   f"{mismatches} first-edit mismatches")


def check_cost_accounting(preset: Preset, rng) -> CheckResult:
    worst = 0
    n = preset.reductions
    for i in range(n):
        space = EditSpace(LengthBounds(1, 12))
        x = random_sequence(rng, 2, 6)
        model = UniformModel(space)

        raw = raw_rollout(x, 8, model, seed=i)
        worst = max(worst, raw.misses)

        oracle = random_oracle(rng)
        record = guided_rollout(x, 1, "0", model, oracle, GuidanceConfig(horizon=1), seed=i)
        distinct = {x} | {apply_edit(x, a) for a in space.actions(x)}
        worst = max(worst, abs(record.misses - len(distinct)))
    return _result("cost_accounting", "raw rollouts cost 0 calls; one H=1 guided step costs one call per distinct "
                   "sequence queried", worst, n, worst == 0, "distinct children counted independently")


def check_metric_units(preset: Preset, rng) -> CheckResult:
    errors = []
    same = KmerDistribution.from_sequences(["ACGTACGTAC", "GGCATT"])
    errors.append(abs(jsd_k(same, same)))
    disjoint = abs(jsd_k(KmerDistribution.from_sequences(["AAAAA"]), KmerDistribution.from_sequences(["CCCCC"])))
    errors.append(abs(disjoint - np.log(2)))

    for _ in range(100):
        d, a = rng.uniform(0, 1, size=2)
        errors.append(abs(splice_geomean(d, a) - np.sqrt(d * a)))
        g = splice_geomean(d, a)
        if not min(d, a) - FLOAT_SLACK <= g <= max(d, a) + FLOAT_SLACK:
            errors.append(1.0)

    space = EditSpace(LengthBounds(1, 40))
    model = UniformModel(space)
    record = raw_rollout(random_sequence(rng, 3, 8), 16, model, seed=preset.seed)
    states = record.states()[:-1]
    expected = -float(np.mean([np.log(len(space.actions(s))) for s in states]))
    errors.append(abs(base_traj_ll(record) - expected))
    worst = max(errors)
    return _result("metric_units", "JSD limits, splice geomean algebra, uniform traj-LL", worst, 103,
                   worst <= FLOAT_SLACK)


def check_edit_invariants(preset: Preset, rng) -> CheckResult:
    failures = 0
    n = preset.reductions
    for _ in range(n):
        space = EditSpace(LengthBounds(1, 16))
        x = random_sequence(rng, 1, 8)
        actions = space.actions(x)
        failures += len(actions) != 3 * len(x) + 4 * (len(x) + 1) + (len(x) if len(x) > 1 else 0)
        failures += actions != canonical_sorted(actions)
        for a in actions:
            child = apply_edit(x, a)
            failures += apply_edit(child, inverse_edit(x, a)) != x
        model = random_model(rng, space)
        failures += abs(sum(normalized_proposal(model, x, 0).values()) - 1.0) > FLOAT_SLACK
    return _result("edit_invariants", "action counts, canonical order, inverse edits, p0 normalization",
                   failures, n, failures == 0)


CHECKS = [
    ("Edit space", check_edit_invariants),
    ("Root band", check_root_band),
    ("Local backups", check_partition_identity),
    ("Local backups", check_temperature_gap),
    ("Typed rules", check_conservative_typed_rule),
    ("Typed rules", check_typed_max_recovery),
    ("Typed rules", check_soft_pruning_gap),
    ("Reductions", check_one_step_reductions),
    ("Reductions", check_full_dp_equivalence),
    ("Accounting", check_cost_accounting),
    ("Accounting", check_metric_units),
]


def run_checks(preset_name: str = "tiny", echo: bool = False) -> list:
    """Run every check under a preset; a check that raises is reported as failed."""
    try:
        preset = PRESETS[preset_name]
    except KeyError:
        raise LpdpError(f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}") from None
    rng = np.random.default_rng(preset.seed)

    results = []
    section = None
    for title, check in CHECKS:
        if echo and title != section:
            print_header(title)
            section = title
        try:
            result = check(preset, rng)
        except LpdpError as e:
            logger.exception("check %s raised", check.__name__)
            result = CheckResult(check.__name__.replace("check_", ""), "", False, float("nan"), 0, str(e))
        if echo:
            print_status(f"{result.name} ({result.instances} instances, residual {result.residual:.3g})",
                         result.passed, result.detail)
        results.append(result)
    return results


def print_summary(results: list, start: float) -> int:
    """Print the closing banner; returns the exit status."""
    passed = sum(r.passed for r in results)
    total = len(results)

    print("\n" + "=" * 45)
    if passed == total:
        print(f"{Colors.GREEN}{Colors.BOLD}All checks passed! ({passed}/{total}){Colors.RESET}")
    else:
        print(f"{Colors.YELLOW}{Colors.BOLD}Some checks failed ({passed}/{total} passed){Colors.RESET}")
    print(f"Time: {time.time() - start:.1f}s")
    return 0 if passed == total else 1


def main():
    parser = argparse.ArgumentParser(description="Property checks for local re-solving guidance")
    parser.add_argument("--preset", default="tiny", choices=sorted(PRESETS))
    args = parser.parse_args()

    print(f"\n{Colors.BOLD}Guidance property checks ({args.preset}){Colors.RESET}")
    start = time.time()
    return print_summary(run_checks(args.preset, echo=True), start)


if __name__ == "__main__":
    sys.exit(main())
