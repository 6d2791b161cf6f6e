"""
diagnostics.py

Same-type diagnostics: how the typed candidate rules (st_after, st_first)
compare with the mixed reference on recorded guided states.

    cand_ratio        |C_rule| / |C_mixed| at one local node
    path_ratio        |T_rule| / |T_mixed| over enumerated local paths
    top1_agreement    fraction of states where the typed rule picks the mixed root
    mixed_rank_tail   fraction of retained candidates ranked beyond k_loc under mixed
    mass_efficiency   (Z_typed / Z_mixed) / (|T_typed| / |T_mixed|)

Usage:
    from diagnostics import diagnose_instances, write_diagnostics_csv

    rows = diagnose_instances(instances, config, model, oracle)
    write_diagnostics_csv(rows, "runs/demo/diagnostics.csv")
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from errors import EnumerationGuardError
from exactdp import enumerate_paths, path_log_partition
from lpdp import BACKUPS, RULES, GuidanceConfig, candidate_set, local_neighborhood, lpdp_step, prior_order, \
    root_band, root_scores
from oracle import RewardOracle
from proposal import ProposalModel
from seqcore import EditAction, apply_edit

logger = logging.getLogger(__name__)

CSV_FIELDS = ["rule", "diagnostic", "backup", "value", "instances", "note"]
ST_FIRST_NOTE = "relative soft-value diagnostic rather than a subset coverage guarantee"


@dataclass
class RuleDiagnostics:
    rule: str
    cand_ratio: float
    path_ratio: float
    top1_agreement: dict
    mixed_rank_tail: float
    mass_eff: Optional[float]
    instances: int = 0
    nodes: int = 0

    def rows(self) -> list:
        note = ST_FIRST_NOTE if self.rule == "st_first" else ""
        rows = [
            {"rule": self.rule, "diagnostic": "cand_ratio", "backup": "", "value": self.cand_ratio,
             "instances": self.nodes, "note": ""},
            {"rule": self.rule, "diagnostic": "path_ratio", "backup": "", "value": self.path_ratio,
             "instances": self.nodes, "note": ""},
            {"rule": self.rule, "diagnostic": "mixed_rank_tail", "backup": "", "value": self.mixed_rank_tail,
             "instances": self.nodes, "note": ""},
            {"rule": self.rule, "diagnostic": "mass_eff", "backup": "lse",
             "value": "" if self.mass_eff is None else self.mass_eff, "instances": self.nodes, "note": note},
        ]
        for backup, value in self.top1_agreement.items():
            rows.append({"rule": self.rule, "diagnostic": "top1_agreement", "backup": backup, "value": value,
                         "instances": self.instances, "note": ""})
        return rows


def lookahead_depth(config: GuidanceConfig) -> int:
    return max(config.horizon - 1, 1)


def local_time(config: GuidanceConfig, t: int) -> int:
    return t + 1 if config.advance_local_time else t


def cand_ratio(z: str, prev: EditAction, rule: str, config: GuidanceConfig, model: ProposalModel, t: int) -> float:
    mixed = candidate_set(z, prev, "mixed", config.k_loc, model, t, config.radius)
    if not mixed:
        return 1.0
    typed = candidate_set(z, prev, rule, config.k_loc, model, t, config.radius)
    return len(typed) / len(mixed)


def path_ratio(z: str, prev: EditAction, rule: str, config: GuidanceConfig, model: ProposalModel,
               oracle: RewardOracle, t: int, h: int = None) -> float:
    h = lookahead_depth(config) if h is None else h
    mixed = enumerate_paths(z, prev, h, "mixed", config, model, oracle, t)
    typed = enumerate_paths(z, prev, h, rule, config, model, oracle, t)
    return len(typed) / len(mixed)


def root_choice(x: str, t: int, model: ProposalModel, oracle: RewardOracle, config: GuidanceConfig, rule: str,
                backup: str) -> EditAction:
    action, _ = lpdp_step(x, t, model, oracle, config.model_copy(update={"rule": rule, "backup": backup}))
    return action


def top1_agreement(instances: list, rule: str, config: GuidanceConfig, model: ProposalModel,
                   oracle: RewardOracle) -> dict:
    """{backup: fraction of (x, t) instances where `rule` and mixed pick the same root}."""
    agreement = {}
    for backup in BACKUPS:
        if not instances:
            agreement[backup] = 1.0
            continue
        same = sum(
            root_choice(x, t, model, oracle, config, rule, backup) == root_choice(x, t, model, oracle, config,
                                                                                   "mixed", backup)
            for x, t in instances
        )
        agreement[backup] = same / len(instances)
    return agreement


def mixed_ranks(z: str, prev: EditAction, config: GuidanceConfig, model: ProposalModel, t: int) -> dict:
    """1-based rank of every neighborhood edit under the mixed (base-prior) ordering."""
    neighborhood = local_neighborhood(z, prev, config.radius, model.space)
    if not neighborhood:
        return {}
    ranked = prior_order(neighborhood, model.table(z, t))
    return {b: i + 1 for i, b in enumerate(ranked)}


def mixed_rank_tail(nodes: list, rule: str, config: GuidanceConfig, model: ProposalModel) -> float:
    """Pr[rank_mixed(b) > k_loc] over all candidates retained at the (z, prev, t) nodes."""
    if config.k_loc is None:
        return 0.0
    retained = beyond = 0
    for z, prev, t in nodes:
        ranks = mixed_ranks(z, prev, config, model, t)
        for b in candidate_set(z, prev, rule, config.k_loc, model, t, config.radius):
            retained += 1
            beyond += ranks[b] > config.k_loc
    return beyond / retained if retained else 0.0


def mass_efficiency(z: str, prev: EditAction, config: GuidanceConfig, model: ProposalModel, oracle: RewardOracle,
                    t: int, rule: str = "st_after", h: int = None) -> Optional[float]:
    """
    Share of soft path mass kept by the typed rule relative to its share of paths.

    None when the typed rule keeps no paths.
    """
    h = lookahead_depth(config) if h is None else h
    mixed = enumerate_paths(z, prev, h, "mixed", config, model, oracle, t)
    typed = enumerate_paths(z, prev, h, rule, config, model, oracle, t)
    if not typed or not mixed:
        return None
    log_ratio = path_log_partition(typed, config.tau) - path_log_partition(mixed, config.tau)
    return float(np.exp(log_ratio) / (len(typed) / len(mixed)))


def local_nodes(x: str, t: int, config: GuidanceConfig, model: ProposalModel, oracle: RewardOracle) -> list:
    """(child, root edit, local time) for every root in the band at (x, t)."""
    band = root_band(root_scores(x, t, model, oracle, config), config.delta, config.k_root)
    t_local = local_time(config, t)
    return [(apply_edit(x, r.action), r.action, t_local) for r in band]


def replay_instances(records: list) -> list:
    """Every guided (x_t, t) recorded in the trajectories, in record order."""
    instances = []
    for record in records:
        instances.extend(record.guided_states())
    return instances


def _mean(values: list) -> float:
    return float(np.mean(values)) if values else 1.0


def diagnose_instances(instances: list, config: GuidanceConfig, model: ProposalModel, oracle: RewardOracle,
                       rules=RULES) -> list:
    """One RuleDiagnostics per rule over the (x, t) instances."""
    nodes = []
    for x, t in instances:
        nodes.extend(local_nodes(x, t, config, model, oracle))
    logger.info("diagnosing %d instances (%d local nodes)", len(instances), len(nodes))

    results = []
    for rule in rules:
        cands, paths, masses = [], [], []
        for z, prev, t in nodes:
            cands.append(cand_ratio(z, prev, rule, config, model, t))
            try:
                paths.append(path_ratio(z, prev, rule, config, model, oracle, t))
                mass = mass_efficiency(z, prev, config, model, oracle, t, rule=rule)
            except EnumerationGuardError as e:
                logger.warning("skipping path diagnostics at %s: %s", z, e)
                continue
            if mass is not None:
                masses.append(mass)
        results.append(RuleDiagnostics(
            rule=rule,
            cand_ratio=_mean(cands),
            path_ratio=_mean(paths),
            top1_agreement=top1_agreement(instances, rule, config, model, oracle),
            mixed_rank_tail=mixed_rank_tail(nodes, rule, config, model),
            mass_eff=float(np.mean(masses)) if masses else None,
            instances=len(instances),
            nodes=len(nodes),
        ))
    return results


def write_diagnostics_csv(results: list, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for result in results:
            writer.writerows(result.rows())
    return path
