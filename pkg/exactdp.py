"""
exactdp.py

Brute-force reference solvers used to check the fast guidance path.

    enumerate_paths   every local continuation path of the restricted graph
    partition_value   tau * log sum_paths exp(G / tau)
    max_path_value    best path score
    full_graph_dp     finite-horizon DP over the unrestricted edit graph

Nothing here approximates: instances beyond the hard guards fail with
EnumerationGuardError instead of being truncated.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from errors import EnumerationGuardError
from lpdp import GuidanceConfig, candidate_set, score_edit
from oracle import RewardOracle
from proposal import ProposalModel
from seqcore import EditAction, apply_edit

logger = logging.getLogger(__name__)

PATH_GUARD = 10 ** 6
STATE_GUARD = 200_000


@dataclass(frozen=True)
class LocalPath:
    """
    One local edit path xi from z: edits b_0..b_{k-1}, induced states
    z_0 = z, z_{i+1} = f(z_i, b_i), and G = sum of the step scores q(z_i, b_i).

    k equals the horizon unless the path reached a node without candidates.
    """

    edits: tuple
    states: tuple
    step_scores: tuple
    score: float

    def __len__(self):
        return len(self.edits)

    @property
    def sort_key(self) -> tuple:
        return tuple(b.sort_key for b in self.edits)

    def recompute_score(self) -> float:
        return float(sum(self.step_scores))


def enumerate_paths(
    z: str,
    prev: EditAction,
    h: int,
    rule: str,
    config: GuidanceConfig,
    model: ProposalModel,
    oracle: RewardOracle,
    t: int,
    limit: int = PATH_GUARD,
) -> list:
    """
    All length-h paths of the local graph under `rule`, lexicographic by edit list.

    A node with no candidates ends its path early (it is terminal, value 0).
    """
    complete = []
    frontier = [((), (z,), (), 0.0, prev, t)]

    for level in range(h):
        expanded = []
        branching = []
        for edits, states, steps, score, last, t_node in frontier:
            node = states[-1]
            candidates = candidate_set(node, last, rule, config.k_loc, model, t_node, config.radius)
            if not candidates:
                complete.append(LocalPath(edits, states, steps, score))
                continue
            branching.append(len(candidates))
            expanded.append((edits, states, steps, score, t_node, node, candidates))

        produced = sum(branching)
        if branching:
            mean_branch = max(1.0, produced / len(branching))
            predicted = int(len(complete) + produced * mean_branch ** (h - level - 1))
            if predicted > limit:
                raise EnumerationGuardError("local path enumeration", predicted, limit)

        frontier = []
        table_cache = {}
        for edits, states, steps, score, t_node, node, candidates in expanded:
            if (node, t_node) not in table_cache:
                table_cache[(node, t_node)] = model.table(node, t_node)
            table = table_cache[(node, t_node)]
            t_next = t_node + 1 if config.advance_local_time else t_node
            for b in candidates:
                scored = score_edit(node, b, table, oracle, config.beta)
                frontier.append((
                    edits + (b,),
                    states + (apply_edit(node, b),),
                    steps + (scored.q,),
                    score + scored.q,
                    b,
                    t_next,
                ))

    complete.extend(LocalPath(edits, states, steps, score) for edits, states, steps, score, _, _ in frontier)
    complete.sort(key=lambda p: p.sort_key)
    logger.debug("enumerated %d paths (h=%d, rule=%s) from %s", len(complete), h, rule, z)
    return complete


def path_log_partition(paths: list, tau: float) -> float:
    """log Z = log sum exp(G / tau); -inf for an empty path set."""
    if not paths:
        return float("-inf")
    return float(logsumexp(np.array([p.score for p in paths]) / tau))


def partition_value(paths: list, tau: float) -> float:
    """tau * log sum_paths exp(G / tau); 0 for an empty path set (terminal convention)."""
    if not paths:
        return 0.0
    return tau * path_log_partition(paths, tau)


def max_path_value(paths: list) -> float:
    """Best path score; 0 for an empty path set."""
    if not paths:
        return 0.0
    return max(p.score for p in paths)


def optimal_paths(paths: list, tol: float = 0.0) -> list:
    best = max_path_value(paths)
    return [p for p in paths if p.score >= best - tol]


def typed_feasible(path: LocalPath, prev: EditAction, rule: str, config: GuidanceConfig, model: ProposalModel,
                   t: int) -> bool:
    """True when every edit of the path survives `rule` at the node where it is taken."""
    last = prev
    t_node = t
    for node, b in zip(path.states, path.edits):
        if b not in candidate_set(node, last, rule, config.k_loc, model, t_node, config.radius):
            return False
        last = b
        if config.advance_local_time:
            t_node += 1
    return True


def full_graph_dp(
    x: str,
    t: int,
    horizon: int,
    beta: float,
    model: ProposalModel,
    oracle: RewardOracle,
    advance_local_time: bool = False,
    max_states: int = STATE_GUARD,
) -> tuple:
    """
    (best total score, best first edit) of exhaustive H-step DP over every valid edit.

    V_0 = 0, V_h(z) = max_b [q(z, b) + V_{h-1}(f(z, b))]; the first edit is the
    maximizing root with canonical tie-breaking.
    """
    memo = {}

    def value(z: str, h: int, t_node: int) -> float:
        if h == 0:
            return 0.0
        key = (z, h, t_node)
        if key in memo:
            return memo[key]
        if len(memo) >= max_states:
            raise EnumerationGuardError("full-graph DP states", len(memo) + 1, max_states)
        if not model.space.actions(z):
            memo[key] = 0.0
            return 0.0
        table = model.table(z, t_node)
        t_next = t_node + 1 if advance_local_time else t_node
        best = max(
            score_edit(z, b, table, oracle, beta).q + value(apply_edit(z, b), h - 1, t_next)
            for b in table.actions
        )
        memo[key] = best
        return best

    table = model.table(x, t)
    t_next = t + 1 if advance_local_time else t
    best_score, best_action = float("-inf"), None
    for a in table.actions:
        total = score_edit(x, a, table, oracle, beta).q + value(apply_edit(x, a), horizon - 1, t_next)
        if total > best_score:
            best_score, best_action = total, a
    return best_score, best_action
