"""
lpdp.py

Local re-solving guidance for edit-flow rollouts.

At a guided step the operator
    1. scores every valid root edit with q = log p0 + beta * dR,
    2. keeps the near-best root band (within delta of the best, capped at k_root),
    3. around each retained child builds a site-local neighborhood of radius r,
    4. prunes it with a candidate rule (mixed, st_after, st_first) into a
       bounded depth H-1 lookahead graph,
    5. backs the graph up with Max or LSE and applies the root edit maximizing
       S = q + lambda * V.
Outside the guidance window the rollout samples from p0.

Usage:
    from lpdp import GuidanceConfig, guided_rollout

    config = GuidanceConfig(rule="st_after", backup="lse")
    record = guided_rollout("ACGTAC", 256, "first:16", model, oracle, config, seed=0)
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from errors import ConfigError, EmptyActionSetError
from oracle import CachedOracle, RewardOracle, cache_stats
from proposal import ProposalModel, ProposalTable, RolloutClock, as_generator, sample_action
from seqcore import EditAction, EditSpace, anchor_site, apply_edit, format_action

logger = logging.getLogger(__name__)

RULES = ("mixed", "st_after", "st_first")
BACKUPS = ("max", "lse")


class GuidanceConfig(BaseModel):
    """All guidance scalars; defaults are the main enhancer operating point."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    beta: float = Field(20.0, ge=0)
    delta: float = Field(2.0, ge=0)
    k_root: Optional[int] = Field(16, ge=1)
    radius: Optional[int] = Field(1, ge=0)
    k_loc: Optional[int] = Field(8, ge=1)
    horizon: int = Field(2, ge=1)
    lam: float = Field(0.5, ge=0, alias="lambda")
    tau: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, ge=0, le=1)
    rule: Literal["mixed", "st_after", "st_first"] = "mixed"
    backup: Literal["max", "lse"] = "max"
    window: str = "first:16"
    advance_local_time: bool = False

    @property
    def label(self) -> str:
        if self.horizon == 1 or self.lam == 0:
            return "onestep"
        return f"lpdp-{self.rule}-{self.backup}"


@dataclass(frozen=True)
class ScoredAction:
    action: EditAction
    log_p0: float
    delta_r: float
    q: float
    v_local: Optional[float] = None
    s_lpdp: Optional[float] = None


@dataclass(frozen=True)
class LocalNode:
    """Intermediate lookahead state z reached by prev_edit, with depth h left."""

    state: str
    prev_edit: EditAction
    depth: int


@dataclass
class StepRecord:
    t: int
    action: EditAction
    log_p0: float
    guided: bool
    reward: Optional[float] = None

    def to_json(self) -> dict:
        data = {"t": self.t, "action": format_action(self.action), "log_p0": self.log_p0, "guided": self.guided}
        if self.reward is not None:
            data["reward"] = self.reward
        return data


@dataclass
class TrajectoryRecord:
    """Applied edits of one rollout with per-step log p0, rewards and oracle cost."""

    x0: str
    final: str = ""
    method: str = ""
    sample_index: int = 0
    steps: list = field(default_factory=list)
    misses: int = 0
    hits: int = 0
    reward: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def actions(self) -> list:
        return [s.action for s in self.steps]

    @property
    def reward_trace(self) -> list:
        return [(s.t, s.reward) for s in self.steps if s.reward is not None]

    def states(self) -> list:
        """Replay x0 through the applied edits: [x_0, x_1, ..., x_T]."""
        states = [self.x0]
        for step in self.steps:
            states.append(apply_edit(states[-1], step.action))
        return states

    def guided_states(self) -> list:
        """(x_t, t) pairs at which guidance chose the edit."""
        states = self.states()
        return [(states[i], s.t) for i, s in enumerate(self.steps) if s.guided]

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "sample": self.sample_index,
            "x0": self.x0,
            "final": self.final,
            "reward": self.reward,
            "misses": self.misses,
            "hits": self.hits,
            "steps": [s.to_json() for s in self.steps],
            **({"extras": self.extras} if self.extras else {}),
        }


def resolve_window(window: Union[str, Iterable[int], None], total_steps: int) -> frozenset:
    """
    Guided step indices from a window string.

    'first:N', 'last:N', 'mid:N', 'none', 'all', or an explicit comma list
    '0,3,7'. Iterables of ints pass through after range checking.
    """
    if window is None:
        return frozenset()
    if not isinstance(window, str):
        steps = frozenset(int(s) for s in window)
    else:
        text = window.strip().lower()
        if text in ("", "none"):
            return frozenset()
        if text == "all":
            return frozenset(range(total_steps))
        if ":" in text:
            where, _, count = text.partition(":")
            try:
                n = int(count)
            except ValueError:
                raise ConfigError(f"bad window length in {window!r}") from None
            if not 0 <= n <= total_steps:
                raise ConfigError(f"window {window!r} longer than the {total_steps}-step schedule")
            starts = {"first": 0, "last": total_steps - n, "mid": (total_steps - n) // 2}
            if where not in starts:
                raise ConfigError(f"unknown window position {where!r} in {window!r}")
            return frozenset(range(starts[where], starts[where] + n))
        try:
            steps = frozenset(int(s) for s in text.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"cannot parse window {window!r}") from None
    bad = sorted(s for s in steps if not 0 <= s < total_steps)
    if bad:
        raise ConfigError(f"window steps {bad} outside [0, {total_steps})")
    return steps


def prior_order(actions: Iterable[EditAction], table: ProposalTable) -> list:
    """Sort by base probability descending, canonical order on ties."""
    return sorted(actions, key=lambda a: (-table.log_probs[table.index[a]], a.sort_key))


def score_edit(x: str, action: EditAction, table: ProposalTable, oracle: RewardOracle, beta: float) -> ScoredAction:
    lp = float(table.log_probs[table.index[action]])
    dr = oracle.reward(apply_edit(x, action)) - oracle.reward(x)
    return ScoredAction(action, lp, dr, lp + beta * dr)


def root_scores(x: str, t: int, model: ProposalModel, oracle: RewardOracle, config: GuidanceConfig) -> list:
    """One ScoredAction per valid root edit, in canonical order."""
    table = model.table(x, t)
    return [score_edit(x, a, table, oracle, config.beta) for a in table.actions]


def best_root_score(scored: list) -> float:
    """q* = max q over the scored roots."""
    return max(s.q for s in scored)


def band_order(scored: Iterable[ScoredAction]) -> list:
    return sorted(scored, key=lambda s: (-s.q, s.action.sort_key))


def root_band(scored: list, delta: float, k_root: Optional[int]) -> list:
    """Roots with q >= q* - delta, top-k_root by q (canonical ties), best first."""
    if not scored:
        raise EmptyActionSetError("cannot form a root band from no scored edits")
    threshold = best_root_score(scored) - delta
    band = band_order(s for s in scored if s.q >= threshold)
    return band if k_root is None else band[:k_root]


def local_neighborhood(z: str, prev: EditAction, radius: Optional[int], space: EditSpace = EditSpace()) -> list:
    """Valid edits of z whose site lies within radius of the previous edit's anchor."""
    actions = space.actions(z)
    if radius is None:
        return actions
    alpha = anchor_site(prev, z)
    return [a for a in actions if abs(a.site - alpha) <= radius]


def candidate_set(
    z: str,
    prev: EditAction,
    rule: str,
    k_loc: Optional[int],
    model: ProposalModel,
    t: int,
    radius: Optional[int] = None,
) -> list:
    """
    Local continuation candidates at z, ranked by p0(. | z, t).

    mixed:    top-k_loc of the neighborhood
    st_after: same-kind-as-prev members of the mixed shortlist (shortlist if none)
    st_first: top-k_loc among same-kind neighborhood edits (mixed if none)
    """
    neighborhood = local_neighborhood(z, prev, radius, model.space)
    if not neighborhood:
        return []
    table = model.table(z, t)
    ranked = prior_order(neighborhood, table)
    shortlist = ranked if k_loc is None else ranked[:k_loc]

    if rule == "mixed":
        return shortlist
    if rule == "st_after":
        typed = [b for b in shortlist if b.kind == prev.kind]
        return typed or shortlist
    if rule == "st_first":
        typed = [b for b in ranked if b.kind == prev.kind]
        if not typed:
            return shortlist
        return typed if k_loc is None else typed[:k_loc]
    raise ConfigError(f"unknown candidate rule {rule!r}; choose from {RULES}")


class LocalSolver:
    """Memoized Max / LSE backups on the bounded lookahead graph of one step."""

    def __init__(self, config: GuidanceConfig, model: ProposalModel, oracle: RewardOracle, rule: str = None,
                 backup: str = None):
        self.config = config
        self.model = model
        self.oracle = oracle
        self.rule = rule or config.rule
        self.backup = backup or config.backup
        self._memo = {}

    def next_time(self, t: int) -> int:
        return t + 1 if self.config.advance_local_time else t

    def candidates(self, node: LocalNode, t: int) -> list:
        c = self.config
        return candidate_set(node.state, node.prev_edit, self.rule, c.k_loc, self.model, t, c.radius)

    def continuation_scores(self, node: LocalNode, t: int) -> list:
        table = self.model.table(node.state, t)
        return [score_edit(node.state, b, table, self.oracle, self.config.beta) for b in self.candidates(node, t)]

    def value(self, node: LocalNode, t: int) -> float:
        if node.depth <= 0:
            return 0.0
        key = (node, t)
        if key in self._memo:
            return self._memo[key]

        scored = self.continuation_scores(node, t)
        if not scored:
            value = 0.0
        else:
            t_next = self.next_time(t)
            totals = np.array([
                s.q + self.config.gamma * self.value(
                    LocalNode(apply_edit(node.state, s.action), s.action, node.depth - 1), t_next
                )
                for s in scored
            ])
            if self.backup == "max":
                value = float(totals.max())
            else:
                tau = self.config.tau
                value = float(tau * logsumexp(totals / tau))
        self._memo[key] = value
        return value


def backup_value(
    y: str,
    a: EditAction,
    h: int,
    config: GuidanceConfig,
    model: ProposalModel,
    oracle: RewardOracle,
    t: int,
) -> float:
    """
    V_h(y, a): Max or LSE backup over the depth-h local graph rooted at y.

    t is the time index used for the continuation edits at y. Nodes without
    candidates are terminal (value 0).
    """
    return LocalSolver(config, model, oracle).value(LocalNode(y, a, h), t)


def lpdp_step(x: str, t: int, model: ProposalModel, oracle: RewardOracle, config: GuidanceConfig,
              solver: LocalSolver = None) -> tuple:
    """
    One guided decision: (chosen root edit, scored band with v_local and s_lpdp).

    The argmax of S over the band breaks ties by canonical order of the root edit.
    """
    band = root_band(root_scores(x, t, model, oracle, config), config.delta, config.k_root)
    correct = config.horizon > 1 and config.lam > 0
    solver = solver or LocalSolver(config, model, oracle)
    t_local = solver.next_time(t)

    scored = []
    for root in band:
        v = 0.0
        if correct:
            child = apply_edit(x, root.action)
            v = solver.value(LocalNode(child, root.action, config.horizon - 1), t_local)
        scored.append(replace(root, v_local=v, s_lpdp=root.q + config.lam * v))

    best = min(scored, key=lambda s: (-s.s_lpdp, s.action.sort_key))
    logger.debug("t=%d band=%d chose %s S=%.4f", t, len(scored), format_action(best.action), best.s_lpdp)
    return best.action, scored


def counters(oracle) -> tuple:
    if isinstance(oracle, CachedOracle):
        return cache_stats(oracle)
    return 0, 0


def rollout(
    x0: str,
    total_steps: int,
    window,
    model: ProposalModel,
    oracle: Optional[RewardOracle],
    choose,
    seed,
    method: str = "",
) -> TrajectoryRecord:
    """
    Shared rollout loop: choose(x, t) at guided steps, p0 sampling elsewhere.

    choose returns (action, reward of x or None). Randomness is consumed only at
    unguided steps, so an empty window reproduces the raw base rollout.
    """
    model.space.validate(x0)
    guided = resolve_window(window, total_steps)
    rng = as_generator(seed)
    misses0, hits0 = counters(oracle)
    record = TrajectoryRecord(x0=x0, method=method)

    x = x0
    for clock in RolloutClock.schedule(total_steps):
        t = clock.step
        try:
            table = model.table(x, t)
        except EmptyActionSetError:
            logger.warning("no valid edits at step %d (length %d); stopping early", t, len(x))
            break
        if t in guided:
            action, reward = choose(x, t)
        else:
            action, reward = sample_action(model, x, t, rng), None
        record.steps.append(StepRecord(t, action, table.log_prob(action), t in guided, reward))
        x = apply_edit(x, action)

    misses1, hits1 = counters(oracle)
    record.final = x
    record.misses = misses1 - misses0
    record.hits = hits1 - hits0
    return record


def guided_rollout(
    x0: str,
    total_steps: int,
    window,
    model: ProposalModel,
    oracle: RewardOracle,
    config: GuidanceConfig,
    seed,
) -> TrajectoryRecord:
    """Roll out T one-edit steps, applying lpdp_step inside the window."""

    def choose(x, t):
        action, _ = lpdp_step(x, t, model, oracle, config)
        return action, oracle.reward(x)

    return rollout(x0, total_steps, window, model, oracle, choose, seed, method=config.label)

