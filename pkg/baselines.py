"""
baselines.py

Reference inference-time allocators sharing the frozen proposal model and the
cached oracle used by guided rollouts:

    raw    base sampling at every step (no oracle calls)
    beam   width-W, depth-D frontier over cumulative tilted scores
    cem    per-kind logit offsets refit to elite trajectories
    smc    reward-weighted particles with systematic resampling
    tds    twisted softmax over the top-k proposal support

Each guided method acts only inside its window and samples from p0 elsewhere.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp, softmax

from lpdp import StepRecord, TrajectoryRecord, counters, prior_order, resolve_window, rollout, score_edit
from oracle import RewardOracle
from proposal import ProposalModel, RolloutClock, as_generator, kind_mass, sample_action, sample_index
from seqcore import KINDS, EditAction, apply_edit, format_action

logger = logging.getLogger(__name__)

KIND_SMOOTHING = 1e-3


class _BaselineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    window: Optional[str] = None


class BeamConfig(_BaselineConfig):
    width: int = Field(8, ge=1)
    depth: int = Field(2, ge=1)
    beta: float = Field(20.0, ge=0)


class CemConfig(_BaselineConfig):
    population: int = Field(64, ge=1)
    elites: int = Field(8, ge=1)
    rounds: int = Field(2, ge=0)
    smoothing: float = Field(1.0, gt=0, le=1)

    @model_validator(mode="after")
    def _elites_fit(self):
        if self.elites > self.population:
            raise ValueError(f"elites ({self.elites}) cannot exceed population ({self.population})")
        return self


class SmcConfig(_BaselineConfig):
    particles: int = Field(64, ge=1)
    depth: int = Field(2, ge=1)
    proposal_top_k: int = Field(32, ge=1)
    beta: float = Field(20.0, ge=0)


class TdsConfig(_BaselineConfig):
    temperature: float = Field(1.0, ge=0)
    support_top_k: int = Field(8, ge=1)
    beta: float = Field(20.0, ge=0)


def raw_rollout(x0: str, total_steps: int, model: ProposalModel, seed) -> TrajectoryRecord:
    """Pure base rollout: every step sampled from p0, no oracle involved."""
    return rollout(x0, total_steps, None, model, None, None, seed, method="raw")


# === Beam ===

@dataclass(frozen=True)
class BeamItem:
    state: str
    score: float
    path: tuple = ()

    @property
    def first_edit(self) -> Optional[EditAction]:
        return self.path[0] if self.path else None

    @property
    def sort_key(self) -> tuple:
        return (-self.score, tuple(b.sort_key for b in self.path))


def beam_step(frontier: list, t: int, model: ProposalModel, oracle: RewardOracle, config: BeamConfig) -> list:
    """
    Expand every frontier sequence by all valid edits and keep the top-W.

    Identical sequences merge, keeping the higher cumulative score (canonical
    path order on ties). Sequences without valid edits carry over unchanged.
    """
    best_by_state = {}
    for item in frontier:
        actions = model.space.actions(item.state)
        if not actions:
            children = [item]
        else:
            table = model.table(item.state, t)
            children = [
                BeamItem(apply_edit(item.state, b), item.score + score_edit(item.state, b, table, oracle, config.beta).q,
                         item.path + (b,))
                for b in actions
            ]
        for child in children:
            kept = best_by_state.get(child.state)
            if kept is None or child.sort_key < kept.sort_key:
                best_by_state[child.state] = child
    return sorted(best_by_state.values(), key=lambda item: item.sort_key)[:config.width]


def beam_search(x: str, t: int, model: ProposalModel, oracle: RewardOracle, config: BeamConfig) -> BeamItem:
    """Best depth-D beam path from x; its first edit is the one committed."""
    frontier = [BeamItem(x, 0.0)]
    for _ in range(config.depth):
        frontier = beam_step(frontier, t, model, oracle, config)
    return frontier[0]


def beam_rollout(x0, total_steps, window, model, oracle, config: BeamConfig, seed) -> TrajectoryRecord:
    def choose(x, t):
        best = beam_search(x, t, model, oracle, config)
        return best.first_edit, oracle.reward(x)

    return rollout(x0, total_steps, window, model, oracle, choose, seed, method="beam")


# === CEM ===

def tilted_sample(model: ProposalModel, x: str, t: int, offsets: dict, rng) -> EditAction:
    """Draw from q_theta(a) proportional to p0(a) * exp(theta_kind(a))."""
    table = model.table(x, t)
    logits = table.log_probs + np.array([offsets[a.kind] for a in table.actions])
    return table.actions[sample_index(logits - logsumexp(logits), rng)]


def refit_offsets(elites: list, model: ProposalModel, offsets: dict, smoothing: float = 1.0) -> dict:
    """
    Kind-offset refit to the elite set.

    theta_k = log(elite frequency of kind k) - log(mean base mass of kind k over
    the elite guided states), i.e. the tilt whose kind marginal reproduces the
    elite kind frequencies. Identical elites, or elites without guided edits,
    leave the offsets unchanged.
    """
    if len({tuple(e.actions) for e in elites}) <= 1 and len(elites) > 1:
        logger.warning("CEM elite set is degenerate; keeping offsets")
        return dict(offsets)

    counts = {kind: 0 for kind in KINDS}
    mass = {kind: 0.0 for kind in KINDS}
    n_states = 0
    for elite in elites:
        for x, t in elite.guided_states():
            for kind, m in kind_mass(model, x, t).items():
                mass[kind] += m
            n_states += 1
        for step in elite.steps:
            if step.guided:
                counts[step.action.kind] += 1
    if n_states == 0:
        return dict(offsets)

    total = sum(counts.values())
    refit = {}
    for kind in KINDS:
        freq = (counts[kind] + KIND_SMOOTHING) / (total + len(KINDS) * KIND_SMOOTHING)
        base = mass[kind] / n_states + KIND_SMOOTHING
        new = float(np.log(freq) - np.log(base))
        refit[kind] = smoothing * new + (1.0 - smoothing) * offsets[kind]
    return refit


def cem_rollout(x0, total_steps, window, model, oracle, config: CemConfig, seed) -> TrajectoryRecord:
    """
    Sample `population` trajectories per round from the kind-tilted proposal,
    refit the tilt to the elites, and return the best trajectory seen.

    Zero rounds sample a single untilted population without refitting.
    """
    misses0, hits0 = counters(oracle)
    offsets = {kind: 0.0 for kind in KINDS}
    n_rounds = max(config.rounds, 1)
    member_seeds = np.random.SeedSequence(seed).spawn(n_rounds * config.population)

    best, best_reward = None, float("-inf")
    for r in range(n_rounds):
        population = []
        for i in range(config.population):
            rng = np.random.default_rng(member_seeds[r * config.population + i])

            def choose(x, t, rng=rng):
                return tilted_sample(model, x, t, offsets, rng), None

            record = rollout(x0, total_steps, window, model, None, choose, rng, method="cem")
            record.reward = oracle.reward(record.final)
            population.append(record)
            if record.reward > best_reward:
                best, best_reward = record, record.reward

        if config.rounds > 0:
            ranked = sorted(range(len(population)), key=lambda i: -population[i].reward)
            elites = [population[i] for i in ranked[:config.elites]]
            offsets = refit_offsets(elites, model, offsets, config.smoothing)
            logger.debug("CEM round %d offsets %s", r, offsets)

    misses1, hits1 = counters(oracle)
    best.reward = None
    best.misses, best.hits = misses1 - misses0, hits1 - hits0
    best.extras = {"offsets": offsets, "rounds": n_rounds}
    return best


# === SMC ===

def effective_sample_size(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed from unnormalized log-weights."""
    return float(np.exp(2 * logsumexp(log_weights) - logsumexp(2 * log_weights)))


def systematic_resample(weights: np.ndarray, rng) -> np.ndarray:
    """Indexes drawn with one shared uniform offset and N evenly spaced pointers."""
    n = len(weights)
    positions = (as_generator(rng).random() + np.arange(n)) / n
    cumulative = np.cumsum(weights / weights.sum())
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="left")


def restricted_sample(model: ProposalModel, x: str, t: int, top_k: int, rng) -> EditAction:
    """Draw from p0 renormalized over its top-k actions."""
    table = model.table(x, t)
    support = prior_order(table.actions, table)[:top_k]
    logits = np.array([table.log_probs[table.index[a]] for a in support])
    return support[sample_index(logits, rng)]


def smc_rollout(x0, total_steps, window, model, oracle, config: SmcConfig, seed) -> TrajectoryRecord:
    """
    Particles advance together; at guided steps each samples from the top-k
    restricted proposal and its weight is multiplied by exp(beta * dR).
    Every `depth` guided steps, systematic resampling fires if ESS < P / 2.
    """
    model.space.validate(x0)
    guided = resolve_window(window, total_steps)
    rng = as_generator(seed)
    misses0, hits0 = counters(oracle)

    n = config.particles
    states = [x0] * n
    histories = [[] for _ in range(n)]
    log_w = np.zeros(n)
    guided_seen = 0
    resamples = 0

    for clock in RolloutClock.schedule(total_steps):
        t = clock.step
        is_guided = t in guided
        for i in range(n):
            x = states[i]
            table = model.table(x, t)
            if is_guided:
                action = restricted_sample(model, x, t, config.proposal_top_k, rng)
                reward = oracle.reward(x)
                child = apply_edit(x, action)
                log_w[i] += config.beta * (oracle.reward(child) - reward)
            else:
                action, reward = sample_action(model, x, t, rng), None
                child = apply_edit(x, action)
            histories[i].append(StepRecord(t, action, table.log_prob(action), is_guided, reward))
            states[i] = child

        if is_guided:
            guided_seen += 1
            if guided_seen % config.depth == 0:
                total = logsumexp(log_w)
                if not np.isfinite(total):
                    logger.warning("SMC weights vanished at step %d; resampling uniformly", t)
                    weights = np.ones(n)
                else:
                    weights = np.exp(log_w - total)
                if not np.isfinite(total) or effective_sample_size(log_w) < n / 2:
                    idx = systematic_resample(weights, rng)
                    states = [states[j] for j in idx]
                    histories = [list(histories[j]) for j in idx]
                    log_w = np.zeros(n)
                    resamples += 1

    finals = [oracle.reward(x) for x in states]
    best = int(np.argmax(finals))
    misses1, hits1 = counters(oracle)
    return TrajectoryRecord(
        x0=x0, final=states[best], method="smc", steps=histories[best],
        misses=misses1 - misses0, hits=hits1 - hits0, extras={"resamples": resamples},
    )


# === TDS ===

def _scored_support(x, t, model, oracle, config: TdsConfig) -> tuple:
    table = model.table(x, t)
    support = prior_order(table.actions, table)[:config.support_top_k]
    scored = [score_edit(x, a, table, oracle, config.beta) for a in support]
    return support, scored, np.array([s.q for s in scored])


def _greedy_index(q: np.ndarray, support: list) -> int:
    return min(range(len(support)), key=lambda i: (-q[i], support[i].sort_key))


def twisted_choice(x: str, t: int, model: ProposalModel, oracle: RewardOracle, config: TdsConfig, rng) -> tuple:
    """
    (action, log importance weight) from softmax((log p0 + beta * dR) / temperature)
    over the top-k proposal support; temperature 0 takes the argmax.
    """
    support, scored, q = _scored_support(x, t, model, oracle, config)
    if config.temperature == 0:
        return support[_greedy_index(q, support)], 0.0

    log_twist = q / config.temperature
    log_twist = log_twist - logsumexp(log_twist)
    i = sample_index(log_twist, rng)
    return support[i], float(scored[i].log_p0 - log_twist[i])


def tds_rollout(x0, total_steps, window, model, oracle, config: TdsConfig, seed) -> TrajectoryRecord:
    rng = as_generator(seed)
    log_weights = []

    def choose(x, t):
        action, log_w = twisted_choice(x, t, model, oracle, config, rng)
        log_weights.append(log_w)
        logger.debug("TDS t=%d chose %s (log w %.4f)", t, format_action(action), log_w)
        return action, oracle.reward(x)

    record = rollout(x0, total_steps, window, model, oracle, choose, rng, method="tds")
    record.extras = {"log_weights": log_weights, "log_weight_total": float(sum(log_weights))}
    return record


def twisted_probabilities(x, t, model, oracle, config: TdsConfig) -> dict:
    """Twisted distribution over the support (inspection helper for tests and logs)."""
    support, _, q = _scored_support(x, t, model, oracle, config)
    if config.temperature == 0:
        best = _greedy_index(q, support)
        return {a: float(i == best) for i, a in enumerate(support)}
    return dict(zip(support, softmax(q / config.temperature).tolist()))
