"""
proposal.py

Base edit-proposal models: positive transition rates over the valid one-edit
successors of a sequence, normalized into the proposal p0(a | x, t).

Built-in models (selected by name in the experiment config):
    uniform   every valid edit has the same rate
    drift     per-kind log-rate offsets plus a length-restoring drift
    hashed    deterministic pseudo-random rates (property-check instances)

Usage:
    from proposal import build_model, log_p0, sample_action

    model = build_model("drift", {"target_length": 24, "drift_gain": 2.0}, space)
    lp = log_p0(model, "ACGT", action, t=0)
"""

import hashlib
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np
from scipy.special import logsumexp

from errors import ConfigError, EmptyActionSetError, InvalidActionError
from seqcore import KINDS, EditAction, EditSpace, format_action

logger = logging.getLogger(__name__)

DEFAULT_TOTAL_STEPS = 256
TABLE_CACHE_SIZE = 4096

_KIND_SIGN = {"sub": 0.0, "ins": 1.0, "del": -1.0}


@dataclass(frozen=True)
class RolloutClock:
    """Discrete schedule position: one edit per step, T steps in total."""

    step: int
    total_steps: int = DEFAULT_TOTAL_STEPS

    def __post_init__(self):
        if not 0 <= self.step < self.total_steps:
            raise ValueError(f"step {self.step} outside [0, {self.total_steps})")

    @classmethod
    def schedule(cls, total_steps: int):
        for step in range(total_steps):
            yield cls(step, total_steps)


class ProposalTable(NamedTuple):
    """Valid actions of one state with their normalized log-probabilities."""

    actions: tuple
    log_probs: np.ndarray
    index: dict

    def log_prob(self, action: EditAction) -> float:
        try:
            return float(self.log_probs[self.index[action]])
        except KeyError:
            raise InvalidActionError(f"{format_action(action)} is not a valid edit here") from None


class ProposalModel:
    """
    Interface for rate-based edit proposals.

    Subclasses implement log_rates (vectorized) or rate (per action). Rates
    must be positive and deterministic in (x, a, t).
    """

    name = "base"

    def __init__(self, space: EditSpace = EditSpace()):
        self.space = space
        self._table = lru_cache(maxsize=TABLE_CACHE_SIZE)(self._build_table)

    def rate(self, x: str, action: EditAction, t: int) -> float:
        return float(np.exp(self.log_rates(x, [action], t)[0]))

    def log_rates(self, x: str, actions: list, t: int) -> np.ndarray:
        return np.log(np.array([self.rate(x, a, t) for a in actions], dtype=float))

    def table(self, x: str, t: int) -> ProposalTable:
        return self._table(x, t)

    def clear_cache(self):
        """Drop the memoized proposal tables."""
        self._table.cache_clear()

    def _build_table(self, x: str, t: int) -> ProposalTable:
        actions = tuple(self.space.actions(x))
        if not actions:
            raise EmptyActionSetError(f"no valid edits at {x!r}")
        log_rates = self.log_rates(x, list(actions), t)
        log_probs = log_rates - logsumexp(log_rates)
        log_probs.setflags(write=False)
        return ProposalTable(actions, log_probs, {a: i for i, a in enumerate(actions)})

    def __repr__(self):
        return f"{type(self).__name__}(space={self.space})"


class UniformModel(ProposalModel):
    name = "uniform"

    def log_rates(self, x, actions, t):
        return np.zeros(len(actions))


class DriftModel(ProposalModel):
    """
    Toy stand-in for a pretrained edit flow.

    rate(s, e, v | x, t) = exp(theta_e + kappa * sign(e) * (L* - |x|) / L*)
    with sign(ins) = +1, sign(del) = -1, sign(sub) = 0.
    """

    name = "drift"

    def __init__(
        self,
        space: EditSpace = EditSpace(),
        type_weights: dict = None,
        target_length: int = 24,
        drift_gain: float = 1.0,
    ):
        super().__init__(space)
        weights = {kind: 0.0 for kind in KINDS}
        weights.update(type_weights or {})
        unknown = set(weights) - set(KINDS)
        if unknown:
            raise ConfigError(f"unknown edit kinds in type_weights: {sorted(unknown)}")
        if not space.bounds.contains(target_length):
            raise ConfigError(f"target_length {target_length} outside length bounds")
        if drift_gain < 0:
            raise ConfigError("drift_gain must be >= 0")
        self.type_weights = weights
        self.target_length = target_length
        self.drift_gain = drift_gain

    def log_rates(self, x, actions, t):
        pressure = self.drift_gain * (self.target_length - len(x)) / self.target_length
        return np.array(
            [self.type_weights[a.kind] + pressure * _KIND_SIGN[a.kind] for a in actions],
            dtype=float,
        )


class HashedRateModel(ProposalModel):
    """Rates exp(scale * g), g a standard normal keyed by hash(seed, x, a, t)."""

    name = "hashed"

    def __init__(self, space: EditSpace = EditSpace(), seed: int = 0, scale: float = 1.0, use_time: bool = True):
        super().__init__(space)
        self.seed = seed
        self.scale = scale
        self.use_time = use_time

    def log_rates(self, x, actions, t):
        step = t if self.use_time else 0
        return np.array(
            [self.scale * hashed_normal(f"{self.seed}|{x}|{format_action(a)}|{step}") for a in actions],
            dtype=float,
        )


def hashed_uniform(key: str) -> float:
    """Deterministic value in [0, 1) derived from a blake2b digest of key."""
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0 ** 64


def hashed_normal(key: str) -> float:
    """Deterministic standard normal via Box-Muller on two hashed uniforms."""
    u1 = max(hashed_uniform(key + "#1"), 1e-300)
    u2 = hashed_uniform(key + "#2")
    return float(np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2))


MODELS = {
    UniformModel.name: UniformModel,
    DriftModel.name: DriftModel,
    HashedRateModel.name: HashedRateModel,
}


def build_model(name: str, params: dict = None, space: EditSpace = EditSpace()) -> ProposalModel:
    """Construct a registered model by name."""
    try:
        cls = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown proposal model {name!r}; choose from {sorted(MODELS)}") from None
    try:
        return cls(space=space, **(params or {}))
    except TypeError as e:
        raise ConfigError(f"bad parameters for model {name!r}: {e}") from None


def normalized_proposal(model: ProposalModel, x: str, t: int) -> dict:
    """p0(. | x, t) as a mapping action -> probability over the valid edits."""
    table = model.table(x, t)
    return dict(zip(table.actions, np.exp(table.log_probs).tolist()))


def log_p0(model: ProposalModel, x: str, action: EditAction, t: int) -> float:
    return model.table(x, t).log_prob(action)


def kind_mass(model: ProposalModel, x: str, t: int) -> dict:
    """Total proposal mass per edit kind."""
    table = model.table(x, t)
    probs = np.exp(table.log_probs)
    mass = {kind: 0.0 for kind in KINDS}
    for action, p in zip(table.actions, probs):
        mass[action.kind] += float(p)
    return mass


def as_generator(rng: Union[np.random.Generator, int, tuple, list]) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_index(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a normalized log-probability vector."""
    cdf = np.cumsum(np.exp(log_probs - log_probs.max()))
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def sample_action(model: ProposalModel, x: str, t: int, rng) -> EditAction:
    """Draw one edit from p0(. | x, t). The same seed always gives the same draw."""
    table = model.table(x, t)
    action = table.actions[sample_index(table.log_probs, as_generator(rng))]
    logger.debug("t=%d sampled %s from %d actions", t, format_action(action), len(table.actions))
    return action
