"""
oracle.py

Frozen reward oracles and the miss-counting cache that defines the
calls/sample cost.

Built-in oracles (selected by name in the experiment config):
    motif     overlapping occurrence count of a literal motif
    pwm       position-weight-matrix motif score in [0, 1]
    splice    geometric mean of donor and acceptor junction scores
    hashed    deterministic pseudo-random reward (property-check instances)

Usage:
    from oracle import CachedOracle, build_oracle, cache_stats, delta_reward

    oracle = CachedOracle(build_oracle("pwm", {"pwm_path": "motifs/enhancer_motif.txt"}))
    gain = delta_reward(oracle, "ACGT", action)
    misses, hits = cache_stats(oracle)
"""

import logging
from pathlib import Path
from threading import Lock

import numpy as np

from errors import ConfigError, OracleError
from proposal import hashed_uniform
from seqcore import TOKEN_RANK, EditAction, apply_edit

logger = logging.getLogger(__name__)

BASE_DIR = Path(__file__).parent
PWM_FLOOR = 1e-3
PWM_MODES = ("best-window", "sum-windows")


class RewardOracle:
    """Interface: deterministic reward R(x) for every valid sequence."""

    name = "base"

    def reward(self, x: str) -> float:
        raise NotImplementedError


class CachedOracle(RewardOracle):
    """
    Memoizing wrapper that counts distinct evaluations (misses) and repeats (hits).

    Concurrent first evaluations of the same sequence may both run the inner
    oracle, but only the first to store its value records a miss.
    """

    def __init__(self, inner: RewardOracle):
        self.inner = inner
        self.name = getattr(inner, "name", "cached")
        self._cache = {}
        self._lock = Lock()
        self.miss_count = 0
        self.hit_count = 0

    def reward(self, x: str) -> float:
        with self._lock:
            if x in self._cache:
                self.hit_count += 1
                return self._cache[x]

        value = float(self.inner.reward(x))

        with self._lock:
            if x in self._cache:
                self.hit_count += 1
                return self._cache[x]
            self._cache[x] = value
            self.miss_count += 1
            return value

    def evaluate(self, x: str) -> float:
        """Score x without touching the counters (final-sample evaluation)."""
        with self._lock:
            if x in self._cache:
                return self._cache[x]
        return float(self.inner.reward(x))

    def reset(self):
        with self._lock:
            self._cache.clear()
            self.miss_count = 0
            self.hit_count = 0

    def __len__(self):
        return len(self._cache)


def cache_stats(oracle: CachedOracle) -> tuple:
    """(miss_count, hit_count) since construction or the last reset."""
    with oracle._lock:
        return oracle.miss_count, oracle.hit_count


def delta_reward(oracle: RewardOracle, x: str, action: EditAction) -> float:
    """R(f(x, a)) - R(x)."""
    return oracle.reward(apply_edit(x, action)) - oracle.reward(x)


class MotifCountOracle(RewardOracle):
    """Number of (overlapping) occurrences of a literal motif."""

    name = "motif"

    def __init__(self, motif: str = "GT", weight: float = 1.0):
        if not motif:
            raise ConfigError("motif must be non-empty")
        self.motif = motif
        self.weight = weight

    def reward(self, x):
        m = len(self.motif)
        return self.weight * sum(1 for i in range(len(x) - m + 1) if x[i:i + m] == self.motif)


class HashedOracle(RewardOracle):
    """Deterministic pseudo-random reward in [0, scale) keyed by the sequence."""

    name = "hashed"

    def __init__(self, seed: int = 0, scale: float = 1.0, offset: float = 0.0):
        self.seed = seed
        self.scale = scale
        self.offset = offset

    def reward(self, x):
        return self.offset + self.scale * hashed_uniform(f"R|{self.seed}|{x}")


def normalize_pwm(weights, floor: float = PWM_FLOOR) -> np.ndarray:
    """Floor every entry, then renormalize each row to sum to one."""
    matrix = np.asarray(weights, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != 4 or matrix.shape[0] == 0:
        raise ConfigError(f"PWM must have shape (positions, 4), got {matrix.shape}")
    if (matrix < 0).any():
        raise ConfigError("PWM entries must be non-negative")
    matrix = np.maximum(matrix / matrix.sum(axis=1, keepdims=True), floor)
    return matrix / matrix.sum(axis=1, keepdims=True)


def load_pwm(path) -> np.ndarray:
    """
    Read a plain-text PWM: one row per motif position, four whitespace-separated
    probabilities (A C G T). Blank lines and '#' comments are skipped.
    """
    path = Path(path)
    if not path.is_absolute() and not path.exists():
        path = BASE_DIR / path
    rows = []
    try:
        for line in path.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.split()])
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read PWM file {path}: {e}") from None
    return normalize_pwm(rows)


def window_log_prob(log_pwm: np.ndarray, window: str) -> float:
    return float(sum(log_pwm[i, TOKEN_RANK[base]] for i, base in enumerate(window)))


class PwmOracle(RewardOracle):
    """
    Motif oracle on a position-probability matrix.

    best-window: exp(max window log-prob - consensus log-prob), in (0, 1];
                 0 when the sequence is shorter than the motif.
    sum-windows: sum of the same ratio over every window.
    """

    name = "pwm"

    def __init__(self, weights=None, mode: str = "best-window", pwm_path: str = None):
        if mode not in PWM_MODES:
            raise ConfigError(f"unknown PWM mode {mode!r}; choose from {PWM_MODES}")
        if pwm_path is not None:
            self.weights = load_pwm(pwm_path)
        elif weights is not None:
            self.weights = normalize_pwm(weights)
        else:
            raise ConfigError("PwmOracle needs weights or pwm_path")
        self.mode = mode
        self.log_weights = np.log(self.weights)
        self.consensus_log_prob = float(self.log_weights.max(axis=1).sum())

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    def window_scores(self, x: str) -> np.ndarray:
        """Log-prob of every window minus the consensus log-prob."""
        w = self.width
        if len(x) < w:
            return np.empty(0)
        idx = np.array([TOKEN_RANK[b] for b in x])
        positions = np.arange(w)
        scores = np.array(
            [self.log_weights[positions, idx[i:i + w]].sum() for i in range(len(x) - w + 1)]
        )
        return scores - self.consensus_log_prob

    def reward(self, x):
        scores = self.window_scores(x)
        if scores.size == 0:
            return 0.0
        if self.mode == "best-window":
            return float(np.exp(scores.max()))
        return float(np.exp(scores).sum())


class SpliceToyOracle(RewardOracle):
    """
    Analytic splice scorer for exon-intron-exon inpainting.

    The donor junction is a fixed index from the left (first intron base); the
    acceptor junction is a fixed offset from the right end (first base of the
    right exon), so both stay attached to their exons while the intron changes
    length. Each PWM window starts `lead` positions before its junction.
    D(x) and A(x) are window probabilities relative to the PWM consensus.
    """

    name = "splice"

    def __init__(
        self,
        donor_pwm=None,
        acceptor_pwm=None,
        donor_index: int = 0,
        acceptor_from_end: int = 0,
        donor_lead: int = 0,
        acceptor_lead: int = 0,
        donor_pwm_path: str = None,
        acceptor_pwm_path: str = None,
    ):
        self.donor_pwm = load_pwm(donor_pwm_path) if donor_pwm_path else _required_pwm(donor_pwm, "donor")
        self.acceptor_pwm = (
            load_pwm(acceptor_pwm_path) if acceptor_pwm_path else _required_pwm(acceptor_pwm, "acceptor")
        )
        self.donor_index = donor_index
        self.acceptor_from_end = acceptor_from_end
        self.donor_lead = donor_lead
        self.acceptor_lead = acceptor_lead
        self._donor_log = np.log(self.donor_pwm)
        self._acceptor_log = np.log(self.acceptor_pwm)
        self._donor_consensus = float(self._donor_log.max(axis=1).sum())
        self._acceptor_consensus = float(self._acceptor_log.max(axis=1).sum())

    def acceptor_index(self, x: str) -> int:
        return len(x) - self.acceptor_from_end

    def _window(self, x: str, start: int, width: int, label: str) -> str:
        if start < 0 or start + width > len(x):
            raise OracleError(
                f"{label} window [{start}, {start + width}) out of range for length {len(x)}"
            )
        return x[start:start + width]

    def donor_score(self, x: str) -> float:
        window = self._window(x, self.donor_index - self.donor_lead, len(self.donor_pwm), "donor")
        return float(np.exp(window_log_prob(self._donor_log, window) - self._donor_consensus))

    def acceptor_score(self, x: str) -> float:
        start = self.acceptor_index(x) - self.acceptor_lead
        window = self._window(x, start, len(self.acceptor_pwm), "acceptor")
        return float(np.exp(window_log_prob(self._acceptor_log, window) - self._acceptor_consensus))

    def donor_dinucleotide(self, x: str) -> str:
        return x[self.donor_index:self.donor_index + 2]

    def reward(self, x):
        return splice_geomean(self.donor_score(x), self.acceptor_score(x))


def _required_pwm(weights, label: str) -> np.ndarray:
    if weights is None:
        raise ConfigError(f"splice oracle needs a {label} PWM")
    return normalize_pwm(weights)


def splice_geomean(donor: float, acceptor: float) -> float:
    return float(np.sqrt(donor * acceptor))


def splice_reward(oracle: SpliceToyOracle, x: str) -> float:
    """sqrt(D(x) * A(x)); raises OracleError if a junction window leaves x."""
    return oracle.reward(x)


ORACLES = {
    MotifCountOracle.name: MotifCountOracle,
    PwmOracle.name: PwmOracle,
    SpliceToyOracle.name: SpliceToyOracle,
    HashedOracle.name: HashedOracle,
}


def build_oracle(name: str, params: dict = None) -> RewardOracle:
    """Construct a registered (uncached) oracle by name."""
    try:
        cls = ORACLES[name]
    except KeyError:
        raise ConfigError(f"unknown oracle {name!r}; choose from {sorted(ORACLES)}") from None
    try:
        return cls(**(params or {}))
    except TypeError as e:
        raise ConfigError(f"bad parameters for oracle {name!r}: {e}") from None
