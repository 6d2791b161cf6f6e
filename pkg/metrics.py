"""
metrics.py

Sample-set metrics reported per method: k-mer Jensen-Shannon divergence to a
reference set, base trajectory log-likelihood, splice junction scores and
oracle cost. All logarithms are natural (JSD lies in [0, ln 2]).
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.special import rel_entr

from errors import MetricError
from oracle import CachedOracle, SpliceToyOracle
from seqcore import ALPHABET

logger = logging.getLogger(__name__)

JSD_LOG_BASE = "e"
DEFAULT_K = 3


@dataclass
class KmerDistribution:
    """Overlapping k-mer counts pooled over a sequence set."""

    k: int
    counts: Counter = field(default_factory=Counter)

    @classmethod
    def from_sequences(cls, sequences, k: int = DEFAULT_K) -> "KmerDistribution":
        if k < 1:
            raise MetricError(f"k must be >= 1, got {k}")
        counts = Counter()
        for seq in sequences:
            counts.update(seq[i:i + k] for i in range(len(seq) - k + 1))
        return cls(k, counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def vector(self) -> np.ndarray:
        """Probabilities over all 4^k k-mers in lexicographic order."""
        if self.total == 0:
            raise MetricError(f"empty {self.k}-mer distribution")
        keys = ("".join(p) for p in product(ALPHABET, repeat=self.k))
        return np.array([self.counts.get(key, 0) for key in keys], dtype=float) / self.total


def jsd_vectors(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise MetricError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    if p.sum() <= 0 or q.sum() <= 0:
        raise MetricError("JSD needs two non-empty distributions")
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    return float(0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum())


def jsd_k(generated: KmerDistribution, reference: KmerDistribution) -> float:
    """JSD(P || Q) = KL(P || M) / 2 + KL(Q || M) / 2 with M the midpoint."""
    if generated.k != reference.k:
        raise MetricError(f"k mismatch: {generated.k} vs {reference.k}")
    return jsd_vectors(generated.vector(), reference.vector())


def base_traj_ll(traj) -> float:
    """Mean per-step log p0 of the applied edits."""
    if not traj.steps:
        raise MetricError("trajectory has no steps")
    return float(np.mean([s.log_p0 for s in traj.steps]))


def _splice_scorer(oracle) -> SpliceToyOracle:
    inner = oracle.inner if isinstance(oracle, CachedOracle) else oracle
    if not isinstance(inner, SpliceToyOracle):
        raise MetricError("splice metrics need the splice oracle")
    return inner


def splice_metrics(samples, oracle) -> dict:
    """Means over samples of sqrt(D*A), min(D, A), the GT indicator, D and A."""
    scorer = _splice_scorer(oracle)
    if not samples:
        raise MetricError("no samples for splice metrics")
    donor = np.array([scorer.donor_score(x) for x in samples])
    acceptor = np.array([scorer.acceptor_score(x) for x in samples])
    gt = np.array([scorer.donor_dinucleotide(x) == "GT" for x in samples], dtype=float)
    return {
        "splice_geomean": float(np.mean(np.sqrt(donor * acceptor))),
        "splice_min": float(np.mean(np.minimum(donor, acceptor))),
        "gt_rate": float(gt.mean()),
        "donor_mean": float(donor.mean()),
        "acceptor_mean": float(acceptor.mean()),
    }


def calls_per_sample(records) -> float:
    """Mean distinct oracle evaluations (cache misses) per sample."""
    if not records:
        raise MetricError("no records")
    return float(np.mean([r.misses for r in records]))


def reward_stats(rewards) -> dict:
    values = np.asarray(rewards, dtype=float)
    if values.size == 0:
        raise MetricError("no rewards")
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return {
        "reward_mean": float(values.mean()),
        "reward_median": float(np.median(values)),
        "reward_stderr": stderr,
    }


def load_reference_sequences(path) -> list:
    """One sequence per line; blank lines, '#' comments and FASTA headers skipped."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise MetricError(f"cannot read reference file {path}: {e}") from None
    sequences = [line.strip().upper() for line in lines if line.strip() and line[0] not in "#>"]
    if not sequences:
        raise MetricError(f"no sequences in {path}")
    return sequences


def summarize_method(method: str, records, reference: KmerDistribution, oracle=None, splice: bool = False) -> dict:
    """One summary row: reward stats, JSD to the reference, traj-LL, calls/sample (+ splice columns)."""
    finals = [r.final for r in records]
    row = {"method": method, "samples": len(records)}
    row.update(reward_stats([r.reward for r in records]))
    row["jsd3"] = jsd_k(KmerDistribution.from_sequences(finals, reference.k), reference)
    stepped = [base_traj_ll(r) for r in records if r.steps]
    row["traj_ll"] = float(np.mean(stepped)) if stepped else float("nan")
    row["calls_per_sample"] = calls_per_sample(records)
    if splice:
        row.update(splice_metrics(finals, oracle))
    logger.info("%s: reward %.4f calls %.1f", method, row["reward_mean"], row["calls_per_sample"])
    return row
