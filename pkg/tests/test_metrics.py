import numpy as np
import pytest

from errors import MetricError
from lpdp import StepRecord, TrajectoryRecord
from metrics import (
    KmerDistribution,
    base_traj_ll,
    calls_per_sample,
    jsd_k,
    jsd_vectors,
    load_reference_sequences,
    reward_stats,
    splice_metrics,
    summarize_method,
)
from oracle import CachedOracle, MotifCountOracle, SpliceToyOracle
from seqcore import EditAction

ONE_HOT = {"A": [1, 0, 0, 0], "C": [0, 1, 0, 0], "G": [0, 0, 1, 0], "T": [0, 0, 0, 1]}


def pwm(consensus):
    return [ONE_HOT[c] for c in consensus]


@pytest.fixture
def splice():
    # donor window starts at the junction; acceptor window is the two bases before it
    return SpliceToyOracle(donor_pwm=pwm("GT"), acceptor_pwm=pwm("AG"), donor_index=3, acceptor_from_end=2,
                           acceptor_lead=2)


def record(final, log_p0s=(-1.0, -2.0), misses=3, reward=1.0):
    steps = [StepRecord(t, EditAction(0, "sub", "A"), lp, False) for t, lp in enumerate(log_p0s)]
    return TrajectoryRecord(x0="CCCC", final=final, steps=steps, misses=misses, reward=reward)


def test_kmer_vector_is_normalized():
    dist = KmerDistribution.from_sequences(["ACGT", "AAAA"], k=2)
    assert dist.total == 6
    vec = dist.vector()
    assert vec.shape == (16,)
    assert vec.sum() == pytest.approx(1.0)
    assert vec[0] == pytest.approx(3 / 6)


def test_short_sequences_contribute_nothing():
    assert KmerDistribution.from_sequences(["AC"], k=3).total == 0
    with pytest.raises(MetricError):
        KmerDistribution.from_sequences(["AC"], k=3).vector()
    with pytest.raises(MetricError):
        KmerDistribution.from_sequences(["ACGT"], k=0)


def test_jsd_bounds():
    same = KmerDistribution.from_sequences(["ACGTACGT"], k=3)
    assert jsd_k(same, same) == pytest.approx(0.0, abs=1e-12)
    disjoint = jsd_vectors(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert disjoint == pytest.approx(np.log(2))


def test_jsd_is_symmetric():
    p = KmerDistribution.from_sequences(["ACGTTTGA", "GGGACC"], k=2)
    q = KmerDistribution.from_sequences(["TTTTACGA"], k=2)
    assert jsd_k(p, q) == pytest.approx(jsd_k(q, p))
    assert 0.0 < jsd_k(p, q) <= np.log(2)


def test_jsd_rejects_k_mismatch():
    with pytest.raises(MetricError):
        jsd_k(KmerDistribution.from_sequences(["ACGT"], k=2), KmerDistribution.from_sequences(["ACGT"], k=3))


def test_base_traj_ll_is_step_mean():
    assert base_traj_ll(record("AAAA", (-1.0, -2.0, -3.0))) == pytest.approx(-2.0)
    with pytest.raises(MetricError):
        base_traj_ll(record("AAAA", ()))


def test_splice_metrics(splice):
    # junctions intact / donor broken
    good, broken = "CCCGTCAAGCC", "CCCATCAAGCC"
    assert splice.donor_score(good) == pytest.approx(1.0)
    assert splice.acceptor_score(good) == pytest.approx(1.0)
    m = splice_metrics([good, broken], CachedOracle(splice))
    assert m["gt_rate"] == 0.5
    assert m["acceptor_mean"] == pytest.approx(1.0)
    assert m["splice_min"] == pytest.approx(m["donor_mean"])
    assert 0.5 <= m["splice_geomean"] < 1.0


def test_splice_metrics_need_the_splice_oracle():
    with pytest.raises(MetricError):
        splice_metrics(["ACGT"], MotifCountOracle("GT"))


def test_reward_stats():
    stats = reward_stats([1.0, 2.0, 3.0, 4.0])
    assert stats["reward_mean"] == 2.5
    assert stats["reward_median"] == 2.5
    assert stats["reward_stderr"] == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert reward_stats([5.0])["reward_stderr"] == 0.0
    with pytest.raises(MetricError):
        reward_stats([])


def test_calls_per_sample():
    assert calls_per_sample([record("A", misses=2), record("A", misses=4)]) == 3.0


def test_load_reference_sequences(tmp_path):
    path = tmp_path / "ref.fa"
    path.write_text("# reference\n>seq1\nacgt\n\nGGCC\n")
    assert load_reference_sequences(path) == ["ACGT", "GGCC"]
    with pytest.raises(MetricError):
        load_reference_sequences(tmp_path / "missing.txt")


def test_summarize_method_row():
    reference = KmerDistribution.from_sequences(["ACGTACGT", "GGTACC"], k=3)
    records = [record("ACGTAC", reward=1.0), record("GGTACA", reward=3.0)]
    row = summarize_method("demo", records, reference)
    assert row["method"] == "demo" and row["samples"] == 2
    assert row["reward_mean"] == 2.0
    assert row["traj_ll"] == pytest.approx(-1.5)
    assert row["calls_per_sample"] == 3.0
    assert 0.0 <= row["jsd3"] <= np.log(2)
    assert "splice_geomean" not in row
