"""Top-level acceptance checks, one per contract guarantee.

Each test prints a single PASS line with its measured figure; run with

    pytest tests/test_acceptance.py -v -s

to see them.  Tolerances here are the binding ones, chosen once and not
relaxed: loosening any of them counts as a behavior change.
"""
from __future__ import annotations

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ista import (
    DescriptorGrid,
    IstaPipeline,
    RawSignature,
    SignatureLayout,
    VisualCodebook,
    accumulate_pair_stats,
    apply_block_reduction,
    apply_full_reduction,
    average_precision,
    compute_pair_basis,
    contribution_by_pair,
    cross_cluster_normalize,
    encode_raw,
    fit_block_reduction,
    fit_full_reduction,
    identity_trial,
    make_synthetic_corpus,
    mean_ap,
    naive_sta_tensor,
    normalize_grid,
    rank,
    shuffled_corpus,
    GroundTruthEntry,
)

# the retrieval check runs the frozen demonstration configuration
RETRIEVAL_PIPELINE = dict(n_words=8, variance_target=0.9, min_pair_count=100,
                          alpha=0.5, keep_ratio=0.4, target_dim=16,
                          whiten=True, renorm=True, seed=0)
SHUFFLE_SEED = 1007


def test_linearization_identity():
    """Tensor inner products equal the brute-force matching kernel."""
    start = time.time()
    worst = 0.0
    trials = 0
    for include_center in (False, True):
        for seed in range(50):
            gap = identity_trial(seed, include_center)
            worst = max(worst, gap)
            trials += 1
            assert gap <= 1e-9, (seed, include_center, gap)
    elapsed = time.time() - start
    assert elapsed < 10.0, f"identity sweep took {elapsed:.1f}s"
    print(f"PASS linearization-identity: {trials} trials within 1e-9 "
          f"(worst {worst:.3g}, {elapsed:.2f}s)")


def test_projection_consistency():
    """Encoded blocks equal U^T (T_img - n_img mean) V computed independently."""
    rng = np.random.default_rng(4242)
    worst = 0.0
    for _ in range(20):
        n_words = int(rng.integers(2, 4))
        depth = int(rng.integers(3, 6))
        codebook = VisualCodebook.from_centers(rng.normal(size=(n_words, depth)))
        grids = [
            normalize_grid(DescriptorGrid(f"g{i}", 0, rng.normal(
                size=(int(rng.integers(2, 5)), int(rng.integers(2, 5)), depth))))
            for i in range(4)
        ]
        stats = accumulate_pair_stats(grids, codebook)
        basis = compute_pair_basis(stats, 1.0, min_pair_count=1)
        grid = grids[0]
        sig = encode_raw(grid, codebook, basis)

        tensor = naive_sta_tensor(grid, codebook).reshape(n_words, n_words, depth, depth)
        own = accumulate_pair_stats([grid], codebook)
        parts = []
        for (k, l), (u, s, v) in sorted(basis.factors.items()):
            centered = tensor[k, l] - own.counts[k, l] * stats.mean_tensor(k, l)
            parts.append((u.T @ centered @ v).reshape(-1))
        ref = np.concatenate(parts)
        scale = max(1.0, float(np.abs(ref).max()))
        gap = float(np.abs(sig.vector - ref).max()) / scale
        worst = max(worst, gap)
        assert gap <= 1e-9
    print(f"PASS projection-consistency: 20 instances within 1e-9 (worst {worst:.3g})")


def test_gram_preservation():
    """Both reduction stages keep pairwise inner products when nothing is cut."""
    rng = np.random.default_rng(99)
    ranks = (6, 6, 5, 5, 4, 3, 2, 1)
    pairs = tuple((0, i) if i < 4 else (1, i - 4) for i in range(8))
    layout = SignatureLayout(8, pairs, tuple(r * r for r in ranks), ranks)
    assert layout.total_dim <= 400
    samples = [
        RawSignature(f"s{i:02d}", rng.normal(size=layout.total_dim), layout)
        for i in range(64)
    ]
    raw = np.stack([s.vector for s in samples])

    block = fit_block_reduction(samples, keep_ratio=1.0)
    reduced = np.stack([apply_block_reduction(block, s) for s in samples])
    want = raw @ raw.T
    got = reduced @ reduced.T
    scale = float(np.abs(want).max())
    block_gap = float(np.abs(got - want).max()) / scale
    assert block_gap <= 1e-8

    full = fit_full_reduction(reduced, target_dim=64, whiten=False)
    final = np.stack([apply_full_reduction(full, v, renorm=False) for v in reduced])
    full_gap = float(np.abs(final @ final.T - got).max()) / scale
    assert full_gap <= 1e-8
    print(f"PASS gram-preservation: 64 samples, dim {layout.total_dim}, "
          f"block gap {block_gap:.3g}, full gap {full_gap:.3g} (tol 1e-8)")


def test_whitening_equalizes_energy():
    """Whitened projections of the fit samples have equal per-component energy."""
    rng = np.random.default_rng(7)
    vectors = rng.normal(size=(60, 80)) * rng.gamma(2.0, size=80)
    full = fit_full_reduction(vectors, target_dim=24, whiten=True)
    proj = np.stack([apply_full_reduction(full, v, renorm=False) for v in vectors])
    energy = np.sum(proj**2, axis=0)
    gap = float(np.abs(energy - 1.0).max())
    assert np.allclose(energy, 1.0, rtol=1e-6)
    print(f"PASS whitening-equalization: 24 components, worst deviation {gap:.3g} "
          f"(tol 1e-6 relative)")


def test_cross_cluster_postcondition():
    """After balancing, every live (i, j) group has unit root sum of squares."""
    rng = np.random.default_rng(21)
    layout = SignatureLayout(
        4,
        ((0, 0), (0, 2), (1, 1), (1, 3), (2, 2), (3, 0)),
        (9, 4, 4, 1, 16, 9),
        (3, 2, 2, 1, 4, 3),
    )
    values = rng.normal(size=layout.total_dim) * 3.0
    out = cross_cluster_normalize(values, layout)
    worst = 0.0
    checked = 0
    rmax = max(layout.ranks)
    for i in range(rmax):
        for j in range(rmax):
            for diagonal in (True, False):
                group = [
                    out[sl].reshape(r, r)[i, j]
                    for (k, l, sl), r in zip(layout.slices(), layout.ranks)
                    if (k == l) == diagonal and i < r and j < r
                ]
                if not group:
                    continue
                rss = float(np.sqrt(np.sum(np.square(group))))
                worst = max(worst, abs(rss - 1.0))
                checked += 1
                assert abs(rss - 1.0) <= 1e-9, (i, j, diagonal)
    print(f"PASS cross-cluster-postcondition: {checked} groups at unit energy "
          f"(worst deviation {worst:.3g}, tol 1e-9)")


def test_contribution_decomposition():
    """Per-pair contribution tables sum to the full inner product."""
    rng = np.random.default_rng(313)
    layout = SignatureLayout(
        3, ((0, 1), (1, 1), (1, 2), (2, 0)), (4, 9, 1, 4), (2, 3, 1, 2)
    )
    worst = 0.0
    for _ in range(25):
        a = RawSignature("a", rng.normal(size=layout.total_dim), layout)
        b = RawSignature("b", rng.normal(size=layout.total_dim), layout)
        table = contribution_by_pair(a, b)
        want = float(a.vector @ b.vector)
        gap = abs(float(table.sum()) - want) / max(1.0, abs(want))
        worst = max(worst, gap)
        assert gap <= 1e-9
    print(f"PASS contribution-decomposition: 25 pairs within 1e-9 (worst {worst:.3g})")


@pytest.fixture(scope="module")
def retrieval_run():
    start = time.time()
    corpus = make_synthetic_corpus()
    pipe = IstaPipeline(**RETRIEVAL_PIPELINE).fit(corpus.grids)

    def evaluate(grids, ground_truth, fitted):
        sigs = fitted.transform_signatures(grids)
        by_id = {s.image_id: s for s in sigs}
        per_query = [
            ([i for i, _ in rank(sigs, by_id[e.query_id])], e) for e in ground_truth
        ]
        return mean_ap(per_query)

    score = evaluate(corpus.grids, corpus.ground_truth, pipe)
    shuffled = shuffled_corpus(corpus, SHUFFLE_SEED)
    pipe_shuffled = IstaPipeline(**RETRIEVAL_PIPELINE).fit(shuffled.grids)
    shuffled_score = evaluate(shuffled.grids, shuffled.ground_truth, pipe_shuffled)
    return score, shuffled_score, time.time() - start


def test_synthetic_retrieval_is_perfect(retrieval_run):
    """200 structured grids in 20 classes retrieve at mAP 1.000."""
    score, _, elapsed = retrieval_run
    assert elapsed < 300.0, f"retrieval run took {elapsed:.0f}s"
    assert score >= 1.0 - 1e-9, f"mAP {score:.6f}"
    print(f"PASS synthetic-retrieval: mAP {score:.6f} over 200 queries "
          f"({elapsed:.0f}s total)")


def test_spatial_shuffle_ablation(retrieval_run):
    """Destroying spatial structure costs at least 0.05 mAP."""
    score, shuffled_score, _ = retrieval_run
    drop = score - shuffled_score
    assert drop >= 0.05, f"drop {drop:.4f}"
    print(f"PASS spatial-ablation: shuffled mAP {shuffled_score:.4f}, "
          f"drop {drop:.4f} (required >= 0.05)")


def test_average_precision_against_literal_oracle():
    """Vectorized AP equals a plain-loop recomputation on random rankings."""

    def literal_ap(ranking, positives, junk):
        kept = [r for r in ranking if r not in junk]
        hits = 0
        total = 0.0
        for position, image_id in enumerate(kept, start=1):
            if image_id in positives:
                hits += 1
                total += hits / position
        return total / len(positives)

    rng = np.random.default_rng(555)
    universe = [f"im{i:02d}" for i in range(40)]
    worst = 0.0
    for _ in range(100):
        ids = list(universe)
        rng.shuffle(ids)
        n_pos = int(rng.integers(1, 9))
        n_junk = int(rng.integers(0, 7))
        positives = frozenset(ids[:n_pos])
        junk = frozenset(ids[n_pos:n_pos + n_junk])
        ranking = [i for i in universe if rng.random() < 0.8]
        rng.shuffle(ranking)  # some positives are missing from the ranking
        entry = GroundTruthEntry("q", positives, junk)
        got = average_precision(ranking, entry)
        want = literal_ap(ranking, positives, junk)
        gap = abs(got - want)
        worst = max(worst, gap)
        assert gap <= 1e-12
    print(f"PASS ap-oracle: 100 rankings within 1e-12 (worst {worst:.3g})")


def test_cli_runs_are_byte_identical(tmp_path):
    """The whole file-based chain reproduces every artifact bit for bit."""
    conf = tmp_path / "run.conf"
    conf.write_text(
        "codebook_size = 4\nvariance_target = 0.9\nmin_pair_count = 10\n"
        "final_dim = 8\nseed = 0\n"
    )
    corpus = tmp_path / "corpus"
    base = [sys.executable, "-m", "ista.cli"]

    def cli(*argv):
        result = subprocess.run(
            base + [str(a) for a in argv], capture_output=True, text=True
        )
        assert result.returncode == 0, result.stderr
        return result

    cli("make-synthetic", "--out", corpus, "--classes", 4, "--per-class", 3,
        "--height", 6, "--width", 6, "--depth", 8, "--words", 4,
        "--corpus-seed", 11)

    def chain(tag):
        art = tmp_path / tag
        art.mkdir()
        cli("fit-codebook", "--config", conf, "--in", corpus,
            "--out", art / "words.codebook")
        cli("fit-stats", "--config", conf, "--in", corpus,
            "--codebook", art / "words.codebook", "--out", art / "corpus.pairstats")
        cli("fit-basis", "--config", conf, "--in", art / "corpus.pairstats",
            "--out", art / "corpus.pairmodel")
        cli("encode", "--config", conf, "--in", corpus,
            "--codebook", art / "words.codebook", "--model", art / "corpus.pairmodel",
            "--out", art / "raw")
        cli("fit-block-reduction", "--config", conf, "--in", art / "raw",
            "--model", art / "corpus.pairmodel", "--out", art / "blocks.redmodel")
        cli("fit-full-reduction", "--config", conf, "--in", art / "raw",
            "--blocks", art / "blocks.redmodel", "--out", art / "final.redmodel")
        cli("reduce", "--config", conf, "--in", art / "raw",
            "--model", art / "final.redmodel", "--out", art / "reduced")
        return art

    art_a = chain("run_a")
    art_b = chain("run_b")
    compared = 0
    for name in ("words.codebook", "corpus.pairstats", "corpus.pairmodel",
                 "blocks.redmodel", "final.redmodel"):
        assert (art_a / name).read_bytes() == (art_b / name).read_bytes(), name
        compared += 1
    for sig in sorted((art_a / "reduced").iterdir()):
        assert sig.read_bytes() == (art_b / "reduced" / sig.name).read_bytes(), sig.name
        compared += 1
    for sig in sorted((art_a / "raw").iterdir()):
        assert sig.read_bytes() == (art_b / "raw" / sig.name).read_bytes(), sig.name
        compared += 1
    print(f"PASS reproducibility: {compared} artifacts byte-identical across two runs")
