"""Acceptance gate: one test per release criterion, each printing a
[PASS]/[FAIL] line (run with `pytest tests/test_acceptance.py -s -v`).

Full-corpus audit statistics (replication rates over 100k real prompts,
dataset-similarity curves across duplication factors, complexity
correlations of magnitude ~0.3) need web-scale data plus diffusion-model
inference and are intentionally NOT reproduced here; the suite below
substitutes exhaustive property checks on synthetic fixtures whose ground
truth is known by construction.
"""

import json
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats as scipy_stats

from dupaudit.cli import main
from dupaudit.complexity import (
    ComplexityScore,
    complexity_correlation,
    histogram_entropy,
    jpeg_compressibility,
)
from dupaudit.manifest import build_manifest, sample_epoch
from dupaudit.metrics import (
    SimilarityReport,
    dataset_similarity,
    pearson_with_pvalue,
    unigram_jaccard,
)
from dupaudit.mitigate import (
    TransformSpec,
    derive_record_seed,
    gaussian_noise,
    transform_caption,
)
from dupaudit.simgraph import blocked_topk, connected_components, read_clusters
from dupaudit.store import CaptionRecord, read_embeddings, write_embeddings
from dupaudit.synth import planted_cluster_fixture, random_unit_matrix

from conftest import make_matrix
from oracles import bfs_components, dense_topk_oracle, percentile_linear
from PIL import Image

VOCAB = tuple(f"v{i:04d}" for i in range(1000))


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


# ------------------------------------------------------------------ 1

def test_planted_cluster_recovery(tmp_path):
    with criterion("planted-cluster recovery at threshold 0.7, min size 250, < 60 s"):
        emb, truth = planted_cluster_fixture(seed=0, n=10_000, dim=64)
        assert len(truth) == 20
        assert all(250 <= len(t) <= 500 for t in truth)
        emb_path = tmp_path / "planted.emb"
        write_embeddings(emb, emb_path)
        out = tmp_path / "clusters.jsonl"
        started = time.perf_counter()
        code = main(["cluster", "--embeddings", str(emb_path), "--out", str(out),
                     "--threshold", "0.7", "--min-size", "250"])
        elapsed = time.perf_counter() - started
        assert code == 0
        got = [set(c.member_ids) for c in read_clusters(out)]
        truth_sets = {frozenset(t) for t in truth}
        got_sets = {frozenset(g) for g in got}
        true_positives = sum(len(g) for g in got if set(g) in [set(t) for t in truth])
        precision = true_positives / sum(len(g) for g in got)
        recall = true_positives / sum(len(t) for t in truth)
        assert got_sets == truth_sets
        assert precision == 1.0 and recall == 1.0
        assert elapsed < 60.0, f"clustering took {elapsed:.1f}s"


# ------------------------------------------------------------------ 2

def test_blocked_search_oracle_equivalence(tmp_path):
    with criterion("blocked top-k == O(N^2) oracle for all k/block/thread combos"):
        query = random_unit_matrix(1000, 64, seed=101, prefix="q")
        reference = random_unit_matrix(1000, 64, seed=102, prefix="r")
        for k in (1, 5):
            oracle_idx, oracle_scores = dense_topk_oracle(query.data,
                                                          reference.data, k)
            for block_rows in (1, 7, 256, 1000):
                for threads in (1, 8):
                    reports = blocked_topk(query, reference, k=k,
                                           block_rows=block_rows, threads=threads)
                    for qi, report in enumerate(reports):
                        got_idx = [int(rid[1:]) for rid, _ in report.matches]
                        assert got_idx == oracle_idx[qi].tolist(), (
                            f"k={k} block_rows={block_rows} threads={threads} "
                            f"query {qi}")
                        got_scores = np.array([s for _, s in report.matches])
                        assert np.abs(got_scores - oracle_scores[qi]).max() < 1e-5

        # same fixture end to end through the CLI report pipeline
        gen_path, train_path = tmp_path / "gen.emb", tmp_path / "train.emb"
        write_embeddings(query, gen_path)
        write_embeddings(reference, train_path)
        out = tmp_path / "report.json"
        assert main(["simscore", "--generated", str(gen_path), "--train",
                     str(train_path), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        top1_idx, top1_scores = dense_topk_oracle(query.data, reference.data, 1)
        expected_sim = percentile_linear(top1_scores[:, 0], 95)
        assert abs(doc["dataset_similarity"] - expected_sim) < 1e-5
        expected_flags = {f"q{i}" for i in range(1000) if top1_scores[i, 0] >= 0.5}
        assert set(doc["flagged"]) == expected_flags
        for qi, row in enumerate(doc["per_query"]):
            assert row["top1_ref_id"] == f"r{top1_idx[qi, 0]}"


# ------------------------------------------------------------------ 3

def test_metric_oracles():
    rng = np.random.Generator(np.random.PCG64(2024))
    with criterion("percentile / jaccard / components / pearson match oracles "
                   "on 100+ random instances"):
        for _ in range(120):
            scores = rng.uniform(-1, 1, size=int(rng.integers(1, 60)))
            q = float(rng.uniform(0, 100))
            assert abs(dataset_similarity(scores, q)
                       - percentile_linear(scores, q)) < 1e-9

        alphabet = [f"t{i}" for i in range(12)]
        for _ in range(120):
            a = CaptionRecord("a", " ".join(
                rng.choice(alphabet, size=rng.integers(0, 8))))
            b = CaptionRecord("b", " ".join(
                rng.choice(alphabet, size=rng.integers(0, 8))))
            sa, sb = a.unigrams, b.unigrams
            expected = 1.0 if not (sa | sb) else len(sa & sb) / len(sa | sb)
            assert unigram_jaccard(a, b) == expected

        for _ in range(120):
            n = int(rng.integers(1, 150))
            edges = [(int(rng.integers(n)), int(rng.integers(n)))
                     for _ in range(int(rng.integers(0, 2 * n)))]
            assert connected_components(edges, n).tolist() == bfs_components(edges, n)

        for _ in range(120):
            n = int(rng.integers(3, 60))
            x = rng.normal(size=n)
            y = rng.normal(size=n) + rng.uniform(-2, 2) * x
            r, p = pearson_with_pvalue(x, y)
            ref_r, ref_p = scipy_stats.pearsonr(x, y)
            assert abs(r - ref_r) < 1e-9
            assert abs(p - ref_p) / ref_p < 1e-6


# ------------------------------------------------------------------ 4

def test_complexity_axioms(rng):
    with criterion("entropy axioms exact and constant JPEG < noise JPEG, 100/100"):
        def rgb(arr):
            return Image.fromarray(arr.astype(np.uint8), mode="RGB")

        constant = rgb(np.full((256, 256, 3), 128))
        assert histogram_entropy(constant) == 0.0

        two = np.zeros((256, 256, 3), dtype=np.uint8)
        two[:128] = 200
        assert abs(histogram_entropy(rgb(two)) - 1.0) <= 1e-9

        levels = np.repeat(np.arange(256, dtype=np.uint8), 256).reshape(256, 256)
        uniform = rgb(np.stack([levels] * 3, axis=2))
        assert abs(histogram_entropy(uniform) - 8.0) <= 1e-9

        wins = 0
        for trial in range(100):
            level = int(rng.integers(0, 256))
            flat_bytes, _ = jpeg_compressibility(rgb(np.full((256, 256, 3), level)))
            noise = rgb(rng.integers(0, 256, size=(256, 256, 3), dtype=np.uint8))
            noise_bytes, _ = jpeg_compressibility(noise)
            wins += int(flat_bytes < noise_bytes)
        assert wins == 100


# ------------------------------------------------------------------ 5

def _trigger_rate(strategy, probability, n_trials=10_000):
    spec = TransformSpec(strategy=strategy, probability=probability, repeats=1,
                         vocab=VOCAB, seed=33)
    caption = "zzqa zzqb zzqc zzqd"  # tokens disjoint from VOCAB and digits
    hits = 0
    for i in range(n_trials):
        out = transform_caption(caption, spec, derive_record_seed(spec.seed, i))
        hits += int(out != caption)
    return hits / n_trials


def test_mitigation_statistics(tmp_path):
    with criterion("trigger rates in 3-sigma bands, gn variance in "
                   "[0.0094, 0.0106], p=0 byte-identical"):
        for strategy in ("rc", "cwr", "rna"):
            rate = _trigger_rate(strategy, 0.4)
            assert 0.385 <= rate <= 0.415, f"{strategy} rate {rate}"
        rt_rate = _trigger_rate("rt", 0.1)
        assert 0.091 <= rt_rate <= 0.109, f"rt rate {rt_rate}"

        base = np.zeros(10_000, dtype=np.float64)
        delta = gaussian_noise(base, 0.1, seed=7) - base
        assert 0.0094 <= float(delta.var()) <= 0.0106
        assert abs(float(delta.mean())) < 0.004

        captions_path = tmp_path / "caps.jsonl"
        with open(captions_path, "w", encoding="utf-8") as fh:
            for i in range(50):
                fh.write(json.dumps({"id": f"id{i}",
                                     "caption": f"sample caption {i}"}) + "\n")
        for strategy in ("rc", "rt", "cwr", "rna"):
            out = tmp_path / f"{strategy}.jsonl"
            assert main(["mitigate", "--strategy", strategy, "--input",
                         str(captions_path), "--out", str(out),
                         "--prob", "0", "--seed", "5"]) == 0
            rows = [json.loads(l) for l in out.read_text().strip().split("\n")]
            assert [r["caption"] for r in rows] == [f"sample caption {i}"
                                                    for i in range(50)]

        emb_path = tmp_path / "e.emb"
        write_embeddings(random_unit_matrix(20, 16, seed=8), emb_path)
        noised_path = tmp_path / "noised.emb"
        assert main(["mitigate", "--strategy", "gn", "--input", str(emb_path),
                     "--out", str(noised_path), "--noise-scale", "0"]) == 0
        assert noised_path.read_bytes() == emb_path.read_bytes()
        assert (tmp_path / "noised.emb.ids").read_bytes() \
            == (tmp_path / "e.emb.ids").read_bytes()


# ------------------------------------------------------------------ 6

def test_ddf_sampling():
    with criterion("ddf=5 duplicate frequency 0.7143 +/- 0.01 over 1e5 draws; "
                   "21-caption pool balanced within +/-1"):
        records = [CaptionRecord(f"im{i}", f"caption {i}") for i in range(3)]
        m = build_manifest(records, {"im0"}, ddf=5, mode="full")
        assert [r.weight for r in m.rows] == [5.0, 1.0, 1.0]
        draws = sample_epoch(m, 100_000, seed=12)
        freq = Counter(img for img, _ in draws)["im0"] / 100_000
        assert abs(freq - 5 / 7) <= 0.01, f"duplicate frequency {freq}"

        pool = [f"variant {j}" for j in range(21)]
        one = build_manifest(records[:1], {"im0"}, ddf=5, mode="partial",
                             caption_pools={"im0": pool})
        counts = Counter(c for _, c in sample_epoch(one, 21_000, seed=4))
        assert len(counts) == 21
        assert max(counts.values()) - min(counts.values()) <= 1


# ------------------------------------------------------------------ 7

def test_subcommand_determinism(tmp_path):
    with criterion("every subcommand is byte-identical across reruns"):
        emb, _ = planted_cluster_fixture(seed=6, n=90, dim=16, sizes=(14, 18, 22))
        emb_path = tmp_path / "e.emb"
        write_embeddings(emb, emb_path)
        caps_path = tmp_path / "caps.jsonl"
        with open(caps_path, "w", encoding="utf-8") as fh:
            for rid in emb.ids:
                fh.write(json.dumps({"id": rid, "caption": f"photo of {rid}"}) + "\n")
        pools_path = tmp_path / "pools.jsonl"
        with open(pools_path, "w", encoding="utf-8") as fh:
            for rid in emb.ids:
                fh.write(json.dumps(
                    {"id": rid, "captions": [f"{rid} c{j}" for j in range(3)]}) + "\n")
        dups_path = tmp_path / "dups.txt"
        dups_path.write_text(emb.ids[0] + "\n")
        imgdir = tmp_path / "imgs"
        imgdir.mkdir()
        gen = np.random.Generator(np.random.PCG64(3))
        for i in range(3):
            arr = gen.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
            Image.fromarray(arr, mode="RGB").save(imgdir / f"im{i}.png")

        manifest_path = tmp_path / "manifest.jsonl"
        assert main(["manifest", "--records", str(caps_path), "--dup-ids",
                     str(dups_path), "--ddf", "5", "--out", str(manifest_path)]) == 0

        invocations = {
            "cluster": (["cluster", "--embeddings", str(emb_path), "--min-size",
                         "14", "--edges-out", "{dir}/edges.bin",
                         "--out", "{dir}/clusters.jsonl"],
                        ["clusters.jsonl", "clusters.jsonl.prov.json", "edges.bin"]),
            "simscore": (["simscore", "--generated", str(emb_path), "--train",
                          str(emb_path), "--out", "{dir}/report.json",
                          "--csv", "{dir}/per_query.csv"],
                         ["report.json", "per_query.csv"]),
            "selfsim": (["selfsim", "--embeddings", str(emb_path),
                         "--out", "{dir}/selfsim.json"],
                        ["selfsim.json"]),
            "complexity": (["complexity", "--images", str(imgdir),
                            "--out", "{dir}/complexity.csv"],
                           ["complexity.csv"]),
            "mitigate": (["mitigate", "--strategy", "rna", "--input",
                          str(caps_path), "--seed", "9",
                          "--out", "{dir}/mitigated.jsonl"],
                         ["mitigated.jsonl", "mitigated.jsonl.prov.json"]),
            "mitigate-gn": (["mitigate", "--strategy", "gn", "--input",
                             str(emb_path), "--seed", "9",
                             "--out", "{dir}/noised.emb"],
                            ["noised.emb", "noised.emb.ids"]),
            "mitigate-mc": (["mitigate", "--strategy", "mc", "--input",
                             str(pools_path), "--seed", "2",
                             "--out", "{dir}/picked.jsonl"],
                            ["picked.jsonl"]),
            "manifest": (["manifest", "--records", str(caps_path), "--dup-ids",
                          str(dups_path), "--ddf", "5", "--mode", "full",
                          "--out", "{dir}/manifest.jsonl"],
                         ["manifest.jsonl", "manifest.jsonl.prov.json"]),
            "sample": (["sample", "--manifest", str(manifest_path), "--n-draws",
                        "500", "--seed", "21", "--out", "{dir}/epoch.jsonl"],
                       ["epoch.jsonl", "epoch.jsonl.prov.json"]),
        }
        for name, (argv_template, outputs) in invocations.items():
            blobs = []
            for run in ("a", "b"):
                outdir = tmp_path / f"{name}-{run}"
                outdir.mkdir()
                argv = [a.replace("{dir}", str(outdir)) for a in argv_template]
                assert main(argv) == 0, name
                # provenance echoes the output path, which differs between the
                # two runs by construction; normalize it away
                blob = b"".join((outdir / f).read_bytes() for f in outputs)
                blobs.append(blob.replace(str(outdir).encode(), b"OUTDIR"))
            assert blobs[0] == blobs[1], f"{name} outputs differ across reruns"


# ------------------------------------------------------------------ 8

def test_desk_scale_substitute_for_corpus_statistics(rng):
    with criterion("synthetic correlation fixture: score = -entropy + noise "
                   "gives r < -0.99 (corpus-scale magnitudes not reproduced)"):
        table = {}
        per_query = []
        noise = rng.normal(0, 1e-3, size=150)
        for i in range(150):
            n_levels = int(rng.integers(2, 200))
            pix = rng.integers(0, n_levels, size=(64, 64))
            arr = np.stack([(pix * (255 / max(1, n_levels - 1))).astype(np.uint8)] * 3,
                           axis=2)
            entropy = histogram_entropy(Image.fromarray(arr, mode="RGB"))
            table[f"t{i}"] = ComplexityScore(id=f"t{i}", entropy_bits=entropy,
                                             jpeg_bytes=1, bits_per_pixel=0.0)
            per_query.append((f"q{i}", f"t{i}", -entropy + float(noise[i])))
        report = SimilarityReport(per_query=tuple(per_query),
                                  dataset_similarity=0.0,
                                  replication_threshold=0.5, percentile=95.0,
                                  flagged=())
        r, p = complexity_correlation(report, table, "entropy")
        assert r < -0.99
        assert p < 1e-10
