from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupaudit.manifest import (
    ManifestError,
    build_manifest,
    expand_manifest,
    read_manifest,
    sample_epoch,
    write_epoch_sample,
    write_manifest,
)
from dupaudit.store import CaptionRecord


def records(n=3):
    return [CaptionRecord(f"im{i}", f"caption {i}") for i in range(n)]


def pool(n=21):
    return [f"variant {j}" for j in range(n)]


# ---------------------------------------------------------------- build

def test_full_mode_weights():
    m = build_manifest(records(), {"im0"}, ddf=5, mode="full")
    assert [r.weight for r in m.rows] == [5.0, 1.0, 1.0]
    assert [r.image_id for r in m.rows] == ["im0", "im1", "im2"]
    assert m.rows[0].captions == ("caption 0",)


def test_ddf_one_degenerates():
    m = build_manifest(records(), {"im0", "im2"}, ddf=1, mode="full")
    assert [r.weight for r in m.rows] == [1.0, 1.0, 1.0]


def test_partial_mode_attaches_pool():
    m = build_manifest(records(), {"im0"}, ddf=5, mode="partial",
                       caption_pools={"im0": pool()})
    assert len(m.rows[0].captions) == 21
    assert m.rows[1].captions == ("caption 1",)


def test_partial_mode_requires_two_distinct_captions():
    with pytest.raises(ManifestError, match="im0"):
        build_manifest(records(), {"im0"}, ddf=5, mode="partial",
                       caption_pools={"im0": ["same", "same"]})
    with pytest.raises(ManifestError, match="im0"):
        build_manifest(records(), {"im0"}, ddf=5, mode="partial")


def test_unknown_dup_id_errors():
    with pytest.raises(ManifestError, match="ghost"):
        build_manifest(records(), {"ghost"}, ddf=2, mode="full")


def test_mode_and_ddf_validation():
    with pytest.raises(ManifestError, match="mode"):
        build_manifest(records(), set(), ddf=1, mode="other")
    with pytest.raises(ManifestError, match="ddf"):
        build_manifest(records(), set(), ddf=0.5, mode="full")


def test_none_mode_ignores_dup_ids():
    m = build_manifest(records(), {"im0"}, ddf=7, mode="none")
    assert [r.weight for r in m.rows] == [1.0, 1.0, 1.0]


# ---------------------------------------------------------------- sampling

def test_weighted_frequency_five_one_one():
    m = build_manifest(records(), {"im0"}, ddf=5, mode="full")
    draws = sample_epoch(m, 100_000, seed=17)
    freq = Counter(img for img, _ in draws)["im0"] / 100_000
    assert 0.7043 <= freq <= 0.7243  # 5/7 within binomial 3 sigma


def test_single_row_manifest():
    m = build_manifest(records(1), set(), ddf=1, mode="full")
    draws = sample_epoch(m, 50, seed=0)
    assert draws == [("im0", "caption 0")] * 50


def test_partial_round_robin_balanced():
    m = build_manifest(records(1), {"im0"}, ddf=5, mode="partial",
                       caption_pools={"im0": pool(21)})
    draws = sample_epoch(m, 21_000, seed=3)
    counts = Counter(caption for _, caption in draws)
    assert set(counts.values()) == {1000}


def test_sample_deterministic_per_seed():
    m = build_manifest(records(), {"im1"}, ddf=3, mode="full")
    assert sample_epoch(m, 200, seed=5) == sample_epoch(m, 200, seed=5)
    assert sample_epoch(m, 200, seed=5) != sample_epoch(m, 200, seed=6)


def test_sample_iid_caption_mode():
    m = build_manifest(records(1), {"im0"}, ddf=2, mode="partial",
                       caption_pools={"im0": pool(4)})
    draws = sample_epoch(m, 8_000, seed=6, caption_mode="iid")
    counts = Counter(c for _, c in draws)
    assert set(counts) == set(pool(4))
    for c, n in counts.items():
        assert abs(n / 8_000 - 0.25) < 0.02  # uniform per hit, not balanced
    with pytest.raises(ManifestError, match="caption_mode"):
        sample_epoch(m, 5, seed=0, caption_mode="other")


def test_sample_validation():
    m = build_manifest(records(), set(), ddf=1, mode="full")
    with pytest.raises(ManifestError, match="n_draws"):
        sample_epoch(m, 0, seed=1)
    empty = build_manifest([], set(), ddf=1, mode="full")
    with pytest.raises(ManifestError, match="empty"):
        sample_epoch(empty, 5, seed=1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 16), st.integers(1, 6))
def test_empirical_frequencies_match_weights(seed, ddf):
    m = build_manifest(records(4), {"im2"}, ddf=ddf, mode="full")
    n = 20_000
    draws = sample_epoch(m, n, seed=seed)
    freq = Counter(img for img, _ in draws)
    total_w = ddf + 3
    expect = ddf / total_w
    sigma = (expect * (1 - expect) / n) ** 0.5
    assert abs(freq["im2"] / n - expect) <= 4 * sigma + 1e-9


# ---------------------------------------------------------------- expand

def test_expand_replicates_integer_weights():
    m = build_manifest(records(), {"im0"}, ddf=5, mode="full")
    rows = expand_manifest(m)
    assert Counter(img for img, _ in rows) == {"im0": 5, "im1": 1, "im2": 1}


def test_expand_partial_cycles_pool():
    m = build_manifest(records(1), {"im0"}, ddf=4, mode="partial",
                       caption_pools={"im0": ["a", "b", "c"]})
    rows = expand_manifest(m)
    assert [c for _, c in rows] == ["a", "b", "c", "a"]


def test_expand_rejects_fractional_weights():
    m = build_manifest(records(), {"im0"}, ddf=2.5, mode="full")
    with pytest.raises(ManifestError, match="integer"):
        expand_manifest(m)


# ---------------------------------------------------------------- files

def test_manifest_file_roundtrip(tmp_path):
    m = build_manifest(records(), {"im0"}, ddf=5, mode="partial",
                       caption_pools={"im0": pool(3)})
    path = tmp_path / "manifest.jsonl"
    write_manifest(m, path)
    back = read_manifest(path)
    assert back.rows == m.rows
    assert back.mode == "partial"
    assert back.ddf == 5.0


def test_manifest_expanded_file(tmp_path):
    m = build_manifest(records(), {"im0"}, ddf=2, mode="full")
    path = tmp_path / "expanded.jsonl"
    write_manifest(m, path, expanded=True)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 4
    assert "weight" not in lines[0]


def test_epoch_sample_file(tmp_path):
    m = build_manifest(records(), set(), ddf=1, mode="full")
    draws = sample_epoch(m, 10, seed=2)
    path = tmp_path / "epoch.jsonl"
    write_epoch_sample(draws, path)
    assert len(path.read_text().strip().split("\n")) == 10
