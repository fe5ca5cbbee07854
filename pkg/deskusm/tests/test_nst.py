import numpy as np
import pandas as pd
import pytest

from core.constants import SAMPLE_RATE, Source
from features import AudioClip
from nst import (
    PseudoLabeledItem,
    filter_pseudo,
    mark_kept,
    mix_datasets,
    pseudo_label,
    read_pseudo_manifest,
    segment_clip,
    write_pseudo_manifest,
)


def _item(name, words, duration):
    return PseudoLabeledItem(audio=name, hypothesis=" ".join(["w"] * words), duration=duration)


@pytest.fixture
def items():
    # words per second: 0, 0.5, 1, 2.5, 4, 5, 12
    return [
        _item("empty", 0, 2.0),
        _item("slow", 1, 2.0),
        _item("one", 2, 2.0),
        _item("mid", 5, 2.0),
        _item("four", 8, 2.0),
        _item("five", 10, 2.0),
        _item("fast", 12, 1.0),
    ]


def test_words_per_second_and_duration_check():
    assert _item("a", 3, 1.5).words_per_second == 2.0
    with pytest.raises(ValueError, match="duration"):
        _item("a", 1, 0.0)


def test_open_bounds_drop_only_empty(items):
    kept = filter_pseudo(items, 0.0, float("inf"))
    assert [it.audio for it in kept] == [it.audio for it in items if it.audio != "empty"]
    assert all(it.kept for it in kept)


def test_bounds_are_inclusive(items):
    kept = filter_pseudo(items, 1.0, 4.0)
    assert [it.audio for it in kept] == ["one", "mid", "four"]


def test_filter_is_idempotent(items):
    once = filter_pseudo(items)
    assert filter_pseudo(once) == once


def test_filter_rejects_inverted_bounds(items):
    with pytest.raises(ValueError, match="below"):
        filter_pseudo(items, 4.0, 1.0)


def test_pseudo_label_keeps_order_and_skips_unreadable():
    manifest = pd.DataFrame(
        {"path": [f"c{i}.wav" for i in range(6)], "duration": [1.0] * 6, "language": ["xa"] * 6}
    )

    def transcribe(path):
        if path == "c3.wav":
            raise OSError("cannot open")
        return "" if path == "c0.wav" else f"word {path[1]}"

    first = pseudo_label(transcribe, manifest, workers=3)
    assert [it.audio for it in first] == ["c0.wav", "c1.wav", "c2.wav", "c4.wav", "c5.wav"]
    assert first[0].hypothesis == ""
    assert first[2].hypothesis == "word 2"
    assert pseudo_label(transcribe, manifest, workers=1) == first


def test_pseudo_manifest_round_trip(tmp_path, items):
    marked = mark_kept(items, filter_pseudo(items))
    path = write_pseudo_manifest(marked, tmp_path / "pseudo.tsv")
    df = pd.read_csv(path, sep="\t", keep_default_na=False)
    assert list(df.columns) == ["path", "duration", "hypothesis", "wps", "kept", "language"]
    assert df.loc[0, "hypothesis"] == "-"
    assert read_pseudo_manifest(path) == marked

    pd.DataFrame({"path": ["a"], "hypothesis": ["x"], "language": ["xa"]}).to_csv(tmp_path / "bad.tsv", sep="\t", index=False)
    with pytest.raises(ValueError, match="lacks columns"):
        read_pseudo_manifest(tmp_path / "bad.tsv")


def test_ratio_one_is_supervised_only():
    stream = mix_datasets(list(range(5)), [], 1.0, seed=0, batch_size=8)
    for _ in range(3):
        assert {src for src, _ in stream.next_batch()} == {Source.SUPERVISED}


def test_half_ratio_splits_every_batch_evenly():
    stream = mix_datasets(list(range(10)), list(range(100, 130)), 0.5, seed=1, batch_size=8)
    for _ in range(20):
        batch = stream.next_batch()
        assert sum(src is Source.SUPERVISED for src, _ in batch) == 4
        assert sum(src is Source.PSEUDO for src, _ in batch) == 4


def test_long_run_fraction_is_exact():
    stream = mix_datasets(list(range(7)), list(range(11)), 0.7, seed=2, batch_size=8)
    for _ in range(10_000):
        assert len(stream.next_batch()) == 8
    assert stream.emitted[Source.SUPERVISED] == 56_000
    assert stream.emitted[Source.SUPERVISED] / (10_000 * 8) == 0.7


def test_stream_is_reproducible_and_cycles():
    def first_batches(seed):
        stream = mix_datasets(list(range(3)), list(range(10, 15)), 0.5, seed=seed, batch_size=4)
        return [stream.next_batch() for _ in range(6)], stream

    a, stream = first_batches(9)
    b, _ = first_batches(9)
    assert a == b
    assert stream.epochs[Source.SUPERVISED.value] >= 3
    seen = [it for batch in a[:3] for src, it in batch if src is Source.SUPERVISED]
    assert sorted(seen[:3]) == [0, 1, 2]


def test_mix_rejects_bad_arguments():
    with pytest.raises(ValueError, match="ratio"):
        mix_datasets([1], [2], 0.0, seed=0)
    with pytest.raises(ValueError, match="pseudo"):
        mix_datasets([1], [], 0.5, seed=0)


def test_segmentation_covers_clip():
    samples = np.arange(10 * SAMPLE_RATE, dtype=float)
    clip = AudioClip(samples=samples, sample_rate=SAMPLE_RATE)
    pieces = segment_clip(clip, 1.0, 2.0, np.random.default_rng(5))
    np.testing.assert_array_equal(np.concatenate([p.samples for p in pieces]), samples)
    assert all(p.duration >= 1.0 for p in pieces)
    assert all(p.duration < 3.0 for p in pieces)

    short = AudioClip(samples=np.zeros(SAMPLE_RATE // 2), sample_rate=SAMPLE_RATE)
    only = segment_clip(short, 1.0, 2.0, np.random.default_rng(0))
    assert len(only) == 1 and only[0] is short
    with pytest.raises(ValueError):
        segment_clip(clip, 2.0, 1.0, np.random.default_rng(0))
