import numpy as np
import pytest

from neurosoc.data import (AnnotationBoundsError, IngestError, MalformedHeaderError,
                           RateMismatchError, Recording, SeizureCorpusConfig, event_windows,
                           export_csv, export_raw16, ingest, seizure_corpus, window_labels)


def _csv(tmp_path, text, name="rec.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_channel_csv(tmp_path):
    rows = "\n".join(f"{i},{-i}" for i in range(10))
    p = _csv(tmp_path, "Fp1,Fp2\n" + rows + "\n")
    rec = ingest(p, sample_rate_hz=1000).recordings[0]
    assert rec.samples.shape == (2, 10)
    assert rec.channel_labels == ("Fp1", "Fp2")
    assert rec.sample_rate_hz == 1000
    assert rec.duration_s == pytest.approx(0.01)
    assert list(rec.samples[1]) == [-i for i in range(10)]


def test_annotation_past_end(tmp_path):
    p = _csv(tmp_path, "a\n" + "0\n" * 10)
    ann = tmp_path / "ann.csv"
    ann.write_text("start_s,end_s,label\n0.0,12.0,seizure\n")
    with pytest.raises(AnnotationBoundsError):
        ingest(p, sample_rate_hz=1.0, annotations=ann)


def test_annotation_order():
    with pytest.raises(AnnotationBoundsError):
        from neurosoc.data import Annotation
        Annotation(5.0, 4.0, "seizure")


@pytest.mark.parametrize("text,err", [
    ("1,2\n3,4\n", MalformedHeaderError),
    ("a,\n1,2\n", MalformedHeaderError),
    ("a,b\n1\n", IngestError),
    ("a,b\n1,x\n", IngestError),
    ("a,a\n1,2\n", MalformedHeaderError),
])
def test_bad_csv(tmp_path, text, err):
    with pytest.raises(err):
        ingest(_csv(tmp_path, text), sample_rate_hz=100)


def test_rate_mismatch_and_missing(tmp_path):
    p = _csv(tmp_path, "a\n1\n2\n")
    with pytest.raises(MalformedHeaderError, match="rate"):
        ingest(p)
    (tmp_path / "rec.csv.hdr").write_text("rate = 500\n")
    assert ingest(p).recordings[0].sample_rate_hz == 500
    with pytest.raises(RateMismatchError):
        ingest(p, sample_rate_hz=250)


def test_error_types_are_distinct():
    for a, b in [(MalformedHeaderError, RateMismatchError), (RateMismatchError, AnnotationBoundsError),
                 (MalformedHeaderError, AnnotationBoundsError)]:
        assert not issubclass(a, b) and not issubclass(b, a)
        assert issubclass(a, IngestError)


def test_missing_file_and_format(tmp_path):
    with pytest.raises(IngestError):
        ingest(tmp_path / "nope.csv")
    p = _csv(tmp_path, "a\n1\n")
    with pytest.raises(IngestError, match="format"):
        ingest(p, fmt="edf", sample_rate_hz=10)


def test_raw16_round_trip_bit_identical(tmp_path, rng):
    from neurosoc.data import Annotation
    s = rng.integers(-32768, 32768, (3, 500))
    rec = Recording(s, 2000.0, ("a", "b", "c"), (Annotation(0.05, 0.1, "seizure"),))
    p = export_raw16(rec, tmp_path / "x.raw16")
    back = ingest(p).recordings[0]
    assert np.array_equal(back.samples, s)
    assert back.channel_labels == rec.channel_labels and back.annotations == rec.annotations
    p2 = export_raw16(back, tmp_path / "y.raw16")
    assert p.read_bytes() == p2.read_bytes()


def test_csv_round_trip(tmp_path, rng):
    s = rng.integers(-512, 512, (2, 50))
    rec = Recording(s, 250.0, ("x", "y"))
    back = ingest(export_csv(rec, tmp_path / "r.csv")).recordings[0]
    assert np.array_equal(back.samples, s) and back.sample_rate_hz == 250.0


def test_raw16_needs_header(tmp_path):
    p = tmp_path / "a.raw16"
    np.zeros(10, "<i2").tofile(p)
    with pytest.raises(MalformedHeaderError):
        ingest(p)
    (tmp_path / "a.raw16.hdr").write_text("rate = 100\nchannels = 3\n")
    with pytest.raises(IngestError, match="frames"):
        ingest(p)


def test_window_labels_majority():
    from neurosoc.data import Annotation
    rec = Recording(np.zeros((1, 100)), 10.0, ("a",), (Annotation(2.4, 5.0, "seizure"),))
    lab = window_labels(rec, 1.0, ("background", "seizure"))
    assert list(lab) == [0, 0, 1, 1, 1, 0, 0, 0, 0, 0]
    assert event_windows(rec, 1.0) == [(2, 5)]


def test_corpus_is_seeded():
    cfg = SeizureCorpusConfig(n_channels=2, duration_s=30, n_events=2, event_len_s=(5, 6), focal_channels=(0,))
    a, b = seizure_corpus(cfg).recordings[0], seizure_corpus(cfg).recordings[0]
    assert np.array_equal(a.samples, b.samples) and a.annotations == b.annotations
    assert len(a.annotations) == 2
    assert np.abs(a.samples).max() <= 511
