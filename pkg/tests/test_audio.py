import numpy as np
import pytest

from demix.audio import (
    SOURCE_CLASSES,
    StemSet,
    Waveform,
    load_track,
    load_wav,
    mixture_residual,
    save_wav,
    scan_dataset,
    wav_info,
)
from demix.errors import (
    LengthMismatchError,
    MalformedHeaderError,
    MissingStemError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)


def random_waveform(rng, channels=2, length=4410, rate=44100):
    return Waveform(rng.uniform(-0.9, 0.9, size=(channels, length)), rate)


def write_track(directory, stems: StemSet, mixture=None):
    directory.mkdir(parents=True, exist_ok=True)
    mixture = mixture or stems.sum()
    save_wav(directory / "mixture.wav", mixture, "float32")
    for cls in SOURCE_CLASSES:
        save_wav(directory / f"{cls}.wav", stems[cls], "float32")


def make_stems(rng, length=4410, rate=44100):
    return StemSet(
        {c: random_waveform(rng, length=length, rate=rate) for c in SOURCE_CLASSES}
    )


class TestWavRoundTrip:
    def test_zero_float32(self, tmp_path):
        w = Waveform(np.zeros((2, 44100)), 44100)
        save_wav(tmp_path / "z.wav", w, "float32")
        out = load_wav(tmp_path / "z.wav")
        assert out.n_channels == 2
        assert out.sample_rate == 44100
        assert out.n_samples == 44100
        assert np.all(out.samples == 0)

    def test_pcm16_endpoint(self, tmp_path):
        # sample value -32768 maps to -1.0 exactly
        import struct

        payload = struct.pack("<h", -32768)
        header = (
            b"RIFF" + struct.pack("<I", 36 + 2) + b"WAVE"
            + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 44100, 88200, 2, 16)
            + b"data" + struct.pack("<I", 2)
        )
        (tmp_path / "m.wav").write_bytes(header + payload)
        out = load_wav(tmp_path / "m.wav")
        assert out.samples[0, 0] == -1.0

    def test_float32_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        w = Waveform(
            rng.uniform(-1, 1, size=(2, 5000)).astype(np.float32).astype(np.float64),
            44100,
        )
        save_wav(tmp_path / "r.wav", w, "float32")
        out = load_wav(tmp_path / "r.wav")
        assert np.array_equal(out.samples, w.samples)

    def test_float32_save_idempotent(self, tmp_path):
        rng = np.random.default_rng(1)
        w = random_waveform(rng)
        save_wav(tmp_path / "a.wav", w, "float32")
        again = load_wav(tmp_path / "a.wav")
        save_wav(tmp_path / "b.wav", again, "float32")
        assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()

    @pytest.mark.parametrize("fmt,bound", [("pcm16", 1 / 32768), ("pcm24", 1 / (1 << 23))])
    def test_integer_quantization_bound(self, tmp_path, fmt, bound):
        rng = np.random.default_rng(2)
        w = random_waveform(rng)
        save_wav(tmp_path / "q.wav", w, fmt)
        out = load_wav(tmp_path / "q.wav")
        assert np.max(np.abs(out.samples - w.samples)) <= bound

    def test_byte_length_is_canonical(self, tmp_path):
        w = Waveform(np.zeros((2, 1000)), 44100)
        for fmt, bytes_per in (("pcm16", 2), ("pcm24", 3), ("float32", 4)):
            save_wav(tmp_path / "c.wav", w, fmt)
            size = (tmp_path / "c.wav").stat().st_size
            assert size == 44 + 2 * 1000 * bytes_per

    def test_non_finite_rejected(self, tmp_path):
        w = Waveform(np.zeros((1, 10)), 44100)
        w.samples[0, 3] = np.inf
        with pytest.raises(Exception):
            save_wav(tmp_path / "bad.wav", w, "float32")


class TestWavErrors:
    def test_malformed_header(self, tmp_path):
        (tmp_path / "x.wav").write_bytes(b"NOTARIFFFILE")
        with pytest.raises(MalformedHeaderError):
            load_wav(tmp_path / "x.wav")

    def test_unsupported_codec(self, tmp_path):
        import struct

        header = (
            b"RIFF" + struct.pack("<I", 36) + b"WAVE"
            + b"fmt " + struct.pack("<IHHIIHH", 16, 7, 1, 8000, 8000, 1, 8)  # mu-law
            + b"data" + struct.pack("<I", 0)
        )
        (tmp_path / "x.wav").write_bytes(header)
        with pytest.raises(UnsupportedFormatError):
            load_wav(tmp_path / "x.wav")

    def test_truncated_payload(self, tmp_path):
        w = Waveform(np.zeros((1, 100)), 8000)
        save_wav(tmp_path / "x.wav", w, "pcm16")
        data = (tmp_path / "x.wav").read_bytes()
        (tmp_path / "x.wav").write_bytes(data[:-50])
        with pytest.raises(TruncatedPayloadError):
            load_wav(tmp_path / "x.wav")


class TestTracks:
    def test_mixture_equals_stem_sum(self, tmp_path):
        rng = np.random.default_rng(3)
        stems = make_stems(rng)
        write_track(tmp_path / "t", stems)
        mixture, loaded = load_track(tmp_path / "t")
        # float32 on disk: compare at float32 resolution
        assert mixture_residual(mixture, loaded) < 1e-6

    def test_missing_stem_named(self, tmp_path):
        rng = np.random.default_rng(4)
        write_track(tmp_path / "t", make_stems(rng))
        (tmp_path / "t" / "bass.wav").unlink()
        with pytest.raises(MissingStemError, match="bass"):
            load_track(tmp_path / "t")

    def test_length_mismatch(self, tmp_path):
        rng = np.random.default_rng(5)
        stems = make_stems(rng)
        write_track(tmp_path / "t", stems)
        short = Waveform(stems["vocals"].samples[:, :-1], 44100)
        save_wav(tmp_path / "t" / "vocals.wav", short, "float32")
        with pytest.raises(LengthMismatchError):
            load_track(tmp_path / "t")

    def test_mono_to_stereo(self):
        w = Waveform(np.ones((1, 10)), 8000)
        st = w.with_channels(2)
        assert st.n_channels == 2
        assert np.array_equal(st.samples[0], st.samples[1])


class TestScan:
    def test_empty_root(self, tmp_path):
        assert len(scan_dataset(tmp_path)) == 0

    def test_valid_and_invalid(self, tmp_path, caplog):
        rng = np.random.default_rng(6)
        for i in range(3):
            write_track(tmp_path / f"track{i}", make_stems(rng))
        (tmp_path / "broken").mkdir()
        import logging

        with caplog.at_level(logging.WARNING, logger="demix.audio"):
            index = scan_dataset(tmp_path)
        assert len(index) == 3
        assert any("broken" in r.message for r in caplog.records)

    def test_sorted_and_deterministic(self, tmp_path):
        rng = np.random.default_rng(7)
        for name in ("bb", "aa", "cc"):
            write_track(tmp_path / name, make_stems(rng))
        first = scan_dataset(tmp_path)
        second = scan_dataset(tmp_path)
        assert [t.name for t in first.tracks] == ["aa", "bb", "cc"]
        assert [t.name for t in second.tracks] == [t.name for t in first.tracks]

    def test_durations_match_loaded_lengths(self, tmp_path):
        rng = np.random.default_rng(8)
        for i, length in enumerate((1000, 2000)):
            write_track(tmp_path / f"t{i}", make_stems(rng, length=length))
        index = scan_dataset(tmp_path)
        for rec in index.tracks:
            _mix, stems = load_track(rec.path)
            assert rec.duration == stems.n_samples

    def test_wav_info_matches(self, tmp_path):
        rng = np.random.default_rng(9)
        w = random_waveform(rng, channels=2, length=1234, rate=22050)
        save_wav(tmp_path / "i.wav", w, "pcm24")
        assert wav_info(tmp_path / "i.wav") == (2, 22050, 1234)
