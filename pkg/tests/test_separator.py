import numpy as np
import pytest
from sklearn.base import clone

from demix.audio import SOURCE_CLASSES, StemSet
from demix.errors import TrainingError
from demix.separator import SourceSeparator
from toy import make_toy_dataset


def tiny_separator(**overrides):
    params = dict(
        n_fft=256,
        hop_length=64,
        freq_bins=64,
        initial_channels=8,
        growth=8,
        n_scales=2,
        blocks_per_scale=1,
        n_subbands=2,
        learning_rate=1e-3,
        batch_size=2,
        chunk_frames=16,
        steps=5,
        inference_chunk_frames=64,
        overlap=2,
        seed=0,
    )
    params.update(overrides)
    return SourceSeparator(**params)


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        sep = tiny_separator()
        params = sep.get_params()
        assert params["n_fft"] == 256
        sep.set_params(q=0.4, loss_mask_dims="batch")
        assert sep.q == 0.4

    def test_clone(self):
        sep = tiny_separator(q=0.37)
        copy = clone(sep)
        assert copy.get_params() == sep.get_params()

    def test_unfitted_transform_raises(self):
        with pytest.raises(TrainingError):
            tiny_separator().transform([])


@pytest.fixture(scope="module")
def fitted():
    tracks = make_toy_dataset(2, 5, seed=0)
    return tiny_separator().fit(tracks), tracks


class TestFitTransform:
    def test_fit_returns_self_and_trains(self, fitted):
        sep, _ = fitted
        assert sep.train_state_.step == 5
        assert sep.train_log_.startswith("step\t")

    def test_transform_single(self, fitted):
        sep, tracks = fitted
        stems = sep.transform(tracks[0].sum())
        assert isinstance(stems, StemSet)
        assert stems.n_samples == tracks[0].n_samples

    def test_transform_list(self, fitted):
        sep, tracks = fitted
        mixtures = [t.sum() for t in tracks]
        out = sep.transform(mixtures)
        assert len(out) == 2
        for stems in out:
            assert set(stems.stems) == set(SOURCE_CLASSES)

    def test_predict_alias(self, fitted):
        sep, tracks = fitted
        a = sep.predict(tracks[0].sum())
        b = sep.transform(tracks[0].sum())
        for c in SOURCE_CLASSES:
            assert np.array_equal(a[c].samples, b[c].samples)

    def test_fit_from_directory(self, tmp_path):
        from demix.audio import save_wav

        tracks = make_toy_dataset(1, 3, seed=1)
        tdir = tmp_path / "track0"
        tdir.mkdir()
        save_wav(tdir / "mixture.wav", tracks[0].sum(), "float32")
        for c in SOURCE_CLASSES:
            save_wav(tdir / f"{c}.wav", tracks[0][c], "float32")
        sep = tiny_separator().fit(tmp_path)
        assert sep.train_state_.step == 5
