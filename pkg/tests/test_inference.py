import numpy as np
import pytest
import torch

from demix.audio import SOURCE_CLASSES, StemSet, Waveform
from demix.errors import ConfigError, ShapeError
from demix.inference import (
    SeparationPlan,
    blend,
    coverage_counts,
    plan_chunks,
    separate,
)
from demix.model import IdentityOperator, build
from toy import TINY_CONFIG

HOP = TINY_CONFIG.hop_length
RATE = 8000


def _plan(chunk_frames=64, overlap=8):
    return SeparationPlan(chunk_frames=chunk_frames, overlap=overlap, hop_length=HOP)


class TestPlanChunks:
    def test_invalid_plan(self):
        with pytest.raises(ConfigError):
            SeparationPlan(chunk_frames=64, overlap=0, hop_length=HOP)
        with pytest.raises(ConfigError):
            SeparationPlan(chunk_frames=3, overlap=7, hop_length=HOP)

    def test_full_coverage_at_chunk_length(self):
        plan = _plan(overlap=8)
        counts = coverage_counts(plan.chunk_samples, plan)
        assert np.all(counts == 8)

    def test_overlap_one_tiles_disjoint(self):
        plan = _plan(overlap=1)
        length = int(2.5 * plan.chunk_samples)
        spans, pad = plan_chunks(length, plan)
        assert pad == 0
        assert len(spans) == int(np.ceil(length / plan.chunk_samples))
        for (s1, e1), (s2, _) in zip(spans, spans[1:]):
            assert e1 == s2

    @pytest.mark.parametrize("overlap", [1, 2, 4, 8])
    @pytest.mark.parametrize("length", [1, 1000, 4096, 10_000])
    def test_brute_force_coverage(self, overlap, length):
        plan = _plan(overlap=overlap)
        spans, pad = plan_chunks(length, plan)
        total = max(e for _, e in spans)
        counts = np.zeros(total, dtype=int)
        for s, e in spans:
            counts[s:e] += 1
        assert np.all(counts[pad : pad + length] == overlap)
        assert spans[0][0] == 0
        assert all(s % plan.stride == 0 for s, _ in spans)


class TestSeparate:
    def _mixture(self, seconds=4.0, seed=0):
        rng = np.random.default_rng(seed)
        return Waveform(0.5 * rng.standard_normal((2, int(RATE * seconds))), RATE)

    def test_identity_operator_reproduces_mixture(self):
        op = IdentityOperator(TINY_CONFIG)
        mixture = self._mixture()
        stems = separate(op, mixture, _plan())
        for cls in SOURCE_CLASSES:
            err = np.max(np.abs(stems[cls].samples - mixture.samples))
            assert err < 1e-4

    def test_zero_model_gives_zero_stems(self):
        model = build(TINY_CONFIG, seed=0)
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.zero_()
        stems = separate(model, self._mixture(1.0), _plan())
        for cls in SOURCE_CLASSES:
            assert np.all(stems[cls].samples == 0)

    def test_overlap_plans_agree(self):
        op = IdentityOperator(TINY_CONFIG)
        mixture = self._mixture(3.0, seed=1)
        a = separate(op, mixture, _plan(overlap=8))
        b = separate(op, mixture, _plan(overlap=1))
        for cls in SOURCE_CLASSES:
            assert np.max(np.abs(a[cls].samples - b[cls].samples)) < 1e-4

    def test_linearity_via_superposition(self):
        op = IdentityOperator(TINY_CONFIG)
        x = self._mixture(2.0, seed=2)
        y = self._mixture(2.0, seed=3)
        combo = Waveform(x.samples + 2 * y.samples, RATE)
        sx = separate(op, x, _plan(overlap=2))
        sy = separate(op, y, _plan(overlap=2))
        sc = separate(op, combo, _plan(overlap=2))
        for cls in SOURCE_CLASSES:
            ref = sx[cls].samples + 2 * sy[cls].samples
            assert np.max(np.abs(sc[cls].samples - ref)) < 1e-5

    def test_deterministic(self):
        model = build(TINY_CONFIG, seed=4)
        mixture = self._mixture(1.0, seed=5)
        a = separate(model, mixture, _plan(overlap=2))
        b = separate(model, mixture, _plan(overlap=2))
        for cls in SOURCE_CLASSES:
            assert np.array_equal(a[cls].samples, b[cls].samples)

    def test_hop_mismatch_rejected(self):
        op = IdentityOperator(TINY_CONFIG)
        plan = SeparationPlan(chunk_frames=64, overlap=2, hop_length=128)
        with pytest.raises(ConfigError):
            separate(op, self._mixture(1.0), plan)

    def test_single_source_model_returns_dict(self):
        from dataclasses import replace

        cfg = replace(TINY_CONFIG, sources=("vocals",))
        op = IdentityOperator(cfg)
        out = separate(op, self._mixture(1.0), _plan(overlap=1))
        assert isinstance(out, dict)
        assert set(out) == {"vocals"}


class TestBlend:
    def _stems(self, seed, seconds=0.5):
        rng = np.random.default_rng(seed)
        return StemSet(
            {
                c: Waveform(rng.standard_normal((2, int(RATE * seconds))), RATE)
                for c in SOURCE_CLASSES
            }
        )

    def test_single_estimate_identity(self):
        est = self._stems(0)
        out = blend([est], [1.0])
        for cls in SOURCE_CLASSES:
            assert np.array_equal(out[cls].samples, est[cls].samples)

    def test_identical_estimates_fixed_point(self):
        est = self._stems(1)
        out = blend([est, est], [0.3, 0.7])
        for cls in SOURCE_CLASSES:
            assert np.allclose(out[cls].samples, est[cls].samples)

    def test_equal_weights_midpoint(self):
        a, b = self._stems(2), self._stems(3)
        out = blend([a, b], [2.0, 2.0])
        for cls in SOURCE_CLASSES:
            mid = (a[cls].samples + b[cls].samples) / 2
            assert np.allclose(out[cls].samples, mid)

    def test_convex_envelope(self):
        a, b, c = self._stems(4), self._stems(5), self._stems(6)
        out = blend([a, b, c], [1.0, 2.0, 3.0])
        for cls in SOURCE_CLASSES:
            stack = np.stack([a[cls].samples, b[cls].samples, c[cls].samples])
            assert np.all(out[cls].samples <= stack.max(axis=0) + 1e-12)
            assert np.all(out[cls].samples >= stack.min(axis=0) - 1e-12)

    def test_misaligned_rejected(self):
        a = self._stems(7, seconds=0.5)
        b = self._stems(8, seconds=0.6)
        with pytest.raises(ShapeError):
            blend([a, b])

    def test_zero_weights_rejected(self):
        a, b = self._stems(9), self._stems(10)
        with pytest.raises(ConfigError):
            blend([a, b], [0.0, 0.0])
