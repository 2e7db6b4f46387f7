import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from noisyamt.audio import AudioBuffer, rms
from noisyamt.augmentation import CnrPolicy, derive_seed, inject_noise, sample_decision
from noisyamt.estimators import CnrAugmenter, NoiseInjector

from conftest import sine


@pytest.fixture
def batch():
    return np.vstack([sine(a, 220 * (i + 1), seconds=0.05).samples for i, a in enumerate((0.2, 0.4, 0.6))])


class TestNoiseInjector:
    def test_params_roundtrip(self):
        est = NoiseInjector(snr_db=3.0, seed=5)
        assert est.get_params() == {"snr_db": 3.0, "seed": 5, "clip_limit": 1.0, "sample_rate": 16000}
        assert clone(est).get_params() == est.get_params()
        est.set_params(snr_db=9.0)
        assert est.snr_db == 9.0

    def test_transform_matches_inject_noise(self, batch):
        out, metas = NoiseInjector(snr_db=6.0, seed=2).fit(batch).transform_with_metadata(batch)
        assert out.shape == batch.shape
        for i, row in enumerate(batch):
            expected, _ = inject_noise(AudioBuffer(row, 16000), 6.0, derive_seed(2, "row", i))
            assert np.array_equal(out[i], expected.samples)
            assert abs(metas[i].achieved_snr_db - 6.0) <= 0.05

    def test_rms_preserved(self, batch):
        out, metas = NoiseInjector(snr_db=10.0).transform_with_metadata(batch)
        for x, y, meta in zip(batch, out, metas):
            if meta.clip.clipped_sample_count:
                continue
            assert math.isclose(rms(AudioBuffer(y, 16000)), rms(AudioBuffer(x, 16000)), rel_tol=1e-6)

    def test_one_dimensional_and_ragged(self):
        x = sine(0.3, seconds=0.01).samples
        out = NoiseInjector().transform(x)
        assert out.shape == x.shape
        ragged = [x, x[:50]]
        res = NoiseInjector().transform(ragged)
        assert [len(r) for r in res] == [len(x), 50]

    def test_no_fit_required_and_deterministic(self, batch):
        a = NoiseInjector(seed=1).transform(batch)
        b = NoiseInjector(seed=1).transform(batch)
        assert np.array_equal(a, b)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            NoiseInjector().fit(np.array([[0.1, np.nan]]))

    def test_in_pipeline(self, batch):
        pipe = Pipeline([("noise", NoiseInjector(snr_db=20.0, seed=3)), ("more", NoiseInjector(snr_db=30.0, seed=4))])
        assert pipe.fit_transform(batch).shape == batch.shape


class TestCnrAugmenter:
    def test_decisions_follow_policy(self, batch):
        est = CnrAugmenter(cnr=1, seed=9, start_index=100)
        out, metas = est.transform_with_metadata(batch)
        policy = CnrPolicy(1, seed=9)
        for i, (row, meta) in enumerate(zip(batch, metas)):
            decision = sample_decision(policy, 100 + i)
            if decision.is_clean:
                assert meta is None and np.array_equal(out[i], row)
            else:
                assert meta.target_snr_db == decision.snr_db
                assert abs(meta.achieved_snr_db - decision.snr_db) <= 0.05

    @pytest.mark.parametrize("cnr,expected", [(0, 0.0), (math.inf, 1.0), ("1/3", 0.25), (3, 0.75)])
    def test_clean_fraction(self, cnr, expected):
        decisions = CnrAugmenter(cnr=cnr, seed=1).decisions(20_000)
        frac = sum(d.is_clean for d in decisions) / len(decisions)
        assert abs(frac - expected) <= 4 * math.sqrt(expected * (1 - expected) / 20_000) + 1e-12

    def test_clone(self):
        est = CnrAugmenter(cnr="1/3", snr_hi_db=12.0)
        assert clone(est).get_params() == est.get_params()
