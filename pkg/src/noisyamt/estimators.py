"""scikit-learn compatible transformers around noise injection and CNR sampling.

Both transformers are stateless: ``fit`` only validates its input, and every
random draw is keyed by ``seed`` and the row index, so ``transform`` is
reproducible and composes with ``Pipeline`` and ``clone``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import AudioBuffer
from .augmentation import CnrPolicy, derive_seed, inject_noise, sample_decision
from .validation import check_sample_rate, check_signals, restore_shape


class _StatelessAudioTransformer(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        check_signals(X)
        check_sample_rate(self.sample_rate)
        return self

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags

    def transform(self, X):
        out, _ = self.transform_with_metadata(X)
        return out


class NoiseInjector(_StatelessAudioTransformer):
    """Add white noise at a fixed SNR to each signal, preserving its RMS.

    Row ``i`` uses the noise seed ``derive_seed(seed, "row", i)``.
    """

    def __init__(self, snr_db=12.0, seed=0, clip_limit=1.0, sample_rate=16000):
        self.snr_db = snr_db
        self.seed = seed
        self.clip_limit = clip_limit
        self.sample_rate = sample_rate

    def transform_with_metadata(self, X):
        signals, kind = check_signals(X)
        rate = check_sample_rate(self.sample_rate)
        out, metas = [], []
        for i, x in enumerate(signals):
            noisy, meta = inject_noise(AudioBuffer(x, rate), self.snr_db,
                                       derive_seed(self.seed, "row", i), self.clip_limit)
            out.append(np.array(noisy.samples))
            metas.append(meta)
        return restore_shape(out, kind), metas


class CnrAugmenter(_StatelessAudioTransformer):
    """Training-time augmentation: each row stays clean or gets noise at a random SNR.

    Row ``i`` uses draw index ``start_index + i`` of the CNR policy, so
    successive batches can continue the same deterministic stream.
    """

    def __init__(self, cnr=1, snr_lo_db=0.0, snr_hi_db=24.0, seed=0, clip_limit=1.0,
                 start_index=0, sample_rate=16000):
        self.cnr = cnr
        self.snr_lo_db = snr_lo_db
        self.snr_hi_db = snr_hi_db
        self.seed = seed
        self.clip_limit = clip_limit
        self.start_index = start_index
        self.sample_rate = sample_rate

    def policy(self):
        return CnrPolicy(self.cnr, self.snr_lo_db, self.snr_hi_db, self.seed)

    def decisions(self, n):
        policy = self.policy()
        return [sample_decision(policy, self.start_index + i) for i in range(n)]

    def transform_with_metadata(self, X):
        signals, kind = check_signals(X)
        rate = check_sample_rate(self.sample_rate)
        out, metas = [], []
        for i, (x, decision) in enumerate(zip(signals, self.decisions(len(signals)))):
            if decision.is_clean:
                out.append(x.copy())
                metas.append(None)
                continue
            noisy, meta = inject_noise(AudioBuffer(x, rate), decision.snr_db,
                                       derive_seed(self.seed, "cnr", self.start_index + i), self.clip_limit)
            out.append(np.array(noisy.samples))
            metas.append(meta)
        return restore_shape(out, kind), metas
