"""Noise-robustness evaluation toolkit for automatic music transcription."""

from .audio import AudioBuffer, ClipReport, hard_clip, power, read_wav, rms, scale, write_wav
from .augmentation import (
    AugmentationDecision,
    CnrPolicy,
    MixMetadata,
    SnrGrid,
    augment_corpus,
    clean_probability,
    derive_seed,
    inject_noise,
    noise_gain_for_snr,
    sample_decision,
    snr_levels,
    white_noise,
)
from .estimators import CnrAugmenter, NoiseInjector
from .harness import (
    Manifest,
    MockTranscriber,
    Record,
    SweepResult,
    TranscriberSpec,
    compare_systems,
    load_manifest,
    mock_transcriber,
    run_sweep,
    run_transcriber,
)
from .report import PlotSeries, render_snr_curves, series_from_sweep
from .stats import (
    ScoreSample,
    SignificanceRange,
    TTestResult,
    significant_ranges,
    student_t_sf,
    t_test,
)
from .transcription import (
    EvalResult,
    NoteEvent,
    NoteList,
    evaluate,
    match_notes,
    read_midi,
    read_notes_tsv,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "AugmentationDecision",
    "ClipReport",
    "CnrAugmenter",
    "CnrPolicy",
    "EvalResult",
    "Manifest",
    "MixMetadata",
    "MockTranscriber",
    "NoiseInjector",
    "NoteEvent",
    "NoteList",
    "PlotSeries",
    "Record",
    "ScoreSample",
    "SignificanceRange",
    "SnrGrid",
    "SweepResult",
    "TTestResult",
    "TranscriberSpec",
    "augment_corpus",
    "clean_probability",
    "compare_systems",
    "derive_seed",
    "evaluate",
    "hard_clip",
    "inject_noise",
    "load_manifest",
    "match_notes",
    "mock_transcriber",
    "noise_gain_for_snr",
    "power",
    "read_midi",
    "read_notes_tsv",
    "read_wav",
    "render_snr_curves",
    "rms",
    "run_sweep",
    "run_transcriber",
    "sample_decision",
    "scale",
    "series_from_sweep",
    "significant_ranges",
    "snr_levels",
    "student_t_sf",
    "t_test",
    "white_noise",
    "write_wav",
]
