"""Two-sample t-tests, Student-t tail probabilities and significant SNR ranges."""

import math
from dataclasses import dataclass, field

import numpy as np

from .augmentation import format_level, snr_levels
from .errors import ConvergenceError, DegenerateSampleError

METRICS = ("precision", "recall", "f1")
TEST_KINDS = ("paired", "welch")
METRIC_HEADERS = {"precision": "Precision (SNR)", "recall": "Recall (SNR)", "f1": "F1 Score (SNR)"}

_CF_EPS = 1e-12
_CF_MAX_ITER = 300
_TINY = 1e-300


@dataclass(frozen=True)
class ScoreSample:
    system_id: str
    snr_db: float
    metric: str
    values: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("score sample is empty")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("score sample contains non-finite values")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    kind: str

    def significant(self, alpha=0.05):
        """Variant better than baseline: negative t and two-sided p below alpha."""
        return self.t_statistic < 0 and self.p_value < alpha


@dataclass(frozen=True)
class SignificanceRange:
    metric: str
    lo_db: float
    hi_db: float

    def __str__(self):
        return f"[{format_level(self.lo_db)}, {format_level(self.hi_db)}]"


def _beta_cf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ConvergenceError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a, b, x, y=None):
    """I_x(a, b). ``y`` may carry ``1 - x`` computed without cancellation."""
    if y is None:
        y = 1.0 - x
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log(y)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, y) / b


def student_t_sf(t, df):
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    t2 = t * t
    denom = df + t2
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / denom, t2 / denom)
    return tail if t > 0 else 1.0 - tail


def two_sided_p(t, df):
    return min(1.0, 2.0 * student_t_sf(abs(t), df))


def t_test_values(baseline, variant, kind="paired"):
    """t-test on raw sequences; negative t means the variant scores higher."""
    a = np.asarray(baseline, dtype=np.float64)
    b = np.asarray(variant, dtype=np.float64)
    if kind == "paired":
        if a.shape != b.shape:
            raise ValueError(f"paired t-test needs equal lengths, got {a.size} and {b.size}")
        if a.size < 2:
            raise DegenerateSampleError("paired t-test needs at least 2 pairs")
        d = a - b
        sd = float(np.std(d, ddof=1))
        if sd == 0.0:
            raise DegenerateSampleError("differences have zero variance")
        n = d.size
        t = float(np.mean(d)) / (sd / math.sqrt(n))
        df = float(n - 1)
    elif kind == "welch":
        if a.size < 2 or b.size < 2:
            raise DegenerateSampleError("Welch t-test needs at least 2 values per sample")
        va, vb = float(np.var(a, ddof=1)) / a.size, float(np.var(b, ddof=1)) / b.size
        se2 = va + vb
        if se2 == 0.0:
            raise DegenerateSampleError("both samples have zero variance")
        t = (float(np.mean(a)) - float(np.mean(b))) / math.sqrt(se2)
        df = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    else:
        raise ValueError(f"kind must be one of {TEST_KINDS}, got {kind!r}")
    return TTestResult(t, df, two_sided_p(t, df), kind)


def t_test(baseline, variant, kind="paired"):
    if baseline.metric != variant.metric:
        raise ValueError(f"metric mismatch: {baseline.metric} vs {variant.metric}")
    if baseline.snr_db != variant.snr_db:
        raise ValueError(f"SNR mismatch: {baseline.snr_db} vs {variant.snr_db}")
    return t_test_values(baseline.values, variant.values, kind)


def _lookup(tests, level):
    for key, result in tests.items():
        if abs(float(key) - level) < 1e-9:
            return result
    return None


def significant_ranges(tests, alpha=0.05, grid=None, metric="f1"):
    """Maximal runs of consecutive grid levels where t < 0 and p < alpha.

    ``tests`` maps SNR level to TTestResult (or None for untestable levels).
    Without a grid, the sorted keys of ``tests`` stand in for it.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    levels = snr_levels(grid) if grid is not None else sorted(float(k) for k in tests)
    ranges = []
    run = []
    for level in levels:
        result = _lookup(tests, level)
        if result is not None and result.significant(alpha):
            run.append(level)
            continue
        if run:
            ranges.append(SignificanceRange(metric, run[0], run[-1]))
            run = []
    if run:
        ranges.append(SignificanceRange(metric, run[0], run[-1]))
    return ranges


@dataclass
class SignificanceTable:
    """Per-variant, per-metric significant SNR ranges against one baseline."""

    baseline_id: str
    alpha: float
    test_kind: str
    rows: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    sidedness: str = "two-sided"

    def to_dict(self):
        return {
            "baseline_id": self.baseline_id,
            "alpha": self.alpha,
            "test_kind": self.test_kind,
            "sidedness": self.sidedness,
            "criterion": "t_statistic < 0 and p_value < alpha",
            "rows": {
                variant: {m: [[r.lo_db, r.hi_db] for r in ranges] for m, ranges in metrics.items()}
                for variant, metrics in self.rows.items()
            },
            "tests": {
                variant: {
                    m: [
                        {"snr_db": level, **({"t_statistic": r.t_statistic, "degrees_of_freedom": r.degrees_of_freedom,
                                              "p_value": r.p_value} if r is not None else {"untestable": True})}
                        for level, r in sorted(per_level.items())
                    ]
                    for m, per_level in metrics.items()
                }
                for variant, metrics in self.tests.items()
            },
        }

    def to_markdown(self, row_label="CNR"):
        lines = [
            f"| {row_label} | " + " | ".join(METRIC_HEADERS[m] for m in METRICS) + " |",
            "|---|" + "---|" * len(METRICS),
        ]
        for variant, metrics in self.rows.items():
            cells = [", ".join(str(r) for r in metrics.get(m, ())) or "none" for m in METRICS]
            lines.append(f"| {variant} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
