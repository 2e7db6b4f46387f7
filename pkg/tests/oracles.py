"""Independent reference computations used by the unit and acceptance tests.

None of these share code paths with the implementation they check.
"""

import math
import statistics
from functools import lru_cache


def brute_force_max_matching(reference, estimate, tol, edge):
    """Exhaustive search over all matchings (memoised on the used-estimate set)."""
    edges = [[j for j, e in enumerate(estimate) if e.pitch == r.pitch and edge(r.onset_s, e.onset_s, tol)]
             for r in reference]

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(reference):
            return 0
        result = best(i + 1, used)
        for j in edges[i]:
            if not used >> j & 1:
                result = max(result, 1 + best(i + 1, used | 1 << j))
        return result

    return best(0, 0)


def tempo_map_oracle(tempo_events, ppq, tick):
    """Integrate one tick at a time, looking the active tempo up linearly."""
    seconds = 0.0
    for t in range(tick):
        tempo = 500_000
        for at, us in tempo_events:
            if at <= t:
                tempo = us
        seconds += tempo / 1e6 / ppq
    return seconds


def t_pdf(x, df):
    log_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(log_c - (df + 1) / 2 * math.log1p(x * x / df))


def sf_oracle(t, df):
    """0.5 minus the adaptive quadrature of the density over [0, |t|]."""
    from scipy import integrate

    area, _ = integrate.quad(t_pdf, 0.0, abs(t), args=(df,), epsabs=1e-13, epsrel=1e-13, limit=200)
    return 0.5 - area if t >= 0 else 0.5 + area


def paired_oracle(a, b):
    d = [x - y for x, y in zip(a, b)]
    t = statistics.mean(d) / (statistics.stdev(d) / math.sqrt(len(d)))
    df = len(d) - 1
    return t, df, 2 * sf_oracle(abs(t), df)


def welch_oracle(a, b):
    va, vb = statistics.variance(a) / len(a), statistics.variance(b) / len(b)
    t = (statistics.mean(a) - statistics.mean(b)) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return t, df, 2 * sf_oracle(abs(t), df)
