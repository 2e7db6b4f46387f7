import numbers

import numpy as np
from sklearn.utils import check_array


def check_signal(x, name="signal"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or infinity")
    return x


def check_signals(X):
    """Normalise ``X`` to a list of 1-D float64 arrays.

    Accepts a 2-D array (one signal per row), a single 1-D signal, or a list
    of 1-D arrays of different lengths. Returns ``(signals, kind)`` where
    kind is ``"2d"``, ``"1d"`` or ``"ragged"`` so results can be reshaped back.
    """
    if isinstance(X, np.ndarray) and X.ndim == 1:
        return [check_signal(X)], "1d"
    if isinstance(X, np.ndarray) or (isinstance(X, (list, tuple)) and X and
                                     len({np.shape(x) for x in X}) == 1 and np.ndim(X[0]) == 1):
        arr = check_array(X, dtype=np.float64, ensure_all_finite=True)
        return list(arr), "2d"
    if isinstance(X, (list, tuple)):
        if not X:
            raise ValueError("no signals given")
        return [check_signal(x, f"signal {i}") for i, x in enumerate(X)], "ragged"
    raise TypeError(f"cannot interpret {type(X).__name__} as audio signals")


def restore_shape(signals, kind):
    if kind == "1d":
        return signals[0]
    if kind == "2d":
        return np.vstack(signals)
    return signals


def check_sample_rate(sample_rate):
    if not isinstance(sample_rate, numbers.Integral) or sample_rate <= 0:
        raise ValueError(f"sample_rate must be a positive integer, got {sample_rate!r}")
    return int(sample_rate)
