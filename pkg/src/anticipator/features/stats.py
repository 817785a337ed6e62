"""Scalar statistics shared by the feature categories.

Degenerate inputs (zero variance, empty spectra) return 0 instead of NaN so
every feature stays finite.
"""

from __future__ import annotations

import numpy as np


def safe_div(a: float, b: float) -> float:
    return 0.0 if b == 0 else a / b


def modified_z_count(x: np.ndarray, threshold: float = 3.5) -> int:
    """Points with |0.6745 (x - median) / MAD| > threshold.

    When MAD is zero every point off the median counts as exceeding.
    """
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0:
        return int(np.count_nonzero(x != med))
    z = 0.6745 * (x - med) / mad
    return int(np.count_nonzero(np.abs(z) > threshold))


def acf(x: np.ndarray, nlags: int) -> np.ndarray:
    """Biased sample autocorrelation for lags 0..nlags (all zeros for a constant series)."""
    d = x - x.mean()
    denom = float(d @ d)
    n = x.size
    out = np.zeros(nlags + 1)
    if denom == 0:
        return out
    for k in range(nlags + 1):
        out[k] = float(d[:n - k] @ d[k:]) / denom
    return out


def pacf_from_acf(r: np.ndarray) -> np.ndarray:
    """Durbin-Levinson recursion. Returns partial autocorrelations for lags 1..len(r)-1."""
    nlags = r.size - 1
    out = np.zeros(nlags)
    phi = np.zeros(0)
    v = r[0]
    for k in range(1, nlags + 1):
        if v <= 0:
            break
        a = (r[k] - float(phi @ r[k - 1:0:-1])) / v if k > 1 else r[1] / v
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v = v * (1.0 - a * a)
        out[k - 1] = a
    return out


def linear_fit(y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line over x = 0..n-1: (slope, intercept, standard error of slope)."""
    n = y.size
    x = np.arange(n, dtype=np.float64)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = safe_div(float(((x - xm) * (y - ym)).sum()), sxx)
    intercept = ym - slope * xm
    if n <= 2:
        return slope, intercept, 0.0
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    stderr = float(np.sqrt(max(ssr, 0.0) / (n - 2) / sxx))
    return slope, intercept, stderr


def c3(x: np.ndarray, lag: int) -> float:
    n = x.size
    if n <= 2 * lag:
        return 0.0
    return float(np.mean(x[2 * lag:] * x[lag:n - lag] * x[:n - 2 * lag]))


def moments(x: np.ndarray) -> tuple[float, float, float]:
    """(population std, skewness, excess kurtosis); skew and kurtosis are 0 for constant x."""
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0:
        return 0.0, 0.0, 0.0
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return float(np.sqrt(m2)), m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx, dy = x - x.mean(), y - y.mean()
    den = float(np.sqrt((dx @ dx) * (dy @ dy)))
    if den == 0:
        return 0.0
    return float(np.clip((dx @ dy) / den, -1.0, 1.0))


def lagged_corr(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    """Correlation of x_t with y_{t+lag}."""
    n = x.size
    if abs(lag) >= n - 1:
        return 0.0
    if lag >= 0:
        return pearson(x[:n - lag], y[lag:])
    return pearson(x[-lag:], y[:n + lag])


def tlcc(x: np.ndarray, y: np.ndarray, max_lag: int) -> tuple[float, int]:
    """Largest lagged correlation over -max_lag..max_lag and the first lag attaining it."""
    best, best_lag = -np.inf, 0
    for lag in range(-max_lag, max_lag + 1):
        c = lagged_corr(x, y, lag)
        if c > best:
            best, best_lag = c, lag
    return float(best), best_lag


def complexity_estimate(x: np.ndarray) -> float:
    d = np.diff(x)
    return float(np.sqrt(d @ d))


def cid(x: np.ndarray, y: np.ndarray) -> float:
    """Complexity-invariant distance. A flat series has zero complexity; the
    correction factor then falls back to 1 + the other series' complexity."""
    ed = float(np.sqrt(np.sum((x - y) ** 2)))
    cx, cy = complexity_estimate(x), complexity_estimate(y)
    lo, hi = min(cx, cy), max(cx, cy)
    if lo == 0:
        return ed * (1.0 + hi)
    return ed * hi / lo


def quantile_codes(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def mutual_information(x: np.ndarray, y: np.ndarray, bins: int) -> float:
    """Mutual information (nats) of quantile-binned x and y."""
    cx, cy = quantile_codes(x, bins), quantile_codes(y, bins)
    joint = np.zeros((bins, bins))
    np.add.at(joint, (cx, cy), 1.0)
    joint /= joint.sum()
    px, py = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))
    return max(mi, 0.0)


def spectrum_shape(mag: np.ndarray) -> tuple[float, float, float, float]:
    """Centroid, variance, skewness and (non-excess) kurtosis of a magnitude spectrum
    treated as a distribution over bin index."""
    total = float(mag.sum())
    if total == 0:
        return 0.0, 0.0, 0.0, 0.0
    p = mag / total
    k = np.arange(mag.size, dtype=np.float64)
    mu = float(p @ k)
    var = float(p @ (k - mu) ** 2)
    if var == 0:
        return mu, 0.0, 0.0, 0.0
    skew = float(p @ (k - mu) ** 3) / var ** 1.5
    kurt = float(p @ (k - mu) ** 4) / var ** 2
    return mu, var, skew, kurt


def stft_frames(x: np.ndarray, width: int, hop: int) -> np.ndarray:
    n_frames = 1 + (x.size - width) // hop
    idx = np.arange(width)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx] * np.hanning(width)[None, :]


def spectral_kurtosis(x: np.ndarray) -> tuple[float, float]:
    """Short-time spectral kurtosis summarised as (mean, max) over frequency bins.

    Frames of width min(32, n // 4) with half-width hop and a Hann taper.
    """
    width = min(32, x.size // 4)
    if width < 2:
        return 0.0, 0.0
    hop = max(1, width // 2)
    frames = stft_frames(x, width, hop)
    if frames.shape[0] < 2:
        return 0.0, 0.0
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    m2 = power.mean(axis=0)
    m4 = (power ** 2).mean(axis=0)
    sk = np.where(m2 > 0, m4 / np.where(m2 > 0, m2, 1.0) ** 2 - 2.0, 0.0)
    return float(sk.mean()), float(sk.max())
