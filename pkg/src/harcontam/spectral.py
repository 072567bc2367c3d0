"""Global and local sample autocovariances, periodograms and contamination diagnostics.

All autocovariances use divisor ``T`` (or the window length) rather than
``T - k``.  Periodogram ordinates are stored on ``[0, pi]`` only.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BoundaryError, DomainError, NumericError, UnknownNameError
from .models import TimeSeries, _as_array, break_index, contamination_constant

__all__ = [
    "AcfEstimate",
    "PeriodogramEstimate",
    "ContaminationReport",
    "K2_KERNELS",
    "get_k2",
    "sample_autocov",
    "periodogram",
    "dft_direct",
    "local_window",
    "local_autocov_hat",
    "dk_autocov",
    "dk_autocov_kernel",
    "dk_autocov_kernel_lags",
    "LaggedProducts",
    "local_periodogram",
    "d_star_hat",
]


@dataclass(frozen=True)
class AcfEstimate:
    """Autocovariances at integer lags.

    ``clamped`` lists block centres that were shifted inward so the local
    window fits inside the sample (DK estimates only).
    """

    lags: np.ndarray
    values: np.ndarray
    demeaned: bool = True
    method: str = "global"
    clamped: tuple = ()

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=int)
        vals = np.asarray(self.values, dtype=float)
        if lags.shape != vals.shape:
            raise DomainError("lags and values must have equal length")
        if not np.all(np.isfinite(vals)):
            raise NumericError("autocovariance estimate is not finite")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, k: int) -> float:
        idx = np.flatnonzero(self.lags == k)
        if idx.size == 0:
            raise KeyError(k)
        return float(self.values[idx[0]])

    def shifted(self, c: float) -> "AcfEstimate":
        return AcfEstimate(self.lags, self.values - c, self.demeaned, self.method, self.clamped)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "value"])
            for k, v in zip(self.lags, self.values):
                w.writerow([int(k), repr(float(v))])


@dataclass(frozen=True)
class PeriodogramEstimate:
    frequencies: np.ndarray
    ordinates: np.ndarray
    window: tuple | None = None  # (u, n_T) for local periodograms

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq", "value"])
            for f, v in zip(self.frequencies, self.ordinates):
                w.writerow([repr(float(f)), repr(float(v))])


@dataclass(frozen=True)
class ContaminationReport:
    d_hat: float
    regime_means: tuple
    regime_fractions: tuple
    regime_bounds: tuple
    corrected_acf: AcfEstimate

    def to_dict(self) -> dict:
        return {
            "d_hat": self.d_hat,
            "regimes": [
                {"lo": lo, "hi": hi, "mean": m}
                for (lo, hi), m in zip(self.regime_bounds, self.regime_means)
            ],
            "corrected_acf": [
                {"lag": int(k), "value": float(v)}
                for k, v in zip(self.corrected_acf.lags, self.corrected_acf.values)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# time-smoothing kernels on [0, 1]


def _k2_rect(x):
    x = np.asarray(x, dtype=float)
    return ((x >= 0.0) & (x < 1.0)).astype(float)


def _k2_quadratic(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0.0) & (x <= 1.0), 6.0 * x * (1.0 - x), 0.0)


K2_KERNELS: dict[str, Callable] = {"rectangular": _k2_rect, "quadratic": _k2_quadratic}


def get_k2(K2) -> Callable:
    if callable(K2):
        return K2
    try:
        return K2_KERNELS[K2]
    except KeyError:
        raise UnknownNameError(
            f"unknown time-smoothing kernel {K2!r}; expected one of {sorted(K2_KERNELS)}"
        ) from None


# ---------------------------------------------------------------------------
# global estimators


def _acov_all(x: np.ndarray, max_lag: int) -> np.ndarray:
    """``T^{-1} sum_t x_t x_{t-k}`` for ``k = 0..max_lag`` via zero-padded FFT."""
    T = x.size
    n = 1 << (2 * T - 1).bit_length()
    fx = np.fft.rfft(x, n)
    r = np.fft.irfft(fx * np.conj(fx), n)[: max_lag + 1]
    return r / T


def sample_autocov(y, max_lag: int, demean: bool = True) -> AcfEstimate:
    """Sample autocovariances ``Gamma_hat(k)`` for ``k = 0..max_lag`` with divisor ``T``."""
    x = _as_array(y)
    T = x.size
    if not 0 <= max_lag < T:
        raise DomainError(f"max_lag must satisfy 0 <= max_lag < T={T}, got {max_lag}")
    if demean:
        x = x - x.mean()
    if max_lag < 32:
        vals = np.array([np.dot(x[k:], x[: T - k]) / T for k in range(max_lag + 1)])
    else:
        vals = _acov_all(x, max_lag)
    return AcfEstimate(np.arange(max_lag + 1), vals, demean, "global")


def dft_direct(x, freqs) -> np.ndarray:
    """Direct ``O(n * m)`` sum ``sum_{t=1}^n x_t e^{-i omega t}``; the oracle for the FFT path."""
    x = np.asarray(x, dtype=float)
    t = np.arange(1, x.size + 1)
    return np.array([np.sum(x * np.exp(-1j * w * t)) for w in np.atleast_1d(freqs)])


def periodogram(y) -> PeriodogramEstimate:
    """``I_T(omega_j) = |T^{-1/2} sum_t e^{-i omega_j t} V_t|^2`` at ``omega_j = 2 pi j / T``."""
    x = _as_array(y)
    T = x.size
    if T < 2:
        raise DomainError("periodogram needs T >= 2")
    ords = np.abs(np.fft.rfft(x)) ** 2 / T
    freqs = 2.0 * np.pi * np.arange(ords.size) / T
    return PeriodogramEstimate(freqs, ords)


# ---------------------------------------------------------------------------
# local estimators


def _half_lags(k: int) -> tuple[int, int]:
    k = abs(int(k))
    lead = k // 2
    return lead, k - lead


def local_window(T: int, center: int, k: int, n2: int, clamp: bool = False):
    """Feasible centre for the local window of ``c_hat_T``.

    Returns ``(centre, clamped)``.  The window covers 1-based indices
    ``centre - h_lag - n2/2 + 1 .. centre + h_lead + n2/2``.
    """
    lead, lag = _half_lags(k)
    half = n2 // 2
    lo_c = half + lag
    hi_c = T - half - lead
    if lo_c > hi_c:
        raise BoundaryError(
            f"window of length n2={n2} at lag {k} does not fit in a sample of T={T}"
        )
    if lo_c <= center <= hi_c:
        return center, False
    if not clamp:
        bad = center - lag - half + 1 if center < lo_c else center + lead + half
        raise BoundaryError(
            f"local window at centre t={center} (lag {k}, n2={n2}) needs index {bad}, "
            f"outside [1, {T}]"
        )
    return min(max(center, lo_c), hi_c), True


def _c_hat_at(x: np.ndarray, center: int, k: int, n2: int, demean: bool) -> float:
    lead, lag = _half_lags(k)
    half = n2 // 2
    # 0-based slices of the 1-based index ranges
    a0 = center - half
    w = x[a0 : a0 + n2]
    m = w.mean() if demean else 0.0
    va = x[a0 + lead : a0 + lead + n2] - m
    vb = x[a0 - lag : a0 - lag + n2] - m
    return float(np.dot(va, vb) / n2)


def _check_n2(n2: int) -> None:
    if n2 < 2 or n2 % 2:
        raise DomainError(f"n2 must be an even integer >= 2, got {n2}")


def local_autocov_hat(
    y, u: float, k: int, n2: int, demean: bool = True, clamp: bool = False
) -> float:
    """Local sample autocovariance ``c_hat_T(u, k)`` over a window of length ``n2``.

    The products pair ``V`` at ``floor(Tu) + floor(|k|/2) - n2/2 + s + 1`` with
    the value ``|k|`` steps earlier, centred on the window mean around
    ``floor(Tu)``.  Odd lags split as ``floor(|k|/2)`` forward and the rest
    backward.
    """
    x = _as_array(y)
    _check_n2(n2)
    T = x.size
    if not 0.0 < u <= 1.0:
        raise DomainError(f"u must lie in (0, 1], got {u}")
    center, _ = local_window(T, int(math.floor(T * u + 1e-9)), k, n2, clamp)
    return _c_hat_at(x, center, k, n2, demean)


def dk_autocov(
    y, max_lag: int, n_T: int, n2: int, demean: bool = True, lags: Sequence[int] | None = None
) -> AcfEstimate:
    """Integrated local autocovariance ``(n_T/T) sum_{r=1}^{floor(T/n_T)} c_hat_T(r n_T/T, k)``.

    Block windows that leave the sample are shifted inward; the shifted
    block centres are reported in ``clamped``.  A trailing partial block is
    dropped.
    """
    x = _as_array(y)
    T = x.size
    _check_n2(n2)
    if n_T < 1 or T // n_T < 1:
        raise DomainError(f"need 1 <= n_T <= T, got n_T={n_T}, T={T}")
    ks = np.arange(max_lag + 1) if lags is None else np.asarray(lags, dtype=int)
    nb = T // n_T
    vals = np.zeros(ks.size)
    clamped = set()
    for r in range(1, nb + 1):
        for i, k in enumerate(ks):
            c, moved = local_window(T, r * n_T, int(k), n2, clamp=True)
            if moved:
                clamped.add(r * n_T)
            vals[i] += _c_hat_at(x, c, int(k), n2, demean)
    vals *= n_T / T
    return AcfEstimate(ks, vals, demean, "dk", tuple(sorted(clamped)))


def dk_autocov_kernel(y, k: int, u: float, b2: float, K2="quadratic", demean: bool = True) -> float:
    """Kernel-smoothed local autocovariance ``c_hat_DK,T(u, k)``.

    ``(T b2)^{-1} sum_{s=|k|+1}^T K2((Tu - s + |k|/2) / (T b2)) V_s V_{s-|k|}``
    where ``V`` is centred by its ``K2``-weighted local mean at ``u`` when
    ``demean`` is set.
    """
    return float(dk_autocov_kernel_lags(y, [k], u, b2, K2, demean)[0])


def dk_autocov_kernel_lags(y, lags, u: float, b2: float, K2="quadratic", demean: bool = True):
    """Vector version of :func:`dk_autocov_kernel` over several lags at one ``u``."""
    x = _as_array(y)
    T = x.size
    lags = np.abs(np.asarray(lags, dtype=int))
    if not 0.0 < b2 <= 1.0:
        raise DomainError(f"b2 must lie in (0, 1], got {b2}")
    out = np.zeros(lags.size)
    ok = lags < T
    if np.any(ok):
        top = int(lags[ok].max())
        full = LaggedProducts(x, top).local_acov([u], [b2], get_k2(K2), demean)[0]
        out[ok] = full[lags[ok]]
    return out


class LaggedProducts:
    """Precomputed lagged products for repeated kernel-smoothed local autocovariances.

    Row ``k`` holds ``x_s x_{s-k}`` (and ``x_s + x_{s-k}``) for ``s = k+1..T``
    so that locally demeaned products at any ``u`` are a weighted row sum.
    """

    def __init__(self, x: np.ndarray, max_lag: int):
        x = np.asarray(x, dtype=float)
        T = x.size
        self.T, self.max_lag = T, max_lag
        self.x = x
        k = np.arange(max_lag + 1)[:, None]
        s = np.arange(1, T + 1)[None, :]
        valid = s >= k + 1
        lagged_idx = np.where(valid, s - 1 - k, 0)
        xs = np.broadcast_to(x[None, :], valid.shape)
        xl = x[lagged_idx]
        self.valid = valid
        self.prod = np.where(valid, xs * xl, 0.0)
        self.summ = np.where(valid, xs + xl, 0.0)
        # offset grid: (Tu - s + k/2) without the Tu part
        self.offset = -s + k / 2.0
        self.svec = np.arange(1, T + 1)

    def local_acov(self, us, b2s, K2, demean: bool, renormalize: bool = False) -> np.ndarray:
        """Rows of ``c_hat_DK,T(u_r, k)`` for ``k = 0..max_lag``, one row per ``u_r``.

        ``renormalize`` divides by the in-sample kernel mass at lag 0 instead
        of ``T b2``, so windows that leave the sample are not shrunk.
        """
        T = self.T
        out = np.empty((len(us), self.max_lag + 1))
        for i, (u, b2) in enumerate(zip(us, b2s)):
            h = T * b2
            w = K2((T * u + self.offset) / h)
            w = np.where(self.valid, w, 0.0)
            w0 = K2((T * u - self.svec) / h)
            tot = w0.sum()
            if renormalize and tot > 0:
                h = tot
            if demean:
                m = float(np.dot(w0, self.x) / tot) if tot > 0 else 0.0
                out[i] = (w * (self.prod - m * self.summ + m * m)).sum(axis=1) / h
            else:
                out[i] = (w * self.prod).sum(axis=1) / h
        return out


def local_periodogram(y, u: float, n_T: int, clamp: bool = False) -> PeriodogramEstimate:
    """``I_L,T(u, omega_l) = |n_T^{-1/2} sum_s V_{floor(Tu) - n_T/2 + s + 1} e^{-i omega_l s}|^2``."""
    x = _as_array(y)
    T = x.size
    if n_T < 2 or n_T % 2:
        raise DomainError(f"n_T must be an even integer >= 2, got {n_T}")
    center, _ = local_window(T, int(math.floor(T * u + 1e-9)), 0, n_T, clamp)
    seg = x[center - n_T // 2 : center + n_T // 2]
    ords = np.abs(np.fft.rfft(seg)) ** 2 / n_T
    freqs = 2.0 * np.pi * np.arange(ords.size) / n_T
    return PeriodogramEstimate(freqs, ords, (u, n_T))


# ---------------------------------------------------------------------------
# contamination


def regime_slices(T: int, break_fractions: Sequence[float]) -> list[slice]:
    """0-based slices for regimes ``t in (floor(T lambda_{j-1}), floor(T lambda_j)]``."""
    bf = list(break_fractions)
    if any(not 0.0 < b < 1.0 for b in bf) or any(a >= b for a, b in zip(bf, bf[1:])):
        raise DomainError("break fractions must be strictly increasing in (0, 1)")
    edges = [0] + [break_index(T, b) for b in bf] + [T]
    out = []
    for a, b in zip(edges, edges[1:]):
        if b <= a:
            raise DomainError(f"regime ({a}, {b}] is empty at T={T}")
        out.append(slice(a, b))
    return out


def d_star_hat(y, break_fractions: Sequence[float], max_lag: int = 10) -> ContaminationReport:
    """Plug-in contamination ``d_hat*`` from regime sample means and the corrected ACF."""
    x = _as_array(y)
    T = x.size
    sl = regime_slices(T, break_fractions)
    means = tuple(float(x[s].mean()) for s in sl)
    lam = [0.0] + list(break_fractions) + [1.0]
    fracs = tuple(b - a for a, b in zip(lam, lam[1:]))
    d = contamination_constant(means, fracs) if len(sl) > 1 else 0.0
    acf = sample_autocov(x, min(max_lag, T - 1))
    bounds = tuple(zip(lam[:-1], lam[1:]))
    return ContaminationReport(d, means, fracs, bounds, acf.shifted(d))


__all__ += ["regime_slices"]
