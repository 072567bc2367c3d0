"""Long-run variance estimators.

Classical kernel HAC (Bartlett and quadratic-spectral lag windows) with
fixed, Newey-West and Andrews plug-in bandwidths, Andrews-Monahan AR(1)
prewhitening, the full-bandwidth Bartlett (KVB), the equally weighted
cosine estimator (EWC) and the double-kernel HAC (DK-HAC) that smooths
local autocovariances over both lags and time.

Every estimator maps ``c * V`` to ``c**2`` times the estimate.  The
data-driven bandwidths are scale invariant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, NumericError, UnknownNameError
from .models import _as_array
from .spectral import LaggedProducts, _acov_all, get_k2

__all__ = [
    "LagKernel",
    "bartlett",
    "qs",
    "get_kernel",
    "LrvEstimate",
    "DkBandwidths",
    "hac",
    "nw87",
    "nw87_lags",
    "andrews91",
    "kvb",
    "kvb_double_sum",
    "ewc",
    "ewc_default_B",
    "D1_reference",
    "dk_bandwidths",
    "dk_hac",
    "dk_gamma",
    "estimate_lrv",
    "LRV_METHODS",
]

QS_CURVATURE = 18.0 * math.pi**2 / 125.0  # 1 - K(x) ~ QS_CURVATURE * x^2 near 0
AR_CLIP = 0.97


# ---------------------------------------------------------------------------
# lag kernels


def _bartlett(x):
    x = np.abs(np.asarray(x, dtype=float))
    return np.clip(1.0 - x, 0.0, None)


def _qs(x):
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x < 1e-4
    out[small] = 1.0 - QS_CURVATURE * x[small] ** 2
    xb = x[~small]
    z = 6.0 * math.pi * xb / 5.0
    with np.errstate(over="ignore", invalid="ignore"):
        out[~small] = 25.0 / (12.0 * math.pi**2 * xb**2) * (np.sin(z) / z - np.cos(z))
    out[np.isinf(x)] = 0.0
    return out


@dataclass(frozen=True)
class LagKernel:
    name: str
    evaluator: Callable
    truncated: bool  # zero outside |x| <= 1

    def __call__(self, x):
        v = self.evaluator(x)
        return float(v) if np.ndim(v) == 0 else v


bartlett = LagKernel("bartlett", _bartlett, True)
qs = LagKernel("qs", _qs, False)
_KERNELS = {"bartlett": bartlett, "qs": qs}


def get_kernel(kernel) -> LagKernel:
    if isinstance(kernel, LagKernel):
        return kernel
    try:
        return _KERNELS[str(kernel).lower()]
    except KeyError:
        raise UnknownNameError(
            f"unknown lag kernel {kernel!r}; expected one of {sorted(_KERNELS)}"
        ) from None


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class LrvEstimate:
    value: float
    method: str
    b1: float | None = None
    b2: float | None = None
    n_T: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericError(f"{self.method}: long-run variance estimate is not finite")

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            return v

        return {
            "value": self.value,
            "method": self.method,
            "b1": self.b1,
            "b2": self.b2,
            "n_T": self.n_T,
            "diagnostics": clean(self.diagnostics),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class DkBandwidths:
    """Plug-in bandwidths for the DK-HAC estimator.

    ``b2_local`` maps block index ``r`` (centre ``u = r n_T / T``) to the
    local time bandwidth.
    """

    b1: float
    b2_bar: float
    b2_local: dict
    phi2: float
    n_T: int
    D1: dict = field(default_factory=dict)
    D2: dict = field(default_factory=dict)
    ar_fits: tuple = ()

    def __post_init__(self):
        if not self.b1 > 0 or not 0 < self.b2_bar <= 1:
            raise DomainError(f"invalid DK bandwidths b1={self.b1}, b2_bar={self.b2_bar}")


# ---------------------------------------------------------------------------
# kernel HAC


def _weighted_acov_sum(gam: np.ndarray, weights: np.ndarray) -> float:
    return float(gam[0] * weights[0] + 2.0 * np.dot(gam[1:], weights[1:]))


def _lag_weights(kernel: LagKernel, b1: float, T: int):
    if math.isinf(b1):
        w = np.zeros(1)
        w[0] = 1.0
        return w
    if kernel.truncated:
        L = min(T - 1, int(math.floor(1.0 / b1 + 1e-12)))
        return kernel.evaluator(b1 * np.arange(L + 1))
    return kernel.evaluator(b1 * np.arange(T))


def hac(y, kernel="bartlett", b1: float = 0.1, demean: bool = True) -> LrvEstimate:
    """``sum_{|k|<T} K1(b1 k) Gamma_hat(k)``."""
    kern = get_kernel(kernel)
    if not b1 > 0:
        raise DomainError(f"b1 must be positive, got {b1}")
    x = _as_array(y)
    T = x.size
    if demean:
        x = x - x.mean()
    w = _lag_weights(kern, b1, T)
    gam = _acov_all(x, w.size - 1) if w.size > 1 else np.array([np.dot(x, x) / T])
    val = _weighted_acov_sum(gam, w)
    return LrvEstimate(val, f"hac-{kern.name}", b1, diagnostics={"lags_used": w.size - 1})


def nw87_lags(T: int) -> int:
    return int(math.floor(0.75 * T ** (1.0 / 3.0)))


def nw87(y) -> LrvEstimate:
    """Newey-West Bartlett HAC with ``b1 = 1 / (0.75 T^{1/3})``."""
    x = _as_array(y)
    T = x.size
    if T < 8:
        raise DomainError(f"nw87 needs T >= 8, got {T}")
    b1 = 1.0 / (0.75 * T ** (1.0 / 3.0))
    est = hac(x, bartlett, b1)
    return LrvEstimate(est.value, "nw87", b1, diagnostics={"lags": nw87_lags(T)})


def _ar1_fit(x: np.ndarray) -> float:
    den = float(np.dot(x[:-1], x[:-1]))
    if den <= 0.0:
        raise NumericError("degenerate AR(1) fit: zero variance")
    return float(np.dot(x[1:], x[:-1]) / den)


def _andrews_b1(rho: float, T: int) -> float:
    alpha = 4.0 * rho * rho / (1.0 - rho) ** 4
    if alpha == 0.0:
        return math.inf
    return 1.0 / (1.3221 * (alpha * T) ** 0.2)


def andrews91(y, prewhiten: bool = False, rho_override: float | None = None) -> LrvEstimate:
    """QS HAC with the AR(1) plug-in bandwidth ``S_T = 1.3221 (alpha_hat(2) T)^{1/5}``.

    With ``prewhiten`` the demeaned series is filtered by a fitted AR(1)
    (coefficient bounded by 0.97 in absolute value), the filtered series
    is estimated the same way and the result is recoloured by
    ``(1 - rho_hat)^{-2}``.  ``rho_override`` replaces the first-stage fit.
    """
    x = _as_array(y)
    T = x.size
    if T < 20:
        raise DomainError(f"andrews91 needs T >= 20, got {T}")
    x = x - x.mean()
    if not prewhiten:
        rho = _ar1_fit(x)
        b1 = _andrews_b1(rho, T)
        est = hac(x, qs, b1, demean=False)
        return LrvEstimate(est.value, "a91", b1, diagnostics={"rho": rho})
    raw = _ar1_fit(x) if rho_override is None else float(rho_override)
    rho = min(max(raw, -AR_CLIP), AR_CLIP)
    e = x[1:] - rho * x[:-1]
    rho_e = _ar1_fit(e)
    b1 = _andrews_b1(rho_e, e.size)
    est = hac(e, qs, b1, demean=False)
    val = est.value / (1.0 - rho) ** 2
    return LrvEstimate(
        val,
        "a91-pw",
        b1,
        diagnostics={"rho_raw": raw, "rho": rho, "clipped": rho != raw, "rho_whitened": rho_e},
    )


def kvb(y, demean: bool = True) -> LrvEstimate:
    """Full-bandwidth Bartlett HAC (``b1 = 1/T``) in lag form."""
    x = _as_array(y)
    T = x.size
    if T < 2:
        raise DomainError("kvb needs T >= 2")
    est = hac(x, bartlett, 1.0 / T, demean)
    return LrvEstimate(est.value, "kvb", 1.0 / T)


def kvb_double_sum(y, demean: bool = True) -> float:
    """``T^{-1} sum_t sum_s (1 - |t-s|/T) V_t V_s`` evaluated as a quadratic form."""
    x = _as_array(y)
    T = x.size
    if demean:
        x = x - x.mean()
    t = np.arange(T)
    W = 1.0 - np.abs(t[:, None] - t[None, :]) / T
    return float(x @ W @ x / T)


def ewc_default_B(T: int) -> int:
    """``floor(0.4 T^{2/3})``, moved up to the next even integer when odd."""
    B = max(2, int(math.floor(0.4 * T ** (2.0 / 3.0))))
    return B + (B % 2)


def ewc(y, B: int | None = None) -> LrvEstimate:
    """``B^{-1} sum_{j=1}^B Lambda_j^2`` with ``Lambda_j = sqrt(2/T) sum_t V_t cos(pi j (t - 1/2) / T)``."""
    x = _as_array(y)
    T = x.size
    B = ewc_default_B(T) if B is None else int(B)
    if not 1 <= B < T:
        raise DomainError(f"EWC needs 1 <= B < T, got B={B}, T={T}")
    lam = sfft.dct(x, type=2)[1 : B + 1] * math.sqrt(2.0 / T) / 2.0
    return LrvEstimate(float(np.mean(lam**2)), "ewc", diagnostics={"B": B})


# ---------------------------------------------------------------------------
# DK-HAC


S_OMEGA = np.array([-math.pi, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, math.pi])


def D1_reference(u: float) -> float:
    """Reference-model curvature term ``D_hat_1(u)`` for the local bandwidth.

    Evaluates the displayed average over ``S_omega`` of derivative terms of
    the transfer function ``1 + 0.8 (cos 1.5 + cos 4 pi u) e^{-i omega}``
    and squares it.  The average is real because ``S_omega`` is symmetric.
    """
    a = 0.8 * (math.cos(1.5) + math.cos(4.0 * math.pi * u))
    e = np.exp(-1j * S_OMEGA)
    z = 1.0 + a * e
    d1 = 0.8 * (-4.0 * math.pi * math.sin(4.0 * math.pi * u))
    d2 = 0.8 * (-16.0 * math.pi**2 * math.cos(4.0 * math.pi * u))
    terms = 3.0 / math.pi * z**-4 * d1 * e - 1.0 / math.pi * np.abs(z) ** -3 * d2 * e
    return float(np.mean(terms).real ** 2)


def _frac_power(value: float, p: float, name: str) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise NumericError(f"{name} = {value!r} must be positive to take the power {p}")
    return value**p


def _local_ar_fits(x: np.ndarray, n_T: int):
    """Trailing-window AR(1) fits at ``t = j n_T + 1`` for ``j = 1..floor(T/n_T) - 1``."""
    T = x.size
    fits = []
    for j in range(1, T // n_T):
        t = j * n_T + 1
        cur = x[t - n_T : t]  # V_{t-n_T+1..t}
        lag = x[t - n_T - 1 : t - 1]
        den = float(np.dot(lag, lag))
        if den <= 0.0:
            raise NumericError(f"degenerate local AR(1) fit at t={t}")
        a = float(np.dot(cur, lag) / den)
        sig = math.sqrt(float(np.sum((cur - a * lag) ** 2)))
        fits.append((t, a, sig))
    return fits


def dk_bandwidths(
    y,
    D1: Callable[[float], float] = D1_reference,
    standardize: bool = True,
    local_demean: bool = False,
    K2="quadratic",
    renormalize: bool = True,
) -> DkBandwidths:
    """Data-driven ``n_T``, ``b_hat_1``, ``b_hat_2(u)`` and their block average.

    ``D2`` is computed on the series rescaled to unit sample variance when
    ``standardize`` is set, which makes ``b_hat_2`` scale invariant.
    """
    x = _as_array(y)
    T = x.size
    if T < 50:
        raise DomainError(f"dk_bandwidths needs T >= 50, got {T}")
    x = x - x.mean()
    n_T = int(math.floor(T**0.6))
    nb = T // n_T

    fits = _local_ar_fits(x, n_T)
    a = np.array([f[1] for f in fits])
    s2 = np.array([f[2] ** 2 for f in fits])
    num = (n_T / T) * np.sum(s2 * a * a / (1.0 - a) ** 4)
    den = (n_T / T) * np.sum(s2 / (1.0 - a) ** 2)
    if den <= 0:
        raise NumericError("phi(2) denominator is not positive")
    phi2 = 18.0 * num**2 / den**2

    z = x
    if standardize:
        sd = math.sqrt(float(np.dot(x, x) / T))
        if sd <= 0:
            raise NumericError("cannot standardise a constant series")
        z = x / sd
    L2 = int(math.floor(T ** (4.0 / 25.0)))
    lp = LaggedProducts(z, L2)
    us = [r * n_T / T for r in range(1, nb + 1)]
    pilot = n_T / T
    c = lp.local_acov(us, [pilot] * nb, get_k2(K2), local_demean, renormalize)
    b2_local, d1s, d2s = {}, {}, {}
    for r, u, row in zip(range(1, nb + 1), us, c):
        d2 = 2.0 * (row[0] ** 2 + 2.0 * np.sum(row[1:] ** 2))
        d1 = float(D1(u))
        b2 = 1.6786 * _frac_power(d1, -0.2, f"D1({u:.4f})") * _frac_power(
            d2, 0.2, f"D2({u:.4f})"
        ) * T**-0.2
        b2_local[r] = float(min(max(b2, 2.0 / T), 1.0))
        d1s[r], d2s[r] = d1, float(d2)
    b2_bar = (n_T / T) * sum(b2_local[r] for r in range(1, nb))
    b2_bar = math.fsum([b2_bar])
    b1 = 0.6828 * _frac_power(phi2 * T * b2_bar, -0.2, "phi(2) T b2_bar")
    return DkBandwidths(b1, b2_bar, b2_local, phi2, n_T, d1s, d2s, tuple(fits))


def _dk_gamma(x, bw: DkBandwidths, K2, local_demean, renormalize=False, max_lag=None):
    T = x.size
    nb = T // bw.n_T
    L = T - 1 if max_lag is None else max_lag
    lp = LaggedProducts(x, L)
    us = [r * bw.n_T / T for r in range(1, nb + 1)]
    b2s = [bw.b2_local[r] for r in range(1, nb + 1)]
    rows = lp.local_acov(us, b2s, get_k2(K2), local_demean, renormalize)
    return rows


def dk_gamma(
    y, max_lag: int, bw: DkBandwidths | str = "auto", K2="quadratic",
    local_demean: bool = False, renormalize: bool = True,
) -> np.ndarray:
    """Integrated DK autocovariances ``Gamma_hat_DK(k)``, ``k = 0..max_lag``.

    Uses the same plug-in local bandwidths and block average as :func:`dk_hac`.
    """
    x = _as_array(y)
    x = x - x.mean()
    if bw == "auto":
        bw = dk_bandwidths(x, local_demean=local_demean, K2=K2, renormalize=renormalize)
    rows = _dk_gamma(x, bw, K2, local_demean, renormalize, max_lag=int(max_lag))
    return (bw.n_T / x.size) * rows.sum(axis=0)


def dk_hac(
    y,
    bw: DkBandwidths | str = "auto",
    prewhiten: bool = False,
    K2="quadratic",
    local_demean: bool = False,
    renormalize: bool = True,
) -> LrvEstimate:
    """Double-kernel HAC ``sum_k K1(b1 k) Gamma_hat_DK(k)`` with QS ``K1``.

    ``Gamma_hat_DK(k)`` is the block average ``(n_T/T) sum_r c_hat_DK,T(r n_T/T, k)``
    of kernel-smoothed local autocovariances, each block using its own
    time bandwidth.  ``prewhiten`` applies an approximate blockwise AR(1)
    whitening and recolouring (labelled ``pw-approx``).

    ``renormalize`` divides each local estimate by its in-sample kernel mass
    rather than ``T b2``, so blocks near the start of the sample are not
    shrunk toward zero.  ``local_demean`` centres each window on its
    ``K2``-weighted local mean; by default only the global mean is removed.
    """
    x = _as_array(y)
    T = x.size
    x = x - x.mean()
    if not prewhiten:
        if bw == "auto":
            bw = dk_bandwidths(x, local_demean=local_demean, K2=K2, renormalize=renormalize)
        rows = _dk_gamma(x, bw, K2, local_demean, renormalize)
        w = qs.evaluator(bw.b1 * np.arange(T))
        gam = (bw.n_T / T) * rows.sum(axis=0)
        val = _weighted_acov_sum(gam, w)
        return LrvEstimate(
            val,
            "dk",
            bw.b1,
            bw.b2_bar,
            bw.n_T,
            {"phi2": bw.phi2, "b2_local": dict(bw.b2_local)},
        )
    return _dk_hac_pw(x, bw, K2, local_demean, renormalize)


def _dk_hac_pw(x, bw, K2, local_demean, renormalize):
    T = x.size
    rho_g = min(max(_ar1_fit(x), -AR_CLIP), AR_CLIP)
    e_g = np.concatenate([[x[0] * math.sqrt(max(1.0 - rho_g**2, 0.0))], x[1:] - rho_g * x[:-1]])
    if bw == "auto":
        bw = dk_bandwidths(e_g, local_demean=local_demean, K2=K2, renormalize=renormalize)
    n_T = bw.n_T
    nb = T // n_T
    w = qs.evaluator(bw.b1 * np.arange(T))
    k2 = get_k2(K2)
    locals_, coefs = [], []
    for r in range(1, nb + 1):
        c = r * n_T
        lo, hi = max(0, c - n_T // 2), min(T, c + n_T // 2)
        seg = x[lo:hi] - x[lo:hi].mean()
        rho = min(max(_ar1_fit(seg), -AR_CLIP), AR_CLIP)
        e = np.concatenate([[x[0]], x[1:] - rho * x[:-1]])
        row = LaggedProducts(e, T - 1).local_acov(
            [c / T], [bw.b2_local[r]], k2, local_demean, renormalize
        )[0]
        locals_.append(_weighted_acov_sum(row, w) / (1.0 - rho) ** 2)
        coefs.append(rho)
    val = (n_T / T) * math.fsum(locals_)
    return LrvEstimate(
        val,
        "dk-pw-approx",
        bw.b1,
        bw.b2_bar,
        n_T,
        {"phi2": bw.phi2, "block_rho": coefs, "pw": "pw-approx"},
    )


# ---------------------------------------------------------------------------
# dispatcher


LRV_METHODS = ("dk", "dk-pw", "a91", "a91-pw", "nw87", "kvb", "ewc", "hac")


def estimate_lrv(y, method: str, **kw) -> LrvEstimate:
    """Dispatch by name: dk, dk-pw, a91, a91-pw, nw87, kvb, ewc or hac."""
    m = method.lower()
    if m == "dk":
        return dk_hac(y, **kw)
    if m in ("dk-pw", "dk-pw-approx"):
        return dk_hac(y, prewhiten=True, **kw)
    if m == "a91":
        return andrews91(y, **kw)
    if m == "a91-pw":
        return andrews91(y, prewhiten=True, **kw)
    if m == "nw87":
        return nw87(y)
    if m == "kvb":
        return kvb(y)
    if m == "ewc":
        return ewc(y, **kw)
    if m == "hac":
        return hac(y, **kw)
    raise UnknownNameError(f"unknown LRV method {method!r}; expected one of {LRV_METHODS}")
