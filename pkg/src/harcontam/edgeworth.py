"""Second-order Edgeworth corrections for HAC and DK-HAC t-statistics.

The relative bias of a lag-kernel LRV estimator is ``c1_bar * b1**2`` and
the DK-HAC adds ``c2_bar * b2**2`` from smoothing over time.  The corrected
null distribution of the t-statistic is then approximately
``Phi(z) + (c1_bar b1^2 / 2 + c2_bar b2^2 / 2) z phi(z)``, or to the same
order ``Phi(z * (1 + c1_bar b1^2 / 2 + c2_bar b2^2 / 2))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, stats

from .errors import DomainError, UnsupportedModelError
from .lrv import QS_CURVATURE, get_kernel
from .models import SlsSpec
from .spectral import get_k2

__all__ = [
    "SpectralSummary",
    "EdgeworthCdf",
    "kernel_moment",
    "k2_second_moment",
    "spectrum_at_zero",
    "spectral_summary_tvar1",
    "cbar1",
    "cbar2",
    "edgeworth_cdf",
    "erp_order_report",
]


@dataclass(frozen=True)
class SpectralSummary:
    f0_int: float
    fd_int: float
    fuu0_int: float
    d_f: int = 2
    kernel_moment: float = 2.0 * QS_CURVATURE
    k2_moment: float = 0.3

    def __post_init__(self):
        if self.d_f < 2:
            raise DomainError("d_f must be at least 2")

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


@dataclass(frozen=True)
class EdgeworthCdf:
    c1: float
    b1: float
    c2: float | None = None
    b2: float | None = None
    d_f: int = 2
    variant: str = "additive"

    def __post_init__(self):
        if self.variant not in ("rescaled", "additive"):
            raise DomainError(f"variant must be 'rescaled' or 'additive', got {self.variant!r}")
        if (self.c2 is None) != (self.b2 is None):
            raise DomainError("c2 and b2 must be given together")

    @property
    def shift(self) -> float:
        """``c1 b1^d_f / 2 (+ c2 b2^2 / 2)``."""
        s = 0.5 * self.c1 * self.b1**self.d_f
        if self.c2 is not None:
            s += 0.5 * self.c2 * self.b2**2
        return s


def kernel_moment(kernel, d_f: int = 2) -> float:
    """``mu_d(K)`` of the spectral window implied by a lag kernel.

    For a lag kernel with ``1 - k(x) ~ k_q |x|^q`` the spectral window has
    ``mu_2 = 2 k_2``; for QS that is ``36 pi^2 / 125``.  Bartlett has
    ``q = 1`` and no finite second moment.
    """
    kern = get_kernel(kernel)
    if d_f != 2:
        raise UnsupportedModelError("only d_f = 2 is supported")
    if kern.name == "qs":
        return 2.0 * QS_CURVATURE
    raise UnsupportedModelError(f"kernel {kern.name!r} has no finite second spectral moment")


def k2_second_moment(K2="quadratic") -> float:
    """``int_0^1 x^2 K2(x) dx`` (0.3 for ``6x(1-x)``)."""
    k = get_k2(K2)
    return integrate.quad(lambda x: x * x * float(k(x)), 0.0, 1.0, epsabs=1e-13)[0]


def spectrum_at_zero(spec: SlsSpec, u: float) -> dict:
    """Analytic ``f(u,0)``, ``d^2 f/d omega^2 (u,0)``, ``df/du (u,0)``, ``d^2 f/du^2 (u,0)``."""
    return _terms(spec.regime_at(u), u)


def _terms(reg, u: float) -> dict:
    r, r1, r2 = reg.ar_fn(u), reg.ar_fn.deriv(u, 1), reg.ar_fn.deriv(u, 2)
    s, s1, s2 = reg.sigma_fn(u), reg.sigma_fn.deriv(u, 1), reg.sigma_fn.deriv(u, 2)
    A, A1, A2 = s * s, 2 * s * s1, 2 * (s1 * s1 + s * s2)
    q = 1.0 - r
    B, B1 = q**-2, 2 * r1 * q**-3
    B2 = 2 * r2 * q**-3 + 6 * r1 * r1 * q**-4
    tp = 2.0 * math.pi
    return {
        "f": A * B / tp,
        "f_ww": -A * r / (math.pi * q**4),
        "f_u": (A1 * B + A * B1) / tp,
        "f_uu": (A2 * B + 2 * A1 * B1 + A * B2) / tp,
    }


def _regime_integral(spec: SlsSpec, key: str) -> float:
    total = 0.0
    for reg in spec.regimes:
        lo, hi = reg.lambda_lo, reg.lambda_hi
        # per-regime quadrature never evaluates the break points themselves
        total += integrate.quad(
            lambda u, reg=reg: _terms(reg, u)[key], lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200
        )[0]
    return total


def spectral_summary_tvar1(
    spec: SlsSpec, d_f: int = 2, kernel="qs", K2="quadratic"
) -> SpectralSummary:
    """Integrated spectral quantities entering ``c1_bar`` and ``c2_bar`` for a tvAR(1)."""
    if d_f != 2:
        raise UnsupportedModelError("only d_f = 2 is supported")
    if spec.outliers:
        raise UnsupportedModelError("outlier rules have no tvAR(1) spectral representation")
    return SpectralSummary(
        f0_int=_regime_integral(spec, "f"),
        fd_int=_regime_integral(spec, "f_ww"),
        fuu0_int=_regime_integral(spec, "f_uu"),
        d_f=d_f,
        kernel_moment=kernel_moment(kernel, d_f),
        k2_moment=k2_second_moment(K2),
    )


def cbar1(summary: SpectralSummary) -> float:
    """``mu_d(K) int f^(d)(u,0) du / (d! int f(u,0) du)``."""
    if not summary.f0_int > 0:
        raise DomainError("integrated spectrum at frequency zero must be positive")
    return summary.kernel_moment * summary.fd_int / (math.factorial(summary.d_f) * summary.f0_int)


def cbar2(summary: SpectralSummary) -> float:
    """``int x^2 K2 dx * int d^2/du^2 f(u,0) du / (2 int f(u,0) du)``."""
    if not summary.f0_int > 0:
        raise DomainError("integrated spectrum at frequency zero must be positive")
    return summary.k2_moment * summary.fuu0_int / (2.0 * summary.f0_int)


def edgeworth_cdf(z, model: EdgeworthCdf, return_flag: bool = False):
    """Corrected CDF of the t-statistic at ``z``.

    ``variant="additive"`` (default) returns ``Phi(z) + a z phi(z)`` with
    ``a = model.shift``, clipped to [0, 1].  With the clip the result is
    monotone in ``z`` for every ``a >= -1``: when ``a > 0`` the raw expansion
    turns down only where it already exceeds 1.  ``variant="rescaled"``
    returns ``Phi(z (1 + a))``.

    With ``return_flag`` a second value reports whether any point was clipped.
    """
    z = np.asarray(z, dtype=float)
    a = model.shift
    if model.variant == "rescaled":
        out = stats.norm.cdf(z * (1.0 + a))
        clipped = False
    else:
        raw = stats.norm.cdf(z) + a * z * stats.norm.pdf(z)
        out = np.clip(raw, 0.0, 1.0)
        clipped = bool(np.any(out != raw))
    out = float(out) if out.ndim == 0 else out
    return (out, clipped) if return_flag else out


def erp_order_report(method: str, T: int, b1: float, b2: float | None = None):
    """``(bias rate, variance rate)`` labelling the ERP of a HAC or DK-HAC test.

    HAC: ``(b1^2, (T b1)^{-1/2})``; DK: ``(b1^2 + b2^2, (T b1 b2)^{-1/2})``.
    """
    m = method.lower()
    if m == "hac":
        return b1**2, (T * b1) ** -0.5
    if m == "dk":
        if b2 is None:
            raise DomainError("method 'dk' needs b2")
        return b1**2 + b2**2, (T * b1 * b2) ** -0.5
    raise DomainError(f"method must be 'hac' or 'dk', got {method!r}")
