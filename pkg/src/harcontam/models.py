"""Segmented locally stationary (SLS) data-generating processes.

A process is a sequence of regimes partitioning the rescaled time axis
(0, 1].  Inside regime ``j`` the observations follow a time-varying AR(1)
around a regime-specific trend::

    V_t = mu_j(t/T) + X_t,   X_t = rho(t/T) X_{t-1} + sigma(t/T) eps_t

with ``eps_t`` i.i.d. standard normal.  Besides simulation the module
provides analytic ground truth: local spectra, local autocovariances, the
finite-sample average autocovariance ``Gamma_T(k)`` by exact moment
recursion, and the mean-shift contamination constant ``d*``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericError, SpecificationError, UnknownNameError

__all__ = [
    "ParamFunc",
    "RegimeSpec",
    "OutlierRule",
    "SlsSpec",
    "TimeSeries",
    "MAD_TO_SIGMA",
    "make_rng",
    "mad_scale",
    "break_index",
    "simulate_path",
    "builtin_spec",
    "local_spectrum",
    "local_autocov_true",
    "local_autocov_quad",
    "theoretical_gamma",
    "theoretical_gamma_curve",
    "covariance_matrix",
    "d_star_true",
]

# 1 / (sqrt(2) * erfcinv(3/2)) is negative; the minus sign in the outlier
# rule flips it, giving the usual consistency factor 1/Phi^{-1}(3/4).
MAD_TO_SIGMA = -1.0 / (math.sqrt(2.0) * float(special.erfcinv(1.5)))


def make_rng(seed):
    """Philox-backed generator; the algorithm is pinned so streams stay stable."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def mad_scale(x):
    """MAD-based scale ``c = -med|x - med(x)| / (sqrt(2) erfcinv(3/2))``."""
    x = np.asarray(x, dtype=float)
    return MAD_TO_SIGMA * float(np.median(np.abs(x - np.median(x))))


def break_index(T: int, fraction: float) -> int:
    """``floor(T * fraction)`` robust to binary rounding (0.29 * 100 -> 29)."""
    return int(math.floor(T * fraction + 1e-9))


# ---------------------------------------------------------------------------
# parametric coefficient functions


def _cosine(u, scale, freq=1.0, phase=0.0):
    arg = freq * u + phase
    return (scale * np.cos(arg), -scale * freq * np.sin(arg), -scale * freq**2 * np.cos(arg))


def _sine(u, scale, freq=1.0, phase=0.0):
    arg = freq * u + phase
    return (scale * np.sin(arg), scale * freq * np.cos(arg), -scale * freq**2 * np.sin(arg))


def _cos_of_cos(u, scale, shift):
    # scale * cos(shift - cos(u))
    g = shift - np.cos(u)
    g1, g2 = np.sin(u), np.cos(u)
    v = scale * np.cos(g)
    d1 = -scale * np.sin(g) * g1
    d2 = -scale * np.cos(g) * g1**2 - scale * np.sin(g) * g2
    return v, d1, d2


def _constant(u, value):
    u = np.asarray(u, dtype=float)
    return np.full_like(u, value), np.zeros_like(u), np.zeros_like(u)


def _linear(u, intercept, slope):
    u = np.asarray(u, dtype=float)
    return intercept + slope * u, np.full_like(u, slope), np.zeros_like(u)


_FORMS: dict[str, Callable] = {
    "constant": _constant,
    "linear": _linear,
    "cosine": _cosine,
    "sine": _sine,
    "cos_of_cos": _cos_of_cos,
}


@dataclass(frozen=True)
class ParamFunc:
    """A named smooth function of rescaled time with analytic derivatives.

    Forms: ``constant(value)``, ``linear(intercept, slope)``,
    ``cosine(scale, freq, phase)``, ``sine(scale, freq, phase)`` and
    ``cos_of_cos(scale, shift)`` for ``scale*cos(shift - cos(u))``.
    """

    form: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.form not in _FORMS:
            raise SpecificationError(
                f"unknown parametric form {self.form!r}; expected one of {sorted(_FORMS)}"
            )
        try:
            _FORMS[self.form](np.array([0.5]), **self.params)
        except TypeError as exc:
            raise SpecificationError(f"bad parameters for form {self.form!r}: {exc}") from None

    @classmethod
    def const(cls, value: float) -> "ParamFunc":
        return cls("constant", {"value": float(value)})

    def _eval(self, u):
        return _FORMS[self.form](np.asarray(u, dtype=float), **self.params)

    def __call__(self, u):
        v = self._eval(u)[0]
        return float(v) if np.ndim(v) == 0 else v

    def deriv(self, u, order: int = 1):
        if order not in (1, 2):
            raise DomainError("only first and second derivatives are available")
        v = self._eval(u)[order]
        return float(v) if np.ndim(v) == 0 else v

    @property
    def is_constant(self) -> bool:
        return self.form == "constant" or (
            self.form == "linear" and self.params.get("slope", 0.0) == 0.0
        )

    def to_dict(self) -> dict:
        return {"form": self.form, **self.params}

    @classmethod
    def from_dict(cls, d) -> "ParamFunc":
        if isinstance(d, (int, float)):
            return cls.const(d)
        d = dict(d)
        try:
            form = d.pop("form")
        except KeyError:
            raise SpecificationError("parametric function needs a 'form' field") from None
        return cls(form, {k: float(v) for k, v in d.items()})


# ---------------------------------------------------------------------------
# specification types


@dataclass(frozen=True)
class RegimeSpec:
    """One regime on ``(lambda_lo, lambda_hi]`` with mean, AR and innovation-sd functions."""

    lambda_lo: float
    lambda_hi: float
    mean_fn: ParamFunc = field(default_factory=lambda: ParamFunc.const(0.0))
    ar_fn: ParamFunc = field(default_factory=lambda: ParamFunc.const(0.0))
    sigma_fn: ParamFunc = field(default_factory=lambda: ParamFunc.const(1.0))

    def __post_init__(self):
        if not (0.0 <= self.lambda_lo < self.lambda_hi <= 1.0):
            raise SpecificationError(
                f"regime bounds must satisfy 0 <= lo < hi <= 1, got ({self.lambda_lo}, {self.lambda_hi}]"
            )
        grid = np.linspace(self.lambda_lo, self.lambda_hi, 257)[1:]
        if np.any(np.abs(self.ar_fn(grid)) >= 1.0):
            raise SpecificationError("AR coefficient must lie in (-1, 1) throughout the regime")
        if np.any(np.asarray(self.sigma_fn(grid)) <= 0.0):
            raise SpecificationError("innovation standard deviation must be positive")

    @property
    def length(self) -> float:
        return self.lambda_hi - self.lambda_lo

    def to_dict(self) -> dict:
        return {
            "lambda_lo": self.lambda_lo,
            "lambda_hi": self.lambda_hi,
            "mean": self.mean_fn.to_dict(),
            "ar": self.ar_fn.to_dict(),
            "sigma": self.sigma_fn.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeSpec":
        try:
            return cls(
                float(d["lambda_lo"]),
                float(d["lambda_hi"]),
                ParamFunc.from_dict(d.get("mean", 0.0)),
                ParamFunc.from_dict(d.get("ar", 0.0)),
                ParamFunc.from_dict(d.get("sigma", 1.0)),
            )
        except KeyError as exc:
            raise SpecificationError(f"regime is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class OutlierRule:
    """Replace ``V_t`` at ``t = floor(T * position)`` by a uniform draw.

    The draw is ``Uniform(lo_mult * c, hi_mult * c)`` where ``c`` is the
    MAD scale of the outlier-free path (see :func:`mad_scale`).
    """

    positions: tuple = ()
    lo_mult: float = 1.0
    hi_mult: float = 10.0
    scale_rule: str = "mad-uniform"

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(p) for p in self.positions))
        if any(not 0.0 < p < 1.0 for p in self.positions):
            raise SpecificationError("outlier positions must lie in (0, 1)")
        if not self.lo_mult < self.hi_mult:
            raise SpecificationError("outlier multipliers need lo_mult < hi_mult")
        if self.scale_rule != "mad-uniform":
            raise SpecificationError(f"unsupported outlier scale rule {self.scale_rule!r}")

    def to_dict(self) -> dict:
        return {
            "positions": list(self.positions),
            "lo_mult": self.lo_mult,
            "hi_mult": self.hi_mult,
            "scale_rule": self.scale_rule,
        }


@dataclass(frozen=True)
class SlsSpec:
    regimes: tuple
    outliers: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(self, "outliers", tuple(self.outliers))
        if not self.regimes:
            raise SpecificationError("a specification needs at least one regime")
        if self.regimes[0].lambda_lo != 0.0 or self.regimes[-1].lambda_hi != 1.0:
            raise SpecificationError("regimes must start at 0 and end at 1")
        for a, b in zip(self.regimes, self.regimes[1:]):
            if not math.isclose(a.lambda_hi, b.lambda_lo, abs_tol=1e-12):
                raise SpecificationError(
                    f"regimes must be contiguous: {a.lambda_hi} != {b.lambda_lo}"
                )

    @property
    def break_fractions(self) -> list[float]:
        return [r.lambda_hi for r in self.regimes[:-1]]

    def regime_at(self, u: float) -> RegimeSpec:
        """Regime containing ``u`` under the left-limit convention ``lo < u <= hi``."""
        if not 0.0 < u <= 1.0:
            raise DomainError(f"rescaled time must lie in (0, 1], got {u}")
        for reg in self.regimes:
            if u <= reg.lambda_hi:
                return reg
        return self.regimes[-1]

    def coefficients(self, T: int):
        """Per-time arrays ``(mu, rho, sigma)`` for ``t = 1..T``."""
        u = np.arange(1, T + 1) / T
        mu, rho, sig = np.empty(T), np.empty(T), np.empty(T)
        lo_idx = 0
        for j, reg in enumerate(self.regimes):
            hi_idx = T if j == len(self.regimes) - 1 else break_index(T, reg.lambda_hi)
            sl = slice(lo_idx, hi_idx)
            mu[sl] = reg.mean_fn(u[sl])
            rho[sl] = reg.ar_fn(u[sl])
            sig[sl] = reg.sigma_fn(u[sl])
            lo_idx = hi_idx
        return mu, rho, sig

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "regimes": [r.to_dict() for r in self.regimes],
            "outliers": [o.to_dict() for o in self.outliers],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SlsSpec":
        if "regimes" not in d:
            raise SpecificationError("specification document has no 'regimes' field")
        regimes = [RegimeSpec.from_dict(r) for r in d["regimes"]]
        outliers = []
        for o in d.get("outliers", []):
            o = dict(o)
            outliers.append(
                OutlierRule(
                    tuple(o.get("positions", ())),
                    float(o.get("lo_mult", 1.0)),
                    float(o.get("hi_mult", 10.0)),
                    o.get("scale_rule", "mad-uniform"),
                )
            )
        return cls(tuple(regimes), tuple(outliers), d.get("label", ""))

    @classmethod
    def from_json(cls, text: str) -> "SlsSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecificationError(
                f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
        return cls.from_dict(doc)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A finite real-valued sample with provenance."""

    values: np.ndarray
    seed: int | None = None
    spec_label: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise DomainError("a time series needs at least one observation")
        if not np.all(np.isfinite(v)):
            raise NumericError("time series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> int:
        return self.values.size

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def scaled(self, c: float) -> "TimeSeries":
        return TimeSeries(c * self.values, self.seed, self.spec_label)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["v"])
            for x in self.values:
                w.writerow([repr(float(x))])

    @classmethod
    def from_csv(cls, path, column: str = "v") -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DomainError(f"{path}: empty file")
        header = rows[0]
        try:
            vals = [float(header[0])] + [float(r[0]) for r in rows[1:] if r]
        except ValueError:
            col = header.index(column) if column in header else 0
            try:
                vals = [float(r[col]) for r in rows[1:] if r]
            except (ValueError, IndexError) as exc:
                raise DomainError(f"{path}: cannot parse numeric column: {exc}") from None
        return cls(np.asarray(vals), spec_label=Path(path).name)


def _as_array(y) -> np.ndarray:
    if isinstance(y, TimeSeries):
        return y.values
    return np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# simulation


def simulate_path(spec: SlsSpec, T: int, seed: int, init: str = "stationary") -> TimeSeries:
    """Simulate ``T`` observations of ``spec``.

    ``init="stationary"`` draws the first AR state from the frozen stationary
    law at ``u = 1/T``; ``init="zero"`` starts from a zero state, so
    ``X_1 = sigma(1/T) eps_1``.  The same ``(spec, T, seed, init)`` always
    produces identical output.
    """
    if T < 2:
        raise DomainError("need T >= 2")
    if init not in ("stationary", "zero"):
        raise DomainError(f"init must be 'stationary' or 'zero', got {init!r}")
    rng = make_rng(seed)
    mu, rho, sig = spec.coefficients(T)
    eps = rng.standard_normal(T)
    x = _ar_recursion(rho, sig, eps, init)
    v = mu + x
    for rule in spec.outliers:
        c = mad_scale(v)
        for p in rule.positions:
            t = break_index(T, p)
            if 1 <= t <= T:
                v[t - 1] = rng.uniform(rule.lo_mult * c, rule.hi_mult * c)
    if not np.all(np.isfinite(v)):
        raise NumericError("simulation produced non-finite values")
    return TimeSeries(v, seed=seed, spec_label=spec.label or None)


def _ar_recursion(rho, sig, eps, init):
    T = eps.size
    x = np.empty(T)
    if init == "stationary":
        x[0] = sig[0] / math.sqrt(1.0 - rho[0] ** 2) * eps[0]
    else:
        x[0] = sig[0] * eps[0]
    prev = x[0]
    r = rho.tolist()
    e = (sig * eps).tolist()
    for t in range(1, T):
        prev = r[t] * prev + e[t]
        x[t] = prev
    return x


# ---------------------------------------------------------------------------
# builtin models


def _tvar1(ar, sigma2, label, outliers=()):
    reg = RegimeSpec(0.0, 1.0, ParamFunc.const(0.0), ar, ParamFunc.const(math.sqrt(sigma2)))
    return SlsSpec((reg,), outliers, label)


def builtin_spec(name: str, **kwargs):
    """Return one of the built-in designs.

    ``M1``..``M4`` are :class:`SlsSpec` instances; ``DM1``..``DM4`` are
    forecast-comparison designs (:class:`harcontam.inference.DmDesign`),
    accepting ``delta`` and ``T`` keyword overrides.
    """
    key = name.upper()
    if key == "M1":
        r1 = RegimeSpec(0.0, 0.1, ParamFunc.const(0.0), ParamFunc.const(0.9), ParamFunc.const(1.0))
        r2 = RegimeSpec(
            0.1,
            1.0,
            ParamFunc.const(0.0),
            ParamFunc("cos_of_cos", {"scale": 0.3, "shift": 1.5}),
            ParamFunc.const(math.sqrt(0.5)),
        )
        return SlsSpec((r1, r2), (), "M1")
    if key == "M2":
        return _tvar1(ParamFunc("cosine", {"scale": 0.7, "freq": 1.5}), 0.5, "M2")
    if key == "M3":
        rule = OutlierRule((0.25, 0.5, 0.75), 1.0, 10.0)
        return _tvar1(ParamFunc("cosine", {"scale": 0.7, "freq": 1.5}), 0.5, "M3", (rule,))
    if key == "M4":
        return _tvar1(ParamFunc("cosine", {"scale": 0.95, "freq": 1.5}), 0.4, "M4")
    if key in ("DM1", "DM2", "DM3", "DM4"):
        from .inference import DmDesign

        return DmDesign(spec_id=int(key[-1]), **kwargs)
    raise UnknownNameError(
        f"unknown builtin spec {name!r}; expected one of M1, M2, M3, M4, DM1, DM2, DM3, DM4"
    )


# ---------------------------------------------------------------------------
# analytic ground truth


def local_spectrum(spec: SlsSpec, u: float, omega: float) -> float:
    """Time-varying spectral density ``sigma^2(u) / (2 pi |1 - rho(u) e^{-i omega}|^2)``."""
    reg = spec.regime_at(u)
    rho, s = reg.ar_fn(u), reg.sigma_fn(u)
    return s * s / (2 * math.pi * (1.0 + rho * rho - 2.0 * rho * math.cos(omega)))


def local_autocov_quad(spec: SlsSpec, u: float, k: int) -> float:
    """``c(u, k)`` by adaptive quadrature of ``e^{i omega k} f(u, omega)`` on [-pi, pi]."""
    reg = spec.regime_at(u)
    rho, s = reg.ar_fn(u), reg.sigma_fn(u)
    c = s * s / (2 * math.pi)

    def f(w):
        return c / (1.0 + rho * rho - 2.0 * rho * math.cos(w))

    k = abs(int(k))
    if k == 0:
        val, err = integrate.quad(f, 0.0, math.pi, epsabs=1e-13, epsrel=1e-13, limit=400)
    else:
        val, err = integrate.quad(
            f, 0.0, math.pi, weight="cos", wvar=k, epsabs=1e-13, epsrel=1e-13, limit=400
        )
    if not math.isfinite(val) or err > 1e-10:
        raise NumericError(f"quadrature for c({u}, {k}) did not converge (err={err:.2e})")
    return 2.0 * val


def local_autocov_true(spec: SlsSpec, u: float, k: int, verify: bool = True) -> float:
    """Local autocovariance ``c(u, k) = sigma^2 rho^|k| / (1 - rho^2)``.

    With ``verify`` the closed form is cross-checked against
    :func:`local_autocov_quad`; a gap above 1e-8 raises :class:`NumericError`.
    """
    reg = spec.regime_at(u)
    rho, s = reg.ar_fn(u), reg.sigma_fn(u)
    closed = s * s * rho ** abs(int(k)) / (1.0 - rho * rho)
    if verify:
        quad = local_autocov_quad(spec, u, k)
        if abs(quad - closed) > 1e-8:
            raise NumericError(f"closed form {closed} and quadrature {quad} disagree for c({u}, {k})")
    return closed


def _state_variances(rho, sig, init):
    T = rho.size
    v = np.empty(T)
    v[0] = sig[0] ** 2 / (1.0 - rho[0] ** 2) if init == "stationary" else sig[0] ** 2
    r2 = (rho * rho).tolist()
    s2 = (sig * sig).tolist()
    prev = v[0]
    for t in range(1, T):
        prev = r2[t] * prev + s2[t]
        v[t] = prev
    return v


def covariance_matrix(spec: SlsSpec, T: int, init: str = "stationary"):
    """Exact mean vector and covariance matrix of ``(V_1, ..., V_T)`` (outliers ignored).

    ``Cov(V_t, V_s) = Var(X_s) * prod_{j=s+1}^t rho_j`` for ``t >= s``.
    """
    mu, rho, sig = spec.coefficients(T)
    var = _state_variances(rho, sig, init)
    cov = np.zeros((T, T))
    for s in range(T):
        col = np.empty(T - s)
        col[0] = var[s]
        if T - s > 1:
            col[1:] = var[s] * np.cumprod(rho[s + 1 :])
        cov[s:, s] = col
        cov[s, s:] = col
    return mu, cov


def theoretical_gamma_curve(
    spec: SlsSpec, T: int, max_lag: int, init: str = "stationary"
) -> np.ndarray:
    """Exact ``Gamma_T(k) = T^{-1} sum_{t>k} E(V_t V_{t-k})`` for ``k = 0..max_lag``.

    Computed by propagating the AR state variance through the time-varying
    recursion; lagged covariances are products of AR coefficients.
    """
    if not 0 <= max_lag < T:
        raise DomainError(f"lag must satisfy 0 <= k < T, got max_lag={max_lag}, T={T}")
    mu, rho, sig = spec.coefficients(T)
    var = _state_variances(rho, sig, init)
    out = np.empty(max_lag + 1)
    prod = np.ones(T)  # prod[s] = prod_{j=s+1}^{s+k} rho_j, pairs (s+k, s)
    for k in range(max_lag + 1):
        if k > 0:
            prod = prod[:-1] * rho[k:]
        n = T - k
        out[k] = (np.dot(var[:n], prod[:n]) + np.dot(mu[k:], mu[:n])) / T
    return out


def theoretical_gamma(
    spec: SlsSpec, T: int, k: int, init: str = "stationary", variant: str = "exact"
) -> float:
    """Average autocovariance ``Gamma_T(k)``.

    ``variant="exact"`` uses the moment recursion; ``variant="integrated"``
    returns the large-``T`` approximation ``int_0^1 c(u, k) du + int_0^1 mu(u)^2 du``
    (for M1: ``0.1 * 0.9^k / 0.19 + int_{0.1}^1 c(u, k) du``).
    """
    k = int(k)
    if not 0 <= k < T:
        raise DomainError(f"lag must satisfy 0 <= k < T, got k={k}, T={T}")
    if variant == "exact":
        return float(theoretical_gamma_curve(spec, T, k, init)[k])
    if variant != "integrated":
        raise DomainError(f"unknown variant {variant!r}")
    total = 0.0
    for reg in spec.regimes:
        if reg.ar_fn.is_constant and reg.sigma_fn.is_constant:
            total += reg.length * local_autocov_true(spec, reg.lambda_hi, k, verify=False)
        else:
            total += integrate.quad(
                lambda u: local_autocov_true(spec, u, k, verify=False),
                reg.lambda_lo,
                reg.lambda_hi,
                epsabs=1e-12,
                limit=200,
            )[0]
        total += integrate.quad(lambda u: reg.mean_fn(u) ** 2, reg.lambda_lo, reg.lambda_hi)[0]
    return total


def regime_mean_levels(spec: SlsSpec) -> list[float]:
    """Average trend ``mu_bar_j = r_j^{-1} int mu_j(u) du`` of each regime."""
    out = []
    for reg in spec.regimes:
        if reg.mean_fn.is_constant:
            out.append(float(reg.mean_fn(reg.lambda_hi)))
        else:
            val = integrate.quad(reg.mean_fn, reg.lambda_lo, reg.lambda_hi, epsabs=1e-12)[0]
            out.append(val / reg.length)
    return out


def contamination_constant(means: Sequence[float], fractions: Sequence[float]) -> float:
    """``1/2 sum_{j1 != j2} r_j1 r_j2 (m_j2 - m_j1)^2``."""
    m = np.asarray(means, dtype=float)
    r = np.asarray(fractions, dtype=float)
    diff = m[:, None] - m[None, :]
    return float(0.5 * np.sum(r[:, None] * r[None, :] * diff**2))


def d_star_true(spec: SlsSpec) -> float:
    """Theoretical low-frequency contamination ``d*`` of the sample autocovariance."""
    return contamination_constant(regime_mean_levels(spec), [r.length for r in spec.regimes])


__all__ += ["regime_mean_levels", "contamination_constant"]
