"""HAR t-tests, fixed-b critical values and the Diebold-Mariano forecast comparison."""
from __future__ import annotations

import csv
import json
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DegenerateVarianceError, DomainError, NumericError
from .lrv import LrvEstimate, estimate_lrv, get_kernel
from .models import _as_array, break_index, mad_scale, make_rng

__all__ = [
    "TestResult",
    "DmDesign",
    "reference_for",
    "t_test_location",
    "fixed_b_critical_value",
    "fixed_b_draws",
    "kvb_critical_value",
    "dm_test",
    "dm_forecast_harness",
]

REFERENCES = ("std-normal", "fixed-b-sim", "student-t")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    method: str
    reference: str
    critical_value: float
    level: float
    reject: bool
    lrv: LrvEstimate | None = None
    p_value: float | None = None

    __test__ = False  # not a pytest test class

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise DomainError(f"level must lie in (0, 1), got {self.level}")
        if self.reference not in REFERENCES:
            raise DomainError(f"unknown reference distribution {self.reference!r}")

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic,
            "method": self.method,
            "reference": self.reference,
            "critical_value": self.critical_value,
            "level": self.level,
            "reject": self.reject,
            "p_value": self.p_value,
        }
        if self.lrv is not None:
            d["lrv"] = self.lrv.to_dict()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# fixed-b critical values

_CACHE_LOCK = threading.Lock()
_MEM_CACHE: dict = {}
_CHUNK = 1000


def _cache_path() -> Path:
    root = os.environ.get("HARCONTAM_CACHE")
    base = Path(root) if root else Path.home() / ".cache" / "harcontam"
    return base / "fixed_b_v1.csv"


def _cache_key(kernel, b, level, grid, n_sim, seed):
    return (kernel, repr(float(b)), repr(float(level)), int(grid), int(n_sim), int(seed))


def _read_disk_cache() -> dict:
    path = _cache_path()
    out = {}
    if not path.exists():
        return out
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = _cache_key(
                    row["kernel"], float(row["b"]), float(row["level"]),
                    row["grid"], row["n_sim"], row["seed"],
                )
                out[key] = float(row["value"])
    except (OSError, KeyError, ValueError):
        return {}
    return out


def _append_disk_cache(key, value) -> None:
    path = _cache_path()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(["kernel", "b", "level", "grid", "n_sim", "seed", "value"])
            w.writerow([key[0], key[1], key[2], key[3], key[4], key[5], repr(value)])
    except OSError:
        pass  # a read-only cache location only costs recomputation


def fixed_b_draws(
    kernel="bartlett", b: float = 1.0, grid: int = 1000, n_sim: int = 10000, seed: int = 0,
    method: str = "auto",
) -> np.ndarray:
    """Simulated draws of the fixed-b limit of the HAC t-ratio.

    Each draw is the t-statistic ``sqrt(n) e_bar / sqrt(J_hat)`` of ``n = grid``
    i.i.d. normals, with ``J_hat`` the kernel HAC at bandwidth fraction ``b``
    (lag truncation ``b * grid``).  For Bartlett with ``b = 1`` this is the
    discretised ``W(1) / sqrt(2 int_0^1 B~(r)^2 dr)``.  ``method="partial-sum"``
    forces that Brownian-bridge route, ``"quadratic-form"`` the general kernel
    route.  Draws are generated in fixed chunks seeded from ``(seed, chunk)``
    so the result does not depend on how the work is split.
    """
    kern = get_kernel(kernel)
    if not 0.0 < b <= 1.0:
        raise DomainError(f"b must lie in (0, 1], got {b}")
    if method == "auto":
        method = "partial-sum" if (kern.name == "bartlett" and b == 1.0) else "quadratic-form"
    if method == "partial-sum" and not (kern.name == "bartlett" and b == 1.0):
        raise DomainError("the partial-sum route only applies to Bartlett with b = 1")
    n = grid
    W = None
    if method == "quadratic-form":
        idx = np.arange(n)
        W = kern.evaluator(np.abs(idx[:, None] - idx[None, :]) / (b * n))
    out = np.empty(n_sim)
    for c, start in enumerate(range(0, n_sim, _CHUNK)):
        m = min(_CHUNK, n_sim - start)
        rng = make_rng([seed, c])
        e = rng.standard_normal((m, n))
        wsum = e.sum(axis=1)
        x = e - (wsum / n)[:, None]
        if method == "partial-sum":
            S = np.cumsum(x, axis=1)
            J = 2.0 * np.sum(S * S, axis=1) / n**2
        else:
            J = np.einsum("ij,jk,ik->i", x, W, x) / n
        out[start : start + m] = wsum / math.sqrt(n) / np.sqrt(J)
    return out


def fixed_b_critical_value(
    kernel="bartlett",
    b: float = 1.0,
    level: float = 0.05,
    n_sim: int = 200_000,
    grid: int = 2000,
    seed: int = 20240101,
    use_cache: bool = True,
) -> float:
    """Two-sided fixed-b critical value: the ``1 - level`` quantile of ``|t|``.

    Equivalently the ``1 - level/2`` quantile of the symmetric limit law.
    Results are cached in memory and in a CSV file under
    ``$HARCONTAM_CACHE`` (default ``~/.cache/harcontam``).
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    kern = get_kernel(kernel)
    key = _cache_key(kern.name, b, level, grid, n_sim, seed)
    if use_cache:
        with _CACHE_LOCK:
            if key in _MEM_CACHE:
                return _MEM_CACHE[key]
            disk = _read_disk_cache()
            if key in disk:
                _MEM_CACHE[key] = disk[key]
                return disk[key]
    draws = fixed_b_draws(kern, b, grid, n_sim, seed)
    value = float(np.quantile(np.sort(np.abs(draws)), 1.0 - level))
    if use_cache:
        with _CACHE_LOCK:
            _MEM_CACHE[key] = value
            _append_disk_cache(key, value)
    return value


def kvb_critical_value(level: float = 0.05) -> float:
    return fixed_b_critical_value("bartlett", 1.0, level)


# ---------------------------------------------------------------------------
# t-tests


def reference_for(method: str) -> str:
    """Reference distribution used for a given LRV method name."""
    m = method.lower()
    if m == "kvb":
        return "fixed-b-sim"
    if m == "ewc":
        return "student-t"
    return "std-normal"


def _critical(reference: str, level: float, lrv: LrvEstimate) -> tuple[float, float | None]:
    if reference == "std-normal":
        return float(stats.norm.ppf(1.0 - level / 2.0)), None
    if reference == "student-t":
        B = int(lrv.diagnostics["B"])
        return float(stats.t.ppf(1.0 - level / 2.0, B)), B
    return kvb_critical_value(level), None


def _p_value(reference: str, stat: float, dof) -> float | None:
    if reference == "std-normal":
        return float(2.0 * stats.norm.sf(abs(stat)))
    if reference == "student-t":
        return float(2.0 * stats.t.sf(abs(stat), dof))
    return None


def _ratio_test(mean_dev, n, lrv, method, level, reference) -> TestResult:
    if not lrv.value > 0:
        raise DegenerateVarianceError(
            f"{method}: long-run variance estimate {lrv.value!r} is not positive"
        )
    stat = math.sqrt(n) * mean_dev / math.sqrt(lrv.value)
    cv, dof = _critical(reference, level, lrv)
    return TestResult(
        stat, method, reference, cv, level, bool(abs(stat) > cv), lrv, _p_value(reference, stat, dof)
    )


def t_test_location(
    y, beta0: float = 0.0, lrv_method: str = "dk", level: float = 0.05,
    reference: str | None = None, **lrv_kw,
) -> TestResult:
    """HAR t-test of ``H0: E[y] = beta0`` normalised by the chosen LRV estimate.

    The LRV is estimated on ``y - y_bar``.  The reference distribution is
    routed by method (KVB: simulated fixed-b, EWC: Student-t with ``B``
    degrees of freedom, otherwise standard normal) unless overridden.
    """
    x = _as_array(y)
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    ref = reference or reference_for(lrv_method)
    if np.all(x == x[0]):
        raise DegenerateVarianceError(f"{lrv_method}: series is constant; the LRV is zero")
    lrv = estimate_lrv(x - x.mean(), lrv_method, **lrv_kw)
    return _ratio_test(x.mean() - beta0, x.size, lrv, lrv_method, level, ref)


def dm_test(
    losses_1, losses_2, lrv_method: str = "dk", level: float = 0.05,
    reference: str | None = None, **lrv_kw,
) -> TestResult:
    """Diebold-Mariano test on ``d_t = L2_t - L1_t``: ``sqrt(T_n) d_bar / sqrt(J_hat_d)``."""
    l1, l2 = _as_array(losses_1), _as_array(losses_2)
    if l1.shape != l2.shape:
        raise DomainError("loss series must have equal length")
    if l1.size < 20:
        raise DomainError(f"need at least 20 out-of-sample losses, got {l1.size}")
    d = l2 - l1
    if np.all(d == d[0]):
        raise DegenerateVarianceError("loss differential is constant; the LRV is zero")
    return t_test_location(d, 0.0, lrv_method, level, reference, **lrv_kw)


# ---------------------------------------------------------------------------
# forecast comparison design


@dataclass(frozen=True)
class DmDesign:
    """Out-of-sample forecast comparison design.

    ``spec_id`` selects how the second predictor is contaminated:
    1 abrupt mean ``delta`` on ``t = 3T/4 .. 3T/4+20``; 2 the same window
    with mean ``delta * sin(t/T - 3/4)``; 3 window ``T/2-30 .. T/2+20`` with
    mean ``delta * sin(t/T - 1/2 - 30/T)``; 4 as 2 plus two outliers at
    ``t = 6T/10, 8T/10``.  ``null=True`` gives the equal-accuracy design.
    """

    spec_id: int = 1
    delta: float = 1.0
    T: int = 400
    split: float = 0.5
    horizon: int = 1
    loss: str = "quadratic"
    null: bool = False

    def __post_init__(self):
        if self.spec_id not in (1, 2, 3, 4):
            raise DomainError(f"spec_id must be 1..4, got {self.spec_id}")
        if not 0.0 < self.split < 1.0:
            raise DomainError("split must lie in (0, 1)")
        if self.horizon < 1:
            raise DomainError("horizon must be >= 1")
        if self.loss != "quadratic":
            raise DomainError("only quadratic loss is supported")
        if self.T < 80:
            raise DomainError("T must be at least 80 for the contamination windows to fit")

    @property
    def label(self) -> str:
        return f"DM{self.spec_id}"

    def window(self) -> tuple[int, int]:
        """1-based inclusive range of contaminated predictor dates."""
        T = self.T
        if self.spec_id == 3:
            return T // 2 - 30, T // 2 + 20
        return 3 * T // 4, 3 * T // 4 + 20

    def mean_path(self, t: np.ndarray) -> np.ndarray:
        u = t / self.T
        if self.spec_id == 1:
            return np.full(t.shape, float(self.delta))
        if self.spec_id == 3:
            return self.delta * np.sin(u - 0.5 - 30.0 / self.T)
        return self.delta * np.sin(u - 0.75)

    def outlier_dates(self) -> tuple[int, ...]:
        if self.spec_id != 4:
            return ()
        return (break_index(self.T, 0.6), break_index(self.T, 0.8))

    def to_dict(self) -> dict:
        return {
            "spec_id": self.spec_id, "delta": self.delta, "T": self.T, "split": self.split,
            "horizon": self.horizon, "loss": self.loss, "null": self.null,
        }


def _ols(X, y):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise NumericError("singular regressor matrix in the forecast model")
    return coef


def dm_forecast_harness(design: DmDesign, seed: int):
    """Simulate one forecast comparison and return the two out-of-sample loss series.

    ``y_t = 1 + x0_{t-1} + e_t`` with ``e_t = 0.3 e_{t-1} + u_t``.  Each model
    regresses ``y_t`` on an intercept and its own predictor at ``t - h``
    over the in-sample, then forecasts ``t = T_in + 1 .. T - h`` with the
    frozen coefficients.
    """
    T, h = design.T, design.horizon
    rng = make_rng(seed)
    # index 0 holds date 0 so that x_{t-1} exists for t = 1
    x0 = rng.normal(1.0, 1.0, T + 1)
    u = rng.standard_normal(T + 1)
    e = np.empty(T + 1)
    e[0] = u[0] / math.sqrt(1.0 - 0.09)
    for t in range(1, T + 1):
        e[t] = 0.3 * e[t - 1] + u[t]
    y = np.full(T + 1, np.nan)
    y[1:] = 1.0 + x0[:-1] + e[1:]
    if design.null:
        x1 = rng.normal(1.0, 1.0, T + 1)
        x2 = rng.normal(1.0, 1.0, T + 1)
    else:
        x1 = x0 + rng.standard_normal(T + 1)
        z = rng.normal(1.0, 1.0, T + 1)
        noise2 = 0.2 * z + 2.0 * rng.standard_normal(T + 1)
        x2 = x0 + noise2
        lo, hi = design.window()
        dates = np.arange(lo, hi + 1)
        x2[dates] = design.mean_path(dates.astype(float)) + noise2[dates]
        outs = design.outlier_dates()
        if outs:
            c = abs(mad_scale(x2[1:]))
            for t in outs:
                x2[t] = rng.uniform(c, 5.0 * c)
    T_in = int(math.floor(design.split * T))
    fit_t = np.arange(1 + h, T_in + 1)
    oos_t = np.arange(T_in + 1, T - h + 1)
    losses = []
    for x in (x1, x2):
        X = np.column_stack([np.ones(fit_t.size), x[fit_t - h]])
        coef = _ols(X, y[fit_t])
        pred = coef[0] + coef[1] * x[oos_t - h]
        losses.append((y[oos_t] - pred) ** 2)
    return losses[0], losses[1]
