"""Seeded, parallel Monte Carlo driver for size/power and autocovariance tables.

Replication ``r`` of an experiment with base seed ``s`` draws all of its
randomness from ``SeedSequence([s, r])``, so results do not depend on the
number of workers or on scheduling.  Workers return per-replication
rejection indicators and the parent reduces them in replication order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np
from scipy import stats

from . import __version__
from .errors import DomainError, HarContamError, SchemaError, UnknownNameError
from .inference import DmDesign, dm_forecast_harness, kvb_critical_value, reference_for
from .lrv import LRV_METHODS, estimate_lrv, ewc_default_B
from .models import SlsSpec, builtin_spec, simulate_path, theoretical_gamma_curve
from .spectral import d_star_hat, dk_autocov, sample_autocov

__all__ = [
    "Experiment",
    "ExperimentTable",
    "AcfExperiment",
    "AcfTable",
    "ComparisonReport",
    "replication_seed",
    "run_experiment",
    "run_acf_experiment",
    "builtin_experiment",
    "load_reference",
    "compare_to_reference",
    "TABLE_METHODS",
    "BUILTIN_EXPERIMENTS",
]

log = logging.getLogger(__name__)

TABLE_METHODS = ("dk", "dk-pw", "a91", "a91-pw", "nw87", "kvb", "ewc")
FAILURE_LIMIT = 0.01
_LABELS = {"dk-pw": "dk-pw-approx"}


def method_label(method: str) -> str:
    """Output label; prewhitened DK rows carry the ``pw-approx`` tag."""
    return _LABELS.get(method, method)


def replication_seed(base_seed: int, r: int) -> int:
    """64-bit seed for replication ``r``, independent of execution order."""
    ss = np.random.SeedSequence([int(base_seed), int(r)])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# experiment types


@dataclass(frozen=True)
class Experiment:
    dgp: SlsSpec | DmDesign
    methods: tuple
    delta_grid: tuple
    T: int = 200
    level: float = 0.05
    reps: int = 2000
    base_seed: int = 1
    name: str = "custom"
    init: str = "stationary"

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        if self.reps < 100:
            raise DomainError(f"reps must be at least 100, got {self.reps}")
        if not 0.0 < self.level < 1.0:
            raise DomainError(f"level must lie in (0, 1), got {self.level}")
        if not self.delta_grid:
            raise DomainError("delta_grid must not be empty")
        if not self.methods:
            raise DomainError("at least one method is required")
        for m in self.methods:
            if m not in LRV_METHODS or m == "hac":
                raise UnknownNameError(
                    f"unknown method {m!r}; expected one of {TABLE_METHODS}"
                )
        if not isinstance(self.dgp, (SlsSpec, DmDesign)):
            raise DomainError("dgp must be an SlsSpec or a DmDesign")

    @property
    def is_dm(self) -> bool:
        return isinstance(self.dgp, DmDesign)

    def with_reps(self, reps: int, base_seed: int | None = None) -> "Experiment":
        kw = dict(self.__dict__)
        kw["reps"] = reps
        if base_seed is not None:
            kw["base_seed"] = base_seed
        return Experiment(**kw)


@dataclass
class ExperimentTable:
    """Rejection frequencies ``rows[method][delta]`` with binomial standard errors."""

    name: str
    rows: dict
    reps: int | None
    base_seed: int | None = None
    failures: dict = field(default_factory=dict)
    version: str = __version__

    def __post_init__(self):
        for m, cells in self.rows.items():
            for d, p in cells.items():
                if not (math.isnan(p) or 0.0 <= p <= 1.0):
                    raise DomainError(f"rejection rate {p} for {m} at delta={d} is outside [0, 1]")

    @property
    def methods(self) -> list:
        return list(self.rows)

    @property
    def deltas(self) -> list:
        first = next(iter(self.rows.values()))
        return list(first)

    def mc_se(self, method: str, delta: float) -> float:
        if not self.reps:
            return 0.0
        p = self.rows[method][delta]
        return math.sqrt(p * (1.0 - p) / self.reps)

    def to_records(self) -> list:
        out = []
        for m, cells in self.rows.items():
            for d, p in cells.items():
                out.append({
                    "table": self.name, "method": m, "delta": d, "reject_rate": p,
                    "mc_se": self.mc_se(m, d), "reps": self.reps, "base_seed": self.base_seed,
                })
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["table", "method", "delta", "reject_rate", "mc_se", "reps", "base_seed"])
        for rec in self.to_records():
            w.writerow([
                rec["table"], rec["method"], _fmt(rec["delta"]), _fmt(rec["reject_rate"]),
                _fmt(rec["mc_se"]), rec["reps"], rec["base_seed"],
            ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "table": self.name,
            "reps": self.reps,
            "provenance": {"base_seed": self.base_seed, "version": self.version},
            "failures": {m: {str(d): n for d, n in c.items()} for m, c in self.failures.items()},
            "records": self.to_records(),
        }

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.17g}"
    return str(x)


# ---------------------------------------------------------------------------
# replication workers


def _critical_values(methods, T, level) -> dict:
    """Two-sided critical value for each method, computed once in the parent."""
    out = {}
    for m in methods:
        ref = reference_for(m)
        if ref == "fixed-b-sim":
            out[m] = kvb_critical_value(level)
        elif ref == "student-t":
            out[m] = float(stats.t.ppf(1.0 - level / 2.0, ewc_default_B(T)))
        else:
            out[m] = float(stats.norm.ppf(1.0 - level / 2.0))
    return out


def _stat_parts(x: np.ndarray, method: str):
    """``(mean, lrv)`` of ``x``; the LRV uses the demeaned series."""
    m = float(x.mean())
    lrv = estimate_lrv(x - m, method).value
    return m, lrv


def _location_rep(exp: Experiment, cvs: dict, r: int):
    """Rejections (methods x deltas) and failures (methods) for one replication."""
    v = np.asarray(simulate_path(exp.dgp, exp.T, replication_seed(exp.base_seed, r), exp.init))
    nm, nd = len(exp.methods), len(exp.delta_grid)
    rej = np.zeros((nm, nd), dtype=np.int8)
    fail = np.zeros(nm, dtype=np.int8)
    deltas = np.asarray(exp.delta_grid)
    for i, m in enumerate(exp.methods):
        try:
            vbar, J = _stat_parts(v, m)
            if not J > 0:
                raise HarContamError(f"{m}: non-positive LRV")
        except HarContamError as exc:
            log.debug("replication %d, %s: %s", r, m, exc)
            fail[i] = 1
            continue
        # demeaning makes the LRV invariant to delta
        t = math.sqrt(exp.T) * (deltas + vbar) / math.sqrt(J)
        rej[i] = np.abs(t) > cvs[m]
    return rej, fail


def _dm_rep(exp: Experiment, cvs: dict, r: int):
    seed = replication_seed(exp.base_seed, r)
    base = exp.dgp
    nm, nd = len(exp.methods), len(exp.delta_grid)
    rej = np.zeros((nm, nd), dtype=np.int8)
    fail = np.zeros((nm, nd), dtype=np.int8)
    for j, delta in enumerate(exp.delta_grid):
        design = DmDesign(
            spec_id=base.spec_id, delta=delta, T=exp.T, split=base.split,
            horizon=base.horizon, loss=base.loss, null=(delta == 0.0),
        )
        l1, l2 = dm_forecast_harness(design, seed)
        d = l2 - l1
        for i, m in enumerate(exp.methods):
            try:
                dbar, J = _stat_parts(d, m)
                if not J > 0:
                    raise HarContamError(f"{m}: non-positive LRV")
            except HarContamError as exc:
                log.debug("replication %d, %s, delta=%g: %s", r, m, delta, exc)
                fail[i, j] = 1
                continue
            rej[i, j] = abs(math.sqrt(d.size) * dbar / math.sqrt(J)) > cvs[m]
    return rej, fail


def _run_chunk(exp: Experiment, cvs: dict, reps: Sequence[int]):
    fn = _dm_rep if exp.is_dm else _location_rep
    out = [fn(exp, cvs, r) for r in reps]
    return np.stack([o[0] for o in out]), np.stack([o[1] for o in out])


def _chunks(n: int, size: int):
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def _map_chunks(func, args_list, workers: int):
    if workers <= 1 or len(args_list) == 1:
        return [func(*a) for a in args_list]
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(func, *a) for a in args_list]
        return [f.result() for f in futures]


def run_experiment(exp: Experiment, workers: int = 1, chunk_size: int = 50) -> ExperimentTable:
    """Run every replication and tally rejection frequencies.

    A failed estimate (non-positive or non-finite LRV, degenerate fit)
    counts as a non-rejection.  A cell with more than 1% failed
    replications is reported as NaN.
    """
    cvs = _critical_values(exp.methods, exp.T, exp.level)
    parts = _map_chunks(
        _run_chunk, [(exp, cvs, c) for c in _chunks(exp.reps, chunk_size)], workers
    )
    rej = np.concatenate([p[0] for p in parts]).astype(np.int64)
    fail = np.concatenate([p[1] for p in parts]).astype(np.int64)
    if fail.ndim == 2:  # location experiments fail for all deltas at once
        fail = np.repeat(fail[:, :, None], len(exp.delta_grid), axis=2)
    counts = rej.sum(axis=0)
    nfail = fail.sum(axis=0)
    rows, failures = {}, {}
    for i, m in enumerate(exp.methods):
        label = method_label(m)
        rows[label], failures[label] = {}, {}
        for j, d in enumerate(exp.delta_grid):
            failures[label][d] = int(nfail[i, j])
            if nfail[i, j] > FAILURE_LIMIT * exp.reps:
                log.warning("%s: %s at delta=%g failed in %d of %d replications; cell aborted",
                            exp.name, label, d, nfail[i, j], exp.reps)
                rows[label][d] = float("nan")
            else:
                rows[label][d] = float(counts[i, j] / exp.reps)
    return ExperimentTable(exp.name, rows, exp.reps, exp.base_seed, failures)


# ---------------------------------------------------------------------------
# autocovariance table


@dataclass(frozen=True)
class AcfExperiment:
    spec: SlsSpec
    T: int = 200
    reps: int = 5000
    base_seed: int = 1
    lags: tuple = (0, 1, 2, 5, 10)
    init: str = "stationary"
    name: str = "table1"


@dataclass
class AcfTable:
    """Monte Carlo means and standard errors of autocovariance estimators by lag."""

    lags: tuple
    gamma_T: np.ndarray
    means: dict
    se: dict
    reps: int
    diffs: dict = field(default_factory=dict)

    def to_csv(self, path=None) -> str:
        cols = list(self.means)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "gamma_T"] + cols + [c + "_se" for c in cols])
        for i, k in enumerate(self.lags):
            w.writerow([k, _fmt(float(self.gamma_T[i]))]
                       + [_fmt(float(self.means[c][i])) for c in cols]
                       + [_fmt(float(self.se[c][i])) for c in cols])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _acf_chunk(exp: AcfExperiment, reps):
    lags = list(exp.lags)
    L = max(lags)
    fr = exp.spec.break_fractions
    n_T = int(math.floor(exp.T**0.6))
    n_T -= n_T % 2
    out = np.empty((len(reps), 3, len(lags)))
    for i, r in enumerate(reps):
        v = np.asarray(simulate_path(exp.spec, exp.T, replication_seed(exp.base_seed, r), exp.init))
        g = sample_autocov(v, L).values[lags]
        d = d_star_hat(v, fr, L).d_hat if fr else 0.0
        gdk = dk_autocov(v, L, n_T, n_T, lags=lags).values
        out[i] = g, g - d, gdk
    return out


def run_acf_experiment(exp: AcfExperiment, workers: int = 1, chunk_size: int = 250) -> AcfTable:
    """Averages of the sample ACF, the ``d_hat*``-corrected ACF and the DK autocovariance.

    The DK column is the block-integrated, locally demeaned autocovariance
    with block length and window length ``n_T = floor(T^0.6)`` (made even).
    ``diffs["gamma_hat-gamma_dk"]`` holds the paired difference and its
    standard error.
    """
    parts = _map_chunks(_acf_chunk, [(exp, c) for c in _chunks(exp.reps, chunk_size)], workers)
    a = np.concatenate(parts)
    names = ("gamma_hat", "gamma_hat_minus_d", "gamma_dk")
    n = a.shape[0]
    means = {nm: a[:, i].mean(axis=0) for i, nm in enumerate(names)}
    se = {nm: a[:, i].std(axis=0, ddof=1) / math.sqrt(n) for i, nm in enumerate(names)}
    diff = a[:, 0] - a[:, 2]
    diffs = {"gamma_hat-gamma_dk": (diff.mean(axis=0), diff.std(axis=0, ddof=1) / math.sqrt(n))}
    gT = theoretical_gamma_curve(exp.spec, exp.T, max(exp.lags), exp.init)[list(exp.lags)]
    return AcfTable(tuple(exp.lags), gT, means, se, n, diffs)


# ---------------------------------------------------------------------------
# built-in configurations and reference tables


@lru_cache(maxsize=1)
def _reference_doc() -> dict:
    text = resources.files("harcontam").joinpath("data/reference_tables.json").read_text()
    return json.loads(text)


BUILTIN_EXPERIMENTS = (
    "table1", "table2", "table3", "table4", "table5",
    "table6_1", "table6_2", "table6_3", "table6_4",
)


def builtin_experiment(name: str, reps: int = 2000, base_seed: int = 1):
    """Configuration of a published table: an :class:`Experiment` or, for ``table1``, an :class:`AcfExperiment`."""
    key = name.lower()
    if key not in BUILTIN_EXPERIMENTS:
        raise UnknownNameError(
            f"unknown experiment {name!r}; expected one of {', '.join(BUILTIN_EXPERIMENTS)}"
        )
    ref = _reference_doc()["tables"][key]
    if key == "table1":
        return AcfExperiment(builtin_spec("M1"), ref["T"], reps, base_seed, tuple(ref["k"]))
    dgp = builtin_spec(ref["dgp"])
    if isinstance(dgp, DmDesign):
        dgp = DmDesign(spec_id=dgp.spec_id, T=ref["T"])
    return Experiment(
        dgp, TABLE_METHODS, tuple(ref["delta"]), ref["T"], ref["alpha"], reps, base_seed, key
    )


def load_reference(name: str) -> ExperimentTable:
    """Published rejection rates as an :class:`ExperimentTable` (``reps=None``)."""
    key = name.lower()
    tables = _reference_doc()["tables"]
    if key not in tables or key == "table1":
        raise UnknownNameError(f"no reference rejection table named {name!r}")
    ref = tables[key]
    rows = {
        method_label(m): dict(zip((float(d) for d in ref["delta"]), vals))
        for m, vals in ref["rows"].items()
    }
    return ExperimentTable(key, rows, None)


@dataclass
class ComparisonReport:
    cells: list
    patterns: dict

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.cells)

    def failed_cells(self) -> list:
        return [c for c in self.cells if not c["pass"]]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "cells": self.cells, "patterns": self.patterns}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _increasing(vals) -> bool:
    return all(b >= a for a, b in zip(vals, vals[1:]))


def compare_to_reference(
    table: ExperimentTable,
    reference: ExperimentTable,
    size_tol: float = 0.03,
    power_tol: float = 0.10,
    methods: Sequence[str] | None = None,
) -> ComparisonReport:
    """Cellwise ``|p_hat - p_ref| <= tol + 2 mc_se`` over the shared methods.

    Cells at ``delta = 0`` use ``size_tol``, all others ``power_tol``.
    ``patterns`` records, per method, whether each table's power curve is
    monotone in ``delta`` and whether the two agree on it.
    """
    common = [m for m in table.methods if m in reference.rows]
    if methods is not None:
        common = [m for m in common if m in methods]
    if not common:
        raise SchemaError("tables share no methods")
    if [float(d) for d in table.deltas] != [float(d) for d in reference.deltas]:
        raise SchemaError(f"delta grids differ: {table.deltas} vs {reference.deltas}")
    cells, patterns = [], {}
    for m in common:
        for d in table.deltas:
            p, q = table.rows[m][d], reference.rows[m][d]
            se = math.hypot(table.mc_se(m, d), reference.mc_se(m, d))
            tol = (size_tol if d == 0.0 else power_tol) + 2.0 * se
            ok = (not math.isnan(p)) and abs(p - q) <= tol
            cells.append({"method": m, "delta": d, "value": p, "reference": q,
                          "diff": p - q, "tol": tol, "pass": ok})
        ds = [d for d in table.deltas if d != 0.0]
        mono_t = _increasing([table.rows[m][d] for d in ds])
        mono_r = _increasing([reference.rows[m][d] for d in ds])
        patterns[m] = {"monotone": mono_t, "reference_monotone": mono_r, "agree": mono_t == mono_r}
    return ComparisonReport(cells, patterns)
