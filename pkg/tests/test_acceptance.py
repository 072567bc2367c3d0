"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line before asserting, so the
verdicts are visible in ``pytest -v`` output whether or not they hold.
"""
import math

import numpy as np
import pytest
from scipy import stats

from harcontam.errors import HarContamError
from harcontam.edgeworth import EdgeworthCdf, cbar1, edgeworth_cdf, spectral_summary_tvar1
from harcontam.inference import DmDesign, dm_forecast_harness, dm_test
from harcontam.lrv import hac, kvb, qs
from harcontam.models import (
    ParamFunc,
    RegimeSpec,
    SlsSpec,
    builtin_spec,
    d_star_true,
    local_autocov_quad,
    local_autocov_true,
    local_spectrum,
    simulate_path,
)
from harcontam.montecarlo import (
    AcfExperiment,
    Experiment,
    builtin_experiment,
    load_reference,
    replication_seed,
    run_acf_experiment,
    run_experiment,
)
from harcontam.edgeworth import spectrum_at_zero
from harcontam.spectral import dft_direct, periodogram, sample_autocov

EXACT_METHODS = ("dk", "a91", "nw87", "kvb", "ewc")


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return report


def regime(lo, hi, mean=0.0, rho=0.0, sigma=1.0):
    return RegimeSpec(lo, hi, ParamFunc.const(mean), ParamFunc.const(rho), ParamFunc.const(sigma))


def median_se(x, seed=0, n_boot=500):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, x.size, (n_boot, x.size))
    return float(np.median(x[idx], axis=1).std(ddof=1))


# ---------------------------------------------------------------------------


def test_criterion_1_autocovariance_table(verdict):
    exp = AcfExperiment(builtin_spec("M1"), T=200, reps=5000, base_seed=1, lags=(0, 1, 2, 5, 10))
    tab = run_acf_experiment(exp)
    diff, se = tab.diffs["gamma_hat-gamma_dk"]
    part1 = all(diff[i] >= 3 * se[i] for i in (3, 4))
    gT = tab.gamma_T[:3]
    mae_raw = float(np.mean(np.abs(tab.means["gamma_hat"][:3] - gT)))
    mae_corr = float(np.mean(np.abs(tab.means["gamma_hat_minus_d"][:3] - gT)))
    part2 = mae_corr < mae_raw
    verdict(
        1, part1 and part2,
        f"gamma_hat - gamma_dk at k=5,10: {diff[3]:.4f} ({diff[3] / se[3]:.1f} se), "
        f"{diff[4]:.4f} ({diff[4] / se[4]:.1f} se); MAE k<=2 corrected {mae_corr:.4f} vs raw {mae_raw:.4f}",
    )


def test_criterion_2_contamination_formula(verdict):
    T, R, k = 1000, 5000, 25
    lines, ok = [], True
    for dmu in (1.0, 2.0):
        spec = SlsSpec((regime(0.0, 0.5), regime(0.5, 1.0, mean=dmu)), (), "step")
        target = 0.5 * 0.5 * dmu**2
        assert d_star_true(spec) == pytest.approx(target)
        g = np.array([
            sample_autocov(np.asarray(simulate_path(spec, T, replication_seed(2, r))), k).values[k]
            for r in range(R)
        ])
        m, se = g.mean(), g.std(ddof=1) / math.sqrt(R)
        ok &= abs(m - target) <= 3 * se
        lines.append(f"dmu={dmu:g}: mean {m:.4f} vs {target:.4f} ({(m - target) / se:.1f} se)")
    verdict(2, ok, "; ".join(lines))


def test_criterion_3_step_periodogram(verdict):
    lam, B1, B2 = 0.3, 1.0, -0.5
    # closed-form divergent term at omega_1 = 2 pi / T: T |B1 - B2 - (B1 - B2) e^{-2 pi i lam}|^2 / (4 pi^2)
    kappa = abs((B1 - B2) - (B1 - B2) * np.exp(-2j * np.pi * lam)) ** 2 / (4 * np.pi**2)
    worst, scaled, rel = 0.0, [], []
    for T in (200, 400, 800):
        t = np.arange(1, T + 1)
        mu = np.where(t <= int(lam * T), B1, B2)
        pg = periodogram(mu)
        l = np.arange(1, min(T // 2, 256))
        brute = np.abs(dft_direct(mu, 2 * np.pi * l / T)) ** 2 / T
        worst = max(worst, float(np.max(np.abs(pg.ordinates[l] - brute))))
        scaled.append(pg.ordinates[1] / T)
        rel.append(pg.ordinates[1] / (kappa * T) - 1)
    # linear growth: I(omega_1) >= kappa T at every T, with kappa > 0
    ok = worst <= 1e-9 and kappa > 0 and all(s >= kappa for s in scaled)
    verdict(
        3, ok,
        f"max |FFT - direct| {worst:.2e}; I(omega_1)/T = {', '.join(f'{s:.5f}' for s in scaled)} "
        f">= kappa {kappa:.5f}; relative gap to closed form {', '.join(f'{r:.1e}' for r in rel)}",
    )


def _size_power_check(name, reps=2000):
    tab = run_experiment(builtin_experiment(name, reps=reps, base_seed=1))
    ref = load_reference(name)
    bad = []
    for m in EXACT_METHODS:
        for d in tab.deltas:
            p, q = tab.rows[m][d], ref.rows[m][d]
            tol = (0.03 if d == 0 else 0.10) + 2 * tab.mc_se(m, d)
            if not abs(p - q) <= tol:
                bad.append(f"{m}@{d:g}: {p:.3f} vs {q:.3f}")
    return tab, bad


def test_criterion_4_size_power_tables(verdict):
    tables = {n: _size_power_check(n) for n in ("table2", "table3", "table4", "table5")}
    n_cells = sum(len(EXACT_METHODS) * len(t.deltas) for t, _ in tables.values())
    bad = [f"{n}:{b}" for n, (_, bb) in tables.items() for b in bb]
    t2, t3 = tables["table2"][0], tables["table3"][0]
    musts = []
    if not t2.rows["nw87"][0.0] >= 0.12:
        musts.append(f"NW87 size on M1 {t2.rows['nw87'][0.0]:.3f} < 0.12")
    if not t2.rows["kvb"][0.0] <= 0.02:
        musts.append(f"KVB size on M1 {t2.rows['kvb'][0.0]:.3f} > 0.02")
    for n, t in (("table2", t2), ("table3", t3)):
        for d in t.deltas:
            if d == 0:
                continue
            for m in ("kvb", "ewc"):
                if not t.rows[m][d] < t.rows["dk"][d]:
                    musts.append(f"{n} {m} power {t.rows[m][d]:.3f} not below DK {t.rows['dk'][d]:.3f} at {d:g}")
    for n, t in (("table2", t2), ("table3", t3)):
        if not t.rows["a91-pw"][0.0] > 0.05:
            musts.append(f"{n} A91-pw size {t.rows['a91-pw'][0.0]:.3f} not oversized")
    ok = not bad and not musts
    verdict(
        4, ok,
        f"{n_cells - len(bad)}/{n_cells} cells within tolerance; out: {bad[:12]}{' ...' if len(bad) > 12 else ''}; "
        f"qualitative failures: {musts or 'none'}",
    )


def test_criterion_5_dm_tables(verdict):
    t1 = run_experiment(builtin_experiment("table6_1", reps=2000, base_seed=1)).rows
    fails = []
    if not abs(t1["dk"][0.0] - 0.033) <= 0.03:
        fails.append(f"DK size {t1['dk'][0.0]:.3f}")
    if not t1["dk"][2.0] >= 0.95:
        fails.append(f"DK power@2 {t1['dk'][2.0]:.3f}")
    if not t1["kvb"][2.0] <= 0.05:
        fails.append(f"KVB power@2 {t1['kvb'][2.0]:.3f}")
    if not t1["ewc"][10.0] <= 0.05:
        fails.append(f"EWC power@10 {t1['ewc'][10.0]:.3f}")
    n5, n10 = t1["nw87"][5.0], t1["nw87"][10.0]
    if not (n10 < n5 + 0.05 and n5 < 0.9 and n10 < 0.9):
        fails.append(f"NW87 power@5,10 {n5:.3f},{n10:.3f}")
    # other panels: DK power rises to near one while KVB collapses at the largest shift
    for name in ("table6_2", "table6_3", "table6_4"):
        tab = run_experiment(builtin_experiment(name, reps=2000, base_seed=1))
        rows, top = tab.rows, max(tab.deltas)
        dk = [rows["dk"][d] for d in tab.deltas]
        rising = all(b >= a - 2 * math.sqrt(0.25 / 2000) for a, b in zip(dk, dk[1:]))
        if not (rows["dk"][top] >= 0.95 and rows["kvb"][top] <= 0.05 and rising):
            fails.append(f"{name} DK {['%.3f' % v for v in dk]} KVB@{top:g} {rows['kvb'][top]:.3f}")
    verdict(5, not fails, f"failed checks: {fails or 'none'}")


def _dm_abs_t(delta, method, R, T=400):
    out = np.empty(R)
    design = DmDesign(spec_id=1, delta=delta, T=T)
    for r in range(R):
        l1, l2 = dm_forecast_harness(design, replication_seed(6, r))
        try:
            out[r] = abs(dm_test(l1, l2, method).statistic)
        except HarContamError:
            out[r] = np.nan  # failed estimate, as in the Monte Carlo failure policy
    return out


def test_criterion_6_dm_power_law(verdict):
    R = 1000
    med, fails = {}, 0
    for m in ("kvb", "dk"):
        for d in (2.0, 10.0):
            x = _dm_abs_t(d, m, R)
            fails += int(np.isnan(x).sum())
            x = x[~np.isnan(x)]
            med[m, d] = (float(np.median(x)), median_se(x))
    kvb_gap = med["kvb", 10.0][0] - med["kvb", 2.0][0]
    kvb_se = math.hypot(med["kvb", 10.0][1], med["kvb", 2.0][1])
    dk_gap = med["dk", 10.0][0] - med["dk", 2.0][0]
    rej = {}
    for T in (400, 800):  # out-of-sample length about 200 and 400
        exp = Experiment(DmDesign(spec_id=1, T=T), ("dk",), (2.0,), T=T, reps=500, base_seed=6)
        rej[T] = run_experiment(exp).rows["dk"][2.0]
    ok = kvb_gap <= 2 * kvb_se and dk_gap > 0 and rej[800] >= rej[400] and fails <= 0.01 * R
    verdict(
        6, ok,
        f"median |t| KVB {med['kvb', 2.0][0]:.3f} -> {med['kvb', 10.0][0]:.3f} (2 se = {2 * kvb_se:.3f}); "
        f"DK {med['dk', 2.0][0]:.3f} -> {med['dk', 10.0][0]:.3f}; DK rejection at delta=2, T_n 200 -> 400: "
        f"{rej[400]:.3f} -> {rej[800]:.3f}; failed estimates {fails}",
    )


def test_criterion_7_edgeworth(verdict):
    T, R, rho = 200, 50000, 0.5
    b1 = T ** -0.2
    rng = np.random.default_rng(7)
    e = rng.standard_normal((R, T))
    x = np.empty((R, T))
    x[:, 0] = e[:, 0] / math.sqrt(1 - rho**2)
    for t in range(1, T):
        x[:, t] = rho * x[:, t - 1] + e[:, t]
    m = x.mean(axis=1)
    xc = x - m[:, None]
    F = np.fft.rfft(xc, 512)
    acov = np.fft.irfft(np.abs(F) ** 2, 512)[:, :T] / T
    w = qs.evaluator(b1 * np.arange(T))
    J = acov[:, 0] + 2 * acov[:, 1:] @ w[1:]
    # spot-check the vectorised QS estimate against the package estimator
    for i in range(3):
        assert J[i] == pytest.approx(hac(x[i], "qs", b1).value, rel=1e-10)
    tstat = np.sqrt(T) * m / np.sqrt(J)
    ar = SlsSpec((regime(0.0, 1.0, rho=rho),), (), "ar")
    model = EdgeworthCdf(cbar1(spectral_summary_tvar1(ar)), b1)
    d_edge = stats.kstest(tstat, lambda z: edgeworth_cdf(z, model)).statistic
    d_norm = stats.kstest(tstat, "norm").statistic
    z = np.linspace(-8, 8, 10_000)
    inv_ok = True
    for variant in ("additive", "rescaled"):
        mm = EdgeworthCdf(model.c1, b1, variant=variant)
        Fz = edgeworth_cdf(z, mm)
        inv_ok &= bool(np.all(np.diff(Fz) >= -1e-15))
        inv_ok &= bool(np.allclose(edgeworth_cdf(-z, mm), 1 - Fz, atol=1e-12))
    verdict(7, d_edge < d_norm and inv_ok,
            f"KS distance to corrected CDF {d_edge:.4f} vs normal {d_norm:.4f}; invariants {'hold' if inv_ok else 'fail'}")


def test_criterion_8_oracle_suites(verdict):
    rng = np.random.default_rng(8)
    errs = {}
    worst = 0.0
    for T in (17, 128, 300, 512):
        x = rng.standard_normal(T)
        pg = periodogram(x)
        brute = np.abs(dft_direct(x, pg.frequencies)) ** 2 / T
        worst = max(worst, float(np.max(np.abs(pg.ordinates - brute))))
    errs["dft"] = worst <= 1e-9
    worst = 0.0
    for name in ("M1", "M2", "M4"):
        spec = builtin_spec(name)
        for u in (0.05, 0.3, 0.77):
            for k in (0, 1, 4, 9):
                worst = max(worst, abs(local_autocov_true(spec, u, k, verify=False) - local_autocov_quad(spec, u, k)))
    errs["local_autocov"] = worst <= 1e-8
    worst = 0.0
    for T in (10, 101, 400):
        x = rng.standard_normal(T)
        worst = max(worst, abs(kvb(x).value - hac(x, "bartlett", 1.0 / T).value) / kvb(x).value)
    errs["kvb"] = worst <= 1e-10
    # analytic derivatives against Richardson-extrapolated central differences
    ok = True
    spec = builtin_spec("M2")
    for u in np.linspace(0.05, 0.95, 10):
        f = lambda w: local_spectrum(spec, u, w)
        d = lambda h: (f(h) - 2 * f(0.0) + f(-h)) / (h * h)
        ok &= abs(spectrum_at_zero(spec, u)["f_ww"] / ((4 * d(5e-4) - d(1e-3)) / 3) - 1) <= 1e-6
        g = lambda v: local_spectrum(spec, v, 0.0)
        d1 = lambda h: (g(u + h) - g(u - h)) / (2 * h)
        ok &= abs(spectrum_at_zero(spec, u)["f_u"] / ((4 * d1(5e-4) - d1(1e-3)) / 3) - 1) <= 1e-5
    errs["derivatives"] = bool(ok)
    exp = Experiment(builtin_spec("M2"), ("dk", "kvb", "nw87"), (0.0, 0.2), T=200, reps=100, base_seed=8)
    errs["determinism"] = run_experiment(exp, workers=1).to_csv() == run_experiment(exp, workers=2, chunk_size=17).to_csv()
    verdict(8, all(errs.values()), ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in errs.items()))
