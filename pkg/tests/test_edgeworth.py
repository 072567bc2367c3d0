import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from harcontam.edgeworth import (
    EdgeworthCdf,
    SpectralSummary,
    cbar1,
    cbar2,
    edgeworth_cdf,
    erp_order_report,
    k2_second_moment,
    kernel_moment,
    spectral_summary_tvar1,
    spectrum_at_zero,
)
from harcontam.errors import DomainError, UnsupportedModelError
from harcontam.lrv import qs
from harcontam.models import ParamFunc, RegimeSpec, SlsSpec, builtin_spec, local_spectrum


def ar_spec(rho, sigma=1.0):
    reg = RegimeSpec(0.0, 1.0, ParamFunc.const(0.0), ParamFunc.const(rho), ParamFunc.const(sigma))
    return SlsSpec((reg,), (), f"ar{rho}")


def richardson(d, h):
    # central differences have O(h^2) error; one extrapolation step removes it
    return (4 * d(h / 2) - d(h)) / 3


def fd_omega2(spec, u, h=1e-3):
    f = lambda w: local_spectrum(spec, u, w)
    return richardson(lambda e: (f(e) - 2 * f(0.0) + f(-e)) / (e * e), h)


def fd_u(spec, u, h=1e-3):
    f = lambda v: local_spectrum(spec, v, 0.0)
    d1 = richardson(lambda e: (f(u + e) - f(u - e)) / (2 * e), h)
    d2 = richardson(lambda e: (f(u + e) - 2 * f(u) + f(u - e)) / (e * e), h)
    return d1, d2


def fd_u_one_sided(spec, u, h):
    f = lambda v: local_spectrum(spec, v, 0.0)
    return (-3 * f(u) + 4 * f(u + h) - f(u + 2 * h)) / (2 * h)


class TestSpectralDerivatives:
    @pytest.mark.parametrize("name", ["M1", "M2", "M4"])
    def test_omega_curvature_against_finite_differences(self, name):
        spec = builtin_spec(name)
        us = np.random.default_rng(50).uniform(0.001, 0.999, 50)
        for u in us:
            if any(abs(u - b) < 1e-3 for b in spec.break_fractions):
                continue
            exact = spectrum_at_zero(spec, u)["f_ww"]
            assert exact == pytest.approx(fd_omega2(spec, u), rel=1e-6)

    def test_u_derivatives_on_smooth_model(self):
        spec = builtin_spec("M2")
        for u in np.linspace(0.05, 0.95, 19):
            t = spectrum_at_zero(spec, u)
            d1, d2 = fd_u(spec, u)
            assert t["f_u"] == pytest.approx(d1, rel=1e-5)
            assert t["f_uu"] == pytest.approx(d2, rel=1e-5, abs=1e-5 * abs(t["f"]))

    def test_level_matches_spectrum(self):
        spec = builtin_spec("M4")
        for u in (0.1, 0.5, 0.9):
            assert spectrum_at_zero(spec, u)["f"] == pytest.approx(local_spectrum(spec, u, 0.0), rel=1e-14)

    def test_white_noise_is_flat(self):
        s = spectral_summary_tvar1(ar_spec(0.0, 1.3))
        assert s.fd_int == 0.0 and s.fuu0_int == 0.0
        assert cbar1(s) == 0.0 and cbar2(s) == 0.0

    def test_ar1_has_negative_curvature(self):
        s = spectral_summary_tvar1(ar_spec(0.5))
        assert s.fd_int < 0
        assert np.sign(s.fd_int) == np.sign(fd_omega2(ar_spec(0.5), 0.5))


class TestCbar:
    def test_ar05_value(self):
        # mu_2 f''(0) / (2 f(0)) with f''/f = -2 rho / (1 - rho)^2 = -4
        assert cbar1(spectral_summary_tvar1(ar_spec(0.5))) == pytest.approx(-5.6849, abs=1e-4)

    def test_ar05_against_exact_qs_bias(self):
        # sum_k K(b k) Gamma(k) / J - 1 = c1_bar b^2 + O(b^4) for the QS lag window
        rho = 0.5
        k = np.arange(1, 4000)
        gam = rho**k / (1 - rho**2)
        J = 1 / (1 - rho) ** 2
        c1 = cbar1(spectral_summary_tvar1(ar_spec(rho)))
        for b in (0.02, 0.01):
            bias = (1 / (1 - rho**2) + 2 * np.sum(qs(b * k) * gam)) / J - 1
            assert bias / b**2 == pytest.approx(c1, rel=5 * b)

    def test_independent_quadrature_for_m2(self):
        spec = builtin_spec("M2")
        s = spectral_summary_tvar1(spec)
        f0 = integrate.quad(lambda u: local_spectrum(spec, u, 0.0), 0, 1, epsabs=1e-12)[0]
        fww = integrate.quad(lambda u: fd_omega2(spec, u, 1e-3), 0, 1, epsabs=1e-10)[0]
        # int_0^1 f_uu du = f_u(1) - f_u(0), slopes taken from inside the interval
        fuu = fd_u_one_sided(spec, 1.0, -1e-4) - fd_u_one_sided(spec, 1e-12, 1e-4)
        mu2 = 36 * math.pi**2 / 125
        assert cbar1(s) == pytest.approx(mu2 * fww / (2 * f0), rel=1e-5)
        assert cbar2(s) == pytest.approx(0.3 * fuu / (2 * f0), rel=1e-5)

    def test_builtin_values(self):
        vals = {n: spectral_summary_tvar1(builtin_spec(n)) for n in ("M1", "M2", "M4")}
        assert cbar1(vals["M1"]) == pytest.approx(-237.7, rel=1e-3)
        assert cbar1(vals["M2"]) == pytest.approx(-13.45, rel=1e-3)
        assert cbar1(vals["M4"]) == pytest.approx(-666.4, rel=1e-3)
        assert cbar2(vals["M2"]) == pytest.approx(-0.0709, rel=2e-3)

    @pytest.mark.parametrize("name", ["M1", "M2", "M4"])
    def test_scale_invariance(self, name):
        spec = builtin_spec(name)
        doubled = SlsSpec(
            tuple(
                RegimeSpec(
                    r.lambda_lo, r.lambda_hi, r.mean_fn, r.ar_fn,
                    ParamFunc(r.sigma_fn.form, {**r.sigma_fn.params, "value": r.sigma_fn.params["value"] * math.sqrt(2)}),
                )
                for r in spec.regimes
            ),
            (),
            "scaled",
        )
        a, b = spectral_summary_tvar1(spec), spectral_summary_tvar1(doubled)
        assert cbar1(b) == pytest.approx(cbar1(a), rel=1e-9)
        assert cbar2(b) == pytest.approx(cbar2(a), rel=1e-9, abs=1e-14)

    def test_k2_moment(self):
        assert k2_second_moment("quadratic") == pytest.approx(0.3, abs=1e-12)
        assert k2_second_moment("rectangular") == pytest.approx(1 / 3, abs=1e-10)

    def test_kernel_moment(self):
        assert kernel_moment("qs") == pytest.approx(36 * math.pi**2 / 125)
        with pytest.raises(UnsupportedModelError):
            kernel_moment("bartlett")
        with pytest.raises(UnsupportedModelError):
            kernel_moment("qs", d_f=4)

    def test_unsupported_inputs(self):
        with pytest.raises(UnsupportedModelError):
            spectral_summary_tvar1(builtin_spec("M3"))
        with pytest.raises(UnsupportedModelError):
            spectral_summary_tvar1(builtin_spec("M2"), d_f=3)
        with pytest.raises(DomainError):
            SpectralSummary(1.0, -1.0, 0.0, d_f=1)
        with pytest.raises(DomainError):
            cbar1(SpectralSummary(0.0, -1.0, 0.0))
        with pytest.raises(DomainError):
            cbar2(SpectralSummary(-1.0, -1.0, 0.0))

    def test_summary_json(self):
        d = json.loads(spectral_summary_tvar1(builtin_spec("M2")).to_json())
        assert set(d) == {"f0_int", "fd_int", "fuu0_int", "d_f", "kernel_moment", "k2_moment"}


class TestEdgeworthCdf:
    def test_zero_correction_is_normal(self):
        z = np.linspace(-5, 5, 101)
        for variant in ("additive", "rescaled"):
            m = EdgeworthCdf(0.0, 0.3, 0.0, 0.2, variant=variant)
            np.testing.assert_array_equal(edgeworth_cdf(z, m), stats.norm.cdf(z))

    def test_half_at_zero(self):
        for c1, c2 in ((-200.0, None), (5.0, -3.0)):
            m = EdgeworthCdf(c1, 0.2, c2, None if c2 is None else 0.1)
            assert edgeworth_cdf(0.0, m) == 0.5

    def test_additive_formula(self):
        m = EdgeworthCdf(-5.6849, 0.3, -0.07, 0.2)
        a = 0.5 * -5.6849 * 0.09 + 0.5 * -0.07 * 0.04
        assert m.shift == pytest.approx(a)
        z = 1.3
        assert edgeworth_cdf(z, m) == pytest.approx(stats.norm.cdf(z) + a * z * stats.norm.pdf(z), abs=1e-15)

    def test_clamp_flag(self):
        val, flag = edgeworth_cdf(np.array([-2.0, 2.0]), EdgeworthCdf(12.0, 0.5), return_flag=True)
        assert flag and val[0] == 0.0 and val[1] == 1.0
        _, flag = edgeworth_cdf(1.0, EdgeworthCdf(-1.0, 0.1), return_flag=True)
        assert not flag

    def test_validation(self):
        with pytest.raises(DomainError):
            EdgeworthCdf(1.0, 0.1, variant="taylor")
        with pytest.raises(DomainError):
            EdgeworthCdf(1.0, 0.1, c2=1.0)

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(-0.2, 0.2), variant=st.sampled_from(["additive", "rescaled"]))
    def test_monotone_and_symmetric(self, a, variant):
        m = EdgeworthCdf(a / 0.04, 0.2, variant=variant)
        z = np.linspace(-6, 6, 4001)
        F = edgeworth_cdf(z, m)
        assert np.all(np.diff(F) >= -1e-15)
        np.testing.assert_allclose(1 - edgeworth_cdf(-z, m), F, atol=1e-12)

    def test_monotone_for_large_positive_shift(self):
        # the clipped additive form stays monotone when the raw expansion overshoots 1
        z = np.linspace(-8, 8, 20001)
        for c1 in (10.0, 50.0, 200.0):
            F = edgeworth_cdf(z, EdgeworthCdf(c1, 0.1))
            assert np.all(np.diff(F) >= -1e-15)

    def test_variants_differ_at_order_b4(self):
        z = np.linspace(-4, 4, 801)
        ratios = []
        for b in (0.05, 0.1, 0.2):
            add = edgeworth_cdf(z, EdgeworthCdf(-5.6849, b))
            res = edgeworth_cdf(z, EdgeworthCdf(-5.6849, b, variant="rescaled"))
            ratios.append(np.max(np.abs(add - res)) / b**4)
        C = ratios[0]
        assert max(ratios) <= 1.5 * C
        assert min(ratios) >= C / 1.5


class TestErp:
    def test_hac_value(self):
        bias, var = erp_order_report("hac", 200, 0.2)
        assert var == pytest.approx(0.158, abs=5e-4)
        assert bias == pytest.approx(0.04)

    def test_dk_scale_larger(self):
        for b2 in (0.1, 0.5, 0.99):
            assert erp_order_report("dk", 200, 0.2, b2)[1] >= erp_order_report("hac", 200, 0.2)[1]

    def test_errors(self):
        with pytest.raises(DomainError):
            erp_order_report("dk", 200, 0.2)
        with pytest.raises(DomainError):
            erp_order_report("ewc", 200, 0.2)
