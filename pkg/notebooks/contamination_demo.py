# %% [markdown]
# # Mean shifts and the sample autocovariance
#
# A short-memory series with an unmodelled mean shift has a sample ACF
# that decays slowly.  The double-kernel (DK) autocovariance works on
# local windows, so the shift barely reaches it.

# %%
import numpy as np

from harcontam.models import ParamFunc, RegimeSpec, SlsSpec, simulate_path
from harcontam.spectral import d_star_hat, dk_autocov, sample_autocov

# %%
spec = SlsSpec(
    (
        RegimeSpec(0.0, 0.5, ParamFunc.const(0.0), ParamFunc.const(0.3)),
        RegimeSpec(0.5, 1.0, ParamFunc.const(1.5), ParamFunc.const(0.3)),
    ),
    (),
    "shift",
)
T = 400
v = np.asarray(simulate_path(spec, T, seed=3))

# %%
lags = [0, 1, 2, 5, 10, 20]
acf = sample_autocov(v, 20).values[lags]
dk = dk_autocov(v, 20, 36, 36, lags=lags).values
rep = d_star_hat(v, [0.5], 20)
for k, a, d, c in zip(lags, acf, dk, rep.corrected_acf.values[lags]):
    print(f"k={k:2d}  acf={a: .3f}  dk={d: .3f}  acf-d_hat={c: .3f}")
print("d_hat* =", round(rep.d_hat, 3), " theoretical 0.25 * 1.5^2 =", 0.25 * 1.5**2)
