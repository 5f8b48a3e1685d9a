"""
Algebraic decay from the continuous spectrum
============================================

About the constant state the linear problem decouples mode by mode. The
parallel block has eigenvalues with real part close to -nu k^2 / 2 near
k = 0, so data with a given low-frequency profile decays like a power of t
whose exponent depends only on that profile.
"""
import numpy as np

from qnslab import semigroup as sg
from qnslab.model import ModelParams

params = ModelParams()

# %%
# Dispersion: damped sound waves at small k, split into two real decay
# rates once the damping wins.
for k in (1e-3, 0.1, 1.0, 3.0):
    lp, lm = sg.dispersion(k, params)
    print(f"k = {k:6g}: lambda = {complex(lp):.4g}, {complex(lm):.4g}")

# %%
# Borderline data ~ k^(s - 3/2 + eta) near the origin. Gradients lose an
# extra half power of t.
times = sg.default_times(1000.0, 20)
print("\n   s   slope grad  (theory)   slope L2  (theory)")
for s in (0.0, 0.5, 1.0, 1.4):
    res = sg.hs_negative_decay_run(s, params, times)
    print(f"{s:4.1f}   {res.slope_grad:9.4f}  ({-(1 + s) / 2:6.3f})  {res.slope_L2:9.4f}  ({-s / 2:6.3f})")

# %%
# A profile that is flat at k = 0, like the transform of an integrable
# function, behaves like L^1 data: rate -3/4 for the L^2 norm.
prof = sg.p1_proxy_profile()
for k in (0, 1):
    fit = sg.lp_lq_decay_check(prof, 1.0, 2.0, k, params, times)
    print(f"grad^{k}: slope {fit.slope:.4f}, expected {fit.theory_slope:.3f}")
