# %% [markdown]
# # The horizontally averaged forcing on the torus
#
# On a periodic box the `H^{-1/2}` norm weights the modes with `k_h = 0`
# and vertical wavenumber `eps j` by `(eps |j|)^{-1}`.  On the whole space
# these modes have measure zero.  Part of the nonlinear forcing,
# `eps d3 <w^3 (eps w^h + v^h)>` and `d3 <w^3 w^3>`, lives exactly there.
#
# With a horizontal corrector datum (`w0^3 = 0`) the third component of `w`
# stays of size `eps^2` and this part is negligible.  With a generic datum
# (`w0 = curl(0, psi, psi)`, so `w0^3` is of order one) the nonlinear
# forcing stops decaying.  This script measures both cases.

# %%
from slowflow import default_config, fit_scaling, run_sweep

base = dict(grid={"n1": 32, "n2": 32, "n3_slow": 16, "n3_fast": 32}, T=0.25, dt=5e-3, norms=["forcing"])
for kind in ("horizontal", "curl"):
    cfg = default_config(generator={"kind": "stream2d", "w0": {"type": kind}}, **base)
    recs = run_sweep(cfg)
    values = ", ".join(f"{r.forcing_nonlinear:.3e}" for r in recs)
    slope, _, _ = fit_scaling(recs, "forcing_nonlinear")
    print(f"w0 {kind:10s}: nonlinear forcing {values}; slope {slope:.3f}")
