# %% [markdown]
# # How the forcing and the remainder shrink with eps
#
# The approximate solution `v_app` built from the slice flow `v` and the
# corrector `w` leaves a forcing `F` in the momentum equation.  This script
# runs a reduced eps ladder in lockstep and fits `log |F|` and
# `log sup |R|_{H^1/2}` against `log eps`.
#
# The default ladder at default resolution takes several minutes; the
# reduced grid below runs in well under a minute.

# %%
from slowflow import default_config, emit_report, fit_all, run_sweep

cfg = default_config(grid={"n1": 32, "n2": 32, "n3_slow": 16, "n3_fast": 32}, T=0.25, dt=5e-3)
records = run_sweep(cfg)
for r in records:
    print(f"eps={r.eps:<8g} total {r.forcing_total:.4e}  linear {r.forcing_linear:.4e}  "
          f"sup R {r.remainder_sup_h12:.4e}")

# %% [markdown]
# Fitted exponents.  The summary file also states the finite time window.

# %%
fits = fit_all(records)
for name, fit in fits.items():
    print(f"{name:20s} slope {fit.slope:.3f}  r2 {fit.r2:.4f}")
paths = emit_report(records, fits, "forcing_scaling_out")
print(open(paths["summary"]).read())
