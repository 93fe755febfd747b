# %% [markdown]
# # Heat-characterised Besov norm of product data
#
# For `h(x) = f(x_h) g(eps x3)` the heat semigroup factorises, so the
# norm `sup_t t^{1/2} |e^{t lap} h|_inf` of `h` is close to that of `f`
# times `max |g|` once `eps` is small.  On the torus `f` must be mean-free
# for its norm to be finite; the bump preset can drop its mean.

# %%
from slowflow import ScalarField, besov_heat_norm, generate_initial_data, make_grid
from slowflow.spectral import to_spectral
from slowflow.experiment import _scalar_2d

fspec = {"preset": "bump", "sigma": 0.6, "band": 6, "zero_mean": True}
g2 = make_grid(32, 32, 1)
b2, t2 = besov_heat_norm(ScalarField(g2, to_spectral(g2, _scalar_2d(fspec, g2))))
print(f"besov2d(f) = {b2:.5f} (maximised at t = {t2:.4f})")

# %%
for eps in ("1/4", "1/8", "1/16", "1/32"):
    h = generate_initial_data("product", {"grid": {"n1": 32, "n2": 32, "n3_slow": 32}, "eps": eps,
                                          "n3_fast": 32, "f": fspec})
    b, _ = besov_heat_norm(h)
    print(f"eps={eps:5s} besov(h) = {b:.5f}  ratio {b / b2:.4f}")

# %% [markdown]
# A single vertical cosine has the closed form `A / (|k| sqrt(2e))`.

# %%
import math

import numpy as np

g = make_grid(16, 16, 16)
for k in (1, 2, 4):
    val, _ = besov_heat_norm(ScalarField.from_physical(g, np.cos(k * g.mesh()[2])), oversample=True)
    print(f"k={k}: {val:.8f} vs {1 / (k * math.sqrt(2 * math.e)):.8f}")
