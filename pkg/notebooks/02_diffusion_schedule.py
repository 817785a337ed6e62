"""
Noise schedule and the reverse step
===================================

Forward corruption mixes a clean sample with Gaussian noise; one reverse
step removes the predicted noise again. With the true noise plugged in,
the reverse chain walks back to the starting point.
"""

# %%
import math

import numpy as np

from anticipator.forecaster import build_schedule, denoise_step, noise_sample, reverse_sigma

s = build_schedule(100, 1e-4, 0.1)
print("alpha_bar at t = 1, 10, 50, 100:", np.round(s.alpha_bar[[0, 9, 49, 99]], 5))

# %%
rng = np.random.default_rng(0)
x0 = np.sin(np.linspace(0, 2 * np.pi, 8))
eps = rng.normal(size=8)
for t in (1, 25, 100):
    xt = noise_sample(x0, t, eps, s)
    print(f"t={t:3d} corr(x_t, x0) = {np.corrcoef(xt, x0)[0, 1]:+.3f}")

# %%
# a short chain, retraced exactly with an oracle noise estimate
s5 = build_schedule(5, 0.05, 0.3)
xs = [x0]
for t in range(1, 6):
    xs.append(math.sqrt(s5.alpha[t - 1]) * xs[-1] + math.sqrt(s5.beta[t - 1]) * rng.normal(size=8))
x = xs[-1]
for t in range(5, 0, -1):
    ab = s5.alpha_bar[t - 1]
    eps_hat = (xs[t] - math.sqrt(ab) * x0) / math.sqrt(1 - ab)
    mean = denoise_step(x, t, eps_hat, s5)
    noise = (xs[t - 1] - mean) / reverse_sigma(s5, t) if t > 1 else None
    x = denoise_step(x, t, eps_hat, s5, noise)
print("max reconstruction error:", float(np.max(np.abs(x - x0))))
