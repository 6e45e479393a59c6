# Energy scores from posterior logits, then log-normal interval labels.
import numpy as np

from dimscope.energy import bin_energies, energy_score, fit_lognormal

print("E(0,0) =", energy_score([0.0, 0.0]), " E(2,1) =", energy_score([2.0, 1.0]))
print("overflow-safe: E(700, -700) =", energy_score([700.0, -700.0]))

# 500 sources, 100 posterior draws each, from a confident two-class model
rng = np.random.default_rng(3)
margin = np.abs(rng.normal(4.0, 1.5, size=(500, 1)))
noise = rng.normal(scale=rng.uniform(0.3, 1.5, size=(500, 1, 1)), size=(500, 100, 2))
logits = np.stack([margin + noise[..., 0], -margin + noise[..., 1]], axis=-1)

records, summary = bin_energies([f"src{i:03d}" for i in range(500)], logits)
print("mean fit:", summary["mean_fit"])
print("std fit: ", summary["std_fit"])

labels = np.array([r.mean_interval for r in records])
for iv in range(1, labels.max() + 1):
    e = np.array([r.energy_mean for r in records])[labels == iv]
    print("mean interval %d: %3d sources, energy %.2f..%.2f" % (iv, e.size, e.min(), e.max()))

# labels only depend on log-space z-scores, so rescaling changes nothing
v = np.array([r.energy_std for r in records])
print("std labels unchanged after x10:", np.array_equal(
    np.floor(fit_lognormal(v).zscore(v)), np.floor(fit_lognormal(10 * v).zscore(10 * v))))
