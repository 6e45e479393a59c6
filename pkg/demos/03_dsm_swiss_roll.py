# Train a small score network on a swiss roll and read the dimension off it.
# Takes about a minute on one CPU core with the default 20000 steps.
import sys

import numpy as np

from dimscope import DiffusionIdParams, DsmConfig, ManifoldSpec, sample_manifold
from dimscope.diffusion_id import batch_estimate
from dimscope.scoremodel import dsm_loss, train_dsm_score_net

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
roll = sample_manifold(ManifoldSpec("swiss_roll", 3, 2, 5000, seed=0))
net = train_dsm_score_net(roll.points, DsmConfig(steps=steps))

trace = np.array(net.loss_trace)
for a in range(0, steps, max(steps // 5, 1)):
    print("steps %5d-%5d  loss %.3f" % (a, a + steps // 5, trace[a : a + steps // 5].mean()))
print("held-in DSM loss (float64 forward): %.3f" % dsm_loss(net, roll.points.subset(range(1000)), net.config.schedule))

rows = sorted(np.random.default_rng(1).choice(5000, 200, replace=False))
ests = batch_estimate(net, roll.points.subset(rows), DiffusionIdParams(sigma_t0=0.05, K=64))
ks = [e.k_hat for e in ests]
print("k_hat counts over 200 points:", dict(zip(*np.unique(ks, return_counts=True))))
print("example spectrum:", np.round(ests[0].spectrum, 2))

# On a surface in R^3 a blank network also gives k_hat = 2 (all columns point
# the same way, so the matrix is rank one). The real test is whether the
# dominant score direction follows the roll's normal.
x = roll.points.data[rows]
t = np.hypot(x[:, 0], x[:, 2])
normal = np.stack([np.sin(t) + t * np.cos(t), np.zeros_like(t), -(np.cos(t) - t * np.sin(t))], axis=1)
normal /= np.linalg.norm(normal, axis=1, keepdims=True)
score = net.evaluate(x, 0.05)
cos = np.abs(np.sum(score * normal, axis=1)) / np.linalg.norm(score, axis=1)
print("median |cos(score, normal)| at the data: %.3f" % np.median(cos))
