# Three baseline estimators on data with known dimension.
import numpy as np

from dimscope import ManifoldSpec, sample_manifold
from dimscope.classical import (
    LpcaParams,
    MleParams,
    lpca_id_points,
    mle_id_aggregate,
    mle_id_points,
    ppca_id_global,
)

cube = sample_manifold(ManifoldSpec("k_cube", 10, 2, 2000, seed=0)).points

# nearest-neighbour MLE; small m is noisier and biased upward
for m in (5, 20):
    agg = mle_id_aggregate(mle_id_points(cube, MleParams(m=m)))
    print("MLE m=%-2d  %.3f  (%d points, %d excluded)" % (m, agg.estimate, agg.n_included, agg.n_excluded))

# local PCA counts eigenvalues above 5% of the largest
ks = np.array([e.k_hat for e in lpca_id_points(cube, LpcaParams(m=100))])
print("LPCA per-point counts:", dict(zip(*np.unique(ks, return_counts=True))))

# PPCA is global: one q for the whole set, chosen by BIC
plane = sample_manifold(ManifoldSpec("subspace_gaussian", 6, 2, 500, noise_sigma=0.01, seed=0)).points
res = ppca_id_global(plane)
for q, (ll, bic) in enumerate(zip(res.log_likelihood, res.bic)):
    print("q=%d  loglik=%10.1f  bic=%10.1f%s" % (q, ll, bic, "  <-" if q == res.q_star else ""))

# curved data: local methods see the sheet, PPCA sees the ambient span
roll = sample_manifold(ManifoldSpec("swiss_roll", 3, 2, 2000, seed=1)).points
print("swiss roll  MLE %.2f  PPCA q*=%d" % (mle_id_aggregate(mle_id_points(roll)).estimate, ppca_id_global(roll).q_star))
