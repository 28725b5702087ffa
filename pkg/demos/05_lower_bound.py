"""
Hard families for the minimax lower bound
=========================================

Sign packings of {-1, +1}^ell turn into well-separated source-condition
truths whose two-atom data distributions are close in KL divergence.
"""

import json
from pathlib import Path

import numpy as np

from rkhs_tikhonov import build_hard_family, pack_signs
from rkhs_tikhonov.cli import lower_bound_from_config, lower_decay_constants

pk = pack_signs(48, seed=0)
print(f"packing ell=48: {pk.N} vectors after {pk.draws} draws, certified={pk.certify()}")

cfg = json.loads((Path(__file__).resolve().parents[1] / "configs" / "lower_bound.json").read_text())
pb, phi, R, eps, nfit, seed = lower_bound_from_config(cfg)
alpha, b = lower_decay_constants(pb.op, pb.kernel, pb.fbar, nfit)
print(f"lower decay constants: alpha={alpha:.3f}, b={b:.3f}")

for e in eps:
    fam = build_hard_family(pb.op, pb.kernel, pb.fbar, phi, R, e, (alpha, b), seed=seed)
    off = ~np.eye(fam.N, dtype=bool)
    print(f"eps={e}: ell={fam.ell} N={fam.N} upsilon={fam.upsilon:.4f} J={fam.J:.2f}")
    print(f"  min separation / eps = {fam.pairwise_h1_gaps[off].min() / e:.3f}")
    print(f"  max KL = {fam.kl_matrix[off].max():.2e}, chain bound = {fam.chain_bound:.2e}")
    print(f"  checks: {fam.checks()}")
