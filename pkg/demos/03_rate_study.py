"""
Convergence rates and saturation
================================

Monte Carlo study of the H1 and prediction errors against the sample size,
compared with the exponents br/(2br+b+1) and b/(2b+1). The configs are the
ones shipped in ``configs/`` and used by the acceptance suite.
"""

import json
from pathlib import Path

from rkhs_tikhonov import run_rate_study
from rkhs_tikhonov.cli import rate_study_from_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

for name in ("rate_study_desk.json", "rate_study_r1.json", "rate_study_r2.json"):
    rc, pb, _ = rate_study_from_config(json.loads((CONFIGS / name).read_text()))
    res = run_rate_study(rc, pb.op, pb.kernel, pb.fbar)
    print(f"\n{name}: r={rc.phi.r}, b={res.b:.3f}")
    for m, (e1, ep) in res.medians().items():
        print(f"  m={m:5d}  median H1 error {e1:.4f}  prediction error {ep:.4f}")
    print(f"  H1 slope {res.fitted_slope_h1:.3f} (theory {res.theoretical_h1:.3f}), "
          f"prediction slope {res.fitted_slope_pred:.3f} (theory {res.theoretical_pred:.3f})")

# %%
# For r > 1 the regularization bias cannot fall faster than lam, so the r=2
# slope stays close to the r=1 one rather than reaching the formula's value.
