"""AUC, DeLong confidence intervals, and the paired DeLong test.

Two classifiers score the same cohort: one informative, one barely better
than chance. We compute each model's AUC with a 95% CI and then ask whether
the difference is significant, accounting for the correlation induced by
scoring the same cases.
"""

import numpy as np

from hadcl.metrics import ScoredOutcomes, auc, delong_ci, delong_paired_test

rng = np.random.default_rng(42)
n = 400
labels = np.array([1] * (n // 2) + [0] * (n // 2))

strong = labels * 1.2 + rng.normal(0, 1.0, n)   # clearly informative
weak = labels * 0.25 + rng.normal(0, 1.0, n)    # barely informative

for name, scores in (("strong", strong), ("weak", weak)):
    est = delong_ci(ScoredOutcomes(scores, labels))
    lo, hi = est.ci95
    print(f"{name:6s}  AUC {est.auc:.4f}   95% CI [{lo:.4f}, {hi:.4f}]   "
          f"variance {est.variance:.2e}")

p = delong_paired_test(ScoredOutcomes(strong, labels),
                       ScoredOutcomes(weak, labels))
print(f"\npaired DeLong test strong vs weak: p = {p:.3g}")

# sanity: a model against itself is never significant
p_self = delong_paired_test(ScoredOutcomes(strong, labels),
                            ScoredOutcomes(strong, labels))
print(f"paired DeLong test strong vs itself: p = {p_self:.3g}")

# the paired test is far more sensitive than comparing unpaired CIs when
# models are correlated: shift one model by a small amount and compare
shifted = strong + rng.normal(0, 0.15, n)
est_a = delong_ci(ScoredOutcomes(strong, labels))
est_b = delong_ci(ScoredOutcomes(shifted, labels))
p_pair = delong_paired_test(ScoredOutcomes(strong, labels),
                            ScoredOutcomes(shifted, labels))
print(f"\ncorrelated pair: AUCs {est_a.auc:.4f} vs {est_b.auc:.4f}, "
      f"overlapping CIs, paired p = {p_pair:.3g}")
