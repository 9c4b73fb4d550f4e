"""
Why the cut-offs are calibrated
===============================

The published thresholds (0.7 floor, 0.9 seed, 7 / 9 for the relative
metric) were tuned on millions of cascades. On a 500-cascade synthetic log
the score ranges are much narrower. Here we compare the two classes per
metric, then count what the absolute settings select.
"""

import numpy as np

from psmdetect import SynthConfig, extract_cascades, generate, score_all
from psmdetect.pipeline import MethodSettings, run_methods

cfg = SynthConfig(seed=42)
log, truth = generate(cfg)
cascades = extract_cascades(log, cfg.viral_threshold, 0.5)
scores = score_all(cascades)

# %%
# Quantiles of each metric, split by ground truth.
qs = (0.1, 0.5, 0.9, 0.98)
for m in ("km", "rel", "nb", "wnb"):
    values = scores.metric(m)
    for kind in ("psm", "normal"):
        v = np.array([x for u, x in values.items() if truth.kind[u] == kind])
        cells = " ".join(f"{np.quantile(v, q):9.3g}" for q in qs) if len(v) else "-"
        print(f"{m:4} {kind:7} n={len(v):4d}  {cells}")

# %%
# Mean eps_wnb of PSM accounts against normal ones: the gap drives detection.
wnb = scores.metric("wnb")
for kind in ("psm", "normal"):
    print(kind, np.mean([x for u, x in wnb.items() if truth.kind[u] == kind]))

# %%
# With the absolute settings most selections come back empty on this log.
run = run_methods(cascades, scores, MethodSettings(calibration="absolute"))
for name, sel in run.selections.items():
    print(f"{name:14} {len(sel):4d} selected")
