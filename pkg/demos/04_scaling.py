"""
Scoring time against cascade count
==================================

Pass a number of messages on the command line to go bigger; 21300 gives
about one million actions.
"""

import sys
import time

from psmdetect import ScoringConfig, SynthConfig, extract_cascades, generate, score_all

n_max = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1

# %%
print(f"{'messages':>8} {'actions':>9} {'pairs':>9} {'seconds':>8}")
for n in (n_max // 8, n_max // 4, n_max // 2, n_max):
    log, _ = generate(SynthConfig(n_users=50000, n_messages=n, seed=7))
    cascades = extract_cascades(log, 100, 0.5)
    t0 = time.perf_counter()
    scores = score_all(cascades, ScoringConfig(workers=workers))
    dt = time.perf_counter() - t0
    print(f"{n:8d} {len(log):9d} {len(scores.index):9d} {dt:8.2f}")
