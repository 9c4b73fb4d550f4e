"""
Two cascades, by hand
=====================

Two eight-user cascades over thirteen accounts. Each user acted once, at
ticks 1..8 in the order listed. We recover the related-user sets, the four
causality scores, and then run label propagation on a small hypergraph.
"""

from fractions import Fraction

from psmdetect import (ActionLog, ScoringConfig, SelectionConfig, build_related_index,
                       extract_cascades, prosel, score_all)

# %%
# Build the action log straight from tuples.
order = {"t1": "abcdefgh", "t2": "nmcahvst"}
records = [(u, m, k) for m, us in order.items() for k, u in enumerate(us, 1)]
log = ActionLog.from_records(records)
print(log)

# %%
# Both cascades have 8 >= 2 participants, so both are viral. With phi = 1/4
# a user is key when at least 2 participants come strictly after it, which
# leaves positions 1-6 of each cascade.
cascades = extract_cascades(log, viral_threshold=2, phi=Fraction(1, 4))
for c in cascades:
    print(c.message_id, "key users:", "".join(sorted(c.key_users)))

# %%
# Every cascade is viral, so rho = 1 and no user can beat it: prima facie
# filtering would empty everything. Switch it off for this example.
index = build_related_index(cascades, prima_facie=False)
for u in "abcdenmh":
    print(f"R({u}) = {{{', '.join(sorted(index.related_to(u)))}}}"
          f"   Q({u}) = {{{', '.join(sorted(index.preceding(u)))}}}")

# %%
# Pair statistics behind one entry: a precedes c only in t1, c precedes a in t2.
st = index.pair_stats("c", "a")
print(st)

# %%
# The score table. Users with an empty R have no eps_km / eps_rel, users
# with an empty Q have no eps_nb / eps_wnb.
scores = score_all(cascades, ScoringConfig(prima_facie=False))
print(f"{'user':4} {'km':>7} {'nb':>7} {'wnb':>7}")
for u in scores.users:
    row = scores.row(u)
    cells = ["-" if row["eps_" + m] is None else f"{row['eps_' + m]:.3f}"
             for m in ("km", "nb", "wnb")]
    print(f"{u:4} " + " ".join(c.rjust(7) for c in cells))

# %%
# Label propagation on three overlapping cascades. a and g seed (>= 0.9);
# b joins through the cascades shared with them, d joins one step later via
# b. c, e, h and i all sit below the 0.7 floor.
members = {"t1": "abg", "t2": "abcdeghi", "t3": "ehi"}
score = {"g": 0.92, "a": 0.90, "b": 0.82, "d": 0.73, "c": 0.65, "e": 0.65,
         "h": 0.62, "i": 0.62}
res = prosel({m: list(u) for m, u in members.items()}, score,
             SelectionConfig(theta=0.9, lam=0.1, min_score=0.7))
for layer, users in enumerate(res.layers()):
    print("iteration", layer, sorted(users))
print("H trace of t2:", res.h_trace["t2"])
