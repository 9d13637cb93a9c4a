"""Why containment and not Jaccard: a two-column example, then an index query.

Run: python3 demos/containment_walkthrough.py
"""

from lshensemble.containment import conservative_jaccard_threshold, containment_to_jaccard
from lshensemble.ensemble import Ensemble, EnsembleConfig
from lshensemble.evaluation import ExactIndex
from lshensemble.minhash import Domain

provinces = Domain("Provinces", frozenset({"Alberta", "Ontario", "Manitoba"}))
locations = Domain("Locations", frozenset({
    "Illinois", "Chicago", "New York City", "New York", "Nova Scotia", "Halifax",
    "California", "San Francisco", "Seattle", "Washington", "Ontario", "Toronto",
}))
query = Domain("Q", frozenset({"Ontario", "Toronto"}))

exact = ExactIndex([provinces, locations])
print("containment of Q in each column:")
for d, t in zip([provinces, locations], exact.containment(query)):
    s = len(query.values & d.values) / len(query.values | d.values)
    print(f"  {d.id:10s} t={t:.2f}  jaccard={s:.3f}")
print("Jaccard ranks the small Provinces column first; containment ranks Locations first.\n")

q = len(query.values)
for x in (3, 12, 1000):
    print(f"t=0.5 as a Jaccard threshold for a size-{x} domain: {containment_to_jaccard(0.5, x, q):.4f}")
print("One Jaccard threshold cannot serve every size, so domains are grouped by size and\n"
      "each group uses its largest size u (the conversion is safe for everything smaller):")
for u in (12, 100, 1000):
    print(f"  u={u:5d}: s*={conservative_jaccard_threshold(0.5, u, q):.4f}")

index = Ensemble.bootstrap([provinces, locations], EnsembleConfig(num_partitions=2, min_size=1))
result = index.query(index.signature(query), 0.6, q)
print("\nindex query at t*=0.6 ->", result.candidates)
for d in result.diagnostics:
    print(f"  sizes [{d.lower},{d.upper}) u={d.upper_bound} s*={d.jaccard_threshold:.3f} b={d.b} r={d.r}")
