"""Split a corpus over three in-process HTTP shards and fan a query out to them.

Run: python3 demos/sharded_service.py
"""

from contextlib import ExitStack

from lshensemble.corpus import synthetic_corpus
from lshensemble.ensemble import Ensemble, EnsembleConfig
from lshensemble.service import BackgroundServer, ShardSet, fanout_query, split_round_robin

corpus = synthetic_corpus(3000, alpha=2.0, min_size=10, max_size=5000, seed=9)
config = EnsembleConfig(num_partitions=8)
shards = [Ensemble.bootstrap(part, config) for part in split_round_robin(corpus, 3)]
mono = Ensemble.bootstrap(corpus, config)

with ExitStack() as stack:
    servers = [stack.enter_context(BackgroundServer(s)) for s in shards]
    shard_set = ShardSet.discover([s.url for s in servers])
    print("shards:", ", ".join(shard_set.endpoints), "fingerprint", shard_set.fingerprint)

    query = corpus[42]
    sig = mono.signature(query)
    fan = fanout_query(shard_set, sig, 0.7, len(query.values))
    local = set(mono.query(sig, 0.7, len(query.values)).candidates)
    print(f"query {query.id} ({len(query.values)} values) at t*=0.7")
    print(f"  fanout: {len(fan.candidates)} candidates, complete={fan.complete}")
    print(f"  monolith: {len(local)} candidates, overlap {len(local & fan.candidates)}")
    for url, secs in fan.latencies.items():
        print(f"  {url} answered in {secs * 1e3:.1f} ms")
