"""Wall-clock and traffic figures for the simulator.

    python3 benchmarks/bench_simnet.py [--repeat N]

Prints one row per corpus scenario (first seed) and per throughput size.
"""
from __future__ import annotations

import argparse
import time

import yaml

from wavelace.harness import bundled_corpus, corpus_files, emit_metrics, parse_scenario, scenario_from_dict
from wavelace.simnet import run


def _throughput(n: int):
    d = yaml.safe_load((bundled_corpus() / "good-case-high.yaml").read_text(encoding="utf-8"))
    d["name"] = f"throughput-n{n}"
    d["constitution"] = {"participants": [f"p{i}" for i in range(1, n + 1)], "sigma": "5/8", "delta": 1}
    d["workload"] = [{"generate": {"every": 1, "start": 0, "stop": 90, "batch": n, "prefix": "load"}}]
    return scenario_from_dict(d).scenario


def _row(name, scenario, seed, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr = run(scenario, seed)
        best = min(best, time.perf_counter() - t0)
    m = emit_metrics(tr)
    mpt = "-" if m.messages_per_tx is None else f"{float(m.messages_per_tx):.3f}"
    print(f"{name:36s} {best * 1000:9.1f} {len(tr.records):9d} {m.total_messages:9d} {m.transactions:7d} {mpt:>8s}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'scenario':36s} {'best ms':>9s} {'records':>9s} {'messages':>9s} {'txs':>7s} {'msg/tx':>8s}")
    for path in corpus_files(bundled_corpus()):
        loaded = parse_scenario(path)
        _row(loaded.name, loaded.scenario, loaded.seeds[0], args.repeat)
    for n in (4, 7, 10, 13):
        _row(f"throughput n={n}", _throughput(n), 0, args.repeat)


if __name__ == "__main__":
    main()
