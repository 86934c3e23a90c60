"""A two-seed gesture benchmark with the phase ablation, written to ./demo-bench.

Takes a minute or two. Run with ``python demos/small_benchmark.py``.
"""

import json

from sdp.bench import BenchConfig, run_benchmark, write_reports
from sdp.pipeline import DatasetSpec


def main():
    cfg = BenchConfig(task="gesture", seeds=(992, 863), repeats=3, variants=("full", "no-phase"),
                      dataset=DatasetSpec("gesture", n_users=8, sessions_per_class=2),
                      test_users=2, efficiency_repeats=1)
    result = run_benchmark(cfg, log=print)
    paths = write_reports(result, "demo-bench")
    summary = result.summary()
    for variant, metrics in summary["variants"].items():
        s = metrics["top1"]
        print(f"{variant:9s} top1 {s['mean']:.3f} +/- {s['std']:.3f} "
              f"(95% CI {s['ci95_low']:.3f}..{s['ci95_high']:.3f})")
    print(json.dumps(summary["comparisons"], indent=2))
    print("label efficiency:", [(r["fraction"], round(r["mean"], 3)) for r in result.efficiency])
    print("reports:", ", ".join(sorted(paths)))


if __name__ == "__main__":
    main()
