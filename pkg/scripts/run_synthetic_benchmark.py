#!/usr/bin/env python3
"""Run both learners on both synthetic benchmarks and print a metric table.

Writes data + run artifacts under --workdir (default ./benchmark_runs) and
prints one row per (task, learner).  Takes a few minutes on a laptop CPU.
"""

import argparse
import time
from pathlib import Path

from facetzsl import experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="benchmark_runs")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    work = Path(args.workdir)
    imgc_paths = experiment.write_synthetic_imgc(work / "data_imgc", seed=args.seed)
    kgc_paths = experiment.write_synthetic_kgc(work / "data_kgc", seed=args.seed)

    rows = []
    for task, paths, factory in (
        ("imgc", imgc_paths, experiment.synthetic_imgc_config),
        ("kgc", kgc_paths, experiment.synthetic_kgc_config),
    ):
        for learner in ("gan", "gcn"):
            config = factory(paths, learner=learner, seed=args.seed)
            t0 = time.time()
            report = experiment.run(config, work / f"{task}_{learner}")
            m = dict(report.metrics)
            m["seconds"] = round(time.time() - t0, 1)
            rows.append((task, learner, m))

    print(f"\n{'task':<6} {'learner':<8} {'metric summary'}")
    for task, learner, m in rows:
        if task == "imgc":
            summary = (
                f"std_acc={m['standard_macro_acc']:.3f} "
                f"H={m['generalized_H']:.3f} "
                f"(seen={m['generalized_seen_acc']:.3f} "
                f"unseen={m['generalized_unseen_acc']:.3f})"
            )
        else:
            summary = (
                f"mrr={m['mrr']:.3f} hit@1={m['hits@1']:.3f} "
                f"hit@5={m['hits@5']:.3f} hit@10={m['hits@10']:.3f}"
            )
        print(f"{task:<6} {learner:<8} {summary}  [{m['seconds']}s]")


if __name__ == "__main__":
    main()
