"""All four solvers on the small two-interval tolling problem.

Runs the feedback controller, the surrogate loop, the partition search,
and the stochastic-approximation solver through the benchmark harness at
the same evaluation budget, then prints the aligned comparison table.
On this small fixture every solver should land in the same ballpark,
well under the non-tolling objective.
"""

import argparse
import tempfile

import numpy as np

import sbopt.bench as bench


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--budget", type=int, default=100)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    parser.add_argument("--out", default=None,
                        help="output directory (default: a temp dir)")
    args = parser.parse_args()

    out_dir = args.out or tempfile.mkdtemp(prefix="simple_shootout_")
    problem = bench.get_problem("simple")
    baseline = problem.objective(np.zeros(2), 0)
    baseline = baseline[0] if isinstance(baseline, tuple) else baseline
    print(f"non-tolling objective: {baseline:.4f}\n")

    reports = []
    for solver in ("pi", "rk", "spsa", "direct"):
        cfg = bench.ExperimentConfig(problem="simple", solver=solver,
                                     budget=args.budget,
                                     seeds=tuple(args.seeds),
                                     output_dir=out_dir)
        reports.append(bench.run_experiment(cfg))

    comparison = bench.compare(*reports)
    print(comparison.final_table())
    print(f"\nreports and traces in {out_dir}")


if __name__ == "__main__":
    main()
