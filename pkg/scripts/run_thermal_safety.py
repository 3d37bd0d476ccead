#!/usr/bin/env python3
"""End-to-end safety experiment on the two-room thermal benchmark.

Synthesizes the quantized safety controller for [20, 22]^2, compresses it
into a decision tree, validates the determinization exhaustively, and runs
seeded closed-loop checks.  Artifacts land in --outdir.
"""

import argparse
import pathlib
import time

import numpy as np

from qswitch import thermal
from qswitch.cli import synthesize_from_config
from qswitch.determinize import TreeMeta, determinize_safety, verify_determinization, write_qst1
from qswitch.runtime import Controller, monte_carlo_validate, run_closed_loop, write_trajectory_csv
from qswitch.synthesis import write_qsc1


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="out/thermal_safety")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    cfg = thermal.safety_config()
    t0 = time.perf_counter()
    refined, info = synthesize_from_config(cfg, threads=args.threads)
    t1 = time.perf_counter()
    dom = int((refined.K != 0).sum())
    print(f"synthesis+refinement {t1 - t0:.1f}s  dom(K) {dom} of {refined.cells.count}")
    write_qsc1(outdir / "controller.qsc", refined, cfg.meta())

    tree = determinize_safety(refined)
    report = verify_determinization(tree, refined)
    assert report.ok, report
    meta = cfg.meta()
    write_qst1(outdir / "controller.qst", tree, TreeMeta("safety", meta.eta, meta.ys))
    ratio = refined.cells.count / tree.node_count
    print(f"tree {tree.node_count} nodes, depth {tree.depth()}, compression {ratio:.0f}x, "
          f"0 violations of {report.total}")

    ctrl = Controller(kind="safety", lat=info["lat"], params=info["params"], ys=cfg.ys,
                      refined=refined, tree=tree)
    traj = run_closed_loop(cfg.system, ctrl, np.array([21.0, 21.0]), args.steps)
    write_trajectory_csv(outdir / "trajectory.csv", traj)
    inside = bool(cfg.ys.contains(traj.states).all())
    print(f"run from (21, 21): {traj.steps} steps, inside safe box: {inside}")

    mc = monte_carlo_validate(cfg.system, ctrl, n_runs=args.runs, steps=args.steps, seed=args.seed)
    print(f"monte carlo: {mc.runs} runs, {mc.violations} violations, "
          f"worst excursion {mc.worst_excess:.3g}")
    print(f"artifacts in {outdir}")


if __name__ == "__main__":
    main()
