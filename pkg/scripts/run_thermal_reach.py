#!/usr/bin/env python3
"""End-to-end reachability experiment on the two-room thermal benchmark.

Synthesizes the time-optimal quantized controller steering [17.5, 22.5]^2
into [20, 22]^2, compresses it into a decision tree, and checks measured
entry times against the synthesized bounds.  Artifacts land in --outdir.
"""

import argparse
import pathlib
import time

import numpy as np

from qswitch import thermal
from qswitch.cli import synthesize_from_config
from qswitch.determinize import TreeMeta, determinize_reach, verify_determinization, write_qst1
from qswitch.lattice import inner_cell_range
from qswitch.runtime import Controller, entry_time, monte_carlo_validate, run_closed_loop, write_trajectory_csv
from qswitch.synthesis import INF_TIME, write_qsc1


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="out/thermal_reach")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--x0", default="18.2,18.2")
    args = ap.parse_args()
    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    cfg = thermal.reach_config()
    t0 = time.perf_counter()
    refined, info = synthesize_from_config(cfg, threads=args.threads)
    t1 = time.perf_counter()
    finite = refined.J_tilde[refined.J_tilde != INF_TIME]
    print(f"synthesis+refinement {t1 - t0:.1f}s  J~ finite on {finite.size} "
          f"of {refined.cells.count} cells, max {int(finite.max())}")
    write_qsc1(outdir / "controller.qsc", refined, cfg.meta())

    target_inner = inner_cell_range(info["lat"], cfg.yt)
    tree = determinize_reach(refined, target_cells=target_inner)
    report = verify_determinization(tree, refined, target_cells=target_inner)
    assert report.ok, report
    meta = cfg.meta()
    write_qst1(outdir / "controller.qst", tree, TreeMeta("reach", meta.eta, meta.ys, meta.yt))
    ratio = refined.cells.count / tree.node_count
    print(f"tree {tree.node_count} nodes, depth {tree.depth()}, compression {ratio:.0f}x, "
          f"0 violations of {report.total}")

    ctrl = Controller(kind="reach", lat=info["lat"], params=info["params"], ys=cfg.ys,
                      yt=cfg.yt, refined=refined, tree=tree)
    x0 = np.array([float(tok) for tok in args.x0.split(",")])
    bound = ctrl.bound(x0)
    traj = run_closed_loop(cfg.system, ctrl, x0, int(bound))
    write_trajectory_csv(outdir / "trajectory.csv", traj)
    t = entry_time(traj, cfg.ys, cfg.yt)
    print(f"run from {tuple(x0)}: entry {t} <= bound {int(bound)}")

    mc = monte_carlo_validate(cfg.system, ctrl, n_runs=args.runs, steps=500, seed=args.seed)
    print(f"monte carlo: {mc.runs} runs, {mc.violations} violations, "
          f"worst entry excess {mc.worst_excess}")
    print(f"artifacts in {outdir}")


if __name__ == "__main__":
    main()
