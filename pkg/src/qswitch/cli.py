"""Command-line pipeline: abstract, synth, determinize, simulate, verify, info.

Exit codes: 0 success (including out-of-domain simulations), 2 precision
condition failure, 3 configuration or file-format errors, 4 determinization
verification failure, 5 closed-loop guarantee violation.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .abstraction import OUT_IDX, build_abstraction, write_qsa1
from .config import ProblemConfig, canonical_text, load_config
from .determinize import (
    TreeMeta,
    determinize_reach,
    determinize_safety,
    read_qst1,
    verify_determinization,
    write_qst1,
)
from .errors import (
    ConfigError,
    EmptySpecError,
    FormatError,
    GuaranteeError,
    PrecisionError,
    QswitchError,
    VerificationError,
)
from .lattice import Box, Lattice, RelationBall, cell_range, inner_cell_range
from .runtime import (
    INF,
    Controller,
    entry_time,
    run_closed_loop,
    write_trajectory_csv,
)
from .synthesis import (
    INF_TIME,
    contract_box,
    read_qsc1,
    refine_reach,
    refine_safety,
    synthesize_reach,
    synthesize_safety,
    write_qsc1,
)
from .system import (
    SamplingParams,
    check_precision,
    estimate_kappa,
    precision_threshold,
    validate_certificate,
)

EXIT_OK = 0
EXIT_PRECISION = 2
EXIT_CONFIG = 3
EXIT_VERIFY = 4
EXIT_GUARANTEE = 5


def _threads(args, cfg: ProblemConfig) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("QSWITCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"bad QSWITCH_THREADS value {env!r}") from None
    return cfg.threads


def _prepare(cfg: ProblemConfig):
    """Resolve eta, gate on the precision condition, and lay out cell ranges."""
    params = cfg.params()
    if not check_precision(cfg.certificate, params):
        need = precision_threshold(cfg.certificate, params.tau, params.eta)
        raise PrecisionError(
            f"epsilon {params.epsilon} below the precision threshold {need:.6g}"
        )
    lat = cfg.lattice()
    spec_cells = cell_range(lat, cfg.ys)
    safe_cells = cell_range(lat, contract_box(cfg.ys, params.epsilon))
    target_cells = None
    if cfg.kind == "reach":
        target_cells = cell_range(lat, contract_box(cfg.yt, params.epsilon))
    return lat, params, spec_cells, safe_cells, target_cells


def cmd_abstract(args) -> int:
    cfg = load_config(args.config)
    lat, params, spec_cells, safe_cells, target_cells = _prepare(cfg)
    if cfg.eta is None:
        print(f"eta auto-resolved to {params.eta!r} "
              "(bundled examples pin finer values; auto is the coarsest admissible)")
    model = build_abstraction(
        cfg.system, lat, cfg.ys, params.tau, substeps=cfg.substeps, threads=_threads(args, cfg)
    )
    out_frac = float((model.succ == OUT_IDX).mean())
    print(f"cells {spec_cells.count} ({' x '.join(map(str, spec_cells.shape))})"
          f" safe {safe_cells.count}" + (f" target {target_cells.count}" if target_cells else ""))
    print(f"modes {model.n_modes} out-fraction {out_frac:.4f}")
    if args.dump:
        write_qsa1(model, args.dump)
        print(f"wrote {args.dump}")
    return EXIT_OK


def synthesize_from_config(cfg: ProblemConfig, threads: int = 1, refine_mode: str = "full",
                           engine: str = "auto"):
    """Full synthesis pipeline; returns (refined controller, diagnostics dict)."""
    lat, params, spec_cells, safe_cells, target_cells = _prepare(cfg)
    model = build_abstraction(
        cfg.system, lat, cfg.ys, params.tau, substeps=cfg.substeps, threads=threads
    )
    if cfg.kind == "safety":
        sres = synthesize_safety(model, safe_cells)
        refined = refine_safety(sres, lat, cfg.certificate, params, spec_cells, engine=engine)
        abstract_result = sres
    else:
        rres = synthesize_reach(model, safe_cells, target_cells)
        refined = refine_reach(
            rres, lat, cfg.certificate, params, spec_cells, mode=refine_mode, engine=engine
        )
        abstract_result = rres
    info = {
        "lat": lat,
        "params": params,
        "model": model,
        "abstract": abstract_result,
        "spec_cells": spec_cells,
        "safe_cells": safe_cells,
        "target_cells": target_cells,
    }
    return refined, info


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    refined, info = synthesize_from_config(
        cfg, threads=_threads(args, cfg), refine_mode=args.refine_mode
    )
    write_qsc1(args.out, refined, cfg.meta())
    dom = int((refined.K != 0).sum())
    print(f"dom(K) {dom} of {refined.cells.count} cells")
    if refined.J_tilde is not None:
        finite = refined.J_tilde[refined.J_tilde != INF_TIME]
        if finite.size:
            counts = np.bincount(finite)
            hist = " ".join(f"{v}:{c}" for v, c in enumerate(counts) if c)
            print(f"J~ finite on {finite.size} cells, max {int(finite.max())}")
            print(f"J~ histogram {hist}")
        else:
            print("J~ infinite everywhere")
    print(f"wrote {args.out}")
    return EXIT_OK


def _tree_target_cells(ctrl_cells_n: int, meta_eta: str, meta_yt) -> tuple:
    lat = Lattice(ctrl_cells_n, float(meta_eta))
    yt = Box(np.array([float(v) for v in meta_yt[0::2]]),
             np.array([float(v) for v in meta_yt[1::2]]))
    return lat, yt, inner_cell_range(lat, yt)


def cmd_determinize(args) -> int:
    ctrl, meta = read_qsc1(args.controller)
    if ctrl.kind == "reach":
        _, _, target = _tree_target_cells(ctrl.cells.n, meta.eta, meta.yt)
        tree = determinize_reach(ctrl, target_cells=target)
        report = verify_determinization(tree, ctrl, target_cells=target)
    else:
        tree = determinize_safety(ctrl)
        report = verify_determinization(tree, ctrl)
    if not report.ok:
        print(f"determinization invalid: {report.violations} of {report.total} cells "
              f"(first {list(report.examples)})", file=sys.stderr)
        return EXIT_VERIFY
    write_qst1(args.out, tree, TreeMeta(kind=ctrl.kind, eta=meta.eta, ys=meta.ys, yt=meta.yt))
    ratio = ctrl.cells.count / tree.node_count
    print(f"nodes {tree.node_count} depth {tree.depth()} compression {ratio:.0f}x")
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_controller(cfg: ProblemConfig, path: str, array_path: str | None) -> Controller:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    refined = None
    tree = None
    if magic == b"QST1":
        tree, tmeta = read_qst1(path)
        kind, eta_s, ys_s, yt_s = tmeta.kind, tmeta.eta, tmeta.ys, tmeta.yt
        if array_path:
            refined, _ = read_qsc1(array_path)
    elif magic == b"QSC1":
        refined, cmeta = read_qsc1(path)
        kind, eta_s, ys_s, yt_s = refined.kind, cmeta.eta, cmeta.ys, cmeta.yt
    else:
        raise FormatError(f"{path}: unknown controller format")
    eta = float(eta_s)
    n = len(ys_s) // 2
    lat = Lattice(n, eta)
    ys = Box(np.array([float(v) for v in ys_s[0::2]]), np.array([float(v) for v in ys_s[1::2]]))
    yt = None
    if yt_s is not None:
        yt = Box(np.array([float(v) for v in yt_s[0::2]]), np.array([float(v) for v in yt_s[1::2]]))
    params = SamplingParams(tau=cfg.tau, eta=eta, epsilon=cfg.epsilon)
    return Controller(kind=kind, lat=lat, params=params, ys=ys, yt=yt, refined=refined, tree=tree)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    ctrl = _load_controller(cfg, args.controller, args.array)
    x0 = np.array([float(tok) for tok in args.x0.split(",")])
    if x0.shape != (cfg.n,):
        raise ConfigError(f"x0 needs {cfg.n} coordinates")
    traj = run_closed_loop(cfg.system, ctrl, x0, args.steps, substeps=cfg.substeps)
    if args.out:
        write_trajectory_csv(args.out, traj)
        print(f"wrote {args.out}")

    dom_known = ctrl.refined is not None
    if ctrl.kind == "safety":
        if dom_known and not ctrl.enabled_set(x0):
            print("verdict OUT-OF-DOMAIN (start outside dom(C))")
            return EXIT_OK
        if not dom_known and not ctrl.ys.contains(x0):
            print("verdict OUT-OF-DOMAIN (start outside the safe box)")
            return EXIT_OK
        blocked = traj.steps < args.steps
        inside = bool(ctrl.ys.contains(traj.states).all())
        if not blocked and inside:
            print(f"verdict SAFE ({traj.steps} steps inside the safe box)")
            return EXIT_OK
        why = "blocked" if blocked else "left the safe box"
        if dom_known:
            print(f"verdict UNSAFE ({why} from a dom(C) start)")
            return EXIT_GUARANTEE
        print(f"verdict EXITED ({why}; start not known to be in dom(C), no guarantee applies)")
        return EXIT_OK

    t = entry_time(traj, ctrl.ys, ctrl.yt)
    if dom_known and ctrl.refined.J_tilde is not None:
        bound = ctrl.bound(x0)
        if bound is INF:
            print(f"verdict NO-BOUND (J~ infinite at start); entry {t}")
            return EXIT_OK
        if t <= bound:
            print(f"verdict REACHED entry {int(t)} <= bound {int(bound)}")
            return EXIT_OK
        print(f"verdict VIOLATION entry {t} > bound {int(bound)}")
        return EXIT_GUARANTEE
    print(f"entry {t} (no entry-time bound available; pass --array to check)")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    report = validate_certificate(cfg.system, cfg.certificate, cfg.ys, args.samples)
    for name, res in (
        ("sandwich-lower", report.sandwich_lower),
        ("sandwich-upper", report.sandwich_upper),
        ("gamma-bound", report.gamma_bound),
    ):
        print(f"certificate {name}: {'PASS' if res.ok else 'FAIL'} "
              f"worst margin {res.worst_margin:.3g}")
    params = cfg.params()
    need = precision_threshold(cfg.certificate, params.tau, params.eta)
    ok = check_precision(cfg.certificate, params)
    print(f"precision: {'PASS' if ok else 'FAIL'} threshold {need:.6g} epsilon {params.epsilon}")
    code = EXIT_OK if ok else EXIT_PRECISION
    if args.controller and args.tree:
        ctrl, meta = read_qsc1(args.controller)
        tree, _ = read_qst1(args.tree)
        if ctrl.kind == "reach":
            _, _, target = _tree_target_cells(ctrl.cells.n, meta.eta, meta.yt)
            det = verify_determinization(tree, ctrl, target_cells=target)
        else:
            det = verify_determinization(tree, ctrl)
        print(f"determinization: {'PASS' if det.ok else 'FAIL'} "
              f"{det.violations} violations of {det.total} cells")
        if not det.ok:
            return EXIT_VERIFY
    return code


def cmd_info(args) -> int:
    cfg = load_config(args.config)
    print(f"spec {cfg.kind} n {cfg.n} modes {cfg.system.n_modes}")
    print(f"ys {cfg.strings['ys']}" + (f"  yt {cfg.strings['yt']}" if cfg.yt is not None else ""))
    eta, eta_s = cfg.resolve_eta()
    print(f"tau {cfg.tau!r} eta {eta_s} epsilon {cfg.epsilon!r}")
    need = precision_threshold(cfg.certificate, cfg.tau, eta)
    ok = cfg.epsilon >= need
    print(f"precision threshold {need:.6g}: {'PASS' if ok else 'FAIL'}")
    try:
        est = estimate_kappa(cfg.system)
        print(f"kappa {cfg.certificate.kappa!r} (estimate for M=I: {est:.6g})")
    except QswitchError as exc:
        print(f"kappa {cfg.certificate.kappa!r} (estimate unavailable: {exc})")
    lat = cfg.lattice()
    spec_cells = cell_range(lat, cfg.ys)
    print(f"spec cells {spec_cells.count} ({' x '.join(map(str, spec_cells.shape))})")
    try:
        params = cfg.params()
        if ok:
            ball = RelationBall(lat, cfg.certificate, params)
            print(f"relation ball {len(ball.offsets)} offsets"
                  f" (euclidean {ball.is_euclidean})")
    except ValueError:
        pass
    print("canonical config:")
    sys.stdout.write(canonical_text(cfg))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qswitch",
        description="Quantized switching-controller synthesis and decision-tree compression.",
    )
    sub = ap.add_subparsers(required=True)

    p = sub.add_parser("abstract", help="build the lattice abstraction and report its size")
    p.add_argument("config")
    p.add_argument("--dump", help="write the successor table (QSA1) here")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("synth", help="synthesize and refine a controller (QSC1)")
    p.add_argument("config")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--refine-mode", choices=("full", "fast"), default="full",
                   help="reach refinement: exact minimizer union, or first-minimizer subset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("determinize", help="compress a controller into a decision tree (QST1)")
    p.add_argument("controller")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_determinize)

    p = sub.add_parser("simulate", help="closed-loop run with verdict")
    p.add_argument("config")
    p.add_argument("controller", help="QSC1 or QST1 file")
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("-o", "--out", help="trajectory CSV path")
    p.add_argument("--array", help="QSC1 file supplying dom/J~ when simulating a tree")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="certificate, precision, and determinization checks")
    p.add_argument("config")
    p.add_argument("--controller", help="QSC1 file")
    p.add_argument("--tree", help="QST1 file")
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("info", help="summarize a configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_info)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except PrecisionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except (ConfigError, EmptySpecError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except GuaranteeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARANTEE


if __name__ == "__main__":
    sys.exit(main())
