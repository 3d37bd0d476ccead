"""Closed-loop execution of quantized controllers and guarantee checks.

A controller is executed by quantizing the measured state and consulting
either the set-valued array (lowest enabled mode, or a seeded random pick)
or the determinized tree.  Safety tree controllers block outside the safe
box; reach tree controllers fall back to mode 0 once the target is reached
(every mode is acceptable there, and no post-entry policy is imposed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .determinize import DecisionTree, lookup
from .errors import FormatError
from .lattice import Box, Lattice
from .synthesis import INF_TIME, RefinedController
from .system import SamplingParams, SwitchedSystem, discretize_affine, flow_rk4

INF = math.inf


class _BlockedType:
    __slots__ = ()

    def __repr__(self):
        return "BLOCKED"


BLOCKED = _BlockedType()


@dataclass(eq=False)
class Controller:
    """Executable controller: set-valued array, determinized tree, or both.

    When both are present the tree drives mode selection and the array
    supplies domain membership and entry-time bounds.
    """

    kind: str  # "safety" | "reach"
    lat: Lattice
    params: SamplingParams
    ys: Box
    yt: Box | None = None
    refined: RefinedController | None = None
    tree: DecisionTree | None = None
    selection: str = "lowest"  # "lowest" | "random", array variant only
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.kind not in ("safety", "reach"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.refined is None and self.tree is None:
            raise ValueError("controller needs an array or a tree")
        if self.kind == "reach" and self.yt is None:
            raise ValueError("reach controller needs a target box")
        if self.selection == "random" and self.rng is None:
            raise ValueError("random selection needs an rng")

    @property
    def n_modes(self) -> int:
        src = self.tree if self.tree is not None else self.refined
        return src.n_modes

    def enabled_set(self, x) -> frozenset:
        """Set-valued array evaluation K(Q(x)); empty outside the stored range."""
        if self.refined is None:
            raise ValueError("no set-valued array attached")
        q = self.lat.quantize(np.asarray(x, dtype=float))
        if not self.refined.cells.contains(q):
            return frozenset()
        mask = int(self.refined.K[self.refined.cells.ravel(q)])
        return frozenset(p for p in range(self.n_modes) if mask >> p & 1)

    def bound(self, x):
        """Entry-time bound at x (reach array controllers); INF outside."""
        if self.refined is None or self.refined.J_tilde is None:
            raise ValueError("no entry-time bounds attached")
        q = self.lat.quantize(np.asarray(x, dtype=float))
        if not self.refined.cells.contains(q):
            return INF
        j = int(self.refined.J_tilde[self.refined.cells.ravel(q)])
        return INF if j == INF_TIME else j


def step(ctrl: Controller, x):
    """Mode selected at state x, or BLOCKED when no mode is enabled."""
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("state must be finite")
    if ctrl.tree is not None:
        if ctrl.kind == "safety":
            if not ctrl.ys.contains(x):
                return BLOCKED
            return lookup(ctrl.tree, ctrl.lat.quantize(x))
        if ctrl.ys.contains(x) and not ctrl.yt.contains(x):
            return lookup(ctrl.tree, ctrl.lat.quantize(x))
        return 0  # target reached or unsafe start: every mode enabled, take the lowest
    enabled = ctrl.enabled_set(x)
    if not enabled:
        return BLOCKED
    if ctrl.selection == "random":
        return int(ctrl.rng.choice(sorted(enabled)))
    return min(enabled)


@dataclass(eq=False)
class Trajectory:
    """Closed-loop run sampled at instants k*tau.

    modes[i] is the mode selected at states[i] (-1 when blocked or not
    evaluated); states[i+1] is the flow of states[i] under modes[i].
    """

    tau: float
    states: np.ndarray  # (N+1, n)
    modes: np.ndarray  # (N+1,) int

    @property
    def steps(self) -> int:
        return len(self.states) - 1


class _Stepper:
    """Caches per-mode exact step maps for repeated closed-loop flows."""

    def __init__(self, sys: SwitchedSystem, tau: float, substeps: int | None):
        self.sys = sys
        self.tau = tau
        self.substeps = substeps
        self.maps = []
        for mode in sys.modes:
            if mode.kind == "affine":
                self.maps.append(discretize_affine(mode, tau))
            elif substeps is None:
                raise ValueError("generic modes require substeps")
            else:
                self.maps.append(None)

    def __call__(self, p: int, x: np.ndarray) -> np.ndarray:
        m = self.maps[p]
        if m is None:
            return flow_rk4(self.sys.modes[p], x, self.tau, self.substeps)
        Ad, bd = m
        return Ad @ x + bd


def run_closed_loop(
    sys: SwitchedSystem,
    ctrl: Controller,
    x0,
    steps: int,
    substeps: int | None = None,
) -> Trajectory:
    """Iterate measure -> select -> flow for `steps` sampling periods.

    Stops early (returning the prefix) at a blocked state.  The last row
    also records the selection at the final state.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    flow = _Stepper(sys, ctrl.params.tau, substeps)
    x = np.array(x0, dtype=float)
    states = [x.copy()]
    modes = []
    for _ in range(steps):
        u = step(ctrl, x)
        if u is BLOCKED:
            modes.append(-1)
            return Trajectory(ctrl.params.tau, np.array(states), np.array(modes, dtype=int))
        modes.append(int(u))
        x = flow(int(u), x)
        states.append(x.copy())
    u = step(ctrl, x)
    modes.append(-1 if u is BLOCKED else int(u))
    return Trajectory(ctrl.params.tau, np.array(states), np.array(modes, dtype=int))


def entry_time(traj: Trajectory, ys: Box, yt: Box):
    """First index K with states 0..K inside ys and state K inside yt; INF if none."""
    for k, x in enumerate(traj.states):
        if not ys.contains(x):
            return INF
        if yt.contains(x):
            return k
    return INF


@dataclass(frozen=True)
class ValidationReport:
    runs: int
    violations: int
    worst_excess: float  # safety: peak distance outside the safe box; reach: max(entry - bound)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def monte_carlo_validate(
    sys: SwitchedSystem,
    ctrl: Controller,
    n_runs: int,
    steps: int,
    seed: int,
    substeps: int | None = None,
) -> ValidationReport:
    """Seeded closed-loop property check over random admissible starts.

    Safety: initial states are drawn uniformly from the safe box and kept
    when the set-valued domain is nonempty there; a violation is any
    blocked step or any state leaving the safe box within `steps`.  Reach:
    initial states with a finite entry-time bound; a violation is a
    measured entry time above the bound (each run lasts exactly its bound).
    The set-valued array must be attached for domain membership.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if ctrl.refined is None:
        raise ValueError("validation needs the set-valued array for domain membership")
    rng = np.random.default_rng(seed)
    span = ctrl.ys.hi - ctrl.ys.lo
    violations = 0
    worst = -INF

    def draw(admissible) -> np.ndarray:
        for _ in range(100_000):
            x = ctrl.ys.lo + rng.random(ctrl.ys.n) * span
            if admissible(x):
                return x
        raise RuntimeError("could not sample an admissible initial state")

    for _ in range(n_runs):
        if ctrl.kind == "safety":
            x0 = draw(lambda x: bool(ctrl.enabled_set(x)))
            traj = run_closed_loop(sys, ctrl, x0, steps, substeps)
            blocked = traj.steps < steps
            inside = ctrl.ys.contains(traj.states)
            excess = float(
                np.maximum(ctrl.ys.lo - traj.states, traj.states - ctrl.ys.hi).max()
            )
            worst = max(worst, excess)
            if blocked or not inside.all():
                violations += 1
        else:
            x0 = draw(lambda x: ctrl.bound(x) is not INF)
            bound = ctrl.bound(x0)
            horizon = int(min(bound, steps))
            traj = run_closed_loop(sys, ctrl, x0, horizon, substeps)
            t = entry_time(traj, ctrl.ys, ctrl.yt)
            excess = t - bound if t is not INF else INF
            worst = max(worst, excess)
            if excess > 0:
                violations += 1
    return ValidationReport(runs=n_runs, violations=violations, worst_excess=worst)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """CSV rows `t,x1,...,xn,mode` with 12 significant digits."""
    n = traj.states.shape[1]
    header = "t," + ",".join(f"x{i + 1}" for i in range(n)) + ",mode"
    rows = [header]
    for i, (x, u) in enumerate(zip(traj.states, traj.modes)):
        t = i * traj.tau
        rows.append(f"{t:.12g}," + ",".join(f"{v:.12g}" for v in x) + f",{int(u)}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("t,"):
        raise FormatError("not a trajectory CSV")
    states, modes, times = [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        times.append(float(parts[0]))
        states.append([float(v) for v in parts[1:-1]])
        modes.append(int(parts[-1]))
    tau = times[1] - times[0] if len(times) > 1 else 1.0
    return Trajectory(tau, np.array(states), np.array(modes, dtype=int))
