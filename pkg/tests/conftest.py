"""Shared fixtures: the thermal benchmark pipelines (built once per session)
and a family of tiny hand-checkable abstractions for oracle tests."""

import time

import numpy as np
import pytest

from qswitch import thermal
from qswitch.abstraction import SymbolicModel, build_abstraction
from qswitch.cli import synthesize_from_config
from qswitch.determinize import determinize_reach, determinize_safety
from qswitch.lattice import Box, CellRange, Lattice, cell_range, inner_cell_range
from qswitch.runtime import Controller
from qswitch.system import LyapunovCertificate, ModeDynamics, PowerKInf, SamplingParams, SwitchedSystem


@pytest.fixture(scope="session")
def thermal_sys():
    return thermal.thermal_system()


@pytest.fixture(scope="session")
def thermal_cert():
    return thermal.thermal_certificate()


@pytest.fixture(scope="session")
def safety_setup():
    """Full paper-scale safety pipeline, built once."""
    cfg = thermal.safety_config()
    t0 = time.perf_counter()
    refined, info = synthesize_from_config(cfg, threads=1)
    synth_seconds = time.perf_counter() - t0
    tree = determinize_safety(refined)
    ctrl = Controller(
        kind="safety", lat=info["lat"], params=info["params"], ys=cfg.ys,
        refined=refined, tree=tree,
    )
    return dict(cfg=cfg, refined=refined, tree=tree, ctrl=ctrl,
                synth_seconds=synth_seconds, **info)


@pytest.fixture(scope="session")
def reach_setup():
    """Full paper-scale reach pipeline, built once."""
    cfg = thermal.reach_config()
    t0 = time.perf_counter()
    refined, info = synthesize_from_config(cfg, threads=1)
    synth_seconds = time.perf_counter() - t0
    target_inner = inner_cell_range(info["lat"], cfg.yt)
    tree = determinize_reach(refined, target_cells=target_inner)
    ctrl = Controller(
        kind="reach", lat=info["lat"], params=info["params"], ys=cfg.ys, yt=cfg.yt,
        refined=refined, tree=tree,
    )
    return dict(cfg=cfg, refined=refined, tree=tree, ctrl=ctrl, target_inner=target_inner,
                synth_seconds=synth_seconds, **info)


# ---------------------------------------------------------------------------
# tiny fixture systems (<= 500 cells) with hand-checkable successor tables


def box_of(lat: Lattice, rng: CellRange) -> Box:
    """A box whose cell image is exactly rng (center to center)."""
    return Box(rng.kmin * lat.spacing, rng.kmax * lat.spacing)


def table_model(lat: Lattice, rng: CellRange, succ, tau: float = 1.0) -> SymbolicModel:
    succ = np.asarray(succ, dtype=np.int32)
    assert succ.shape[1] == rng.count
    return SymbolicModel(lat=lat, working_box=box_of(lat, rng), domain=rng, tau=tau, succ=succ)


def shift_table(rng: CellRange, deltas) -> np.ndarray:
    """Successor table shifting every cell by an integer offset per mode."""
    cells = rng.all_cells()
    rows = []
    for d in deltas:
        nxt = cells + np.asarray(d, dtype=np.int64)
        inside = rng.contains(nxt)
        flat = np.where(inside, rng.ravel(np.where(inside[:, None], nxt, rng.kmin)), -1)
        rows.append(flat)
    return np.stack(rows).astype(np.int32)


def small_certificate(n: int, gamma_c: float = 1.0) -> LyapunovCertificate:
    square = PowerKInf(1.0, 2.0)
    return LyapunovCertificate(
        M=np.eye(n), alpha_lo=square, alpha_hi=square,
        gamma=PowerKInf(gamma_c, 2.0), kappa=1.0,
    )


def small_params(lat: Lattice, radius_cells: float) -> SamplingParams:
    """Parameters whose relation ball has the given radius in cell units
    (and which pass the precision condition for small_certificate)."""
    return SamplingParams(tau=1.0, eta=lat.eta, epsilon=lat.eta + radius_cells * lat.spacing)


def _fixture_static():
    lat = Lattice(2, 0.5)
    rng = CellRange([0, 0], [4, 4])
    model = table_model(lat, rng, shift_table(rng, [(0, 0), (0, 0)]))
    safe = CellRange([0, 0], [4, 4])
    target = CellRange([2, 2], [2, 2])
    return model, safe, target


def _fixture_drift1d():
    lat = Lattice(1, 0.5)
    rng = CellRange([0], [9])
    model = table_model(lat, rng, shift_table(rng, [(1,)]))
    return model, CellRange([1], [8]), CellRange([8], [8])


def _fixture_pm1d():
    lat = Lattice(1, 0.5)
    rng = CellRange([-5], [5])
    model = table_model(lat, rng, shift_table(rng, [(1,), (-1,)]))
    return model, rng, CellRange([0], [0])


def _fixture_diag2d():
    lat = Lattice(2, 0.5)
    rng = CellRange([0, 0], [6, 6])
    model = table_model(lat, rng, shift_table(rng, [(1, 1), (-1, 0)]))
    return model, CellRange([1, 1], [5, 5]), CellRange([3, 3], [4, 4])


def _fixture_scramble2d():
    # irregular table: seeded successors, some deliberately OUT
    lat = Lattice(2, 0.5)
    rng = CellRange([0, 0], [5, 5])
    gen = np.random.default_rng(42)
    succ = gen.integers(0, rng.count, size=(2, rng.count)).astype(np.int32)
    succ[0, gen.random(rng.count) < 0.15] = -1
    succ[1, gen.random(rng.count) < 0.15] = -1
    model = table_model(lat, rng, succ)
    return model, rng, CellRange([2, 2], [3, 3])


def _fixture_contract1d():
    # affine pull toward 0 plus unit drift, through the real build path
    lat = Lattice(1, 0.5)
    s = lat.spacing
    sys_ = SwitchedSystem((
        ModeDynamics.affine([[-0.5]], [0.0]),
        ModeDynamics.affine([[0.0]], [s]),
    ))
    box = Box([-10 * s], [10 * s])
    model = build_abstraction(sys_, lat, box, tau=1.0)
    return model, model.domain, CellRange([0], [0])


SMALL_FIXTURES = {
    "static": _fixture_static,
    "drift1d": _fixture_drift1d,
    "pm1d": _fixture_pm1d,
    "diag2d": _fixture_diag2d,
    "scramble2d": _fixture_scramble2d,
    "contract1d": _fixture_contract1d,
}


@pytest.fixture(params=sorted(SMALL_FIXTURES))
def small_fixture(request):
    model, safe, target = SMALL_FIXTURES[request.param]()
    return request.param, model, safe, target
