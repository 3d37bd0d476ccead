"""Per-mode successor tables of the time-sampled dynamics over a working box.

The table is the quantized step map restricted to the box's cell range:
succ(q, p) = quantize(flow(p, center(q), tau)), with the OUT sentinel for
successors leaving the range.  Exactly one entry exists per (cell, mode),
so the table is a deterministic, total transition map on its domain.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError, IntegrationOverflowError
from .lattice import Box, CellRange, Lattice, cell_range
from .system import SwitchedSystem, discretize_affine, flow_rk4

OUT_IDX = -1  # table encoding of OUT


class _OutType:
    __slots__ = ()

    def __repr__(self):
        return "OUT"


OUT = _OutType()


@dataclass(eq=False)
class SymbolicModel:
    lat: Lattice
    working_box: Box
    domain: CellRange
    tau: float
    succ: np.ndarray  # (n_modes, domain.count) int32; OUT_IDX where the flow leaves the box

    @property
    def n_modes(self) -> int:
        return self.succ.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, SymbolicModel)
            and self.lat == other.lat
            and self.working_box == other.working_box
            and self.domain == other.domain
            and self.tau == other.tau
            and np.array_equal(self.succ, other.succ)
        )


def build_abstraction(
    sys: SwitchedSystem,
    lat: Lattice,
    working_box: Box,
    tau: float,
    substeps: int | None = None,
    threads: int = 1,
) -> SymbolicModel:
    """Tabulate quantized time-tau successors for every cell and mode.

    Affine modes use the exact discretized step map; generic modes require
    `substeps` for fixed-step RK4.  Each entry depends only on its own cell,
    so chunked builds are bitwise identical for any thread count.

    Raises IntegrationOverflowError naming the first offending (cell, mode)
    if a flow diverges.
    """
    if sys.n != lat.n:
        raise ValueError("system and lattice dimensions differ")
    domain = cell_range(lat, working_box)
    cells = domain.all_cells()
    centers = cells * lat.spacing
    count = len(cells)

    steps = []
    for mode in sys.modes:
        if mode.kind == "affine":
            steps.append(discretize_affine(mode, tau))
        elif substeps is None:
            raise ValueError("generic modes require substeps")
        else:
            steps.append(None)

    succ = np.empty((sys.n_modes, count), dtype=np.int32)

    def fill(lo: int, hi: int) -> None:
        for p, mode in enumerate(sys.modes):
            if steps[p] is not None:
                Ad, bd = steps[p]
                nxt = centers[lo:hi] @ Ad.T + bd
            else:
                try:
                    nxt = flow_rk4(mode, centers[lo:hi], tau, substeps)
                except IntegrationOverflowError:
                    for row in range(lo, hi):  # locate the diverging cell
                        try:
                            flow_rk4(mode, centers[row], tau, substeps)
                        except IntegrationOverflowError:
                            raise IntegrationOverflowError(
                                f"non-finite successor at cell {tuple(cells[row])} mode {p}"
                            ) from None
                    raise
            bad = ~np.isfinite(nxt).all(axis=-1)
            if bad.any():
                where = cells[lo:hi][bad][0]
                raise IntegrationOverflowError(
                    f"non-finite successor at cell {tuple(where)} mode {p}"
                )
            k = lat.quantize(nxt)
            inside = domain.contains(k)
            flat = np.where(
                inside,
                domain.ravel(np.where(inside[:, None], k, domain.kmin)),
                OUT_IDX,
            )
            succ[p, lo:hi] = flat.astype(np.int32)

    if threads <= 1:
        fill(0, count)
    else:
        chunk = max(1, -(-count // (threads * 4)))
        bounds = [(i, min(i + chunk, count)) for i in range(0, count, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(fill, lo, hi) for lo, hi in bounds]:
                fut.result()

    return SymbolicModel(lat=lat, working_box=working_box, domain=domain, tau=tau, succ=succ)


def successor(model: SymbolicModel, q, p: int):
    """Table lookup: successor cell of q under mode p, or OUT."""
    if not 0 <= p < model.n_modes:
        raise DomainError(f"mode {p} out of range")
    q = np.asarray(q, dtype=np.int64)
    if not model.domain.contains(q):
        raise DomainError(f"cell {tuple(q)} outside the abstraction domain")
    v = int(model.succ[p, model.domain.ravel(q)])
    return OUT if v == OUT_IDX else model.domain.unravel(v)


def write_qsa1(model: SymbolicModel, path) -> None:
    """Debug dump of a successor table (text format, version QSA1)."""
    lines = [
        "QSA1",
        f"n {model.lat.n}",
        f"eta {model.lat.eta!r}",
        f"tau {model.tau!r}",
        "box " + " ".join(repr(float(v)) for pair in zip(model.working_box.lo, model.working_box.hi) for v in pair),
        f"modes {model.n_modes}",
        "cells " + " ".join(
            f"{a} {b}" for a, b in zip(model.domain.kmin.tolist(), model.domain.kmax.tolist())
        ),
    ]
    for p in range(model.n_modes):
        lines.append("M " + " ".join(map(str, model.succ[p].tolist())))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_qsa1(path) -> SymbolicModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "QSA1":
        raise FormatError("not a QSA1 file")
    head = {}
    rows = []
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key == "M":
            rows.append(np.array(rest.split(), dtype=np.int32))
        else:
            head[key] = rest
    try:
        n = int(head["n"])
        lat = Lattice(n, float(head["eta"]))
        tau = float(head["tau"])
        bvals = list(map(float, head["box"].split()))
        box = Box(bvals[0::2], bvals[1::2])
        n_modes = int(head["modes"])
        cvals = list(map(int, head["cells"].split()))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad QSA1 header: {exc}") from None
    domain = CellRange(cvals[0::2], cvals[1::2])
    if domain != cell_range(lat, box):
        raise FormatError("QSA1 cell range inconsistent with box and eta")
    if len(rows) != n_modes or any(len(r) != domain.count for r in rows):
        raise FormatError("QSA1 successor rows inconsistent with header")
    return SymbolicModel(lat=lat, working_box=box, domain=domain, tau=tau, succ=np.stack(rows))
