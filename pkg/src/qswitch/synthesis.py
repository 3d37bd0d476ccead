"""Controller synthesis on the abstraction and refinement through the relation ball.

Safety is the maximal fixed point over the successor table; reachability is
a multi-source backward breadth-first search keeping only time-optimal
modes.  Refinement turns the abstract mode sets into the quantized concrete
controller: per-mode dilation of enabled sets by the relation ball, plus a
sliding ball-minimum of the entry times for reachability.  Mode sets are
uint8 bitmasks (at most 8 modes), which is also the one-byte cell encoding
of the controller array file.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptySpecError, FormatError, PrecisionError
from .lattice import Box, CellRange, Lattice, RelationBall
from .system import LyapunovCertificate, SamplingParams, check_precision
from .abstraction import OUT_IDX, SymbolicModel

INF_TIME = np.int32(2**31 - 1)  # entry-time sentinel (never reached)

MAX_MODES = 8  # uint8 bitmask / one byte per cell in "QSC1"


@dataclass(eq=False)
class SafetyResult:
    """Most permissive safety controller on the abstraction (mode bitmasks)."""

    cells: CellRange
    n_modes: int
    k_eps: np.ndarray  # (cells.count,) uint8

    @property
    def dom_mask(self) -> np.ndarray:
        return self.k_eps != 0


@dataclass(eq=False)
class ReachResult:
    """Entry times and time-optimal mode sets on the abstraction.

    J is 0 exactly on the target range, the backward-BFS depth where finite,
    INF_TIME otherwise.  k_eps holds every optimal mode for 0 < J < inf, the
    full mode set on the target (the specification is met there and any
    continuation is acceptable), and 0 where J is infinite.
    """

    cells: CellRange
    target: CellRange
    n_modes: int
    k_eps: np.ndarray
    J: np.ndarray  # (cells.count,) int32


@dataclass(eq=False)
class RefinedController:
    """Quantized concrete controller over the spec cell range."""

    kind: str  # "safety" | "reach"
    cells: CellRange
    n_modes: int
    K: np.ndarray  # (cells.count,) uint8
    J_tilde: np.ndarray | None = None  # (cells.count,) int32, reach only

    def k_grid(self) -> np.ndarray:
        return self.K.reshape(self.cells.shape)

    def j_grid(self) -> np.ndarray:
        return self.J_tilde.reshape(self.cells.shape)


def contract_box(box: Box, epsilon: float) -> Box:
    """Inward epsilon-offset [lo+eps, hi-eps]: the points whose closed
    epsilon-ball stays inside the box (exact for axis-aligned boxes)."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    lo = box.lo + epsilon
    hi = box.hi - epsilon
    if np.any(lo > hi):
        raise EmptySpecError(f"box collapsed under {epsilon}-contraction")
    return Box(lo, hi)


def _check_modes(n_modes: int) -> None:
    if n_modes > MAX_MODES:
        raise ValueError(f"mode bitmasks support at most {MAX_MODES} modes")


def _remap_to_range(model: SymbolicModel, rng: CellRange) -> np.ndarray:
    """Successor table restricted to a subrange, reindexed to its flat order.

    Entries falling outside the subrange (including OUT) become -1.
    """
    if not rng.issubset(model.domain):
        raise ValueError("range must lie inside the abstraction domain")
    dflat = model.domain.ravel(rng.all_cells())
    sub = model.succ[:, dflat].astype(np.int64)
    out = np.full(sub.shape, -1, dtype=np.int32)
    valid = sub >= 0
    if valid.any():
        kv = model.domain.unravel(sub[valid])
        inside = rng.contains(kv)
        flat = np.where(
            inside, rng.ravel(np.where(inside[:, None], kv, rng.kmin)), -1
        )
        out[valid] = flat.astype(np.int32)
    return out


def synthesize_safety(model: SymbolicModel, safe_cells: CellRange) -> SafetyResult:
    """Maximal fixed point of the safety game on the abstraction.

    Start from every safe cell and repeatedly drop cells with no mode whose
    successor stays in the surviving set; on the limit D, the kept modes are
    exactly {p : succ(q, p) in D}.  The result is the most permissive safety
    controller: it is deadend-free by construction, and one extra iteration
    changes nothing.
    """
    _check_modes(model.n_modes)
    succ = _remap_to_range(model, safe_cells)
    alive = np.ones(safe_cells.count, dtype=bool)

    def enabled(p: int) -> np.ndarray:
        sp = succ[p]
        ok = sp >= 0
        ok[ok] = alive[sp[ok]]
        return ok

    while True:
        any_ok = np.zeros_like(alive)
        for p in range(model.n_modes):
            any_ok |= enabled(p)
        new_alive = alive & any_ok
        if np.array_equal(new_alive, alive):
            break
        alive = new_alive

    k_eps = np.zeros(safe_cells.count, dtype=np.uint8)
    for p in range(model.n_modes):
        keep = enabled(p) & alive
        k_eps[keep] |= np.uint8(1 << p)
    return SafetyResult(cells=safe_cells, n_modes=model.n_modes, k_eps=k_eps)


def synthesize_reach(
    model: SymbolicModel, safe_cells: CellRange, target_cells: CellRange
) -> ReachResult:
    """Minimal entry times by backward BFS on the reversed successor graph.

    Transitions are restricted to the safe range; J = 0 on the target range
    and J(q) = d at the first backward level reaching q.  Kept modes are
    exactly those stepping onto a J(q)-1 cell, so the entry-time recursion
    J(q) = 1 + max (= min) over kept modes holds at every 0 < J < inf cell.
    """
    _check_modes(model.n_modes)
    if not target_cells.issubset(safe_cells):
        raise ValueError("target range must lie inside the safe range")
    succ = _remap_to_range(model, safe_cells)
    count = safe_cells.count

    J = np.full(count, INF_TIME, dtype=np.int32)
    tflat = safe_cells.ravel(target_cells.all_cells())
    J[tflat] = 0

    heads = succ.reshape(-1)
    tails = np.tile(np.arange(count, dtype=np.int64), model.n_modes)
    keep = heads >= 0
    heads = heads[keep].astype(np.int64)
    tails = tails[keep]
    order = np.argsort(heads, kind="stable")
    heads = heads[order]
    tails = tails[order]
    indptr = np.searchsorted(heads, np.arange(count + 1, dtype=np.int64))

    frontier = np.unique(tflat)
    depth = 0
    while frontier.size:
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        base = np.repeat(starts, counts)
        reset = np.repeat(np.cumsum(counts) - counts, counts)
        preds = tails[base + (np.arange(total) - reset)]
        preds = np.unique(preds[J[preds] == INF_TIME])
        if preds.size == 0:
            break
        depth += 1
        J[preds] = depth
        frontier = preds

    k_eps = np.zeros(count, dtype=np.uint8)
    finite_mid = (J > 0) & (J < INF_TIME)
    for p in range(model.n_modes):
        sp = succ[p]
        valid = sp >= 0
        jn = np.full(count, INF_TIME, dtype=np.int64)
        jn[valid] = J[sp[valid]]
        opt = finite_mid & valid & (jn == J.astype(np.int64) - 1)
        k_eps[opt] |= np.uint8(1 << p)
    k_eps[J == 0] = np.uint8((1 << model.n_modes) - 1)
    return ReachResult(
        cells=safe_cells, target=target_cells, n_modes=model.n_modes, k_eps=k_eps, J=J
    )


# ---------------------------------------------------------------------------
# refinement engines


def shift_read(arr: np.ndarray, off, fill) -> np.ndarray:
    """out[i] = arr[i + off] with out-of-range reads replaced by fill."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for ax, o in enumerate(off):
        size = arr.shape[ax]
        lo = max(0, int(o))
        hi = size + min(0, int(o))
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - int(o), hi - int(o)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def dilate_scan(mask: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Dilation by an explicit offset set: shift-and-or reference engine."""
    out = np.zeros_like(mask)
    for d in offsets:
        out |= shift_read(mask, d, False)
    return out


def dilate_edt(mask: np.ndarray, r2_cells: int) -> np.ndarray:
    """Exact Euclidean dilation: cells within squared cell distance r2 of the set.

    Nearest-feature indices from the exact distance transform give integer
    squared distances, so the boundary comparison is exact.
    """
    if not mask.any():
        return np.zeros_like(mask)
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    grids = np.ogrid[tuple(slice(0, s) for s in mask.shape)]
    d2 = np.zeros(mask.shape, dtype=np.int64)
    for ax in range(mask.ndim):
        diff = idx[ax].astype(np.int64) - grids[ax]
        d2 += diff * diff
    return d2 <= r2_cells


def _dilate(mask: np.ndarray, ball: RelationBall, engine: str) -> np.ndarray:
    if engine == "auto":
        engine = "edt" if ball.is_euclidean else "scan"
    if engine == "edt":
        if not ball.is_euclidean:
            raise ValueError("edt engine requires a Euclidean relation ball")
        return dilate_edt(mask, ball.r2_cells)
    if engine == "scan":
        return dilate_scan(mask, ball.offsets)
    raise ValueError(f"unknown engine {engine!r}")


def _ball_slices(ball: RelationBall):
    """Group lexicographic offsets by leading coordinates.

    Each group is a contiguous last-axis interval [a, b] (slices of the
    quadratic-form ball are intervals), yielding the column decomposition
    used by the sliding minimum.
    """
    offsets = ball.offsets
    n = offsets.shape[1]
    groups = []
    for head, block in itertools.groupby(map(tuple, offsets.tolist()), key=lambda t: t[:-1]):
        last = [t[-1] for t in block]
        a, b = last[0], last[-1]
        if last != list(range(a, b + 1)):
            raise ValueError("relation-ball slice is not contiguous")
        groups.append((head, a, b))
    return groups


def ball_min(arr: np.ndarray, ball: RelationBall, fill=INF_TIME) -> np.ndarray:
    """Exact sliding minimum of arr over the relation ball.

    Column decomposition: one 1-d minimum filter per distinct offset head,
    O(cells * radius/spacing) total; out-of-range reads count as fill.
    """
    out = np.full_like(arr, fill)
    for head, a, b in _ball_slices(ball):
        size = b - a + 1
        f = ndimage.minimum_filter1d(arr, size=size, axis=-1, mode="constant", cval=fill)
        # centered window of f at j covers [j - size//2, j - size//2 + size - 1]
        contrib = shift_read(f, head + (a + size // 2,), fill)
        np.minimum(out, contrib, out=out)
    return out


def _embed(values: np.ndarray, inner: CellRange, outer: CellRange, fill) -> np.ndarray:
    """Place a flat array over `inner` into an `outer`-shaped canvas."""
    if not inner.issubset(outer):
        raise ValueError("cells to embed must lie inside the canvas range")
    canvas = np.full(outer.shape, fill, dtype=values.dtype)
    off = inner.kmin - outer.kmin
    sl = tuple(slice(int(o), int(o + s)) for o, s in zip(off, inner.shape))
    canvas[sl] = values.reshape(inner.shape)
    return canvas


def refine_safety(
    sres: SafetyResult,
    lat: Lattice,
    cert: LyapunovCertificate,
    params: SamplingParams,
    spec_cells: CellRange,
    engine: str = "auto",
) -> RefinedController:
    """Union of abstract mode sets over the relation ball of every spec cell.

    Per mode this is one dilation of {q' : p enabled} by the ball; the
    "scan" and "edt" engines are exact and interchangeable (the latter for
    Euclidean balls only).
    """
    if not check_precision(cert, params):
        raise PrecisionError("precision condition fails for these parameters")
    ball = RelationBall(lat, cert, params)
    kmask = _embed(sres.k_eps, sres.cells, spec_cells, np.uint8(0))
    K = np.zeros(spec_cells.shape, dtype=np.uint8)
    for p in range(sres.n_modes):
        enabled = (kmask >> p) & 1 != 0
        K[_dilate(enabled, ball, engine)] |= np.uint8(1 << p)
    return RefinedController(
        kind="safety", cells=spec_cells, n_modes=sres.n_modes, K=K.reshape(-1)
    )


def refine_reach(
    rres: ReachResult,
    lat: Lattice,
    cert: LyapunovCertificate,
    params: SamplingParams,
    spec_cells: CellRange,
    mode: str = "full",
    engine: str = "auto",
) -> RefinedController:
    """Ball-minimum entry-time bound and mode sets from minimizing cells.

    J~ is the exact sliding minimum of J over the relation ball of each spec
    cell.  Mode "full" unions the abstract mode sets of every minimizer
    (per entry-time level, one dilation of the level's enabled set cropped
    to where it can matter); mode "fast" copies the mode set of the
    lexicographically first minimizing offset, a subset of "full" adequate
    for determinization, at O(cells * ball) worst case.
    """
    if not check_precision(cert, params):
        raise PrecisionError("precision condition fails for these parameters")
    if mode not in ("full", "fast"):
        raise ValueError(f"unknown refinement mode {mode!r}")
    ball = RelationBall(lat, cert, params)
    J = _embed(rres.J, rres.cells, spec_cells, INF_TIME)
    kmask = _embed(rres.k_eps, rres.cells, spec_cells, np.uint8(0))
    Jt = ball_min(J, ball)
    K = np.zeros(spec_cells.shape, dtype=np.uint8)

    if mode == "full":
        radius = int(np.abs(ball.offsets).max()) if len(ball.offsets) else 0
        for v in np.unique(rres.J[rres.J != INF_TIME]):
            sel = Jt == v
            if not sel.any():
                continue
            at_level = J == v
            window = _crop_window(sel, radius, J.shape)
            for p in range(rres.n_modes):
                m = at_level & ((kmask >> p) & 1 != 0)
                if not m.any():
                    continue
                dil = _dilate(m[window], ball, engine)
                hit = sel[window] & dil
                K[window][hit] |= np.uint8(1 << p)
    else:
        undecided = Jt != INF_TIME
        for d in ball.offsets:
            if not undecided.any():
                break
            jv = shift_read(J, d, INF_TIME)
            hit = undecided & (jv == Jt)
            if hit.any():
                K[hit] = shift_read(kmask, d, np.uint8(0))[hit]
                undecided &= ~hit

    return RefinedController(
        kind="reach",
        cells=spec_cells,
        n_modes=rres.n_modes,
        K=K.reshape(-1),
        J_tilde=Jt.reshape(-1),
    )


def _crop_window(sel: np.ndarray, radius: int, shape) -> tuple:
    """Bounding slices of sel expanded by radius (level dilations stay exact
    inside the window because all relevant features lie within radius)."""
    sl = []
    for ax in range(sel.ndim):
        proj = sel.any(axis=tuple(i for i in range(sel.ndim) if i != ax))
        nz = np.flatnonzero(proj)
        lo = max(0, int(nz[0]) - radius)
        hi = min(shape[ax], int(nz[-1]) + radius + 1)
        sl.append(slice(lo, hi))
    return tuple(sl)


# ---------------------------------------------------------------------------
# controller array file, version "QSC1"


@dataclass(frozen=True)
class ControllerMeta:
    """Exact header strings for controller artifacts (round-trip fidelity)."""

    tau: str
    eta: str
    epsilon: str
    ys: tuple
    yt: tuple | None = None


def write_qsc1(path, ctrl: RefinedController, meta: ControllerMeta) -> None:
    """Controller array file: text header, then one mode bitmask byte per
    cell in row-major order; reach adds little-endian uint32 entry-time
    bounds (INF = 0xFFFFFFFF)."""
    if ctrl.kind == "reach" and ctrl.J_tilde is None:
        raise ValueError("reach controller requires J_tilde")
    lines = [
        "QSC1",
        f"kind {ctrl.kind}",
        f"n {ctrl.cells.n}",
        f"modes {ctrl.n_modes}",
        f"tau {meta.tau}",
        f"eta {meta.eta}",
        f"epsilon {meta.epsilon}",
        "ys " + " ".join(meta.ys),
    ]
    if ctrl.kind == "reach":
        if meta.yt is None:
            raise ValueError("reach controller requires the target box")
        lines.append("yt " + " ".join(meta.yt))
    lines.append(
        "cells "
        + " ".join(f"{a} {b}" for a, b in zip(ctrl.cells.kmin.tolist(), ctrl.cells.kmax.tolist()))
    )
    lines.append("data")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(ctrl.K.tobytes())
        if ctrl.kind == "reach":
            j = ctrl.J_tilde.astype(np.int64)
            j[j == INF_TIME] = 0xFFFFFFFF
            fh.write(j.astype("<u4").tobytes())


def read_qsc1(path):
    """Parse a QSC1 file; returns (RefinedController, ControllerMeta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if blob[:nl] != b"QSC1":
        raise FormatError("not a QSC1 file")
    head = {}
    pos = nl + 1
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise FormatError("QSC1 header not terminated")
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "data":
            break
        key, _, rest = line.partition(" ")
        head[key] = rest
    try:
        kind = head["kind"]
        n = int(head["n"])
        n_modes = int(head["modes"])
        cvals = list(map(int, head["cells"].split()))
        meta = ControllerMeta(
            tau=head["tau"],
            eta=head["eta"],
            epsilon=head["epsilon"],
            ys=tuple(head["ys"].split()),
            yt=tuple(head["yt"].split()) if "yt" in head else None,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad QSC1 header: {exc}") from None
    if kind not in ("safety", "reach"):
        raise FormatError(f"unknown controller kind {kind!r}")
    cells = CellRange(cvals[0::2], cvals[1::2])
    if cells.n != n or len(meta.ys) != 2 * n:
        raise FormatError("QSC1 header dimensions inconsistent")
    count = cells.count
    body = blob[pos:]
    expect = count * (5 if kind == "reach" else 1)
    if len(body) != expect:
        raise FormatError(f"QSC1 payload is {len(body)} bytes, expected {expect}")
    K = np.frombuffer(body[:count], dtype=np.uint8).copy()
    J = None
    if kind == "reach":
        raw = np.frombuffer(body[count:], dtype="<u4").astype(np.int64)
        J = np.where(raw == 0xFFFFFFFF, np.int64(INF_TIME), raw).astype(np.int32)
    return (
        RefinedController(kind=kind, cells=cells, n_modes=n_modes, K=K, J_tilde=J),
        meta,
    )
