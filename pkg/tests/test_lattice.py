"""Quantizer, cell ranges, ball offsets, and the relation neighborhood."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qswitch.errors import PrecisionError
from qswitch.lattice import (
    Box,
    CellRange,
    Lattice,
    RelationBall,
    ball_offsets,
    cell_range,
    inner_cell_range,
    rel_ball,
)
from qswitch.system import LyapunovCertificate, PowerKInf, SamplingParams


class TestQuantizer:
    def test_half_open_boundary_1d(self):
        lat = Lattice(1, 0.5)  # spacing 1
        assert lat.quantize([0.4]).tolist() == [0]
        assert lat.quantize([0.5]).tolist() == [1]
        assert lat.quantize([-0.5]).tolist() == [0]
        assert lat.quantize([-0.51]).tolist() == [-1]

    def test_2d_example(self):
        lat = Lattice(2, math.sqrt(2))  # spacing 2
        assert lat.quantize([0.9, -1.0]).tolist() == [0, 0]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=3), st.floats(0.01, 10))
    def test_idempotent_on_centers(self, k, eta):
        lat = Lattice(len(k), eta)
        assert lat.quantize(lat.center(k)).tolist() == k

    @pytest.mark.parametrize("n,eta", [(1, 0.5), (2, 0.0014), (3, 1.7)])
    def test_quantization_error_bound(self, n, eta):
        lat = Lattice(n, eta)
        x = np.random.default_rng(1).uniform(-50, 50, (100_000, n))
        err = np.linalg.norm(lat.center(lat.quantize(x)) - x, axis=-1)
        assert err.max() <= eta

    @settings(max_examples=200, deadline=None)
    @given(
        k=st.lists(st.integers(-100, 100), min_size=2, max_size=2),
        u=st.lists(st.floats(0.01, 0.99), min_size=2, max_size=2),
    )
    def test_interior_points_of_a_cell_quantize_to_it(self, k, u):
        lat = Lattice(2, 0.3)
        s = lat.spacing
        x = lat.center(k) - s / 2 + np.array(u) * s
        assert lat.quantize(x).tolist() == k

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=2))
    def test_defining_inequality(self, xs):
        # q - s/2 <= x < q + s/2 per axis, up to one rounding ulp at the edges
        lat = Lattice(2, 0.3)
        s = lat.spacing
        x = np.array(xs)
        c = lat.center(lat.quantize(x))
        assert (np.abs(x - c) <= s / 2 * (1 + 1e-12)).all()


class TestCellRange:
    @pytest.mark.parametrize(
        "eta,lo,hi",
        [(0.0014, 20.0, 22.0), (0.0035, 17.5, 22.5)],
    )
    def test_benchmark_grid_sizes(self, eta, lo, hi):
        lat = Lattice(2, eta)
        rng = cell_range(lat, Box([lo, lo], [hi, hi]))
        assert rng.shape == (1011, 1011)
        assert rng.count == 1_022_121

    def test_per_axis_floor_arithmetic(self):
        lat = Lattice(2, 0.0014)
        s = lat.spacing
        rng = cell_range(lat, Box([20.0, 20.0], [22.0, 22.0]))
        assert rng.kmin.tolist() == [math.floor(20.0 / s + 0.5)] * 2
        assert rng.kmax.tolist() == [math.floor(22.0 / s + 0.5)] * 2

    def test_degenerate_box_is_single_cell(self):
        lat = Lattice(2, 0.5)
        q = lat.center([3, -7])
        rng = cell_range(lat, Box(q, q))
        assert rng.kmin.tolist() == [3, -7] and rng.kmax.tolist() == [3, -7]
        assert rng.count == 1

    def test_ravel_matches_row_major_enumeration(self):
        rng = CellRange([-2, 5], [1, 7])
        cells = rng.all_cells()
        assert np.array_equal(rng.ravel(cells), np.arange(rng.count))
        assert np.array_equal(rng.unravel(np.arange(rng.count)), cells)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(-20, 20), st.integers(0, 5)), min_size=1, max_size=3),
           st.integers(0, 10_000))
    def test_ravel_unravel_roundtrip(self, spans, pick):
        kmin = np.array([a for a, _ in spans])
        kmax = np.array([a + w for a, w in spans])
        rng = CellRange(kmin, kmax)
        idx = pick % rng.count
        assert rng.ravel(rng.unravel(idx)) == idx

    def test_subset_and_contains(self):
        outer = CellRange([0, 0], [10, 10])
        inner = CellRange([2, 3], [4, 5])
        assert inner.issubset(outer) and not outer.issubset(inner)
        assert inner.contains([3, 4]) and not inner.contains([5, 4])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            CellRange([0, 0], [1, -1])

    def test_inner_cell_range(self):
        lat = Lattice(1, 0.5)  # spacing 1, cells [k-0.5, k+0.5)
        inner = inner_cell_range(lat, Box([-0.5], [2.5]))
        assert inner.kmin.tolist() == [0] and inner.kmax.tolist() == [2]
        assert inner_cell_range(lat, Box([0.1], [0.3])) is None


class TestBallOffsets:
    def test_radius_below_spacing(self):
        lat = Lattice(2, 0.5)
        offs = ball_offsets(lat, 0.9)  # spacing ~0.707, radius/s < sqrt(2)... still includes axis steps
        lat1 = Lattice(1, 0.5)
        assert ball_offsets(lat1, 0.99).tolist() == [[0]]

    def test_radius_equal_spacing_gives_cross(self):
        lat = Lattice(2, math.sqrt(2))  # spacing 2
        offs = {tuple(d) for d in ball_offsets(lat, 2.0)}
        assert offs == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}

    @pytest.mark.parametrize("n,eta,radius", [(1, 0.5, 7.3), (2, 0.4, 3.1), (2, 1.0, 9.7), (3, 0.9, 2.9)])
    def test_matches_bounding_box_enumeration(self, n, eta, radius):
        lat = Lattice(n, eta)
        r2 = math.floor((radius / lat.spacing) ** 2)
        bound = math.isqrt(r2)
        expect = [
            d
            for d in itertools.product(range(-bound, bound + 1), repeat=n)
            if sum(v * v for v in d) <= r2
        ]
        assert [tuple(d) for d in ball_offsets(lat, radius)] == expect

    def test_lexicographic_order(self):
        lat = Lattice(2, 1.0)
        offs = [tuple(d) for d in ball_offsets(lat, 4.0)]
        assert offs == sorted(offs)

    def test_benchmark_ball_size(self):
        # safety instance: radius eps - eta over the 0.0014 lattice
        lat = Lattice(2, 0.0014)
        offs = ball_offsets(lat, 0.25 - 0.0014)
        area = math.pi * (0.2486 / lat.spacing) ** 2
        assert len(offs) == 49_525
        assert abs(len(offs) - area) <= 0.02 * area

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            ball_offsets(Lattice(1, 0.5), -1.0)


def euclid_cert(n=2):
    sq = PowerKInf(1.0, 2.0)
    return LyapunovCertificate(M=np.eye(n), alpha_lo=sq, alpha_hi=sq, gamma=sq, kappa=1.0)


class TestRelationBall:
    def test_euclidean_ball_equivalence(self):
        lat = Lattice(2, 0.5)
        cert = euclid_cert()
        params = SamplingParams(tau=1.0, eta=0.5, epsilon=0.5 + 3.2 * lat.spacing)
        ball = RelationBall(lat, cert, params)
        thr = (params.epsilon - params.eta) ** 2
        s = lat.spacing
        expect = {
            (i, j)
            for i in range(-5, 6)
            for j in range(-5, 6)
            if (i * s) ** 2 + (j * s) ** 2 <= thr
        }
        assert {tuple(d) for d in ball.offsets} == expect
        assert ball.is_euclidean

    def test_tiny_ball_is_singleton(self):
        lat = Lattice(2, 0.5)
        params = SamplingParams(tau=1.0, eta=0.5, epsilon=0.5 + 0.9 * lat.spacing)
        cells = rel_ball(lat, euclid_cert(), params, [7, -3])
        assert cells.tolist() == [[7, -3]]

    def test_contains_center(self):
        lat = Lattice(2, 0.5)
        params = SamplingParams(tau=1.0, eta=0.5, epsilon=1.4)
        cells = rel_ball(lat, euclid_cert(), params, [2, 2])
        assert [2, 2] in cells.tolist()

    def test_symmetric_offsets_for_anisotropic_metric(self):
        lat = Lattice(2, 0.5)
        sq = PowerKInf(1.0, 2.0)
        cert = LyapunovCertificate(
            M=np.array([[2.0, 0.3], [0.3, 1.0]]),
            alpha_lo=PowerKInf(0.5, 2.0), alpha_hi=PowerKInf(3.0, 2.0),
            gamma=sq, kappa=1.0,
        )
        ball = RelationBall(lat, cert, SamplingParams(1.0, 0.5, 3.0))
        offs = {tuple(d) for d in ball.offsets}
        assert offs == {tuple(-v for v in d) for d in offs}
        assert not ball.is_euclidean

    def test_requires_epsilon_above_eta(self):
        lat = Lattice(2, 0.5)
        fake = SimpleNamespace(eta=1.0, epsilon=0.5)
        with pytest.raises(PrecisionError):
            RelationBall(lat, euclid_cert(), fake)


class TestBox:
    def test_contains_is_closed(self):
        box = Box([0.0, 0.0], [1.0, 2.0])
        assert box.contains([0.0, 2.0])
        assert not box.contains([1.0001, 1.0])
        assert box.contains(np.array([[0.5, 0.5], [2.0, 0.5]])).tolist() == [True, False]

    def test_validation(self):
        with pytest.raises(ValueError):
            Box([0.0], [-1.0])
        with pytest.raises(ValueError):
            Box([0.0, np.inf], [1.0, 2.0])
