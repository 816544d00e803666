import math

import numpy as np
import pytest

from uwbpos.core import PhysConstants, Position2D
from uwbpos.errors import DegenerateGeometry, SingularUpdate, TooFewAnchors
from uwbpos.locate import (
    RangeObservation,
    SolverConfig,
    algo1_lls,
    algo2_iterative,
    position_from_toas,
    positioning_error,
)

from oracles import gauss_newton_oracle, lls_orthogonalization_oracle

C = 29.9792458

SQUARE_M = [(0.0, 0.0), (1000.0, 0.0), (0.0, 1000.0)]  # cm


def obs_for(anchors, truth, noise=None, rng=None):
    out = []
    for ax, ay in anchors:
        r = math.hypot(truth[0] - ax, truth[1] - ay)
        if noise:
            r = max(r + rng.normal(0, noise), 0.0)
        out.append(RangeObservation(Position2D(ax, ay), r))
    return out


class TestAlgo1:
    def test_exact_geometry(self):
        p = algo1_lls(obs_for(SQUARE_M, (300.0, 400.0)))
        assert positioning_error(p, Position2D(300, 400)) < 1e-7  # cm

    def test_collinear_raises(self):
        obs = obs_for([(0, 0), (500, 0), (1000, 0)], (300, 400))
        with pytest.raises(DegenerateGeometry):
            algo1_lls(obs)

    def test_too_few_anchors(self):
        with pytest.raises(TooFewAnchors):
            algo1_lls(obs_for(SQUARE_M[:2], (300, 400)))

    def test_matches_orthogonalization_oracle_under_noise(self):
        rng = np.random.default_rng(5)
        anchors = [(0, 0), (800, 0), (800, 600), (0, 600),
                   (400, 0), (800, 300), (400, 600), (0, 300)]
        for _ in range(50):
            truth = (rng.uniform(50, 750), rng.uniform(50, 550))
            obs = obs_for(anchors, truth, noise=10.0, rng=rng)
            got = algo1_lls(obs)
            want = lls_orthogonalization_oracle(
                [(o.anchor_pos.x, o.anchor_pos.y) for o in obs],
                [o.range_cm for o in obs],
            )
            # 1e-6 m = 1e-4 cm
            assert abs(got.x - want[0]) < 1e-4
            assert abs(got.y - want[1]) < 1e-4


class TestAlgo2:
    def test_fixed_point_converges_in_one_iteration(self):
        obs = obs_for(SQUARE_M, (300.0, 400.0))
        res = algo2_iterative(obs, Position2D(300.0, 400.0))
        assert res.converged
        assert res.iterations == 1

    def test_exact_ranges_from_far_init(self):
        obs = obs_for(SQUARE_M, (300.0, 400.0))
        res = algo2_iterative(obs, Position2D(0.0, 1.0))
        assert res.converged
        assert res.iterations <= 10
        assert positioning_error(res.position, Position2D(300, 400)) < 1e-7

    def test_matches_reference_gauss_newton(self):
        rng = np.random.default_rng(11)
        anchors = [(0, 0), (900, 0), (900, 700), (0, 700), (450, 0)]
        for _ in range(30):
            truth = (rng.uniform(50, 850), rng.uniform(50, 650))
            obs = obs_for(anchors, truth, noise=15.0, rng=rng)
            init = (rng.uniform(100, 800), rng.uniform(100, 600))
            got = algo2_iterative(obs, Position2D(*init)).position
            want = gauss_newton_oracle(
                anchors, [o.range_cm for o in obs], init, iters=50, tol=1e-6
            )
            assert abs(got.x - want[0]) < 1e-6
            assert abs(got.y - want[1]) < 1e-6

    def test_init_on_anchor_with_zero_range_raises(self):
        obs = [RangeObservation(Position2D(0, 0), 0.0)] + obs_for(
            SQUARE_M[1:], (300.0, 400.0)
        )
        with pytest.raises(SingularUpdate):
            algo2_iterative(obs, Position2D(0.0, 0.0))

    def test_non_convergence_flagged_not_raised(self):
        obs = obs_for(SQUARE_M, (300.0, 400.0), noise=200.0,
                      rng=np.random.default_rng(0))
        res = algo2_iterative(obs, Position2D(5000.0, 5000.0),
                              SolverConfig(max_iters=1))
        assert not res.converged
        assert res.iterations == 1

    def test_residual_norm_non_increasing_with_exact_ranges(self):
        rng = np.random.default_rng(21)
        anchors = [(0, 0), (800, 0), (800, 600), (0, 600)]
        for _ in range(20):
            truth = (rng.uniform(100, 700), rng.uniform(100, 500))
            obs = obs_for(anchors, truth)
            anchors_arr = np.array(anchors, dtype=float)
            ranges = np.array([o.range_cm for o in obs])

            def resid_norm(p):
                d = np.linalg.norm(p - anchors_arr, axis=1)
                return np.linalg.norm(d - ranges)

            p = np.array([truth[0] + rng.uniform(-80, 80),
                          truth[1] + rng.uniform(-80, 80)])
            prev = resid_norm(p)
            for _ in range(8):
                res = algo2_iterative(obs, Position2D(p[0], p[1]),
                                      SolverConfig(max_iters=1, tol_cm=1e-12))
                p = np.array([res.position.x, res.position.y])
                cur = resid_norm(p)
                assert cur <= prev + 1e-9
                prev = cur


class TestEquivariance:
    def _scene(self, rng):
        anchors = [(rng.uniform(0, 1000), rng.uniform(0, 1000)) for _ in range(5)]
        truth = (rng.uniform(100, 900), rng.uniform(100, 900))
        return anchors, truth

    def test_translation(self, rng):
        for _ in range(15):
            anchors, truth = self._scene(rng)
            v = (rng.uniform(-500, 500), rng.uniform(-500, 500))
            moved = [(ax + v[0], ay + v[1]) for ax, ay in anchors]
            p1 = algo1_lls(obs_for(anchors, truth))
            p2 = algo1_lls(obs_for(moved, (truth[0] + v[0], truth[1] + v[1])))
            assert abs(p2.x - p1.x - v[0]) < 1e-6
            assert abs(p2.y - p1.y - v[1]) < 1e-6

    def test_rotation(self, rng):
        for _ in range(15):
            anchors, truth = self._scene(rng)
            th = rng.uniform(0, 2 * np.pi)
            rot = lambda p: (
                p[0] * np.cos(th) - p[1] * np.sin(th),
                p[0] * np.sin(th) + p[1] * np.cos(th),
            )
            p1 = algo1_lls(obs_for(anchors, truth))
            p2 = algo1_lls(obs_for([rot(a) for a in anchors], rot(truth)))
            want = rot((p1.x, p1.y))
            assert abs(p2.x - want[0]) < 1e-6
            assert abs(p2.y - want[1]) < 1e-6


class TestPositionFromToas:
    def test_clean_toas_recover_position(self):
        anchors = [Position2D(*a) for a in SQUARE_M]
        truth = Position2D(300.0, 400.0)
        toas = [truth.distance_to(a) / C for a in anchors]
        fix = position_from_toas(toas, anchors)
        assert fix.converged
        assert positioning_error(fix.position, truth) < 1.0

    def test_closest_anchor_init_mode(self):
        anchors = [Position2D(*a) for a in SQUARE_M]
        truth = Position2D(300.0, 400.0)
        toas = [truth.distance_to(a) / C for a in anchors]
        fix = position_from_toas(toas, anchors, init_mode="closest_anchor")
        assert positioning_error(fix.position, truth) < 1.0
        assert fix.init_mode == "closest_anchor"

    def test_algo1_only_mode_skips_refinement(self):
        anchors = [Position2D(*a) for a in SQUARE_M]
        truth = Position2D(300.0, 400.0)
        toas = [truth.distance_to(a) / C for a in anchors]
        fix = position_from_toas(toas, anchors, init_mode="algo1_only")
        assert fix.iterations == 0
        assert positioning_error(fix.position, truth) < 1e-6

    def test_all_zero_ranges_do_not_crash(self):
        anchors = [Position2D(*a) for a in SQUARE_M]
        fix = position_from_toas([0.0, 0.0, 0.0], anchors)
        assert np.isfinite(fix.position.x) and np.isfinite(fix.position.y)

    def test_too_few_usable(self):
        anchors = [Position2D(*a) for a in SQUARE_M]
        with pytest.raises(TooFewAnchors):
            position_from_toas([1.0, np.nan, 2.0], anchors)

    def test_nan_toas_are_dropped(self):
        anchors = [Position2D(*a) for a in SQUARE_M] + [Position2D(500.0, 500.0)]
        truth = Position2D(300.0, 400.0)
        toas = [truth.distance_to(a) / C for a in anchors]
        toas[3] = np.nan
        fix = position_from_toas(toas, anchors)
        assert positioning_error(fix.position, truth) < 1.0


class TestPositioningError:
    def test_zero(self):
        assert positioning_error(Position2D(1, 2), Position2D(1, 2)) == 0.0

    def test_three_four_five(self):
        assert positioning_error(Position2D(3, 4), Position2D(0, 0)) == 5.0

    def test_matches_hypot_oracle(self, rng):
        for _ in range(200):
            a = Position2D(rng.uniform(-1e4, 1e4), rng.uniform(-1e4, 1e4))
            b = Position2D(rng.uniform(-1e4, 1e4), rng.uniform(-1e4, 1e4))
            want = math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2)
            assert positioning_error(a, b) == pytest.approx(want, rel=1e-12, abs=1e-12)
