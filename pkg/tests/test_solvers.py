import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chi_square_conic, cvar_vertices, projection_grid, projection_qp
from robust_sched.core import CVaR, ChiSquare, DimensionError, FullSimplex, GroupWeights, Singleton, chi_square_divergence
from robust_sched.solvers import SolverConfig, SolverError, best_response, project_chi_square

U3 = GroupWeights.uniform(3)
TOY = (0.1, 0.1, 1.1)
# by symmetry q = (a, a, (1 + t) / 3) with divergence t^2 / 4, so t = sqrt(4 rho) = sqrt(0.4) on the boundary
TOY_Q3 = (1 + math.sqrt(0.4)) / 3
TOY_OBJECTIVE = 0.1 + TOY_Q3


@pytest.fixture(autouse=True)
def _quiet_cvxpy():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


def instances(seed, count, n_range=(2, 8), rhos=(0.01, 0.1, 0.5, 2.0)):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        yield rng.uniform(-1, 1, n), rng.dirichlet(np.ones(n)), float(rng.choice(rhos))


@st.composite
def loss_and_center(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    v = np.array(draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    return v, raw / raw.sum()


class TestChiSquareBestResponse:
    def test_toy_example(self):
        res = best_response(TOY, ChiSquare(0.1, U3))
        np.testing.assert_allclose(res.q.weights, [(1 - TOY_Q3) / 2] * 2 + [TOY_Q3], atol=1e-9)
        np.testing.assert_allclose(res.q.weights, [0.2279, 0.2279, 0.5442], atol=1e-4)
        assert res.objective == pytest.approx(TOY_OBJECTIVE, abs=1e-9)
        assert res.active

    def test_constant_losses_return_center(self):
        res = best_response((1.0, 1.0, 1.0), ChiSquare(0.1, U3))
        assert res.objective == 1.0
        assert res.q == U3
        assert not res.active

    def test_radius_reaching_vertex(self):
        res = best_response(TOY, ChiSquare(1.0, U3))
        assert res.q.tolist() == [0.0, 0.0, 1.0]
        assert res.objective == 1.1

    def test_tied_maxima_share_mass(self):
        res = best_response((1.0, 1.0, 0.0), ChiSquare(0.3, U3))
        # chi2 of (1/2, 1/2, 0) against uniform is 0.25 <= 0.3
        np.testing.assert_allclose(res.q.weights, [0.5, 0.5, 0.0], atol=1e-15)
        assert res.objective == 1.0

    def test_center_defaults_to_uniform(self):
        assert best_response(TOY, ChiSquare(0.1)).objective == pytest.approx(TOY_OBJECTIVE, abs=1e-9)

    def test_center_length_checked(self):
        with pytest.raises(DimensionError):
            best_response((1.0, 2.0), ChiSquare(0.1, U3))

    def test_small_radius_matches_closed_form_gap(self):
        # interior solution q_i = p_i (1 + c (v_i - mean)) gives mean + sqrt(2 rho var)
        rng = np.random.default_rng(3)
        for rho in (1e-10, 1e-8, 1e-6, 1e-4):
            v, p = rng.uniform(-1, 1, 6), rng.dirichlet(np.ones(6))
            mean = p @ v
            var = p @ (v - mean) ** 2
            got = best_response(v, ChiSquare(rho, GroupWeights(p))).objective
            assert got == pytest.approx(mean + math.sqrt(2 * rho * var), abs=1e-12)

    def test_matches_conic_oracle(self):
        for v, p, rho in instances(11, 60):
            res = best_response(v, ChiSquare(rho, GroupWeights(p)))
            value, _ = chi_square_conic(v, p, rho)
            assert res.objective == pytest.approx(value, abs=1e-7)

    def test_iteration_budget_enforced(self):
        with pytest.raises(SolverError) as info:
            best_response(TOY, ChiSquare(0.1, U3), SolverConfig(dual_tolerance=1e-15, max_iterations=3))
        lo, hi = info.value.bracket
        assert lo < hi

    @settings(max_examples=200, deadline=None)
    @given(loss_and_center(), st.sampled_from([1e-6, 0.01, 0.1, 0.5, 2.0, 50.0]))
    def test_feasible_and_sandwiched(self, vp, rho):
        v, p = vp
        res = best_response(v, ChiSquare(rho, GroupWeights(p)))
        q = res.q.weights
        assert q.min() >= 0 and abs(q.sum() - 1) <= 1e-9
        assert chi_square_divergence(q, p) <= rho + 1e-6
        assert res.objective == pytest.approx(q @ v, abs=1e-12)
        assert p @ v - 1e-9 <= res.objective <= v.max() + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(loss_and_center())
    def test_monotone_in_radius(self, vp):
        v, p = vp
        values = [best_response(v, ChiSquare(r, GroupWeights(p))).objective for r in (1e-4, 0.01, 0.1, 0.5, 2, 10)]
        assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


class TestOtherSets:
    def test_full_simplex(self):
        res = best_response(TOY, FullSimplex())
        assert res.objective == 1.1 and res.q.tolist() == [0.0, 0.0, 1.0]

    def test_full_simplex_tie_takes_lowest_index(self):
        assert best_response((2.0, 5.0, 5.0), FullSimplex()).q.tolist() == [0.0, 1.0, 0.0]

    def test_singleton(self):
        res = best_response(TOY, Singleton(GroupWeights([0.1, 0.3, 0.6])))
        assert res.objective == pytest.approx(0.70, abs=1e-15)

    def test_cvar_toy(self):
        res = best_response(TOY, CVaR(1 / 3, U3))
        assert res.q.tolist() == [0.0, 0.0, 1.0]
        assert res.objective == 1.1

    def test_cvar_alpha_one_is_center(self):
        p = GroupWeights([0.2, 0.3, 0.5])
        assert best_response(TOY, CVaR(1.0, p)).q == p

    def test_cvar_fractional_group(self):
        # alpha = 1/2 with uniform_3: caps 2/3, so 2/3 on the worst and 1/3 on the next
        res = best_response((0.0, 1.0, 2.0), CVaR(0.5, U3))
        np.testing.assert_allclose(res.q.weights, [0.0, 1 / 3, 2 / 3], atol=1e-15)

    def test_cvar_matches_vertex_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            v, p = rng.uniform(-1, 1, n), rng.dirichlet(np.ones(n))
            alpha = float(rng.uniform(0.05, 1.0))
            res = best_response(v, CVaR(alpha, GroupWeights(p)))
            assert res.objective == pytest.approx(cvar_vertices(v, p, alpha), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(loss_and_center(), st.floats(0.01, 1.0))
    def test_cvar_feasible(self, vp, alpha):
        v, p = vp
        q = best_response(v, CVaR(alpha, GroupWeights(p))).q.weights
        assert np.max(q / p) <= 1 / alpha + 1e-6
        assert abs(q.sum() - 1) <= 1e-9


class TestProjection:
    def test_feasible_point_unchanged(self):
        assert project_chi_square(U3, ChiSquare(0.1, U3)) == U3
        assert project_chi_square((0.4, 0.3, 0.3), ChiSquare(0.5, U3)).tolist() == [0.4, 0.3, 0.3]

    def test_vertex_projects_to_toy_solution(self):
        q = project_chi_square((0.0, 0.0, 1.0), ChiSquare(0.1, U3)).weights
        np.testing.assert_allclose(q, [(1 - TOY_Q3) / 2] * 2 + [TOY_Q3], atol=1e-9)

    def test_requires_chi_square(self):
        with pytest.raises(TypeError):
            project_chi_square((1.0, 0.0), CVaR(0.5))

    def test_matches_qp_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(60):
            n = int(rng.integers(2, 7))
            v = rng.uniform(-1, 1, n) * rng.choice([0.1, 1, 10])
            p, rho = rng.dirichlet(2 * np.ones(n)), float(rng.choice([0.01, 0.1, 0.5, 2.0]))
            q = project_chi_square(v, ChiSquare(rho, GroupWeights(p))).weights
            assert np.linalg.norm(q - projection_qp(v, p, rho)) <= 1e-5

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(22)
        for _ in range(60):
            n = int(rng.integers(2, 4))
            v, p = rng.uniform(-1, 1, n), rng.dirichlet(2 * np.ones(n))
            rho = float(rng.choice([0.01, 0.1, 0.5, 2.0]))
            q = project_chi_square(v, ChiSquare(rho, GroupWeights(p))).weights
            assert np.linalg.norm(q - projection_grid(v, p, rho)) <= 1e-6

    @settings(max_examples=200, deadline=None)
    @given(loss_and_center(6), st.sampled_from([0.001, 0.05, 0.3, 1.0, 5.0]))
    def test_feasible_and_idempotent(self, vp, rho):
        v, p = vp
        uset = ChiSquare(rho, GroupWeights(p))
        q = project_chi_square(v, uset).weights
        assert q.min() >= 0 and abs(q.sum() - 1) <= 1e-9
        assert chi_square_divergence(q, p) <= rho + 1e-6
        again = project_chi_square(q, uset).weights
        assert np.linalg.norm(again - q) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(loss_and_center(6), st.sampled_from([0.01, 0.3, 2.0]))
    def test_no_feasible_point_is_closer(self, vp, rho):
        # the projection beats random feasible points, including the center
        v, p = vp
        q = project_chi_square(v, ChiSquare(rho, GroupWeights(p))).weights
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = rng.uniform()
            cand = (1 - t) * p + t * rng.dirichlet(np.ones(p.size))
            if chi_square_divergence(cand, p) <= rho:
                assert np.sum((q - v) ** 2) <= np.sum((cand - v) ** 2) + 1e-12
