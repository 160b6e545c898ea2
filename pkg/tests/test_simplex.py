import numpy as np
import pytest

from choiceplan import simplex as sx


def random_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    m1 = int(rng.integers(0, 8))
    m2 = int(rng.integers(0, 3))
    lb = np.where(rng.random(n) < 0.75, -rng.random(n) * 3, -np.inf)
    width = rng.random(n) * 5 + 0.01
    ub = np.where(rng.random(n) < 0.75,
                  np.where(np.isfinite(lb), lb + width, rng.random(n) * 3), np.inf)
    return sx.LpProblem(
        c=rng.normal(size=n),
        a_ub=rng.normal(size=(m1, n)) if m1 else None,
        b_ub=rng.normal(size=m1) * 2 if m1 else None,
        a_eq=rng.normal(size=(m2, n)) if m2 else None,
        b_eq=rng.normal(size=m2) if m2 else None,
        lb=lb, ub=ub,
    )


class TestBasics:
    def test_simple_box_lp(self):
        p = sx.LpProblem(c=[1.0, 1.0], a_ub=np.array([[1.0, 1.0]]), b_ub=[1.0],
                         lb=[0, 0], ub=[1, 1])
        s = sx.solve_lp(p, backend="dense")
        assert s.status == sx.OPTIMAL
        assert s.objective == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        p = sx.LpProblem(c=[1.0], a_ub=np.array([[1.0]]), b_ub=[-1.0], lb=[0.0], ub=[np.inf])
        assert sx.solve_lp(p, backend="dense").status == sx.INFEASIBLE

    def test_unbounded(self):
        p = sx.LpProblem(c=[1.0], lb=[0.0], ub=[np.inf])
        assert sx.solve_lp(p, backend="dense").status == sx.UNBOUNDED

    def test_master_lp_of_worked_instance(self):
        # x0, x1, x2, theta1, theta2 with the two tight integer cuts
        c = np.array([0, 0, 0, 0.5, 0.5])
        a_ub = np.array([
            [0, 1, 1, 0, 0],   # x1 + x2 <= 1
            [0, 0, 0, 1, 0],   # theta1 <= 8
            [0, 0, -3, 0, 1],  # theta2 <= 5 + 3 x2
        ], dtype=float)
        b_ub = np.array([1.0, 8.0, 5.0])
        p = sx.LpProblem(c=c, a_ub=a_ub, b_ub=b_ub,
                         a_eq=np.array([[1.0, 0, 0, 0, 0]]), b_eq=np.array([1.0]),
                         lb=np.array([0, 0, 0, -np.inf, -np.inf]),
                         ub=np.array([1, 1, 1, 8, 8.0]))
        s = sx.solve_lp(p, backend="dense")
        assert s.status == sx.OPTIMAL
        assert s.objective == pytest.approx(8.0, abs=1e-9)
        assert s.x[:3] == pytest.approx([1.0, 0.0, 1.0], abs=1e-9)
        assert sx.verify_kkt(p, s)

    def test_invalid_problems_rejected(self):
        with pytest.raises(sx.LpError):
            sx.LpProblem(c=[1.0], lb=[1.0], ub=[0.0])
        with pytest.raises(sx.LpError):
            sx.LpProblem(c=[1.0, 2.0], a_ub=np.ones((1, 1)), b_ub=[1.0])
        with pytest.raises(sx.LpError):
            sx.LpProblem(c=[1.0], lb=[np.nan], ub=[1.0])

    def test_determinism(self):
        p = random_lp(42)
        a = sx.solve_lp(p, backend="dense")
        b = sx.solve_lp(p, backend="dense")
        assert a.status == b.status
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.duals_ub, b.duals_ub)


class TestAgainstHighs:
    @pytest.mark.parametrize("seed", range(150))
    def test_status_objective_and_kkt(self, seed):
        p = random_lp(seed)
        sd = sx.solve_lp(p, backend="dense")
        sh = sx.solve_lp(p, backend="highs")
        assert sd.status == sh.status
        if sd.status == sx.OPTIMAL:
            assert sd.objective == pytest.approx(sh.objective, rel=1e-6, abs=1e-7)
            assert sx.verify_kkt(p, sd)
            assert sx.verify_kkt(p, sh)


class TestVerifyKkt:
    def test_accepts_own_optimum(self):
        for seed in (1, 5, 9):
            p = random_lp(seed)
            s = sx.solve_lp(p, backend="dense")
            if s.status == sx.OPTIMAL:
                assert sx.verify_kkt(p, s)

    def test_perturbed_dual_rejected(self):
        # nondegenerate: second row is strictly slack, so a fake positive dual
        # breaks complementary slackness
        p = sx.LpProblem(c=[1.0], a_ub=np.array([[1.0], [2.0]]), b_ub=[1.0, 4.0],
                         lb=[0.0], ub=[np.inf])
        s = sx.solve_lp(p, backend="dense")
        assert s.status == sx.OPTIMAL and sx.verify_kkt(p, s)
        s.duals_ub = s.duals_ub.copy()
        s.duals_ub[1] += 1e-3
        assert not sx.verify_kkt(p, s)

    def test_all_zero_problem(self):
        p = sx.LpProblem(c=[0.0], a_ub=np.array([[0.0]]), b_ub=[0.0], lb=[0.0], ub=[0.0])
        s = sx.solve_lp(p, backend="dense")
        assert s.status == sx.OPTIMAL
        assert sx.verify_kkt(p, s)

    def test_rejects_non_optimal_claim(self):
        p = sx.LpProblem(c=[1.0], lb=[0.0], ub=[1.0])
        assert not sx.verify_kkt(p, sx.LpSolution(status=sx.INFEASIBLE))


def test_strong_duality_tolerance():
    for seed in range(30):
        p = random_lp(seed + 700)
        s = sx.solve_lp(p, backend="dense")
        if s.status != sx.OPTIMAL:
            continue
        d = s.reduced_costs
        bound_term = np.where(d > 0, np.where(np.isfinite(p.ub), p.ub, 0.0) * np.maximum(d, 0),
                              np.where(np.isfinite(p.lb), p.lb, 0.0) * np.minimum(d, 0))
        dual_obj = float(s.duals_ub @ p.b_ub) + float(s.duals_eq @ p.b_eq) + float(bound_term.sum())
        assert abs(s.objective - dual_obj) <= 1e-6 * (1 + abs(s.objective))


def test_lp_text_dump():
    p = sx.LpProblem(c=[1.0, -2.0], a_ub=np.array([[1.0, 1.0]]), b_ub=[3.0],
                     lb=[0, 0], ub=[1, 1], name="toy")
    text = sx.write_lp_text(p)
    assert "Maximize" in text and "Subject To" in text and "v0" in text
