"""Branch-and-bound checks against scipy's HiGHS and hand cases."""

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp as scipy_milp

from ucinfer.errors import LpValidationError
from ucinfer.lp import GE, LE, LinearProgram, LpBuilder
from ucinfer.milp import Milp, export_lp_file, solve_milp, validate_milp

from .oracles.lpfile import parse_lp_file, solve_parsed
from .oracles.randlp import random_binary_milp


def scipy_milp_reference(m: Milp):
    lp = m.lp
    lo = np.where(lp.sense == LE, -np.inf, lp.b)
    hi = np.where(lp.sense == GE, np.inf, lp.b)
    integrality = np.zeros(lp.n_vars)
    integrality[m.binary] = 1
    res = scipy_milp(c=lp.c,
                     constraints=LinearConstraint(sp.csr_matrix(lp.A),
                                                  lo, hi),
                     bounds=Bounds(lp.lo, lp.hi), integrality=integrality)
    if res.status == 0:
        return "optimal", float(res.fun)
    if res.status == 2:
        return "infeasible", np.nan
    # 3: unbounded; 4: HiGHS could not separate infeasible from unbounded
    return "unbounded", -np.inf


def knapsack() -> Milp:
    """max 10a + 6b + 4c s.t. a+b+c <= 2 -> min form, optimum -16."""
    bld = LpBuilder()
    a = bld.add_var(0.0, 1.0, -10.0)
    b = bld.add_var(0.0, 1.0, -6.0)
    c = bld.add_var(0.0, 1.0, -4.0)
    bld.add_row([(a, 1.0), (b, 1.0), (c, 1.0)], LE, 2.0)
    return Milp(bld.build(), np.array([a, b, c], dtype=np.int64))


class TestAgainstScipy:
    def test_random_binary_sweep(self):
        rng = np.random.default_rng(99)
        counts = {"optimal": 0, "infeasible": 0}
        for _ in range(200):
            lp, binary = random_binary_milp(rng)
            m = Milp(lp, binary)
            ref_status, ref_obj = scipy_milp_reference(m)
            if ref_status == "unbounded":
                # an unbounded relaxation is a modeling error here
                with pytest.raises(LpValidationError):
                    solve_milp(m)
                continue
            sol = solve_milp(m)
            assert sol.status == ref_status
            counts[ref_status] += 1
            if ref_status == "optimal":
                tol = 1e-6 * (1.0 + abs(ref_obj))
                assert abs(sol.objective - ref_obj) <= tol
                frac = np.abs(sol.primal[binary]
                              - np.round(sol.primal[binary]))
                assert np.max(frac) <= 1e-6
        assert min(counts.values()) >= 10, counts


class TestBehavior:
    def test_knapsack_hand_value(self):
        sol = solve_milp(knapsack())
        assert sol.status == "optimal"
        assert abs(sol.objective + 16.0) <= 1e-9
        assert np.allclose(sol.primal, [1.0, 1.0, 0.0])

    def test_gap_zero_on_proved_optimum(self):
        sol = solve_milp(knapsack())
        assert sol.gap <= 1e-6

    def test_infeasible_reported(self):
        bld = LpBuilder()
        a = bld.add_var(0.0, 1.0, 1.0)
        bld.add_row([(a, 1.0)], GE, 0.5)
        bld.add_row([(a, 1.0)], LE, 0.4)
        sol = solve_milp(Milp(bld.build(), np.array([a], dtype=np.int64)))
        assert sol.status == "infeasible"
        assert sol.primal is None

    def test_node_limit_returns_incumbent_with_gap(self):
        rng = np.random.default_rng(7)
        hit = False
        for _ in range(60):
            lp, binary = random_binary_milp(rng)
            try:
                full = solve_milp(Milp(lp, binary))
            except LpValidationError:
                continue            # unbounded relaxation
            if full.status != "optimal" or full.nodes < 4:
                continue
            sol = solve_milp(Milp(lp, binary), node_limit=2)
            if sol.status != "node_limit":
                continue
            hit = True
            assert sol.gap > 0 or sol.primal is not None
            if sol.primal is not None:
                # incumbent objective can only over-estimate the optimum
                assert sol.objective >= full.objective - 1e-9
                assert sol.objective - sol.gap <= full.objective + 1e-9
        assert hit

    def test_log_bound_monotone_incumbent_decreasing(self):
        rng = np.random.default_rng(11)
        seen = 0
        while seen < 5:
            lp, binary = random_binary_milp(rng)
            log = []
            try:
                sol = solve_milp(Milp(lp, binary), log=log)
            except LpValidationError:
                continue            # unbounded relaxation
            if sol.status != "optimal" or len(log) < 3:
                continue
            seen += 1
            bounds = [e[1] for e in log if np.isfinite(e[1])]
            assert all(b1 <= b2 + 1e-9
                       for b1, b2 in zip(bounds, bounds[1:]))
            incs = [e[2] for e in log]
            assert all(u1 >= u2 - 1e-9 for u1, u2 in zip(incs, incs[1:]))

    def test_bad_heuristic_cannot_change_optimum(self):
        m = knapsack()
        ref = solve_milp(m)
        sol = solve_milp(m, heuristic=lambda x: np.ones(3))
        assert abs(sol.objective - ref.objective) <= 1e-12

    def test_pure_lp_when_no_binaries(self):
        bld = LpBuilder()
        a = bld.add_var(0.0, 4.0, -1.0)
        bld.add_row([(a, 1.0)], LE, 3.0)
        sol = solve_milp(Milp(bld.build(), np.zeros(0, dtype=np.int64)))
        assert sol.status == "optimal"
        assert abs(sol.objective + 3.0) <= 1e-9
        assert sol.nodes <= 2


class TestValidation:
    def test_duplicate_binary_rejected(self):
        m = knapsack()
        bad = Milp(m.lp, np.array([0, 0], dtype=np.int64))
        with pytest.raises(LpValidationError):
            validate_milp(bad)

    def test_out_of_range_binary_rejected(self):
        m = knapsack()
        bad = Milp(m.lp, np.array([12], dtype=np.int64))
        with pytest.raises(LpValidationError):
            validate_milp(bad)

    def test_binary_bounds_outside_unit_rejected(self):
        bld = LpBuilder()
        a = bld.add_var(0.0, 2.0, 1.0)
        bld.add_row([(a, 1.0)], LE, 2.0)
        with pytest.raises(LpValidationError):
            validate_milp(Milp(bld.build(), np.array([a], dtype=np.int64)))


class TestExport:
    def test_roundtrip_through_foreign_parser(self, tmp_path):
        rng = np.random.default_rng(13)
        done = 0
        while done < 8:
            lp, binary = random_binary_milp(rng)
            m = Milp(lp, binary)
            ref_status, ref_obj = scipy_milp_reference(m)
            if ref_status != "optimal":
                continue
            path = tmp_path / f"m{done}.lp"
            export_lp_file(m, path)
            parsed = parse_lp_file(path)
            assert parsed["names"] == list(lp.var_names) or \
                len(parsed["names"]) == lp.n_vars
            val = solve_parsed(parsed)
            assert abs(val - ref_obj) <= 1e-6 * (1.0 + abs(ref_obj))
            done += 1
