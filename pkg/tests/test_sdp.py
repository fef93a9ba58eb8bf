"""Tests for the interior-point solver and the SDPA export."""

from __future__ import annotations

import numpy as np
import pytest

from oracles import admm_sdp
from sdpa_reader import fold_free_pairs, parse_sdpa

from mpisos.relax import Box, assemble
from mpisos.sdp import (
    BlockProblem,
    SdpSolution,
    SolverBreakdown,
    SolverTolerances,
    export_sdpa,
    solution_report,
    solve,
    solve_block_problem,
    standardize,
)
from mpisos.sparsity import RelaxationConfig
from mpisos.systems import lorenz


def eigenvalue_problem() -> BlockProblem:
    """minimize t subject to [[t, 1], [1, t]] PSD; optimum t = 1."""
    return BlockProblem(
        [2],
        [
            [(0, 0, 0, 1.0)],
            [(0, 1, 1, 1.0)],
            [(0, 0, 1, 0.5)],
        ],
        B=np.array([[-1.0], [-1.0], [0.0]]),
        b=np.array([0.0, 0.0, 1.0]),
        c_free=np.array([1.0]),
    )


def sos_problem() -> BlockProblem:
    """Gram feasibility of x^2 + 1 on the basis (1, x)."""
    return BlockProblem(
        [2],
        [
            [(0, 0, 0, 1.0)],
            [(0, 0, 1, 1.0)],
            [(0, 1, 1, 1.0)],
        ],
        B=np.zeros((3, 0)),
        b=np.array([1.0, 0.0, 1.0]),
        c_free=np.zeros(0),
    )


def epigraph_problem(C, A_list, b) -> BlockProblem:
    """min <C, X> s.t. <A_l, X> = b_l as min t with t free."""
    n = C.shape[0]

    def upper(mat):
        return [
            (0, r, c, float(mat[r, c]))
            for r in range(n)
            for c in range(r, n)
            if mat[r, c] != 0.0
        ]

    entries = [upper(C)] + [upper(A) for A in A_list]
    B = np.zeros((1 + len(A_list), 1))
    B[0, 0] = -1.0
    rhs = np.concatenate([[0.0], b])
    return BlockProblem([n], entries, B, rhs, np.array([1.0]))


class TestSolver:
    def test_eigenvalue_bound(self):
        sol = solve_block_problem(eigenvalue_problem())
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-6)
        assert sol.block_values[0] == pytest.approx(np.ones((2, 2)), abs=1e-6)
        assert max(sol.residuals.values()) <= 1e-7

    def test_sos_gram(self):
        sol = solve_block_problem(sos_problem())
        assert sol.status == "optimal"
        assert sol.objective == 0.0
        assert sol.block_values[0] == pytest.approx(np.eye(2), abs=1e-6)

    def test_matches_first_order_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            n = 3
            G = rng.normal(size=(n, n))
            C = G @ G.T + 0.5 * np.eye(n)
            A_list = []
            for _ in range(2):
                raw = rng.normal(size=(n, n))
                A_list.append(0.5 * (raw + raw.T))
            L = rng.normal(size=(n, n))
            Q0 = L @ L.T + 0.5 * np.eye(n)
            b = np.array([float(np.sum(A * Q0)) for A in A_list])
            sol = solve_block_problem(epigraph_problem(C, A_list, b))
            ref_obj, _ = admm_sdp(C, A_list, b)
            assert sol.status == "optimal", f"trial {trial}"
            assert sol.objective == pytest.approx(ref_obj, abs=1e-4), f"trial {trial}"

    def test_weak_duality_along_trace(self):
        m = lorenz()
        p = assemble(
            m.system, Box.from_bounds(m.bounds), RelaxationConfig(d=2, s=1, l=1)
        )
        sol = solve(p)
        assert sol.status == "optimal"
        for rec in sol.trace:
            lhs = rec.primal_objective - rec.dual_objective
            assert lhs >= -rec.duality_slack - 1e-8 * (
                1.0 + abs(rec.primal_objective)
            )

    def test_returned_blocks_are_psd(self):
        sol = solve_block_problem(eigenvalue_problem())
        for mat in sol.block_values:
            norm = np.linalg.norm(mat)
            assert np.linalg.eigvalsh(mat).min() >= -1e-8 * (1.0 + norm)
        m = lorenz()
        p = assemble(
            m.system, Box.from_bounds(m.bounds), RelaxationConfig(d=2, mode="ss")
        )
        sol = solve(p)
        assert sol.status == "optimal"
        for mat in sol.block_values:
            norm = np.linalg.norm(mat)
            assert np.linalg.eigvalsh(mat).min() >= -1e-8 * (1.0 + norm)

    def test_residuals_recomputed_from_iterate(self):
        bp = eigenvalue_problem()
        sol = solve_block_problem(bp)
        r_p = bp.b - bp.apply_A(sol.block_values) - bp.B @ sol.free_values
        want = np.linalg.norm(r_p) / (1.0 + np.linalg.norm(bp.b))
        assert sol.residuals["primal_infeasibility"] == pytest.approx(
            want, abs=1e-14
        )

    def test_deterministic(self):
        a = solve_block_problem(eigenvalue_problem())
        b = solve_block_problem(eigenvalue_problem())
        assert a.objective == b.objective
        assert a.iterations == b.iterations
        assert np.array_equal(a.free_values, b.free_values)
        assert all(
            np.array_equal(x, y) for x, y in zip(a.block_values, b.block_values)
        )

    def test_infeasible_flagged(self):
        bp = BlockProblem(
            [1],
            [[(0, 0, 0, 1.0)]],
            B=np.zeros((1, 0)),
            b=np.array([-1.0]),
            c_free=np.zeros(0),
        )
        sol = solve_block_problem(bp)
        assert sol.status == "infeasible_flag"

    def test_iteration_cap(self):
        tol = SolverTolerances(max_iterations=2)
        sol = solve_block_problem(eigenvalue_problem(), tol)
        assert sol.status == "max_iter"
        assert sol.iterations == 2

    def test_tolerance_validation(self):
        with pytest.raises(ValueError):
            SolverTolerances(gap=0.0)
        with pytest.raises(ValueError):
            SolverTolerances(step_fraction=1.0)
        with pytest.raises(ValueError):
            SolverTolerances(max_iterations=0)

    def test_block_problem_validation(self):
        with pytest.raises(ValueError):
            BlockProblem(
                [2],
                [[(1, 0, 0, 1.0)]],
                B=np.zeros((1, 0)),
                b=np.array([1.0]),
                c_free=np.zeros(0),
            )
        with pytest.raises(ValueError):
            BlockProblem(
                [2],
                [[(0, 1, 0, 1.0)]],
                B=np.zeros((1, 0)),
                b=np.array([1.0]),
                c_free=np.zeros(0),
            )
        with pytest.raises(ValueError):
            BlockProblem(
                [2],
                [[(0, 0, 0, 1.0)]],
                B=np.zeros((1, 1)),
                b=np.array([1.0]),
                c_free=np.zeros(2),
            )


class TestExport:
    def test_eigenvalue_export_golden(self):
        text = export_sdpa(eigenvalue_problem())
        assert text == (
            "3\n"
            "2\n"
            "2 -2\n"
            "0 0 1\n"
            "0 2 1 1 -1\n"
            "0 2 2 2 1\n"
            "1 1 1 1 1\n"
            "1 2 1 1 -1\n"
            "1 2 2 2 1\n"
            "2 1 2 2 1\n"
            "2 2 1 1 -1\n"
            "2 2 2 2 1\n"
            "3 1 1 2 0.5\n"
        )

    def test_export_deterministic(self):
        m = lorenz()
        box = Box.from_bounds(m.bounds)
        cfg = RelaxationConfig(d=2, s=1, l=1)
        a = export_sdpa(assemble(m.system, box, cfg))
        b = export_sdpa(assemble(m.system, box, cfg))
        assert a == b

    def test_round_trip_structure(self):
        bp = eigenvalue_problem()
        text = export_sdpa(bp)
        sizes, equalities, B, b, c_free, C = fold_free_pairs(*parse_sdpa(text))
        assert sizes == [2]
        assert np.array_equal(b, bp.b)
        assert np.array_equal(B, bp.B)
        assert np.array_equal(c_free, bp.c_free)
        assert C is None
        rebuilt = BlockProblem(sizes, equalities, B, b, c_free)
        for P, Q in zip(rebuilt.P, bp.P):
            assert (P != Q).nnz == 0

    def test_round_trip_assembled_objective(self):
        m = lorenz()
        p = assemble(
            m.system, Box.from_bounds(m.bounds), RelaxationConfig(d=2, s=1, l=1)
        )
        direct = solve(p)
        text = export_sdpa(p)
        rebuilt = BlockProblem(*fold_free_pairs(*parse_sdpa(text)))
        again = solve_block_problem(rebuilt)
        assert again.status == "optimal"
        assert again.objective == pytest.approx(direct.objective, rel=1e-6)

    def test_free_block_only_when_needed(self):
        text = export_sdpa(sos_problem())
        lines = text.splitlines()
        assert lines[1] == "1"
        assert lines[2] == "2"


class TestReport:
    def test_solution_report_contents(self):
        m = lorenz()
        p = assemble(
            m.system, Box.from_bounds(m.bounds), RelaxationConfig(d=2, s=1, l=1)
        )
        sol = solve(p)
        text = solution_report(p, sol)
        assert "status: optimal" in text
        assert "objective:" in text
        assert "residual primal_infeasibility" in text
        assert text.count("block (") == len(p.blocks)


class TestStandardize:
    def test_matches_equalities(self):
        m = lorenz()
        p = assemble(
            m.system, Box.from_bounds(m.bounds), RelaxationConfig(d=2, s=2, l=2)
        )
        bp = standardize(p)
        assert bp.m == len(p.equalities)
        assert bp.n_free == p.free_count
        assert bp.block_sizes == tuple(b.dimension for b in p.blocks)
        assert np.array_equal(
            bp.c_free, np.asarray(p.objective_free, dtype=float)
        )
        # random assignment: <A_i, X> via P agrees with the entry convention
        rng = np.random.default_rng(11)
        X = []
        for n in bp.block_sizes:
            raw = rng.normal(size=(n, n))
            X.append(0.5 * (raw + raw.T))
        ax = bp.apply_A(X)
        for i, eq in enumerate(p.equalities):
            want = 0.0
            for k, r, c, coef in eq.block_entries:
                want += coef * X[k][r, c] * (1.0 if r == c else 2.0)
            assert ax[i] == pytest.approx(want, abs=1e-10)
