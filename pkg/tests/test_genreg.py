import itertools
import math

import numpy as np
import pytest

from regsketch import genreg, la, lowrank
from regsketch import sketch as sk


MEASURES = genreg.builtin_measures()


class TestMeasures:
    def test_nuclear_hand_value(self):
        assert abs(MEASURES["nuclear"].evaluate(np.diag([3.0, 2.0, 1.0])) - 6.0) <= 1e-12

    def test_vnorm1_hand_value(self):
        assert abs(MEASURES["vnorm_1"].evaluate(np.array([[3.0, 4.0], [0.0, 0.0]])) - 5.0) <= 1e-12

    def test_vnorm_not_left_invariant(self):
        # one seeded rotation changing the value certifies the absent flag
        rng = la.make_rng(0, 71)
        A = rng.standard_normal((4, 3))
        Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        v = MEASURES["vnorm_1"]
        assert abs(v.evaluate(Q @ A) - v.evaluate(A)) > 1e-4
        assert not v.flags.left_orthogonal_invariant

    def test_false_flag_rejected(self):
        bogus = genreg.MatrixMeasure(
            "bogus_vnorm",
            MEASURES["vnorm_1"].evaluate,
            genreg.MeasureFlags(True, True, True, True),
        )
        with pytest.raises(genreg.MeasureFlagError):
            genreg.spot_check_measure(bogus)

    def test_padding_invariance(self):
        rng = la.make_rng(1, 71)
        A = rng.standard_normal((5, 4))
        for m in MEASURES.values():
            if not m.flags.padding_invariant:
                continue
            base = m.evaluate(A)
            assert abs(m.evaluate(np.vstack([A, np.zeros((3, 4))])) - base) <= 1e-10
            assert abs(m.evaluate(np.hstack([A, np.zeros((5, 2))])) - base) <= 1e-10

    def test_contraction_never_increases(self):
        rng = la.make_rng(2, 71)
        A = rng.standard_normal((5, 4))
        for trial in range(20):
            # convex combination of orthogonal matrices has spectral norm <= 1
            w = rng.random(3)
            w /= w.sum()
            P = sum(
                wi * np.linalg.qr(rng.standard_normal((5, 5)))[0] for wi in w
            )
            for m in MEASURES.values():
                if m.flags.left_orthogonal_invariant and m.flags.subadditive:
                    assert m.evaluate(P @ A) <= m.evaluate(A) + 1e-9

    def test_scaled_measure(self):
        m = genreg.scaled(MEASURES["nuclear"], 3.0)
        assert abs(m.evaluate(np.diag([2.0, 1.0])) - 9.0) <= 1e-12


class TestPermutationProperty:
    def test_exhaustive_search_finds_dominating_permutation(self):
        # for diagonal E and D and orthogonal R, some reordering of E's
        # diagonal makes the unrotated product no larger than the rotated one,
        # for the Frobenius and nuclear norms
        fro = MEASURES["schatten_2"].evaluate
        nuc = MEASURES["nuclear"].evaluate
        for seed in range(50):
            rng = la.make_rng(seed, 73)
            n = int(rng.integers(2, 7))
            e = rng.standard_normal(n)
            D = np.diag(rng.random(n) + 0.1)
            R = np.linalg.qr(rng.standard_normal((n, n)))[0]
            for g in (fro, nuc):
                target = g(np.diag(e) @ R @ D)
                best = min(
                    g(np.diag(e[list(p)]) @ D) for p in itertools.permutations(range(n))
                )
                assert best <= target + 1e-9


class TestDiagSolver:
    def test_trace_variant_hand_case(self):
        w, z = genreg.diag_solver_shrink(np.array([3.0, 2.0]), 1.5, "frob+trace")
        np.testing.assert_allclose(w, [math.sqrt(1.5), math.sqrt(0.5)], atol=1e-12)
        np.testing.assert_allclose(z, w, atol=0)

    def test_lambda_zero_square_roots(self):
        s = np.array([4.0, 1.0, 0.25])
        w, z = genreg.diag_solver_shrink(s, 0.0, "frob+trace")
        np.testing.assert_allclose(w * z, s, atol=1e-12)

    def test_frob_product_variant(self):
        w, _ = genreg.diag_solver_shrink(np.array([4.0, 1.0]), 1.0, "frob+frobYX")
        np.testing.assert_allclose(w, [math.sqrt(2.0), math.sqrt(0.5)], atol=1e-12)

    def test_schatten_continuity_at_small_lambda(self):
        s = np.array([3.0, 2.0, 1.0])
        w_ref, _ = genreg.diag_solver_shrink(s, 1e-8, "frob+trace")
        w, _ = genreg.diag_solver_shrink(s, 1e-8, "schattenp+trace", schatten_p=2.0)
        np.testing.assert_allclose(w, w_ref, atol=1e-6)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            genreg.diag_solver_shrink(np.array([1.0, 2.0]), 0.5)
        with pytest.raises(ValueError):
            genreg.diag_solver_shrink(np.array([2.0, 1.0]), 0.5, "no_such_variant")


class TestDiagReduction:
    def test_matches_closed_form_shrink(self):
        rng = la.make_rng(3, 73)
        A = rng.standard_normal((7, 5))
        lam = 0.6
        ref = lowrank.solve_exact_shrink(A, 3, lam)
        got = genreg.solve_diag_reduction(
            A, 3, genreg.ridge_pair(lam), lambda s: genreg.diag_solver_shrink(s, lam)
        )
        np.testing.assert_allclose(got.Y @ got.X, ref.Y @ ref.X, atol=1e-10)
        assert abs(got.objective - ref.objective) <= 1e-10

    def test_product_frobenius_hand_case(self):
        got = genreg.solve_diag_reduction(
            np.diag([4.0, 1.0]),
            1,
            genreg.product_fro_pair(1.0),
            lambda s: genreg.diag_solver_shrink(s, 1.0, "frob+frobYX"),
        )
        np.testing.assert_allclose(got.Y @ got.X, np.diag([2.0, 0.0]), atol=1e-10)

    def test_all_shrunk_to_zero(self):
        got = genreg.solve_diag_reduction(
            np.diag([3.0, 2.0, 1.0]),
            2,
            genreg.ridge_pair(5.0),
            lambda s: genreg.diag_solver_shrink(s, 5.0),
        )
        assert np.all(got.Y == 0) and np.all(got.X == 0)

    def test_flag_violation_rejected(self):
        noflags = genreg.MeasureFlags()
        bad = genreg.PairMeasure("bad", lambda Y, X: 0.0, noflags, noflags)
        with pytest.raises(genreg.MeasureFlagError):
            genreg.solve_diag_reduction(np.eye(3), 1, bad, lambda s: (s, s))

    def test_diagonal_core_brute_force_dominance(self):
        lam = 0.8
        pair = genreg.ridge_pair(lam)
        for seed in range(3):
            rng = la.make_rng(seed, 79)
            s = np.sort(rng.random(4) * 3.0)[::-1]
            A = np.diag(s)
            opt = genreg.solve_diag_reduction(
                A, 4, pair, lambda sig: genreg.diag_solver_shrink(sig, lam)
            )
            for _ in range(10_000):
                w = np.abs(rng.standard_normal(4)) * 1.5
                z = np.abs(rng.standard_normal(4)) * 1.5
                cand = float(np.sum((w * z - s) ** 2)) + lam * float(
                    np.sum(w * w) + np.sum(z * z)
                )
                assert opt.objective <= cand + 1e-9


def _exact_mr_ridge(A, B, lam):
    d = A.shape[1]
    X = np.linalg.solve(A.T @ A + lam * np.eye(d), A.T @ B)
    R = A @ X - B
    return X, float(np.sum(R * R)) + lam * float(np.sum(X * X))


class TestGeneralRegression:
    def test_identity_collapse_matches_ridge(self):
        rng = la.make_rng(4, 73)
        A = rng.standard_normal((40, 6))
        B = rng.standard_normal((40, 3))
        lam = 0.7
        f = genreg.scaled(MEASURES["frobenius_sq"], lam)
        X, obj = genreg.solve_general_regression(
            A, B, f, genreg.ridge_small_solver(lam), 0.5,
            identity_sketches=True, assume_inheritance=True,
        )
        X_ref, obj_ref = _exact_mr_ridge(A, B, lam)
        np.testing.assert_allclose(X, X_ref, atol=1e-6)
        assert abs(obj - obj_ref) <= 1e-6 * obj_ref

    def test_policy_sketches_near_optimal(self):
        lam = 0.5
        hits = 0
        for seed in range(10):
            rng = la.make_rng(seed, 75)
            A = rng.standard_normal((2000, 8))
            B = A @ rng.standard_normal((8, 3)) + 0.1 * rng.standard_normal((2000, 3))
            f = genreg.scaled(MEASURES["frobenius_sq"], lam)
            _, obj = genreg.solve_general_regression(
                A, B, f, genreg.ridge_small_solver(lam), 0.5,
                seed=seed, assume_inheritance=True,
            )
            _, obj_ref = _exact_mr_ridge(A, B, lam)
            hits += obj <= 1.5 * obj_ref + 1e-12
        assert hits >= 8

    def test_vnorm_prox_vs_full_direct_solve(self):
        lam = 0.3
        hits = 0
        for seed in range(10):
            rng = la.make_rng(seed, 77)
            A = rng.standard_normal((50, 20))
            B = rng.standard_normal((50, 4))
            f = genreg.scaled(MEASURES["vnorm_2"], lam)
            solver = genreg.prox_small_solver(f)
            _, obj = genreg.solve_general_regression(A, B, f, solver, 0.5, seed=seed)
            Z_full = solver(A, B)
            R = A @ Z_full - B
            obj_full = float(np.sum(R * R)) + f.evaluate(Z_full)
            hits += obj <= 1.5 * obj_full + 1e-12
        assert hits >= 8

    def test_missing_flags_rejected(self):
        bad = genreg.MatrixMeasure("bad", lambda Z: 0.0, genreg.MeasureFlags())
        with pytest.raises(genreg.MeasureFlagError):
            genreg.solve_general_regression(
                np.eye(3), np.eye(3), bad, genreg.ridge_small_solver(1.0), 0.5
            )
        with pytest.raises(genreg.MeasureFlagError):
            genreg.solve_general_regression(
                np.eye(3), np.eye(3), bad, genreg.ridge_small_solver(1.0), 0.5,
                assume_inheritance=True,
            )


class TestGeneralLowRank:
    def test_identity_collapse_matches_shrink(self):
        rng = la.make_rng(5, 73)
        A = rng.standard_normal((15, 11))
        lam = 0.4
        ref = lowrank.solve_exact_shrink(A, 4, lam)
        got = genreg.solve_general_lowrank(
            A, 4, genreg.ridge_pair(lam),
            lambda s: genreg.diag_solver_shrink(s, lam),
            0.5, identity_sketches=True,
        )
        assert abs(got.objective - ref.objective) <= 1e-6 * ref.objective

    def test_nuclear_product_trace_variant(self):
        # penalty 2*lam*||YX||_(1) with the trace-variant diagonal solver
        # reproduces the sqrt((Sigma - lam)_+) construction
        rng = la.make_rng(6, 73)
        A = rng.standard_normal((12, 9))
        lam = 0.5
        ref = lowrank.solve_exact_shrink(A, 3, lam)
        got = genreg.solve_general_lowrank(
            A, 3, genreg.nuclear_product_pair(lam),
            lambda s: genreg.diag_solver_shrink(s, lam, "frob+trace"),
            0.5, identity_sketches=True,
        )
        np.testing.assert_allclose(got.Y @ got.X, ref.Y @ ref.X, atol=1e-6)

    def test_policy_sketches_near_optimal(self):
        lam = 0.6
        hits = 0
        for seed in range(10):
            rng = la.make_rng(seed, 81)
            A = rng.standard_normal((400, 50)) @ rng.standard_normal((50, 300)) / 50.0
            A += 0.01 * rng.standard_normal((400, 300))
            ref = lowrank.solve_exact_shrink(A, 8, lam)
            got = genreg.solve_general_lowrank(
                A, 8, genreg.ridge_pair(lam),
                lambda s: genreg.diag_solver_shrink(s, lam),
                0.5, seed=seed,
            )
            hits += got.objective <= 1.5 * ref.objective + 1e-12
        assert hits >= 8

    def test_flag_violation_rejected(self):
        noflags = genreg.MeasureFlags()
        bad = genreg.PairMeasure("bad", lambda Y, X: 0.0, noflags, noflags)
        with pytest.raises(genreg.MeasureFlagError):
            genreg.solve_general_lowrank(np.eye(4), 2, bad, lambda s: (s, s), 0.5)
