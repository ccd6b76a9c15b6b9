import numpy as np
import pytest

from regsketch import la, problems, statdim


class TestSdExact:
    def test_rank_at_lambda_zero(self):
        assert statdim.sd_exact(np.array([1.0, 1.0, 1.0]), 0.0) == 3.0

    def test_hand_value(self):
        # 9/10 + 4/5 + 1/2 = 2.2
        assert abs(statdim.sd_exact(np.array([3.0, 2.0, 1.0]), 1.0) - 2.2) <= 1e-12

    def test_matrix_input_matches_sigma_input(self):
        rng = la.make_rng(0)
        A = rng.standard_normal((20, 6))
        s = np.linalg.svd(A, compute_uv=False)
        assert abs(statdim.sd_exact(A, 0.7) - statdim.sd_exact(s, 0.7)) <= 1e-10

    def test_monotone_decreasing_in_lambda(self):
        rng = la.make_rng(1)
        A = rng.standard_normal((30, 10))
        vals = [statdim.sd_exact(A, lam) for lam in np.logspace(-3, 3, 20)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.5  # heavy regularization kills the dimension

    def test_rank_tolerance(self):
        A = np.diag([1.0, 1e-14])
        assert abs(statdim.sd_exact(A, 0.0) - 1.0) <= 1e-10


class TestResidualEstimate:
    def test_exact_backend_diag(self):
        A = np.diag([3.0, 2.0, 1.0])
        assert abs(statdim.residual_norm_estimate(A, 2, seed=0, backend="exact") - 1.0) <= 1e-10

    def test_krylov_within_band(self):
        A = np.diag([3.0, 2.0, 1.0])
        est = statdim.residual_norm_estimate(A, 2, seed=0)
        assert 2.0 / 3.0 <= est <= 4.0 / 3.0

    def test_full_z_is_zero(self):
        A = la.make_rng(2).standard_normal((5, 4))
        assert statdim.residual_norm_estimate(A, 4, seed=0) == 0.0

    def test_exact_rank_z_near_zero(self):
        rng = la.make_rng(3)
        A = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 8))  # rank 2
        est = statdim.residual_norm_estimate(A, 2, seed=0, backend="exact")
        assert est <= 1e-10 * np.sum(A * A)


class TestSdEstimate:
    def test_flat_spectrum_trace(self):
        # diag(1,1,1,1), lam=1: z=1 gives gamma=3 > 1; z=2 gives gamma=2 = z, stop.
        # estimate = z' + gamma/lam = 4; sd_exact = 2 sits inside the certificate.
        A = np.diag([1.0, 1.0, 1.0, 1.0])
        est = statdim.sd_estimate(A, 1.0, backend="exact")
        assert est.z_prime == 2
        assert abs(est.estimate - 4.0) <= 1e-10
        assert est.lower <= 2.0 <= est.upper
        assert est.binding

    def test_heavy_regularization_stops_at_one(self):
        rng = la.make_rng(4)
        A = rng.standard_normal((20, 8))
        lam = 100.0 * np.linalg.norm(A, 2) ** 2
        est = statdim.sd_estimate(A, lam, backend="exact")
        assert est.z_prime == 1
        assert est.estimate <= 1.1

    def test_lambda_zero_rejected(self):
        with pytest.raises(ValueError):
            statdim.sd_estimate(np.eye(3), 0.0)

    def test_certificate_deterministic_backend(self):
        # exact residuals make the inequality chain deterministic
        for seed in range(20):
            A, _ = problems.generate_problem(60, 40, seed, kind="power")
            for lam in (1e-2, 1e-1, 1.0, 10.0):
                est = statdim.sd_estimate(A, lam, backend="exact")
                exact = statdim.sd_exact(A, lam)
                assert est.lower <= exact + 1e-9
                assert exact <= est.upper + 1e-9

    def test_upper_bound_identity(self):
        # sd_lam(A) <= z + ||A - A_z||_F^2 / lam for every z
        rng = la.make_rng(5)
        s = np.sort(rng.random(12))[::-1]
        lam = 0.3
        sd = statdim.sd_exact(s, lam)
        for z in range(1, 12):
            resid = float(np.sum(s[z:] ** 2))
            assert sd <= z + resid / lam + 1e-12

    def test_randomized_backend_constant_factor(self):
        hits = 0
        runs = 40
        for seed in range(runs):
            A, _ = problems.generate_problem(80, 50, seed, kind="power")
            est = statdim.sd_estimate(A, 0.1, seed=seed)
            exact = statdim.sd_exact(A, 0.1)
            hits += est.estimate / 16.0 <= exact <= 1.5 * est.estimate
        assert hits >= int(0.95 * runs)
