import mpmath
import numpy as np
import pytest

from gigamae import diffmath as dm
from gigamae.diffmath import GradTape, Tensor, grad_check

from gradcases import OP_CASES, model_cases

INSTANCES = 20


class TestGradCheck:
    @pytest.mark.parametrize("name", sorted(OP_CASES))
    def test_op(self, name):
        rng = np.random.default_rng(abs(hash(name)) % (1 << 32))
        worst = 0.0
        for _ in range(INSTANCES):
            f, params = OP_CASES[name](rng)
            report = grad_check(f, params, tolerance=1e-4)
            worst = max(worst, report.max_rel_error)
        assert worst <= 1e-4, f"{name}: {worst:.3e}"

    def test_linear_function_exact(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), True)
        with GradTape() as tape:
            y = dm.sum(x)
        np.testing.assert_array_equal(tape.gradient(y, [x])[0], np.ones((3, 4)))
        assert grad_check(lambda: dm.sum(x), [x]).max_rel_error < 1e-9

    def test_model_cases(self):
        rng = np.random.default_rng(5)
        for name, (f, params) in model_cases(rng).items():
            report = grad_check(f, params)
            assert report.passed, f"{name}: {report.max_rel_error:.3e}"

    def test_reports_failure(self):
        x = Tensor(np.ones((2, 2)), True)

        def wrong():
            # forward says sum(2x) but the tape records sum(x)
            out = dm.sum(x)
            out.data = out.data * 2
            return out

        assert not grad_check(wrong, [x]).passed

    def test_non_finite_probe(self):
        x = Tensor(np.array([[1e-6]]), True)
        with pytest.raises(FloatingPointError):
            grad_check(lambda: dm.sum(dm.log(x)), [x], h=1e-5)


class TestTape:
    def test_unused_source_gets_zeros(self):
        x, y = Tensor(np.ones((2, 2)), True), Tensor(np.ones((3, 1)), True)
        with GradTape() as tape:
            out = dm.sum(dm.scale(x, 3.0))
        gx, gy = tape.gradient(out, [x, y])
        np.testing.assert_array_equal(gx, np.full((2, 2), 3.0))
        np.testing.assert_array_equal(gy, np.zeros((3, 1)))

    def test_reverse_order_and_accumulation(self):
        x = Tensor(np.array([[2.0]]), True)
        with GradTape() as tape:
            y = dm.mul(x, x)
            z = dm.add(y, x)
        assert tape.ops == ["mul", "add"]
        np.testing.assert_allclose(tape.gradient(z, [x])[0], [[5.0]])

    def test_constants_not_recorded(self):
        with GradTape() as tape:
            dm.exp(Tensor(np.zeros((2, 2))))
        assert tape.ops == []

    def test_non_finite_forward_raises(self):
        with pytest.raises(FloatingPointError, match="exp"), np.errstate(over="ignore"):
            dm.exp(Tensor(np.array([[1e4]])))

    def test_operators(self):
        a, b = Tensor(np.array([[1.0, 2.0]])), Tensor(np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal((a + b).data, [[4, 6]])
        np.testing.assert_array_equal((a - b).data, [[-2, -2]])
        np.testing.assert_array_equal((a * b).data, [[3, 8]])
        np.testing.assert_array_equal((-a).data, [[-1, -2]])
        np.testing.assert_array_equal((a @ b.T).data, [[11]])


class TestCosine:
    def test_orthonormal(self):
        e = np.eye(2)
        np.testing.assert_allclose(dm.cosine_matrix(e, e).data, e, atol=1e-12)

    def test_anti_parallel(self):
        np.testing.assert_allclose(dm.cosine_matrix([[1.0, 1.0]], [[-1.0, -1.0]]).data, [[-1.0]], atol=1e-15)

    def test_brute_force_pairs(self):
        rng = np.random.default_rng(1)
        p, q = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        got = dm.cosine_matrix(p, q).data
        for i in range(3):
            for j in range(5):
                want = p[i] @ q[j] / (np.linalg.norm(p[i]) * np.linalg.norm(q[j]))
                assert abs(got[i, j] - want) <= 1e-12

    def test_bounded(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = rng.normal(size=(6, 3)) * rng.choice([1e-8, 1, 1e8])
            c = dm.cosine_matrix(p, p).data
            assert c.min() >= -1 - 1e-9 and c.max() <= 1 + 1e-9

    def test_zero_row_is_finite(self):
        c = dm.cosine_matrix(np.zeros((2, 3)), np.ones((2, 3))).data
        np.testing.assert_array_equal(c, np.zeros((2, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dm.cosine_matrix(np.ones((2, 3)), np.ones((2, 4)))


class TestLogSumExp:
    def test_constant_row(self):
        np.testing.assert_allclose(dm.logsumexp_rows([[0.0, 0.0]]).data, [[np.log(2)]], rtol=0, atol=1e-15)

    def test_no_overflow(self):
        out = dm.logsumexp_rows([[1000.0, 1000.0]]).data
        assert out[0, 0] == 1000 + np.log(2)

    def test_extended_precision_oracle(self):
        rng = np.random.default_rng(3)
        mpmath.mp.dps = 40
        for _ in range(50):
            row = rng.normal(scale=5, size=int(rng.integers(1, 30)))
            want = float(mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(float(v))) for v in row)))
            got = dm.logsumexp_rows(row.reshape(1, -1)).data[0, 0]
            assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_bounds(self):
        rng = np.random.default_rng(4)
        m = rng.normal(scale=3, size=(40, 7))
        out = dm.logsumexp_rows(m).data.ravel()
        assert np.all(out >= m.max(axis=1)) and np.all(out <= m.max(axis=1) + np.log(7) + 1e-12)

    def test_mask(self):
        m = np.array([[0.0, 50.0, 0.0]])
        out = dm.logsumexp_rows(m, np.array([[True, False, True]])).data
        np.testing.assert_allclose(out, [[np.log(2)]])

    def test_empty_mask_row(self):
        with pytest.raises(ValueError):
            dm.logsumexp_rows(np.zeros((2, 2)), np.array([[True, False], [False, False]]))


class TestContrastiveLogRatio:
    def test_matches_masked_logsumexp(self):
        rng = np.random.default_rng(6)
        n = 5
        cross, intra = rng.normal(size=(n, n)), rng.normal(size=(n, n))
        mask = np.concatenate([np.ones((n, n), bool), ~np.eye(n, dtype=bool)], axis=1)
        want = np.diag(cross).reshape(-1, 1) - dm.logsumexp_rows(np.hstack([cross, intra]), mask).data
        np.testing.assert_allclose(dm.contrastive_log_ratio(cross, intra).data, want, atol=1e-13)
        want_t = np.diag(cross).reshape(-1, 1) - dm.logsumexp_rows(np.hstack([cross.T, intra]), mask).data
        np.testing.assert_allclose(dm.contrastive_log_ratio(cross, intra, columns=True).data, want_t, atol=1e-13)

    def test_non_positive(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 8))
            out = dm.contrastive_log_ratio(rng.normal(size=(n, n)), rng.normal(size=(n, n))).data
            assert np.all(out <= 0)


class TestSvd:
    def test_identity(self):
        _, s, _ = dm.svd_topk(np.eye(3), 3)
        np.testing.assert_allclose(s, [1, 1, 1])

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        m = np.outer(rng.normal(size=6), rng.normal(size=4))
        u, s, v = dm.svd_topk(m, 1)
        np.testing.assert_allclose(u * s @ v.T, m, atol=1e-10)

    def test_random_full_rank_vs_gram_eig(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(20, 8))
        u, s, v = dm.svd_topk(m, 8)
        assert np.abs(u * s @ v.T - m).max() <= 1e-8
        np.testing.assert_allclose(u.T @ u, np.eye(8), atol=1e-8)
        np.testing.assert_allclose(v.T @ v, np.eye(8), atol=1e-8)
        evals, evecs = np.linalg.eigh(m.T @ m)
        np.testing.assert_allclose(s, np.sqrt(evals[::-1]), rtol=1e-10)
        # same directions up to sign
        np.testing.assert_allclose(np.abs(v.T @ evecs[:, ::-1]), np.eye(8), atol=1e-8)

    def test_ordering_and_sign(self):
        rng = np.random.default_rng(2)
        _, s, v = dm.svd_topk(rng.normal(size=(15, 6)), 4)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        pivots = np.abs(v).argmax(axis=0)
        assert np.all(v[pivots, np.arange(4)] > 0)

    def test_best_rank_k(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(12, 7))
        u, s, v = dm.svd_topk(m, 3)
        full = np.linalg.svd(m, compute_uv=False)
        err = np.linalg.norm(m - u * s @ v.T)
        np.testing.assert_allclose(err, np.sqrt((full[3:] ** 2).sum()), rtol=1e-10)

    @pytest.mark.parametrize("k", [0, 5])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError):
            dm.svd_topk(np.ones((4, 4)), k)
