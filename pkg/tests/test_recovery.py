"""
Unit tests for Basis Pursuit recovery and image metrics
"""
import numpy as np
import pytest
from scipy.optimize import linprog

from app.models.errors import DimensionMismatchError, KeyMismatchError
from app.models.image import GrayImage
from app.models.recovery import SolverConfig
from app.models.sensing import SensingDomain
from app.models.wavelet import DEFAULT_LEVELS
from app.services import dataset_service, recovery_service, sensing_service
from app.utils import metrics


def l1_oracle(A, y):
    """Minimum-l1 solution of A w = y by linear programming over w = u - v."""
    m, n = A.shape
    result = linprog(
        np.ones(2 * n),
        A_eq=np.hstack([A, -A]),
        b_eq=y,
        bounds=[(0, None)] * (2 * n),
        method="highs",
    )
    assert result.status == 0
    return result.x[:n] - result.x[n:]


class TestSolveBp:
    """Test suite for the ADMM Basis Pursuit solver"""

    def test_zero_measurement(self):
        """Test: y = 0 returns the zero vector without iterating"""
        A = np.ones((3, 10))
        solution = recovery_service.solve_bp(A, np.zeros(3))
        assert solution.iterations == 0
        assert solution.converged
        assert np.array_equal(solution.coeffs, np.zeros(10))

    def test_sparse_vector_recovered(self, rng):
        """Test: A 5-sparse vector is recovered from 40 Gaussian measurements"""
        A = rng.normal(size=(40, 100))
        truth = np.zeros(100)
        truth[rng.choice(100, 5, replace=False)] = rng.normal(size=5) * 3
        solution = recovery_service.solve_bp(A, A @ truth)
        assert solution.converged
        assert np.max(np.abs(solution.coeffs - truth)) < 1e-4

    def test_matches_linear_program(self, rng):
        """Test: The l1 optimum agrees with an LP solve on a dense target"""
        A = rng.normal(size=(12, 30))
        y = A @ rng.normal(size=30)
        solution = recovery_service.solve_bp(A, y, SolverConfig(tol_abs=1e-9, tol_rel=1e-9, max_iterations=20000))
        assert solution.l1_norm == pytest.approx(np.abs(l1_oracle(A, y)).sum(), rel=1e-4)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_small_instance_matches_linear_program_solution(self, seed):
        """Test: On N = 20 the solver returns the LP minimiser within 1e-5"""
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(10, 20))
        y = A @ rng.normal(size=20)
        cfg = SolverConfig(tol_abs=1e-10, tol_rel=1e-10, max_iterations=50000)
        solution = recovery_service.solve_bp(A, y, cfg)
        assert np.max(np.abs(solution.coeffs - l1_oracle(A, y))) < 1e-5

    def test_binary_sensing_recovers_sparse_vectors(self):
        """Test: 4-sparse N = 64 vectors come back from 32 binary measurements in at least 95 of 100 trials"""
        recovered = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            A = rng.integers(0, 2, size=(32, 64)).astype(float)
            truth = np.zeros(64)
            support = rng.choice(64, 4, replace=False)
            truth[support] = rng.choice([-1.0, 1.0], size=4) * rng.uniform(1.0, 2.0, size=4)
            solution = recovery_service.solve_bp(A, A @ truth)
            if np.linalg.norm(solution.coeffs - truth) < 1e-3 * np.linalg.norm(truth):
                recovered += 1
        assert recovered >= 95

    def test_solution_is_feasible(self, rng):
        """Test: Returned coefficients satisfy A w = y within tolerance"""
        A = rng.integers(0, 2, size=(20, 64)).astype(float)
        y = A @ rng.normal(size=64)
        cfg = SolverConfig()
        solution = recovery_service.solve_bp(A, y, cfg)
        assert np.linalg.norm(A @ solution.coeffs - y) <= cfg.feasibility_tolerance(np.linalg.norm(y))

    def test_square_system_has_unique_answer(self, rng):
        """Test: With M = N the only feasible point is returned"""
        A = rng.normal(size=(8, 8)) + 4 * np.eye(8)
        truth = rng.normal(size=8)
        solution = recovery_service.solve_bp(A, A @ truth)
        assert np.allclose(solution.coeffs, truth, atol=1e-6)

    def test_objective_trace_never_increases(self, rng):
        """Test: Best-so-far l1 trace is monotone"""
        A = rng.normal(size=(15, 60))
        solution = recovery_service.solve_bp(A, A @ rng.normal(size=60))
        trace = np.asarray(solution.objective_trace)
        assert trace.size > 0
        assert np.all(np.diff(trace) <= 0)

    def test_iteration_cap_reports_nonconvergence(self, rng, memory_logger):
        """Test: Hitting the cap returns converged=False and logs a warning"""
        A = rng.normal(size=(15, 60))
        y = A @ rng.normal(size=60)
        cfg = SolverConfig(max_iterations=1, polish=False)
        solution = recovery_service.solve_bp(A, y, cfg, logger=memory_logger)
        assert not solution.converged
        assert solution.iterations == 1
        assert len(memory_logger.query_events(event_type="solver_nonconvergence")) == 1

    def test_length_mismatch_rejected(self):
        """Test: y must have one entry per row of A"""
        with pytest.raises(DimensionMismatchError):
            recovery_service.solve_bp(np.ones((3, 5)), np.ones(4))

    def test_rank_deficient_operator_rejected(self):
        """Test: Duplicate rows make A A' singular"""
        A = np.vstack([np.arange(6.0), np.arange(6.0)])
        with pytest.raises(ValueError, match="rank deficient"):
            recovery_service.solve_bp(A, np.array([1.0, 1.0]))


class TestSensingOperator:
    """Test suite for the composite operator phi psi"""

    def test_pixel_operator_adjoint(self, rng):
        """Test: <A w, r> equals <w, A' r> for the pixel path"""
        matrix = sensing_service.gen_sensing_matrix(6, 3500, 2, SensingDomain.PIXEL)
        op = recovery_service.sensing_operator(matrix)
        w = rng.normal(size=8192)
        r = rng.normal(size=6)
        assert np.dot(op.matvec(w), r) == pytest.approx(np.dot(w, op.rmatvec(r)), rel=1e-10)

    def test_pixel_operator_gram_is_phi_phi_transpose(self, rng):
        """Test: A A' reduces to phi phi' because crop-after-synthesis is a co-isometry"""
        matrix = sensing_service.gen_sensing_matrix(4, 3500, 2, SensingDomain.PIXEL)
        op = recovery_service.sensing_operator(matrix)
        gram = op.matmat(op.rmatmat(np.eye(4)))
        dense = matrix.dense()
        assert np.allclose(gram, dense @ dense.T, atol=1e-8)

    def test_pixel_operator_reproduces_measurement(self):
        """Test: A applied to the image's coefficients gives the hardware measurement"""
        from app.services import wavelet_service

        img = dataset_service.render_word("OWL")
        matrix = sensing_service.gen_sensing_matrix(10, 3500, 8, SensingDomain.PIXEL)
        op = recovery_service.sensing_operator(matrix)
        coeffs = wavelet_service.image_coeffs(img, DEFAULT_LEVELS).coeffs
        assert np.allclose(op.matvec(coeffs), sensing_service.measure_pixels(matrix, img).values)


class TestRecover:
    """Test suite for image-level reconstruction"""

    def test_wrong_key_rejected(self):
        """Test: A measurement carrying another seed is refused"""
        img = dataset_service.render_word("OWL")
        y = sensing_service.measure(sensing_service.gen_sensing_matrix(10, 8192, 1), img)
        with pytest.raises(KeyMismatchError):
            recovery_service.recover(sensing_service.gen_sensing_matrix(10, 8192, 2), y)

    def test_wrong_domain_rejected(self):
        """Test: Pixel measurements cannot be solved with a wavelet key"""
        img = dataset_service.render_word("OWL")
        y = sensing_service.measure(sensing_service.gen_sensing_matrix(10, 3500, 1, SensingDomain.PIXEL), img)
        with pytest.raises(DimensionMismatchError):
            recovery_service.recover(sensing_service.gen_sensing_matrix(10, 8192, 1), y)

    def test_reconstruction_is_clamped(self):
        """Test: Reconstructed pixels stay in [0, 1]"""
        img = dataset_service.render_word("OWL")
        matrix = sensing_service.gen_sensing_matrix(10, 8192, 1)
        result = recovery_service.recover(matrix, sensing_service.measure(matrix, img))
        assert result.image.pixels.shape == (35, 100)
        assert result.image.pixels.min() >= 0.0 and result.image.pixels.max() <= 1.0

    def test_fewer_measurements_give_lower_psnr(self):
        """Test: The M = 10 reconstruction scores below the M = 200 one for the same word and seed"""
        img = dataset_service.render_word("OWL")
        scores = {}
        for m in (200, 10):
            matrix = sensing_service.gen_sensing_matrix(m, 8192, 1)
            image = recovery_service.reconstruct_image(matrix, sensing_service.measure(matrix, img))
            scores[m] = metrics.psnr(image, img)
        assert scores[10] < scores[200]

    def test_reconstruction_is_deterministic(self):
        """Test: The same key and measurement rebuild the same pixels"""
        img = dataset_service.render_word("OWL")
        matrix = sensing_service.gen_sensing_matrix(20, 8192, 4)
        y = sensing_service.measure(matrix, img)
        first = recovery_service.reconstruct_image(matrix, y)
        second = recovery_service.reconstruct_image(sensing_service.gen_sensing_matrix(20, 8192, 4), y)
        assert np.array_equal(first.pixels, second.pixels)

    def test_blank_page_recovered_from_200_measurements(self):
        """Test: A blank label is 2-sparse at the default depth and comes back almost exactly"""
        blank = GrayImage.blank()
        matrix = sensing_service.gen_sensing_matrix(200, 8192, 5)
        result = recovery_service.recover(matrix, sensing_service.measure(matrix, blank))
        assert result.solution.converged
        assert np.mean(np.abs(result.image.pixels - blank.pixels)) < 0.05

    def test_blank_page_readable_at_small_m(self):
        """Test: Fifty measurements already give a high-PSNR blank"""
        blank = GrayImage.blank()
        matrix = sensing_service.gen_sensing_matrix(50, 8192, 5)
        image = recovery_service.reconstruct_image(matrix, sensing_service.measure(matrix, blank))
        assert metrics.psnr(image, blank) > 40.0

    def test_discarded_key_measurement_accepted_with_matrix(self):
        """Test: A seedless measurement is solvable when the caller holds the matrix"""
        img = dataset_service.render_word("OWL")
        matrix = sensing_service.gen_sensing_matrix(10, 8192, 1)
        y = sensing_service.measure(matrix, img, keep_key=False)
        assert recovery_service.recover(matrix, y).image.pixels.shape == (35, 100)


class TestMetrics:
    """Test suite for PSNR and legibility"""

    def test_identical_images_infinite_psnr(self):
        """Test: Zero MSE gives infinite PSNR"""
        img = dataset_service.render_word("DOG")
        assert metrics.psnr(img, img) == float("inf")

    def test_black_versus_white_is_zero_db(self):
        """Test: MSE of 1 is 0 dB"""
        assert metrics.psnr(GrayImage.blank(value=0.0), GrayImage.blank(value=1.0)) == pytest.approx(0.0)

    def test_half_grey_is_six_db(self):
        """Test: MSE of 0.25 is 6.0206 dB"""
        value = metrics.psnr(GrayImage.blank(value=0.0), GrayImage.blank(value=0.5))
        assert value == pytest.approx(6.0206, abs=1e-4)

    def test_shape_mismatch_rejected(self):
        """Test: Images must share a shape"""
        with pytest.raises(DimensionMismatchError):
            metrics.psnr(GrayImage.blank(10, 10), GrayImage.blank(10, 11))

    def test_constant_image_correlation_is_zero(self):
        """Test: Correlation with a flat image is defined as 0"""
        assert metrics.correlation(GrayImage.blank(), dataset_service.render_word("DOG")) == 0.0

    def test_true_rendering_is_legible(self):
        """Test: The clean word beats unrelated decoys"""
        truth = dataset_service.render_word("DOG")
        decoys = [dataset_service.render_word(w) for w in ("ZZZ", "QQQ", "MMM", "XYZ", "WWW")]
        assert metrics.is_legible(truth, truth, decoys)

    def test_blank_reconstruction_is_illegible(self):
        """Test: A flat reconstruction correlates with nothing"""
        truth = dataset_service.render_word("DOG")
        decoys = [dataset_service.render_word(w) for w in ("ZZZ", "QQQ", "MMM")]
        assert not metrics.is_legible(GrayImage.blank(), truth, decoys)

    def test_decoys_required(self):
        """Test: Legibility needs at least one decoy"""
        truth = dataset_service.render_word("DOG")
        with pytest.raises(ValueError):
            metrics.is_legible(truth, truth, [])
