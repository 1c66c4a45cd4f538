"""
Recovery Service - Best-case Basis Pursuit reconstruction with the exact key
ADMM over the affine set {w : A w = y} with soft-thresholding
"""

import time
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lstsq
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from app.models.errors import DimensionMismatchError, KeyMismatchError, NonFiniteFeatureError
from app.models.image import IMAGE_HEIGHT, IMAGE_WIDTH, GrayImage
from app.models.recovery import BpSolution, Reconstruction, SolverConfig
from app.models.sensing import Measurement, SensingDomain, SensingMatrix
from app.models.wavelet import DEFAULT_LEVELS
from app.services import wavelet_service
from app.utils.metrics import psnr
from app.utils.run_logger import RunLogger

OperatorLike = Union[np.ndarray, LinearOperator]

__all__ = [
    "GramFactor",
    "gram_factor",
    "psnr",
    "reconstruct_image",
    "recover",
    "sensing_operator",
    "soft_threshold",
    "solve_bp",
]


class GramFactor:
    """
    Cholesky factor of A A^T, shared read-only across solves.

    The projection onto {w : A w = y} only needs (A A^T)^-1, so one
    factorisation per sensing matrix serves every image measured with it.
    """

    def __init__(self, gram: np.ndarray):
        gram = np.asarray(gram, dtype=np.float64)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
            raise DimensionMismatchError(f"Gram matrix must be square, got {gram.shape}")
        self.m = gram.shape[0]
        try:
            self._factor = cho_factor(0.5 * (gram + gram.T), lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sensing operator is rank deficient (A A^T not positive definite)") from exc

    @classmethod
    def from_operator(cls, op: LinearOperator) -> "GramFactor":
        m = op.shape[0]
        return cls(op.matmat(op.rmatmat(np.eye(m))))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._factor, rhs)


@lru_cache(maxsize=16)
def gram_factor(matrix: SensingMatrix) -> GramFactor:
    """A A^T = phi phi^T for both domains (the wavelet synthesis is orthonormal)."""
    dense = matrix.dense()
    return GramFactor(dense @ dense.T)


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _polish(op: LinearOperator, y: np.ndarray, support: np.ndarray) -> Optional[np.ndarray]:
    """Least-squares refit restricted to `support`; None when it cannot apply."""
    m, n = op.shape
    if support.size == 0 or support.size > m:
        return None
    columns = np.zeros((n, support.size))
    columns[support, np.arange(support.size)] = 1.0
    restricted = op.matmat(columns)
    values, _, rank, _ = lstsq(restricted, y)
    if rank < support.size:
        return None
    candidate = np.zeros(n)
    candidate[support] = values
    return candidate


def solve_bp(
    A: OperatorLike,
    y: Union[np.ndarray, Measurement],
    cfg: Optional[SolverConfig] = None,
    gram: Optional[GramFactor] = None,
    logger: Optional[RunLogger] = None
) -> BpSolution:
    """
    Solve minimize ||w||_1 subject to A w = y.

    The x-iterate is the Euclidean projection onto the constraint set, so
    the returned coefficients are feasible up to round-off whatever the
    iteration count.

    Args:
        A: Dense matrix or LinearOperator (only matvec/rmatvec are used)
        y: Measurement vector of length M
        cfg: Solver settings (defaults when omitted)
        gram: Pre-computed factor of A A^T, reused across images
        logger: Receives a warning event when the iteration cap is hit

    Returns:
        BpSolution; converged=False is reported, never raised
    """
    cfg = cfg or SolverConfig()
    op = aslinearoperator(A)
    m, n = op.shape
    values = y.values if isinstance(y, Measurement) else np.asarray(y, dtype=np.float64).reshape(-1)
    if values.size != m:
        raise DimensionMismatchError(f"operator has {m} rows, measurement has {values.size} entries")
    if not np.all(np.isfinite(values)):
        raise NonFiniteFeatureError("measurement contains non-finite values")

    y_norm = float(np.linalg.norm(values))
    if y_norm == 0.0:
        return BpSolution(coeffs=np.zeros(n), residual=0.0, l1_norm=0.0, iterations=0,
                          converged=True, rho=cfg.rho, objective_trace=[])

    factor = gram or GramFactor.from_operator(op)
    if factor.m != m:
        raise DimensionMismatchError(f"Gram factor is {factor.m}x{factor.m}, operator has {m} rows")

    def project(v: np.ndarray) -> np.ndarray:
        return v - op.rmatvec(factor.solve(op.matvec(v) - values))

    x = project(np.zeros(n))
    z = x.copy()
    u = np.zeros(n)
    rho = cfg.rho
    sqrt_n = np.sqrt(n)
    best = np.inf
    trace = []
    converged = False
    iteration = 0

    for iteration in range(1, cfg.max_iterations + 1):
        x = project(z - u)
        z_old = z
        z = soft_threshold(x + u, 1.0 / rho)
        u = u + x - z

        best = min(best, float(np.abs(x).sum()))
        trace.append(best)

        primal = np.linalg.norm(x - z)
        dual = rho * np.linalg.norm(z - z_old)
        eps_primal = sqrt_n * cfg.tol_abs + cfg.tol_rel * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = sqrt_n * cfg.tol_abs + cfg.tol_rel * rho * np.linalg.norm(u)
        if primal <= eps_primal and dual <= eps_dual:
            converged = True
            break

        # residual balancing; u is the scaled dual so it rescales with rho
        new_rho = rho
        if primal > cfg.balance_ratio * dual:
            new_rho = min(rho * cfg.balance_factor, cfg.rho_max)
        elif dual > cfg.balance_ratio * primal:
            new_rho = max(rho / cfg.balance_factor, cfg.rho_min)
        if new_rho != rho:
            u *= rho / new_rho
            rho = new_rho

    coeffs = x
    polished = False
    tolerance = cfg.feasibility_tolerance(y_norm)
    if cfg.polish:
        candidate = _polish(op, values, np.flatnonzero(z))
        if candidate is not None:
            candidate_residual = np.linalg.norm(op.matvec(candidate) - values)
            candidate_l1 = float(np.abs(candidate).sum())
            if candidate_residual <= tolerance and candidate_l1 <= float(np.abs(x).sum()) * (1.0 + 1e-9):
                coeffs = candidate
                polished = True

    residual = float(np.linalg.norm(op.matvec(coeffs) - values))
    l1_norm = float(np.abs(coeffs).sum())
    if trace:
        trace.append(min(trace[-1], l1_norm))
    converged = converged and residual <= tolerance

    if not converged and logger is not None:
        logger.log_nonconvergence("recovery", m=m, n=n, iterations=iteration, residual=residual)

    return BpSolution(
        coeffs=coeffs,
        residual=residual,
        l1_norm=l1_norm,
        iterations=iteration,
        converged=converged,
        rho=rho,
        polished=polished,
        objective_trace=trace,
    )


def sensing_operator(
    matrix: SensingMatrix,
    levels: int = DEFAULT_LEVELS,
    height: int = IMAGE_HEIGHT,
    width: int = IMAGE_WIDTH
) -> LinearOperator:
    """
    A = phi psi acting on wavelet coefficients of the padded image.

    Wavelet domain: A is phi itself. Pixel domain: A w = phi crop(idwt2(w)),
    whose adjoint zero-embeds phi^T r into the padded raster before dwt2.
    """
    dense = matrix.dense()
    if matrix.domain is SensingDomain.WAVELET:
        return aslinearoperator(dense)

    if matrix.cols != height * width:
        raise DimensionMismatchError(f"pixel matrix has {matrix.cols} columns, image has {height * width} pixels")
    padded_h, padded_w = wavelet_service.padded_shape(height, width)

    def matvec(w: np.ndarray) -> np.ndarray:
        coeffs = wavelet_service.coeffs_from_vector(np.ravel(w), padded_h, padded_w, levels)
        raster = wavelet_service.crop(wavelet_service.idwt2(coeffs), height, width)
        return dense @ raster.reshape(-1)

    def rmatvec(r: np.ndarray) -> np.ndarray:
        embedded = np.zeros((padded_h, padded_w))
        embedded[:height, :width] = (dense.T @ np.ravel(r)).reshape(height, width)
        return wavelet_service.dwt2(embedded, levels).coeffs

    return LinearOperator(
        shape=(matrix.rows, padded_h * padded_w),
        matvec=matvec,
        rmatvec=rmatvec,
        dtype=np.float64,
    )


def _check_key(matrix: SensingMatrix, y: Measurement) -> None:
    if y.domain is not matrix.domain:
        raise DimensionMismatchError(f"measurement domain {y.domain.value} != matrix domain {matrix.domain.value}")
    if y.matrix_seed is not None and y.matrix_seed != matrix.seed:
        raise KeyMismatchError(f"measurement seed {y.matrix_seed} != matrix seed {matrix.seed}")
    if y.m != matrix.rows:
        raise DimensionMismatchError(f"measurement has {y.m} entries, matrix has {matrix.rows} rows")


def recover(
    matrix: SensingMatrix,
    y: Measurement,
    cfg: Optional[SolverConfig] = None,
    levels: int = DEFAULT_LEVELS,
    logger: Optional[RunLogger] = None
) -> Reconstruction:
    """Basis Pursuit in the coefficient domain, then idwt2, crop and clamp."""
    _check_key(matrix, y)
    start = time.perf_counter()
    op = sensing_operator(matrix, levels)
    solution = solve_bp(op, y.values, cfg, gram=gram_factor(matrix), logger=logger)
    padded_h, padded_w = wavelet_service.padded_shape(IMAGE_HEIGHT, IMAGE_WIDTH)
    coeffs = wavelet_service.coeffs_from_vector(solution.coeffs, padded_h, padded_w, levels)
    image = wavelet_service.image_from_coeffs(coeffs, IMAGE_HEIGHT, IMAGE_WIDTH, clamp=True)
    return Reconstruction(image=image, solution=solution, seconds=time.perf_counter() - start)


def reconstruct_image(
    matrix: SensingMatrix,
    y: Measurement,
    cfg: Optional[SolverConfig] = None,
    levels: int = DEFAULT_LEVELS
) -> GrayImage:
    """
    Reconstruct a label image from its measurement.

    Returns:
        The cropped, clamped 35x100 image. The solver result, including the
        convergence flag, is dropped; call recover() when it is needed.
    """
    return recover(matrix, y, cfg, levels).image
