"""
Dense symmetric linear algebra helpers used by the design and estimation code.

Matrices are plain 2-d numpy arrays. The eigendecomposition is delegated to
LAPACK through numpy.linalg.eigh; this module only adds the symmetry checks,
the numerical rank cutoff and the image/PSD tests built on top of it.
"""

# Import the necessary libraries.
import numpy as np

from debias_bandit.errors import ValidationError

# Eigenvalues below RANK_TOL * lambda_max are treated as zero.
RANK_TOL = 1e-10

# Symmetry tolerance, relative to 1 + max |M_ij|.
SYMMETRY_TOL = 1e-9

# Image-membership tolerance, relative to 1 + ||v||.
IMAGE_TOL = 1e-8


def as_symmetric(M) -> np.ndarray:
    """
    Convert the input to a float matrix and check that it is finite and symmetric.

    Args:
        M (array-like):
            Square matrix.

    Returns:
        np.ndarray: The matrix, symmetrized exactly as (M + M^T) / 2.

    Raises:
        ValidationError: If M is not square, contains NaN/Inf, or is not symmetric.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix contains NaN or Inf entries")
    scale = 1.0 + (np.max(np.abs(M)) if M.size else 0.0)
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise ValidationError("matrix is not symmetric")
    return (M + M.T) / 2


def symmetric_eigh(M) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigendecomposition of a symmetric matrix, eigenvalues in ascending order.
    """
    return np.linalg.eigh(as_symmetric(M))


def pseudo_inverse(M) -> np.ndarray:
    """
    Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues below RANK_TOL * lambda_max are treated as zero, so the result
    satisfies the four Penrose identities up to rounding.

    Args:
        M (array-like):
            Symmetric positive semi-definite matrix.

    Returns:
        np.ndarray: The pseudo-inverse M^+.
    """
    eigenvalues, eigenvectors = symmetric_eigh(M)
    if eigenvalues.size == 0:
        return np.zeros_like(eigenvectors)

    # Keep only the numerically nonzero part of the spectrum.
    cutoff = RANK_TOL * max(eigenvalues[-1], 0.0)
    keep = eigenvalues > cutoff
    if not np.any(keep):
        return np.zeros_like(eigenvectors)
    basis = eigenvectors[:, keep]
    return (basis / eigenvalues[keep]) @ basis.T


def numerical_rank(M) -> int:
    """
    Number of eigenvalues above the rank cutoff.
    """
    eigenvalues, _ = symmetric_eigh(M)
    if eigenvalues.size == 0 or eigenvalues[-1] <= 0:
        return 0
    return int(np.sum(eigenvalues > RANK_TOL * eigenvalues[-1]))


def range_basis(M) -> np.ndarray:
    """
    Orthonormal basis (as columns) of the image of a symmetric PSD matrix.
    """
    eigenvalues, eigenvectors = symmetric_eigh(M)
    if eigenvalues.size == 0 or eigenvalues[-1] <= 0:
        return np.zeros((eigenvectors.shape[0], 0))
    keep = eigenvalues > RANK_TOL * eigenvalues[-1]
    return eigenvectors[:, keep]


def in_image(M, v) -> bool:
    """
    Test whether v lies in the image of the symmetric PSD matrix M.

    Args:
        M (array-like):
            Symmetric PSD matrix.
        v (array-like):
            Vector of matching dimension.

    Returns:
        bool: True iff ||(I - M M^+) v|| <= 1e-8 * (1 + ||v||).
    """
    M = as_symmetric(M)
    v = np.asarray(v, dtype=float)
    if v.shape != (M.shape[0],):
        raise ValidationError(f"dimension mismatch: matrix {M.shape}, vector {v.shape}")
    residual = v - M @ (pseudo_inverse(M) @ v)
    return bool(np.linalg.norm(residual) <= IMAGE_TOL * (1.0 + np.linalg.norm(v)))


def psd_dominates(A, B, slack: float = 0.0) -> bool:
    """
    Test the Loewner order A >= B up to a slack on the smallest eigenvalue.

    Args:
        A (array-like):
            Symmetric matrix.
        B (array-like):
            Symmetric matrix of the same shape.
        slack (float):
            Allowed negative mass, i.e. the test is lambda_min(A - B) >= -slack.

    Returns:
        bool: Whether A dominates B.
    """
    A = as_symmetric(A)
    B = as_symmetric(B)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch: {A.shape} vs {B.shape}")
    if A.size == 0:
        return True
    return bool(np.linalg.eigvalsh(A - B)[0] >= -slack)


def gram(vectors, weights) -> np.ndarray:
    """
    Weighted covariance V = sum_i w_i a_i a_i^T of the rows of `vectors`.
    """
    vectors = np.asarray(vectors, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return (vectors * weights[:, None]).T @ vectors
