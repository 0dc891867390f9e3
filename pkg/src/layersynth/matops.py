"""Dense matrix kernels shared by the whole toolkit.

Everything here operates on plain numpy arrays. Symmetric positive
semidefinite inputs are validated by eigenvalue checks with an explicit
tolerance rather than by construction, so callers can pass matrices read
from config files or produced by iterative solvers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "check_sym_psd",
    "sym_sqrt",
    "spectral_radius",
    "solve_discrete_lyapunov",
    "solve_filter_dare",
    "solve_control_dare",
    "minnorm_lstsq",
    "kron",
]

PINV_RCOND = 1e-10


class MatrixError(ValueError):
    """Raised when a matrix argument violates a kernel precondition."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array and reject non-finite entries."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise MatrixError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise MatrixError(f"{name} contains non-finite entries")
    return m


def check_sym_psd(s, tol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    """Validate symmetry and positive semidefiniteness within ``tol``.

    Returns the exactly symmetrized matrix (S + S^T)/2.
    """
    s = as_matrix(s, name)
    if s.shape[0] != s.shape[1]:
        raise MatrixError(f"{name} must be square, got shape {s.shape}")
    scale = 1.0 + np.linalg.norm(s, "fro")
    if np.linalg.norm(s - s.T, "fro") > tol * scale:
        raise MatrixError(f"{name} is not symmetric within tolerance {tol}")
    sym = (s + s.T) / 2.0
    if sym.size:
        lo = np.linalg.eigvalsh(sym).min()
        if lo < -tol * scale:
            raise MatrixError(
                f"{name} has eigenvalue {lo:.3e} below -{tol:.1e}, not PSD"
            )
    return sym


def sym_sqrt(s, tol: float = 1e-8) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues within ``tol`` (numerical noise) are clamped to
    zero; eigenvalues below ``-tol`` raise.
    """
    sym = check_sym_psd(s, tol)
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def spectral_radius(a) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    a = as_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"spectral_radius needs a square matrix, got {a.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def solve_discrete_lyapunov(f, qc, tol: float = 1e-8) -> np.ndarray:
    """Solve F^T N F - N = -Qc for a Schur-stable F.

    Direct solve of the vectorized linear system; fine at the problem
    sizes this package targets (n <= ~30).
    """
    f = as_matrix(f, "F")
    qc = check_sym_psd(qc, tol, "Qc")
    n = f.shape[0]
    if f.shape != (n, n) or qc.shape != (n, n):
        raise MatrixError(f"F {f.shape} and Qc {qc.shape} must be square and match")
    if spectral_radius(f) >= 1.0 - 1e-9:
        raise MatrixError("F must be Schur stable (spectral radius < 1)")
    # vec(F^T N F) = (F^T (x) F^T) vec(N) in column-major convention
    lhs = np.eye(n * n) - np.kron(f.T, f.T)
    sol = np.linalg.solve(lhs, qc.flatten(order="F"))
    nmat = sol.reshape((n, n), order="F")
    return (nmat + nmat.T) / 2.0


def solve_filter_dare(
    a,
    c,
    sigma_w,
    sigma_v,
    tol: float = 1e-12,
    max_iters: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state filter Riccati equation by fixed-point iteration.

    Iterates the Riccati map from Sigma_e = Sigma_w until the update is
    below ``tol`` relative. Returns (Sigma_e, L) with
    L = A Sigma_e C^T (C Sigma_e C^T + Sigma_v)^+ and A - L C Schur
    stable. A singular innovation covariance (fully noiseless channels)
    is handled by pseudoinverse.
    """
    a = as_matrix(a, "A")
    c = as_matrix(c, "C")
    sw = check_sym_psd(sigma_w, 1e-10, "Sigma_w")
    sv = check_sym_psd(sigma_v, 1e-10, "Sigma_v")
    n = a.shape[0]
    p = c.shape[0]
    if a.shape != (n, n) or c.shape[1] != n or sw.shape != (n, n) or sv.shape != (p, p):
        raise MatrixError("inconsistent dimensions in filter DARE inputs")

    def gain(se: np.ndarray) -> np.ndarray:
        innov = c @ se @ c.T + sv
        try:
            return np.linalg.solve(innov.T, (a @ se @ c.T).T).T
        except np.linalg.LinAlgError:
            return a @ se @ c.T @ np.linalg.pinv(innov, rcond=PINV_RCOND)

    se = sw.copy()
    converged = False
    for _ in range(max_iters):
        l = gain(se)
        alc = a - l @ c
        se_next = alc @ se @ alc.T + sw + l @ sv @ l.T
        se_next = (se_next + se_next.T) / 2.0
        if np.linalg.norm(se_next - se, "fro") <= tol * (1.0 + np.linalg.norm(se, "fro")):
            se = se_next
            converged = True
            break
        se = se_next
    if not converged:
        raise MatrixError(
            "filter Riccati iteration did not converge: "
            "system not detectable or ill-conditioned"
        )
    l = gain(se)
    if spectral_radius(a - l @ c) >= 1.0:
        raise MatrixError("filter Riccati produced an unstable error dynamics")
    return se, l


def solve_control_dare(
    a,
    b,
    q,
    r,
    tol: float = 1e-12,
    max_iters: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Control-side Riccati fixed point.

    Iterates X <- A^T X A - A^T X B (B^T X B + R)^{-1} B^T X A + Q from
    X = Q and returns (X, K) with K = (B^T X B + R)^{-1} B^T X A.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    q = check_sym_psd(q, 1e-10, "Q")
    r = check_sym_psd(r, 1e-10, "R")

    def gain(x: np.ndarray) -> np.ndarray:
        return np.linalg.solve(b.T @ x @ b + r, b.T @ x @ a)

    x = q.copy()
    converged = False
    for _ in range(max_iters):
        k = gain(x)
        x_next = a.T @ x @ a - a.T @ x @ b @ k + q
        x_next = (x_next + x_next.T) / 2.0
        if np.linalg.norm(x_next - x, "fro") <= tol * (1.0 + np.linalg.norm(x, "fro")):
            x = x_next
            converged = True
            break
        x = x_next
    if not converged:
        raise MatrixError("control Riccati iteration did not converge")
    return x, gain(x)


def minnorm_lstsq(a, b) -> np.ndarray:
    """Minimum-Frobenius-norm least-squares solution of A X = B.

    Pseudoinverse solution with singular values below
    ``PINV_RCOND * sigma_max`` truncated.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    x, *_ = np.linalg.lstsq(a, b, rcond=PINV_RCOND)
    return x


def kron(a, b) -> np.ndarray:
    """Kronecker product (thin wrapper kept for a uniform kernel API)."""
    return np.kron(as_matrix(a, "A"), as_matrix(b, "B"))
