"""Dense/sparse linear-algebra substrate: SVD, lambda-QR, pseudo-inverse
application, Matrix Market I/O, and seeded randomness.

Matrices are plain numpy arrays (row-major float64) or scipy CSR arrays.
All factorizations are returned as small frozen dataclasses so downstream
code can rely on their invariants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse


class LinAlgFailure(Exception):
    """SVD/QR did not converge; message carries condition diagnostics."""


class MatrixMarketError(Exception):
    """Malformed Matrix Market file; message carries the offending line number."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator for (seed, stream); identical draws on all platforms.

    Streams are split from the root seed, so independent tasks can derive
    non-overlapping generators from one configured seed.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, stream: int) -> int:
    """A fresh 63-bit seed for a sub-task, derived from (seed, stream)."""
    return int(make_rng(seed, stream).integers(0, 2**63 - 1))


def as_dense(A) -> np.ndarray:
    if scipy.sparse.issparse(A):
        return np.asarray(A.todense(), dtype=np.float64)
    return np.asarray(A, dtype=np.float64)


def nnz(A) -> int:
    """Stored-entry count: true nnz for sparse, full size for dense."""
    if scipy.sparse.issparse(A):
        return int(A.nnz)
    return int(np.asarray(A).size)


@dataclass(frozen=True)
class SvdFactors:
    """A ~= U @ diag(sigma) @ V.T with orthonormal U, V columns."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    full: bool = False

    def reconstruct(self) -> np.ndarray:
        return (self.U[:, : self.sigma.size] * self.sigma) @ self.V[:, : self.sigma.size].T


def svd(A, full: bool = False) -> SvdFactors:
    """SVD of a dense (or densified) matrix.

    Thin by default (r = min(n, d)); with full=True, U and V are completed
    to square orthogonal matrices. Raises LinAlgFailure on non-convergence.
    """
    M = as_dense(A)
    if not np.all(np.isfinite(M)):
        raise ValueError("svd requires finite entries")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = scipy.linalg.svd(M, full_matrices=full, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - rare LAPACK failure path
            fro = float(np.linalg.norm(M))
            raise LinAlgFailure(
                f"SVD failed to converge for {M.shape[0]}x{M.shape[1]} matrix "
                f"(frobenius={fro:.3e}, max|a_ij|={np.abs(M).max():.3e})"
            ) from exc
    return SvdFactors(U=U, sigma=s, V=Vt.T, full=full)


@dataclass(frozen=True)
class LambdaQr:
    """A = Q R with R.T @ R = A.T @ A + lam * I (upper triangular R)."""

    Q: np.ndarray
    R: np.ndarray
    lam: float
    singular: bool = False


def lambda_qr(A, lam: float, rank_tol: float = 1e-12) -> LambdaQr:
    """QR-like factorization with a ridge term folded into R.

    Computed as the R factor of a QR of the stacked matrix [A; sqrt(lam)*I]
    (never through the Gram matrix), then Q = A @ inv(R) by triangular solve.
    For lam == 0 and rank-deficient A the result is flagged singular and Q is
    recovered through a pseudo-inverse; operations that invert R must reject
    such factors.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    M = as_dense(A)
    n, d = M.shape
    stacked = np.vstack([M, np.sqrt(lam) * np.eye(d)])
    R = np.linalg.qr(stacked, mode="r")
    # normalize to a nonnegative diagonal so the factorization is unique
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    R = signs[:, None] * R
    diag = np.abs(np.diag(R))
    singular = bool(diag.min(initial=np.inf) <= rank_tol * max(diag.max(initial=0.0), 1e-300))
    if singular:
        Q = M @ np.linalg.pinv(R)
    else:
        Q = scipy.linalg.solve_triangular(R.T, M.T, lower=True).T
    return LambdaQr(Q=Q, R=R, lam=float(lam), singular=singular)


def pinv_apply(M, B, rcond: float = 1e-12) -> np.ndarray:
    """Compute pinv(M) @ B via SVD, zeroing singular values below rcond*sigma_max."""
    f = svd(M)
    Bd = as_dense(B)
    squeeze = Bd.ndim == 1
    if squeeze:
        Bd = Bd[:, None]
    cutoff = rcond * (f.sigma[0] if f.sigma.size else 0.0)
    inv = np.where(f.sigma > cutoff, 1.0 / np.where(f.sigma > 0, f.sigma, 1.0), 0.0)
    out = f.V @ (inv[:, None] * (f.U.T @ Bd))
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# Matrix Market I/O ("real general" field, coordinate and array variants).
#
# Values are written with repr(), i.e. shortest round-trip decimals, so a
# read of a write reproduces the matrix bit-exactly.
# ---------------------------------------------------------------------------


def write_matrix_market(M, path) -> None:
    if scipy.sparse.issparse(M):
        C = M.tocsr().tocoo()  # CSR order: row-major, sorted columns per row
        lines = [
            "%%MatrixMarket matrix coordinate real general",
            f"{C.shape[0]} {C.shape[1]} {C.nnz}",
        ]
        for i, j, v in zip(C.row, C.col, C.data):
            lines.append(f"{i + 1} {j + 1} {float(v)!r}")
    else:
        A = np.asarray(M, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError("expected a 2-D matrix")
        lines = [
            "%%MatrixMarket matrix array real general",
            f"{A.shape[0]} {A.shape[1]}",
        ]
        for j in range(A.shape[1]):  # array variant is column-major
            for i in range(A.shape[0]):
                lines.append(repr(float(A[i, j])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_market(path):
    """Read a real general Matrix Market file.

    Returns a CSR array for the coordinate variant and a dense ndarray for
    the array variant. Raises MatrixMarketError with a line number on any
    malformed content.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise MatrixMarketError("line 1: empty file")
    header = raw[0].split()
    if (
        len(header) != 5
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[3].lower() != "real"
        or header[4].lower() != "general"
    ):
        raise MatrixMarketError(f"line 1: unsupported header {raw[0]!r}")
    fmt = header[2].lower()
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"line 1: unknown format {fmt!r}")

    lineno = 1
    body = []
    for k, line in enumerate(raw[1:], start=2):
        if line.startswith("%") or not line.strip():
            continue
        body.append((k, line))
    if not body:
        raise MatrixMarketError(f"line {len(raw)}: missing size line")

    lineno, size_line = body[0]
    parts = size_line.split()
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise MatrixMarketError(f"line {lineno}: bad size line {size_line!r}") from None

    if fmt == "coordinate":
        if len(dims) != 3:
            raise MatrixMarketError(f"line {lineno}: coordinate size line needs 3 fields")
        nr, nc, nz = dims
        if len(body) - 1 != nz:
            raise MatrixMarketError(
                f"line {lineno}: declared nnz={nz} but found {len(body) - 1} entries"
            )
        rows = np.empty(nz, dtype=np.int64)
        cols = np.empty(nz, dtype=np.int64)
        vals = np.empty(nz, dtype=np.float64)
        for idx, (ln, line) in enumerate(body[1:]):
            fields = line.split()
            if len(fields) != 3:
                raise MatrixMarketError(f"line {ln}: expected 'i j value'")
            try:
                i, j, v = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                raise MatrixMarketError(f"line {ln}: bad entry {line!r}") from None
            if not (1 <= i <= nr and 1 <= j <= nc):
                raise MatrixMarketError(f"line {ln}: index ({i},{j}) out of bounds")
            rows[idx], cols[idx], vals[idx] = i - 1, j - 1, v
        return scipy.sparse.csr_array(
            scipy.sparse.coo_array((vals, (rows, cols)), shape=(nr, nc))
        )

    if len(dims) != 2:
        raise MatrixMarketError(f"line {lineno}: array size line needs 2 fields")
    nr, nc = dims
    if len(body) - 1 != nr * nc:
        raise MatrixMarketError(
            f"line {lineno}: declared {nr * nc} values but found {len(body) - 1}"
        )
    A = np.empty((nr, nc), dtype=np.float64)
    it = iter(body[1:])
    for j in range(nc):
        for i in range(nr):
            ln, line = next(it)
            try:
                A[i, j] = float(line.strip())
            except ValueError:
                raise MatrixMarketError(f"line {ln}: bad value {line!r}") from None
    return A
