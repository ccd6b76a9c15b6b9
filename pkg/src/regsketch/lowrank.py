"""Ridge-regularized low-rank approximation.

The closed-form optimum is SVD shrinkage; the sketched route reduces the
problem two-sidedly to a small core min ||Z_R' Z_S' - U_C' G U_D||_F^2 +
lam(...) solved by the same shrinkage, then lifts the factors back through
triangular back-solves against the QR factors of the sketched operands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from . import sketch as sk
from . import statdim
from .la import as_dense, make_rng


@dataclass
class LowRankFactors:
    Y: np.ndarray  # n x k
    X: np.ndarray  # k x d
    objective: float
    k: int
    lam: float
    sd_factor: float = 0.0  # sd_lam of the shrinkage factor, when known
    rank_truncated: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "objective": self.objective,
                "k": self.k,
                "lam": self.lam,
                "sd_factor": self.sd_factor,
                "rank_truncated": self.rank_truncated,
                "shape": [int(self.Y.shape[0]), int(self.X.shape[1])],
            }
        )


def objective_value(A, Y, X, lam: float) -> float:
    R = Y @ X - as_dense(A)
    return float(np.sum(R * R) + lam * (np.sum(Y * Y) + np.sum(X * X)))


def shrink_sd(sigma: np.ndarray, lam: float, k: int) -> float:
    """Statistical dimension of the shrinkage factors: sum of (1 - lam/sigma_i)
    over the top-k singular values exceeding lam."""
    top = sigma[:k]
    kept = top[top > lam]
    return float(np.sum(1.0 - lam / kept)) if kept.size else 0.0


def solve_exact_shrink(A, k: int, lam: float) -> LowRankFactors:
    """Closed-form optimum: Y = U_k sqrt((S_k - lam I)_+), X = sqrt(...) V_k'."""
    Ad = as_dense(A)
    n, d = Ad.shape
    if not (1 <= k <= min(n, d)):
        raise ValueError("k must satisfy 1 <= k <= min(n, d)")
    U, s, Vt = np.linalg.svd(Ad, full_matrices=False)
    w = np.sqrt(np.maximum(s[:k] - lam, 0.0))
    Y = U[:, :k] * w
    X = w[:, None] * Vt[:k]
    return LowRankFactors(
        Y=Y,
        X=X,
        objective=objective_value(Ad, Y, X, lam),
        k=k,
        lam=lam,
        sd_factor=shrink_sd(s, lam, k),
    )


def als_reference(A, k: int, lam: float, iters: int = 500, tol: float = 1e-12, seed: int = 0):
    """Alternating-least-squares oracle for the same objective (test use)."""
    Ad = as_dense(A)
    rng = make_rng(seed, 23)
    Y = rng.standard_normal((Ad.shape[0], k)) * 0.1
    prev = np.inf
    for _ in range(iters):
        X = np.linalg.solve(Y.T @ Y + lam * np.eye(k), Y.T @ Ad)
        Y = np.linalg.solve(X @ X.T + lam * np.eye(k), X @ Ad.T).T
        obj = objective_value(Ad, Y, X, lam)
        if prev - obj < tol * max(obj, 1.0):
            break
        prev = obj
    return Y, X, objective_value(Ad, Y, X, lam)


@dataclass
class CorePieces:
    SA: np.ndarray  # m x d
    AR: np.ndarray  # n x m'
    S2AR: np.ndarray  # p x m'
    SAR2: np.ndarray  # m x p'
    S2AR2: np.ndarray  # p x p'
    specs: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)


def core_sizes(A, k: int, eps: float, lam: float, policy: sk.SizePolicy, seed: int = 0) -> dict:
    """Sketch dimensions (m, m', p, p') from the size policy.

    sd_lam of the optimal factor is unknown before solving; it is bounded by
    min(the statdim estimate of A, k), which preserves the size expressions
    without circularity.
    """
    n, d = A.shape
    if lam > 0:
        sd_hat = min(statdim.sd_estimate(A, lam, seed=seed).estimate, float(k))
    else:
        sd_hat = float(k)
    m = min(n, sk.recommend_sizes(policy, sd_hat, eps, "lowrank_S"))
    m_p = min(d, sk.recommend_sizes(policy, min(sd_hat, k), eps, "lowrank_R"))
    p = min(n, max(1, int(np.ceil(policy.k_affine * m_p / eps**2))))
    p_p = min(d, max(1, int(np.ceil(policy.k_affine * m / eps**2))))
    return {"m": m, "m_prime": m_p, "p": p, "p_prime": p_p, "sd_hat": sd_hat}


def build_core(A, k: int, eps: float, policy: sk.SizePolicy, seed: int = 0) -> CorePieces:
    """Apply the four sketches and collect the five sketched operands.

    Sparse-embedding components are applied directly to A on each side, so
    each stored entry of A is touched once per CountSketch stage.
    """
    sizes = core_sizes(A, k, eps, 0.0, policy, seed=seed)  # lam enters via solve_sketched
    return build_core_sized(A, sizes, seed)


def build_core_sized(A, sizes: dict, seed: int = 0) -> CorePieces:
    n, d = A.shape
    rs = [int(make_rng(seed, 31 + i).integers(0, 2**63 - 1)) for i in range(4)]

    def spec(m, limit, seed_, side):
        # at m >= dim the sketch reduces nothing and only adds collisions
        if m >= limit:
            return sk.identity(side=side)
        return sk.countsketch(m, seed=seed_, side=side)

    S = spec(sizes["m"], n, rs[0], "left")
    R = spec(sizes["m_prime"], d, rs[1], "right")
    S2 = spec(sizes["p"], n, rs[2], "left")
    R2 = spec(sizes["p_prime"], d, rs[3], "right")
    return _assemble_core(A, S, R, S2, R2, sizes)


def _assemble_core(A, S, R, S2, R2, sizes) -> CorePieces:
    SA = as_dense(sk.apply(S, A))
    AR = as_dense(sk.apply(R, A))
    S2AR = as_dense(sk.apply(S2, AR))
    SAR2 = as_dense(sk.apply(R2, SA))
    S2AR2 = as_dense(sk.apply(R2, as_dense(sk.apply(S2, A))))
    return CorePieces(
        SA=SA,
        AR=AR,
        S2AR=S2AR,
        SAR2=SAR2,
        S2AR2=S2AR2,
        specs={"S": S, "R": R, "S2": S2, "R2": R2},
        sizes=dict(sizes),
    )


def _pivoted_col_basis(M, tol: float = 1e-10):
    """Column-pivoted QR basis of colspace(M): returns (U, R1, piv, rank)."""
    Q, Rm, piv = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    r = int(np.sum(diag > tol * max(diag[0] if diag.size else 0.0, 1e-300)))
    return Q[:, :r], Rm[:r, :r], piv, r


def solve_core(C, D, G, k: int, lam: float):
    """Solve min ||C Z_R Z_S D - G||_F^2 + lam||C Z_R||_F^2 + lam||Z_S D||_F^2.

    Reduces to shrinkage on U_C' G U_D, then recovers Z_R, Z_S by triangular
    back-solves against the pivoted QR factors of C and D'. Rank-deficient
    cores are zero-padded and flagged rather than rejected.
    """
    C, D, G = as_dense(C), as_dense(D), as_dense(G)
    p, m_p = C.shape
    m, p_p = D.shape
    U_C, R1c, pivc, rc = _pivoted_col_basis(C)
    U_D, R1d, pivd, rd = _pivoted_col_basis(D.T)
    small_k = min(k, rc, rd)
    truncated = small_k < k
    if small_k == 0:
        return np.zeros((m_p, k)), np.zeros((k, m)), True
    Mid = U_C.T @ G @ U_D
    core = solve_exact_shrink(Mid, small_k, lam)
    Zp_R = np.zeros((rc, k))
    Zp_R[:, :small_k] = core.Y
    Zp_S = np.zeros((k, rd))
    Zp_S[:small_k, :] = core.X
    # back-solve: C Z_R = U_C Z'_R and Z_S D = Z'_S U_D'
    Z_R = np.zeros((m_p, k))
    Z_R[pivc[:rc]] = scipy.linalg.solve_triangular(R1c, Zp_R)
    Z_S = np.zeros((k, m))
    Z_S[:, pivd[:rd]] = scipy.linalg.solve_triangular(R1d, Zp_S.T).T
    return Z_R, Z_S, truncated


def solve_sketched(
    A,
    k: int,
    lam: float,
    eps: float,
    policy: sk.SizePolicy | None = None,
    seed: int = 0,
    pieces: CorePieces | None = None,
    transpose_dispatch: bool = True,
) -> LowRankFactors:
    """Sketched rank-k ridge factorization: build_core -> solve_core -> lift.

    The objective is recomputed on the original A. When d > n the problem is
    solved on the transpose (the objective is symmetric under it).
    """
    n, d = A.shape
    if not (1 <= k <= min(n, d)):
        raise ValueError("k must satisfy 1 <= k <= min(n, d)")
    if transpose_dispatch and d > n and pieces is None:
        AT = A.T.tocsr() if scipy.sparse.issparse(A) else as_dense(A).T
        sol = solve_sketched(AT, k, lam, eps, policy, seed=seed, transpose_dispatch=False)
        return LowRankFactors(
            Y=sol.X.T,
            X=sol.Y.T,
            objective=sol.objective,
            k=k,
            lam=lam,
            rank_truncated=sol.rank_truncated,
        )
    if pieces is None:
        policy = policy or sk.SizePolicy()
        sizes = core_sizes(A, k, eps, lam, policy, seed=seed)
        pieces = build_core_sized(A, sizes, seed=seed)
    Z_R, Z_S, truncated = solve_core(pieces.S2AR, pieces.SAR2, pieces.S2AR2, k, lam)
    Y = pieces.AR @ Z_R
    X = Z_S @ pieces.SA
    return LowRankFactors(
        Y=Y,
        X=X,
        objective=objective_value(A, Y, X, lam),
        k=k,
        lam=lam,
        rank_truncated=truncated,
    )


def identity_pieces(A) -> CorePieces:
    """All-Identity core pieces (every sketched operand is A itself)."""
    Ad = as_dense(A)
    n, d = Ad.shape
    ident = sk.identity()
    identr = sk.identity(side="right")
    return CorePieces(
        SA=Ad,
        AR=Ad,
        S2AR=Ad,
        SAR2=Ad,
        S2AR2=Ad,
        specs={"S": ident, "R": identr, "S2": ident, "R2": identr},
        sizes={"m": n, "m_prime": d, "p": n, "p_prime": d},
    )
