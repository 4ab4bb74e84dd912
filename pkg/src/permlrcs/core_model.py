"""Problem model for low-rank column-wise sensing with block-local row shuffles.

An unknown rank-r matrix X* (n x q) is observed column by column: column k is
measured through its own Gaussian matrix A_k (m x n), and the stacked
measurement vector is additionally scrambled by an unknown permutation P* that
only moves rows within contiguous blocks of size s,

    y_k = P* A_k x*_k,   X* = U* B*.

Permutations are kept as index vectors throughout; the dense m x m matrix is
never formed. Summing measurement rows over each block (the "collapse"
operator) removes any block-local permutation, which is what makes a
permutation-free initialization possible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidDimsError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class Dims:
    """Problem sizes: ambient n, columns q, measurements per column m, rank r, block size s.

    Requires r <= min(n, q), s | m, and m/s >= r so that the collapsed
    per-column least squares is determined.
    """

    n: int
    q: int
    m: int
    r: int
    s: int

    def __post_init__(self):
        for name in ("n", "q", "m", "r", "s"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise InvalidDimsError(f"{name} must be an integer, got {v!r}")
            if v <= 0:
                raise InvalidDimsError(f"{name} must be strictly positive, got {v}")
        if self.r > min(self.n, self.q):
            raise InvalidDimsError(
                f"rank r={self.r} must not exceed min(n, q)={min(self.n, self.q)}"
            )
        if self.m % self.s != 0:
            raise InvalidDimsError(
                f"block size s={self.s} must divide m={self.m} exactly"
            )
        if self.m // self.s < self.r:
            raise InvalidDimsError(
                f"m/s={self.m // self.s} must be at least r={self.r} "
                "(collapsed least squares would be underdetermined)"
            )

    @property
    def num_blocks(self) -> int:
        return self.m // self.s


@dataclass(frozen=True, eq=False)
class BlockPermutation:
    """Permutation of [0, m) that only moves indices within size-s blocks.

    ``assignment[j]`` is the source row of output row j, i.e. applying the
    permutation to a vector v gives ``out[j] = v[assignment[j]]``.
    """

    block_size: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.intp)
        if a.ndim != 1:
            raise ShapeMismatchError("assignment must be a 1-D index vector")
        s = self.block_size
        if not isinstance(s, (int, np.integer)) or s < 1:
            raise InvalidDimsError(f"block_size must be a positive integer, got {s!r}")
        m = a.shape[0]
        if m == 0 or m % s != 0:
            raise InvalidDimsError(f"assignment length {m} is not a multiple of block size {s}")
        blocks = np.sort(a.reshape(-1, s), axis=1)
        expected = np.arange(m).reshape(-1, s)
        if not np.array_equal(blocks, expected):
            raise InvalidDimsError("assignment is not a within-block bijection")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "block_size", int(s))

    @property
    def m(self) -> int:
        return self.assignment.shape[0]

    @classmethod
    def identity(cls, m: int, block_size: int = 1) -> "BlockPermutation":
        return cls(block_size, np.arange(m, dtype=np.intp))


def sample_s_local_permutation(m, s, seed) -> BlockPermutation:
    """Draw a uniformly random s-local permutation of [0, m).

    Each of the m/s blocks gets an independent uniform permutation of its own
    index range. ``seed`` may be anything ``np.random.default_rng`` accepts.
    """
    if s < 1 or m < 1 or m % s != 0:
        raise InvalidDimsError(f"need s >= 1 dividing m, got m={m}, s={s}")
    rng = np.random.default_rng(seed)
    idx = np.arange(m, dtype=np.intp).reshape(m // s, s)
    assignment = rng.permuted(idx, axis=1).ravel()
    return BlockPermutation(s, assignment)


def apply_permutation(perm: BlockPermutation, v: np.ndarray, inverse: bool = False):
    """Apply P (or its transpose, with ``inverse=True``) to a vector or to matrix rows."""
    v = np.asarray(v)
    if v.shape[0] != perm.m:
        raise ShapeMismatchError(
            f"leading dimension {v.shape[0]} does not match permutation size {perm.m}"
        )
    if not inverse:
        return v[perm.assignment]
    out = np.empty_like(v)
    out[perm.assignment] = v
    return out


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Observed data: Y (m x q) and the stacked sensing matrices A (q x m x n)."""

    dims: Dims
    Y: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        d = self.dims
        Y = np.ascontiguousarray(np.asarray(self.Y, dtype=np.float64))
        A = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64))
        if Y.shape != (d.m, d.q):
            raise ShapeMismatchError(f"Y must be ({d.m}, {d.q}), got {Y.shape}")
        if A.shape != (d.q, d.m, d.n):
            raise ShapeMismatchError(f"A must be ({d.q}, {d.m}, {d.n}), got {A.shape}")
        Y.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "A", A)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Planted factors and permutation behind a synthetic instance."""

    Ustar: np.ndarray
    Bstar: np.ndarray
    Pstar: BlockPermutation

    def __post_init__(self):
        U = np.ascontiguousarray(np.asarray(self.Ustar, dtype=np.float64))
        B = np.ascontiguousarray(np.asarray(self.Bstar, dtype=np.float64))
        if U.ndim != 2 or B.ndim != 2 or U.shape[1] != B.shape[0]:
            raise ShapeMismatchError(
                f"factor shapes are inconsistent: Ustar {U.shape}, Bstar {B.shape}"
            )
        gram_err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
        if gram_err > 1e-12:
            raise ShapeMismatchError(
                f"Ustar columns are not orthonormal (max deviation {gram_err:.3e})"
            )
        # rank(X*) = r iff sigma_r(Bstar) > 0 since Ustar has orthonormal columns
        if np.linalg.svd(B, compute_uv=False)[-1] <= 0.0:
            raise DegenerateInputError("Bstar is rank deficient: X* would have rank < r")
        U.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "Ustar", U)
        object.__setattr__(self, "Bstar", B)

    @cached_property
    def sigma_max(self) -> float:
        """Largest singular value of X* = Ustar Bstar."""
        return float(np.linalg.svd(self.Ustar @ self.Bstar, compute_uv=False)[0])

    @property
    def r(self) -> int:
        return self.Ustar.shape[1]


@dataclass(frozen=True, eq=False)
class CollapsedSystem:
    """Permutation-free system obtained by summing measurement rows over each block."""

    Y_cllps: np.ndarray
    A_cllps: np.ndarray

    def __post_init__(self):
        Yc = np.ascontiguousarray(np.asarray(self.Y_cllps, dtype=np.float64))
        Ac = np.ascontiguousarray(np.asarray(self.A_cllps, dtype=np.float64))
        if Yc.ndim != 2 or Ac.ndim != 3 or Ac.shape[:2] != (Yc.shape[1], Yc.shape[0]):
            raise ShapeMismatchError(
                f"inconsistent collapsed shapes: Y_cllps {Yc.shape}, A_cllps {Ac.shape}"
            )
        Yc.setflags(write=False)
        Ac.setflags(write=False)
        object.__setattr__(self, "Y_cllps", Yc)
        object.__setattr__(self, "A_cllps", Ac)


def collapse(instance: ProblemInstance) -> CollapsedSystem:
    """Sum rows of Y and of each A_k over consecutive blocks of size s.

    Each collapsed row is 1_s^T applied to one block. Because a block-local
    permutation only reorders entries within a block, row sums are unchanged:
    the collapsed system is permutation-free, y_cllps,k = A_cllps,k x*_k.
    """
    d = instance.dims
    nb = d.num_blocks
    Yc = instance.Y.reshape(nb, d.s, d.q).sum(axis=1)
    Ac = instance.A.reshape(d.q, nb, d.s, d.n).sum(axis=2)
    return CollapsedSystem(Yc, Ac)


def objective(P: BlockPermutation, U: np.ndarray, B: np.ndarray,
              instance: ProblemInstance) -> float:
    """Squared residual sum_k ||y_k - P A_k U b_k||^2."""
    d = instance.dims
    U = np.asarray(U, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if U.shape[0] != d.n or B.shape[1] != d.q or U.shape[1] != B.shape[0]:
        raise ShapeMismatchError(
            f"factor shapes U {U.shape}, B {B.shape} do not match dims {d}"
        )
    X = U @ B
    pred = np.matmul(instance.A, X.T[:, :, None])[:, :, 0].T  # column k = A_k x_k
    resid = instance.Y - apply_permutation(P, pred)
    return float(np.sum(resid * resid))


def compute_incoherence(Ustar: np.ndarray, Bstar: np.ndarray) -> float:
    """Column-norm incoherence mu = max_k ||x*_k|| / (sigma_max sqrt(r/q)) of X* = Ustar Bstar."""
    X = np.asarray(Ustar, dtype=np.float64) @ np.asarray(Bstar, dtype=np.float64)
    r = np.asarray(Bstar).shape[0]
    q = X.shape[1]
    smax = float(np.linalg.svd(X, compute_uv=False)[0])
    if smax == 0.0:
        raise DegenerateInputError("incoherence is undefined for X* = 0")
    max_col = float(np.sqrt((X * X).sum(axis=0).max()))
    return max_col / (smax * np.sqrt(r / q))


def generate_synthetic(dims: Dims, seed, perm_seed=None):
    """Draw a synthetic instance: U* = QR of Gaussian, B*, A_k Gaussian, P* uniform s-local.

    The master ``seed`` is split into independent sub-streams for U*, B*,
    {A_k} and P*, so passing ``perm_seed`` redraws only the permutation while
    (U*, B*, A_k) stay fixed; that is the Monte-Carlo protocol used by the
    experiment harness.

    Returns (ProblemInstance, GroundTruth).
    """
    ss = np.random.SeedSequence(seed)
    u_ss, b_ss, a_ss, p_ss = ss.spawn(4)
    n, q, m, r, s = dims.n, dims.q, dims.m, dims.r, dims.s

    Ustar = np.linalg.qr(np.random.default_rng(u_ss).standard_normal((n, r)))[0]
    Bstar = np.random.default_rng(b_ss).standard_normal((r, q))
    A = np.random.default_rng(a_ss).standard_normal((q, m, n))
    Pstar = sample_s_local_permutation(m, s, p_ss if perm_seed is None else perm_seed)

    X = Ustar @ Bstar
    pred = np.empty((m, q))
    for k in range(q):
        pred[:, k] = A[k] @ X[:, k]
    Y = apply_permutation(Pstar, pred)

    instance = ProblemInstance(dims, Y, A)
    truth = GroundTruth(Ustar, Bstar, Pstar)
    return instance, truth
