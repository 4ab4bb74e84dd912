"""Iterative solvers: Perm-AltGDMin, Perm-AltMin, and collapsed-only baselines.

All solvers share one outer loop. Every iteration estimates the permutation
from the current unpermuted predictions Yhat[:, k] = A_k U b_k (an exact
block-decoupled assignment solve), updates U, then refits B column-wise by
least squares. The methods differ only in the U update:

  * Perm-AltGDMin: a single projected-gradient step, U <- QR(U - eta grad),
    with the one-shot step size eta = 0.3 / (m sigma_max(U0 B0)^2).
  * Perm-AltMin (direct): the exact minimizer over U of the stacked
    least-squares problem, assembled from its Kronecker normal equations
    fresh at every iteration.
  * Perm-AltMin (gd): inner gradient descent on the same subproblem with
    step 1 / L, where L = sum_k sigma_max(A_k)^2 ||b_k||^2 is computed once
    from the initial B and reused for all outer iterations.

Gradients follow the convention without the factor 2 from the squared norm;
the step-size rules above are calibrated for exactly that scaling.

Since permutations are orthogonal, every P-dependent subproblem is solved in
unpermuted coordinates against Z = P^T Y, which avoids materializing
permuted copies of the sensing tensor.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .assignment import update_permutation
from .core_model import (
    BlockPermutation,
    CollapsedSystem,
    Dims,
    ProblemInstance,
    apply_permutation,
    collapse,
)
from .errors import (
    DegenerateInitError,
    DegenerateInputError,
    InvalidDimsError,
    PermLrcsError,
    QrDegeneracyError,
    RankDeficiencyWarning,
    RankDeficientColumnError,
    ShapeMismatchError,
    SolverError,
)
from .metrics import subspace_distance

_EPS = np.finfo(np.float64).eps
# objective-stagnation window for early stopping
_PLATEAU_WINDOW = 5


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for all solvers.

    eta=None means the AltGDMin default rule 0.3/(m sigma_max(U0 B0)^2);
    u_mode picks the Perm-AltMin U update ("direct" or "gd"); stop_tol is
    both the subspace-distance stop (when ground truth is supplied) and the
    relative objective-stagnation threshold; sd_threshold is the recovery
    criterion used for the converged flag.
    """

    max_iters: int = 500
    eta: float | None = None
    u_mode: str = "direct"
    max_inner: int = 50
    inner_tol: float = 1e-12
    stop_tol: float = 1e-10
    sd_threshold: float = 1e-10
    track_substeps: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidDimsError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.eta is not None and not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidDimsError(f"eta must be positive and finite, got {self.eta}")
        if self.u_mode not in ("direct", "gd"):
            raise InvalidDimsError(f"u_mode must be 'direct' or 'gd', got {self.u_mode!r}")
        if self.max_inner < 1:
            raise InvalidDimsError(f"max_inner must be >= 1, got {self.max_inner}")
        for name in ("inner_tol", "stop_tol", "sd_threshold"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InvalidDimsError(f"{name} must be nonnegative and finite, got {v}")


@dataclass(frozen=True, eq=False)
class FactorPair:
    """An (U, B) iterate with U required orthonormal to 1e-10."""

    U: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if U.ndim != 2 or B.ndim != 2 or U.shape[1] != B.shape[0]:
            raise ShapeMismatchError(
                f"factor shapes are inconsistent: U {U.shape}, B {B.shape}"
            )
        gram_err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
        if gram_err > 1e-10:
            raise ShapeMismatchError(
                f"U is not orthonormal to 1e-10 (max deviation {gram_err:.3e})"
            )
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "B", B)

    @property
    def X(self) -> np.ndarray:
        return self.U @ self.B


@dataclass(frozen=True)
class IterationRecord:
    """One trace row; substep objectives are filled only when tracking is on."""

    iteration: int
    objective: float
    sd: float | None
    cum_time_s: float
    objective_after_p: float | None = None
    objective_after_u: float | None = None


@dataclass(frozen=True, eq=False)
class SolveResult:
    U: np.ndarray
    B: np.ndarray
    P: BlockPermutation | None
    trace: tuple
    converged: bool
    iterations_run: int

    def __post_init__(self):
        if len(self.trace) != self.iterations_run + 1:
            raise ShapeMismatchError(
                f"trace has {len(self.trace)} records for {self.iterations_run} iterations"
            )


# ---------------------------------------------------------------------------
# batched building blocks

def _predict(G, B):
    """Columns A_k U b_k from the stacked G = A @ U; returns (m, q)."""
    return np.matmul(G, B.T[:, :, None])[:, :, 0].T


def _at_cols(A, W):
    """Row k of the result is A_k^T W[:, k]; returns (q, n)."""
    return np.matmul(W.T[:, None, :], A)[:, 0, :]


def _grad_from_unperm(A, resid_unperm, B):
    """sum_k A_k^T resid[:, k] b_k^T for an already-unpermuted residual."""
    V = _at_cols(A, resid_unperm)
    return V.T @ B.T


def _sumsq(R):
    return float(np.sum(R * R))


def _lstsq_stacked(G, Z):
    """Per-column least squares min_b ||Z[:, k] - G[k] b|| via batched QR.

    G is (q, mm, r), Z is (mm, q). Returns (B, bad) where B is (r, q) and bad
    lists columns whose system was numerically rank deficient (those columns
    hold garbage until the caller repairs or rejects them).
    """
    q, mm, r = G.shape
    if r > mm:
        raise InvalidDimsError(f"per-column system is underdetermined: {mm} rows, {r} unknowns")
    Q, R = np.linalg.qr(G)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    dmax = diag.max(axis=1)
    bad = np.flatnonzero(diag.min(axis=1) <= max(mm, r) * _EPS * dmax)
    if bad.size:
        R = R.copy()
        R[bad] = np.eye(r)
    rhs = np.matmul(Q.transpose(0, 2, 1), Z.T[:, :, None])
    B = np.linalg.solve(R, rhs)[:, :, 0].T
    return B, bad


def _solve_b(G, Z, on_deficient):
    B, bad = _lstsq_stacked(G, Z)
    if bad.size:
        if on_deficient == "raise":
            raise RankDeficientColumnError(int(bad[0]))
        warnings.warn(
            f"rank-deficient least squares for columns {bad.tolist()}; "
            "using minimum-norm solutions",
            RankDeficiencyWarning,
            stacklevel=3,
        )
        for k in bad:
            B[:, k] = np.linalg.lstsq(G[k], Z[:, k], rcond=None)[0]
    return B


# ---------------------------------------------------------------------------
# initialization

def spectral_init(collapsed: CollapsedSystem, r: int) -> np.ndarray:
    """Top-r left singular vectors of M0 = sum_k A_cllps,k^T y_cllps,k e_k^T.

    No truncation is applied to the collapsed measurements before forming M0.
    """
    Yc, Ac = collapsed.Y_cllps, collapsed.A_cllps
    if r < 1 or r > min(Ac.shape[2], Yc.shape[1]):
        raise InvalidDimsError(
            f"rank r={r} out of range for collapsed system with n={Ac.shape[2]}, q={Yc.shape[1]}"
        )
    M0 = _at_cols(Ac, Yc).T  # column k = A_cllps,k^T y_cllps,k
    if not M0.any():
        raise DegenerateInitError("spectral matrix M0 is identically zero")
    U, _, _ = np.linalg.svd(M0, full_matrices=False)
    return np.ascontiguousarray(U[:, :r])


def init_b_collapsed(U0: np.ndarray, collapsed: CollapsedSystem,
                     instance: ProblemInstance):
    """Initial b_k = (A_cllps,k U0)^+ y_cllps,k and the unpermuted prediction.

    Returns (B0, Yhat1) with Yhat1[:, k] = A_k U0 b_k built from the full
    (uncollapsed) sensing matrices; no permutation is applied at this stage.
    """
    U0 = np.asarray(U0, dtype=np.float64)
    Gc = np.matmul(collapsed.A_cllps, U0)
    B0 = _solve_b(Gc, collapsed.Y_cllps, on_deficient="raise")
    Yhat1 = _predict(np.matmul(instance.A, U0), B0)
    return B0, Yhat1


def estimate_step_size_altgdmin(U0: np.ndarray, B0: np.ndarray, m: int) -> float:
    """One-shot step size 0.3 / (m sigma_max(U0 B0)^2) from the initial estimate."""
    smax = float(np.linalg.norm(np.asarray(U0) @ np.asarray(B0), 2))
    if not np.isfinite(smax):
        raise DegenerateInputError("initial estimate has non-finite entries")
    if smax == 0.0:
        raise DegenerateInputError("initial estimate X1 is zero; step size undefined")
    return 0.3 / (m * smax * smax)


# ---------------------------------------------------------------------------
# single updates

def gradient_u(P: BlockPermutation, U: np.ndarray, B: np.ndarray,
               instance: ProblemInstance, Yhat: np.ndarray) -> np.ndarray:
    """sum_k (P A_k)^T (yhat_k - y_k) b_k^T for the permuted prediction Yhat.

    The caller supplies Yhat[:, k] = P A_k U b_k consistent with (P, U, B).
    This is the gradient convention without the factor 2 of the squared
    loss; the step-size rules absorb that constant.
    """
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if Yhat.shape != instance.Y.shape:
        raise ShapeMismatchError(
            f"Yhat shape {Yhat.shape} does not match Y {instance.Y.shape}"
        )
    resid_unperm = apply_permutation(P, Yhat - instance.Y, inverse=True)
    return _grad_from_unperm(instance.A, resid_unperm, np.asarray(B, dtype=np.float64))


def gd_step_u(U: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """QR retraction of the gradient step: the Q factor of U - eta grad.

    The sign convention fixes R to a nonnegative diagonal so the output is a
    deterministic function of the input.
    """
    U = np.asarray(U, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if U.shape != grad.shape:
        raise ShapeMismatchError(f"U {U.shape} and grad {grad.shape} differ in shape")
    if not (np.isfinite(eta) and eta > 0):
        raise DegenerateInputError(f"step size must be positive and finite, got {eta}")
    M = U - eta * grad
    Q, R = np.linalg.qr(M)
    d = np.diagonal(R)
    admax = np.abs(d).max() if d.size else 0.0
    if admax == 0.0 or np.abs(d).min() <= max(M.shape) * _EPS * admax:
        raise QrDegeneracyError("U - eta*grad is numerically rank deficient")
    return Q * np.where(d < 0, -1.0, 1.0)


def ls_update_b(P: BlockPermutation, U: np.ndarray, instance: ProblemInstance):
    """Column-wise least squares b_k = (P A_k U)^+ y_k.

    Returns (B, Yhat) with Yhat[:, k] = P A_k U b_k. Solved against P^T y_k
    in unpermuted coordinates (identical problem since P is orthogonal).
    Rank-deficient columns are repaired with minimum-norm solves and
    reported through a RankDeficiencyWarning.
    """
    U = np.asarray(U, dtype=np.float64)
    Z = apply_permutation(P, instance.Y, inverse=True)
    G = np.matmul(instance.A, U)
    B = _solve_b(G, Z, on_deficient="warn")
    Yhat = apply_permutation(P, _predict(G, B))
    return B, Yhat


def _exact_u_direct(A, Z, B):
    """Exact minimizer over U of sum_k ||Z[:, k] - A_k U b_k||^2.

    Materializes the mq x nr stacked coefficient matrix whose k-th row block
    is the Kronecker product b_k^T x A_k and solves the least-squares problem
    on it, rebuilt fresh on every call. That O(mq n^2 r^2) solve is the
    per-iteration cost of the direct method by construction; a normal
    equations shortcut would be roughly r^2 cheaper but would no longer be
    the method whose runtime this solver is meant to exhibit.
    """
    q, m, n = A.shape
    r = B.shape[0]
    if m * q < n * r:
        raise InvalidDimsError(
            f"stacked system is underdetermined: mq={m * q} < nr={n * r}"
        )
    # M[k*m + i, j*n + a] = B[j, k] * A[k, i, a], acting on vec(U) by columns
    M = (B.T[:, None, :, None] * A[:, :, None, :]).reshape(q * m, n * r)
    w, _, rank, _ = np.linalg.lstsq(M, Z.T.ravel(), rcond=None)
    if rank < n * r:
        raise SolverError(
            f"stacked least-squares system is rank deficient ({rank} < {n * r})"
        )
    return np.ascontiguousarray(w.reshape(r, n).T)


def _exact_u_gd(A, Z, B, U0, lipschitz, max_inner, inner_tol):
    """Inner gradient descent for the U subproblem with step 1 / lipschitz."""
    if not (np.isfinite(lipschitz) and lipschitz > 0):
        raise DegenerateInputError(f"Lipschitz bound must be positive and finite, got {lipschitz}")
    step = 1.0 / lipschitz
    U = np.asarray(U0, dtype=np.float64)
    for _ in range(max_inner):
        resid = _predict(np.matmul(A, U), B) - Z
        grad = _grad_from_unperm(A, resid, B)
        gn = float(np.linalg.norm(grad))
        if not np.isfinite(gn):
            raise SolverError("inner gradient descent diverged (non-finite gradient)")
        if gn <= inner_tol:
            break
        U = U - step * grad
    return U


def _lipschitz_bound(A, B):
    """L = sum_k sigma_max(A_k)^2 ||b_k||^2."""
    smax = np.linalg.svd(A, compute_uv=False)[:, 0]
    L = float(np.sum(smax * smax * (B * B).sum(axis=0)))
    if not (np.isfinite(L) and L > 0):
        raise DegenerateInputError(f"Lipschitz bound is degenerate: {L}")
    return L


def exact_update_u(P: BlockPermutation, B: np.ndarray, instance: ProblemInstance,
                   mode: str = "direct", U0: np.ndarray | None = None,
                   lipschitz: float | None = None, max_inner: int = 50,
                   inner_tol: float = 1e-12) -> np.ndarray:
    """Minimize sum_k ||y_k - P A_k U b_k||^2 over U with no orthonormalization.

    mode="direct" solves the stacked least squares exactly; mode="gd" runs
    inner gradient descent from U0 with step 1/lipschitz (the bound is
    computed from B when not supplied).
    """
    B = np.asarray(B, dtype=np.float64)
    Z = apply_permutation(P, instance.Y, inverse=True)
    if mode == "direct":
        return _exact_u_direct(instance.A, Z, B)
    if mode == "gd":
        if U0 is None:
            raise ShapeMismatchError("mode='gd' requires the current iterate U0")
        L = _lipschitz_bound(instance.A, B) if lipschitz is None else lipschitz
        return _exact_u_gd(instance.A, Z, B, U0, L, max_inner, inner_tol)
    raise InvalidDimsError(f"unknown mode {mode!r}; expected 'direct' or 'gd'")


# ---------------------------------------------------------------------------
# outer loops

def _run(instance, cfg, truth, kind, estimate_perm, label):
    d = instance.dims
    A, Y = instance.A, instance.Y

    tic = time.perf_counter()
    collapsed = collapse(instance)
    U = spectral_init(collapsed, d.r)
    B, Yhat = init_b_collapsed(U, collapsed, instance)
    FactorPair(U, B)  # enforce the orthonormal-init contract
    eta = None
    lipschitz = None
    if kind == "altgdmin":
        eta = cfg.eta if cfg.eta is not None else estimate_step_size_altgdmin(U, B, d.m)
    elif cfg.u_mode == "gd":
        lipschitz = _lipschitz_bound(A, B)  # held fixed for all outer iterations
    cum = time.perf_counter() - tic

    def measure_sd(Ucur):
        if truth is None:
            return None
        Uo = Ucur if kind == "altgdmin" else np.linalg.qr(Ucur)[0]
        return subspace_distance(Uo, truth.Ustar)

    obj = _sumsq(Y - Yhat)  # objective with P = identity at t = 0
    sd = measure_sd(U)
    trace = [IterationRecord(0, obj, sd, cum)]
    objs = [obj]
    P = None
    Z = Y
    iters = 0

    if not (sd is not None and sd <= cfg.stop_tol):
        for t in range(1, cfg.max_iters + 1):
            t0 = time.perf_counter()
            try:
                if estimate_perm:
                    P = update_permutation(Y, Yhat, d.s)
                    Z = apply_permutation(P, Y, inverse=True)
                f_p = _sumsq(Z - Yhat) if cfg.track_substeps else None
                if kind == "altgdmin":
                    grad = _grad_from_unperm(A, Yhat - Z, B)
                    U = gd_step_u(U, grad, eta)
                elif cfg.u_mode == "direct":
                    U = _exact_u_direct(A, Z, B)
                else:
                    U = _exact_u_gd(A, Z, B, U, lipschitz, cfg.max_inner, cfg.inner_tol)
                G = np.matmul(A, U)
                f_u = _sumsq(_predict(G, B) - Z) if cfg.track_substeps else None
                B = _solve_b(G, Z, on_deficient="warn")
                Yhat = _predict(G, B)
            except PermLrcsError as err:
                raise SolverError(f"{label}: iteration {t}: {err}") from err
            cum += time.perf_counter() - t0

            obj = _sumsq(Z - Yhat)
            sd = measure_sd(U)
            objs.append(obj)
            trace.append(IterationRecord(t, obj, sd, cum, f_p, f_u))
            iters = t
            if sd is not None and sd <= cfg.stop_tol:
                break
            if obj == 0.0:
                break
            if len(objs) > _PLATEAU_WINDOW:
                prev = objs[-1 - _PLATEAU_WINDOW]
                if prev > 0.0 and abs(prev - obj) <= cfg.stop_tol * prev:
                    break

    final_sd = trace[-1].sd
    converged = bool(final_sd is not None and final_sd <= cfg.sd_threshold)
    return SolveResult(U=U, B=B, P=P, trace=tuple(trace),
                       converged=converged, iterations_run=iters)


def run_perm_altgdmin(instance: ProblemInstance, cfg: SolverConfig = SolverConfig(),
                      truth=None) -> SolveResult:
    """Full pipeline: collapse, spectral init, then P / gradient-U / B sweeps."""
    return _run(instance, cfg, truth, kind="altgdmin", estimate_perm=True,
                label="perm-altgdmin")


def run_perm_altmin(instance: ProblemInstance, cfg: SolverConfig = SolverConfig(),
                    truth=None) -> SolveResult:
    """Same pipeline as run_perm_altgdmin with the exact U update (no QR).

    cfg.u_mode chooses between the direct stacked solve and inner gradient
    descent.
    """
    return _run(instance, cfg, truth, kind="altmin", estimate_perm=True,
                label=f"perm-altmin-{'exact' if cfg.u_mode == 'direct' else 'gd'}")


def run_lrcs_collapsed_baseline(instance: ProblemInstance,
                                cfg: SolverConfig = SolverConfig(),
                                truth=None, variant: str = "altgdmin") -> SolveResult:
    """Run plain low-rank column-wise sensing on the collapsed system only.

    The m/s collapsed measurements per column are treated as the whole
    data set and no permutation is ever estimated (P in the result is None).
    The returned U lives in the original n-dimensional space, so recovery
    metrics against the planted truth apply unchanged; the objective in the
    trace refers to the collapsed system.
    """
    if variant not in ("altgdmin", "altmin"):
        raise InvalidDimsError(f"unknown baseline variant {variant!r}")
    d = instance.dims
    c = collapse(instance)
    reduced = ProblemInstance(Dims(n=d.n, q=d.q, m=d.num_blocks, r=d.r, s=1),
                              c.Y_cllps, c.A_cllps)
    return _run(reduced, cfg, truth, kind=variant, estimate_perm=False,
                label=f"lrcs-cllps-{variant}")
