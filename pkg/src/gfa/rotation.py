"""Parameter-expansion rotation of the latent subspace.

Between coordinate sweeps the bound can be improved by an invertible
K x K transform of the factorization that leaves the product Z W^T
unchanged. The objective maximized here,

    L(R) = -1/2 Tr(R^-1 <Z'Z> R^-T) + C log|det R|
           - sum_m D_m/2 sum_k log(r_k' <Wm'Wm> r_k + delta),

with C = sum_m D_m - N, equals (up to an additive constant and
O(hyperprior) terms) the change in the evidence lower bound produced by
the transform Zhat = Z R^-T, What = W R followed by re-optimizing
q(alpha). The transform convention of apply_rotation is the inverse one
(Zhat = Z R^T, What = W R^-1), so the fit loop applies the inverse of the
optimized matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .inference import NumericalCorruptionError, Posterior, update_alpha


@dataclass(frozen=True)
class RotationProblem:
    """Second moments defining the rotation objective."""

    zz: np.ndarray
    ww: list[np.ndarray]
    dims: tuple[int, ...]
    n_samples: int

    @property
    def K(self) -> int:
        return self.zz.shape[0]

    @property
    def C(self) -> float:
        return float(sum(self.dims) - self.n_samples)


@dataclass(frozen=True)
class RotationConfig:
    max_iter: int = 200
    grad_tol: float = 1e-6
    memory: int = 10
    quad_floor: float = 1e-12

    def __post_init__(self):
        if min(self.max_iter, self.memory) < 1 or self.grad_tol <= 0:
            raise ValueError("rotation settings must be positive")
        if self.quad_floor <= 0:
            raise ValueError("quad_floor must be positive")


def _lu(r: np.ndarray):
    try:
        piv = lu_factor(r)
    except ValueError as exc:
        raise NumericalCorruptionError(f"singular transform: {exc}") from exc
    diag = np.abs(np.diag(piv[0]))
    if np.any(diag < 1e-300) or not np.all(np.isfinite(diag)):
        raise NumericalCorruptionError("transform numerically singular")
    return piv


def rotation_objective(
    r: np.ndarray, problem: RotationProblem, quad_floor: float = 1e-12
) -> float:
    """Bound-change objective L(R); raises on a singular transform."""
    piv = _lu(r)
    logdet = float(np.sum(np.log(np.abs(np.diag(piv[0])))))
    rinv = lu_solve(piv, np.eye(problem.K))
    value = -0.5 * float(np.einsum("ij,jk,ik->", rinv, problem.zz, rinv))
    value += problem.C * logdet
    for d, ww in zip(problem.dims, problem.ww):
        quad = np.einsum("ij,ij->j", r, ww @ r)
        value -= 0.5 * d * float(np.log(quad + quad_floor).sum())
    return value


def rotation_gradient(
    r: np.ndarray, problem: RotationProblem, quad_floor: float = 1e-12
) -> np.ndarray:
    """Analytic dL/dR, matching rotation_objective."""
    piv = _lu(r)
    rinv = lu_solve(piv, np.eye(problem.K))
    rinv_t = rinv.T
    grad = rinv_t @ rinv @ problem.zz @ rinv_t
    grad += problem.C * rinv_t
    for d, ww in zip(problem.dims, problem.ww):
        wr = ww @ r
        quad = np.einsum("ij,ij->j", r, wr)
        grad -= d * wr / (quad + quad_floor)
    return grad


def _fused_value_grad(r, zz, ww_stack, dims_vec, c_const, quad_floor, eye):
    """L(R) and dL/dR sharing one LU factorization; None, None if singular."""
    try:
        piv = lu_factor(r, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None, None
    diag = np.abs(np.diag(piv[0]))
    if not np.all(np.isfinite(diag)) or np.any(diag < 1e-300):
        return None, None
    logdet = float(np.sum(np.log(diag)))
    rinv = lu_solve(piv, eye, check_finite=False)
    rinv_zz = rinv @ zz
    value = -0.5 * float(np.vdot(rinv_zz, rinv)) + c_const * logdet
    rinv_t = rinv.T
    grad = rinv_t @ rinv_zz @ rinv_t + c_const * rinv_t
    wr = ww_stack @ r
    quad = np.einsum("ik,mik->mk", r, wr) + quad_floor
    if np.any(quad <= 0):
        return None, None
    value -= 0.5 * float((dims_vec[:, None] * np.log(quad)).sum())
    wr *= (dims_vec[:, None] / quad)[:, None, :]
    grad -= wr.sum(axis=0)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return None, None
    return value, grad


def _lbfgs_minimize(value_and_grad, x0, max_iter, grad_tol, memory):
    """Two-loop L-BFGS with backtracking Armijo line search (c = 1e-4,
    shrink 0.5). value_and_grad returns (None, None) for infeasible points,
    which the line search treats as failed steps. Returns the best iterate
    seen, never worse than the start.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = value_and_grad(x)
    if f is None:
        return x0
    best_x, best_f = x.copy(), f
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= grad_tol:
            break
        # Two-loop recursion for the search direction.
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_hist), reversed(y_hist)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
            rho = 1.0 / (y @ s)
            q += (a - rho * (y @ q)) * s
        direction = -q
        slope = g @ direction
        if slope >= 0:  # stale curvature pairs; fall back to steepest descent
            direction = -g
            slope = g @ direction
            s_hist.clear()
            y_hist.clear()
        step = 1.0
        accepted = False
        while step > 1e-16:
            x_new = x + step * direction
            f_new, g_new = value_and_grad(x_new)
            if f_new is not None and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        s_vec = x_new - x
        y_vec = g_new - g
        if s_vec @ y_vec > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
    return best_x


def optimize_rotation(
    problem: RotationProblem, config: RotationConfig = RotationConfig()
) -> np.ndarray:
    """Maximize L(R) from R = I with a two-loop L-BFGS recursion.

    Steps that make R numerically singular or the objective non-finite
    are rejected; the result is never worse than the identity.
    """
    k = problem.K
    delta = config.quad_floor
    ww_stack = np.stack(problem.ww)
    dims_vec = np.asarray(problem.dims, dtype=float)
    eye = np.eye(k)

    def value_and_grad(x):
        f, g = _fused_value_grad(
            x.reshape(k, k), problem.zz, ww_stack, dims_vec, problem.C, delta, eye
        )
        if f is None:
            return None, None
        return -f, -g.ravel()

    x = _lbfgs_minimize(
        value_and_grad, eye.ravel(), config.max_iter, config.grad_tol, config.memory
    )
    return x.reshape(k, k)


def _transform(post: Posterior, r: np.ndarray) -> None:
    """Apply Zhat = Z R^T, What = W R^-1 to the moments, in place."""
    piv = _lu(r)
    rinv = lu_solve(piv, np.eye(r.shape[0]))
    post.Z_mean = post.Z_mean @ r.T
    post.Z_cov = r @ post.Z_cov @ r.T
    for m in range(post.n_views):
        post.W_mean[m] = post.W_mean[m] @ rinv
        post.W_cov[m] = rinv.T @ post.W_cov[m] @ rinv


def apply_rotation(post: Posterior, r: np.ndarray) -> None:
    """Transform the posterior by Zhat = Z R^T, What = W R^-1, in place.

    The product Z W^T and the likelihood moments are invariant; the alpha
    posterior is recomputed from the transformed loading moments.
    """
    _transform(post, r)
    update_alpha(post)


def problem_from_posterior(post: Posterior) -> RotationProblem:
    """Rotation problem for the current moments.

    For the shared-ARD mode the per-view log terms collapse into a single
    merged view of width sum(D_m) with moment matrix sum_m <Wm'Wm>, which
    is exactly the bound profile of the shared precisions.
    """
    ww = [post.ww(m) for m in range(post.n_views)]
    dims = post.dims
    if post.hyper.prior_mode == "shared_ard":
        ww = [np.sum(ww, axis=0)]
        dims = (sum(post.dims),)
    return RotationProblem(
        zz=post.zz(), ww=ww, dims=tuple(dims), n_samples=post.n_samples
    )


def rotation_step(post: Posterior, config: RotationConfig = RotationConfig()) -> bool:
    """One optimize + apply cycle; returns whether a transform was applied.

    The optimized matrix parameterizes the inverse transform (see module
    docstring), so its inverse is handed to apply_rotation.
    """
    problem = problem_from_posterior(post)
    r = optimize_rotation(problem, config)
    if np.allclose(r, np.eye(post.K)):
        return False
    gain = rotation_objective(r, problem, config.quad_floor) - rotation_objective(
        np.eye(post.K), problem, config.quad_floor
    )
    if gain <= 0:
        return False
    piv = _lu(r)
    apply_rotation(post, lu_solve(piv, np.eye(post.K)))
    return True


def warmup_rotation_step(
    post: Posterior, config: RotationConfig = RotationConfig()
) -> bool:
    """Rotation step for sweeps where q(alpha) is held at its neutral
    initialization (<alpha> = 1). The frozen precisions turn the log terms
    of L(R) into the exact quadratic profile

        L0(R) = -1/2 Tr(R^-1 <Z'Z> R^-T) + C log|det R|
                - 1/2 sum_k r_k' S r_k,   S = sum_m <Wm'Wm>,

    the bound change of the transform with alpha left untouched. The
    posterior transform therefore skips the alpha recomputation; each
    accepted step still increases the bound exactly.
    """
    k = post.K
    zz = post.zz()
    s_mat = np.zeros((k, k))
    for m in range(post.n_views):
        s_mat += post.ww(m)
    c_const = float(sum(post.dims) - post.n_samples)
    eye = np.eye(k)

    def value_and_grad(x):
        r = x.reshape(k, k)
        try:
            piv = lu_factor(r, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None, None
        diag = np.abs(np.diag(piv[0]))
        if not np.all(np.isfinite(diag)) or np.any(diag < 1e-300):
            return None, None
        logdet = float(np.sum(np.log(diag)))
        rinv = lu_solve(piv, eye, check_finite=False)
        rinv_zz = rinv @ zz
        sr = s_mat @ r
        f = (
            -0.5 * float(np.vdot(rinv_zz, rinv))
            + c_const * logdet
            - 0.5 * float(np.vdot(r, sr))
        )
        g = rinv.T @ rinv_zz @ rinv.T + c_const * rinv.T - sr
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return None, None
        return -f, -g.ravel()

    x = _lbfgs_minimize(
        value_and_grad, eye.ravel(), config.max_iter, config.grad_tol, config.memory
    )
    r = x.reshape(k, k)
    if np.allclose(r, eye):
        return False
    f_r, _ = value_and_grad(x)
    f_eye, _ = value_and_grad(eye.ravel())
    if f_r is None or f_r >= f_eye:
        return False
    piv = _lu(r)
    _transform(post, lu_solve(piv, eye))
    return True
