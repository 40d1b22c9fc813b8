"""Exact Gaussian-process regression.

Inputs are min-max normalized to the unit box, targets standardized to zero
mean and unit variance. Hyperparameters maximize the log marginal likelihood
in log-parameter space: multi-start (deterministic sub-seeds) bounded
quasi-Newton ascent with analytic gradients, stopping at projected-gradient
infinity-norm <= 1e-5 or 200 iterations per restart. Cholesky factorizations
escalate a diagonal jitter (doubling from 1e-10, capped at 1e-2) before
giving up.

Kernels: Matern 5/2 (default) and RBF, both with ARD lengthscales.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import (
    DimensionMismatchError,
    NonFiniteInputError,
    NotPositiveDefiniteError,
)
from .seeding import rng_for

SQRT5 = math.sqrt(5.0)

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-6, 1e1)

DEFAULT_NOISE_FLOOR = 1e-6
JITTER_START = 1e-10
JITTER_CAP = 1e-2

N_RESTARTS = 8
MAX_ITERS = 200
GRAD_TOL = 1e-5


@dataclass(frozen=True)
class KernelConfig:
    family: str = "matern52"
    lengthscales: tuple[float, ...] = (1.0,)
    signal_variance: float = 1.0
    noise_variance: float = DEFAULT_NOISE_FLOOR

    def log_params(self) -> np.ndarray:
        return np.log(np.concatenate([
            np.asarray(self.lengthscales, dtype=float),
            [self.signal_variance, self.noise_variance],
        ]))

    @classmethod
    def from_log_params(cls, family: str, theta: np.ndarray) -> "KernelConfig":
        vals = np.exp(np.asarray(theta, dtype=float))
        return cls(family=family,
                   lengthscales=tuple(vals[:-2]),
                   signal_variance=float(vals[-2]),
                   noise_variance=float(vals[-1]))


def _log_bounds(d: int, noise_floor: float) -> tuple[np.ndarray, np.ndarray]:
    lo = np.log(np.concatenate([
        np.full(d, LENGTHSCALE_BOUNDS[0]), [SIGNAL_BOUNDS[0]],
        [max(noise_floor, 1e-12)],
    ]))
    hi = np.log(np.concatenate([
        np.full(d, LENGTHSCALE_BOUNDS[1]), [SIGNAL_BOUNDS[1]], [NOISE_BOUNDS[1]],
    ]))
    return lo, hi


def _scaled_sq_dists(Xa: np.ndarray, Xb: np.ndarray, ls: np.ndarray) -> np.ndarray:
    A = Xa / ls
    B = Xb / ls
    d2 = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def kernel_matrix(config: KernelConfig, Xa: np.ndarray, Xb: np.ndarray) -> np.ndarray:
    ls = np.asarray(config.lengthscales, dtype=float)
    d2 = _scaled_sq_dists(Xa, Xb, ls)
    if config.family == "rbf":
        return config.signal_variance * np.exp(-0.5 * d2)
    if config.family == "matern52":
        d = np.sqrt(d2)
        return config.signal_variance * (1.0 + SQRT5 * d + (5.0 / 3.0) * d2) * np.exp(-SQRT5 * d)
    raise ValueError(f"unknown kernel family {config.family!r}")


def _kernel_grads(config: KernelConfig, X: np.ndarray) -> list[np.ndarray]:
    """dK/d(log param) for [lengthscales..., signal, noise] at X vs X."""
    n, dim = X.shape
    ls = np.asarray(config.lengthscales, dtype=float)
    d2 = _scaled_sq_dists(X, X, ls)
    grads: list[np.ndarray] = []
    if config.family == "rbf":
        K0 = config.signal_variance * np.exp(-0.5 * d2)
        for j in range(dim):
            r2 = (X[:, None, j] - X[None, :, j]) ** 2 / ls[j] ** 2
            grads.append(K0 * r2)
        grads.append(K0.copy())
    else:
        d = np.sqrt(d2)
        expo = np.exp(-SQRT5 * d)
        K0 = config.signal_variance * (1.0 + SQRT5 * d + (5.0 / 3.0) * d2) * expo
        # dk/d(log l_j) = (5/3) s (1 + sqrt5 d) exp(-sqrt5 d) * r_j^2/l_j^2
        base = (5.0 / 3.0) * config.signal_variance * (1.0 + SQRT5 * d) * expo
        for j in range(dim):
            r2 = (X[:, None, j] - X[None, :, j]) ** 2 / ls[j] ** 2
            grads.append(base * r2)
        grads.append(K0.copy())
    grads.append(config.noise_variance * np.eye(n))
    return grads


def _chol_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with escalating diagonal jitter."""
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        except Exception:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 2.0
        if jitter > JITTER_CAP:
            raise NotPositiveDefiniteError(
                f"covariance not positive definite at jitter cap {JITTER_CAP}"
            )


@dataclass(frozen=True)
class PosteriorSlice:
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class GpModel:
    """Fitted GP with cached factorizations; treat as immutable."""

    kernel: KernelConfig
    Xn: np.ndarray                      # (n, d) in the unit box
    yn: np.ndarray                      # (n,) standardized
    input_bounds: np.ndarray            # (d, 2) original-unit bounds
    y_mean: float
    y_scale: float
    L: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0
    degenerate: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.L is None:
            self._refresh()

    def _refresh(self):
        K = kernel_matrix(self.kernel, self.Xn, self.Xn)
        K[np.diag_indices_from(K)] += self.kernel.noise_variance
        L, jitter = _chol_with_jitter(K)
        self.L = L
        self.jitter = jitter
        self.alpha = cho_solve((L, True), self.yn)
        # cached pieces for the hot prediction path
        ls = np.asarray(self.kernel.lengthscales, dtype=float)
        self._ls = ls
        self._Xn_scaled = self.Xn / ls
        self._Xn_sq = np.einsum("ij,ij->i", self._Xn_scaled, self._Xn_scaled)
        self._box_lo = self.input_bounds[:, 0]
        width = self.input_bounds[:, 1] - self.input_bounds[:, 0]
        self._box_width = np.where(width == 0, 1.0, width)

    def _cross_kernel(self, Xq: np.ndarray) -> np.ndarray:
        """k(Xq, Xtrain) for original-unit queries, using cached train pieces."""
        A = ((Xq - self._box_lo) / self._box_width) / self._ls
        d2 = (np.einsum("ij,ij->i", A, A)[:, None] + self._Xn_sq[None, :]
              - 2.0 * A @ self._Xn_scaled.T)
        np.maximum(d2, 0.0, out=d2)
        s = self.kernel.signal_variance
        if self.kernel.family == "rbf":
            return s * np.exp(-0.5 * d2)
        dist = np.sqrt(d2)
        return s * (1.0 + SQRT5 * dist + (5.0 / 3.0) * d2) * np.exp(-SQRT5 * dist)

    @property
    def n(self) -> int:
        return self.Xn.shape[0]

    @property
    def dim(self) -> int:
        return self.Xn.shape[1]

    def normalize_inputs(self, X: np.ndarray) -> np.ndarray:
        lo = self.input_bounds[:, 0]
        width = self.input_bounds[:, 1] - self.input_bounds[:, 0]
        width = np.where(width == 0, 1.0, width)
        return (np.asarray(X, dtype=float) - lo) / width

    def to_json_dict(self) -> dict:
        digest = hashlib.sha256(
            self.Xn.tobytes() + self.yn.tobytes()
        ).hexdigest()
        return {
            "kernel": {
                "family": self.kernel.family,
                "lengthscales": list(self.kernel.lengthscales),
                "signal_variance": self.kernel.signal_variance,
                "noise_variance": self.kernel.noise_variance,
            },
            "input_bounds": self.input_bounds.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "n_train": int(self.n),
            "degenerate": self.degenerate,
            "seed": self.seed,
            "train_digest": digest,
        }


def log_marginal_likelihood(model: GpModel, config: KernelConfig | None = None
                            ) -> tuple[float, np.ndarray]:
    """Log marginal likelihood of the model's training set under ``config``
    (defaults to the model's own kernel) and its gradient w.r.t. the log
    parameters [lengthscales..., signal, noise]."""
    cfg = config or model.kernel
    return _mll_and_grad(cfg, model.Xn, model.yn)


def _mll_value(config: KernelConfig, X: np.ndarray, y: np.ndarray) -> float:
    n = X.shape[0]
    K = kernel_matrix(config, X, X)
    K[np.diag_indices_from(K)] += config.noise_variance
    L, _ = _chol_with_jitter(K)
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


def _mll_and_grad(config: KernelConfig, X: np.ndarray, y: np.ndarray
                  ) -> tuple[float, np.ndarray]:
    n = X.shape[0]
    K = kernel_matrix(config, X, X)
    K[np.diag_indices_from(K)] += config.noise_variance
    L, _ = _chol_with_jitter(K)
    alpha = cho_solve((L, True), y)
    value = float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grads = _kernel_grads(config, X)
    grad = np.array([0.5 * np.sum(A * dK) for dK in grads])
    return value, grad


class _FitWorkspace:
    """Precomputed per-dimension squared differences plus batched evaluation
    of the MLL across restarts (one set of stacked LAPACK calls per round)."""

    def __init__(self, X: np.ndarray, y: np.ndarray, family: str):
        self.y = y
        self.family = family
        self.n, self.d = X.shape
        diff = X[:, None, :] - X[None, :, :]
        self.D = diff * diff        # (n, n, d)
        self.Dflat = self.D.reshape(-1, self.d)
        self.eye = np.eye(self.n)
        self._log2pi_term = 0.5 * self.n * math.log(2 * math.pi)

    def _build(self, thetas: np.ndarray):
        """thetas (R, d+2) -> K, K0, grad_base, inv_ls2, noise (stacked)."""
        inv_ls2 = np.exp(-2.0 * thetas[:, : self.d])
        signal = np.exp(thetas[:, self.d])
        noise = np.exp(thetas[:, self.d + 1])
        d2 = np.tensordot(inv_ls2, self.D, axes=([1], [2]))
        if self.family == "rbf":
            K0 = signal[:, None, None] * np.exp(-0.5 * d2)
            grad_base = K0
        else:
            dist = np.sqrt(d2)
            expo = np.exp(-SQRT5 * dist)
            K0 = signal[:, None, None] * (1.0 + SQRT5 * dist + (5.0 / 3.0) * d2) * expo
            grad_base = (5.0 / 3.0) * signal[:, None, None] * (1.0 + SQRT5 * dist) * expo
        K = K0 + noise[:, None, None] * self.eye
        return K, K0, grad_base, inv_ls2, noise

    def _factor(self, K: np.ndarray, jitters: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray]:
        """Stacked Cholesky with persistent per-restart jitter escalation.

        ``jitters`` carries each restart's last successful jitter so repeat
        offenders (near-singular hyperparameter corners) pay escalation once.
        """
        finite = np.isfinite(jitters)
        Kj = K + np.where(finite, jitters, 0.0)[:, None, None] * self.eye \
            if jitters.any() else K
        if finite.all():
            try:
                return np.linalg.cholesky(Kj), jitters
            except np.linalg.LinAlgError:
                pass
        L = np.empty_like(K)
        out = jitters.copy()
        for i in range(K.shape[0]):
            j = out[i]
            if not np.isfinite(j):
                L[i] = self.eye  # unfactorable at the cap: flagged via inf jitter
                continue
            while True:
                try:
                    L[i] = np.linalg.cholesky(K[i] + j * self.eye if j else K[i])
                    break
                except np.linalg.LinAlgError:
                    j = JITTER_START if j == 0.0 else j * 2.0
                    if j > JITTER_CAP:
                        j = np.inf
                        L[i] = self.eye
                        break
            out[i] = j
        return L, out

    def _regularized(self, K: np.ndarray, jitters: np.ndarray) -> np.ndarray:
        j = np.where(np.isfinite(jitters), jitters, 0.0)
        return K + j[:, None, None] * self.eye if j.any() else K

    def values(self, thetas: np.ndarray, jitters: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
        K, _, _, _, _ = self._build(thetas)
        L, jitters = self._factor(K, jitters)
        Kj = self._regularized(K, jitters)
        rhs = np.ascontiguousarray(
            np.broadcast_to(self.y[:, None], (K.shape[0], self.n, 1))
        )
        alpha = np.linalg.solve(Kj, rhs)[:, :, 0]
        logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        vals = -0.5 * alpha @ self.y - logdet - self._log2pi_term
        vals[~np.isfinite(jitters)] = -np.inf
        return vals, jitters

    def values_and_grads(self, thetas: np.ndarray, jitters: np.ndarray
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        K, K0, grad_base, inv_ls2, noise = self._build(thetas)
        L, jitters = self._factor(K, jitters)
        Kj = self._regularized(K, jitters)
        R = K.shape[0]
        Kinv = np.linalg.inv(Kj)
        alpha = Kinv @ self.y
        logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        vals = -0.5 * alpha @ self.y - logdet - self._log2pi_term
        A = alpha[:, :, None] * alpha[:, None, :] - Kinv
        AB = (A * grad_base).reshape(R, -1)
        grads = np.empty((R, self.d + 2))
        grads[:, : self.d] = 0.5 * inv_ls2 * (AB @ self.Dflat)
        grads[:, self.d] = 0.5 * np.sum(A * K0, axis=(1, 2))
        grads[:, self.d + 1] = 0.5 * noise * np.trace(A, axis1=1, axis2=2)
        bad = ~np.isfinite(jitters)
        if bad.any():
            vals[bad] = -np.inf
            grads[bad] = 0.0
        return vals, grads, jitters


def _ascend_multistart(theta0s: np.ndarray, ws: _FitWorkspace,
                       lo: np.ndarray, hi: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximize the MLL from every restart; keep the best.

    Each restart runs bounded quasi-Newton ascent (L-BFGS-B on the negated
    objective) with analytic gradients, stopping at projected-gradient
    infinity-norm <= GRAD_TOL or MAX_ITERS iterations. Plain gradient ascent
    stalls on the long lengthscale/signal ridge of GP likelihoods; the
    quasi-Newton direction follows it. Deterministic given the start points.
    """
    from scipy.optimize import minimize as _minimize

    best_value = -np.inf
    best_theta = np.clip(theta0s[0], lo, hi)
    box = list(zip(lo, hi))
    for theta0 in theta0s:
        jit = np.zeros(1)

        def neg(theta):
            vals, grads, jit[:] = ws.values_and_grads(theta[None, :], jit)
            if not np.isfinite(vals[0]):
                return np.inf, np.zeros_like(theta)
            return -vals[0], -grads[0]

        res = _minimize(neg, np.clip(theta0, lo, hi), method="L-BFGS-B", jac=True,
                        bounds=box,
                        options={"maxiter": MAX_ITERS, "gtol": GRAD_TOL,
                                 "ftol": 1e-12})
        if -res.fun > best_value:
            best_value = float(-res.fun)
            best_theta = np.clip(res.x, lo, hi)
    return best_value, best_theta


def fit_gp(X, y, *, family: str = "matern52", input_bounds=None, seed: int = 0,
           noise_floor: float = DEFAULT_NOISE_FLOOR, n_restarts: int = N_RESTARTS,
           initial: KernelConfig | None = None,
           fix_noise: float | None = None) -> GpModel:
    """Fit an exact GP by maximizing the log marginal likelihood.

    ``input_bounds`` (d,2) fixes the normalization box; defaults to the data
    envelope. ``fix_noise`` pins the noise variance (e.g. at the floor for
    noiseless simulator data) instead of fitting it. A constant target vector
    short-circuits the fit: the model is flagged degenerate with signal
    variance pinned at its lower bound.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"{X.shape[0]} inputs vs {y.shape[0]} targets")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations to fit")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInputError("training data contains non-finite values")

    if input_bounds is None:
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        hi = np.where(hi == lo, lo + 1.0, hi)
        input_bounds = np.stack([lo, hi], axis=1)
    else:
        input_bounds = np.asarray(input_bounds, dtype=float)
        if input_bounds.shape != (X.shape[1], 2):
            raise DimensionMismatchError(
                f"input_bounds shape {input_bounds.shape} != ({X.shape[1]}, 2)"
            )

    width = np.where(input_bounds[:, 1] == input_bounds[:, 0], 1.0,
                     input_bounds[:, 1] - input_bounds[:, 0])
    Xn = (X - input_bounds[:, 0]) / width

    y_mean = float(y.mean())
    y_std = float(y.std())
    degenerate = y_std == 0.0
    y_scale = 1.0 if degenerate else y_std
    yn = (y - y_mean) / y_scale

    d = X.shape[1]
    if degenerate:
        cfg = KernelConfig(family=family, lengthscales=(1.0,) * d,
                           signal_variance=SIGNAL_BOUNDS[0],
                           noise_variance=max(noise_floor, NOISE_BOUNDS[0]))
        return GpModel(cfg, Xn, yn, input_bounds, y_mean, y_scale,
                       degenerate=True, seed=seed)

    lo, hi = _log_bounds(d, noise_floor)
    start_noise = max(1e-2, noise_floor) if fix_noise is None else max(fix_noise, 1e-12)
    start0 = initial.log_params() if initial is not None else np.log(np.concatenate([
        np.full(d, 0.3), [1.0], [start_noise],
    ]))
    if fix_noise is not None:
        lo[-1] = hi[-1] = math.log(max(fix_noise, 1e-12))
        start0[-1] = lo[-1]

    ws = _FitWorkspace(Xn, yn, family)
    # restarts are drawn from a concentrated region of sensible scales for a
    # unit-box input and standardized targets, not the full admissible box
    draw_lo = np.log(np.concatenate([
        np.full(d, 0.05), [0.2], [max(1e-4, math.exp(lo[-1]))],
    ]))
    draw_hi = np.log(np.concatenate([np.full(d, 2.0), [5.0], [1e-1]]))
    draw_lo = np.clip(draw_lo, lo, hi)
    draw_hi = np.clip(draw_hi, lo, hi)
    draw_lo = np.minimum(draw_lo, draw_hi)
    theta0s = np.empty((n_restarts, d + 2))
    theta0s[0] = start0
    for restart in range(1, n_restarts):
        rng = rng_for(seed, "gp-fit", restart)
        theta0s[restart] = rng.uniform(draw_lo, draw_hi)
    _, best_theta = _ascend_multistart(theta0s, ws, lo, hi)

    cfg = KernelConfig.from_log_params(family, best_theta)
    return GpModel(cfg, Xn, yn, input_bounds, y_mean, y_scale, seed=seed)


def predict(model: GpModel, Xq) -> PosteriorSlice:
    """Posterior mean and variance at query points, in original target units."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[0] == 0:
        return PosteriorSlice(np.empty(0), np.empty(0))
    if Xq.shape[1] != model.dim:
        raise DimensionMismatchError(f"query dim {Xq.shape[1]} != model dim {model.dim}")
    if not np.all(np.isfinite(Xq)):
        raise NonFiniteInputError("query contains non-finite values")
    Kq = model._cross_kernel(Xq)
    mean_n = Kq @ model.alpha
    kss = model.kernel.signal_variance  # stationary kernels: k(x,x) = signal
    # triangular solve rather than the cached inverse: the inverse route loses
    # O(cond * eps) digits, which matters near interpolation
    V = solve_triangular(model.L, Kq.T, lower=True)
    var_n = kss - np.einsum("ij,ij->j", V, V)
    var_n = np.maximum(var_n, 0.0)
    return PosteriorSlice(mean_n * model.y_scale + model.y_mean,
                          var_n * model.y_scale ** 2)


def paired_posterior_cov(model: GpModel, Xa, Xb) -> np.ndarray:
    """Posterior covariance between aligned rows of Xa and Xb (original input
    units, standardized-target scale removed): (n,) diagonal of cov(f(a_i),
    f(b_i))."""
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    Xb = np.atleast_2d(np.asarray(Xb, dtype=float))
    Ka = model._cross_kernel(Xa)
    Kb = model._cross_kernel(Xb)
    # prior kernel between aligned rows
    An = model.normalize_inputs(Xa) / model._ls
    Bn = model.normalize_inputs(Xb) / model._ls
    d2 = np.maximum(((An - Bn) ** 2).sum(axis=1), 0.0)
    s = model.kernel.signal_variance
    if model.kernel.family == "rbf":
        k_pair = s * np.exp(-0.5 * d2)
    else:
        dist = np.sqrt(d2)
        k_pair = s * (1.0 + SQRT5 * dist + (5.0 / 3.0) * d2) * np.exp(-SQRT5 * dist)
    Va = solve_triangular(model.L, Ka.T, lower=True)
    Vb = solve_triangular(model.L, Kb.T, lower=True)
    cov = k_pair - np.einsum("ij,ij->j", Va, Vb)
    return cov * model.y_scale ** 2


def joint_posterior(model: GpModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean vector and covariance matrix (original units) at Xq."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Xqn = model.normalize_inputs(Xq)
    Kq = kernel_matrix(model.kernel, Xqn, model.Xn)
    Kqq = kernel_matrix(model.kernel, Xqn, Xqn)
    mean_n = Kq @ model.alpha
    V = solve_triangular(model.L, Kq.T, lower=True)
    cov_n = Kqq - V.T @ V
    cov_n = 0.5 * (cov_n + cov_n.T)
    return (mean_n * model.y_scale + model.y_mean, cov_n * model.y_scale ** 2)


def sample_posterior(model: GpModel, Xq, n_samples: int, seed: int) -> np.ndarray:
    """(n_samples, m) joint posterior draws; identical seed, identical draws."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[0] == 0:
        return np.empty((n_samples, 0))
    mean, cov = joint_posterior(model, Xq)
    scale2 = model.y_scale ** 2
    cov_n = cov / scale2
    try:
        Ls, _ = _chol_with_jitter(cov_n)
    except NotPositiveDefiniteError:
        # fully degenerate covariance: fall back to the diagonal
        Ls = np.diag(np.sqrt(np.maximum(np.diag(cov_n), 0.0)))
    rng = rng_for(seed, "posterior-sample")
    z = rng.standard_normal((n_samples, Xq.shape[0]))
    return mean[None, :] + (z @ Ls.T) * model.y_scale
