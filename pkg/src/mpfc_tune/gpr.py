"""Gaussian-process regression with a constant mean and a Matern 5/2 ARD kernel.

Two inference modes are provided: exact inference through a Cholesky
factorisation, and the FITC sparse approximation over a fixed inducing set for
large datasets. Targets are standardised before fitting; hyperparameters are
stored in the standardised space and predictions are mapped back.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

log = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
NOISE_FLOOR = 1e-8
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
SPARSE_THRESHOLD = 300
N_INDUCING = 300
N_RESTARTS = 5

# bounds in log space (standardised targets, inputs in the unit cube)
LOG_SF2_BOUNDS = (math.log(1e-6), math.log(1e3))
LOG_ELL_BOUNDS = (math.log(1e-2), math.log(1e2))
LOG_SN2_BOUNDS = (math.log(NOISE_FLOOR), math.log(10.0))
MEAN_BOUNDS = (-10.0, 10.0)


class GprNumericalError(RuntimeError):
    """Covariance matrix could not be factorised even with maximal jitter."""


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.inputs.shape[0] != self.targets.size:
            raise ValueError("inputs and targets must have equal lengths")
        if not np.all(np.isfinite(self.inputs)) or not np.all(np.isfinite(self.targets)):
            raise ValueError("dataset contains non-finite values")
        n = self.targets.size
        if n > 1:
            order = np.lexsort(self.inputs.T[::-1])
            srt = self.inputs[order]
            gaps = np.max(np.abs(np.diff(srt, axis=0)), axis=1)
            if np.any(gaps <= 1e-12):
                raise ValueError("dataset contains duplicate inputs")

    def __len__(self):
        return self.targets.size

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass
class GprHyperparams:
    mean: float
    signal_var: float
    lengthscales: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.lengthscales = np.asarray(self.lengthscales, dtype=float).ravel()
        if self.signal_var <= 0 or self.noise_var <= 0 or np.any(self.lengthscales <= 0):
            raise ValueError("variances and length-scales must be positive")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.mean, math.log(self.signal_var)],
                               np.log(self.lengthscales), [math.log(self.noise_var)]])

    @classmethod
    def from_vector(cls, theta) -> "GprHyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(float(theta[0]), float(math.exp(theta[1])), np.exp(theta[2:-1]),
                   float(math.exp(theta[-1])))

    @classmethod
    def default(cls, dim: int) -> "GprHyperparams":
        return cls(0.0, 1.0, np.full(dim, 0.5), 1e-4)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "signal_var": self.signal_var,
                "lengthscales": self.lengthscales.tolist(), "noise_var": self.noise_var}


def _scaled_sqdist(x1, x2, ell):
    a = np.atleast_2d(x1) / ell
    b = np.atleast_2d(x2) / ell
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def _matern(d2, sf2):
    r = np.sqrt(d2)
    return sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * d2) * np.exp(-SQRT5 * r)


def matern52_ard(x1, x2, hyp: GprHyperparams):
    """Matern 5/2 covariance with one length-scale per input dimension.

    Works on single points (returns a float) or on row-stacked point sets
    (returns the cross-covariance matrix).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape[-1] != x2.shape[-1] or x1.shape[-1] != hyp.lengthscales.size:
        raise ValueError("dimension mismatch between points and length-scales")
    K = _matern(_scaled_sqdist(x1, x2, hyp.lengthscales), hyp.signal_var)
    if x1.ndim == 1 and x2.ndim == 1:
        return float(K[0, 0])
    return K


def _chol_jitter(K):
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * scale * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise GprNumericalError("covariance matrix not positive definite up to jitter 1e-6")


def _exact_lml(theta, X, y, with_grad):
    hyp = GprHyperparams.from_vector(theta)
    n = y.size
    ell = hyp.lengthscales
    d2 = _scaled_sqdist(X, X, ell)
    r = np.sqrt(d2)
    e = np.exp(-SQRT5 * r)
    Kf = hyp.signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * d2) * e
    K = Kf + hyp.noise_var * np.eye(n)
    L, _ = _chol_jitter(K)
    resid = y - hyp.mean
    alpha = cho_solve((L, True), resid)
    lml = -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
    if not with_grad:
        return lml, None
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty_like(theta)
    grad[0] = alpha.sum()
    grad[1] = 0.5 * np.sum(W * Kf)
    base = hyp.signal_var * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e
    for d in range(ell.size):
        diff = (X[:, d][:, None] - X[:, d][None, :]) / ell[d]
        grad[2 + d] = 0.5 * np.sum(W * base * diff * diff)
    grad[-1] = 0.5 * hyp.noise_var * np.trace(W)
    return lml, grad


def _fitc_factors(hyp, X, y, Z):
    """Woodbury factors of the FITC covariance ``Q + diag(K - Q) + sn2 I``."""
    Kuu = matern52_ard(Z, Z, hyp)
    Luu, _ = _chol_jitter(Kuu)
    Kuf = matern52_ard(Z, X, hyp)
    V = solve_triangular(Luu, Kuf, lower=True)
    lam = np.maximum(hyp.signal_var - np.sum(V * V, axis=0), 0.0) + hyp.noise_var
    Vl = V / np.sqrt(lam)
    B = np.eye(Z.shape[0]) + Vl @ Vl.T
    LB, _ = _chol_jitter(B)
    resid = y - hyp.mean
    c = solve_triangular(LB, V @ (resid / lam), lower=True)
    return Luu, LB, lam, c, resid


def _fitc_lml(theta, X, y, Z):
    hyp = GprHyperparams.from_vector(theta)
    _, LB, lam, c, resid = _fitc_factors(hyp, X, y, Z)
    n = y.size
    quad = np.sum(resid * resid / lam) - c @ c
    logdet = np.sum(np.log(lam)) + 2.0 * np.log(np.diag(LB)).sum()
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)


def log_marginal_likelihood(data: Dataset, hyp: GprHyperparams) -> float:
    """Gaussian log evidence of the targets under the exact GP prior."""
    return float(_exact_lml(hyp.to_vector(), data.inputs, data.targets, False)[0])


def fitc_log_marginal_likelihood(data: Dataset, hyp: GprHyperparams, inducing) -> float:
    return float(_fitc_lml(hyp.to_vector(), data.inputs, data.targets,
                           np.atleast_2d(np.asarray(inducing, dtype=float))))


@dataclass
class GprModel:
    hyp: GprHyperparams
    inputs: np.ndarray
    y_shift: float
    y_scale: float
    mode: str
    status: str = "ok"
    inducing: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._factorise()

    @property
    def prior_mean(self) -> float:
        return self.y_shift + self.y_scale * self.hyp.mean

    @property
    def prior_var(self) -> float:
        return self.y_scale**2 * (self.hyp.signal_var + self.hyp.noise_var)

    def _factorise(self):
        y = self._cache.pop("y_std")
        if self.mode == "exact":
            K = matern52_ard(self.inputs, self.inputs, self.hyp)
            K[np.diag_indices_from(K)] += self.hyp.noise_var
            L, _ = _chol_jitter(K)
            self._cache.update(L=L, alpha=cho_solve((L, True), y - self.hyp.mean))
        else:
            Luu, LB, lam, c, _ = _fitc_factors(self.hyp, self.inputs, y, self.inducing)
            self._cache.update(Luu=Luu, LB=LB, w=solve_triangular(LB.T, c, lower=False))

    def predict(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation (noise included) at ``points``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hyp = self.hyp
        if self.mode == "exact":
            Ks = matern52_ard(pts, self.inputs, hyp)
            mean = hyp.mean + Ks @ self._cache["alpha"]
            v = solve_triangular(self._cache["L"], Ks.T, lower=True)
            var = hyp.signal_var - np.sum(v * v, axis=0)
        else:
            Kus = matern52_ard(self.inducing, pts, hyp)
            ws = solve_triangular(self._cache["Luu"], Kus, lower=True)
            mean = hyp.mean + ws.T @ self._cache["w"]
            b = solve_triangular(self._cache["LB"], ws, lower=True)
            var = hyp.signal_var - np.sum(ws * ws, axis=0) + np.sum(b * b, axis=0)
        var = np.maximum(var, 0.0) + hyp.noise_var
        return self.y_shift + self.y_scale * mean, self.y_scale * np.sqrt(var)


def _standardise(y):
    shift = float(np.mean(y))
    scale = float(np.std(y))
    if not scale > 1e-12 * max(1.0, abs(shift)):
        scale = 1.0
    return shift, scale, (y - shift) / scale


def _bounds(dim):
    return [MEAN_BOUNDS, LOG_SF2_BOUNDS] + [LOG_ELL_BOUNDS] * dim + [LOG_SN2_BOUNDS]


def _starts(dim, rng, n_restarts, first=None):
    lo, hi = np.array(_bounds(dim)).T
    starts = [GprHyperparams.default(dim).to_vector() if first is None else first]
    for _ in range(n_restarts - 1):
        th = np.empty(dim + 3)
        th[0] = rng.uniform(-1.0, 1.0)
        th[1] = rng.uniform(math.log(0.1), math.log(10.0))
        th[2:-1] = rng.uniform(math.log(0.05), math.log(5.0), dim)
        th[-1] = rng.uniform(math.log(1e-6), math.log(1e-1))
        starts.append(np.clip(th, lo, hi))
    return starts


def _optimise(fun, starts, bounds, jac, maxiter):
    best = None
    for th0 in starts:
        try:
            res = minimize(fun, th0, jac=jac, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": maxiter})
        except (GprNumericalError, np.linalg.LinAlgError, ValueError):
            continue
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    return best


def fit(data: Dataset, mode: str = "auto", seed: int = 0, n_restarts: int = N_RESTARTS,
        sparse_threshold: int = SPARSE_THRESHOLD, n_inducing: int = N_INDUCING,
        maxiter: int = 200, hyp: GprHyperparams | None = None) -> GprModel:
    """Fit hyperparameters by multi-start maximisation of the marginal likelihood.

    ``mode`` is ``"exact"``, ``"fitc"`` or ``"auto"`` (FITC once the dataset
    exceeds ``sparse_threshold`` points). Passing ``hyp`` skips optimisation.
    """
    if len(data) < 2:
        raise ValueError("need at least two data points to fit a GP")
    if mode == "auto":
        mode = "fitc" if len(data) > sparse_threshold else "exact"
    if mode not in ("exact", "fitc"):
        raise ValueError(f"unknown GP mode {mode!r}")
    X = data.inputs
    shift, scale, y = _standardise(data.targets)
    rng = np.random.default_rng(seed)
    dim = data.dim
    inducing = None
    if mode == "fitc":
        m = min(n_inducing, len(data))
        sub = np.sort(rng.choice(len(data), size=m, replace=False))
        inducing = X[sub]

    status = "ok"
    if hyp is None:
        bounds = _bounds(dim)

        def neg_exact(theta, Xf=X, yf=y):
            try:
                lml, grad = _exact_lml(theta, Xf, yf, True)
            except GprNumericalError:
                return 1e25, np.zeros_like(theta)
            return -lml, -grad

        if mode == "exact":
            best = _optimise(neg_exact, _starts(dim, rng, n_restarts), bounds, True, maxiter)
        else:
            # exact fit on the inducing subset; the FITC evidence then only
            # re-balances mean, signal and noise variance
            init = _optimise(lambda th: neg_exact(th, X[sub], y[sub]),
                             _starts(dim, rng, n_restarts), bounds, True, maxiter)
            if init is None:
                best = None
            else:
                free = np.r_[0, 1, dim + 2]
                theta0 = init.x.copy()

                def neg_fitc(phi):
                    theta = theta0.copy()
                    theta[free] = phi
                    try:
                        return -_fitc_lml(theta, X, y, inducing)
                    except GprNumericalError:
                        return 1e25

                ref = _optimise(neg_fitc, [theta0[free]], [bounds[i] for i in free], None, 50)
                best = init
                if ref is not None:
                    theta0[free] = ref.x
                    best.x = theta0
        if best is None:
            log.warning("all GP hyperparameter restarts failed; using prior hyperparameters")
            status = "fallback"
            hyp = GprHyperparams.default(dim)
        else:
            hyp = GprHyperparams.from_vector(best.x)
    model = GprModel(hyp, X.copy(), shift, scale, mode, status, inducing,
                     {"y_std": y})
    return model


def predict(model: GprModel, m) -> tuple:
    """Mean and standard deviation at one point (floats) or many (arrays)."""
    mean, std = model.predict(m)
    if np.asarray(m).ndim == 1:
        return float(mean[0]), float(std[0])
    return mean, std
