"""A small scikit-learn style lasso regressor driven by the SPGD engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .engine import run_spgd
from .problems import builtin_problem
from .schedule import NoiseModel, Schedule


class SPGDRegressor(RegressorMixin, BaseEstimator):
    """L1-penalised least squares fitted with proximal subgradient steps.

    Minimises ``(1 / 2m) ||X w + b - y||^2 + alpha ||w||_1``. Step sizes follow
    ``gamma_n = step_scale / L * n^-decay`` where ``L`` is the largest
    eigenvalue of ``X^T X / m``; ``noise`` adds centred Gaussian
    perturbations of that standard deviation to every step.

    Parameters
    ----------
    alpha : float
        Weight of the L1 penalty.
    n_iter : int
        Number of SPGD steps.
    step_scale, decay : float
        Schedule constants.
    noise : float
        Standard deviation of the injected noise (0 for a deterministic run).
    fit_intercept : bool
        Centre ``X`` and ``y`` before fitting.
    random_state : int
        Seed of the noise stream.
    """

    def __init__(self, alpha=1.0, n_iter=20000, step_scale=1.0, decay=0.7, noise=0.0,
                 fit_intercept=True, random_state=0):
        self.alpha = alpha
        self.n_iter = n_iter
        self.step_scale = step_scale
        self.decay = decay
        self.noise = noise
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        m = X.shape[0]
        if self.fit_intercept:
            x_mean, y_mean = X.mean(axis=0), float(y.mean())
        else:
            x_mean, y_mean = np.zeros(X.shape[1]), 0.0
        A = (X - x_mean) / np.sqrt(m)
        b = (y - y_mean) / np.sqrt(m)
        problem = builtin_problem("lasso", {"A": A, "b": b, "lam": float(self.alpha)})
        L = max(float(np.linalg.eigvalsh(A.T @ A)[-1]), 1e-12)
        schedule = Schedule.power(self.step_scale / L, self.decay)
        noise = NoiseModel.gaussian(self.noise) if self.noise > 0 else NoiseModel.zero()
        traj = run_spgd(problem, schedule, noise, np.zeros(X.shape[1]), self.n_iter,
                        seed=int(self.random_state), thinning=max(self.n_iter // 1000, 1))
        self.coef_ = traj.x_end.copy()
        self.intercept_ = y_mean - float(x_mean @ self.coef_)
        self.objective_ = float(traj.fg_end)
        self.n_features_in_ = X.shape[1]
        self.trajectory_ = traj
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_
