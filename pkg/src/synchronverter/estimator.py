"""scikit-learn style wrappers around the setpoint classification.

Inputs are arrays of shape ``(n_samples, 2)`` holding ``(P_set, Q_set)``
in W / VAr. Nothing is learned from data: ``fit`` only validates the
machine and grid parameters, which makes the objects usable in pipelines
and with ``clone``/``get_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .params import GridParams, SynchronverterParams, derived_constants
from .stability import NO_EQUILIBRIUM, TOL_MARGIN, classify_setpoints

CLASSES = np.array(["marginal", NO_EQUILIBRIUM, "stable", "unstable"], dtype=object)


class _SetpointModel(BaseEstimator):
    def __init__(self, params=None, grid=None, ktilde=None, order=5, tol_margin=TOL_MARGIN):
        self.params = params
        self.grid = grid
        self.ktilde = ktilde
        self.order = order
        self.tol_margin = tol_margin

    def fit(self, X=None, y=None):
        if not isinstance(self.params, SynchronverterParams):
            raise TypeError("params must be a SynchronverterParams")
        if not isinstance(self.grid, GridParams):
            raise TypeError("grid must be a GridParams")
        if self.order not in (4, 5):
            raise ValueError(f"order must be 4 or 5, got {self.order}")
        if self.ktilde is not None and not self.ktilde > 0:
            raise ValueError("ktilde must be positive")
        if self.tol_margin < 0:
            raise ValueError("tol_margin must be non-negative")
        self.derived_ = derived_constants(self.params, self.grid)
        self.ktilde_ = self.params.K_tilde if self.ktilde is None else float(self.ktilde)
        self.n_features_in_ = 2
        if X is not None:
            self._check_X(X)
        return self

    def _check_X(self, X):
        X = check_array(X, dtype=float, ensure_all_finite=True)
        if X.shape[1] != 2:
            raise ValueError(f"X must have 2 columns (P_set, Q_set), got {X.shape[1]}")
        return X

    def _cells(self, X):
        check_is_fitted(self, "derived_")
        X = self._check_X(X)
        return classify_setpoints(
            X[:, 0], X[:, 1], self.params, self.grid, self.ktilde_, self.order, self.tol_margin
        )


class StabilityClassifier(ClassifierMixin, _SetpointModel):
    """Predicts the local stability of the equilibrium each setpoint leads to.

    Labels are ``"stable"``, ``"unstable"``, ``"marginal"`` and
    ``"no-equilibrium"``.
    """

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.classes_ = CLASSES
        return self

    def predict(self, X):
        return np.asarray(self._cells(X)["verdict"], dtype=object)

    def decision_function(self, X):
        """Stability margin ``-max Re(eigenvalue)``; NaN without an equilibrium."""
        return -self._cells(X)["max_real"]


class EquilibriumTransformer(TransformerMixin, _SetpointModel):
    """Maps setpoints to the equilibrium state ``(i_d, i_q, w, delta, i_f)``.

    Rows without an equilibrium are NaN.
    """

    def transform(self, X):
        cells = self._cells(X)
        w = np.where(np.isfinite(cells["i_f_e"]), self.grid.w_g, np.nan)
        return np.column_stack(
            [cells["i_d_e"], cells["i_q_e"], w, cells["delta_e"], cells["i_f_e"]]
        )

    def get_feature_names_out(self, input_features=None):
        return np.array(["i_d", "i_q", "w", "delta", "i_f"], dtype=object)
