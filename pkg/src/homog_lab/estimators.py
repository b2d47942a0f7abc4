"""scikit-learn style wrappers around the cell solvers and the denoiser."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .elastic_cell import bulk_density
from .lattice import CoefficientField, LatticeFunction, NeighborSet
from .membrane import GncSchedule, alternating_minimize
from .spin_cell import cell_surface_energy


def _field_or_default(field, dim: int) -> CoefficientField:
    return field if field is not None else CoefficientField.uniform(dim, 1.0, NeighborSet.nearest(dim))


class SurfaceDensityEstimator(BaseEstimator):
    """``predict`` maps unit normals (rows of ``X``) to ``phi_T``.

    Nothing is learned; ``fit`` only validates the field.
    """

    def __init__(self, field: CoefficientField | None = None, T: int = 16, x0=None):
        self.field = field
        self.T = T
        self.x0 = x0

    def fit(self, X=None, y=None):
        dim = self.field.dim if self.field is not None else np.atleast_2d(X).shape[1]
        self.field_ = _field_or_default(self.field, dim)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([cell_surface_energy(self.field_, self.T, nu, self.x0).value for nu in X])


class BulkDensityEstimator(BaseEstimator):
    """``predict`` maps slopes (rows of ``X``) to the largest-size cell estimate."""

    def __init__(self, field: CoefficientField | None = None, sizes=(4, 8), tol: float = 1e-10):
        self.field = field
        self.sizes = sizes
        self.tol = tol

    def fit(self, X=None, y=None):
        dim = self.field.dim if self.field is not None else np.atleast_2d(X).shape[1]
        self.field_ = _field_or_default(self.field, dim)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([bulk_density(self.field_, z, self.sizes, tol=self.tol).estimate
                         for z in X])


def grid_function(X, eps: float) -> LatticeFunction:
    """Lattice function with ``values[i1, ..., id]`` at site ``eps * (i1, ..., id)``."""
    X = np.asarray(X, dtype=float)
    idx = np.indices(X.shape).reshape(X.ndim, -1).T
    return LatticeFunction(eps, idx, X.reshape(-1))


class WeakMembraneDenoiser(TransformerMixin, BaseEstimator):
    """Piecewise-smooth denoising of 1D signals or 2D images.

    ``eps`` defaults to ``1 / max(X.shape)``. After ``fit``, ``u_`` holds
    the restored signal, ``lines_`` the line field and ``energy_`` the final
    energy; ``transform`` refits on the given data and returns the array.
    """

    def __init__(self, field: CoefficientField | None = None, eps: float | None = None,
                 fidelity_weight: float = 1.0, gnc: bool = True, max_outer: int = 100):
        self.field = field
        self.eps = eps
        self.fidelity_weight = fidelity_weight
        self.gnc = gnc
        self.max_outer = max_outer

    def _run(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim not in (1, 2):
            raise ValueError("X must be a 1D signal or a 2D image")
        eps = self.eps if self.eps is not None else 1.0 / max(X.shape)
        field = _field_or_default(self.field, X.ndim)
        g = grid_function(X, eps)
        schedule = GncSchedule() if self.gnc else GncSchedule.direct()
        return X.shape, alternating_minimize(g, field, self.fidelity_weight, schedule,
                                             self.max_outer)

    def fit(self, X, y=None):
        shape, res = self._run(X)
        self.u_ = res.u.values.reshape(shape)
        self.lines_ = res.lines
        self.energy_ = res.energy
        self.energy_trace_ = res.energy_trace
        self.converged_ = res.converged
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "u_")
        shape, res = self._run(X)
        return res.u.values.reshape(shape)
