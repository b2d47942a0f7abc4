import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from homog_lab.estimators import (BulkDensityEstimator, SurfaceDensityEstimator,
                                  WeakMembraneDenoiser, grid_function)
from homog_lab.lattice import CoefficientField, NeighborSet


def test_surface_estimator():
    est = SurfaceDensityEstimator(T=8)
    assert est.get_params()["T"] == 8
    with pytest.raises(NotFittedError):
        est.predict([[0.0, 1.0]])
    phi = est.fit(np.zeros((1, 2))).predict([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(phi, [1.0, 1.0])
    assert clone(est).get_params() == est.get_params()


def test_bulk_estimator_closed_form():
    field = CoefficientField.uniform(2, 1.0, NeighborSet.with_diagonals())
    f = BulkDensityEstimator(field, sizes=(4,)).fit().predict([[1.0, 0.0], [2.0, 1.0]])
    assert f == pytest.approx([3.0, 5 + 9 + 1], abs=1e-8)


def test_grid_function_layout():
    g = grid_function(np.arange(6.0).reshape(2, 3), 0.5)
    assert g.lookup([[1, 2]])[0] == 5.0
    assert g.eps == 0.5


def test_denoiser_recovers_step():
    rng = np.random.default_rng(0)
    n = 100
    clean = np.where(np.arange(n) >= 40, 1.5, 0.0)
    den = WeakMembraneDenoiser(fidelity_weight=50.0).fit(clean + rng.normal(0, 0.05, n))
    assert den.converged_
    assert den.lines_.count == 1
    assert np.max(np.abs(den.u_ - clean)) < 0.3
    trace = den.energy_trace_
    assert all(b <= a + 1e-12 * a for a, b in zip(trace, trace[1:]))
    assert den.transform(clean).shape == (n,)
    with pytest.raises(ValueError):
        WeakMembraneDenoiser().fit(np.zeros((2, 2, 2)))
