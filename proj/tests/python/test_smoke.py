import math

import numpy as np
import pytest

import sagp


def single_cell_domain(value):
    ds = sagp.dataset("s0", {"r0": [0]}, [value])
    return sagp.Domain("d", sagp.Grid(2, 2), [ds])


def test_scalar_log_likelihood():
    # One single-cell region, y = 0 after normalization, C = 1 + 0.25 + 0.1.
    params = sagp.HyperParams(np.array([[1.0]]), [1.0], np.array([0.5]), np.array([0.1]))
    ll = sagp.log_marginal_likelihood(params, [single_cell_domain(3.0)], jitter=0.0)
    assert ll == pytest.approx(-0.5 * math.log(1.35) - 0.5 * math.log(2 * math.pi), abs=1e-12)


def test_hyperparams_round_trip():
    params = sagp.HyperParams(np.array([[1.0, -0.5], [0.25, 2.0]]), [1.5, 4.0], np.array([0.1, 0.2]),
                              np.array([0.01, 0.02]))
    back = sagp.HyperParams.from_text(params.to_text())
    np.testing.assert_array_equal(back.weights, params.weights)
    assert back.betas == params.betas


def test_gradient_shape():
    params = sagp.HyperParams(np.array([[1.0], [0.5]]), [2.0], np.array([0.1, 0.1]), np.array([0.01, 0.02]))
    grid = sagp.Grid(4, 4)
    a = sagp.dataset("a", {"a0": [0, 1, 4, 5], "a1": [10, 11, 14, 15]}, [1.0, 2.0])
    b = sagp.dataset("b", {"b0": [2, 3], "b1": [8, 12], "b2": [6]}, [0.5, 0.1, -0.2], scheme="sum")
    g = sagp.gradient(params, [sagp.Domain("d", grid, [a, b])])
    assert g.shape == (2 + 1 + 2 + 2,)
    assert np.all(np.isfinite(g))


def test_fit_and_refine():
    task = sagp.refinement_scenario(seed=1)
    domain = task["domain"]
    model = sagp.fit([domain], L=2, restarts=1, seed=0, max_iterations=50)
    assert math.isfinite(model.log_likelihood)
    assert model.dataset_ids == ["target", "aux_v", "aux_h"]

    pred = model.predict_region(domain.domain_id, task["dataset_id"], task["fine"])
    assert len(pred["region_ids"]) == 16
    assert np.all(pred["variance"] >= 0.0)
    assert sagp.mape(task["fine_truth"], pred["mean"]) < 0.2

    mean, cov = model.posterior_point(domain.domain_id, 0)
    assert mean.shape == (3,)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)

    mean, var = model.raster(domain.domain_id)
    assert mean.shape == (3, 24 * 24)
    assert np.all(var >= -1e-12)


def test_mape_rejects_zero_truth():
    assert sagp.mape([1.0, 2.0], [1.1, 1.8]) == pytest.approx(0.1)
    with pytest.raises(sagp.SagpError, match="ZeroTruthValue"):
        sagp.mape([0.0, 1.0], [1.0, 1.0])


def test_bad_partition_raises():
    with pytest.raises(sagp.SagpError, match="OverlappingRegions"):
        sagp.Domain("d", sagp.Grid(2, 2), [sagp.dataset("s", {"a": [0, 1], "b": [1]}, [1.0, 2.0])])
