"""Spatially aggregated Gaussian processes."""

from collections.abc import Mapping

from ._sagp import (
    Dataset,
    Domain,
    FittedModel,
    Grid,
    HyperParams,
    Partition,
    SagpError,
    Scheme,
    condition,
    fit,
    gradient,
    log_marginal_likelihood,
    loocv_select_L,
    mape,
    refinement_scenario,
)

__all__ = [
    "Dataset",
    "Domain",
    "FittedModel",
    "Grid",
    "HyperParams",
    "Partition",
    "SagpError",
    "Scheme",
    "condition",
    "dataset",
    "fit",
    "gradient",
    "log_marginal_likelihood",
    "loocv_select_L",
    "mape",
    "partition",
    "refinement_scenario",
]


def partition(regions, partition_id=""):
    """Partition from {region_id: cells} or [(region_id, cells), ...]."""
    items = regions.items() if isinstance(regions, Mapping) else regions
    return Partition([(str(rid), [int(c) for c in cells]) for rid, cells in items], partition_id)


def dataset(dataset_id, regions, values, scheme="average"):
    """Dataset from region cells and raw values, one per region in order."""
    p = regions if isinstance(regions, Partition) else partition(regions, dataset_id)
    s = scheme if isinstance(scheme, Scheme) else Scheme.__members__[scheme]
    return Dataset(dataset_id, p, s, [float(v) for v in values])
