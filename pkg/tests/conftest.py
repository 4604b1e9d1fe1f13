"""Shared fixtures: platforms, toy spaces and trained desk-scale nets."""

import numpy as np
import pytest

from imcsearch.config import load_unit_costs
from imcsearch.designspace import (
    ADCType,
    DesignSpace,
    LayerShape,
    PlatformParams,
    UnitCost,
    UnitCostTable,
)
from imcsearch.nnsim import make_blobs, make_mlp, train_tiny


def make_platform(**overrides) -> PlatformParams:
    return PlatformParams(unit_costs=load_unit_costs(), **overrides)


def zero_cost_table(**nonzero) -> UnitCostTable:
    """All-zero unit costs except the named component fields.

    ``nonzero`` maps component names to (area, energy, latency) tuples.
    """
    components = {}
    from imcsearch.designspace import UNIT_COST_COMPONENTS

    for name in UNIT_COST_COMPONENTS:
        if name in nonzero:
            a, e, l = nonzero[name]
            components[name] = UnitCost(a, e, l)
        else:
            components[name] = UnitCost(0.0, 0.0, 0.0)
    return UnitCostTable("zeros-test", components)


def toy_space(num_layers: int = 2, spatial: int = 8) -> DesignSpace:
    """Small conv space for search tests: 2 CD x 2 CS x 2 AT per layer."""
    shapes = tuple(LayerShape(kernel=3, in_spatial=(spatial, spatial))
                   for _ in range(num_layers))
    cd_opts = tuple((8, 16) for _ in range(num_layers))
    return DesignSpace(
        layer_shapes=shapes,
        cd_options_per_layer=cd_opts,
        cs_options=(4, 8),
        at_options=(ADCType.SAR, ADCType.FLASH),
        ap_options=(5, 6),
        ip_options=(3, 4, 5, 6, 7, 8),
        input_channels=1,
        class_count=2,
    )


@pytest.fixture(scope="session")
def blob_data():
    return make_blobs(240, n_classes=2, n_features=2, seed=7)


@pytest.fixture(scope="session")
def trained_mlp(blob_data):
    """2 quantizable layers, >=95% train accuracy on separable blobs."""
    net = make_mlp([2, 16, 2], seed=3)
    net = train_tiny(net, blob_data, epochs=40, lr=0.05, batch_size=32, seed=3)
    assert net.train_accuracy >= 0.95
    return net
