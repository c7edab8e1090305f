import numpy as np
import pytest

from gdid.learners import NuisanceFits
from gdid.panel_data import PanelDataset, build_conditioning


@pytest.fixture
def hand_dataset():
    """4-unit, 3-period dataset used by the arithmetic oracles.

    Units 1,2 treated; 3,4 control. Covariate x = (1, 0, 1, 0).
    """
    return PanelDataset(
        unit_ids=("u1", "u2", "u3", "u4"),
        times=(-1, 0, 1),
        outcomes=np.array([
            [1.0, 2.0, 5.0],
            [2.0, 1.0, 3.0],
            [3.0, 4.0, 2.0],
            [4.0, 3.0, 6.0],
        ]),
        covariates=np.array([[1.0], [0.0], [1.0], [0.0]]),
        treatment=np.array([1, 1, 0, 0]),
        covariate_names=("x1",),
    )


@pytest.fixture
def hand_fits(hand_dataset):
    """Hand-specified nuisance values for the 4-unit oracle computations."""
    cond0 = build_conditioning(hand_dataset, 0, 1)
    cond_m1 = build_conditioning(hand_dataset, -1, 1)
    return NuisanceFits(
        mu1_hat=np.array([1.0, 2.0, 3.0, 1.0]),
        mu0_hat=np.array([0.5, 1.5, 2.5, 3.5]),
        pi_hat=np.array([0.5, 0.25, 0.2, 0.4]),
        pi0_hat=np.array([0.3, 0.6, 0.1, 0.8]),
        plan="no-split",
        lag_depth=1,
        cond0=cond0,
        cond_m1=cond_m1,
        mu1_treated=np.array([2.0, 3.0, 1.0, 2.0]),
        mu0_treated=np.array([1.0, 1.0, 2.0, 2.0]),
    )
