"""Shared fixtures.

The renormalization flows are by far the most expensive objects the suite
needs (minutes each), and several tests inspect the same trajectories, so
they are computed once per session here.
"""

import time

import numpy as np
import pytest

from specrg.fock import build_fock_basis, build_mode_grid
from specrg.models import ModelSpec, build_model, ground_sector_hamiltonian
from specrg.rgflow import flow

FLOW_G_VALUES = (1e-3, 5e-3)
FLOW_RHO = 0.5
FLOW_N_STEPS = 6


def _flow_instance(g):
    grid = build_mode_grid(8, 0.5, "geometric")
    spec = ModelSpec(particle_levels=np.array([0.0, 1.0]), g=g, kappa=1.0)

    def builder(lam):
        return ground_sector_hamiltonian(spec, grid, lam)

    basis = build_fock_basis(grid, 2)
    model = build_model(spec, basis)
    e0_exact = float(np.min(np.linalg.eigvalsh(model.H)))

    t0 = time.monotonic()
    traj = flow(builder(0.0), FLOW_RHO, FLOW_N_STEPS, builder=builder)
    elapsed = time.monotonic() - t0
    return {"g": g, "spec": spec, "grid": grid, "traj": traj,
            "e0_exact": e0_exact, "seconds": elapsed}


@pytest.fixture(scope="session")
def model_flows():
    """Six-step flows of the two-level model at the sweep couplings.

    Maps g -> {traj, e0_exact, seconds, ...}; the trajectory records carry
    the per-step (e_n, E, beta, gamma, budget) measurements.
    """
    return {g: _flow_instance(g) for g in FLOW_G_VALUES}
