"""Shortcut-to-adiabaticity state preparation in the Jaynes-Cummings model."""
from .hilbert import SpaceSpec, SystemState
from .observables import WignerGrid, fidelity, mandel_q, negativity, wigner
from .protocols import RunOptions, plan_cat, plan_fock, plan_photon_shift, plan_transfer, run_plan
from .pulses import BaseProtocol, GaussianPulse, StaPulse

__all__ = [
    "BaseProtocol",
    "GaussianPulse",
    "RunOptions",
    "SpaceSpec",
    "StaPulse",
    "SystemState",
    "WignerGrid",
    "fidelity",
    "mandel_q",
    "negativity",
    "plan_cat",
    "plan_fock",
    "plan_photon_shift",
    "plan_transfer",
    "run_plan",
    "wigner",
]
