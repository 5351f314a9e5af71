"""Cat phase and fidelity with the rotation pulses on sigma_x versus sigma_y.

A sigma_y rotation is the sigma_x rotation conjugated by exp(-+ i pi sigma_z / 4),
so the study applies those frame kicks around each Gaussian pulse.
"""
import argparse
import math
from dataclasses import replace

import numpy as np

from jc_sta.dynamics import EvolutionConfig, GaussianSegment, HamiltonianSchedule, evolve_pure
from jc_sta.hilbert import project_spin, reduce_boson
from jc_sta.observables import fidelity
from jc_sta.protocols import Measure, RunOptions, Sta, cat_vector, extract_phase, plan_cat, sta_segment
from jc_sta.pulses import BaseProtocol


def z_kick(state, sign):
    d = state.space.fock_dim
    ph = np.concatenate([np.full(d, np.exp(1j * sign * math.pi / 4)), np.full(d, np.exp(-1j * sign * math.pi / 4))])
    return replace(state, data=state.data * ph)


def run(plan, drive, axes, spu):
    opts = RunOptions(drive, evolution=EvolutionConfig(spu))
    state = plan.initial.build(plan.space)
    axes = iter(axes)
    p = None
    for step in plan.steps:
        if isinstance(step, Measure):
            state, p = project_spin(state, step.r)
            continue
        y = False
        if isinstance(step, Sta):
            seg = sta_segment(step, plan.space.omega, opts)
        else:
            seg = GaussianSegment(step.pulse)
            y = next(axes) == "y"
        if y:
            state = z_kick(state, 1)
        state, _ = evolve_pure(state, HamiltonianSchedule([seg]), opts.evolution)
        if y:
            state = z_kick(state, -1)
    lo, hi = plan.target[1:]
    rho = reduce_boson(state)
    phi = extract_phase(rho, lo, hi)
    return fidelity(rho, cat_vector(lo, hi, phi, rho.shape[0])), phi, p


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spu", type=int, default=1000, help="RK4 steps per time unit")
    args = ap.parse_args()
    for lo, hi, tau in [(0, 2, 30.0), (0, 4, 30.0), (0, 6, 40.0)]:
        base = BaseProtocol(1.5, 0.5, 0.0, 0.25, tau)
        for r in "eg":
            plan = plan_cat(lo, hi, base, measure_r=r)
            npulse = sum(not isinstance(s, (Sta, Measure)) for s in plan.steps)
            for axes in ("x" * npulse, "y" * npulse):
                f, phi, p = run(plan, "lcd", axes, args.spu)
                fb, _, _ = run(plan, "bare", axes, args.spu)
                print(f"psi_{lo},{hi} r={r} pulses={axes[0]}  F={f:.5f}  phi={phi:.4f}  p={p:.4f}  bare F={fb:.4f}")


if __name__ == "__main__":
    main()
