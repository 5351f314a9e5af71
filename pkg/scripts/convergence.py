"""Observed RK4 order on one LCD segment acting on a coherent state."""
import numpy as np

from jc_sta.dynamics import EvolutionConfig, HamiltonianSchedule, LCDSegment, evolve_pure
from jc_sta.hilbert import SpaceSpec, coherent_amplitudes, product_state
from jc_sta.pulses import BaseProtocol, StaPulse


def main():
    sp = SpaceSpec(30)
    sched = HamiltonianSchedule([LCDSegment(StaPulse(BaseProtocol(1.5, 0.5, 0.0, 0.25, 8.0), 0))])
    st0 = product_state("e", coherent_amplitudes(2.5, 30), sp)
    ref, _ = evolve_pure(st0, sched, EvolutionConfig(6400, renormalize=False))
    spus = (200, 400, 800, 1600)
    errs = [np.linalg.norm(evolve_pure(st0, sched, EvolutionConfig(s, renormalize=False))[0].data - ref.data) for s in spus]
    for s, e in zip(spus, errs):
        print(f"steps/unit {s:5d}  error {e:.3e}")
    print("orders", np.round(np.log2(np.array(errs[:-1]) / np.array(errs[1:])), 3).tolist())


if __name__ == "__main__":
    main()
