"""Fourier-truncated drive for the 0,4 cat: fidelity versus mode count and fundamental."""
import argparse
import math

from jc_sta.dynamics import EvolutionConfig
from jc_sta.protocols import RunOptions, plan_cat, run_plan
from jc_sta.pulses import BaseProtocol


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tau", type=float, default=30.0)
    ap.add_argument("--modes", type=int, nargs="+", default=[1, 2, 8])
    ap.add_argument("--spu", type=int, default=1000)
    args = ap.parse_args()
    plan = plan_cat(0, 4, BaseProtocol(1.5, 0.5, 0.0, 0.25, args.tau))
    rules = {"per-pulse": None, "2pi/tau": 2 * math.pi / args.tau, "pi/tau": math.pi / args.tau}
    print("rule," + ",".join(f"N_F={m}" for m in args.modes))
    for name, wf in rules.items():
        vals = []
        for m in args.modes:
            opts = RunOptions("fourier", fourier_modes=m, omega_f=wf, evolution=EvolutionConfig(args.spu))
            vals.append(run_plan(plan, opts, record=False).fidelity)
        print(name + "," + ",".join(f"{v:.4f}" for v in vals))


if __name__ == "__main__":
    main()
