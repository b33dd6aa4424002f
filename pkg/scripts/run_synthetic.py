"""Simulate the default 12 x 3 study to disk, then time `mealmeter run` on it.

    python scripts/run_synthetic.py --work /tmp/mm [--seed 0] [--scope pooled]

Also runs the glucose-only and zero-gain variants when --variants is given.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from mealmeter.cli import main as cli
from mealmeter.synthgen import SynthConfig, simulate, write_dataset, zero_gain


def timed_run(data: Path, out: Path, scope: str) -> float:
    t0 = time.perf_counter()
    code = cli(["run", "--data", str(data), "--out", str(out), "--scope", scope, "-q"])
    if code:
        sys.exit(code)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--work", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scope", default="pooled", choices=("pooled", "per-subject"))
    ap.add_argument("--variants", action="store_true")
    args = ap.parse_args()

    base = SynthConfig(emit_bvp=False, seed=args.seed)
    configs = {"default": base}
    if args.variants:
        configs["glucose_only"] = zero_gain(base, keep=("glucose_per_carb_g",))
        configs["null"] = zero_gain(base)
    for name, cfg in configs.items():
        data = args.work / f"data_{name}"
        if not (data / "meals.csv").exists():
            t0 = time.perf_counter()
            write_dataset(simulate(replace(cfg)), data)
            print(f"[{name}] simulated in {time.perf_counter() - t0:.1f} s")
        seconds = timed_run(data, args.work / f"out_{name}_{args.scope}", args.scope)
        print(f"[{name}] run finished in {seconds:.1f} s")


if __name__ == "__main__":
    main()
