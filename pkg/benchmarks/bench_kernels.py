"""Wall-clock comparison of the numba and numpy trajectory kernels.

Runs one noisy spin-locking point on the five-level device with both
backends and checks that they agree before reporting timings.

    python benchmarks/bench_kernels.py --ensemble 400 --repeat 3
"""

import argparse
import time

import numpy as np

from mlqns import kernels
from mlqns.dressing import DriveSpec
from mlqns.dynamics import SequenceSpec, simulate_sequence
from mlqns.noise import FluxCoupling, Lorentzian, NoiseEnsemble, NoiseSource
from mlqns.sensor import REFERENCE_DEVICE, solve_levels


def _point(levels, ensemble, method):
    src = NoiseSource(Lorentzian(6e-8, 6.0, 2.0), FluxCoupling(tuple(levels.flux_sens)))
    noise = NoiseEnsemble([src], seed=[1, 0])
    tau = tuple(np.linspace(0.0, 12.0, 10))
    seq = SequenceSpec(DriveSpec(6.0, 1), tau, ensemble=ensemble, seed=1,
                       t1_rates=(1 / 58, 1 / 31, 3 / 58, 4 / 58), method=method)
    return seq, noise


def _time(levels, seq, noise, backend, repeat):
    best = np.inf
    tr = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        tr = simulate_sequence(levels, seq, noise, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, tr


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ensemble", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    levels = solve_levels(REFERENCE_DEVICE)
    print(f"{'method':8s} {'backend':8s} {'ensemble':>8s} {'best_s':>9s} {'speedup':>8s}")
    for method, ens in (("pure", args.ensemble), ("density", max(1, args.ensemble // 8))):
        seq, noise = _point(levels, ens, method)
        res = {}
        backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
        for b in backends:
            if b == "numba":
                simulate_sequence(levels, SequenceSpec(seq.drive, seq.durations[:2], ensemble=1,
                                                       method=method), noise, backend=b)  # warm up
            res[b] = _time(levels, seq, noise, b, args.repeat)
        if "numba" in res:
            diff = np.max(np.abs(res["numba"][1].populations - res["numpy"][1].populations))
            assert diff < 1e-10, f"backends disagree by {diff:.2e}"
        ref = res["numpy"][0]
        for b, (t, _) in res.items():
            print(f"{method:8s} {b:8s} {ens:8d} {t:9.3f} {ref / t:8.2f}")


if __name__ == "__main__":
    main()
