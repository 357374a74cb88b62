#!/usr/bin/env python3
"""Benchmark the compiled scan kernels against the NumPy fallback.

Runs the hot workloads (single-signal profiles, a full Bayesian limit grid,
toy-study significance evaluations) on every available backend, checks that
the numbers agree, and prints a timing table.

Usage: python benchmarks/bench_kernels.py [--trials N]
"""

import argparse
import time

import numpy as np

import onoffstats as oo
from onoffstats import _backend


def time_it(fun, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fun()
        best = min(best, time.perf_counter() - t0)
    return best, result


def workloads(n_toys):
    obs = oo.OnOffObservation(360, 270, 3.0, 0.03)
    calib = oo.FluxCalibration(1.2, 5.4, 1.08)
    cfg = oo.ToyConfig(s_true=0.0, b_true=90.0, tau=3.0, sigma=0.03,
                       n_trials=n_toys, seed=17)

    def profile_batch():
        return sum(
            oo.profile_onoff_sys(obs, float(s)).log_like for s in np.linspace(0, 300, 200)
        )

    def bayes_limit():
        return oo.bayes_limit_onoff_sys(obs, 0.9).upper

    def flux_limit():
        return oo.bayes_limit_flux(obs, calib, 0.9, "onoff-sys").upper

    def toy_study():
        return oo.significance_study(cfg).mean

    return {
        "profile_onoff_sys x200": profile_batch,
        "bayes_limit_onoff_sys": bayes_limit,
        "bayes_limit_flux onoff-sys": flux_limit,
        f"significance_study {n_toys} toys": toy_study,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=2000,
                        help="toy trials for the study workload")
    args = parser.parse_args()

    backends = _backend.available_backends()
    print(f"available backends: {', '.join(backends)}\n")
    results = {}
    timings = {}
    for backend in backends:
        _backend.set_backend(backend)
        for name, fun in workloads(args.trials).items():
            elapsed, value = time_it(fun)
            timings[(backend, name)] = elapsed
            results.setdefault(name, {})[backend] = value
    _backend.set_backend(backends[0])

    names = list(results)
    width = max(len(n) for n in names)
    header = f"{'workload'.ljust(width)}  " + "  ".join(f"{b:>10}" for b in backends)
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name in names:
        row = f"{name.ljust(width)}  "
        row += "  ".join(f"{timings[(b, name)]:>9.3f}s" for b in backends)
        if len(backends) > 1:
            row += f"  {timings[('python', name)] / timings[('cython', name)]:>7.1f}x"
        print(row)

    if len(backends) > 1:
        print("\nagreement checks:")
        for name, values in results.items():
            diff = abs(values["cython"] - values["python"])
            scale = max(1.0, abs(values["python"]))
            status = "ok" if diff / scale < 1e-9 else "MISMATCH"
            print(f"  {name}: |cython - python| = {diff:.2e}  [{status}]")
            assert diff / scale < 1e-9, name


if __name__ == "__main__":
    main()
