"""Compare the compiled block kernels against the NumPy fallback.

Runs two measurements:

1. micro: the four per-block loss functions on synthetic logit blocks of
   growing size, fastest of several repeats;
2. end-to-end: a short fixed-iteration fit on a simulated network, once per
   backend, by swapping the functions the compute layer dispatches through.

Usage: python3 benchmarks/bench_core.py [--quick]
"""

import argparse
import time

import numpy as np

from dynetfit import _backend
from dynetfit._backend import get_backend
from dynetfit.data import SbmSpec, generate_dynamic_multilayer_sbm
from dynetfit.estimation import FitConfig, fit
from dynetfit.kernels import KernelSpec

BLOCK_FUNCS = ("block_loss", "block_loss_masked",
               "block_loss_residual", "block_loss_residual_masked")


def best_of(fn, repeats=5, loops=20):
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        timings.append((time.perf_counter() - start) / loops)
    return min(timings)


def micro(sizes):
    rng = np.random.default_rng(0)
    print("\nper-block loss kernels (microseconds per call, best of 5)")
    print(f"{'n':>5} {'function':<28} {'python':>9} {'compiled':>9} {'speedup':>8}")
    for n in sizes:
        logits = rng.standard_normal((n, n))
        adj = (rng.random((n, n)) < 0.5).astype(float)
        mask = (rng.random((n, n)) < 0.8).astype(float)
        resid = np.empty_like(logits)
        calls = {
            "block_loss": lambda mod: mod.block_loss(logits, adj),
            "block_loss_masked": lambda mod: mod.block_loss_masked(logits, adj, mask),
            "block_loss_residual": lambda mod: mod.block_loss_residual(logits, adj, resid),
            "block_loss_residual_masked": lambda mod: mod.block_loss_residual_masked(
                logits, adj, mask, resid),
        }
        for name in BLOCK_FUNCS:
            call = calls[name]
            py = best_of(lambda: call(get_backend("python")))
            cy = best_of(lambda: call(get_backend("compiled")))
            print(f"{n:>5} {name:<28} {py * 1e6:>9.1f} {cy * 1e6:>9.1f} "
                  f"{py / cy:>7.2f}x")


def end_to_end(n, iters):
    spec = SbmSpec(n=n, dim=2, n_times=10, layers=2)
    data, _ = generate_dynamic_multilayer_sbm(spec, rng=0)
    config = FitConfig(dim=2, max_iters=iters, rel_tol=0.0)
    results = {}
    saved = {name: getattr(_backend, name) for name in BLOCK_FUNCS}
    try:
        for backend in ("python", "compiled"):
            mod = get_backend(backend)
            for name in BLOCK_FUNCS:
                setattr(_backend, name, getattr(mod, name))
            start = time.perf_counter()
            report = fit(data, config, KernelSpec("radial"))
            results[backend] = (time.perf_counter() - start, report.final_loss)
    finally:
        for name, fn in saved.items():
            setattr(_backend, name, fn)
    print(f"\nfull fit, n={n}, {iters} iterations")
    for backend, (seconds, loss) in results.items():
        print(f"  {backend:<9} {seconds:7.2f}s   final loss {loss:.6f}")
    print(f"  speedup   {results['python'][0] / results['compiled'][0]:7.2f}x")
    agree = abs(results["python"][1] - results["compiled"][1])
    print(f"  |loss difference| between backends: {agree:.3e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true",
                        help="smaller sizes and fewer iterations")
    args = parser.parse_args()
    print(f"active backend at import: {_backend.BACKEND}")
    if args.quick:
        micro([50, 150])
        end_to_end(n=40, iters=30)
    else:
        micro([50, 150, 400])
        end_to_end(n=60, iters=100)


if __name__ == "__main__":
    main()
