"""Compare the compiled and numpy Newton-pass kernels across dimensions.

Usage::

    python benchmarks/bench_kernels.py [--n 1000] [--dims 2,3,5,...] [--repeat 50]

Prints microseconds per Newton pass and per full debiased IPW pipeline
under each backend. The crossover dimension informs
``ipwdebias._kernels.COMPILED_MAX_DIM``.
"""

import argparse
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from ipwdebias import _kernels, _pykernels
from ipwdebias.data import ScenarioSpec, SeedSpec, generate_dataset
from ipwdebias.estimators import debiased_ipw


def per_call_us(fn, repeat):
    timer = timeit.Timer(fn)
    number = max(1, repeat)
    return min(timer.repeat(repeat=3, number=number)) / number * 1e6


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--dims", default="2,3,5,10,16,24,32,50,100,126")
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--blas-threads", type=int, default=1)
    args = parser.parse_args()

    if not _kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    from ipwdebias import _ckernels

    dims = [int(d) for d in args.dims.split(",")]
    header = f"{'d':>5} {'newton py':>11} {'newton c':>10} {'ratio':>7} {'pipe py':>10} {'pipe c':>10}"
    print(f"n={args.n}, BLAS threads={args.blas_threads}, times in microseconds")
    print(header)
    with threadpool_limits(limits=args.blas_threads):
        for d in dims:
            data = generate_dataset(ScenarioSpec("wellspec", d), args.n, SeedSpec(1))
            X, a = data.covariates, data.treatments
            beta = np.full(d, 0.1)

            t_np = per_call_us(lambda: _pykernels.newton_pass(X, a, beta), args.repeat)
            t_nc = per_call_us(lambda: _ckernels.newton_pass(X, a, beta), args.repeat)
            pipes = {}
            for mode in ("python", "compiled"):
                prev = _kernels.set_backend(mode)
                try:
                    pipes[mode] = per_call_us(lambda: debiased_ipw(data), max(1, args.repeat // 5))
                finally:
                    _kernels.set_backend(prev)
            print(
                f"{d:>5} {t_np:>11.1f} {t_nc:>10.1f} {t_np / t_nc:>7.2f}"
                f" {pipes['python']:>10.1f} {pipes['compiled']:>10.1f}"
            )


if __name__ == "__main__":
    main()
