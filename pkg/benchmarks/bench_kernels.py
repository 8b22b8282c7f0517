"""Time the numba and numpy kernel backends on the same training jobs.

    python benchmarks/bench_kernels.py --repeats 3

The first numba call compiles (or loads the on-disk cache); it is timed
separately and excluded from the steady-state numbers.
"""

import argparse
import time

import numpy as np

from mvver import kernels
from mvver.classifier import ClassifierConfig, fit, objective
from mvver.dataset import make_blobs


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--per-class", type=int, default=200)
    args = ap.parse_args(argv)

    ds, _ = make_blobs(5, args.per_class, 10, separation=4.0, spread=1.0, seed=0)
    jobs = {
        "fit softmax": lambda be: fit(ds, ClassifierConfig(kind="softmax"), backend=be),
        "fit mlp-64": lambda be: fit(ds, ClassifierConfig(kind="mlp"), backend=be),
    }
    model = fit(ds, ClassifierConfig(kind="mlp", epochs=1))
    jobs["mlp objective x100"] = lambda be: [
        objective(model, ds.features, ds.labels, 0.0, be) for _ in range(100)
    ]

    print(f"N={len(ds)} d={ds.dim} C={ds.num_classes}; best of {args.repeats}")
    print(f"{'job':<22}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, job in jobs.items():
        t_np = best_of(lambda: job("numpy"), args.repeats)
        if "numba" in kernels.BACKENDS:
            t0 = time.perf_counter()
            job("numba")
            warm = time.perf_counter() - t0
            t_nb = best_of(lambda: job("numba"), args.repeats)
            print(f"{name:<22}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x   (first call {warm:.2f}s)")
        else:
            print(f"{name:<22}{t_np:>10.3f}{'n/a':>10}")

    a = fit(ds, ClassifierConfig(kind="mlp", epochs=3), backend="numpy").theta
    if "numba" in kernels.BACKENDS:
        b = fit(ds, ClassifierConfig(kind="mlp", epochs=3), backend="numba").theta
        print(f"max |theta_numpy - theta_numba| after 3 epochs: {np.max(np.abs(a - b)):.2e}")


if __name__ == "__main__":
    main()
