"""Compare the compiled kernels with their numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--level 4] [--repeat 5]

Prints the best wall time of each implementation, the speedup and the
largest difference between the two results.
"""

import argparse
import time

import numpy as np

from confdeficit import _kernels
from confdeficit.domain import build_icosphere, sphere_to_chart


def best_time(func, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--level", type=int, default=4)
    parser.add_argument("--points", type=int, default=400, help="target points for the winding numbers")
    parser.add_argument("--centers", type=int, default=256, help="ball centres for the ball sums")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    dom = build_icosphere(level=args.level)
    tri = dom.nodes[dom.faces]
    ys = rng.uniform(-1.5, 1.5, size=(args.points, 3))
    keep = dom.points[:, 2] > -0.999
    chart = sphere_to_chart(dom.points[keep], np.array([0.0, 0.0, 1.0]), np.eye(3)[:, :2])
    mass = dom.weights[keep]
    centers = rng.normal(size=(args.centers, 2))
    x, frames, w = dom.points, dom.frames, dom.weights
    target = np.ascontiguousarray(rng.normal(size=frames.shape))
    wtarget = np.ascontiguousarray(w[:, None, None] * target)
    xi, lam, O = np.array([0.6, 0.0, 0.8]), 1.7, np.eye(3)

    def fit_eval(cross, misfit):
        return lambda: np.append(cross(x, frames, wtarget, xi, lam).ravel(),
                                 misfit(x, frames, target, w, xi, lam, O, 1.0))

    cases = {
        f"winding_numbers ({tri.shape[0]} faces x {args.points} points)": (
            lambda: _kernels.winding_numbers_numpy(tri, ys),
            (lambda: _kernels.winding_numbers(tri, ys)) if _kernels.BACKEND == "compiled" else None),
        f"ball_sums ({chart.shape[0]} points x {args.centers} centres)": (
            lambda: _kernels.ball_sums_numpy(chart, mass, centers, 0.5),
            (lambda: _kernels.ball_sums(chart, mass, centers, 0.5)) if _kernels.BACKEND == "compiled" else None),
        f"Moebius fit objective ({x.shape[0]} quadrature points)": (
            fit_eval(_kernels.moebius_fit_cross_numpy, _kernels.moebius_fit_misfit_numpy),
            fit_eval(_kernels.moebius_fit_cross, _kernels.moebius_fit_misfit)
            if _kernels.BACKEND == "compiled" else None),
    }
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':58s} {'numpy [s]':>10s} {'compiled [s]':>13s} {'speedup':>8s} {'max diff':>10s}")
    for name, (numpy_fn, compiled_fn) in cases.items():
        t_np, r_np = best_time(numpy_fn, args.repeat)
        if compiled_fn is None:
            print(f"{name:58s} {t_np:10.4f} {'n/a':>13s}")
            continue
        t_c, r_c = best_time(compiled_fn, args.repeat)
        print(f"{name:58s} {t_np:10.4f} {t_c:13.4f} {t_np / t_c:8.1f} {np.abs(r_np - r_c).max():10.2e}")


if __name__ == "__main__":
    main()
