"""Times the hot integration kernels on every available backend.

The four batched routines dominate assembly cost in implicit runs.  Sizes
mirror the desk-scale benchmark: a quad4 mesh with 2x2 quadrature and a tri3
mesh with one point per element.

Run:  python benchmarks/kernel_benchmark.py
"""

import time

import numpy as np

from fracture2d.kernels import available_backends

CASES = {
    "quad4 4.5k elements": dict(n=4489, q=4, k=4),
    "tri3 27k elements": dict(n=26912, q=1, k=3),
}
REPEATS = 7


def make_inputs(n, q, k, rng):
    return dict(
        B=rng.normal(size=(n, q, 3, 2 * k)),
        Bs=rng.normal(size=(n, q, 2, k)),
        N=rng.normal(size=(q, k)),
        detJw=rng.uniform(0.5, 1.5, size=(n, q)),
        sigma=rng.normal(size=(n, q, 3)),
        dmat=rng.normal(size=(n, q, 3, 3)),
        c1=rng.normal(size=(n, q)),
        c2=rng.normal(size=(n, q)),
        gcoef=rng.uniform(0.1, 1.0, size=n),
        phi=rng.uniform(0.0, 1.0, size=(n, k)),
    )


def bench(fn, *args):
    best = np.inf
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    for case, dims in CASES.items():
        data = make_inputs(rng=rng, **dims)
        print(f"\n{case}:")
        rows = []
        for name, mod in backends.items():
            times = {
                "u_internal_force": bench(mod.u_internal_force, data["B"], data["detJw"], data["sigma"]),
                "u_stiffness": bench(mod.u_stiffness, data["B"], data["detJw"], data["dmat"]),
                "scalar_residual": bench(
                    mod.scalar_residual, data["N"], data["Bs"], data["detJw"], data["c1"], data["gcoef"], data["phi"]
                ),
                "scalar_stiffness": bench(
                    mod.scalar_stiffness, data["N"], data["Bs"], data["detJw"], data["c2"], data["gcoef"]
                ),
            }
            rows.append((name, times))
        kernels = list(rows[0][1])
        header = f"  {'kernel':<18}" + "".join(f"{name:>12}" for name, _ in rows)
        if len(rows) == 2:
            header += f"{'speedup':>10}"
        print(header)
        for kernel in kernels:
            line = f"  {kernel:<18}" + "".join(f"{times[kernel] * 1e3:>10.2f}ms" for _, times in rows)
            if len(rows) == 2:
                line += f"{rows[0][1][kernel] / rows[1][1][kernel]:>9.2f}x"
            print(line)


if __name__ == "__main__":
    main()
