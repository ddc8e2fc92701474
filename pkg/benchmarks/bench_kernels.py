"""Time the compiled and numpy convolution kernels on GI-Net-sized workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--N 16]

Prints one line per (kernel, workload, backend) with the best wall time over
the repeats, then the speedup of the compiled backend. Outputs of the two
backends are compared before timing.
"""
import argparse
import timeit

import numpy as np

from geomnet import kernels
from geomnet.filter_bank import enumerate_invariant_filters
from geomnet.image_algebra import tap_table


def geo_workload(rng, N, batch, k_in, k_filt, dilations=(1, 2)):
    bank = enumerate_invariant_filters(3, 2, k_filt, 1)
    a, b = 2**k_in, 2**k_filt
    filt = np.repeat(bank.matrix().reshape(len(bank), 9, b), len(dilations), axis=0)
    src = np.stack([tap_table(N, 2, 3, dil) for _ in range(len(bank)) for dil in dilations])
    C = len(filt)
    img = rng.standard_normal((batch, C, N * N, a))
    gout = rng.standard_normal((batch, C, N * N, a * b))
    return img, filt, src, gout, a


def chan_workload(rng, N, batch, channels):
    src = tap_table(N, 2, 3, 1)
    img = rng.standard_normal((batch, N * N, channels))
    w = rng.standard_normal((len(src), channels, channels))
    gout = rng.standard_normal((batch, N * N, channels))
    return img, w, src, gout


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--N", type=int, default=16)
    parser.add_argument("--batch", type=int, default=4)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled extension not built; timing the numpy backend only")
    rng = np.random.default_rng(0)

    cases = []
    for k_in, k_filt in ((0, 1), (1, 1), (1, 2), (2, 2)):
        img, filt, src, gout, a = geo_workload(rng, args.N, args.batch, k_in, k_filt)
        label = f"k_in={k_in} k_filter={k_filt} C={len(filt)}"
        cases.append(("geo_conv", label, lambda m, img=img, filt=filt, src=src: kernels.geo_conv(img, filt, src, impl=m)))
        cases.append(("geo_conv_adjoint", label,
                      lambda m, g=gout, filt=filt, src=src, a=a: kernels.geo_conv_adjoint(g, filt, src, a, impl=m)))
    for channels in (8, 20):
        img, w, src, gout = chan_workload(rng, args.N, args.batch, channels)
        label = f"channels={channels}"
        cases.append(("chan_conv", label, lambda m, img=img, w=w, src=src: kernels.chan_conv(img, w, src, impl=m)))
        cases.append(("chan_conv_grads", label,
                      lambda m, img=img, w=w, src=src, g=gout: kernels.chan_conv_grads(img, w, src, g, impl=m)))

    print(f"N={args.N} batch={args.batch} repeat={args.repeat}")
    for name, label, run in cases:
        results = {key: run(mod) for key, mod in impls.items()}
        if len(results) == 2:
            ref, got = results["python"], results["cython"]
            pairs = zip(ref, got) if isinstance(ref, tuple) else [(ref, got)]
            if not all(np.allclose(r, g, rtol=1e-12, atol=1e-12) for r, g in pairs):
                raise SystemExit(f"{name} {label}: backends disagree")
        times = {key: best_time(lambda mod=mod: run(mod), args.repeat) for key, mod in impls.items()}
        line = "  ".join(f"{key} {t * 1e3:8.2f} ms" for key, t in times.items())
        if len(times) == 2:
            line += f"  speedup {times['python'] / times['cython']:6.1f}x"
        print(f"{name:>17} {label:<28} {line}")


if __name__ == "__main__":
    main()
