"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--qubits 10]

Each kernel is run on identical inputs with both backends; the outputs are
compared before timing so a speedup is never reported for a wrong answer.
"""

import argparse
import timeit

import numpy as np

from otoc_lab.kernels import backends


def cases(nq, rng):
    dim = 2**nq
    psi = rng.normal(size=(dim, 4)) + 1j * rng.normal(size=(dim, 4))
    u = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    masks = rng.integers(0, dim, size=3 * nq).astype(np.int64)
    diags = rng.normal(size=(masks.size, dim)) + 0j
    rho_q = min(nq, 8)  # the dissipator is dense in dim**2
    rho = rng.normal(size=(2**rho_q,) * 2) + 1j * rng.normal(size=(2**rho_q,) * 2)

    def apply_1q(k):
        mat = psi.copy()
        for q in range(nq):
            k.apply_1q(mat, q, u)
        return mat

    def flip(k):
        out = np.zeros_like(psi)
        k.flip_mask_apply(masks, diags, psi, out)
        return out

    def decay(k):
        out = np.zeros_like(rho)
        k.decay_dissipator(rho, out, 0.3, (1 << rho_q) - 1)
        return out

    return {"apply_1q": apply_1q, "flip_mask_apply": flip, "decay_dissipator": decay}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--qubits", type=int, default=10)
    args = ap.parse_args(argv)
    found = backends()
    if "cython" not in found:
        print("compiled backend not built; only the fallback is available")
    work = cases(args.qubits, np.random.default_rng(0))
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name in found) + "     speedup")
    for label, fn in work.items():
        ref = fn(found["python"])
        times = {}
        for name, mod in found.items():
            assert np.allclose(fn(mod), ref, atol=1e-10), (label, name)
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:<18}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in found)
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
