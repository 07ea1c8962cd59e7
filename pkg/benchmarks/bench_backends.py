"""Time the numba kernels against their numpy twins and check they agree.

    python3 benchmarks/bench_backends.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from mincomm import _kernels
from mincomm._backend import HAVE_NUMBA


def _cases():
    d = 8
    rng = np.random.default_rng(0)
    w = rng.standard_normal(d) * 0.5
    mean = np.zeros(d)
    x = rng.uniform(-1, 1, (200, d))
    y = (rng.random(200) < 0.5).astype(np.float64)
    lr = _kernels.log_ratios_np(np.uint64(11), 1, 50_000, w, mean, 1.0, 1.0)
    seeds = np.arange(1, 101, dtype=np.uint64)
    s = np.uint64
    return {
        "codewords 1e5": lambda k: k["codewords"](s(7), 1, 100_000, mean, 1.0),
        "log_ratios 1e5": lambda k: k["log_ratios"](s(7), 1, 100_000, w, mean, 1.0, 1.0),
        "orc_select 5e4": lambda k: k["orc_select"](lr, s(3), float(lr.max())),
        "orc_lazy 5e4": lambda k: k["orc_lazy"](s(7), 50_000, w, mean, 1.0, 0.6, s(3), np.inf),
        "vq_select 4096": lambda k: k["vq_select"](s(7), 4096, w, mean, 1.0),
        "appendix 100x5e3": lambda k: k["appendix_sums"](seeds, 5000, w, mean, 1.0, 1.0, 4.0),
        "sgd 200 epochs": lambda k: k["sgd_run"](x, y, np.zeros(d), mean, 1.0, 200, 32, 0.1, 1.0, s(5)),
    }


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(u, float), np.asarray(v, float), rtol=1e-9, atol=1e-9)
               for u, v in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    nb, npy = _kernels.implementations("numba"), _kernels.implementations("numpy")
    print(f"{'kernel':20s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}  agree")
    for name, case in _cases().items():
        t_nb = _time(lambda: case(nb), args.repeat)
        t_np = _time(lambda: case(npy), args.repeat)
        same = _agree(case(nb), case(npy))
        print(f"{name:20s} {t_nb:10.5f} {t_np:10.5f} {t_np / t_nb:8.1f}  {same}")


if __name__ == "__main__":
    main()
