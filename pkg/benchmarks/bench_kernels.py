"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best-of-N time per call for each kernel at training-sized
inputs, plus an end-to-end speaker-listener training iteration under each
backend (the latter in a subprocess, since the backend is chosen at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dialcomm.kernels import _reference

try:
    from dialcomm.kernels import _ckernels
except ImportError:
    _ckernels = None

ITERATION_SNIPPET = """
import time
from dialcomm.coma import ComaDialTrainer
from dialcomm.discretizers import DiscretizerSpec
from dialcomm.envs import ParticleEnvConfig
from dialcomm import kernels
tr = ComaDialTrainer(ParticleEnvConfig("speaker_listener"), DiscretizerSpec("DRU"), seed=0)
tr.train_iteration()
t = time.perf_counter()
for _ in range({n}):
    tr.train_iteration()
print(kernels.BACKEND, (time.perf_counter() - t) / {n} * 1e3)
"""


def cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(800, 2))
    n1, n2 = rng.gumbel(size=x.shape), rng.gumbel(size=x.shape)
    pos, vel = rng.uniform(-1, 1, (32, 2)), np.zeros((32, 2))
    actions = rng.integers(0, 5, 32).astype(np.int64)
    probs = rng.dirichlet(np.ones(5), size=32)
    u = rng.random(32)
    msgs = (rng.random((800, 2)) < 0.5).astype(float)
    mask = (rng.random((800, 2)) < 0.1).astype(float)
    return {
        "discretize DRU (800x2)": lambda k: k.discretize(_reference.DRU, True, x, n1, n2, 1.0),
        "discretize ST-GS (800x2)": lambda k: k.discretize(_reference.ST_GS, True, x, n1, n2, 1.0),
        "integrate (32 movers)": lambda k: k.integrate(pos, vel, actions, 0.1, 0.25, 5.0, 1.3),
        "sample_categorical (32x5)": lambda k: k.sample_categorical(probs, u),
        "flip_bits (800x2)": lambda k: k.flip_bits(msgs, mask),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=2000)
    ap.add_argument("--iterations", type=int, default=20, help="training iterations per backend")
    args = ap.parse_args()

    if _ckernels is None:
        print("compiled kernels are not built; only the numpy fallback is timed")
    print(f"{'kernel':28s} {'python us':>10s} {'compiled us':>12s} {'speedup':>8s}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_reference), number=args.number, repeat=args.repeat)) / args.number
        if _ckernels is None:
            print(f"{name:28s} {t_py * 1e6:10.2f} {'-':>12s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_ckernels), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:28s} {t_py * 1e6:10.2f} {t_c * 1e6:12.2f} {t_py / t_c:7.1f}x")

    print("\nend-to-end COMA-DIAL speaker-listener iteration")
    for backend in ("python", "compiled"):
        env = dict(os.environ, DIALCOMM_KERNELS=backend if backend == "python" else "")
        out = subprocess.run([sys.executable, "-c", ITERATION_SNIPPET.format(n=args.iterations)],
                             capture_output=True, text=True, env=env, check=True)
        used, ms = out.stdout.split()
        print(f"  requested {backend:8s} -> used {used:8s} {float(ms):8.2f} ms/iteration")


if __name__ == "__main__":
    main()
