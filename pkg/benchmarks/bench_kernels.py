"""Compare the numba kernels with the interpreted fallback.

Each backend runs in its own subprocess because the switch is read at import
time. Usage: ``python benchmarks/bench_kernels.py [--frames N] [--value V]``.
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = """
import json, sys, time
import numpy as np
from evsnn import random_model, run
from evsnn._jit import backend_name
from evsnn.core_model import GSCD_LAYERS, GSCD_THRESHOLDS
from evsnn.rate_coding import steady_trace
frames, value = int(sys.argv[1]), int(sys.argv[2])
model = random_model(GSCD_LAYERS, GSCD_THRESHOLDS, seed=0)
frame = model.config.frame_ticks
trace = steady_trace(np.full(256, value), frame, frames)
t0 = time.perf_counter()
run(model, steady_trace(np.full(256, 1), frame, 1), frame)
warm = time.perf_counter() - t0
t0 = time.perf_counter()
res = run(model, trace, frame * frames)
elapsed = time.perf_counter() - t0
print(json.dumps({"backend": backend_name(), "warmup_s": warm, "run_s": elapsed, "events": int(res.events), "digest": res.digest()}))
"""


def measure(disable: bool, frames: int, value: int) -> dict:
    env = dict(os.environ)
    env.pop("EVSNN_DISABLE_NUMBA", None)
    if disable:
        env["EVSNN_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(frames), str(value)], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=2)
    parser.add_argument("--value", type=int, default=32, help="spikes per frame on every input")
    args = parser.parse_args(argv)
    rows = [measure(False, args.frames, args.value), measure(True, args.frames, args.value)]
    print(f"{'backend':<8} {'warmup s':>9} {'run s':>9} {'events/s':>12}")
    for r in rows:
        print(f"{r['backend']:<8} {r['warmup_s']:>9.3f} {r['run_s']:>9.3f} {r['events'] / r['run_s']:>12.0f}")
    print(f"speedup {rows[1]['run_s'] / rows[0]['run_s']:.1f}x, digests match: {rows[0]['digest'] == rows[1]['digest']}")
    return 0 if rows[0]["digest"] == rows[1]["digest"] else 1


if __name__ == "__main__":
    sys.exit(main())
