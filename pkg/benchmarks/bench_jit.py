"""Compiled kernels against the pure-Python fallback on one benchmark.

The fallback runs in a child process because the switch is read at import.
Both paths trace the same photons from the same stream, so the script also
reports how far their tallies drift apart.

    python3 benchmarks/bench_jit.py --photons 200 --fallback-photons 3
"""

import argparse
import json
import os
import subprocess
import sys
import time


def measure(name, level, nphoton, seed):
    from raymc import _jit, bench, pipeline

    spec = bench.generate_benchmark(name, level=level)
    acc = spec.accel_set("single")
    # warm-up so compile time (or cache load) is not timed
    pipeline.simulate(acc, spec.media, spec.source, spec.grid(), 1, seed, 1)
    t0 = time.perf_counter()
    _, s, _ = pipeline.simulate(acc, spec.media, spec.source, spec.grid(), nphoton, seed, 1)
    wall = time.perf_counter() - t0
    events = s.scatter_events + s.boundary_events
    return {"mode": "numba" if _jit.USE_NUMBA else "python", "photons": nphoton,
            "seconds": wall, "events": events, "events_per_s": events / wall,
            "absorbed": s.absorbed_weight, "scatter_events": s.scatter_events}


def child(args, disable):
    env = dict(os.environ, RAYMC_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--child", "--bench", args.bench, "--level", str(args.level),
           "--seed", str(args.seed), "--photons",
           str(args.fallback_photons if disable else args.photons)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bench", default="B1")
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--photons", type=int, default=200)
    ap.add_argument("--fallback-photons", type=int, default=3)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--json", help="write the results here")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.child:
        print(json.dumps(measure(args.bench, args.level, args.photons, args.seed)))
        return 0

    jit = child(args, disable=False)
    py = child(args, disable=True)
    same = dict(vars(args), photons=args.fallback_photons)
    check = child(argparse.Namespace(**same), disable=False)
    rel = abs(check["absorbed"] - py["absorbed"]) / max(abs(py["absorbed"]), 1e-300)
    res = {"numba": jit, "python": py, "speedup": jit["events_per_s"] / py["events_per_s"],
           "same_photons_absorbed_rel_diff": rel,
           "same_photons_scatter_events_equal": check["scatter_events"] == py["scatter_events"]}
    print(f"{args.bench} level {args.level}")
    for r in (jit, py):
        print(f"  {r['mode']:6s} {r['photons']:6d} photons  {r['seconds']:8.3f} s  "
              f"{r['events_per_s'] / 1e6:8.3f} M events/s  "
              f"{1e6 / r['events_per_s']:8.3f} us/event")
    print(f"  speedup {res['speedup']:.0f}x; on the same {args.fallback_photons} photons absorbed "
          f"weight differs by {rel:.2e} (relative), scatter counts "
          f"{'match' if res['same_photons_scatter_events_equal'] else 'DIFFER'}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
