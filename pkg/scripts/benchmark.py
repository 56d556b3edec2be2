"""Wall time of a preset scenario for several thread counts, with a bitwise check."""

import argparse
import hashlib
import time

from specmon.scenario import execute, load_scenario, preset_path


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenario", nargs="?", default="table2")
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    args = ap.parse_args(argv)
    cfg = load_scenario(preset_path(args.scenario)).config
    digests = set()
    for n in args.threads:
        t0 = time.perf_counter()
        trace, res = execute(cfg, threads=n)
        dt = time.perf_counter() - t0
        digest = hashlib.sha256(trace.powers.tobytes()).hexdigest()[:16]
        digests.add(digest)
        print(f"{args.scenario}: threads={n:<2d} {dt:7.2f} s  trace {digest}  ripple {res['metrics']['ripple_db']:.3f} dB")
    print("identical across thread counts" if len(digests) == 1 else "MISMATCH across thread counts")
    return 0 if len(digests) == 1 else 1


if __name__ == "__main__":
    raise SystemExit(main())
