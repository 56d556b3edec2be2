"""Per-channel level across one AWG FSR of the cyclic 32 x 50 GHz bank."""

import argparse
import copy

from specmon.analysis import channel_levels_db, edge_rolloff
from specmon.scenario import execute, load_scenario, preset_path
from _plot import out_dir, pyplot, save, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures/fig11")
    ap.add_argument("--envelopes-db", type=float, nargs="+", default=[0.0, 1.8, 3.6])
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    base = load_scenario(preset_path("table5")).config
    levels = {}
    for env in args.envelopes_db:
        cfg = copy.deepcopy(base)
        cfg["bank"]["envelope_db"] = env
        vts = execute(cfg)[1]["virtual"]
        lv = channel_levels_db(vts)
        levels[env] = lv - lv.max()
        print(f"envelope {env:3.1f} dB  edge roll-off {edge_rolloff(vts):.3f} dB")
    n = len(next(iter(levels.values())))
    write_csv(out / "fig11.csv", ["channel"] + [f"env{e:g}dB" for e in levels],
              [[m + 1] + [levels[e][m] for e in levels] for m in range(n)])
    plt = pyplot()
    if plt:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for e, lv in levels.items():
            ax.plot(range(1, n + 1), lv, "o-", ms=3, label=f"envelope {e:g} dB")
        ax.set(xlabel="virtual channel", ylabel="mean level re max (dB)")
        ax.legend()
        save(fig, out / "fig11.png")


if __name__ == "__main__":
    main()
