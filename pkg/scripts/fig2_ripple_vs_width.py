"""Two-AWG virtual-channel power over one tuning period for several passband widths."""

import argparse
import math

import numpy as np

from specmon.analysis import ripple
from specmon.experiments import BandSetup
from _plot import out_dir, pyplot, save, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures/fig2")
    ap.add_argument("--kind", default="gaussian", choices=["gaussian", "raised_cosine", "supergaussian"])
    ap.add_argument("--widths-ghz", type=float, nargs="+", default=[20.0, 22.5, 25.0])
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    curves = {}
    for w in args.widths_ghz:
        vt = BandSetup.fig2(w * 1e9, args.kind).virtual_channel()
        level = 10 * np.log10(vt.power / vt.power.max())
        curves[w] = (np.degrees(vt.theta), level)
        print(f"B = {w:5.1f} GHz  ripple {ripple(vt).peak_to_peak_db:.3f} dB")

    deg = next(iter(curves.values()))[0]
    write_csv(out / "fig2.csv", ["theta_deg"] + [f"B{w:g}GHz_db" for w in curves],
              [[d] + [c[1][i] for c in curves.values()] for i, d in enumerate(deg)])
    plt = pyplot()
    if plt:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for w, (d, lv) in curves.items():
            ax.plot(d, lv, label=f"B = {w:g} GHz")
        ax.axvline(180, color="0.6", lw=0.8, ls=":")
        ax.set(xlabel="ring tuning phase (deg)", ylabel="normalised power (dB)", xlim=(0, 360))
        ax.legend()
        save(fig, out / "fig2.png")


if __name__ == "__main__":
    main()
