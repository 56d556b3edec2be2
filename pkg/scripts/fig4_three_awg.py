"""Three-AWG virtual channel (51 GHz spacing) for several raised-cosine widths."""

import argparse

import numpy as np

from specmon.analysis import ripple
from specmon.experiments import BandSetup
from _plot import out_dir, pyplot, save, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures/fig4")
    ap.add_argument("--kind", default="raised_cosine")
    ap.add_argument("--widths-ghz", type=float, nargs="+", default=[15.0, 17.0, 19.0])
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    rows, curves = [], {}
    for w in args.widths_ghz:
        vt = BandSetup.fig4(w * 1e9, args.kind).virtual_channel()
        rep = ripple(vt)
        curves[w] = (np.degrees(vt.theta), 10 * np.log10(vt.power / vt.power.max()))
        rows.append([w, rep.peak_to_peak_db] + [s[2] for s in rep.segments])
        print(f"B = {w:4.1f} GHz  ripple {rep.peak_to_peak_db:.3f} dB")
    write_csv(out / "fig4_ripple.csv", ["width_ghz", "ripple_db", "seg1_db", "seg2_db", "seg3_db"], rows)
    plt = pyplot()
    if plt:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for w, (d, lv) in curves.items():
            ax.plot(d, lv, label=f"B = {w:g} GHz")
        for b in (120, 240):
            ax.axvline(b, color="0.6", lw=0.8, ls=":")
        ax.set(xlabel="ring tuning phase (deg)", ylabel="normalised power (dB)", xlim=(0, 360))
        ax.legend()
        save(fig, out / "fig4.png")


if __name__ == "__main__":
    main()
