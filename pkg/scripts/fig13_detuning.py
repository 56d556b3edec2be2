"""Half-scan ripple of the two-AWG pipeline as the inter-AWG shift moves off 25 GHz."""

import argparse

import numpy as np

from specmon.experiments import BandSetup
from specmon.reconstruct import detuning_study
from _plot import out_dir, pyplot, save, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures/fig13")
    ap.add_argument("--shifts-ghz", type=float, nargs="+", default=[21.0, 23.0, 25.0, 27.0, 29.0])
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    rows, curves = [], {}
    for s in args.shifts_ghz:
        rep = detuning_study(s * 1e9)
        rows.append([s, rep.total_ripple_db, rep.ripple_first_half_db, rep.ripple_second_half_db])
        vt = BandSetup.fig13().with_offsets((0.0, s * 1e9)).virtual_channel()
        curves[s] = (np.degrees(vt.theta), 10 * np.log10(vt.power / vt.power.max()))
        print(f"shift {s:4.1f} GHz  total {rep.total_ripple_db:.3f} dB  halves "
              f"{rep.ripple_first_half_db:.3f} / {rep.ripple_second_half_db:.3f} dB")
    write_csv(out / "fig13.csv", ["shift_ghz", "total_db", "first_half_db", "second_half_db"], rows)
    plt = pyplot()
    if plt:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for s, (d, lv) in curves.items():
            ax.plot(d, lv, label=f"{s:g} GHz shift")
        ax.set(xlabel="ring tuning phase (deg)", ylabel="normalised power (dB)", xlim=(0, 360))
        ax.legend(fontsize=8)
        save(fig, out / "fig13.png")


if __name__ == "__main__":
    main()
