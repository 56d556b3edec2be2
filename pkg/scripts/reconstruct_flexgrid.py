"""Reconstruct a three-channel flex-grid scene and compare it with the input."""

import argparse
from dataclasses import replace

import numpy as np

from specmon.analysis import band_power, channel_powers
from specmon.core import WdmChannel, wdm_spectrum
from specmon.experiments import BandSetup
from specmon.reconstruct import calibrate_and_assemble, synthesize_all
from _plot import out_dir, pyplot, save, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures/flexgrid")
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    setup = replace(BandSetup.fig2(25e9, "raised_cosine"), n_channels=9)
    c0 = setup.first_channel
    scene = [(c0 + 150e9 + 25e9, 30e9, 1.0e-12), (c0 + 200e9 + 68.75e9, 37.5e9, 0.5e-12),
             (c0 + 300e9 + 12.5e9, 25e9, 2.0e-12)]
    truth = wdm_spectrum(setup.spectrum.grid, [WdmChannel(c, b, p) for c, b, p in scene])
    rec = calibrate_and_assemble(synthesize_all(setup.trace(truth)), setup.ring, setup.bank).full()

    bands = [(c - b / 2 - 5e9, c + b / 2 + 5e9) for c, b, _ in scene]
    got = channel_powers(rec, bands)
    want = [band_power(truth.frequencies, truth.psd, lo, hi) for lo, hi in bands]
    for (c, b, _), g, w in zip(scene, got, want):
        print(f"{c / 1e12:.5f} THz  {b / 1e9:4.1f} GHz  error {10 * np.log10(g / w):+.3f} dB")
    write_csv(out / "reconstruction.csv", ["frequency_hz", "psd_w_per_hz", "truth_w_per_hz"],
              zip(rec.frequency, rec.psd, np.interp(rec.frequency, truth.frequencies, truth.psd)))
    plt = pyplot()
    if plt:
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot((truth.frequencies - c0) / 1e9, truth.psd * 1e12, color="0.6", label="input")
        ax.plot((rec.frequency - c0) / 1e9, rec.psd * 1e12, ".", ms=1.5, label="reconstruction")
        ax.set(xlabel=f"frequency - {c0 / 1e12:.4f} THz (GHz)", ylabel="PSD (pW/Hz)")
        ax.legend()
        save(fig, out / "flexgrid.png")


if __name__ == "__main__":
    main()
