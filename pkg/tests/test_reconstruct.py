import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specmon.analysis import half_power_edges, ripple
from specmon.awg import ChannelPair, pair_sum_response, segment_pair
from specmon.core import WdmChannel, Spectrum, db, wdm_spectrum, zero_spectrum
from specmon.experiments import BandSetup, tracked_line_powers
from specmon.reconstruct import (HandoverPolicy, ReconstructedSpectrum, calibrate_and_assemble,
                                 crosstalk_correct, detuning_study, handover_sensitivity,
                                 load_reconstruction, save_reconstruction, synthesize, synthesize_all,
                                 theta_to_frequency)
from specmon.scan import DetectorTrace, make_parallel_schedule


def coded_trace(M, N, steps=360, cyclic=False):
    """powers[s, j, m] = 100 * (j + 1) + m + 1, so every sum names its members."""
    sched = make_parallel_schedule(M, steps)
    p = np.empty((steps, M, N))
    for j in range(M):
        p[:, j, :] = 100 * (j + 1) + np.arange(1, N + 1)
    return DetectorTrace(sched, p, cyclic=cyclic)


def at_deg(vt, deg):
    return int(np.argmin(np.abs(np.degrees(vt.theta) - deg)))


@pytest.mark.parametrize("M,deg,expected", [
    (2, 90, (101 + 4) + (201 + 4)),
    (2, 270, (201 + 4) + (101 + 5)),
    (3, 60, (101 + 4) + (201 + 4)),
    (3, 180, (201 + 4) + (301 + 4)),
    (3, 300, (301 + 4) + (101 + 5)),
])
def test_synthesis_picks_table_pairs(M, deg, expected):
    vt = synthesize(coded_trace(M, 8), 4)
    i = at_deg(vt, deg)
    assert vt.power[i] == expected
    assert not vt.partial[i]


def test_synthesis_records_pairs():
    vt = synthesize(coded_trace(2, 8), 4)
    assert vt.pair(at_deg(vt, 270)) == ChannelPair(1, 4, 0, 5)
    assert vt.handover_angles == (math.pi,)


def test_last_channel_is_partial_not_fatal():
    vt = synthesize(coded_trace(2, 8), 7)
    second = vt.theta >= math.pi
    assert vt.partial[second].all() and not vt.partial[~second].any()
    assert np.all(vt.power[second] == 208)


def test_cyclic_bank_wraps_partner():
    vt = synthesize(coded_trace(2, 8, cyclic=True), 7)
    assert not vt.partial.any()
    assert vt.power[at_deg(vt, 270)] == 208 + 101


def test_shifted_handover_moves_boundary():
    tr = coded_trace(2, 8)
    vt = synthesize(tr, 4, HandoverPolicy.at(165.0, 2))
    assert vt.power[at_deg(vt, 170)] == 205 + 106
    assert vt.power[at_deg(vt, 160)] == 105 + 205


def test_wrap_shift_borrows_neighbour_pairs():
    tr = coded_trace(2, 8)
    late = synthesize(tr, 4, HandoverPolicy(shift_deg=10.0, include_wrap=True))
    assert late.power[at_deg(late, 5)] == 204 + 105  # still channel 3's second pair
    early = synthesize(tr, 4, HandoverPolicy(shift_deg=-10.0, include_wrap=True))
    assert early.power[at_deg(early, 355)] == 106 + 206  # channel 5's first pair


def test_missing_samples_flag_partial():
    tr = coded_trace(3, 6)
    p = tr.powers.copy()
    p[:, 2, :] = np.nan
    vt = synthesize(tr.replace_powers(p), 2)
    mid = at_deg(vt, 180)
    assert vt.partial[mid] and vt.power[mid] == 203


def test_synthesis_errors():
    with pytest.raises(IndexError):
        synthesize(coded_trace(2, 4), 4)
    with pytest.raises(ValueError):
        HandoverPolicy(shift_deg=31.0)


@given(a=st.floats(1e-3, 1e3))
def test_synthesis_is_linear(a):
    tr = coded_trace(3, 5, steps=36)
    base = synthesize(tr, 2).power
    assert np.allclose(synthesize(tr.replace_powers(a * tr.powers), 2).power, a * base, rtol=1e-12)


def test_handover_window_is_harmless_for_ideal_profiles(rc2):
    assert handover_sensitivity(rc2.flat_trace, rc2.middle, 165.0, 195.0) < 0.05
    assert handover_sensitivity(rc2.flat_trace, rc2.middle, 180.0, 180.0) == 0.0


def test_wide_handover_penalty_is_reported(gauss20):
    v = handover_sensitivity(gauss20.flat_trace, gauss20.middle, 150.0, 210.0)
    assert np.isfinite(v) and v > 0


@pytest.mark.parametrize("setup", ["rc2", "rc3"])
def test_flat_top_theorem(request, setup):
    bank = request.getfixturevalue(setup).bank
    p = tracked_line_powers(bank, 3, 720)
    assert np.ptp(db(p)) < 1e-6


@pytest.mark.parametrize("setup", ["rc2", "rc3"])
def test_handover_continuity(request, setup):
    bank = request.getfixturevalue(setup).bank
    m = 3
    for s in range(1, bank.M):
        f = bank.center(0, m) + s * bank.spacing / bank.M
        before = pair_sum_response(f, segment_pair(s - 1, m, bank.M), bank)
        after = pair_sum_response(f, segment_pair(s, m, bank.M), bank)
        assert abs(db(before) - db(after)) < 1e-6


def test_m3_pair_captures_at_most_two_thirds(rc3):
    bank = replace(rc3.bank, split_ratio=1.0 / 3.0)
    m = 3
    theta = np.linspace(0, 2 * math.pi, 361)[:-1]
    f = bank.center(0, m) + theta / (2 * math.pi) * bank.spacing
    for th, fi in zip(theta, f):
        seg = min(int(th / (2 * math.pi / 3)), 2)
        assert pair_sum_response(fi, segment_pair(seg, m, 3), bank) <= 2.0 / 3.0 + 1e-12


def test_theta_to_frequency_anchors(rc2):
    bank, ring, m = rc2.bank, rc2.ring, 3
    assert theta_to_frequency(m, 0.0, ring, bank) == pytest.approx(bank.center(0, m), abs=1.0)
    assert theta_to_frequency(m, math.pi, ring, bank) == pytest.approx(bank.center(1, m), abs=1.0)
    assert theta_to_frequency(m, 2 * math.pi - 1e-9, ring, bank) == pytest.approx(bank.center(0, m + 1), abs=1e3)


def test_flat_input_reconstructs_level(rc2):
    rec = calibrate_and_assemble(synthesize_all(rc2.flat_trace), rc2.ring, rc2.bank)
    interior = (rec.channel >= 1) & (rec.channel <= rc2.n_channels - 2) & ~rec.partial
    np.testing.assert_allclose(rec.psd[interior], rc2.psd_level, rtol=0.005)
    assert np.all(np.diff(rec.frequency) > 0)
    assert rec.coverage()  # last channel's upper half has no partner
    assert rec.flags.count("partial") == int(rec.partial.sum())


def test_rectangular_channel_edges_within_rbw(rc2):
    lo, hi = rc2.center - 18.75e9, rc2.center + 18.75e9
    sp = wdm_spectrum(rc2.spectrum.grid, [WdmChannel(rc2.center, 37.5e9, 1e-12)])
    rec = calibrate_and_assemble(synthesize_all(rc2.trace(sp)), rc2.ring, rc2.bank).full()
    left, right = half_power_edges(rec.frequency, rec.psd, lo - 20e9, hi + 20e9)
    assert abs(left - lo) < 1.3e9 and abs(right - hi) < 1.3e9


def test_zero_input_reconstructs_zero(rc2):
    tr = rc2.trace(zero_spectrum(rc2.spectrum.grid))
    rec = calibrate_and_assemble(synthesize_all(tr), rc2.ring, rc2.bank)
    assert np.all(rec.psd == 0.0)


def test_zero_calibration_factor_is_an_error(rc2):
    narrow = rc2.bank.with_profile(width=5e9)
    with pytest.raises(ValueError, match="zero calibration"):
        calibrate_and_assemble([synthesize(rc2.flat_trace, 3)], rc2.ring, narrow)


def test_translation_equivariance(rc2):
    g = rc2.spectrum.grid
    f = g.frequencies

    def bump(c):
        return Spectrum(g, 1e-12 * (1.0 + np.exp(-((f - c) / 8e9) ** 2)))

    c0 = rc2.center - 10e9
    a = calibrate_and_assemble([synthesize(rc2.trace(bump(c0)), 3)], rc2.ring, rc2.bank)
    b = calibrate_and_assemble([synthesize(rc2.trace(bump(c0 + rc2.spacing)), 4)], rc2.ring, rc2.bank)
    np.testing.assert_allclose(b.frequency - a.frequency, rc2.spacing, atol=1.0)
    np.testing.assert_allclose(b.psd, a.psd, rtol=1e-6)


def test_theta_jitter_is_seeded(rc2):
    vts = [synthesize(rc2.flat_trace, 3)]
    a = calibrate_and_assemble(vts, rc2.ring, rc2.bank, theta_jitter=1e-3, seed=5)
    b = calibrate_and_assemble(vts, rc2.ring, rc2.bank, theta_jitter=1e-3, seed=5)
    c = calibrate_and_assemble(vts, rc2.ring, rc2.bank)
    assert a.psd.tobytes() == b.psd.tobytes()
    assert a.psd.tobytes() != c.psd.tobytes()


def test_reconstruction_roundtrip(tmp_path, rc2):
    rec = calibrate_and_assemble(synthesize_all(rc2.flat_trace), rc2.ring, rc2.bank)
    save_reconstruction(rec, tmp_path / "r.csv")
    back = load_reconstruction(tmp_path / "r.csv")
    for name in ("frequency", "psd", "channel", "theta", "partial"):
        assert np.array_equal(getattr(back, name), getattr(rec, name))
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == \
        "frequency_hz,psd_w_per_hz,virtual_channel,theta_rad,flags"


def test_reconstruction_rejects_unsorted():
    z = np.zeros(2)
    with pytest.raises(ValueError):
        ReconstructedSpectrum(np.array([2.0, 1.0]), z, z.astype(int), z, z.astype(bool))


@pytest.mark.parametrize("floor", [None, -np.inf])
def test_crosstalk_correction_identity(floor):
    tr = coded_trace(2, 5, steps=8)
    out = crosstalk_correct(tr, floor)
    assert out.powers.tobytes() == tr.powers.tobytes()


def test_crosstalk_correction_subtracts_neighbours():
    tr = coded_trace(2, 3, steps=4)
    out = crosstalk_correct(tr, -10.0)
    assert out.powers[0, 0, 1] == pytest.approx(102 - 0.1 * (101 + 103))
    assert out.powers[0, 0, 0] == pytest.approx(101 - 0.1 * 102)


def test_crosstalk_correction_clamps_and_keeps_gaps():
    p = np.array([[[0.0, 1.0, np.nan]], [[5.0, 0.0, 5.0]]]).reshape(2, 1, 3)
    p = np.concatenate([p, p], axis=1)
    out = crosstalk_correct(DetectorTrace(make_parallel_schedule(2, 2), p), 0.0)
    assert np.all(out.powers[~np.isnan(out.powers)] >= 0)
    assert np.isnan(out.powers[0, 0, 2])


def test_crosstalk_correction_on_flat_input():
    leaky = replace(BandSetup.fig2(20e9, "gaussian"), crosstalk_floor_db=-22.0)
    ideal = replace(leaky.bank, crosstalk_floor_db=None)
    tr = leaky.flat_trace
    fixed_tr = crosstalk_correct(tr, -22.0)
    # flat input leaks the same fraction into every detector, so ripple only changes by round-off
    raw = ripple(synthesize(tr, leaky.middle)).peak_to_peak_db
    fixed = ripple(synthesize(fixed_tr, leaky.middle)).peak_to_peak_db
    assert fixed <= raw + 1e-9
    # what the correction removes is the level offset against a leak-free acquisition
    clean = replace(leaky, crosstalk_floor_db=None).flat_trace
    ref, raw_rec, fixed_rec = (calibrate_and_assemble(synthesize_all(t), leaky.ring, ideal).psd
                               for t in (clean, tr, fixed_tr))
    raw_off = np.max(np.abs(db(raw_rec / ref)))
    fixed_off = np.max(np.abs(db(fixed_rec / ref)))
    assert raw_off > 0.02
    assert fixed_off < 0.1 * raw_off


def test_detuning_symmetric_at_quarter_spacing():
    rep = detuning_study(25e9)
    assert rep.asymmetry_db < 0.05


def test_detuning_mirrors():
    a, b = detuning_study(21e9), detuning_study(29e9)
    assert (a.ripple_first_half_db - a.ripple_second_half_db) * (
        b.ripple_first_half_db - b.ripple_second_half_db) < 0


def test_detuning_requires_two_awgs(rc3):
    with pytest.raises(ValueError):
        detuning_study(20e9, rc3)


def test_blind_edge_samples_are_dropped():
    s = BandSetup.fig2(20e9, "raised_cosine")
    last = synthesize(s.flat_trace, s.n_channels - 1)
    rec = calibrate_and_assemble([last], s.ring, s.bank)
    assert 0 < rec.frequency.size < last.theta.size
    assert rec.partial.any() and np.all(np.isfinite(rec.psd))
