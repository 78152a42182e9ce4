"""Protocol engine checks: encoding, measurement statistics, sifting."""

import math

import numpy as np
import pytest

from spsqkd.bb84 import (
    Basis,
    Polarization,
    alice_encode,
    bob_measure,
    format_session_csv,
    run_session,
)
from spsqkd.channel import LinkSpec
from spsqkd.sources import SourceKind, SourceSpec, get_preset


def _perfect_source():
    return SourceSpec(SourceKind.SUB_POISSONIAN, mu=1.0, g2_zero=0.0)


def _perfect_link():
    return LinkSpec(setup_efficiency=1.0, dark_count_prob=0.0, misalignment=0.0)


def test_alice_encode_mapping():
    assert alice_encode(0, Basis.LINEAR) is Polarization.H
    assert alice_encode(1, Basis.LINEAR) is Polarization.V
    assert alice_encode(0, Basis.CIRCULAR) is Polarization.LCIRC
    assert alice_encode(1, Basis.CIRCULAR) is Polarization.RCIRC
    outputs = {alice_encode(b, beta) for b in (0, 1) for beta in Basis}
    assert len(outputs) == 4
    with pytest.raises(ValueError):
        alice_encode(2, Basis.LINEAR)


def test_polarization_decomposition():
    for pol in Polarization:
        assert alice_encode(pol.bit, pol.basis) is pol
    assert Polarization.H.basis is Basis.LINEAR
    assert Polarization.RCIRC.basis is Basis.CIRCULAR
    assert Polarization.V.bit == 1


def test_bob_measure_matched_noiseless():
    link = _perfect_link()
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert bob_measure(Polarization.H, Basis.LINEAR, 1, link, rng) == (True, False)
        assert bob_measure(Polarization.V, Basis.LINEAR, 1, link, rng) == (False, True)


def test_bob_measure_bright_mismatch_double_clicks():
    # 64 photons into a 50/50 split: odds of a single-sided outcome are 2^-63
    link = _perfect_link()
    rng = np.random.default_rng(2)
    assert bob_measure(Polarization.H, Basis.CIRCULAR, 64, link, rng) == (True, True)


def test_bob_measure_mismatch_is_unbiased():
    link = _perfect_link()
    rng = np.random.default_rng(3)
    n = 100_000
    det0 = sum(
        bob_measure(Polarization.H, Basis.CIRCULAR, 1, link, rng)[0]
        for _ in range(n)
    )
    assert abs(det0 / n - 0.5) < 0.01


def test_bob_measure_misalignment_rate():
    link = LinkSpec(setup_efficiency=1.0, dark_count_prob=0.0, misalignment=0.1)
    rng = np.random.default_rng(4)
    n = 50_000
    wrong = sum(
        bob_measure(Polarization.H, Basis.LINEAR, 1, link, rng)[1] for _ in range(n)
    )
    assert abs(wrong / n - 0.1) < 4 * math.sqrt(0.1 * 0.9 / n)


def test_bob_measure_dark_counts_only():
    link = LinkSpec(dark_count_prob=0.2)
    rng = np.random.default_rng(5)
    n = 50_000
    clicks = [bob_measure(Polarization.H, Basis.LINEAR, 0, link, rng) for _ in range(n)]
    frac0 = sum(c[0] for c in clicks) / n
    frac1 = sum(c[1] for c in clicks) / n
    # each detector fires at half the per-gate dark probability
    assert abs(frac0 - 0.1) < 4 * math.sqrt(0.1 * 0.9 / n)
    assert abs(frac1 - 0.1) < 4 * math.sqrt(0.1 * 0.9 / n)
    with pytest.raises(ValueError):
        bob_measure(Polarization.H, Basis.LINEAR, -1, link, rng)


def test_run_session_validation():
    src, link = _perfect_source(), _perfect_link()
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="n_pulses"):
        run_session(src, link, 0, rng)
    with pytest.raises(ValueError, match="disclose_fraction"):
        run_session(src, link, 10, rng, disclose_fraction=1.0)
    with pytest.raises(ValueError, match="policy"):
        run_session(src, link, 10, rng, double_click_policy="drop")
    with pytest.raises(ValueError, match="three per pulse"):
        run_session(src, link, 10, rng, protocol_bits=np.zeros(29, dtype=np.uint8))
    with pytest.raises(ValueError, match="0/1"):
        run_session(src, link, 1, rng, protocol_bits=np.array([0, 1, 2]))


def test_noiseless_limit():
    rng = np.random.default_rng(11)
    res = run_session(_perfect_source(), _perfect_link(), 50_000, rng, full_compare=True)
    assert res.qber_measured == 0.0
    assert res.detected_count == 50_000
    assert abs(res.sifted_count / res.n_pulses - 0.5) < 0.01
    assert res.disclosed_count == 0
    assert len(res.sifted_alice) == res.sifted_count


def test_nv_session_rates():
    rng = np.random.default_rng(42)
    res = run_session(get_preset("nv"), LinkSpec(), 1_000_000, rng, full_compare=True)
    assert res.sifted_rate_bps == pytest.approx(4500, rel=0.15)
    assert res.qber_measured == pytest.approx(0.03, abs=0.005)
    assert res.detected_rate_cps == pytest.approx(8900, rel=0.10)


def test_siv_detected_rate():
    rng = np.random.default_rng(43)
    res = run_session(get_preset("siv"), LinkSpec(), 1_000_000, rng, full_compare=True)
    assert res.detected_rate_cps == pytest.approx(3700, rel=0.10)


def test_sift_fraction_of_detected():
    rng = np.random.default_rng(44)
    res = run_session(get_preset("nv"), LinkSpec(), 1_000_000, rng, full_compare=True)
    frac = res.sifted_count / res.detected_count
    sigma = 0.5 / math.sqrt(res.detected_count)
    assert abs(frac - 0.5) < 4 * sigma


def test_matched_errors_vanish_without_noise():
    # loss only: multiphoton partners carry the same polarization, so
    # surviving photons can never flip the matched-basis outcome
    src = get_preset("nv")
    link = LinkSpec(distance_km=15.0, dark_count_prob=0.0, misalignment=0.0)
    rng = np.random.default_rng(45)
    res = run_session(src, link, 500_000, rng, full_compare=True)
    assert res.sifted_count > 0
    assert res.qber_measured == 0.0


def test_determinism_and_seed_sensitivity():
    src, link = get_preset("nv"), LinkSpec()
    a = run_session(src, link, 20_000, np.random.default_rng(7))
    b = run_session(src, link, 20_000, np.random.default_rng(7))
    c = run_session(src, link, 20_000, np.random.default_rng(8))
    assert np.array_equal(a.sift_alice_bits, b.sift_alice_bits)
    assert np.array_equal(a.sift_bob_bits, b.sift_bob_bits)
    assert np.array_equal(a.disclosed_mask, b.disclosed_mask)
    assert a.qber_measured == b.qber_measured
    assert not np.array_equal(a.sift_alice_bits, c.sift_alice_bits)


def test_disclosure_bookkeeping():
    rng = np.random.default_rng(9)
    res = run_session(_perfect_source(), _perfect_link(), 10_000, rng,
                      disclose_fraction=0.1)
    assert res.disclosed_count == int(0.1 * res.sifted_count)
    assert len(res.sifted_alice) == res.sifted_count - res.disclosed_count
    assert res.qber_defined
    assert 0.0 <= res.qber_measured <= 1.0


def test_zero_disclosure_flags_undefined_qber():
    rng = np.random.default_rng(10)
    res = run_session(_perfect_source(), _perfect_link(), 100, rng,
                      disclose_fraction=0.001)
    assert res.disclosed_count == 0
    assert not res.qber_defined
    assert math.isnan(res.qber_measured)


def test_double_click_policies():
    # bright Poissonian pulses force double clicks on mismatched bases
    src = SourceSpec(SourceKind.POISSONIAN, mu=8.0)
    link = LinkSpec(setup_efficiency=1.0, dark_count_prob=0.0, misalignment=0.2)
    kept = run_session(src, link, 5_000, np.random.default_rng(12),
                       full_compare=True, record_pulses=True)
    dropped = run_session(src, link, 5_000, np.random.default_rng(12),
                          full_compare=True, double_click_policy="discard",
                          record_pulses=True)
    assert dropped.sifted_count < kept.sifted_count
    for rec in kept.records:
        assert (rec.resolved_bit is not None) == (rec.click0 or rec.click1)
    for rec in dropped.records:
        if rec.click0 and rec.click1:
            assert rec.resolved_bit is None


def test_pulse_record_invariants():
    rng = np.random.default_rng(13)
    res = run_session(get_preset("nv"), LinkSpec(), 5_000, rng, record_pulses=True)
    assert not res.records_elided
    assert len(res.records) == 5_000
    sifted = set(res.sift_pulse_index.tolist())
    for rec in res.records:
        assert rec.n_photons_arrived <= rec.n_photons_emitted
        assert (rec.resolved_bit is not None) == (rec.click0 or rec.click1)
        should_sift = rec.alice_basis == rec.bob_basis and rec.resolved_bit is not None
        assert (rec.index in sifted) == should_sift


def test_records_elided_by_default():
    rng = np.random.default_rng(14)
    res = run_session(get_preset("nv"), LinkSpec(), 1_000, rng)
    assert res.records_elided
    assert res.records == ()


def test_external_protocol_bits():
    n = 200
    bits = np.zeros(3 * n, dtype=np.uint8)
    res = run_session(_perfect_source(), _perfect_link(), n,
                      np.random.default_rng(15), protocol_bits=bits,
                      full_compare=True)
    # all-zero stream: bit 0, both bases linear, every pulse matched
    assert res.sifted_count == n
    assert not res.sift_alice_bits.any()
    assert not res.sift_bob_bits.any()
    assert res.qber_measured == 0.0


def test_session_csv_shape():
    rng = np.random.default_rng(16)
    res = run_session(_perfect_source(), _perfect_link(), 40, rng,
                      disclose_fraction=0.25)
    text = format_session_csv(res, metadata={"config_hash": "cafe"})
    lines = text.strip().split("\n")
    assert lines[0] == "# config_hash=cafe"
    assert lines[1] == "pulse_index,basis,alice_bit,bob_bit,disclosed"
    assert len(lines) == 2 + res.sifted_count
    disclosed = sum(int(line.split(",")[4]) for line in lines[2:])
    assert disclosed == res.disclosed_count
