import json

import pytest

from hybridmap.hardware import STRATIX10NX, VCK190, HardwareProfile, ProfileError, load_profile, peak_tops


def test_vck190_values():
    p = load_profile("vck190")
    assert (p.aie_total, p.mac_per_aie_per_cycle, p.freq_aie_hz) == (400, 128, 1e9)
    assert peak_tops(p) == 102.4e12
    assert p.offchip_bw_bytes_per_s == 25.6e9


def test_stratix_profile():
    p = load_profile("STRATIX10NX")
    assert peak_tops(p) / 1e12 == pytest.approx(143, rel=0.005)
    assert p.onchip_bytes == 16_000_000
    assert p.offchip_bw_bytes_per_s == 512e9


def test_peak_small_cases():
    tiny = HardwareProfile(aie_total=1, mac_per_aie_per_cycle=1, freq_aie_hz=1.0)
    assert peak_tops(tiny) == 2.0
    assert peak_tops(VCK190.with_(aie_total=394)) == pytest.approx(100.864e12)


def test_roundtrip_identical(tmp_path):
    for p in (VCK190, STRATIX10NX, VCK190.with_(eff=0.3, nonlinear_dsp_cost={"GeLU": 7})):
        path = tmp_path / f"{p.name}.json"
        path.write_text(p.to_json())
        q = load_profile(path)
        assert q == p
        assert q.to_json() == p.to_json()


@pytest.mark.parametrize("bad", [{"eff": 0}, {"eff": 1.5}, {"aie_total": 0}, {"dsp_total": -1},
                                 {"nonlinear_dsp_cost": {"MatMul": 3}}, {"bogus": 1}])
def test_invalid_profiles(bad):
    with pytest.raises(ProfileError):
        HardwareProfile.from_dict({**VCK190.to_dict(), **bad})


def test_load_errors(tmp_path):
    with pytest.raises(ProfileError):
        load_profile(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ProfileError):
        load_profile(bad)
    arr = tmp_path / "arr.json"
    arr.write_text(json.dumps([1, 2]))
    with pytest.raises(ProfileError):
        load_profile(arr)


def test_reference_usage_fits_budgets():
    # usage of a one-block spatial design: 624 BRAM, 104 URAM, ~1785 DSP, 199 PLIO
    assert 624 / VCK190.bram_total == pytest.approx(0.645, abs=0.001)
    assert 104 / VCK190.uram_total == pytest.approx(0.225, abs=0.001)
    assert 1785 / VCK190.dsp_total == pytest.approx(0.907, abs=0.001)
    assert 199 <= VCK190.plio_budget
