import json
from dataclasses import replace

import numpy as np
import pytest

from canlift import synthgen as S
from canlift.canlog import parse_log
from canlift.decomposer import extract_series, normalize
from canlift.groundtruth import align
from canlift.tsmatch import haversine_m


@pytest.fixture(scope="module")
def drive():
    return S.generate(S.make_scenario(7, duration_s=240.0))


def test_decode_at_truth_equals_quantized_physics(drive):
    t0 = drive.truth.start_time
    for name, ch in drive.truth.locations.items():
        s = extract_series(drive.log, ch.key)
        phys = drive.truth.physical
        idx = np.clip(np.round((s.timestamps - t0) * S.PHYSICS_HZ).astype(int), 0, len(phys.t) - 1)
        want = S.quantize(phys.signal(name)[idx], ch)
        assert np.array_equal(s.raw, want), name


def test_velocity_within_one_quantum(drive):
    ch = drive.truth.locations["velocity"]
    s = extract_series(drive.log, ch.key)
    decoded = (s.raw - ch.offset) * ch.scale
    phys = drive.truth.physical
    idx = np.clip(np.round((s.timestamps - drive.truth.start_time) * S.PHYSICS_HZ).astype(int), 0, len(phys.t) - 1)
    assert np.max(np.abs(decoded - phys.velocity[idx])) <= ch.scale / 2 + 1e-9


def test_pedals_never_overlap(drive):
    phys = drive.truth.physical
    assert not np.any((phys.accelerator > 0) & (phys.brake > 0))


def test_standing_starts_show_rpm_drops(drive):
    phys = drive.truth.physical
    assert phys.standing_starts >= 1
    shifts = np.flatnonzero(np.diff(phys.gear) > 0)
    assert len(shifts) >= 1
    # the engine speed falls after an upshift, then rises again
    for k in shifts[:3]:
        before = phys.rpm[max(0, k - 20) : k + 1].max()
        after = phys.rpm[k + 1 : k + 150]
        assert after.min() < before
        assert after[-1] > after.min()


def test_zero_accelerator_means_standing_still():
    style = S.DriverStyle(accel_level=0.0)
    phys = S.simulate_drive(S.ScenarioSpec(duration_s=60.0, style=style, seed=1))
    assert np.all(phys.accelerator == 0)
    assert np.all(phys.velocity == 0)


def test_counter_covers_all_byte_values():
    log = S.generate(S.make_scenario(3, duration_s=120.0)).log
    counters = [ch for m in S.make_scenario(3, duration_s=120.0).messages for ch in m.channels
                if ch.kind == "counter" and ch.step == 1]
    assert counters
    s = extract_series(log, counters[0].key)
    assert s.distinct_count == 256


def test_log_reparses_without_loss(drive):
    text = drive.log.to_text()
    again = parse_log(text)
    assert again.skipped == 0
    assert len(again) == len(drive.log)
    assert again.to_text() == text


def test_generation_is_deterministic():
    a = S.generate(S.make_scenario(11, duration_s=60.0))
    b = S.generate(S.make_scenario(11, duration_s=60.0))
    assert a.log.to_text() == b.log.to_text()
    assert a.gps.to_csv() == b.gps.to_csv()


def test_car_pair_layouts_disjoint():
    base, target = S.make_car_pair(4, duration_s=30.0, target_duration_s=30.0)
    spans = lambda b: {(ch.can_id, ch.start, ch.width) for m in b.spec.messages for ch in m.channels}
    assert not spans(base) & spans(target)
    assert not {m.can_id for m in base.spec.messages} & {m.can_id for m in target.spec.messages}


def test_scaled_velocity_matches_after_normalisation():
    a = np.array([0.0, 30.0, 60.0, 120.0])
    ch1 = S.Channel("velocity", 1, 0, 2, scale=0.1)
    ch2 = S.Channel("velocity", 2, 0, 2, scale=0.2)
    r1, r2 = S.quantize(a, ch1), S.quantize(a, ch2)
    assert r1.max() / r2.max() == 2
    assert np.allclose(r1 / r1.max(), r2 / r2.max())


def test_quantize_overflow_is_an_error():
    with pytest.raises(ValueError):
        S.quantize(np.array([300.0]), S.Channel("brake", 1, 0, 1, scale=1.0))


def test_overlapping_layout_rejected():
    chs = (S.Channel("constant", 1, 0, 2), S.Channel("constant", 1, 1, 1))
    with pytest.raises(ValueError):
        S.ScenarioSpec(messages=(S.Message(1, 8, 0.01, chs),))


def test_spec_dict_round_trip():
    spec = S.make_scenario(5, duration_s=30.0, style=S.AGGRESSIVE)
    again = S.ScenarioSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again == spec


def test_gps_error_has_the_configured_spread(drive):
    clean = S.gps_track(drive.truth.physical, replace(drive.spec, gps_noise_m=0.0))
    err = haversine_m(clean.latitudes, clean.longitudes, drive.gps.latitudes, drive.gps.longitudes)
    # radial error of a 2-D error with 3 m per axis: rms = 3 * sqrt(2)
    assert np.sqrt(np.mean(err**2)) == pytest.approx(3.0 * np.sqrt(2), rel=0.5)
    assert np.all(clean.timestamps == drive.gps.timestamps)


def test_styles_differ_in_pedal_dynamics():
    def pedal_change(style, seed):
        b = S.generate(S.make_scenario(seed, duration_s=180.0, style=style, layout_seed=0))
        s = normalize(extract_series(b.log, b.truth.key("accelerator")))
        _, x = align([s], 0.1)
        return np.mean(np.abs(np.diff(x[0])))

    smooth = [pedal_change(S.SMOOTH, k) for k in range(3)]
    aggressive = [pedal_change(S.AGGRESSIVE, k + 10) for k in range(3)]
    assert max(smooth) < min(aggressive)


def test_write_bundle(tmp_path, drive):
    paths = S.write_bundle(drive, tmp_path, "x")
    manifest = json.loads(paths["truth"].read_text())
    assert set(manifest["signals"]) == set(S.TARGET_SIGNALS)
    assert manifest["signals"]["velocity"]["location"] == str(drive.truth.key("velocity"))
    assert parse_log(paths["log"].read_text()).skipped == 0
