import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canlift.canlog import CanFrame, CanLog
from canlift.decomposer import (
    CandidateKey,
    CandidateSeries,
    bit_distribution,
    candidate_series,
    decompose,
    drop_reason,
    equivalents,
    extract_series,
    normalize,
    prune,
    window_bounds,
    windows,
)


def make_log(rows, can_id=0x100, dt=0.01):
    frames = [CanFrame(1.0 + i * dt, can_id, False, len(r), bytes(r)) for i, r in enumerate(rows)]
    return CanLog.from_frames(frames)


def series(raw, t=None, key=CandidateKey(1, 0)):
    raw = np.asarray(raw, dtype=np.int64)
    t = np.arange(len(raw)) * 0.01 + 1.0 if t is None else np.asarray(t, dtype=float)
    return CandidateSeries(key, t, raw)


def test_key_text_forms():
    assert str(CandidateKey(0x410, 1, 2)) == "0410:1-2"
    assert str(CandidateKey(0x510, 3)) == "0510:3"
    assert str(CandidateKey(0x410, 1, 2, True)) == "0410:1-2le"
    for text in ("0410:1-2", "0510:3", "0410:1-2le"):
        assert str(CandidateKey.parse(text)) == text
    for bad in ("0410:1-3", "0410:3le", "0900:1", "nonsense"):
        with pytest.raises(ValueError):
            CandidateKey.parse(bad)


def test_candidate_count_per_id():
    log = make_log([[i % 256] * 8 for i in range(10)])
    assert len(candidate_series(log)) == 8 + 7
    assert len(candidate_series(log, little_endian=True)) == 8 + 7 + 7


def test_byte_pair_decoding():
    log = make_log([[0x12, 0x34, 0x56]])
    by_key = {s.key: int(s.raw[0]) for s in candidate_series(log, little_endian=True)}
    assert by_key[CandidateKey(0x100, 0, 2)] == 0x1234
    assert by_key[CandidateKey(0x100, 0, 2, True)] == 0x3412
    assert by_key[CandidateKey(0x100, 2)] == 0x56


def test_minority_dlc_frames_ignored():
    frames = [CanFrame(1.0 + i, 0x100, False, 2, bytes([i, 0])) for i in range(5)]
    frames.append(CanFrame(10.0, 0x100, False, 1, b"\x07"))
    s = extract_series(CanLog.from_frames(frames), CandidateKey(0x100, 0))
    assert s.raw.tolist() == [0, 1, 2, 3, 4]


def test_prune_thresholds():
    assert drop_reason(series([5] * 50)) == "constant"
    assert drop_reason(series(np.arange(50) % 6)) == "low-variation"
    assert drop_reason(series(np.arange(50) % 7)) is None
    kept = prune([series([5] * 50), series(np.arange(50) % 7)], 7)
    assert len(kept) == 1


def test_prune_drops_pairs_with_a_constant_byte():
    hi_constant = series(0x0300 + np.arange(100), key=CandidateKey(1, 0, 2))
    both_vary = series(np.arange(100) * 257, key=CandidateKey(1, 0, 2))
    assert drop_reason(hi_constant) == "constant-byte"
    assert drop_reason(both_vary) is None
    assert drop_reason(hi_constant, drop_redundant_pairs=False) is None


def test_normalize_divides_by_max():
    s = normalize(series([0, 2, 4, 8]))
    assert s.normalized.tolist() == [0.0, 0.25, 0.5, 1.0]
    assert s.norm_max == 8
    with pytest.raises(ValueError):
        normalize(series([0, 0]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 65535), min_size=1, max_size=50).filter(lambda v: max(v) > 0))
def test_normalized_range(values):
    s = normalize(series(values))
    assert s.normalized.max() == 1.0
    assert s.normalized.min() >= 0.0


def test_scale_invariance_of_normalisation():
    base = np.array([0, 10, 20, 30, 40])
    assert np.allclose(normalize(series(base)).normalized, normalize(series(base * 3)).normalized)


def test_window_bounds_stride():
    starts = window_bounds(0.0, 10.0, 2.5, 0.25)
    assert np.allclose(np.diff(starts), 1.875)
    assert starts[-1] + 2.5 <= 10.0 + 1e-9
    assert len(window_bounds(0.0, 2.0, 2.5, 0.25)) == 0
    with pytest.raises(ValueError):
        window_bounds(0.0, 10.0, 2.5, 1.0)


def test_half_hour_at_100hz_gives_959_windows():
    assert len(window_bounds(0.0, 1800.0, 2.5, 0.25)) == 959


def test_windows_skip_flat_stretches():
    raw = np.concatenate([np.zeros(300, dtype=int), np.arange(300) % 50 + 1])
    ws = windows(normalize(series(raw)), 2.5, 0.25, 7)
    assert ws and all(w.distinct_count >= 7 for w in ws)
    assert all(w.t_start >= 1.0 + 0.5 for w in ws)
    # every value of a window lies inside [t_start, t_end)
    assert all(len(w.values) == 250 for w in ws)


def test_equivalents_of_a_byte():
    k = CandidateKey(0x200, 3)
    assert equivalents(k) == {k, CandidateKey(0x200, 3, 2), CandidateKey(0x200, 2, 2, True)}
    assert equivalents(CandidateKey(0x200, 0)) == {CandidateKey(0x200, 0), CandidateKey(0x200, 0, 2)}
    pair = CandidateKey(0x200, 3, 2)
    assert equivalents(pair) == {pair}


def test_decompose_keeps_varying_series_only():
    rows = [[i % 256, 7, (i * 3) % 256, 0] for i in range(400)]
    kept = {str(s.key) for s in decompose(make_log(rows))}
    assert "0100:0" in kept and "0100:2" in kept
    assert "0100:1" not in kept and "0100:3" not in kept
    assert "0100:0-1" not in kept  # low byte constant
    assert "0100:1-2" not in kept  # high byte constant


def test_bit_distribution_msb_first():
    log = make_log([[0x80, 0x01]] * 3 + [[0x00, 0x01]])
    bd = bit_distribution(log, 0x100)
    assert bd.probs[0] == 0.75
    assert bd.probs[15] == 1.0
    assert bd.probs[1:15].sum() == 0
    assert bd.to_csv().splitlines()[0] == "bit,probability"
