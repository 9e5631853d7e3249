import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsrnet import data
from lsrnet.data import (
    DatasetContainer, NoiseSpec, SegmentationSpec, achieved_snr_db, inject_noise, read_container, segment_signal,
    split_counts, split_dataset, synth_generate, write_container,
)
from lsrnet.errors import ContractViolation, FormatError


def test_window_lengths():
    assert SegmentationSpec(900, 64000).window_length == 4266
    assert SegmentationSpec(1500, 64000).window_length == 2560


def test_segment_count_and_centre_crop():
    sig = np.arange(256000, dtype=float)
    segs = segment_signal(sig, SegmentationSpec(900, 64000))
    assert segs.shape == (60, 4096)
    offset = (4266 - 4096) // 2
    np.testing.assert_array_equal(segs[1], sig[4266 + offset : 4266 + offset + 4096])


def test_short_signal_gives_no_segments():
    assert segment_signal(np.ones(100), SegmentationSpec()).shape == (0, 4096)


def test_invalid_segmentation_spec():
    for spec in (SegmentationSpec(rpm=0), SegmentationSpec(q=0), SegmentationSpec(crop_to=5000),
                 SegmentationSpec(crop_to=1000)):
        with pytest.raises(ContractViolation):
            segment_signal(np.ones(10000), spec)


def test_noise_power_examples():
    assert data.noise_power(1.0, 0.0) == 1.0
    assert data.noise_power(1.0, -8.0) == pytest.approx(10**0.8)
    assert data.noise_power(1.0, -8.0) == pytest.approx(6.3096, abs=1e-4)
    assert data.noise_power(1.0, 6.0) == pytest.approx(0.2512, abs=1e-4)


def unit_sine(n=4096):
    return np.sqrt(2) * np.sin(2 * np.pi * 50 * np.arange(n) / 64000)


@pytest.mark.parametrize("kind", ["gaussian", "laplace"])
@pytest.mark.parametrize("snr", [-8.0, -2.0, 0.0, 6.0])
def test_achieved_snr_per_segment_and_mean(kind, snr):
    clean = unit_sine()
    achieved = [achieved_snr_db(clean, inject_noise(clean, NoiseSpec(kind, snr, seed))) for seed in range(100)]
    assert max(abs(a - snr) for a in achieved) <= 0.3
    assert abs(np.mean(achieved) - snr) <= 0.05


@pytest.mark.parametrize("kind", ["gaussian", "laplace"])
def test_uncalibrated_draws_hit_target_on_average(kind):
    clean = unit_sine()
    achieved = [
        achieved_snr_db(clean, inject_noise(clean, NoiseSpec(kind, -8.0, seed, calibrate=False)))
        for seed in range(100)
    ]
    assert abs(np.mean(achieved) + 8.0) <= 0.05


def test_laplace_variance():
    power = 3.0
    b = np.sqrt(power / 2)
    x = data.draw_noise("laplace", power, 10**6, np.random.default_rng(0))
    assert abs(x.var() / (2 * b * b) - 1) < 0.05


def test_noise_deterministic_and_per_segment():
    clean = unit_sine()
    a = inject_noise(clean, NoiseSpec("gaussian", 0.0, 7), index=3)
    assert np.array_equal(a, inject_noise(clean, NoiseSpec("gaussian", 0.0, 7), index=3))
    assert not np.array_equal(a, inject_noise(clean, NoiseSpec("gaussian", 0.0, 7), index=4))


def test_noise_none_and_zero_segment():
    clean = unit_sine()
    assert np.array_equal(inject_noise(clean, NoiseSpec("none", 99.0)), clean)
    with pytest.raises(ContractViolation):
        inject_noise(np.zeros(16), NoiseSpec("gaussian", 0.0))


def test_split_counts():
    assert split_counts(100) == (80, 10, 10)
    assert split_counts(10) == (8, 1, 1)
    assert split_counts(5) == (4, 0, 1)


def labelled(n, classes=3):
    return DatasetContainer(np.arange(n, dtype=np.float32)[:, None] * np.ones((1, 4), np.float32),
                            np.arange(n) % classes, classes)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_split_disjoint_exhaustive_stable(n, classes, seed):
    d = labelled(n, classes)
    parts = split_dataset(d, seed)
    assert tuple(len(p) for p in parts) == split_counts(n)
    ids = np.concatenate([p.samples[:, 0] for p in parts])
    assert sorted(ids.tolist()) == list(range(n))
    again = split_dataset(d, seed)
    for a, b in zip(parts, again):
        assert np.array_equal(a.samples, b.samples)


def test_split_is_stratified():
    train, val, test = split_dataset(labelled(300), 0)
    for part, each in ((train, 80), (val, 10), (test, 10)):
        assert np.bincount(part.labels, minlength=3).tolist() == [each] * 3


def test_split_empty_rejected():
    with pytest.raises(ContractViolation):
        split_dataset(DatasetContainer(np.zeros((0, 4)), np.zeros(0), 3), 0)


def test_synth_counts_and_determinism():
    d = synth_generate(3, 10, 4096, 64000, seed=4)
    assert len(d) == 30 and np.bincount(d.labels).tolist() == [10, 10, 10]
    assert write_container(d) == write_container(synth_generate(3, 10, 4096, 64000, seed=4))
    with pytest.raises(ContractViolation):
        synth_generate(3, 10, 1000, 64000, 0)


def envelope_period(x):
    env = x * x
    env = env - env.mean()
    ac = np.correlate(env, env, "full")[env.size - 1 :]
    lo = 100
    return lo + int(np.argmax(ac[lo:1500]))


def test_synth_classes_have_distinct_periodicities():
    d = synth_generate(3, 6, 4096, 64000, seed=0)
    periods = {k: [envelope_period(x) for x in d.samples[d.labels == k]] for k in (1, 2)}
    for k, found in periods.items():
        expected = 64000 / data.characteristic_hz(k)
        assert all(abs(p - expected) <= 3 for p in found), (k, found)
    assert set(periods[1]).isdisjoint(periods[2])


def test_container_round_trip():
    d = synth_generate(2, 3, 512, 64000, seed=1)
    blob = write_container(d)
    back = read_container(blob)
    assert np.array_equal(back.samples, d.samples) and np.array_equal(back.labels, d.labels)
    assert write_container(back) == blob


def test_empty_container_is_header_plus_crc():
    blob = write_container(DatasetContainer(np.zeros((0, 512)), np.zeros(0), 3))
    assert len(blob) == 20 + 4
    assert blob[:4] == b"LSRD"
    assert len(read_container(blob)) == 0


def test_container_corruption_every_byte():
    blob = write_container(synth_generate(2, 2, 512, 64000, seed=1))
    for i in range(len(blob) - 4):
        bad = bytearray(blob)
        bad[i] ^= 0x5A
        with pytest.raises(FormatError):
            read_container(bytes(bad))


def test_container_header_errors_name_offset():
    blob = write_container(synth_generate(2, 1, 512, 64000, seed=1))
    with pytest.raises(FormatError, match="offset 0"):
        read_container(b"LSRX" + blob[4:])
    with pytest.raises(FormatError, match="offset 4"):
        read_container(blob[:4] + b"\x07" + blob[5:])
    with pytest.raises(FormatError):
        read_container(blob[:-9])


def test_add_noise_records_provenance():
    d = synth_generate(3, 2, 4096, 64000, seed=0)
    noisy = data.add_noise(d, NoiseSpec("laplace", -4.0, 3))
    assert noisy.meta["noise"] == "laplace snr=-4dB seed=3"
    for i in range(len(d)):
        assert abs(achieved_snr_db(d.samples[i], noisy.samples[i]) + 4.0) < 0.3
