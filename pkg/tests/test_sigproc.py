import numpy as np
import pytest

from impact_denoise.core_types import ImpactRecord, KinematicsTrace
from impact_denoise.sigproc import (
    align_by_xcorr,
    augment,
    cumulative_integral,
    design_butterworth,
    differentiate,
    filtfilt,
    frequency_response,
    peak_anchored_window,
    window_count,
)


def raised_cosine(length, center, half_width):
    x = np.zeros(length)
    idx = np.arange(length)
    mask = np.abs(idx - center) <= half_width
    x[mask] = 0.5 * (1.0 + np.cos(np.pi * (idx[mask] - center) / half_width))
    return x


def db(h):
    return 20.0 * np.log10(np.abs(h))


class TestDesign:
    def test_dc_gain_is_unity(self):
        for order in (1, 2, 5, 9, 12):
            filt = design_butterworth(order, 160.0, 1000.0)
            assert abs(abs(frequency_response(filt, 0.0)[0]) - 1.0) < 1e-9

    def test_half_power_at_cutoff(self):
        filt = design_butterworth(5, 160.0, 1000.0)
        level = db(frequency_response(filt, 160.0))[0]
        assert level == pytest.approx(-3.0103, abs=0.1)

    def test_rolloff_slope_matches_order(self):
        # 2x and 4x the cutoff must stay below Nyquist, hence the 20 Hz design
        filt = design_butterworth(5, 20.0, 1000.0)
        d = db(frequency_response(filt, [40.0, 80.0]))
        slope = (d[1] - d[0]) / np.log10(2.0)
        assert slope == pytest.approx(-100.0, abs=5.0)

    def test_poles_inside_unit_circle(self):
        filt = design_butterworth(9, 160.0, 1000.0)
        for _, _, _, a1, a2 in filt.sections:
            assert np.all(np.abs(np.roots([1.0, a1, a2])) < 1.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            design_butterworth(0, 160.0, 1000.0)
        with pytest.raises(ValueError):
            design_butterworth(13, 160.0, 1000.0)
        with pytest.raises(ValueError):
            design_butterworth(5, 500.0, 1000.0)
        with pytest.raises(ValueError):
            design_butterworth(5, -1.0, 1000.0)


class TestFiltfilt:
    def setup_method(self):
        self.filt = design_butterworth(5, 160.0, 1000.0)

    def test_constant_passes(self):
        y = filtfilt(self.filt, np.full(200, 3.7))
        assert np.max(np.abs(y - 3.7)) < 1e-12

    def test_zero_phase_preserves_pulse_argmax(self):
        x = raised_cosine(300, 150, 40)
        y = filtfilt(self.filt, x)
        assert int(np.argmax(y)) == 150

    def test_stopband_attenuation_two_passes(self):
        # 400 Hz sits deep in the stop band; interior avoids edge transients
        t = np.arange(1000) / 1000.0
        x = np.sin(2 * np.pi * 400.0 * t)
        y = filtfilt(self.filt, x)
        core = slice(100, -100)
        ratio = np.sqrt(np.mean(y[core] ** 2)) / np.sqrt(np.mean(x**2))
        assert ratio < 0.01

    def test_linearity(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=300), rng.normal(size=300)
        lhs = filtfilt(self.filt, 2.5 * a - 1.3 * b)
        rhs = 2.5 * filtfilt(self.filt, a) - 1.3 * filtfilt(self.filt, b)
        assert np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)) < 1e-9

    def test_time_reversal_symmetry(self):
        x = raised_cosine(400, 200, 40)
        fwd = filtfilt(self.filt, x[::-1])
        rev = filtfilt(self.filt, x)[::-1]
        assert np.max(np.abs(fwd - rev)) / np.max(np.abs(rev)) < 1e-12

    def test_time_reversal_symmetry_interior_on_noise(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=400)
        fwd = filtfilt(self.filt, x[::-1])
        rev = filtfilt(self.filt, x)[::-1]
        core = slice(50, -50)
        assert np.max(np.abs(fwd[core] - rev[core])) / np.max(np.abs(x)) < 1e-9

    def test_rejects_short_series(self):
        # padding is 3 * (2*order + 1) = 33 samples for order 5
        with pytest.raises(ValueError):
            filtfilt(self.filt, np.zeros(33))
        assert filtfilt(self.filt, np.zeros(34)).shape == (34,)

    def test_output_length_equals_input_length(self):
        for n in (40, 111, 500):
            assert filtfilt(self.filt, np.random.default_rng(2).normal(size=n)).shape == (n,)


def pulse_trace(length, center, amplitude=10.0, channel=0):
    data = np.zeros((length, 6))
    data[:, channel] = amplitude * raised_cosine(length, center, 15)
    return KinematicsTrace(data)


class TestAlign:
    def test_identical_traces_zero_shift(self):
        trace = pulse_trace(200, 100)
        result = align_by_xcorr(trace, trace, 20)
        assert result.shift == 0
        assert not result.degenerate
        assert np.array_equal(result.noisy.samples, result.reference.samples)

    def test_recovers_known_delay(self):
        # reference leads: its content appears 7 samples earlier
        reference = pulse_trace(200, 100)
        noisy = pulse_trace(200, 107)
        result = align_by_xcorr(noisy, reference, 20)
        assert result.shift == -7
        assert not result.degenerate
        # aligned peaks coincide
        assert int(np.argmax(result.noisy.samples[:, 0])) == int(
            np.argmax(result.reference.samples[:, 0])
        )
        assert len(result.noisy) == len(result.reference) == 193

    def test_all_zero_noisy_is_degenerate(self):
        noisy = KinematicsTrace(np.zeros((200, 6)))
        reference = pulse_trace(200, 100)
        result = align_by_xcorr(noisy, reference, 20)
        assert result.shift == 0
        assert result.degenerate

    def test_max_shift_validation(self):
        trace = pulse_trace(100, 50)
        with pytest.raises(ValueError):
            align_by_xcorr(trace, trace, 50)


class TestDifferentiate:
    def test_unit_ramp(self):
        d = differentiate(np.arange(100) / 1000.0, 1000.0)
        assert np.allclose(d, 1.0, atol=1e-9)

    def test_constant_is_zero(self):
        assert np.allclose(differentiate(np.full(50, 2.3), 1000.0), 0.0)

    def test_sine_derivative_accuracy(self):
        # 1001 samples end on integer cycles, keeping the one-sided ends benign
        t = np.arange(1001) / 1000.0
        x = np.sin(2 * np.pi * 10.0 * t)
        d = differentiate(x, 1000.0)
        true = 2 * np.pi * 10.0 * np.cos(2 * np.pi * 10.0 * t)
        assert np.max(np.abs(d - true)) < 0.005 * 2 * np.pi * 10.0

    def test_rejects_short(self):
        with pytest.raises(ValueError):
            differentiate(np.zeros(2), 1000.0)


class TestCumulativeIntegral:
    def test_constant(self):
        out = cumulative_integral(np.ones(100), 1000.0)
        assert out[0] == 0.0
        assert out[-1] == pytest.approx(0.099, abs=1e-12)

    def test_all_zero(self):
        assert np.all(cumulative_integral(np.zeros(10), 1000.0) == 0.0)

    def test_ramp(self):
        t = np.arange(1000) / 1000.0
        ramp = t / t[-1]
        assert cumulative_integral(ramp, 1000.0)[-1] == pytest.approx(0.5, abs=1e-3)

    def test_inverse_of_differentiate_for_smooth_signals(self):
        t = np.arange(2001) / 1000.0
        x = np.sin(2 * np.pi * 0.2 * t)
        back = differentiate(cumulative_integral(x, 1000.0), 1000.0)
        interior = slice(1, -1)
        assert np.max(np.abs(back[interior] - x[interior])) < 1e-6 * np.max(np.abs(x))


def paired_record(length, impact_id="imp_000"):
    rng = np.random.default_rng(0)
    ref = rng.normal(size=(length, 6))
    return ImpactRecord(
        impact_id=impact_id,
        noisy=KinematicsTrace(ref + 0.1 * rng.normal(size=(length, 6))),
        reference=KinematicsTrace(ref),
    )


class TestAugment:
    def test_window_counts(self):
        assert window_count(200) == 20
        assert window_count(100) == 1
        assert window_count(104) == 1
        assert window_count(199) == 19

    def test_closed_form_count_property(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            length = int(rng.integers(100, 400))
            assert window_count(length) == max(1, (length - 100) // 5)

    def test_examples_per_component(self):
        record = paired_record(200)
        examples = augment(record)
        assert len(examples) == 20 * 6
        offsets = sorted({e.offset_samples for e in examples})
        assert offsets == [5 * k for k in range(20)]
        one = examples[0]
        assert len(one.input) == 100 and len(one.target) == 100
        assert one.source_id == "imp_000"

    def test_window_contents_match_traces(self):
        record = paired_record(150)
        examples = augment(record)
        for e in examples:
            ch = e.component.channel
            off = e.offset_samples
            assert np.array_equal(e.input, record.noisy.samples[off : off + 100, ch])
            assert np.array_equal(e.target, record.reference.samples[off : off + 100, ch])

    def test_rejects_short_and_unpaired(self):
        with pytest.raises(ValueError):
            augment(paired_record(99))
        record = paired_record(150)
        record = ImpactRecord(record.impact_id, record.noisy, None)
        with pytest.raises(ValueError):
            augment(record)


class TestPeakWindow:
    def test_anchors_peak_at_sample_20(self):
        x = np.zeros(200)
        x[90] = 5.0
        start, stop = peak_anchored_window(x)
        assert (start, stop) == (70, 170)
        assert int(np.argmax(np.abs(x[start:stop]))) == 20

    def test_clamps_at_edges(self):
        x = np.zeros(150)
        x[5] = 1.0
        assert peak_anchored_window(x) == (0, 100)
        y = np.zeros(150)
        y[140] = 1.0
        assert peak_anchored_window(y) == (50, 150)
