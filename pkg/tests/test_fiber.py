import numpy as np
import pytest

from coheq.fiber import (
    DivergenceError,
    LinkConfig,
    amplify,
    ase_spectral_density,
    dispersion_phase,
    propagate_link,
    ssfm_span,
)
from coheq.signal_core import DualPolWaveform, RngStream, fft_forward, fft_inverse


def lossless_cfg(**kw):
    base = dict(alpha_db_km=0.0, beta2_ps2_km=-21.0, gamma_w_km=1.3,
                span_length_km=50.0, spans=1, amp_gain_db=0.0,
                ssfm_step_km=0.5, noise_enabled=False)
    base.update(kw)
    return LinkConfig(**base)


def gaussian_pulse_wave(n=4096, fs=200e9, peak_w=2e-3):
    t = (np.arange(n) - n / 2) / fs
    x = np.sqrt(peak_w) * np.exp(-0.5 * (t / 50e-12) ** 2).astype(complex)
    y = 0.5 * np.sqrt(peak_w) * np.exp(-0.5 * ((t - 80e-12) / 70e-12) ** 2).astype(complex)
    return DualPolWaveform(x, y, fs)


def rms(a, b):
    return np.sqrt(np.mean(np.abs(a - b) ** 2))


class TestLinkConfig:
    def test_gain_must_compensate_loss(self):
        with pytest.raises(ValueError, match="compensate"):
            LinkConfig(alpha_db_km=0.2, span_length_km=50.0, amp_gain_db=9.0)

    def test_step_must_divide_span(self):
        with pytest.raises(ValueError, match="divide"):
            LinkConfig(ssfm_step_km=0.3, span_length_km=50.0)

    def test_defaults_are_consistent(self):
        cfg = LinkConfig()
        assert cfg.steps_per_span == 500
        assert cfg.total_length_km == 1000.0


class TestSsfmSpan:
    def test_all_disabled_is_identity(self):
        cfg = lossless_cfg(beta2_ps2_km=0.0, gamma_w_km=0.0)
        w = gaussian_pulse_wave()
        out = ssfm_span(w, cfg)
        assert rms(out.x, w.x) < 1e-12
        assert rms(out.y, w.y) < 1e-12

    def test_cw_nonlinear_phase(self):
        # analytic single-pol CW solution: pure phase rotation of
        # (8/9)*gamma*P*L = 0.57778 rad for 10 mW over 50 km
        cfg = lossless_cfg(ssfm_step_km=0.5)
        n = 1024
        w = DualPolWaveform(np.full(n, np.sqrt(10e-3), dtype=complex),
                            np.zeros(n, dtype=complex), 200e9)
        out = ssfm_span(w, cfg)
        expected = (8.0 / 9.0) * 1.3 * 10e-3 * 50.0
        rot = np.angle(out.x / w.x)
        assert np.allclose(np.abs(rot), expected, atol=1e-9)
        assert np.allclose(np.abs(out.x), np.abs(w.x), rtol=1e-12)

    def test_linear_propagation_matches_analytic_filter(self):
        cfg = lossless_cfg(gamma_w_km=0.0, ssfm_step_km=1.0)
        w = gaussian_pulse_wave()
        out = ssfm_span(w, cfg)
        phase = dispersion_phase(len(w), w.sample_rate, -21.0, 50.0)
        ref_x = fft_inverse(fft_forward(w.x) * np.exp(1j * phase))
        ref_y = fft_inverse(fft_forward(w.y) * np.exp(1j * phase))
        assert rms(out.x, ref_x) < 1e-10
        assert rms(out.y, ref_y) < 1e-10
        # spectrum magnitude untouched by the all-pass linear operator
        # (absolute floor covers bins at the double-precision noise level)
        spec_in = np.abs(fft_forward(w.x))
        spec_out = np.abs(fft_forward(out.x))
        assert np.allclose(spec_out, spec_in, rtol=1e-12, atol=1e-12 * spec_in.max())

    def test_lossless_energy_conservation(self):
        cfg = lossless_cfg(ssfm_step_km=1.0)
        w = gaussian_pulse_wave(peak_w=20e-3)
        out = ssfm_span(w, cfg)
        assert out.power() == pytest.approx(w.power(), rel=1e-10)

    def test_polarization_swap_symmetry(self):
        cfg = lossless_cfg()
        w = gaussian_pulse_wave()
        direct = ssfm_span(w, cfg)
        swapped = ssfm_span(DualPolWaveform(w.y, w.x, w.sample_rate), cfg)
        assert np.array_equal(swapped.x, direct.y)
        assert np.array_equal(swapped.y, direct.x)

    def test_step_size_convergence(self):
        coarse = lossless_cfg(span_length_km=2.0, ssfm_step_km=0.1, spans=1)
        fine = lossless_cfg(span_length_km=2.0, ssfm_step_km=0.05, spans=1)
        w = gaussian_pulse_wave(peak_w=10e-3)
        a = ssfm_span(w, coarse)
        b = ssfm_span(w, fine)
        assert rms(a.x, b.x) / np.sqrt(np.mean(np.abs(a.x) ** 2)) < 1e-4

    def test_divergence_is_reported(self):
        cfg = lossless_cfg()
        n = 1024
        w = DualPolWaveform(np.full(n, 1e200, dtype=complex),
                            np.zeros(n, dtype=complex), 200e9)
        with pytest.raises(DivergenceError, match="step"):
            ssfm_span(w, cfg)


class TestAmplify:
    def test_pure_gain(self):
        cfg = LinkConfig(noise_enabled=False)
        w = gaussian_pulse_wave()
        out = amplify(w, cfg, RngStream(0))
        assert out.power() / w.power() == pytest.approx(10.0, rel=1e-12)

    def test_noise_variance(self):
        cfg = LinkConfig(noise_enabled=True)
        n = 1 << 20
        fs = 200e9
        w = DualPolWaveform(np.zeros(n, dtype=complex), np.zeros(n, dtype=complex), fs)
        out = amplify(w, cfg, RngStream(4, 4))
        sigma2 = ase_spectral_density(cfg) * fs
        measured = out.power()  # both pols
        assert measured == pytest.approx(2.0 * sigma2, rel=0.02)

    def test_same_stream_is_bit_identical(self):
        cfg = LinkConfig(noise_enabled=True)
        w = gaussian_pulse_wave()
        a = amplify(w, cfg, RngStream(9, 1))
        b = amplify(w, cfg, RngStream(9, 1))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


class TestPropagateLink:
    def test_zero_spans_identity(self):
        cfg = LinkConfig(spans=0)
        w = gaussian_pulse_wave()
        out = propagate_link(w, cfg, RngStream(1))
        assert np.array_equal(out.x, w.x)

    def test_linear_link_equals_total_dispersion_filter(self):
        # loss and gain cancel exactly; the dispersive phase accumulates
        cfg = LinkConfig(alpha_db_km=0.2, amp_gain_db=10.0, gamma_w_km=0.0,
                         spans=4, ssfm_step_km=1.0, noise_enabled=False)
        w = gaussian_pulse_wave()
        out = propagate_link(w, cfg, RngStream(2))
        phase = dispersion_phase(len(w), w.sample_rate, -21.0, 200.0)
        ref = fft_inverse(fft_forward(w.x) * np.exp(1j * phase))
        scale = np.sqrt(np.mean(np.abs(w.x) ** 2))
        assert rms(out.x, ref) < 1e-9 * max(scale, 1e-30)

    def test_inverse_propagation_recovers_input(self):
        # run the same solver with negated parameters and inverted gain,
        # undoing each amplifier before its span, receiver side first
        cfg = LinkConfig(alpha_db_km=0.2, amp_gain_db=10.0, gamma_w_km=1.3,
                         spans=4, ssfm_step_km=0.5, noise_enabled=False)
        inv = LinkConfig(alpha_db_km=-0.2, amp_gain_db=-10.0, gamma_w_km=-1.3,
                         beta2_ps2_km=+21.0, spans=4, ssfm_step_km=0.5,
                         noise_enabled=False)
        w = gaussian_pulse_wave(peak_w=5e-3)
        fwd = propagate_link(w, cfg, RngStream(3))
        back = fwd
        for _ in range(cfg.spans):
            back = amplify(back, inv, RngStream(0))
            back = ssfm_span(back, inv)
        scale = np.sqrt(np.mean(np.abs(w.x) ** 2 + np.abs(w.y) ** 2))
        assert rms(back.x, w.x) < 1e-6 * scale
        assert rms(back.y, w.y) < 1e-6 * scale

    def test_noise_accumulates_per_span(self):
        cfg = LinkConfig(spans=5, ssfm_step_km=5.0, gamma_w_km=0.0,
                         noise_enabled=True)
        n = 1 << 14
        w = DualPolWaveform(np.zeros(n, dtype=complex), np.zeros(n, dtype=complex), 200e9)
        out = propagate_link(w, cfg, RngStream(6))
        # 5 amplifiers, noise from earlier spans is attenuated then re-amplified:
        # with exact loss compensation each contributes sigma2 per pol
        sigma2 = ase_spectral_density(cfg) * w.sample_rate
        assert out.power() == pytest.approx(2 * 5 * sigma2, rel=0.05)
