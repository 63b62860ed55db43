//! Signal conditioning: 50 Hz notch, band-pass, decimation to 64 Hz.
//!
//! All filters are IIR cascades of second-order sections applied
//! forward-backward, so the output has no group delay and feature windows
//! stay aligned with the stage annotations. The pipeline order is fixed:
//! notch → band-pass → downsample.
//!
//! Filters are designed from an analog Butterworth prototype via the
//! bilinear transform with frequency prewarping; the notch is the standard
//! constant-gain biquad.

use crate::recording::{Channel, Recording};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("frequency {f} Hz violates Nyquist limit for fs = {fs} Hz")]
    NyquistViolation { f: f64, fs: f64 },
    #[error("cannot decimate {fs_in} Hz to {fs_out} Hz: ratio is not a positive integer")]
    NonIntegerRatio { fs_in: f64, fs_out: f64 },
}

/// Declarative filter description, surfaced in the experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    Notch { f_center: f64, q: f64, fs: f64 },
    Bandpass { f_lo: f64, f_hi: f64, order: usize, fs: f64 },
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        match *self {
            FilterSpec::Notch { f_center, fs, .. } => {
                if f_center <= 0.0 || f_center >= fs / 2.0 {
                    return Err(DspError::NyquistViolation { f: f_center, fs });
                }
            }
            FilterSpec::Bandpass { f_lo, f_hi, fs, .. } => {
                if f_lo <= 0.0 || f_lo >= f_hi {
                    return Err(DspError::NyquistViolation { f: f_lo, fs });
                }
                if f_hi >= fs / 2.0 {
                    return Err(DspError::NyquistViolation { f: f_hi, fs });
                }
            }
        }
        Ok(())
    }

    pub fn design(&self) -> Result<Sos, DspError> {
        self.validate()?;
        match *self {
            FilterSpec::Notch { f_center, q, fs } => Ok(design_notch(f_center, q, fs)),
            FilterSpec::Bandpass { f_lo, f_hi, order, fs } => {
                Ok(design_butterworth(BandForm::Bandpass { lo: f_lo, hi: f_hi }, order, fs))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        (self.b0 + self.b1 * zi + self.b2 * zi * zi) / (1.0 + self.a1 * zi + self.a2 * zi * zi)
    }
}

/// A cascade of second-order sections with an associated settle length used
/// to size the reflect padding for zero-phase application.
#[derive(Debug, Clone)]
pub struct Sos {
    sections: Vec<Biquad>,
    settle: usize,
}

impl Sos {
    /// Single forward pass from zero initial state (not zero-phase).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for v in y.iter_mut() {
                let x0 = *v;
                let y0 = s.b0 * x0 + s1;
                s1 = s.b1 * x0 - s.a1 * y0 + s2;
                s2 = s.b2 * x0 - s.a2 * y0;
                *v = y0;
            }
        }
        y
    }

    /// Forward-backward (zero-phase) pass with odd-reflection padding of
    /// three settle lengths at each end.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = (3 * self.settle).min(x.len() - 1);
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        // Odd reflection around the endpoints removes startup transients.
        for i in 0..pad {
            ext.push(2.0 * x[0] - x[pad - i]);
        }
        ext.extend_from_slice(x);
        for i in 0..pad {
            ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
        }

        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    /// Complex frequency response of a single pass at `f` Hz.
    pub fn response_at(&self, f: f64, fs: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f / fs);
        self.sections.iter().map(|s| s.response(z)).product()
    }
}

/// Constant-gain biquad notch.
fn design_notch(f0: f64, q: f64, fs: f64) -> Sos {
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let section = Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * w0.cos() / a0,
        b2: 1.0 / a0,
        a1: -2.0 * w0.cos() / a0,
        a2: (1.0 - alpha) / a0,
    };
    // Ringing decays with time constant ~Q/(π f0).
    let settle = (fs * q / (PI * f0)).ceil() as usize + 1;
    Sos { sections: vec![section], settle }
}

enum BandForm {
    Lowpass { hi: f64 },
    Highpass { lo: f64 },
    Bandpass { lo: f64, hi: f64 },
}

/// Butterworth prototype poles for normalized cutoff 1 rad/s.
fn butterworth_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 + order as f64 + 1.0) / (2.0 * order as f64);
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn bilinear_pole(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Group digital poles into biquad denominators. Complex poles are paired
/// with their conjugates; real poles are paired together (one may remain as
/// a first-order section).
fn pole_sections(poles: &[Complex64]) -> Vec<(f64, f64)> {
    let tol = 1e-9;
    let mut sections = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for p in poles {
        if p.im > tol {
            sections.push((-2.0 * p.re, p.norm_sqr()));
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
        // Conjugates (im < -tol) are implied by their partners.
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut it = reals.chunks_exact(2);
    for pair in &mut it {
        sections.push((-(pair[0] + pair[1]), pair[0] * pair[1]));
    }
    if let [r] = it.remainder() {
        sections.push((-r, 0.0));
    }
    sections
}

/// Design a Butterworth filter as an SOS cascade.
fn design_butterworth(form: BandForm, order: usize, fs: f64) -> Sos {
    let proto = butterworth_poles(order);

    // Analog poles after the band transform, plus the count of zeros pinned
    // at s=0 (the rest sit at infinity and become z = -1 after bilinear).
    let (analog_poles, zeros_at_dc, f_char) = match form {
        BandForm::Lowpass { hi } => {
            let wc = prewarp(hi, fs);
            (proto.iter().map(|p| p * wc).collect::<Vec<_>>(), 0, hi)
        }
        BandForm::Highpass { lo } => {
            let wc = prewarp(lo, fs);
            (proto.iter().map(|p| wc / p).collect::<Vec<_>>(), order, lo)
        }
        BandForm::Bandpass { lo, hi } => {
            let w_lo = prewarp(lo, fs);
            let w_hi = prewarp(hi, fs);
            let w0sq = w_lo * w_hi;
            let bw = w_hi - w_lo;
            let mut poles = Vec::with_capacity(2 * order);
            for p in &proto {
                let half = p * bw / 2.0;
                let disc = (half * half - w0sq).sqrt();
                poles.push(half + disc);
                poles.push(half - disc);
            }
            (poles, order, lo)
        }
    };

    let digital_poles: Vec<Complex64> =
        analog_poles.iter().map(|&s| bilinear_pole(s, fs)).collect();
    let n_poles = digital_poles.len();
    let denominators = pole_sections(&digital_poles);

    // Numerators: zeros_at_dc zeros at z=1, the remaining n_poles-zeros_at_dc
    // at z=-1, dealt out across sections.
    let mut plus_one = zeros_at_dc;
    let mut minus_one = n_poles - zeros_at_dc;
    let mut sections = Vec::with_capacity(denominators.len());
    for (a1, a2) in denominators {
        let section_order = if a2 == 0.0 { 1 } else { 2 };
        let mut num = vec![1.0];
        for _ in 0..section_order {
            if plus_one > 0 {
                // multiply by (1 - z^-1)
                num = poly_mul(&num, &[1.0, -1.0]);
                plus_one -= 1;
            } else if minus_one > 0 {
                num = poly_mul(&num, &[1.0, 1.0]);
                minus_one -= 1;
            } else {
                num = poly_mul(&num, &[1.0, 0.0]);
            }
        }
        num.resize(3, 0.0);
        sections.push(Biquad { b0: num[0], b1: num[1], b2: num[2], a1, a2 });
    }

    let settle = (fs / f_char).ceil() as usize + 1;
    let mut sos = Sos { sections, settle };

    // Normalize overall gain to 1 at the band's reference frequency.
    let f_ref = match form {
        BandForm::Lowpass { .. } => 0.0,
        BandForm::Highpass { .. } => fs / 2.0,
        BandForm::Bandpass { lo, hi } => {
            let w0 = (prewarp(lo, fs) * prewarp(hi, fs)).sqrt();
            (fs / PI) * (w0 / (2.0 * fs)).atan()
        }
    };
    let gain = sos.response_at(f_ref, fs).norm();
    let scale = 1.0 / gain;
    sos.sections[0].b0 *= scale;
    sos.sections[0].b1 *= scale;
    sos.sections[0].b2 *= scale;
    sos
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Cancel 50 Hz power-line interference (zero-phase, quality factor 35).
///
/// Requires fs > 100 Hz so the notch frequency is representable.
pub fn notch_50(x: &[f64], fs: f64) -> Result<Vec<f64>, DspError> {
    if fs <= 100.0 {
        return Err(DspError::NyquistViolation { f: 50.0, fs });
    }
    let sos = FilterSpec::Notch { f_center: 50.0, q: 35.0, fs }.design()?;
    Ok(sos.filtfilt(x))
}

/// Zero-phase Butterworth band-pass (order-4 prototype, 8 poles).
pub fn bandpass(x: &[f64], fs: f64, lo: f64, hi: f64) -> Result<Vec<f64>, DspError> {
    let sos = FilterSpec::Bandpass { f_lo: lo, f_hi: hi, order: 4, fs }.design()?;
    Ok(sos.filtfilt(x))
}

/// Zero-phase Butterworth high-pass, used when a band's upper edge sits at
/// the Nyquist frequency and the band-pass form would be degenerate.
pub fn highpass(x: &[f64], fs: f64, lo: f64) -> Result<Vec<f64>, DspError> {
    if lo <= 0.0 || lo >= fs / 2.0 {
        return Err(DspError::NyquistViolation { f: lo, fs });
    }
    let sos = design_butterworth(BandForm::Highpass { lo }, 4, fs);
    Ok(sos.filtfilt(x))
}

/// Decimate by sample dropping. The band-pass stage already limits content
/// to 32 Hz, so no extra anti-alias filter is applied.
pub fn downsample(x: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>, DspError> {
    let ratio = fs_in / fs_out;
    if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(DspError::NonIntegerRatio { fs_in, fs_out });
    }
    let r = ratio.round() as usize;
    if r == 1 {
        return Ok(x.to_vec());
    }
    let out_len = x.len() / r;
    Ok((0..out_len).map(|i| x[i * r]).collect())
}

/// What a channel measures, deciding its band-pass edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Eeg,
    Eog,
    Emg,
}

impl SignalKind {
    pub fn band(self) -> (f64, f64) {
        match self {
            SignalKind::Eeg | SignalKind::Eog => (0.3, 32.0),
            SignalKind::Emg => (10.0, 32.0),
        }
    }
}

/// Target rate all channels are brought to before feature extraction.
pub const TARGET_FS: f64 = 64.0;

/// Condition one channel: notch (when fs admits it), band-pass, decimate.
///
/// Channels already at 64 Hz skip the notch (50 Hz is beyond their Nyquist)
/// and, because their band's upper edge coincides with Nyquist, get the
/// high-pass half of the band-pass instead.
pub fn preprocess_channel(ch: &Channel, kind: SignalKind) -> Result<Channel, DspError> {
    let (lo, hi) = kind.band();
    let mut x = if ch.fs > 100.0 {
        notch_50(&ch.samples, ch.fs)?
    } else {
        ch.samples.clone()
    };
    x = if hi < ch.fs / 2.0 {
        bandpass(&x, ch.fs, lo, hi)?
    } else {
        highpass(&x, ch.fs, lo)?
    };
    let samples = downsample(&x, ch.fs, TARGET_FS)?;
    Ok(Channel { name: ch.name.clone(), samples, fs: TARGET_FS })
}

/// Condition every channel of a recording; `kinds` aligns with
/// `rec.channels`.
pub fn preprocess_recording(rec: &Recording, kinds: &[SignalKind]) -> Result<Recording, DspError> {
    assert_eq!(rec.channels.len(), kinds.len(), "one SignalKind per channel");
    let channels = rec
        .channels
        .iter()
        .zip(kinds)
        .map(|(ch, &kind)| preprocess_channel(ch, kind))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Recording {
        subject_id: rec.subject_id.clone(),
        channels,
        stages: rec.stages.clone(),
        epoch_seconds: rec.epoch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, fs: f64, seconds: f64) -> Vec<f64> {
        let n = (fs * seconds) as usize;
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn db(ratio: f64) -> f64 {
        20.0 * ratio.log10()
    }

    #[test]
    fn notch_kills_50_hz() {
        let fs = 128.0;
        let x = sine(50.0, fs, 16.0);
        let y = notch_50(&x, fs).unwrap();
        assert!(rms(&y) < 0.032 * rms(&x), "residual rms {}", rms(&y));
    }

    #[test]
    fn notch_passes_10_hz_within_1_db() {
        let fs = 128.0;
        let x = sine(10.0, fs, 16.0);
        let y = notch_50(&x, fs).unwrap();
        assert!(db(rms(&y) / rms(&x)).abs() < 1.0);
    }

    #[test]
    fn notch_passband_ripple_below_1_db_outside_guard_band() {
        let fs = 128.0;
        for f in [10.0, 30.0, 47.9, 52.1, 60.0] {
            let x = sine(f, fs, 16.0);
            let y = notch_50(&x, fs).unwrap();
            assert!(
                db(rms(&y) / rms(&x)).abs() < 1.0,
                "ripple at {f} Hz: {} dB",
                db(rms(&y) / rms(&x))
            );
        }
    }

    #[test]
    fn notch_of_zero_signal_is_zero() {
        let y = notch_50(&vec![0.0; 512], 128.0).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_requires_fs_above_100() {
        assert!(matches!(
            notch_50(&[0.0; 64], 64.0),
            Err(DspError::NyquistViolation { .. })
        ));
    }

    #[test]
    fn bandpass_removes_dc_offset() {
        let fs = 128.0;
        let x = vec![5.0; (fs * 30.0) as usize];
        let y = bandpass(&x, fs, 0.3, 32.0).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 0.05, "residual mean {mean}");
    }

    #[test]
    fn bandpass_passes_20_hz_within_1_db() {
        let fs = 128.0;
        let x = sine(20.0, fs, 16.0);
        let y = bandpass(&x, fs, 10.0, 32.0).unwrap();
        assert!(db(rms(&y) / rms(&x)).abs() < 1.0);
    }

    #[test]
    fn bandpass_rejects_2_hz_in_emg_band() {
        let fs = 128.0;
        let x = sine(2.0, fs, 30.0);
        let y = bandpass(&x, fs, 10.0, 32.0).unwrap();
        assert!(rms(&y) < 0.1 * rms(&x), "residual rms {}", rms(&y));
    }

    #[test]
    fn bandpass_stopband_at_least_24_db_one_octave_out() {
        let fs = 128.0;
        // One octave below the 10 Hz edge.
        let x = sine(5.0, fs, 30.0);
        let y = bandpass(&x, fs, 10.0, 32.0).unwrap();
        assert!(db(rms(&y) / rms(&x)) < -24.0);
    }

    #[test]
    fn bandpass_rejects_nyquist_edge() {
        assert!(matches!(
            bandpass(&[0.0; 64], 64.0, 10.0, 32.0),
            Err(DspError::NyquistViolation { .. })
        ));
    }

    #[test]
    fn highpass_passes_20_and_rejects_2_at_64_hz() {
        let fs = 64.0;
        let pass = sine(20.0, fs, 16.0);
        let y = highpass(&pass, fs, 10.0).unwrap();
        assert!(db(rms(&y) / rms(&pass)).abs() < 1.0);

        let stop = sine(2.0, fs, 30.0);
        let y = highpass(&stop, fs, 10.0).unwrap();
        assert!(rms(&y) < 0.1 * rms(&stop));
    }

    #[test]
    fn downsample_halves_128_to_64() {
        let x = vec![1.0; 3840];
        let y = downsample(&x, 128.0, 64.0).unwrap();
        assert_eq!(y.len(), 1920);
    }

    #[test]
    fn downsample_at_same_rate_is_identity() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(downsample(&x, 64.0, 64.0).unwrap(), x);
    }

    #[test]
    fn downsample_rejects_non_integer_ratio() {
        assert!(matches!(
            downsample(&[0.0; 100], 100.0, 64.0),
            Err(DspError::NonIntegerRatio { .. })
        ));
    }

    #[test]
    fn filters_are_linear() {
        let fs = 128.0;
        let n = 2048;
        let mut state = 0x12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..n).map(|_| next()).collect();
        let y: Vec<f64> = (0..n).map(|_| next()).collect();
        let (a, b) = (2.5, -1.25);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(&u, &v)| a * u + b * v).collect();

        let sos = FilterSpec::Bandpass { f_lo: 0.3, f_hi: 32.0, order: 4, fs }
            .design()
            .unwrap();
        let fx = sos.filtfilt(&x);
        let fy = sos.filtfilt(&y);
        let fc = sos.filtfilt(&combo);
        for i in 0..n {
            let expect = a * fx[i] + b * fy[i];
            let scale = expect.abs().max(1.0);
            assert!((fc[i] - expect).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn zero_phase_peak_correlation_at_lag_zero() {
        let fs = 128.0;
        // Band-limited input: sum of in-band sines.
        let n = (fs * 20.0) as usize;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 4.0 * t).sin() + 0.7 * (2.0 * PI * 11.0 * t).sin()
                    + 0.4 * (2.0 * PI * 23.0 * t).sin()
            })
            .collect();
        let y = bandpass(&x, fs, 0.3, 32.0).unwrap();

        let max_lag = 32i64;
        let mut best = (0i64, f64::NEG_INFINITY);
        for lag in -max_lag..=max_lag {
            let mut acc = 0.0;
            for i in 0..n as i64 {
                let j = i + lag;
                if j >= 0 && (j as usize) < n {
                    acc += x[i as usize] * y[j as usize];
                }
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 0, "correlation peak at lag {}", best.0);
    }

    #[test]
    fn preprocess_channel_brings_everything_to_64_hz() {
        let eeg = Channel { name: "EEG".into(), samples: sine(10.0, 128.0, 8.0), fs: 128.0 };
        let emg = Channel { name: "EMG".into(), samples: sine(20.0, 64.0, 8.0), fs: 64.0 };
        let out_eeg = preprocess_channel(&eeg, SignalKind::Eeg).unwrap();
        let out_emg = preprocess_channel(&emg, SignalKind::Emg).unwrap();
        assert_eq!(out_eeg.fs, 64.0);
        assert_eq!(out_eeg.samples.len(), 512);
        assert_eq!(out_emg.fs, 64.0);
        assert_eq!(out_emg.samples.len(), 512);
    }
}
