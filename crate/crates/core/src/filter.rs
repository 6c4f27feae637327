//! IIR filter design (Butterworth via bilinear transform, biquad notch) and
//! zero-phase forward-backward application.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterKind {
    Bandpass { low_hz: f64, high_hz: f64 },
    Lowpass { cutoff_hz: f64 },
    Notch { freq_hz: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(flatten)]
    pub kind: FilterKind,
    /// Butterworth prototype order; ignored for notch (always one biquad).
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn bandpass(order: usize, low_hz: f64, high_hz: f64) -> Self {
        Self {
            kind: FilterKind::Bandpass { low_hz, high_hz },
            order,
            zero_phase: true,
        }
    }

    pub fn lowpass(order: usize, cutoff_hz: f64) -> Self {
        Self {
            kind: FilterKind::Lowpass { cutoff_hz },
            order,
            zero_phase: true,
        }
    }

    pub fn notch(freq_hz: f64, q: f64) -> Self {
        Self {
            kind: FilterKind::Notch { freq_hz, q },
            order: 2,
            zero_phase: true,
        }
    }

    fn validate(&self, fs: f64) -> Result<()> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::InvalidSpec(format!("sampling rate {fs} must be positive")));
        }
        let nyq = fs / 2.0;
        let check = |f: f64, what: &str| -> Result<()> {
            if !(f > 0.0 && f < nyq) {
                return Err(Error::InvalidSpec(format!(
                    "{what} {f} Hz must lie strictly inside (0, {nyq}) Hz"
                )));
            }
            Ok(())
        };
        match self.kind {
            FilterKind::Bandpass { low_hz, high_hz } => {
                check(low_hz, "low cutoff")?;
                check(high_hz, "high cutoff")?;
                if low_hz >= high_hz {
                    return Err(Error::InvalidSpec(format!(
                        "band edges out of order: {low_hz} >= {high_hz}"
                    )));
                }
            }
            FilterKind::Lowpass { cutoff_hz } => check(cutoff_hz, "cutoff")?,
            FilterKind::Notch { freq_hz, q } => {
                check(freq_hz, "notch frequency")?;
                if !(q > 0.0) {
                    return Err(Error::InvalidSpec(format!("notch Q {q} must be positive")));
                }
            }
        }
        if self.order == 0 {
            return Err(Error::InvalidSpec("filter order must be positive".into()));
        }
        Ok(())
    }
}

/// One second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Direct-form II transposed state that holds a unit step at steady state.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * y;
        let z1 = self.b[1] - self.a[1] * y + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirCoefficients {
    pub sections: Vec<Biquad>,
    /// Number of poles of the cascade.
    pub order: usize,
}

impl IirCoefficients {
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Single-pass magnitude `|H(e^{jw})|`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }

    /// Reflective padding length used by [`filtfilt_slice`].
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }

    /// Causal single-pass filtering with zero initial state.
    pub fn lfilter(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x, [0.0, 0.0]);
        }
    }

    fn run_with_edge_state(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        // each section starts in the steady state of a step of height x0
        // seen through the preceding sections
        let mut level = x0;
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            s.run(x, [z1 * level, z2 * level]);
            level *= s.dc_gain();
        }
    }
}

/// Design a Butterworth (or biquad notch) filter as second-order sections.
///
/// Butterworth designs use the bilinear transform with frequency prewarping;
/// each section is normalized to unit gain at the passband reference
/// frequency (DC for lowpass, the geometric band centre for bandpass).
pub fn design_butterworth(spec: &FilterSpec, fs: f64) -> Result<IirCoefficients> {
    spec.validate(fs)?;
    match spec.kind {
        FilterKind::Notch { freq_hz, q } => Ok(notch(freq_hz, q, fs)),
        FilterKind::Lowpass { cutoff_hz } => {
            let wc = prewarp(cutoff_hz, fs);
            let poles: Vec<Complex64> = prototype_poles(spec.order).map(|p| p * wc).collect();
            Ok(assemble(&poles, fs, SectionZeros::Lowpass, 0.0))
        }
        FilterKind::Bandpass { low_hz, high_hz } => {
            let w1 = prewarp(low_hz, fs);
            let w2 = prewarp(high_hz, fs);
            let w0 = (w1 * w2).sqrt();
            let bw = w2 - w1;
            let mut poles = Vec::with_capacity(2 * spec.order);
            for p in prototype_poles(spec.order) {
                let a = p * (bw / 2.0);
                let d = (a * a - w0 * w0).sqrt();
                poles.push(a + d);
                poles.push(a - d);
            }
            // digital frequency that the analog centre w0 maps onto
            let w_ref = 2.0 * (w0 / (2.0 * fs)).atan();
            Ok(assemble(&poles, fs, SectionZeros::Bandpass, w_ref))
        }
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn prototype_poles(order: usize) -> impl Iterator<Item = Complex64> {
    let n = order as f64;
    (0..order).map(move |k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
}

#[derive(Clone, Copy)]
enum SectionZeros {
    Lowpass,
    Bandpass,
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

fn assemble(analog_poles: &[Complex64], fs: f64, zeros: SectionZeros, w_ref: f64) -> IirCoefficients {
    const IMAG_EPS: f64 = 1e-9;
    let digital: Vec<Complex64> = analog_poles.iter().map(|&s| bilinear(s, fs)).collect();
    let mut complex_upper: Vec<Complex64> = digital
        .iter()
        .copied()
        .filter(|z| z.im > IMAG_EPS * z.norm().max(1.0))
        .collect();
    let mut real: Vec<f64> = digital
        .iter()
        .filter(|z| z.im.abs() <= IMAG_EPS * z.norm().max(1.0))
        .map(|z| z.re)
        .collect();
    complex_upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.total_cmp(b));

    let mut sections = Vec::new();
    for p in complex_upper {
        sections.push(Biquad {
            b: section_numerator(zeros, 2),
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (a, nz) = match *pair {
            [r1, r2] => ([1.0, -(r1 + r2), r1 * r2], 2),
            [r] => ([1.0, -r, 0.0], 1),
            _ => unreachable!(),
        };
        sections.push(Biquad {
            b: section_numerator(zeros, nz),
            a,
        });
    }
    for s in &mut sections {
        let g = s.response(w_ref).norm();
        for b in &mut s.b {
            *b /= g;
        }
    }
    IirCoefficients {
        sections,
        order: analog_poles.len(),
    }
}

fn section_numerator(zeros: SectionZeros, n_poles: usize) -> [f64; 3] {
    match (zeros, n_poles) {
        (SectionZeros::Lowpass, 2) => [1.0, 2.0, 1.0],
        (SectionZeros::Lowpass, _) => [1.0, 1.0, 0.0],
        // one zero at z=1 and one at z=-1 per pole pair
        (SectionZeros::Bandpass, 2) => [1.0, 0.0, -1.0],
        // unpaired real pole: a single zero at z=1 keeps DC rejection
        (SectionZeros::Bandpass, _) => [1.0, -1.0, 0.0],
    }
}

fn notch(f0: f64, q: f64, fs: f64) -> IirCoefficients {
    let w0 = 2.0 * PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    IirCoefficients {
        sections: vec![Biquad {
            b: [1.0 / a0, -2.0 * cw / a0, 1.0 / a0],
            a: [1.0, -2.0 * cw / a0, (1.0 - alpha) / a0],
        }],
        order: 2,
    }
}

/// Zero-phase forward-backward filtering of one trace with odd reflective
/// padding of `3 * order` samples at both ends.
pub fn filtfilt_slice(x: &[f64], coeffs: &IirCoefficients) -> Result<Vec<f64>> {
    let pad = coeffs.pad_len();
    let n = x.len();
    if n <= pad {
        return Err(Error::InvalidInput(format!(
            "signal of {n} samples is too short for edge padding of {pad}"
        )));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let first = x[0];
    let last = x[n - 1];
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    coeffs.run_with_edge_state(&mut ext);
    ext.reverse();
    coeffs.run_with_edge_state(&mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Forward-backward filtering of every channel of a recording.
pub fn filtfilt(x: &SignalMatrix, coeffs: &IirCoefficients) -> Result<SignalMatrix> {
    let data = x.data();
    let (s, c) = data.dim();
    let columns: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let col: Vec<f64> = data.column(ch).to_vec();
            filtfilt_slice(&col, coeffs)
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((s, c));
    for (ch, col) in columns.into_iter().enumerate() {
        out.column_mut(ch).assign(&ndarray::Array1::from(col));
    }
    x.with_data(out)
}

/// Design and apply a filter according to its `zero_phase` flag.
pub fn apply(x: &SignalMatrix, spec: &FilterSpec) -> Result<SignalMatrix> {
    let coeffs = design_butterworth(spec, x.fs())?;
    if spec.zero_phase {
        filtfilt(x, &coeffs)
    } else {
        let mut data = x.data().to_owned();
        for mut col in data.columns_mut() {
            let mut v = col.to_vec();
            coeffs.lfilter(&mut v);
            col.assign(&ndarray::Array1::from(v));
        }
        x.with_data(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FS: f64 = 2052.52;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn bandpass_unit_gain_mid_band() {
        let c = design_butterworth(&FilterSpec::bandpass(4, 10.0, 500.0), FS).unwrap();
        assert_eq!(c.order, 8);
        assert_eq!(c.sections.len(), 4);
        assert!((c.magnitude(100.0, FS) - 1.0).abs() <= 0.01);
        assert!(c.magnitude(0.0, FS) < 1e-12);
        assert!(c.magnitude(FS / 2.0 - 1e-9, FS) < 1e-6);
    }

    #[test]
    fn butterworth_half_power_at_cutoffs() {
        let c = design_butterworth(&FilterSpec::bandpass(4, 10.0, 500.0), FS).unwrap();
        assert_abs_diff_eq!(c.magnitude(10.0, FS), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(c.magnitude(500.0, FS), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        let lp = design_butterworth(&FilterSpec::lowpass(4, 5.0), 100.0).unwrap();
        assert_abs_diff_eq!(lp.magnitude(0.0, 100.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.magnitude(5.0, 100.0), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn odd_orders_supported() {
        let lp = design_butterworth(&FilterSpec::lowpass(3, 20.0), 200.0).unwrap();
        assert_eq!(lp.order, 3);
        assert_abs_diff_eq!(lp.magnitude(0.0, 200.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.magnitude(20.0, 200.0), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        let bp = design_butterworth(&FilterSpec::bandpass(3, 20.0, 40.0), 200.0).unwrap();
        assert_abs_diff_eq!(bp.magnitude((20.0f64 * 40.0).sqrt(), 200.0), 1.0, epsilon = 0.01);
        assert!(bp.magnitude(0.0, 200.0) < 1e-12);
    }

    #[test]
    fn cutoff_at_nyquist_rejected() {
        let err = design_butterworth(&FilterSpec::lowpass(4, 5.0), 10.0).unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
        assert!(design_butterworth(&FilterSpec::bandpass(4, 500.0, 10.0), FS).is_err());
        assert!(design_butterworth(&FilterSpec::lowpass(0, 5.0), 100.0).is_err());
    }

    #[test]
    fn notch_depth_and_shoulder() {
        let c = design_butterworth(&FilterSpec::notch(60.0, 30.0), FS).unwrap();
        assert!(c.magnitude(60.0, FS) <= 0.01);
        assert!(c.magnitude(50.0, FS) >= 0.9);
    }

    #[test]
    fn filtfilt_all_zero_stays_zero() {
        let c = design_butterworth(&FilterSpec::bandpass(4, 10.0, 500.0), FS).unwrap();
        let y = filtfilt_slice(&vec![0.0; 500], &c).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn filtfilt_too_short() {
        let c = design_butterworth(&FilterSpec::bandpass(4, 10.0, 500.0), FS).unwrap();
        assert!(matches!(
            filtfilt_slice(&vec![1.0; c.pad_len()], &c),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn lowpass_passes_constant_exactly() {
        let c = design_butterworth(&FilterSpec::lowpass(4, 5.0), 100.0).unwrap();
        let y = filtfilt_slice(&vec![3.5; 400], &c).unwrap();
        for v in y {
            assert_abs_diff_eq!(v, 3.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn forward_backward_squares_magnitude() {
        // steady-state amplitude after filtfilt equals |H|^2
        let fs = 1000.0;
        let c = design_butterworth(&FilterSpec::lowpass(4, 50.0), fs).unwrap();
        let x = sine(45.0, fs, 6000);
        let y = filtfilt_slice(&x, &c).unwrap();
        let h2 = c.magnitude(45.0, fs).powi(2);
        let mid = &y[2000..4000];
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_abs_diff_eq!(amp, h2, epsilon = 2e-3);
    }

    #[test]
    fn lfilter_matches_causal_recursion() {
        // single-section lowpass against the direct difference equation
        let c = design_butterworth(&FilterSpec::lowpass(2, 10.0), 100.0).unwrap();
        let s = c.sections[0];
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut y = x.clone();
        c.lfilter(&mut y);
        let mut reference = vec![0.0; x.len()];
        for n in 0..x.len() {
            let xm = |k: usize| if n >= k { x[n - k] } else { 0.0 };
            let ym = |k: usize| if n >= k { reference[n - k] } else { 0.0 };
            reference[n] = s.b[0] * xm(0) + s.b[1] * xm(1) + s.b[2] * xm(2) - s.a[1] * ym(1) - s.a[2] * ym(2);
        }
        for (u, v) in y.iter().zip(&reference) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }
}
