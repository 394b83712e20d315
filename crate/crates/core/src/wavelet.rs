//! Discretized continuous wavelet transform with Gaussian-derivative mother
//! wavelets.
//!
//! The transform correlates the signal with scaled copies of the n-th
//! derivative of a Gaussian density, evaluated by a Riemann sum at signal
//! resolution with the kernel truncated at ±6sσ. Coefficient magnitudes form
//! the spectrogram consumed column by column (highest scale first) by the
//! peak detectors.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::{DataItem, DataItemSchema, FieldValue};

/// Uniformly sampled signal.
#[derive(Debug, Clone)]
pub struct Signal {
    times: Vec<f64>,
    values: Vec<f64>,
    dt: f64,
}

/// Spacing jitter tolerance, in seconds.
const SPACING_TOL: f64 = 1e-9;

impl Signal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Signal> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Signal(
                "signal needs matching, nonempty time and value vectors".into(),
            ));
        }
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        if times.len() > 1 && dt <= 0.0 {
            return Err(Error::Signal("sample times must be strictly increasing".into()));
        }
        for i in 1..times.len() {
            let step = times[i] - times[i - 1];
            if step <= 0.0 {
                return Err(Error::Signal("sample times must be strictly increasing".into()));
            }
            if (step - dt).abs() > SPACING_TOL {
                return Err(Error::Signal(format!(
                    "non-uniform sample spacing at index {i}: {step} vs {dt}"
                )));
            }
        }
        Ok(Signal { times, values, dt })
    }

    /// Signal from values at uniform spacing `dt` starting at t = 0.
    pub fn from_values(values: Vec<f64>, dt: f64) -> Result<Signal> {
        if dt <= 0.0 {
            return Err(Error::Signal("sample spacing must be positive".into()));
        }
        let times = (0..values.len()).map(|i| i as f64 * dt).collect();
        Signal::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise absolute value (rectification).
    pub fn rectified(&self) -> Signal {
        Signal {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v.abs()).collect(),
            dt: self.dt,
        }
    }
}

/// Gaussian-derivative mother wavelet: order n >= 1, width σ > 0, zero mean.
#[derive(Debug, Clone, Copy)]
pub struct WaveletSpec {
    pub order: u32,
    pub sigma: f64,
}

impl WaveletSpec {
    pub fn new(order: u32, sigma: f64) -> Result<WaveletSpec> {
        if order == 0 {
            return Err(Error::Config("wavelet order must be at least 1".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config("wavelet width must be positive".into()));
        }
        Ok(WaveletSpec { order, sigma })
    }
}

/// Kernel truncation radius in units of sσ.
pub const SUPPORT_RADIUS: f64 = 6.0;

/// Kernel half-width in samples at one scale: the kernel covers offsets
/// |k| <= floor(6sσ/Δt).
pub fn support_radius_samples(spec: &WaveletSpec, scale: f64, dt: f64) -> i64 {
    (SUPPORT_RADIUS * scale * spec.sigma / dt).floor() as i64
}

/// Probabilists' Hermite polynomial He_n(x).
fn hermite(n: u32, x: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = x;
    for k in 1..n {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// n-th derivative of the Gaussian density at `t`:
/// (-1)^n σ^{-n} He_n(t/σ) G_{0,σ}(t).
pub fn mother_wavelet(spec: &WaveletSpec, t: f64) -> f64 {
    let s = spec.sigma;
    let x = t / s;
    let gauss = (-0.5 * x * x).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let sign = if spec.order % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.powi(-(spec.order as i32)) * hermite(spec.order, x) * gauss
}

/// Scaled wavelet Ψ_s(t) = ψ(t/s)/√s.
pub fn scaled_wavelet(spec: &WaveletSpec, scale: f64, t: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Config("scale must be positive".into()));
    }
    Ok(mother_wavelet(spec, t / scale) / scale.sqrt())
}

/// Strictly increasing positive analysis scales.
#[derive(Debug, Clone)]
pub struct ScaleGrid {
    scales: Vec<f64>,
}

impl ScaleGrid {
    pub fn new(scales: Vec<f64>) -> Result<ScaleGrid> {
        if scales.is_empty() {
            return Err(Error::Config("scale grid must be nonempty".into()));
        }
        if !(scales[0] > 0.0) {
            return Err(Error::Config("scales must be positive".into()));
        }
        for i in 1..scales.len() {
            if scales[i] <= scales[i - 1] {
                return Err(Error::Config("scales must be strictly increasing".into()));
            }
        }
        Ok(ScaleGrid { scales })
    }

    /// Integer scales 1..=n.
    pub fn integers(n: usize) -> ScaleGrid {
        ScaleGrid {
            scales: (1..=n).map(|k| k as f64).collect(),
        }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-based index of the given scale value.
    pub fn index_of(&self, scale: f64) -> Result<usize> {
        self.scales
            .iter()
            .position(|&s| s == scale)
            .map(|i| i + 1)
            .ok_or_else(|| Error::Config(format!("scale {scale} is not on the grid")))
    }
}

/// Signed transform coefficients, one row per scale.
#[derive(Debug, Clone)]
pub struct CoefMatrix {
    pub scales: Vec<f64>,
    pub times: Vec<f64>,
    /// rows[i][j] = W(s_i, t_j)
    pub rows: Vec<Vec<f64>>,
}

/// Coefficient magnitudes |W(s, t)| with the grids that index them.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    scales: Vec<f64>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn magnitude(&self, scale_idx: usize, time_idx: usize) -> f64 {
        self.rows[scale_idx][time_idx]
    }

    pub fn row(&self, scale_idx: usize) -> &[f64] {
        &self.rows[scale_idx]
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn num_times(&self) -> usize {
        self.times.len()
    }
}

/// Signed transform: W(s, t_j) = Σ_τ x(τ) Ψ_s(τ - t_j) Δt over
/// |τ - t_j| <= 6sσ.
pub fn cwt_signed(signal: &Signal, grid: &ScaleGrid, spec: &WaveletSpec) -> CoefMatrix {
    let dt = signal.dt();
    let n = signal.len();
    let mut rows = Vec::with_capacity(grid.len());
    for &s in grid.scales() {
        let radius = support_radius_samples(spec, s, dt);
        // kernel[k + radius] = Ψ_s(k·Δt) · Δt
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|k| {
                scaled_wavelet(spec, s, k as f64 * dt).expect("positive scale") * dt
            })
            .collect();
        let mut row = Vec::with_capacity(n);
        for j in 0..n as i64 {
            let lo = (j - radius).max(0);
            let hi = (j + radius).min(n as i64 - 1);
            let mut acc = 0.0;
            for tau in lo..=hi {
                acc += signal.values()[tau as usize] * kernel[(tau - j + radius) as usize];
            }
            row.push(acc);
        }
        rows.push(row);
    }
    CoefMatrix {
        scales: grid.scales().to_vec(),
        times: signal.times().to_vec(),
        rows,
    }
}

/// Magnitude spectrogram.
pub fn cwt(signal: &Signal, grid: &ScaleGrid, spec: &WaveletSpec) -> Spectrogram {
    let signed = cwt_signed(signal, grid, spec);
    Spectrogram {
        scales: signed.scales,
        times: signed.times,
        rows: signed
            .rows
            .into_iter()
            .map(|r| r.into_iter().map(f64::abs).collect())
            .collect(),
    }
}

/// Schema of spectrogram items: scale, time, coefficient magnitude.
pub fn spectrogram_schema() -> Arc<DataItemSchema> {
    DataItemSchema::reals(&["s", "t", "w"])
}

/// Items in column order: time t_1 first; within a column, highest scale
/// down to the lowest.
pub fn column_stream(sp: &Spectrogram) -> Vec<DataItem> {
    let mut out = Vec::with_capacity(sp.num_scales() * sp.num_times());
    for j in 0..sp.num_times() {
        for i in (0..sp.num_scales()).rev() {
            out.push(DataItem::new(vec![
                FieldValue::Real(sp.scales[i]),
                FieldValue::Real(sp.times[j]),
                FieldValue::Real(sp.rows[i][j]),
            ]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> WaveletSpec {
        WaveletSpec::new(2, 1.0).unwrap()
    }

    #[test]
    fn signal_validation() {
        assert!(Signal::new(vec![], vec![]).is_err());
        assert!(Signal::new(vec![0.0, 0.1, 0.2], vec![1.0, 2.0, 3.0]).is_ok());
        // jitter beyond tolerance
        assert!(Signal::new(vec![0.0, 0.1, 0.2 + 1e-6], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Signal::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn odd_order_vanishes_at_origin() {
        let spec = WaveletSpec::new(1, 0.7).unwrap();
        assert_eq!(mother_wavelet(&spec, 0.0), 0.0);
    }

    #[test]
    fn second_order_is_negative_at_origin_and_decays() {
        let spec = spec2();
        assert!(mother_wavelet(&spec, 0.0) < 0.0);
        assert!(mother_wavelet(&spec, 50.0).abs() < 1e-12);
        assert!(mother_wavelet(&spec, -50.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        // d/dt of the (n-1)-th derivative, by central differences
        for order in 1..=4u32 {
            let sigma = 0.8;
            let spec = WaveletSpec::new(order, sigma).unwrap();
            let lower = if order == 1 {
                None
            } else {
                Some(WaveletSpec::new(order - 1, sigma).unwrap())
            };
            let g = |t: f64| {
                (-0.5 * (t / sigma) * (t / sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            };
            let h = 1e-5;
            for &t in &[-1.3, -0.4, 0.0, 0.6, 1.0, 2.2] {
                let numeric = match &lower {
                    None => (g(t + h) - g(t - h)) / (2.0 * h),
                    Some(l) => (mother_wavelet(l, t + h) - mother_wavelet(l, t - h)) / (2.0 * h),
                };
                let exact = mother_wavelet(&spec, t);
                assert!(
                    (numeric - exact).abs() < 1e-6,
                    "order {order} at t={t}: {numeric} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn scaling_preserves_l2_norm() {
        let spec = spec2();
        let norm = |s: f64| {
            let h = 1e-3;
            let r = 10.0 * s;
            let mut acc = 0.0;
            let mut t = -r;
            while t <= r {
                let v = scaled_wavelet(&spec, s, t).unwrap();
                acc += v * v * h;
                t += h;
            }
            acc
        };
        let n1 = norm(1.0);
        let n4 = norm(4.0);
        assert!((n1 - n4).abs() < 1e-6, "{n1} vs {n4}");
        // identity scale reduces to the mother wavelet
        assert_eq!(scaled_wavelet(&spec, 1.0, 0.3).unwrap(), mother_wavelet(&spec2(), 0.3));
        assert!(scaled_wavelet(&spec, 0.0, 0.3).is_err());
    }

    #[test]
    fn even_order_dilation_widens_and_lowers() {
        let spec = spec2();
        let peak1 = scaled_wavelet(&spec, 1.0, 0.0).unwrap().abs();
        let peak4 = scaled_wavelet(&spec, 4.0, 0.0).unwrap().abs();
        assert!((peak4 - peak1 / 2.0).abs() < 1e-12);
        // value at 4x the offset matches the unit-scale shape, halved
        let v1 = scaled_wavelet(&spec, 1.0, 0.5).unwrap();
        let v4 = scaled_wavelet(&spec, 4.0, 2.0).unwrap();
        assert!((v4 - v1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_transforms_to_zero() {
        let sig = Signal::from_values(vec![0.0; 64], 0.01).unwrap();
        let grid = ScaleGrid::integers(4);
        let sp = cwt(&sig, &grid, &spec2());
        for i in 0..sp.num_scales() {
            assert!(sp.row(i).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn impulse_response_is_the_sampled_kernel() {
        let n = 201;
        let j0 = 100usize;
        let dt = 0.01;
        let mut vals = vec![0.0; n];
        vals[j0] = 1.0;
        let sig = Signal::from_values(vals, dt).unwrap();
        let grid = ScaleGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let spec = WaveletSpec::new(2, 0.05).unwrap();
        let signed = cwt_signed(&sig, &grid, &spec);
        for (i, &s) in grid.scales().iter().enumerate() {
            let radius = support_radius_samples(&spec, s, dt);
            for j in 0..n {
                let offset = j0 as i64 - j as i64;
                let u = offset as f64 * dt;
                let expected = if offset.abs() <= radius {
                    scaled_wavelet(&spec, s, u).unwrap() * dt
                } else {
                    0.0
                };
                let got = signed.rows[i][j];
                assert!(
                    (got - expected).abs() <= 1e-9,
                    "scale {s} sample {j}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn linearity_and_shift_covariance() {
        let dt = 0.01;
        let n = 256;
        let wave = |k: usize, phase: f64| ((k as f64) * 0.37 + phase).sin();
        let x: Vec<f64> = (0..n).map(|k| wave(k, 0.0)).collect();
        let y: Vec<f64> = (0..n).map(|k| (k as f64 * 0.11).cos()).collect();
        let grid = ScaleGrid::new(vec![1.0, 2.0]).unwrap();
        let spec = WaveletSpec::new(2, 0.05).unwrap();
        let (a, b) = (2.5, -1.25);
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(&u, &v)| a * u + b * v).collect();
        let wx = cwt_signed(&Signal::from_values(x.clone(), dt).unwrap(), &grid, &spec);
        let wy = cwt_signed(&Signal::from_values(y, dt).unwrap(), &grid, &spec);
        let wm = cwt_signed(&Signal::from_values(mixed, dt).unwrap(), &grid, &spec);
        for i in 0..2 {
            for j in 0..n {
                let lhs = wm.rows[i][j];
                let rhs = a * wx.rows[i][j] + b * wy.rows[i][j];
                assert!((lhs - rhs).abs() < 1e-9, "linearity at ({i},{j})");
            }
        }
        // shift by k samples moves every interior coefficient by k
        let k = 10usize;
        let shifted: Vec<f64> = (0..n)
            .map(|j| if j >= k { x[j - k] } else { 0.0 })
            .collect();
        let ws = cwt_signed(&Signal::from_values(shifted, dt).unwrap(), &grid, &spec);
        let guard = (SUPPORT_RADIUS * 2.0 * spec.sigma / dt).ceil() as usize + k;
        for i in 0..2 {
            for j in guard..n - guard {
                let lhs = ws.rows[i][j + k - k]; // W_shifted(s, t_j)
                let rhs = wx.rows[i][j - k];
                assert!(
                    (ws.rows[i][j] - rhs).abs() < 1e-9,
                    "shift covariance at ({i},{j}): {} vs {rhs}",
                    ws.rows[i][j]
                );
                let _ = lhs;
            }
        }
    }

    #[test]
    fn bump_scale_argmax_grows_with_bump_width() {
        // wider bumps concentrate energy at larger scales
        let dt = 1.0;
        let n = 512;
        let grid = ScaleGrid::integers(24);
        let spec = WaveletSpec::new(2, 1.0).unwrap();
        let mut argmaxes = Vec::new();
        for width in [2.0, 4.0, 8.0] {
            let c = (n / 2) as f64;
            let vals: Vec<f64> = (0..n)
                .map(|j| {
                    let u = (j as f64 - c) / width;
                    (-0.5 * u * u).exp()
                })
                .collect();
            let sig = Signal::from_values(vals, dt).unwrap();
            let sp = cwt(&sig, &grid, &spec);
            let center = n / 2;
            let best = (0..grid.len())
                .max_by(|&a, &b| {
                    sp.magnitude(a, center)
                        .partial_cmp(&sp.magnitude(b, center))
                        .unwrap()
                })
                .unwrap();
            argmaxes.push(best);
        }
        assert!(
            argmaxes[0] < argmaxes[1] && argmaxes[1] < argmaxes[2],
            "argmax scales {argmaxes:?} not increasing"
        );
    }

    #[test]
    fn column_stream_order_and_roundtrip() {
        let sig = Signal::from_values(vec![1.0, 2.0], 0.5).unwrap();
        let grid = ScaleGrid::new(vec![1.0, 2.0]).unwrap();
        let sp = cwt(&sig, &grid, &spec2());
        let items = column_stream(&sp);
        assert_eq!(items.len(), 4);
        // (s2,t1), (s1,t1), (s2,t2), (s1,t2)
        let get = |item: &DataItem, k: usize| match item.get(k) {
            FieldValue::Real(x) => *x,
            _ => unreachable!(),
        };
        assert_eq!(get(&items[0], 0), 2.0);
        assert_eq!(get(&items[0], 1), 0.0);
        assert_eq!(get(&items[1], 0), 1.0);
        assert_eq!(get(&items[2], 0), 2.0);
        assert_eq!(get(&items[2], 1), 0.5);
        assert_eq!(get(&items[3], 0), 1.0);
        // regrouping the stream reproduces the matrix
        for j in 0..sp.num_times() {
            for (pos, i) in (0..sp.num_scales()).rev().enumerate() {
                let item = &items[j * sp.num_scales() + pos];
                assert_eq!(get(item, 2), sp.magnitude(i, j));
            }
        }
        // single-cell spectrogram yields one item
        let sig1 = Signal::from_values(vec![3.0], 1.0).unwrap();
        let sp1 = cwt(&sig1, &ScaleGrid::new(vec![1.0]).unwrap(), &spec2());
        assert_eq!(column_stream(&sp1).len(), 1);
    }
}
