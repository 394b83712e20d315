//! Blanking peak detection: analysis-scale maxima with a refractory window.
//!
//! The analysis-scale marker stream feeds an expression that matches any
//! number of complete blanking periods followed by a single marker; the
//! expression's value becomes defined exactly at marker columns that start a
//! new period, so maxima inside a blanking window are never reported.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::predicate::{Cmp, Predicate};
use crate::qre::op::{op_left, op_right};
use crate::qre::term::ParameterValuation;
use crate::qre::value::Value;
use crate::qre::{compile_streaming, QreExpr};
use crate::schema::DataItemSchema;
use crate::wavelet::{column_stream, support_radius_samples, Spectrogram, WaveletSpec};

use super::wpm::{any_block, one_max};
use super::{derived_reals, Peak, PeakAnnotation};

/// Parameters of the blanking detector.
#[derive(Debug, Clone)]
pub struct WpbParams {
    pub sbar: f64,
    pub pbar: f64,
    /// Refractory window length in samples.
    pub bl: usize,
}

impl WpbParams {
    pub fn validate(&self, scales: &[f64]) -> Result<()> {
        if !(self.sbar > 0.0 && self.pbar > 0.0) || self.bl == 0 {
            return Err(Error::Config(
                "blanking detector needs positive thresholds and window".into(),
            ));
        }
        if !scales.contains(&self.sbar) {
            return Err(Error::Config(format!(
                "analysis scale {} is not on the grid",
                self.sbar
            )));
        }
        Ok(())
    }
}

fn is_one(ds: &Arc<DataItemSchema>) -> Predicate {
    Predicate::real_cmp(ds, "value", Cmp::Ge, 0.5).expect("derived field")
}

fn is_zero(ds: &Arc<DataItemSchema>) -> Predicate {
    Predicate::real_cmp(ds, "value", Cmp::Lt, 0.5).expect("derived field")
}

/// One blanking period: a marker, `bl` arbitrary markers, then any run of
/// zeros.
pub fn one_bl(bl: usize) -> Result<QreExpr> {
    let ds = derived_reals();
    let head = QreExpr::basic_const(ds.clone(), is_one(&ds), Value::Real(0.0))?;
    let window = any_block(&ds, bl)?;
    let quiet = QreExpr::const_star(ds.clone(), is_zero(&ds), Value::Real(0.0))?;
    QreExpr::split(op_left(), QreExpr::split(op_left(), head, window)?, quiet)
}

/// Defined (with value 1) exactly when the stream ends on a marker that
/// opens a new blanking period. A quiet run before the first marker is
/// absorbed.
pub fn latest_peak(bl: usize) -> Result<QreExpr> {
    let ds = derived_reals();
    let leading = QreExpr::const_star(ds.clone(), is_zero(&ds), Value::Real(0.0))?;
    let periods = QreExpr::star_value(one_bl(bl)?, Value::Real(0.0))?;
    let history = QreExpr::split(op_right(), leading, periods)?;
    let hit = QreExpr::basic_const(ds.clone(), is_one(&ds), Value::Real(1.0))?;
    QreExpr::split(op_right(), history, hit)
}

/// The full blanking pipeline over the raw spectrogram stream.
pub fn wpb_expr(sigma: usize, n: usize, pbar: f64, bl: usize) -> Result<QreExpr> {
    QreExpr::compose(one_max(sigma, n, pbar)?, latest_peak(bl)?)
}

/// Runs the blanking detector over a spectrogram.
pub fn detect_wpb(
    sp: &Spectrogram,
    wspec: &WaveletSpec,
    params: &WpbParams,
) -> Result<PeakAnnotation> {
    params.validate(sp.scales())?;
    let sigma = sp
        .scales()
        .iter()
        .position(|&s| s == params.sbar)
        .expect("validated scale")
        + 1;
    let n = sp.num_scales();
    let expr = wpb_expr(sigma, n, params.pbar, params.bl)?;
    let mut ev = compile_streaming(&expr, &ParameterValuation::empty())?;
    let dt = if sp.times().len() > 1 {
        sp.times()[1] - sp.times()[0]
    } else {
        1.0
    };
    let guard = support_radius_samples(wspec, params.sbar, dt).max(0) as usize;
    let m = sp.num_times();
    let mut peaks = Vec::new();
    for (k, item) in column_stream(sp).iter().enumerate() {
        ev.step(item)?;
        let column_end = (k + 1) % n == 0;
        if column_end {
            if let Some(Value::Real(x)) = ev.output() {
                if *x == 1.0 {
                    // the defining marker arrived with this column and flags
                    // the previous one; emissions start at the third column
                    let col = (k + 1) / n;
                    let idx = col - 2;
                    if idx >= guard && idx + guard < m {
                        peaks.push(Peak {
                            index: idx,
                            time: sp.times()[idx],
                        });
                    }
                }
            }
        }
    }
    Ok(PeakAnnotation {
        detector: "wpb".into(),
        settings: format!("sbar={} pbar={} bl={}", params.sbar, params.pbar, params.bl),
        peaks,
    })
}

/// Streaming peak positions over a raw 0/1 marker stream (1-based marker
/// indices); the core of the blanking behavior, usable without a
/// spectrogram.
pub fn blanking_positions(markers: &[u8], bl: usize) -> Result<Vec<usize>> {
    let expr = latest_peak(bl)?;
    let mut ev = compile_streaming(&expr, &ParameterValuation::empty())?;
    let mut out = Vec::new();
    for (k, item) in super::wpm::marker_items(markers).iter().enumerate() {
        ev.step(item)?;
        if let Some(Value::Real(x)) = ev.output() {
            if *x == 1.0 {
                out.push(k + 1);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blanking_suppresses_markers_inside_window() {
        // 1,0,0,1 with bl = 2: the second marker falls outside the window
        assert_eq!(blanking_positions(&[1, 0, 0, 1], 2).unwrap(), vec![1, 4]);
        // 1,1 with bl = 2: the second marker is inside the window
        assert_eq!(blanking_positions(&[1, 1], 2).unwrap(), vec![1]);
        assert_eq!(blanking_positions(&[0, 0, 0, 0], 2).unwrap(), vec![]);
    }

    #[test]
    fn reported_markers_always_separated_by_more_than_bl() {
        let bl = 3;
        // pseudo-random marker pattern
        let markers: Vec<u8> = (0..200u32)
            .map(|k| u8::from(k.wrapping_mul(2654435761).wrapping_add(k) % 7 == 0))
            .collect();
        let pos = blanking_positions(&markers, bl).unwrap();
        for pair in pos.windows(2) {
            assert!(
                pair[1] - pair[0] > bl,
                "peaks {} and {} within the window",
                pair[0],
                pair[1]
            );
        }
        // every reported position is a marker
        for &p in &pos {
            assert_eq!(markers[p - 1], 1);
        }
    }
}
