//! Maxima-line peak detection over the wavelet spectrogram.
//!
//! Per scale, a pipeline selects that scale's coefficient from each arriving
//! column, flags strict local maxima above the scale's threshold (the
//! configured threshold at the analysis scale, zero below it), and collects
//! the flag columns into a set. A connectivity filter then chains the
//! per-scale sets from the analysis scale down to the lowest one, keeping
//! only lowest-scale maxima reachable through every intermediate scale
//! within `delta` samples; the survivors are the reported peak times.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::predicate::Predicate;
use crate::qre::op::{op_left, op_pair, op_right, op_snd, Op};
use crate::qre::term::{CostTerm, ParameterValuation};
use crate::qre::value::{CostType, Value};
use crate::qre::{compile_streaming, QreExpr};
use crate::schema::{DataItem, DataItemSchema};
use crate::wavelet::{
    column_stream, spectrogram_schema, support_radius_samples, Spectrogram, WaveletSpec,
};

use super::{derived_reals, Peak, PeakAnnotation};

/// Parameters of the maxima-line detector.
#[derive(Debug, Clone)]
pub struct WpmParams {
    /// Analysis scale (must lie on the spectrogram's grid).
    pub sbar: f64,
    /// Magnitude threshold applied at the analysis scale.
    pub pbar: f64,
    /// Scale-connectivity tolerance; must be at least the largest adjacent
    /// grid step so that evaluating every grid scale realizes it.
    pub eps: f64,
    /// Time tolerance (samples) between maxima at adjacent scales.
    pub delta: i64,
}

impl WpmParams {
    pub fn validate(&self, scales: &[f64]) -> Result<()> {
        if !(self.sbar > 0.0 && self.pbar > 0.0 && self.eps > 0.0 && self.delta > 0) {
            return Err(Error::Config("detector parameters must be positive".into()));
        }
        if !scales.contains(&self.sbar) {
            return Err(Error::Config(format!(
                "analysis scale {} is not on the grid",
                self.sbar
            )));
        }
        let max_step = scales
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0f64, f64::max);
        if max_step > self.eps {
            return Err(Error::Config(format!(
                "scale tolerance {} smaller than the largest grid step {max_step}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Block of `k` arbitrary items with constant value 0.
pub(crate) fn any_block(schema: &Arc<DataItemSchema>, k: usize) -> Result<QreExpr> {
    if k == 1 {
        QreExpr::basic_const(schema.clone(), Predicate::True, Value::Real(0.0))
    } else {
        QreExpr::split(
            op_left(),
            any_block(schema, k / 2)?,
            any_block(schema, k - k / 2)?,
        )
    }
}

/// Matches one full column (`n` items, highest scale first) and returns the
/// coefficient magnitude at 1-based scale index `i`.
pub fn select_coef(i: usize, n: usize) -> Result<QreExpr> {
    if i == 0 || i > n {
        return Err(Error::Config(format!(
            "scale index {i} outside the 1..={n} column"
        )));
    }
    let schema = spectrogram_schema();
    let pick = QreExpr::basic(
        schema.clone(),
        Predicate::True,
        CostTerm::field(&schema, "w")?,
        &[],
    )?;
    // column order runs from scale n down to scale 1
    let j = n - i + 1;
    if n == 1 {
        Ok(pick)
    } else if j == 1 {
        QreExpr::split(op_left(), pick, any_block(&schema, n - 1)?)
    } else if j == n {
        QreExpr::split(op_right(), any_block(&schema, n - 1)?, pick)
    } else {
        QreExpr::split(
            op_right(),
            any_block(&schema, j - 1)?,
            QreExpr::split(op_left(), pick, any_block(&schema, n - j)?)?,
        )
    }
}

/// Applies [`select_coef`] to the latest column, skipping any number of
/// complete columns before it.
pub fn repeat_select_coef(i: usize, n: usize) -> Result<QreExpr> {
    let schema = spectrogram_schema();
    let skip = QreExpr::star_value(any_block(&schema, n)?, Value::Real(0.0))?;
    QreExpr::split(op_right(), skip, select_coef(i, n)?)
}

/// Flag test on the last three values of a derived stream: 1 when the middle
/// one strictly dominates both neighbors and exceeds the threshold.
fn op_lm3(threshold: f64) -> Op {
    Op::new(
        &format!("lm3:{threshold}"),
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Tuple(ts), CostType::Real)
                if ts.as_slice() == [CostType::Real, CostType::Real] =>
            {
                Ok(CostType::Real)
            }
            _ => Err(Error::Type("local-max test needs ((real, real), real)".into())),
        },
        move |v| {
            let pair = v[0].as_tuple().unwrap();
            let (r1, r2) = (
                pair[0].as_real().unwrap(),
                pair[1].as_real().unwrap(),
            );
            let r3 = v[1].as_real().unwrap();
            let hit = r2 > r1 && r2 > r3 && r2 > threshold;
            Value::Real(if hit { 1.0 } else { 0.0 })
        },
    )
}

/// Emits 1 when the second-to-last value of a numeric stream is a strict
/// local maximum above the threshold, 0 otherwise; needs three values.
pub fn local_max(threshold: f64) -> Result<QreExpr> {
    let ds = derived_reals();
    let pick = || {
        QreExpr::basic(
            ds.clone(),
            Predicate::True,
            CostTerm::field(&ds, "value").expect("derived field"),
            &[],
        )
    };
    let last3 = QreExpr::split(
        op_lm3(threshold),
        QreExpr::split(op_pair(), pick()?, pick()?)?,
        pick()?,
    )?;
    let skip = QreExpr::const_star(ds, Predicate::True, Value::Real(0.0))?;
    QreExpr::split(op_right(), skip, last3)
}

/// Scale-`i` maxima markers over the raw spectrogram stream: a 0/1 value at
/// each complete column once three columns have arrived, describing the
/// second-to-last one.
///
/// The flag spans the last three whole columns directly, so its value is
/// undefined mid-column and the downstream marker stream carries exactly one
/// entry per column.
pub fn one_max(i: usize, n: usize, threshold: f64) -> Result<QreExpr> {
    let schema = spectrogram_schema();
    let last3 = QreExpr::split(
        op_lm3(threshold),
        QreExpr::split(op_pair(), select_coef(i, n)?, select_coef(i, n)?)?,
        select_coef(i, n)?,
    )?;
    let skip = QreExpr::star_value(any_block(&schema, n)?, Value::Real(0.0))?;
    QreExpr::split(op_right(), skip, last3)
}

/// Accumulator step of the marker collector: counts items and records the
/// positions of markers at or above one half.
fn op_mark_step() -> Op {
    Op::new(
        "mark-step",
        2,
        |t| match (&t[0], &t[1]) {
            (CostType::Tuple(ts), CostType::Real)
                if ts.as_slice() == [CostType::Int, CostType::IntSet] =>
            {
                Ok(t[0].clone())
            }
            _ => Err(Error::Type("marker step needs ((int, intset), real)".into())),
        },
        |v| {
            let parts = v[0].as_tuple().unwrap();
            let count = parts[0].as_int().unwrap() + 1;
            let mut set = parts[1].as_int_set().unwrap().clone();
            if v[1].as_real().unwrap() >= 0.5 {
                set.insert(count);
            }
            Value::Tuple(vec![Value::Int(count), Value::IntSet(set)])
        },
    )
}

/// Collects the 1-based positions of 1s in a 0/1 marker stream into a set.
pub fn union_times() -> Result<QreExpr> {
    let ds = derived_reals();
    let body = QreExpr::basic(
        ds.clone(),
        Predicate::True,
        CostTerm::apply(
            op_mark_step(),
            vec![CostTerm::param("mk"), CostTerm::field(&ds, "value")?],
        ),
        &[crate::qre::term::Parameter::new(
            "mk",
            CostType::Tuple(vec![CostType::Int, CostType::IntSet]),
        )],
    )?;
    let folded = QreExpr::bind(
        QreExpr::iter("mk", body)?,
        "mk",
        Value::Tuple(vec![Value::Int(0), Value::int_set([])]),
    )?;
    QreExpr::cost_op(op_snd(), vec![folded])
}

/// Set of column indices holding scale-`i` maxima above the threshold.
pub fn peak_times(i: usize, n: usize, threshold: f64) -> Result<QreExpr> {
    QreExpr::compose(one_max(i, n, threshold)?, union_times()?)
}

/// Connectivity filter: keeps members of each next set within `delta` of a
/// survivor of the previous ones, seeded by the first set. The sets run from
/// the analysis scale down to the lowest scale.
pub fn conn_delta(sets: &[BTreeSet<i64>], delta: i64) -> Result<BTreeSet<i64>> {
    let mut it = sets.iter();
    let mut acc = it
        .next()
        .ok_or_else(|| Error::Config("connectivity filter needs at least one set".into()))?
        .clone();
    for next in it {
        acc = next
            .iter()
            .copied()
            .filter(|y| acc.range(y - delta..=y + delta).next().is_some())
            .collect();
    }
    Ok(acc)
}

/// The full maxima-line expression for analysis-scale index `sigma` in an
/// `n`-scale column: thresholded markers at the analysis scale, zero
/// thresholds below it, chained by the connectivity operation.
pub fn wpm_expr(sigma: usize, n: usize, pbar: f64, delta: i64) -> Result<QreExpr> {
    let mut expr = peak_times(sigma, n, pbar)?;
    for i in (1..sigma).rev() {
        expr = QreExpr::cost_op(
            crate::qre::op::op_conn_step(delta),
            vec![expr, peak_times(i, n, 0.0)?],
        )?;
    }
    Ok(expr)
}

/// Runs the maxima-line detector over a spectrogram.
pub fn detect_wpm(
    sp: &Spectrogram,
    wspec: &WaveletSpec,
    params: &WpmParams,
) -> Result<PeakAnnotation> {
    params.validate(sp.scales())?;
    let sigma = sp
        .scales()
        .iter()
        .position(|&s| s == params.sbar)
        .expect("validated scale")
        + 1;
    let n = sp.num_scales();
    let expr = wpm_expr(sigma, n, params.pbar, params.delta)?;
    let mut ev = compile_streaming(&expr, &ParameterValuation::empty())?;
    for item in column_stream(sp) {
        ev.step(&item)?;
    }
    let columns: BTreeSet<i64> = match ev.output() {
        Some(Value::IntSet(s)) => s.clone(),
        Some(other) => {
            return Err(Error::Eval(format!(
                "detector produced unexpected value {other}"
            )))
        }
        None => BTreeSet::new(),
    };
    let dt = if sp.times().len() > 1 {
        sp.times()[1] - sp.times()[0]
    } else {
        1.0
    };
    let guard = support_radius_samples(wspec, params.sbar, dt).max(0) as usize;
    let m = sp.num_times();
    // a collected element e names the e-th marker emission; emissions start
    // at the third column and flag the second-to-last one, so the flagged
    // column is e+1 (1-based), i.e. sample index e
    let survivors: Vec<usize> = columns
        .into_iter()
        .map(|e| e as usize)
        .filter(|&idx| idx >= guard && idx + guard < m)
        .collect();
    // times closer than delta are indistinguishable at the detector's
    // resolution (noise jitters the lowest-scale maxima within the
    // connectivity tolerance); report one peak per cluster
    let peaks = cluster_medians(&survivors, params.delta as usize)
        .into_iter()
        .map(|idx| Peak {
            index: idx,
            time: sp.times()[idx],
        })
        .collect();
    Ok(PeakAnnotation {
        detector: "wpm".into(),
        settings: format!(
            "sbar={} pbar={} eps={} delta={}",
            params.sbar, params.pbar, params.eps, params.delta
        ),
        peaks,
    })
}

/// Groups sorted indices into clusters whose consecutive gaps stay within
/// `tol`, returning each cluster's median element.
fn cluster_medians(sorted: &[usize], tol: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for i in 0..sorted.len() {
        let last_of_cluster = i + 1 == sorted.len() || sorted[i + 1] - sorted[i] > tol;
        if last_of_cluster {
            let cluster = &sorted[start..=i];
            out.push(cluster[cluster.len() / 2]);
            start = i + 1;
        }
    }
    out
}

/// Marker-stream items for tests and drivers.
pub fn marker_items(markers: &[u8]) -> Vec<DataItem> {
    markers
        .iter()
        .map(|&m| DataItem::real(if m > 0 { 1.0 } else { 0.0 }))
        .collect()
}
