//! Beat-stream discriminators: windowed rate range, inter-beat intervals,
//! sudden rate onset, chamber patterns, sliding rate and stability, and
//! atrial/ventricular rate comparison.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::predicate::{Cmp, Predicate};
use crate::qre::op::{op_add, op_gt, op_inc, op_inrange, op_right, Op};
use crate::qre::term::{CostTerm, Parameter};
use crate::qre::value::{CostType, Value};
use crate::qre::QreExpr;
use crate::schema::{DataItem, DataItemSchema, FieldKind, FieldValue};

/// Schema of single-chamber beat streams: one real field, 1 marking a beat.
pub fn beat_schema() -> Arc<DataItemSchema> {
    DataItemSchema::single("beat", FieldKind::Real)
}

/// Schema of dual-chamber streams over the labels 0, A, V.
pub fn chamber_schema() -> Arc<DataItemSchema> {
    DataItemSchema::single("chamber", FieldKind::enum_labels(&["0", "A", "V"]))
}

fn is_beat(s: &Arc<DataItemSchema>) -> Predicate {
    Predicate::real_cmp(s, "beat", Cmp::Ge, 0.5).expect("beat schema")
}

fn is_quiet(s: &Arc<DataItemSchema>) -> Predicate {
    Predicate::real_cmp(s, "beat", Cmp::Lt, 0.5).expect("beat schema")
}

pub fn beat_items(markers: &[u8]) -> Vec<DataItem> {
    markers
        .iter()
        .map(|&m| DataItem::real(if m > 0 { 1.0 } else { 0.0 }))
        .collect()
}

pub fn chamber_items(labels: &str) -> Result<Vec<DataItem>> {
    labels
        .chars()
        .map(|c| {
            let idx = match c {
                '0' => 0,
                'A' => 1,
                'V' => 2,
                other => {
                    return Err(Error::Config(format!(
                        "unknown chamber label `{other}`"
                    )))
                }
            };
            Ok(DataItem::new(vec![FieldValue::Label(idx)]))
        })
        .collect()
}

/// Matches exactly `window` items and decides whether the number of beats
/// lies in [lo, hi].
pub fn count_in_range(lo: i64, hi: i64, window: usize) -> Result<QreExpr> {
    if lo < 0 || lo > hi {
        return Err(Error::Config("count range must satisfy 0 <= lo <= hi".into()));
    }
    if window == 0 {
        return Err(Error::Config("window must be nonempty".into()));
    }
    let s = beat_schema();
    let counter = beat_sum_tree(&s, window)?;
    QreExpr::cost_op(op_inrange(lo, hi), vec![counter])
}

fn beat_sum_tree(s: &Arc<DataItemSchema>, k: usize) -> Result<QreExpr> {
    if k == 1 {
        QreExpr::else_(
            QreExpr::basic_const(s.clone(), is_beat(s), Value::Int(1))?,
            QreExpr::basic_const(s.clone(), is_quiet(s), Value::Int(0))?,
        )
    } else {
        QreExpr::split(
            op_add(),
            beat_sum_tree(s, k / 2)?,
            beat_sum_tree(s, k - k / 2)?,
        )
    }
}

/// Matches one inter-beat interval `0*1` and returns its cycle length in
/// samples, counting the terminating beat.
pub fn interval_length() -> Result<QreExpr> {
    let s = beat_schema();
    let zeros = QreExpr::bind(
        QreExpr::iter(
            "zc",
            QreExpr::basic(
                s.clone(),
                is_quiet(&s),
                CostTerm::apply(op_add(), vec![CostTerm::param("zc"), CostTerm::int(1)]),
                &[Parameter::int("zc")],
            )?,
        )?,
        "zc",
        Value::Int(0),
    )?;
    let beat = QreExpr::basic_const(s, is_beat(&beat_schema()), Value::Int(1))?;
    QreExpr::split(op_add(), zeros, beat)
}

/// Mean of an integer sum over `k` values.
fn op_int_mean(k: i64) -> Op {
    Op::new(
        &format!("mean:{k}"),
        1,
        |t| match &t[0] {
            CostType::Int => Ok(CostType::Real),
            _ => Err(Error::Type("integer mean needs an int".into())),
        },
        move |v| Value::Real(v[0].as_int().unwrap() as f64 / k as f64),
    )
}

/// Average cycle length over four consecutive inter-beat intervals.
pub fn four_beats() -> Result<QreExpr> {
    let sum = QreExpr::split(
        op_add(),
        interval_length()?,
        QreExpr::split(
            op_add(),
            interval_length()?,
            QreExpr::split(op_add(), interval_length()?, interval_length()?)?,
        )?,
    )?;
    QreExpr::cost_op(op_int_mean(4), vec![sum])
}

/// True when the rate increases by at least a fifth between two consecutive
/// four-beat windows: 0.8 · (first average CL) >= second average CL.
pub fn sudden_onset() -> Result<QreExpr> {
    QreExpr::split(op_inc(), four_beats()?, four_beats()?)
}

/// Boolean expression matching `V 0^{a:b} A 0^{c:d} V 0^{e:f} A 0^{g:h} V`
/// over dual-chamber streams.
pub fn pattern(bounds: [(usize, usize); 4]) -> Result<QreExpr> {
    for (lo, hi) in bounds {
        if lo > hi {
            return Err(Error::Config("gap bounds must satisfy lo <= hi".into()));
        }
    }
    let s = chamber_schema();
    let lab = |l: &str| Predicate::label_is(&s, "chamber", l).expect("chamber label");
    let beat = |l: &str| QreExpr::basic_const(s.clone(), lab(l), Value::Bool(true));
    let zero = || QreExpr::basic_const(s.clone(), lab("0"), Value::Bool(true));
    // gap(lo, hi, next): lo mandatory zeros, then up to hi-lo optional ones
    fn chain(
        k: usize,
        zero: &dyn Fn() -> Result<QreExpr>,
        next: QreExpr,
    ) -> Result<QreExpr> {
        if k == 0 {
            Ok(next)
        } else {
            chain(k - 1, zero, QreExpr::split(op_right(), zero()?, next)?)
        }
    }
    fn optional(
        d: usize,
        zero: &dyn Fn() -> Result<QreExpr>,
        next: QreExpr,
    ) -> Result<QreExpr> {
        if d == 0 {
            Ok(next)
        } else {
            let shorter = optional(d - 1, zero, next.clone())?;
            QreExpr::else_(next, QreExpr::split(op_right(), zero()?, shorter)?)
        }
    }
    let zf: &dyn Fn() -> Result<QreExpr> = &zero;
    let mut expr = beat("V")?;
    // assemble right-to-left: ... A gap V gap A gap V
    let seq = [("A", bounds[3]), ("V", bounds[2]), ("A", bounds[1]), ("V", bounds[0])];
    for (label, (lo, hi)) in seq {
        let gap = chain(lo, zf, optional(hi - lo, zf, expr)?)?;
        expr = QreExpr::split(op_right(), beat(label)?, gap)?;
    }
    Ok(expr)
}

fn window_state_type() -> CostType {
    CostType::Tuple(vec![CostType::Int, CostType::IntSet])
}

/// Sliding-window step over a 0/1 stream: bumps the index, records marker
/// positions, and evicts positions that left the window.
fn op_slide_step(window: i64) -> Op {
    let ty = window_state_type();
    Op::new(
        &format!("slide:{window}"),
        2,
        move |t| {
            if t[0] == ty && t[1] == CostType::Real {
                Ok(ty.clone())
            } else {
                Err(Error::Type("window step needs ((int, intset), real)".into()))
            }
        },
        move |v| {
            let parts = v[0].as_tuple().unwrap();
            let idx = parts[0].as_int().unwrap() + 1;
            let mut set = parts[1].as_int_set().unwrap().clone();
            if v[1].as_real().unwrap() >= 0.5 {
                set.insert(idx);
            }
            set = set.split_off(&(idx - window + 1));
            Value::Tuple(vec![Value::Int(idx), Value::IntSet(set)])
        },
    )
}

fn window_fraction(state: &Value, window: i64) -> f64 {
    let parts = state.as_tuple().unwrap();
    let idx = parts[0].as_int().unwrap();
    let seen = idx.min(window);
    if seen == 0 {
        return 0.0;
    }
    parts[1].as_int_set().unwrap().len() as f64 / seen as f64
}

fn op_window_mean(window: i64) -> Op {
    let ty = window_state_type();
    Op::new(
        &format!("window-mean:{window}"),
        1,
        move |t| {
            if t[0] == ty {
                Ok(CostType::Real)
            } else {
                Err(Error::Type("window mean needs the window state".into()))
            }
        },
        move |v| Value::Real(window_fraction(&v[0], window)),
    )
}

fn op_window_std(window: i64) -> Op {
    let ty = window_state_type();
    Op::new(
        &format!("window-std:{window}"),
        1,
        move |t| {
            if t[0] == ty {
                Ok(CostType::Real)
            } else {
                Err(Error::Type("window deviation needs the window state".into()))
            }
        },
        move |v| {
            // population deviation of 0/1 values: sqrt(p(1-p))
            let p = window_fraction(&v[0], window);
            Value::Real((p * (1.0 - p)).max(0.0).sqrt())
        },
    )
}

fn window_fold(window: i64) -> Result<QreExpr> {
    let ds = DataItemSchema::single("value", FieldKind::Real);
    let body = QreExpr::basic(
        ds.clone(),
        Predicate::True,
        CostTerm::apply(
            op_slide_step(window),
            vec![CostTerm::param("sw"), CostTerm::field(&ds, "value")?],
        ),
        &[Parameter::new("sw", window_state_type())],
    )?;
    QreExpr::bind(
        QreExpr::iter("sw", body)?,
        "sw",
        Value::Tuple(vec![Value::Int(0), Value::int_set([])]),
    )
}

/// Sliding average of the last `window` marker emissions of `producer`
/// (averaging whatever has arrived during warm-up).
pub fn heart_rate(producer: QreExpr, window: usize) -> Result<QreExpr> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let agg = QreExpr::cost_op(op_window_mean(window as i64), vec![window_fold(window as i64)?])?;
    QreExpr::compose(producer, agg)
}

/// Sliding population standard deviation of the last `window` marker
/// emissions.
pub fn stability(producer: QreExpr, window: usize) -> Result<QreExpr> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let agg = QreExpr::cost_op(op_window_std(window as i64), vec![window_fold(window as i64)?])?;
    QreExpr::compose(producer, agg)
}

/// Non-strict comparison of two rate expressions over one stream.
pub fn rate_compare(rate_v: QreExpr, rate_a: QreExpr) -> Result<QreExpr> {
    QreExpr::cost_op(op_gt(), vec![rate_v, rate_a])
}

/// Per-item marker extractor over dual-chamber streams: emits 1 whenever the
/// latest item is a beat of the given chamber, 0 otherwise.
pub fn chamber_marker(label: &str) -> Result<QreExpr> {
    let s = chamber_schema();
    let hit = Predicate::label_is(&s, "chamber", label)?;
    let miss = Predicate::not(hit.clone());
    let marker = QreExpr::else_(
        QreExpr::basic_const(s.clone(), hit, Value::Real(1.0))?,
        QreExpr::basic_const(s.clone(), miss, Value::Real(0.0))?,
    )?;
    let skip = QreExpr::const_star(s, Predicate::True, Value::Real(0.0))?;
    QreExpr::split(op_right(), skip, marker)
}

/// Per-item marker extractor over single-chamber beat streams.
pub fn beat_marker() -> Result<QreExpr> {
    let s = beat_schema();
    let marker = QreExpr::else_(
        QreExpr::basic_const(s.clone(), is_beat(&s), Value::Real(1.0))?,
        QreExpr::basic_const(s.clone(), is_quiet(&s), Value::Real(0.0))?,
    )?;
    let skip = QreExpr::const_star(s, Predicate::True, Value::Real(0.0))?;
    QreExpr::split(op_right(), skip, marker)
}
