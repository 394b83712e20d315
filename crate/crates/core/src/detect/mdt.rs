//! Adaptive-threshold peak detection in the time domain.
//!
//! A peak is flagged when the rectified signal exceeds a decaying threshold.
//! The flag opens a blanking window of fixed length during which nothing is
//! recorded but the window maximum is tracked; when the window closes the
//! threshold resets to a fraction of that maximum and resumes its
//! exponential decay, clipped below at a floor. The whole automaton is one
//! operation folded over the stream by the iteration combinator; a plain
//! loop over the same transition serves as the cross-check.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::predicate::Predicate;
use crate::qre::op::Op;
use crate::qre::term::{CostTerm, Parameter, ParameterValuation};
use crate::qre::value::{CostType, Value};
use crate::qre::{compile_streaming, QreExpr};
use crate::schema::DataItemSchema;
use crate::wavelet::Signal;

use super::{Peak, PeakAnnotation};

/// Fraction of the blanking-window maximum the threshold resets to.
pub const RESET_FRACTION: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct MdtParams {
    /// Blanking window length in samples.
    pub bl: usize,
    /// Exponential decay rate per sample.
    pub decay: f64,
    /// Threshold floor.
    pub pmin: f64,
    /// Initial threshold.
    pub pinit: f64,
}

impl MdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.bl == 0 {
            return Err(Error::Config("blanking length must be at least 1".into()));
        }
        if !(self.decay > 0.0) {
            return Err(Error::Config("decay rate must be positive".into()));
        }
        if !(self.pmin > 0.0 && self.pmin <= self.pinit) {
            return Err(Error::Config(
                "threshold floor must satisfy 0 < floor <= initial".into(),
            ));
        }
        Ok(())
    }
}

/// Automaton state threaded through the fold.
#[derive(Debug, Clone, PartialEq)]
pub struct MdtState {
    pub tracking: bool,
    /// Samples consumed inside the current blanking window.
    pub blank_count: usize,
    /// Maximum rectified value seen in the current blanking window.
    pub blank_max: f64,
    pub blank_max_idx: usize,
    /// Threshold value at the start of the current decay epoch.
    pub epoch_value: f64,
    /// Sample index where the current decay epoch began.
    pub epoch_idx: usize,
    /// Index of the next sample to process.
    pub next_idx: usize,
    /// Flagged sample indices.
    pub peaks: BTreeSet<i64>,
}

impl MdtState {
    pub fn initial(params: &MdtParams) -> MdtState {
        MdtState {
            tracking: true,
            blank_count: 0,
            blank_max: 0.0,
            blank_max_idx: 0,
            epoch_value: params.pinit,
            epoch_idx: 0,
            next_idx: 0,
            peaks: BTreeSet::new(),
        }
    }

    /// Threshold at sample `t` of the current epoch, clipped at the floor.
    /// Computed in closed form so the trace carries no accumulation error.
    pub fn threshold(&self, t: usize, params: &MdtParams) -> f64 {
        let dt = (t - self.epoch_idx) as f64;
        (self.epoch_value * (-params.decay * dt).exp()).max(params.pmin)
    }
}

/// One transition of the threshold automaton on a rectified sample.
/// Returns the successor state and whether a peak was flagged.
pub fn mdt_thev(state: &MdtState, y: f64, params: &MdtParams) -> (MdtState, bool) {
    let mut s = state.clone();
    let t = s.next_idx;
    s.next_idx = t + 1;
    let mut flagged = false;
    if s.tracking {
        let p = s.threshold(t, params);
        if y > p {
            flagged = true;
            s.peaks.insert(t as i64);
            s.tracking = false;
            s.blank_count = 0;
            s.blank_max = y;
            s.blank_max_idx = t;
        }
    } else {
        s.blank_count += 1;
        if y > s.blank_max {
            s.blank_max = y;
            s.blank_max_idx = t;
        }
        if s.blank_count == params.bl {
            s.tracking = true;
            s.epoch_value = RESET_FRACTION * s.blank_max;
            s.epoch_idx = t;
        }
    }
    (s, flagged)
}

fn state_type() -> CostType {
    CostType::Tuple(vec![
        CostType::Bool,
        CostType::Int,
        CostType::Real,
        CostType::Int,
        CostType::Real,
        CostType::Int,
        CostType::Int,
        CostType::IntSet,
    ])
}

fn encode_state(s: &MdtState) -> Value {
    Value::Tuple(vec![
        Value::Bool(s.tracking),
        Value::Int(s.blank_count as i64),
        Value::Real(s.blank_max),
        Value::Int(s.blank_max_idx as i64),
        Value::Real(s.epoch_value),
        Value::Int(s.epoch_idx as i64),
        Value::Int(s.next_idx as i64),
        Value::IntSet(s.peaks.clone()),
    ])
}

fn decode_state(v: &Value) -> MdtState {
    let parts = v.as_tuple().expect("state tuple");
    MdtState {
        tracking: parts[0].as_bool().unwrap(),
        blank_count: parts[1].as_int().unwrap() as usize,
        blank_max: parts[2].as_real().unwrap(),
        blank_max_idx: parts[3].as_int().unwrap() as usize,
        epoch_value: parts[4].as_real().unwrap(),
        epoch_idx: parts[5].as_int().unwrap() as usize,
        next_idx: parts[6].as_int().unwrap() as usize,
        peaks: parts[7].as_int_set().unwrap().clone(),
    }
}

/// The threshold-evolution transition as a fold operation.
fn op_mdt_step(params: MdtParams) -> Op {
    let ty = state_type();
    Op::new(
        "mdt-step",
        2,
        move |t| {
            if t[0] == ty && t[1] == CostType::Real {
                Ok(ty.clone())
            } else {
                Err(Error::Type("threshold step needs (state, real)".into()))
            }
        },
        move |v| {
            let s = decode_state(&v[0]);
            let y = v[1].as_real().unwrap();
            let (next, _) = mdt_thev(&s, y, &params);
            encode_state(&next)
        },
    )
}

fn rectified_schema() -> std::sync::Arc<DataItemSchema> {
    DataItemSchema::reals(&["v"])
}

/// The detector as a single iterated fold over rectified samples.
pub fn mdt_expr(params: &MdtParams) -> Result<QreExpr> {
    params.validate()?;
    let schema = rectified_schema();
    let body = QreExpr::basic(
        schema.clone(),
        Predicate::True,
        CostTerm::apply(
            op_mdt_step(params.clone()),
            vec![CostTerm::param("st"), CostTerm::field(&schema, "v")?],
        ),
        &[Parameter::new("st", state_type())],
    )?;
    QreExpr::bind(
        QreExpr::iter("st", body)?,
        "st",
        encode_state(&MdtState::initial(params)),
    )
}

fn annotation(signal: &Signal, params: &MdtParams, peaks: &BTreeSet<i64>) -> PeakAnnotation {
    PeakAnnotation {
        detector: "mdt".into(),
        settings: format!(
            "bl={} decay={} pmin={} pinit={}",
            params.bl, params.decay, params.pmin, params.pinit
        ),
        peaks: peaks
            .iter()
            .map(|&i| Peak {
                index: i as usize,
                time: signal.times()[i as usize],
            })
            .collect(),
    }
}

/// Runs the detector through the compiled expression engine.
pub fn detect_mdt(signal: &Signal, params: &MdtParams) -> Result<PeakAnnotation> {
    let expr = mdt_expr(params)?;
    let mut ev = compile_streaming(&expr, &ParameterValuation::empty())?;
    for &y in signal.rectified().values() {
        ev.step(&crate::schema::DataItem::real(y))?;
    }
    let peaks = match ev.output() {
        Some(v) => decode_state(v).peaks,
        None => BTreeSet::new(),
    };
    Ok(annotation(signal, params, &peaks))
}

/// Plain imperative loop over the same transition; also returns the
/// per-sample threshold while tracking (None inside blanking windows).
pub fn detect_mdt_direct(
    signal: &Signal,
    params: &MdtParams,
) -> Result<(PeakAnnotation, Vec<Option<f64>>)> {
    params.validate()?;
    let mut state = MdtState::initial(params);
    let mut trace = Vec::with_capacity(signal.len());
    for &y in signal.rectified().values() {
        trace.push(state
            .tracking
            .then(|| state.threshold(state.next_idx, params)));
        let (next, _) = mdt_thev(&state, y, params);
        state = next;
    }
    Ok((annotation(signal, params, &state.peaks), trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MdtParams {
        MdtParams {
            bl: 5,
            decay: 0.05,
            pmin: 1.0,
            pinit: 10.0,
        }
    }

    fn signal(vals: Vec<f64>) -> Signal {
        Signal::from_values(vals, 0.001).unwrap()
    }

    #[test]
    fn quiet_signal_threshold_converges_to_floor() {
        let p = params();
        let sig = signal(vec![0.1; 400]);
        let (ann, trace) = detect_mdt_direct(&sig, &p).unwrap();
        assert!(ann.peaks.is_empty());
        let last = trace.last().unwrap().unwrap();
        assert_eq!(last, p.pmin);
        // once clipped, the threshold stays at the floor
        let first_floor = trace
            .iter()
            .position(|t| t.unwrap() == p.pmin)
            .expect("threshold reaches the floor");
        assert!(trace[first_floor..].iter().all(|t| t.unwrap() == p.pmin));
    }

    #[test]
    fn single_spike_resets_threshold_to_fraction_of_maximum() {
        let p = params();
        let mut vals = vec![0.0; 100];
        vals[20] = 50.0;
        let sig = signal(vals);
        let (ann, trace) = detect_mdt_direct(&sig, &p).unwrap();
        assert_eq!(ann.peaks.len(), 1);
        assert_eq!(ann.peaks[0].index, 20);
        // first tracking sample after the window sees the reset value with
        // one decay step applied
        let reopen = 20 + p.bl + 1;
        let expected = (RESET_FRACTION * 50.0 * (-p.decay).exp()).max(p.pmin);
        assert!((trace[reopen].unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spike_inside_blanking_window_is_absorbed() {
        let p = params();
        let mut vals = vec![0.0; 100];
        vals[20] = 50.0;
        vals[20 + p.bl - 1] = 60.0; // inside the window
        let sig = signal(vals);
        let (ann, _) = detect_mdt_direct(&sig, &p).unwrap();
        assert_eq!(ann.peaks.len(), 1);
        // the absorbed spike still drives the reset value
        let (ann2, trace) = detect_mdt_direct(&sig, &p).unwrap();
        let reopen = 20 + p.bl + 1;
        let expected = (RESET_FRACTION * 60.0 * (-p.decay).exp()).max(p.pmin);
        assert!((trace[reopen].unwrap() - expected).abs() < 1e-12);
        assert_eq!(ann2.peaks.len(), 1);
    }

    #[test]
    fn engine_and_direct_loop_agree_exactly() {
        let p = MdtParams {
            bl: 7,
            decay: 0.02,
            pmin: 0.5,
            pinit: 8.0,
        };
        // deterministic pseudo-random spiky signal
        let vals: Vec<f64> = (0..500u32)
            .map(|k| {
                let r = (k.wrapping_mul(2654435761) >> 16) % 100;
                if r < 4 {
                    20.0 + (r as f64)
                } else {
                    (r as f64) / 50.0
                }
            })
            .collect();
        let sig = signal(vals);
        let engine = detect_mdt(&sig, &p).unwrap();
        let (direct, _) = detect_mdt_direct(&sig, &p).unwrap();
        let ei: Vec<usize> = engine.peaks.iter().map(|pk| pk.index).collect();
        let di: Vec<usize> = direct.peaks.iter().map(|pk| pk.index).collect();
        assert_eq!(ei, di);
        assert!(!ei.is_empty());
    }

    #[test]
    fn inter_event_trace_matches_closed_form() {
        let p = params();
        let mut vals = vec![0.0; 300];
        vals[30] = 40.0;
        vals[160] = 80.0;
        let sig = signal(vals);
        let (_, trace) = detect_mdt_direct(&sig, &p).unwrap();
        // between the first window close and the second spike, the threshold
        // follows reset · e^{-λ(t - t_m - bl)} clipped at the floor, with
        // t_m the window maximum's sample (the spike itself here)
        let tm = 30;
        let close = tm + p.bl;
        for t in close + 1..160 {
            let expected = (RESET_FRACTION * 40.0 * (-p.decay * (t - tm - p.bl) as f64).exp())
                .max(p.pmin);
            let got = trace[t].unwrap();
            assert!(
                (got - expected).abs() <= 1e-9,
                "sample {t}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn zero_signal_yields_empty_annotation() {
        let sig = signal(vec![0.0; 50]);
        let ann = detect_mdt(&sig, &params()).unwrap();
        assert!(ann.peaks.is_empty());
    }

    #[test]
    fn ramp_spike_flagged_before_apex() {
        let p = MdtParams {
            bl: 10,
            decay: 0.05,
            pmin: 0.2,
            pinit: 2.0,
        };
        let mut vals = vec![0.0; 120];
        // ramp up to an apex at sample 64
        for (k, step) in (60..=64).zip([3.0, 6.0, 9.0, 12.0, 15.0]) {
            vals[k] = step;
        }
        let sig = signal(vals);
        let (ann, trace) = detect_mdt_direct(&sig, &p).unwrap();
        assert_eq!(ann.peaks.len(), 1);
        let flag = ann.peaks[0].index;
        assert!(flag < 64, "flag at {flag} should precede the apex");
        assert!(trace[flag].unwrap() < 3.0 + 1e-12);
    }
}
