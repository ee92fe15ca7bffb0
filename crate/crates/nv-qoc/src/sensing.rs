//! Pulsed magnetometry protocols: Ramsey, spin echo and multi-pulse
//! dynamical decoupling.
//!
//! Rotations are instantaneous hard pulses, so a sequence is fully described
//! by its rotation instants and the free precession between them. The field
//! enters through the accumulated phase `phi = gamma * int M(t) B(t) dt`
//! where the modulation function `M(t)` is +1 after the opening pi/2 and
//! flips sign at every pi rotation. Decoherence is a phenomenological
//! multiplicative envelope on the readout contrast; the dynamics themselves
//! stay unitary.

use std::fmt;
use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::costs::{j_fisher, FisherOptions};
use crate::crab::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::report::StopReason;

/// Relative tolerance of the adaptive quadrature used for phase integrals.
pub const QUAD_REL_TOL: f64 = 1e-10;

/// Rotation axis of a hard pulse, in the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationAxis {
    X,
    Y,
}

/// One event of a sensing sequence. Rotations are instantaneous; free
/// precession advances the clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceEvent {
    Rotation { angle: f64, axis: RotationAxis, at: f64 },
    FreePrecession { duration: f64 },
}

/// How a sequence dephases: no pi pulses means the inhomogeneous `T2*`
/// applies, any refocusing pulse upgrades the coherence time to `T2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceClass {
    RamseyLike,
    EchoLike,
}

/// A validated hard-pulse sequence.
///
/// Every sequence opens with a pi/2 rotation at t = 0; interior rotations
/// must be pi pulses (they toggle the modulation function); an optional
/// closing pi/2 may sit at the very end. Rotation instants must agree with
/// the accumulated free precession.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSequence {
    events: Vec<SequenceEvent>,
    pi_times: Vec<f64>,
    total_time: f64,
}

const ANGLE_TOL: f64 = 1e-9;

impl SensingSequence {
    pub fn new(events: Vec<SequenceEvent>) -> Result<SensingSequence> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        match events.first() {
            Some(SequenceEvent::Rotation { angle, at, .. })
                if (angle - half_pi).abs() <= ANGLE_TOL && at.abs() <= ANGLE_TOL => {}
            _ => {
                return Err(Error::InvalidSequence {
                    detail: "sequence must open with a pi/2 rotation at t = 0".into(),
                })
            }
        }

        let mut clock = 0.0f64;
        let mut pi_times = Vec::new();
        let mut closed = false;
        for (idx, ev) in events.iter().enumerate().skip(1) {
            if closed {
                return Err(Error::InvalidSequence {
                    detail: "no events may follow the closing pi/2 rotation".into(),
                });
            }
            match *ev {
                SequenceEvent::FreePrecession { duration } => {
                    if !duration.is_finite() || duration <= 0.0 {
                        return Err(Error::InvalidSequence {
                            detail: format!("free precession duration {duration} must be positive"),
                        });
                    }
                    clock += duration;
                }
                SequenceEvent::Rotation { angle, at, .. } => {
                    if (at - clock).abs() > 1e-9 * clock.max(1.0) {
                        return Err(Error::InvalidSequence {
                            detail: format!(
                                "rotation instant {at} does not match the elapsed time {clock} (event {idx})"
                            ),
                        });
                    }
                    if (angle - pi).abs() <= ANGLE_TOL {
                        pi_times.push(clock);
                    } else if (angle - half_pi).abs() <= ANGLE_TOL {
                        // Only valid as the final, phase-to-population readout pulse.
                        closed = true;
                    } else {
                        return Err(Error::InvalidSequence {
                            detail: format!(
                                "rotation angle {angle} is neither pi/2 nor pi (event {idx})"
                            ),
                        });
                    }
                }
            }
        }
        if clock <= 0.0 {
            return Err(Error::InvalidSequence {
                detail: "sequence contains no free precession".into(),
            });
        }
        Ok(SensingSequence { events, pi_times, total_time: clock })
    }

    /// Free induction: pi/2, precess for `tau`, pi/2.
    pub fn ramsey(tau: f64) -> Result<SensingSequence> {
        let h = std::f64::consts::FRAC_PI_2;
        SensingSequence::new(vec![
            SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: 0.0 },
            SequenceEvent::FreePrecession { duration: tau },
            SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: tau },
        ])
    }

    /// Hahn echo: pi/2, precess tau, pi, precess tau, pi/2. Total time 2 tau.
    pub fn echo(tau: f64) -> Result<SensingSequence> {
        let h = std::f64::consts::FRAC_PI_2;
        SensingSequence::new(vec![
            SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: 0.0 },
            SequenceEvent::FreePrecession { duration: tau },
            SequenceEvent::Rotation { angle: std::f64::consts::PI, axis: RotationAxis::Y, at: tau },
            SequenceEvent::FreePrecession { duration: tau },
            SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: 2.0 * tau },
        ])
    }

    /// CPMG with `n` pi pulses at `(k - 1/2) * total_time / n`.
    pub fn cpmg(n: usize, total_time: f64) -> Result<SensingSequence> {
        if n == 0 {
            return Err(Error::InvalidSequence {
                detail: "cpmg needs at least one pi pulse".into(),
            });
        }
        if !total_time.is_finite() || total_time <= 0.0 {
            return Err(Error::InvalidSequence {
                detail: format!("cpmg total time {total_time} must be positive"),
            });
        }
        let times: Vec<f64> = (1..=n)
            .map(|k| (k as f64 - 0.5) * total_time / n as f64)
            .collect();
        SensingSequence::from_pi_times(total_time, &times)
    }

    /// General dynamical-decoupling sequence: pi/2 at 0, pi pulses at the
    /// given strictly increasing interior instants, closing pi/2 at
    /// `total_time`.
    pub fn from_pi_times(total_time: f64, pi_times: &[f64]) -> Result<SensingSequence> {
        if !total_time.is_finite() || total_time <= 0.0 {
            return Err(Error::InvalidSequence {
                detail: format!("total time {total_time} must be positive"),
            });
        }
        let h = std::f64::consts::FRAC_PI_2;
        let mut events = vec![SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: 0.0 }];
        let mut prev = 0.0f64;
        for &t in pi_times {
            if !t.is_finite() || t <= prev || t >= total_time {
                return Err(Error::InvalidSequence {
                    detail: format!("pi-pulse instant {t} breaks the strict ordering in (0, {total_time})"),
                });
            }
            events.push(SequenceEvent::FreePrecession { duration: t - prev });
            events.push(SequenceEvent::Rotation {
                angle: std::f64::consts::PI,
                axis: RotationAxis::Y,
                at: t,
            });
            prev = t;
        }
        events.push(SequenceEvent::FreePrecession { duration: total_time - prev });
        events.push(SequenceEvent::Rotation { angle: h, axis: RotationAxis::X, at: total_time });
        SensingSequence::new(events)
    }

    pub fn events(&self) -> &[SequenceEvent] {
        &self.events
    }

    /// Instants of the pi rotations, ascending.
    pub fn pi_times(&self) -> &[f64] {
        &self.pi_times
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn class(&self) -> SequenceClass {
        if self.pi_times.is_empty() {
            SequenceClass::RamseyLike
        } else {
            SequenceClass::EchoLike
        }
    }
}

/// The piecewise-constant modulation function of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    flips: Vec<f64>,
    t_end: f64,
}

impl Modulation {
    /// +1 or -1 inside `[0, total_time)`, zero outside. Intervals are closed
    /// on the left: the sign has already flipped at a pi-pulse instant.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 || t >= self.t_end {
            return 0.0;
        }
        let flips_before = self.flips.partition_point(|&f| f <= t);
        if flips_before % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Sign-flip instants (the pi pulses), ascending.
    pub fn sign_flips(&self) -> &[f64] {
        &self.flips
    }

    /// Segment boundaries 0, flips..., total_time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.flips.len() + 2);
        b.push(0.0);
        b.extend_from_slice(&self.flips);
        b.push(self.t_end);
        b
    }
}

/// Modulation function of a validated sequence: +1 from the opening pi/2,
/// toggling at each pi rotation.
pub fn modulation_function(seq: &SensingSequence) -> Modulation {
    Modulation { flips: seq.pi_times.clone(), t_end: seq.total_time }
}

/// The field along the NV axis, in mT, as a function of time in us.
#[derive(Clone)]
pub enum FieldSignal {
    Dc { b: f64 },
    /// `b(t) = amplitude * sin(omega t + phase)`.
    Ac { amplitude: f64, omega: f64, phase: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for FieldSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSignal::Dc { b } => write!(f, "Dc {{ b: {b} }}"),
            FieldSignal::Ac { amplitude, omega, phase } => {
                write!(f, "Ac {{ amplitude: {amplitude}, omega: {omega}, phase: {phase} }}")
            }
            FieldSignal::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl FieldSignal {
    pub fn sample(&self, t: f64) -> f64 {
        match self {
            FieldSignal::Dc { b } => *b,
            FieldSignal::Ac { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
            FieldSignal::Custom(f) => f(t),
        }
    }
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss rule at the odd indices and the center.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn finite_sample(signal: &FieldSignal, t: f64) -> Result<f64> {
    let v = signal.sample(t);
    if !v.is_finite() {
        return Err(Error::NonFinite { what: "field sample" });
    }
    Ok(v)
}

/// One Gauss-Kronrod 7-15 evaluation: (integral estimate, error estimate).
fn gk15(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    for (j, (&x, &wk)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = h * x;
        let pair = f(c - dx)? + f(c + dx)?;
        resk += wk * pair;
        if j % 2 == 1 {
            resg += WG[(j - 1) / 2] * pair;
        }
    }
    Ok((resk * h, ((resk - resg) * h).abs()))
}

/// Adaptive bisection on top of GK15; accepts a segment once the embedded
/// error estimate meets the relative tolerance (with a rounding-level
/// absolute floor so vanishing integrals terminate). The depth cap bounds
/// work on pathological integrands at the price of the tolerance.
fn adaptive_quad(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    rel_tol: f64,
    depth: usize,
) -> Result<f64> {
    let (integral, err) = gk15(f, a, b)?;
    let floor = f64::EPSILON * (1.0 + (b - a).abs());
    if err <= rel_tol * integral.abs() + floor || depth == 0 {
        return Ok(integral);
    }
    let m = 0.5 * (a + b);
    Ok(adaptive_quad(f, a, m, rel_tol, depth - 1)? + adaptive_quad(f, m, b, rel_tol, depth - 1)?)
}

const QUAD_MAX_DEPTH: usize = 24;

fn integrate_signal(signal: &FieldSignal, a: f64, b: f64) -> Result<f64> {
    adaptive_quad(&|t| finite_sample(signal, t), a, b, QUAD_REL_TOL, QUAD_MAX_DEPTH)
}

/// Phase accumulated in a Ramsey experiment: `gamma * int_0^tau B dt`.
pub fn ramsey_phase(signal: &FieldSignal, tau: f64, gamma: f64) -> Result<f64> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParameter { what: "tau", value: tau });
    }
    Ok(gamma * integrate_signal(signal, 0.0, tau)?)
}

/// Phase accumulated in a Hahn echo of total time `2 tau`:
/// `gamma * (int_0^tau B dt - int_tau^{2 tau} B dt)`. A constant field
/// cancels exactly.
pub fn echo_phase(signal: &FieldSignal, tau: f64, gamma: f64) -> Result<f64> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParameter { what: "tau", value: tau });
    }
    let first = integrate_signal(signal, 0.0, tau)?;
    let second = integrate_signal(signal, tau, 2.0 * tau)?;
    Ok(gamma * (first - second))
}

/// Phase accumulated under an arbitrary sequence:
/// `gamma * int_0^T M(t) B(t) dt`, integrated piecewise between sign flips
/// so the quadrature only ever sees a smooth integrand.
pub fn dd_phase(seq: &SensingSequence, signal: &FieldSignal, gamma: f64) -> Result<f64> {
    let modulation = modulation_function(seq);
    let bounds = modulation.boundaries();
    let mut total = 0.0;
    let mut sign = 1.0;
    for w in bounds.windows(2) {
        if w[1] > w[0] {
            total += sign * integrate_signal(signal, w[0], w[1])?;
        }
        sign = -sign;
    }
    Ok(gamma * total)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Spectral weight `|y(omega)|^2` of the modulation function over the
/// sequence window, normalized to unit peak over the requested grid. A
/// Ramsey sequence peaks at omega = 0; CPMG-N peaks at the odd harmonics of
/// `pi / tau_spacing`.
pub fn filter_function(seq: &SensingSequence, omegas: &[f64]) -> Vec<f64> {
    let modulation = modulation_function(seq);
    let bounds = modulation.boundaries();
    let mut weights: Vec<f64> = omegas
        .iter()
        .map(|&w| {
            // Exact segment transform: int_t1^t2 e^{-i w t} dt has magnitude
            // len * sinc(w len / 2) and phase -w (t1 + t2) / 2.
            let mut re = 0.0;
            let mut im = 0.0;
            let mut sign = 1.0;
            for seg in bounds.windows(2) {
                let len = seg[1] - seg[0];
                let mid = 0.5 * (seg[0] + seg[1]);
                let mag = sign * len * sinc(0.5 * w * len);
                re += mag * (w * mid).cos();
                im -= mag * (w * mid).sin();
                sign = -sign;
            }
            re * re + im * im
        })
        .collect();
    let peak = weights.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak > 0.0 {
        for v in weights.iter_mut() {
            *v /= peak;
        }
    }
    weights
}

/// Phenomenological coherence decay. Ramsey-class sequences dephase with
/// the inhomogeneous time `t2_star` (plain exponential); echo-class
/// sequences decay as `exp(-(t/t2)^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceEnvelope {
    t2_star: f64,
    t2: f64,
    exponent: f64,
}

impl DecoherenceEnvelope {
    pub fn new(t2_star: f64, t2: f64, exponent: f64) -> Result<DecoherenceEnvelope> {
        if !t2_star.is_finite() || t2_star <= 0.0 {
            return Err(Error::InvalidParameter { what: "t2_star", value: t2_star });
        }
        if !t2.is_finite() || t2 <= 0.0 {
            return Err(Error::InvalidParameter { what: "t2", value: t2 });
        }
        if !exponent.is_finite() || exponent < 1.0 {
            return Err(Error::InvalidParameter { what: "exponent", value: exponent });
        }
        Ok(DecoherenceEnvelope { t2_star, t2, exponent })
    }

    pub fn t2_star(&self) -> f64 {
        self.t2_star
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Multiplicative coherence weight after evolving for `t`.
    pub fn weight(&self, class: SequenceClass, t: f64) -> f64 {
        match class {
            SequenceClass::RamseyLike => (-t / self.t2_star).exp(),
            SequenceClass::EchoLike => (-(t / self.t2).powf(self.exponent)).exp(),
        }
    }
}

/// Outcome statistics of repeated projective readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutSummary {
    pub shots: usize,
    /// Shots that returned the bright (m_s = 0) outcome.
    pub bright_counts: usize,
    /// Estimated bright probability.
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p_hat (1 - p_hat) / shots)`.
    pub std_err: f64,
    /// The analytic probability the shots were drawn from.
    pub p_true: f64,
}

/// Draws `shots` Bernoulli readouts with
/// `p(bright) = (1 + contrast * W * cos(phase)) / 2`, where `W` is the
/// decoherence weight at `t_total` (1 without an envelope).
pub fn simulate_readout(
    phase: f64,
    contrast: f64,
    envelope: Option<&DecoherenceEnvelope>,
    class: SequenceClass,
    t_total: f64,
    shots: usize,
    seed: u64,
) -> Result<ReadoutSummary> {
    if !phase.is_finite() {
        return Err(Error::NonFinite { what: "phase" });
    }
    if !contrast.is_finite() || contrast <= 0.0 || contrast > 1.0 {
        return Err(Error::InvalidParameter { what: "contrast", value: contrast });
    }
    if !t_total.is_finite() || t_total < 0.0 {
        return Err(Error::InvalidParameter { what: "t_total", value: t_total });
    }
    if shots == 0 {
        return Err(Error::InvalidParameter { what: "shots", value: 0.0 });
    }
    let w = envelope.map_or(1.0, |e| e.weight(class, t_total));
    let p_true = 0.5 * (1.0 + contrast * w * phase.cos());
    // |contrast * w * cos| <= 1 pins the probability into [0, 1].
    assert!((0.0..=1.0).contains(&p_true), "readout probability {p_true} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bright_counts = (0..shots).filter(|_| rng.random::<f64>() < p_true).count();
    let p_hat = bright_counts as f64 / shots as f64;
    let std_err = (p_hat * (1.0 - p_hat) / shots as f64).sqrt();
    Ok(ReadoutSummary { shots, bright_counts, p_hat, std_err, p_true })
}

/// Shot-noise-limited sensitivity `eta = sigma * sqrt(t_m) / |slope_max|`
/// in field units per square-root bandwidth.
pub fn sensitivity_eta(slope_max: f64, sigma: f64, t_m: f64) -> Result<f64> {
    if !slope_max.is_finite() {
        return Err(Error::NonFinite { what: "slope_max" });
    }
    if slope_max == 0.0 {
        return Err(Error::ZeroSlope);
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter { what: "sigma", value: sigma });
    }
    if !t_m.is_finite() || t_m < 0.0 {
        return Err(Error::InvalidParameter { what: "t_m", value: t_m });
    }
    Ok(sigma * t_m.sqrt() / slope_max.abs())
}

/// Measurement model and search space for pulse-timing optimization: `n_pulses`
/// free pi-pulse instants inside a window of `total_time`, sensing an ac
/// field of known angular frequency `omega` whose amplitude is estimated at
/// the working point `b0`. When `optimize_phase` is set, the signal phase is
/// an additional search parameter.
#[derive(Debug, Clone)]
pub struct DdTimingProblem {
    pub total_time: f64,
    pub n_pulses: usize,
    pub omega: f64,
    pub b0: f64,
    pub gamma: f64,
    pub contrast: f64,
    pub envelope: Option<DecoherenceEnvelope>,
    pub n_meas: f64,
    pub optimize_phase: bool,
    pub fisher: FisherOptions,
}

/// Result of a timing optimization.
#[derive(Debug, Clone)]
pub struct DdTimingReport {
    /// Optimized pi-pulse instants, ascending.
    pub pi_times: Vec<f64>,
    /// Optimized signal phase, when it was a free parameter.
    pub signal_phase: Option<f64>,
    /// Best inverse-Fisher cost.
    pub final_cost: f64,
    /// Best-so-far cost after each objective evaluation.
    pub cost_trace: Vec<f64>,
    pub evaluations: usize,
    pub stop_reason: StopReason,
}

/// Evaluates the inverse-Fisher cost of one candidate timing. Exposed so
/// optimized timings can be compared against fixed baselines (CPMG, say)
/// under the identical measurement model.
pub fn dd_timing_cost(problem: &DdTimingProblem, pi_times: &[f64], phase: f64) -> Result<f64> {
    let seq = SensingSequence::from_pi_times(problem.total_time, pi_times)?;
    let class = seq.class();
    let w = problem
        .envelope
        .as_ref()
        .map_or(1.0, |e| e.weight(class, problem.total_time));
    let probs = |b: f64| -> Result<Vec<f64>> {
        let signal = FieldSignal::Ac { amplitude: b, omega: problem.omega, phase };
        let phi = dd_phase(&seq, &signal, problem.gamma)?;
        let p = 0.5 * (1.0 + problem.contrast * w * phi.cos());
        Ok(vec![p, 1.0 - p])
    };
    j_fisher(probs, problem.b0, problem.n_meas, &problem.fisher)
}

/// Nelder-Mead search over the free pulse instants (plus, optionally, the
/// signal phase), minimizing the inverse Fisher information of the two-
/// outcome readout. Candidates with invalid pulse ordering evaluate to the
/// worst-value sentinel, steering the simplex back into the feasible set.
///
/// `x0` seeds the search; `None` starts from the CPMG timing with phase
/// `pi/2` (which aligns an ac signal's zero crossings with evenly spaced
/// pulses).
pub fn optimize_dd_timing(
    problem: &DdTimingProblem,
    x0: Option<&[f64]>,
    nm: &NelderMeadOptions,
) -> Result<DdTimingReport> {
    if problem.n_pulses == 0 {
        return Err(Error::InvalidParameter { what: "n_pulses", value: 0.0 });
    }
    let n_params = problem.n_pulses + usize::from(problem.optimize_phase);
    if n_params > 16 {
        return Err(Error::InvalidParameter { what: "free parameters", value: n_params as f64 });
    }

    let default_start: Vec<f64> = {
        let mut v: Vec<f64> = (1..=problem.n_pulses)
            .map(|k| (k as f64 - 0.5) * problem.total_time / problem.n_pulses as f64)
            .collect();
        if problem.optimize_phase {
            v.push(std::f64::consts::FRAC_PI_2);
        }
        v
    };
    let start = match x0 {
        Some(x) => {
            if x.len() != n_params {
                return Err(Error::GridMismatch { expected: n_params, found: x.len() });
            }
            x.to_vec()
        }
        None => default_start,
    };

    let split = |x: &[f64]| -> (Vec<f64>, f64) {
        let times = x[..problem.n_pulses].to_vec();
        let phase = if problem.optimize_phase {
            x[problem.n_pulses]
        } else {
            std::f64::consts::FRAC_PI_2
        };
        (times, phase)
    };

    // Reject a structurally broken start (e.g. unordered times) eagerly.
    {
        let (times, phase) = split(&start);
        dd_timing_cost(problem, &times, phase)?;
    }

    let objective = |x: &[f64]| -> f64 {
        let (times, phase) = split(x);
        dd_timing_cost(problem, &times, phase).unwrap_or(f64::NAN)
    };
    let res = nelder_mead(objective, &start, nm)?;
    let (times, phase) = split(&res.x);
    Ok(DdTimingReport {
        pi_times: times,
        signal_phase: problem.optimize_phase.then_some(phase),
        final_cost: res.fx,
        cost_trace: res.best_trace,
        evaluations: res.evaluations,
        stop_reason: res.stop_reason,
    })
}
