//! Characteristic integration and blow-up detection.
//!
//! Along a characteristic x(t) the cold-plasma system reduces to
//!
//! ```text
//! dv/dt = -B0 L v - E0(x),      dx/dt = v,
//! ```
//!
//! and the velocity-derivative matrix V = (dV_i/dx_j) obeys the matrix
//! Riccati equation dV/dt = -V^2 - B0 L V - S0(x) with S0 the field
//! gradient. The Radon lemma trades the Riccati equation for the linear
//! system Y' = M(t) Y on Y = (Q; P) with
//!
//! ```text
//! M = |  0     I    |,     Q(0) = I,  P(0) = V(0),
//!     | -S0  -B0 L  |
//! ```
//!
//! and V(t) = P(t) Q(t)^{-1} exactly while det Q(t) > 0. The classical
//! solution loses smoothness exactly at the first zero of det Q, so blow-up
//! detection is a root search on det Q: linear, non-stiff, and valid through
//! the blow-up time itself. Direct Riccati integration is kept as an
//! independent oracle; it must escape where det Q vanishes.

use serde::{Deserialize, Serialize};

use crate::fields::FieldSpec;
use crate::ode::{self, OdeOptions, StepOutcome, Trajectory};
use crate::smallmat::{expm, Mat2, Mat4};
use crate::{Error, Result};

/// State of one characteristic: velocity, position, time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharState {
    pub v: [f64; 2],
    pub x: [f64; 2],
    pub t: f64,
}

/// State of the linearized system at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinState {
    pub q: Mat2,
    pub p: Mat2,
    pub t: f64,
}

impl LinState {
    pub fn det_q(&self) -> f64 {
        self.q.det()
    }

    /// V = P Q^{-1}; valid while det Q is bounded away from zero.
    pub fn riccati_state(&self) -> Result<Mat2> {
        Ok(self.p.mul(&self.q.inverse()?))
    }
}

/// Integration tolerances, horizon and guards for characteristic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub horizon: f64,
    pub blowup_velocity_cap: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            horizon: 10.0,
            blowup_velocity_cap: 1e6,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "integrator tolerances must be positive".into(),
            ));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(
                "integration horizon must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            ..OdeOptions::default()
        }
    }
}

/// Why a trajectory stopped before its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    /// |v| crossed the configured cap at this time.
    VelocityCap(f64),
    /// Riccati entries escaped past the cap at this time.
    RiccatiEscape(f64),
}

/// Dense characteristic trajectory with per-step states.
#[derive(Debug, Clone)]
pub struct CharTrajectory {
    traj: Trajectory<4>,
    pub states: Vec<CharState>,
    pub truncation: Option<Truncation>,
}

impl CharTrajectory {
    pub fn t_end(&self) -> f64 {
        self.traj.t_end
    }

    pub fn state_at(&self, t: f64) -> CharState {
        let y = self.traj.eval(t);
        CharState {
            v: [y[0], y[1]],
            x: [y[2], y[3]],
            t: t.clamp(self.traj.t_start, self.traj.t_end),
        }
    }
}

/// The constant fundamental matrix of the linearized system for an affine
/// field gradient `s0`.
pub fn radon_matrix(s0: &Mat2, b0: f64) -> Mat4 {
    Mat4::from_blocks(
        &Mat2::zero(),
        &Mat2::identity(),
        &s0.scale(-1.0),
        &Mat2::L.scale(-b0),
    )
}

/// Integrate one characteristic of dv/dt = -B0 L v - E0(x), dx/dt = v over
/// [0, horizon].
///
/// Exceeding `blowup_velocity_cap` truncates the run and flags it rather
/// than failing: a runaway velocity is a diagnostic, not an integrator
/// error. Field range errors (radial profiles only) abort with the
/// underlying error.
pub fn integrate_characteristic(
    f: &FieldSpec,
    init: &CharState,
    b0: f64,
    s: &IntegratorSettings,
) -> Result<CharTrajectory> {
    s.validate()?;
    if !init.v.iter().chain(init.x.iter()).all(|z| z.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial characteristic state must be finite".into(),
        ));
    }
    let field_err = std::cell::RefCell::new(None::<Error>);
    let rhs = |_t: f64, y: &[f64; 4]| -> [f64; 4] {
        let v = [y[0], y[1]];
        let x = [y[2], y[3]];
        match f.eval(x) {
            Ok(e0) => [
                -b0 * v[1] - e0[0],
                b0 * v[0] - e0[1],
                v[0],
                v[1],
            ],
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                [f64::NAN; 4]
            }
        }
    };
    let mut truncation = None;
    let cap = s.blowup_velocity_cap;
    let run = ode::integrate(
        rhs,
        init.t,
        [init.v[0], init.v[1], init.x[0], init.x[1]],
        init.t + s.horizon,
        &s.ode_options(),
        |seg, y| {
            if y[0].hypot(y[1]) > cap {
                truncation = Some(Truncation::VelocityCap(seg.t1));
                StepOutcome::Halt
            } else {
                StepOutcome::Continue
            }
        },
    );
    let traj = match run {
        Ok(t) => t,
        Err(e) => {
            return Err(field_err.into_inner().unwrap_or(e));
        }
    };
    let mut states: Vec<CharState> = Vec::with_capacity(traj.segments.len() + 1);
    states.push(*init);
    for seg in &traj.segments {
        let y = seg.eval(seg.t1);
        states.push(CharState {
            v: [y[0], y[1]],
            x: [y[2], y[3]],
            t: seg.t1,
        });
    }
    Ok(CharTrajectory {
        traj,
        states,
        truncation,
    })
}

enum LinInner {
    /// Affine field: Y(t) = expm(M t) Y(0), exact propagator.
    Propagator { m: Mat4, y0: Mat4 },
    /// General field: the 8 entries of (Q; P) stepped along the trajectory.
    Stepped(Trajectory<8>),
}

/// Dense solution of the linearized system Y' = M(t) Y.
pub struct LinTrajectory {
    inner: LinInner,
    pub horizon: f64,
    /// Spacing of the sample grid used for sign scanning.
    pub sample_dt: f64,
    pub states: Vec<LinState>,
}

impl LinTrajectory {
    pub fn state_at(&self, t: f64) -> Result<LinState> {
        let t = t.clamp(0.0, self.horizon);
        match &self.inner {
            LinInner::Propagator { m, y0 } => {
                let y = expm(m, t)?.mul(y0);
                Ok(LinState {
                    q: y.block(0, 0),
                    p: y.block(1, 0),
                    t,
                })
            }
            LinInner::Stepped(traj) => {
                let y = traj.eval(t);
                Ok(LinState {
                    q: Mat2::new(y[0], y[1], y[2], y[3]),
                    p: Mat2::new(y[4], y[5], y[6], y[7]),
                    t,
                })
            }
        }
    }

    pub fn detq_at(&self, t: f64) -> f64 {
        self.state_at(t).map(|s| s.det_q()).unwrap_or(f64::NAN)
    }

    /// det Q on the sample grid, for sign scanning and reporting.
    pub fn detq_samples(&self) -> Vec<(f64, f64)> {
        self.states.iter().map(|s| (s.t, s.det_q())).collect()
    }
}

/// Period hint 2 pi / (omega_+ + omega_-) for oscillatory affine spectra;
/// det Q oscillates no faster than this.
fn fast_period_hint(s0: &Mat2, b0: f64) -> Option<f64> {
    let lam = s0.trace();
    let k = s0.det();
    let b = b0 * b0 + lam;
    let disc = b * b - 4.0 * k;
    if disc < 0.0 || b <= 0.0 || k < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let wp2 = (b + sq) / 2.0;
    let wm2 = (b - sq) / 2.0;
    if wp2 <= 0.0 || wm2 < 0.0 {
        return None;
    }
    let sigma = wp2.sqrt() + wm2.sqrt();
    if sigma <= 0.0 {
        None
    } else {
        Some(2.0 * std::f64::consts::PI / sigma)
    }
}

/// Solve the linearized system along a characteristic trajectory with
/// initial data Q(0) = I, P(0) = `v0`.
///
/// Affine fields get the constant-coefficient propagator; radial fields are
/// stepped with S0(x(t)) evaluated from the dense trajectory. The sample
/// grid is tied to the fastest det Q oscillation in the affine case and to
/// the accepted steps otherwise.
pub fn integrate_linearized(
    f: &FieldSpec,
    traj: &CharTrajectory,
    v0: &Mat2,
    b0: f64,
    s: &IntegratorSettings,
) -> Result<LinTrajectory> {
    s.validate()?;
    match f {
        FieldSpec::Affine(a) => linearized_affine(&a.matrix(), v0, b0, s),
        FieldSpec::Radial(_) => {
            let horizon = s.horizon.min(traj.t_end());
            if horizon + 1e-12 < s.horizon && traj.truncation.is_none() {
                return Err(Error::InvalidParameter(format!(
                    "characteristic trajectory ends at {} but the linearized run needs {}",
                    traj.t_end(),
                    s.horizon
                )));
            }
            let inner = integrate_linearized_stepped(f, traj, v0, b0, s, horizon)?;
            let mut states = Vec::new();
            let mut sample_dt = horizon;
            for seg in &inner.segments {
                // Eight interior samples per accepted step keeps the scan
                // spacing at h/8 <= max_step/8.
                let h = seg.t1 - seg.t0;
                sample_dt = sample_dt.min(h / 8.0);
                for j in 0..8 {
                    let t = seg.t0 + h * j as f64 / 8.0;
                    let y = seg.eval(t);
                    states.push(LinState {
                        q: Mat2::new(y[0], y[1], y[2], y[3]),
                        p: Mat2::new(y[4], y[5], y[6], y[7]),
                        t,
                    });
                }
            }
            let y = inner.y_end;
            states.push(LinState {
                q: Mat2::new(y[0], y[1], y[2], y[3]),
                p: Mat2::new(y[4], y[5], y[6], y[7]),
                t: inner.t_end,
            });
            Ok(LinTrajectory {
                inner: LinInner::Stepped(inner),
                horizon,
                sample_dt,
                states,
            })
        }
    }
}

/// Linearized solution for a constant field gradient, by exact propagation:
/// Y(t) = expm(M t) Y(0). No characteristic trajectory is needed because M
/// does not depend on position.
pub fn linearized_affine(
    s0: &Mat2,
    v0: &Mat2,
    b0: f64,
    s: &IntegratorSettings,
) -> Result<LinTrajectory> {
    s.validate()?;
    let m = radon_matrix(s0, b0);
    let y0 = Mat4::from_blocks(&Mat2::identity(), &Mat2::zero(), v0, &Mat2::zero());
    let horizon = s.horizon;
    let mut dt = horizon / 256.0;
    if let Some(t2) = fast_period_hint(s0, b0) {
        dt = dt.min(t2 / 16.0);
    }
    if s.max_step.is_finite() {
        dt = dt.min(s.max_step / 8.0);
    }
    let n = (horizon / dt).ceil() as usize;
    let n = n.clamp(16, 400_000);
    let lt = LinTrajectory {
        inner: LinInner::Propagator { m, y0 },
        horizon,
        sample_dt: horizon / n as f64,
        states: Vec::new(),
    };
    let mut states = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = horizon * i as f64 / n as f64;
        states.push(lt.state_at(t)?);
    }
    Ok(LinTrajectory { states, ..lt })
}

/// Always-stepped variant of the linearized solve, exposed so constant
/// fields can be cross-checked against the propagator path.
pub fn integrate_linearized_stepped(
    f: &FieldSpec,
    traj: &CharTrajectory,
    v0: &Mat2,
    b0: f64,
    s: &IntegratorSettings,
    horizon: f64,
) -> Result<Trajectory<8>> {
    let field_err = std::cell::RefCell::new(None::<Error>);
    let rhs = |t: f64, y: &[f64; 8]| -> [f64; 8] {
        let x = traj.state_at(t).x;
        let s0 = match f.gradient(x) {
            Ok(g) => g,
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                return [f64::NAN; 8];
            }
        };
        let q = Mat2::new(y[0], y[1], y[2], y[3]);
        let p = Mat2::new(y[4], y[5], y[6], y[7]);
        // Q' = P,  P' = -S0 Q - B0 L P with (L P) rows (p21, p22; -p11, -p12).
        let sq = s0.mul(&q);
        [
            p.a11,
            p.a12,
            p.a21,
            p.a22,
            -sq.a11 - b0 * p.a21,
            -sq.a12 - b0 * p.a22,
            -sq.a21 + b0 * p.a11,
            -sq.a22 + b0 * p.a12,
        ]
    };
    let y0 = [
        1.0, 0.0, 0.0, 1.0, v0.a11, v0.a12, v0.a21, v0.a22,
    ];
    ode::integrate(rhs, 0.0, y0, horizon, &s.ode_options(), |_, _| {
        StepOutcome::Continue
    })
    .map_err(|e| field_err.into_inner().unwrap_or(e))
}

/// Direct Riccati integration dV/dt = -V^2 - B0 L V - S0(x(t)), the
/// independent oracle for the linearized route.
#[derive(Debug, Clone)]
pub struct RiccatiTrajectory {
    traj: Trajectory<4>,
    /// Escape time estimate when the entries passed the cap.
    pub escaped: Option<f64>,
}

impl RiccatiTrajectory {
    pub fn t_end(&self) -> f64 {
        self.traj.t_end
    }

    pub fn state_at(&self, t: f64) -> Mat2 {
        let y = self.traj.eval(t);
        Mat2::new(y[0], y[1], y[2], y[3])
    }
}

/// Integrate the matrix Riccati equation along a characteristic.
///
/// Entry escape past `blowup_velocity_cap` truncates the run with the halt
/// time as the escape estimate; by the Radon equivalence that time brackets
/// the first zero of det Q.
pub fn integrate_riccati(
    f: &FieldSpec,
    traj: &CharTrajectory,
    v0: &Mat2,
    b0: f64,
    s: &IntegratorSettings,
) -> Result<RiccatiTrajectory> {
    s.validate()?;
    let horizon = s.horizon.min(traj.t_end());
    let field_err = std::cell::RefCell::new(None::<Error>);
    let rhs = |t: f64, y: &[f64; 4]| -> [f64; 4] {
        let x = traj.state_at(t).x;
        let s0 = match f.gradient(x) {
            Ok(g) => g,
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                return [f64::NAN; 4];
            }
        };
        let w = Mat2::new(y[0], y[1], y[2], y[3]);
        let w2 = w.mul(&w);
        // (L W) rows are (w21, w22) and (-w11, -w12).
        [
            -w2.a11 - b0 * w.a21 - s0.a11,
            -w2.a12 - b0 * w.a22 - s0.a12,
            -w2.a21 + b0 * w.a11 - s0.a21,
            -w2.a22 + b0 * w.a12 - s0.a22,
        ]
    };
    let cap = s.blowup_velocity_cap;
    let mut escaped = None;
    let run = ode::integrate(
        rhs,
        0.0,
        [v0.a11, v0.a12, v0.a21, v0.a22],
        horizon,
        &s.ode_options(),
        |seg, y| {
            let m = y.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if m > cap {
                escaped = Some(seg.t1);
                StepOutcome::Halt
            } else {
                StepOutcome::Continue
            }
        },
    );
    match run {
        Ok(traj) => Ok(RiccatiTrajectory { traj, escaped }),
        Err(Error::Integration { t, .. }) if field_err.borrow().is_none() => {
            // Step-size collapse at the singularity is itself the escape.
            Ok(RiccatiTrajectory {
                traj: Trajectory {
                    segments: Vec::new(),
                    t_start: 0.0,
                    t_end: t,
                    y_end: [f64::NAN; 4],
                    halted: true,
                    n_accepted: 0,
                    n_rejected: 0,
                },
                escaped: Some(t),
            })
        }
        Err(e) => Err(field_err.into_inner().unwrap_or(e)),
    }
}

/// Classification outcome for one initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlowupStatus {
    /// det Q stayed above the near-zero band over the whole horizon.
    Smooth(f64),
    /// det Q vanished at this time.
    BlowupAt(f64),
    Inconclusive(String),
}

/// Result of scanning det Q for its first zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupResult {
    pub status: BlowupStatus,
    pub detq_min: f64,
    pub t_star: Option<f64>,
    /// det Q touched zero without a sign change (double root).
    pub tangential: bool,
}

/// Margin under which a positive det Q minimum at the horizon is not
/// trusted as a smoothness verdict.
pub const DETQ_INCONCLUSIVE_BAND: f64 = 1e-6;

/// Locate the first zero of det Q from a dense series.
///
/// The sign scan runs over the sample grid; a sign change is sharpened by
/// bisection on the dense evaluator to a bracket of width 1e-8. A touch
/// below 1e-12 without sign change is classified as tangential blow-up; a
/// horizon minimum inside (0, 1e-6) is inconclusive.
pub fn detect_blowup(lin: &LinTrajectory) -> BlowupResult {
    let samples = lin.detq_samples();
    let mut detq_min = f64::INFINITY;
    let mut argmin = 0.0;
    let mut bracket: Option<(f64, f64)> = None;
    for w in samples.windows(2) {
        let (t0, d0) = w[0];
        let (t1, d1) = w[1];
        if d0 < detq_min {
            detq_min = d0;
            argmin = t0;
        }
        if d1 < detq_min {
            detq_min = d1;
            argmin = t1;
        }
        if bracket.is_none() && d0 > 0.0 && d1 <= 0.0 {
            bracket = Some((t0, t1));
        }
    }
    if let Some((a, b)) = bracket {
        let t_star = ode::bisect(|t| lin.detq_at(t), a, b, 1e-8);
        return BlowupResult {
            status: BlowupStatus::BlowupAt(t_star),
            detq_min: detq_min.min(0.0),
            t_star: Some(t_star),
            tangential: false,
        };
    }
    if detq_min <= 1e-12 {
        return BlowupResult {
            status: BlowupStatus::BlowupAt(argmin),
            detq_min,
            t_star: Some(argmin),
            tangential: true,
        };
    }
    if detq_min < DETQ_INCONCLUSIVE_BAND {
        return BlowupResult {
            status: BlowupStatus::Inconclusive(format!(
                "min det Q = {detq_min:.3e} is inside the near-zero band at the horizon"
            )),
            detq_min,
            t_star: None,
            tangential: false,
        };
    }
    BlowupResult {
        status: BlowupStatus::Smooth(lin.horizon),
        detq_min,
        t_star: None,
        tangential: false,
    }
}

/// Verdict of the zero-field criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointVerdict {
    Smooth,
    Blowup,
}

/// Closed-form classification for E0 = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E0ZeroResult {
    pub verdict: PointVerdict,
    /// The discriminant D0^2 - 4 J0 + 2 B0 xi0 - B0^2; smooth iff negative.
    pub value: f64,
    /// |value| within 1e-12 of the threshold.
    pub boundary: bool,
}

/// The E0 = 0 smoothness criterion: the solution stays classical for all
/// time iff D0^2 - 4 J0 + 2 B0 xi0 - B0^2 < 0.
pub fn e0zero_criterion(d0: f64, j0: f64, xi0: f64, b0: f64) -> E0ZeroResult {
    let value = d0 * d0 - 4.0 * j0 + 2.0 * b0 * xi0 - b0 * b0;
    E0ZeroResult {
        verdict: if value < 0.0 {
            PointVerdict::Smooth
        } else {
            PointVerdict::Blowup
        },
        value,
        boundary: value.abs() < 1e-12,
    }
}

/// Write a characteristic trace with its linearized state as CSV with
/// 17-significant-digit floats.
pub fn trace_csv<W: std::io::Write>(
    w: &mut W,
    traj: &CharTrajectory,
    lin: &LinTrajectory,
    n_samples: usize,
) -> Result<()> {
    writeln!(w, "t,v1,v2,x1,x2,q11,q12,q21,q22,p11,p12,p21,p22,detQ")?;
    let t_end = lin.horizon.min(traj.t_end());
    let n = n_samples.max(2) - 1;
    for i in 0..=n {
        let t = t_end * i as f64 / n as f64;
        let cs = traj.state_at(t);
        let ls = lin.state_at(t)?;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, cs.v[0], cs.v[1], cs.x[0], cs.x[1],
            ls.q.a11, ls.q.a12, ls.q.a21, ls.q.a22,
            ls.p.a11, ls.p.a12, ls.p.a21, ls.p.a22,
            ls.det_q()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AffineField;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn zero_field() -> FieldSpec {
        FieldSpec::Affine(AffineField::new(0.0, 0.0, 0.0))
    }

    fn settings(horizon: f64) -> IntegratorSettings {
        IntegratorSettings {
            horizon,
            ..IntegratorSettings::default()
        }
    }

    fn init(v: [f64; 2], x: [f64; 2]) -> CharState {
        CharState { v, x, t: 0.0 }
    }

    #[test]
    fn cyclotron_circle() {
        // E0 = 0, B0 = 1: the velocity rotates at angular speed B0.
        let traj = integrate_characteristic(
            &zero_field(),
            &init([1.0, 0.0], [0.0, 0.0]),
            1.0,
            &settings(2.0 * PI),
        )
        .unwrap();
        let end = traj.state_at(2.0 * PI);
        assert_abs_diff_eq!(end.v[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(end.v[1], 0.0, epsilon = 1e-7);
        let quarter = traj.state_at(PI / 2.0);
        assert_abs_diff_eq!(quarter.v[0], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(quarter.v[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn affine_harmonic_position() {
        // S0 = I, B0 = 0, v(0) = 0, x(0) = (1,0): x double-dot = -x.
        let f = FieldSpec::Affine(AffineField::new(1.0, 0.0, 1.0));
        let traj = integrate_characteristic(
            &f,
            &init([0.0, 0.0], [1.0, 0.0]),
            0.0,
            &settings(2.0 * PI),
        )
        .unwrap();
        for t in [0.5, 1.5, 3.0, 5.0] {
            let s = traj.state_at(t);
            assert_abs_diff_eq!(s.x[0], t.cos(), epsilon = 1e-7);
            assert_abs_diff_eq!(s.x[1], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn origin_is_equilibrium() {
        let f = FieldSpec::Affine(AffineField::new(1.0, 0.3, -0.7));
        let traj =
            integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), 1.0, &settings(5.0))
                .unwrap();
        let s = traj.state_at(5.0);
        assert_abs_diff_eq!(s.v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn velocity_cap_truncates() {
        // Strong outward field: S0 = -4I accelerates without bound.
        let f = FieldSpec::Affine(AffineField::new(-4.0, 0.0, -4.0));
        let s = IntegratorSettings {
            horizon: 30.0,
            blowup_velocity_cap: 1e3,
            ..IntegratorSettings::default()
        };
        let traj = integrate_characteristic(&f, &init([0.0, 0.0], [1.0, 0.0]), 0.0, &s).unwrap();
        assert!(matches!(traj.truncation, Some(Truncation::VelocityCap(_))));
        assert!(traj.t_end() < 30.0);
    }

    #[test]
    fn zero_riccati_data_keeps_detq_positive() {
        let f = zero_field();
        let traj = integrate_characteristic(
            &f,
            &init([0.3, -0.1], [0.0, 0.0]),
            1.0,
            &settings(4.0 * PI),
        )
        .unwrap();
        let lin = integrate_linearized(&f, &traj, &Mat2::zero(), 1.0, &settings(4.0 * PI)).unwrap();
        for (_, d) in lin.detq_samples() {
            assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        }
        let w = lin.state_at(2.0).unwrap().riccati_state().unwrap();
        assert!(w.max_abs() < 1e-9);
    }

    #[test]
    fn shear_blowup_at_quarter_period() {
        // E0 = 0, B0 = 1, shear with a = -1: det Q(t) = cos t, first zero at
        // pi/2.
        let f = zero_field();
        let v0 = Mat2::new(0.0, 0.0, 1.0, 0.0);
        let traj =
            integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), 1.0, &settings(10.0))
                .unwrap();
        let lin = integrate_linearized(&f, &traj, &v0, 1.0, &settings(10.0)).unwrap();
        let res = detect_blowup(&lin);
        match res.status {
            BlowupStatus::BlowupAt(t) => {
                assert_abs_diff_eq!(t, PI / 2.0, epsilon = 1e-6);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(!res.tangential);
    }

    #[test]
    fn shear_blowup_t_star_tolerance_robust() {
        let f = zero_field();
        let v0 = Mat2::new(0.0, 0.0, 1.0, 0.0);
        let traj =
            integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), 1.0, &settings(10.0))
                .unwrap();
        let t_at = |rel: f64| {
            let s = IntegratorSettings {
                rel_tol: rel,
                horizon: 10.0,
                ..IntegratorSettings::default()
            };
            let lin = integrate_linearized(&f, &traj, &v0, 1.0, &s).unwrap();
            match detect_blowup(&lin).status {
                BlowupStatus::BlowupAt(t) => t,
                other => panic!("expected blow-up, got {other:?}"),
            }
        };
        let t1 = t_at(1e-9);
        let t2 = t_at(5e-10);
        assert!((t1 - t2).abs() <= 10.0 * 1e-9 * t1.max(1.0));
    }

    #[test]
    fn stepped_matches_propagator_for_affine() {
        // Same field driven through both linearized routes over one slow
        // period.
        let a = AffineField::new(1.0, 0.0, 1.0);
        let f = FieldSpec::Affine(a);
        let b0 = 1.0;
        let v0 = Mat2::new(0.4, -0.2, 0.1, 0.3);
        let wm = ((3.0 - 5f64.sqrt()) / 2.0f64).sqrt();
        let t1 = 2.0 * PI / wm;
        let s = settings(t1);
        let traj = integrate_characteristic(&f, &init([0.1, 0.0], [0.5, 0.0]), b0, &s).unwrap();
        let lin = integrate_linearized(&f, &traj, &v0, b0, &s).unwrap();
        let stepped = integrate_linearized_stepped(&f, &traj, &v0, b0, &s, t1).unwrap();
        for i in 0..=40 {
            let t = t1 * i as f64 / 40.0;
            let want = lin.state_at(t).unwrap();
            let y = stepped.eval(t);
            for (got, want) in [
                (y[0], want.q.a11),
                (y[1], want.q.a12),
                (y[2], want.q.a21),
                (y[3], want.q.a22),
                (y[4], want.p.a11),
                (y[5], want.p.a12),
                (y[6], want.p.a21),
                (y[7], want.p.a22),
            ] {
                assert_abs_diff_eq!(got, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn riccati_matches_radon_quotient() {
        // 100 random affine instances: wherever det Q >= 0.1 the direct
        // Riccati solution equals P Q^{-1}.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0usize;
        for _ in 0..100 {
            let a = AffineField::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let b0 = rng.random_range(0.5..3.0);
            let v0 = Mat2::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let f = FieldSpec::Affine(a);
            let s = settings(3.0);
            let traj =
                integrate_characteristic(&f, &init([0.0, 0.0], [0.1, 0.0]), b0, &s).unwrap();
            let lin = integrate_linearized(&f, &traj, &v0, b0, &s).unwrap();
            let ric = integrate_riccati(&f, &traj, &v0, b0, &s).unwrap();
            for i in 0..=30 {
                let t = 3.0 * i as f64 / 30.0;
                if t > ric.t_end() {
                    break;
                }
                let ls = lin.state_at(t).unwrap();
                if ls.det_q() < 0.1 {
                    continue;
                }
                let w_lin = ls.riccati_state().unwrap();
                let w_ric = ric.state_at(t);
                let diff = w_lin.sub(&w_ric).max_abs();
                assert!(
                    diff <= 1e-6,
                    "Radon equivalence violated: diff {diff:.3e} at t={t}"
                );
                checked += 1;
            }
        }
        assert!(checked > 1000, "too few comparison points: {checked}");
    }

    #[test]
    fn riccati_escape_brackets_detq_zero() {
        let f = zero_field();
        let v0 = Mat2::new(0.0, 0.0, 1.0, 0.0);
        let s = settings(10.0);
        let traj =
            integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), 1.0, &s).unwrap();
        let ric = integrate_riccati(&f, &traj, &v0, 1.0, &s).unwrap();
        let te = ric.escaped.expect("Riccati must escape for a = -1 shear");
        assert!((te - PI / 2.0).abs() < 1e-3, "escape at {te}");
    }

    #[test]
    fn detect_blowup_smooth_and_inconclusive() {
        // Smooth: shear with a = -0.4 (criterion value 2*0.4 - 1 < 0).
        let f = zero_field();
        let s = settings(4.0 * PI);
        let traj =
            integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), 1.0, &s).unwrap();
        let v0 = Mat2::new(0.0, 0.0, 0.4, 0.0);
        let lin = integrate_linearized(&f, &traj, &v0, 1.0, &s).unwrap();
        let res = detect_blowup(&lin);
        assert!(matches!(res.status, BlowupStatus::Smooth(_)));
        assert!(res.detq_min > 0.0);

        // Boundary shear a = -0.5: det Q = 1 - (1 - cos t)/2 touches 0 at
        // t = pi tangentially.
        let v0 = Mat2::new(0.0, 0.0, 0.5, 0.0);
        let lin = integrate_linearized(&f, &traj, &v0, 1.0, &s).unwrap();
        let res = detect_blowup(&lin);
        match res.status {
            BlowupStatus::BlowupAt(t) => {
                assert!(res.tangential, "touching zero must be flagged tangential");
                assert_abs_diff_eq!(t, PI, epsilon = 1e-2);
            }
            BlowupStatus::Inconclusive(_) => {
                // Acceptable at this tolerance: the minimum sits inside the
                // near-zero band.
                assert!(res.detq_min < DETQ_INCONCLUSIVE_BAND);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn e0zero_examples() {
        let rest = e0zero_criterion(0.0, 0.0, 0.0, 1.0);
        assert_eq!(rest.verdict, PointVerdict::Smooth);
        assert_eq!(rest.value, -1.0);

        let riccati_1d = e0zero_criterion(1.0, 0.0, 0.0, 0.0);
        assert_eq!(riccati_1d.verdict, PointVerdict::Blowup);
        assert_eq!(riccati_1d.value, 1.0);

        // Shear: xi0 = -a; smooth iff a > -1/2.
        for (a, want) in [
            (-2.0, PointVerdict::Blowup),
            (-0.6, PointVerdict::Blowup),
            (-0.4, PointVerdict::Smooth),
            (1.0, PointVerdict::Smooth),
        ] {
            let r = e0zero_criterion(0.0, 0.0, -a, 1.0);
            assert_eq!(r.verdict, want, "a = {a}");
        }
        let boundary = e0zero_criterion(0.0, 0.0, 0.5, 1.0);
        assert!(boundary.boundary);
    }

    #[test]
    fn e0zero_agrees_with_detector_on_grid() {
        // Coarse version of the classification-agreement property: shear
        // initial data, criterion vs det Q scan.
        let f = zero_field();
        for b0 in [0.7, 1.0, 2.0] {
            let s = settings(3.0 * 2.0 * PI / b0);
            let traj =
                integrate_characteristic(&f, &init([0.0, 0.0], [0.0, 0.0]), b0, &s).unwrap();
            for k in 0..12 {
                let a = -2.0 + 4.0 * k as f64 / 11.0;
                let crit = e0zero_criterion(0.0, 0.0, -a, b0);
                if crit.value.abs() < 1e-3 {
                    continue;
                }
                let v0 = Mat2::new(0.0, 0.0, -a, 0.0);
                let lin = integrate_linearized(&f, &traj, &v0, b0, &s).unwrap();
                let res = detect_blowup(&lin);
                match crit.verdict {
                    PointVerdict::Blowup => {
                        assert!(
                            matches!(res.status, BlowupStatus::BlowupAt(_)),
                            "a={a} b0={b0}: criterion {0} predicts blow-up, detector says {1:?}",
                            crit.value,
                            res.status
                        );
                    }
                    PointVerdict::Smooth => {
                        assert!(
                            matches!(res.status, BlowupStatus::Smooth(_)),
                            "a={a} b0={b0}: criterion {0} predicts smooth, detector says {1:?}",
                            crit.value,
                            res.status
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn trace_csv_shape() {
        let f = zero_field();
        let s = settings(1.0);
        let traj =
            integrate_characteristic(&f, &init([1.0, 0.0], [0.0, 0.0]), 1.0, &s).unwrap();
        let lin = integrate_linearized(&f, &traj, &Mat2::zero(), 1.0, &s).unwrap();
        let mut buf = Vec::new();
        trace_csv(&mut buf, &traj, &lin, 11).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        assert_eq!(
            lines[0],
            "t,v1,v2,x1,x2,q11,q12,q21,q22,p11,p12,p21,p22,detQ"
        );
        assert_eq!(lines[1].split(',').count(), 14);
    }
}
