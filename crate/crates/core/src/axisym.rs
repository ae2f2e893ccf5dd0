//! Axisymmetric flows v = U(r,t) x + V(r,t) x_perp under radial fields
//! E0 = S(r) x.
//!
//! Along a characteristic the point data (U, V, r) close among themselves:
//!
//! ```text
//! U' = -U^2 + V^2 - B0 V - S(r)
//! V' = (B0 - 2V) U
//! r' = r U
//! ```
//!
//! and the gradient moments D = div v and eta = xi - B0 (vorticity measured
//! against the field) ride along as
//!
//! ```text
//! D'   = -D^2 + 2 D U + eta (2V - B0) + G,
//! G    = -2U^2 - 2V^2 + 2 B0 V - B0^2 - lambda(r),
//! eta' = -D eta,
//! ```
//!
//! with lambda(r) = r S'(r) + 2 S(r). Two exact invariants anchor every
//! numerical claim here: C2 = r sqrt(|B0 - 2V|) along each characteristic,
//! and for constant S the phase-plane invariant
//!
//! ```text
//! C1 = (4S + B0^2 + 4U^2 + 4V^2 - 2 B0 V) / (4 (B0 - 2V)),
//! ```
//!
//! whose level sets are circles centered at (0, B0/4 - C1) with squared
//! radius (C1 + B0/4)^2 - S - B0^2/4. For S(r) pinched between S- and S+
//! those two extreme circles trap the orbit (the Chaplygin comparison in
//! the (V, U^2/2) chart makes the trapping quantitative), which bounds the
//! (U, V, r) excursion without integrating anything. Substituting
//! q = exp(int D) and y = q exp(-int U) turns the moment pair into a Hill
//! equation y'' + Theta y = (2V - B0) eta0 exp(-int U) with
//! Theta = 3V^2 - 3 B0 V + B0^2 - S + lambda, whose Floquet multipliers
//! over a closed (U, V, r) orbit decide long-time moment growth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

use crate::characteristics::IntegratorSettings;
use crate::fields::RadialProfile;
use crate::ode::{self, OdeOptions, StepOutcome, Trajectory};
use crate::{Error, Result};

/// Characteristic state: point data (u, v, r) and gradient moments (d, eta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisymState {
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub d: f64,
    pub eta: f64,
}

impl AxisymState {
    /// C2 = r sqrt(|B0 - 2V|), conserved along characteristics.
    pub fn c2(&self, b0: f64) -> f64 {
        self.r * (b0 - 2.0 * self.v).abs().sqrt()
    }
}

/// Dense solution of the five-dimensional characteristic system.
#[derive(Debug)]
pub struct AxisymTrajectory {
    pub traj: Trajectory<5>,
    pub states: Vec<(f64, AxisymState)>,
    /// Time at which a moment or point variable crossed the magnitude cap,
    /// ending the run early (finite-time blow-up of D is the usual cause).
    pub truncation: Option<f64>,
}

impl AxisymTrajectory {
    pub fn t_end(&self) -> f64 {
        self.traj.t_end
    }

    pub fn state_at(&self, t: f64) -> Option<AxisymState> {
        let slack = 1e-9 * (1.0 + self.traj.t_end.abs());
        if t < self.traj.t_start - slack || t > self.traj.t_end + slack {
            return None;
        }
        let y = self.traj.eval(t.clamp(self.traj.t_start, self.traj.t_end));
        Some(AxisymState {
            u: y[0],
            v: y[1],
            r: y[2],
            d: y[3],
            eta: y[4],
        })
    }
}

/// The source term of the divergence equation.
fn moment_source(u: f64, v: f64, b0: f64, lambda: f64) -> f64 {
    -2.0 * u * u - 2.0 * v * v + 2.0 * b0 * v - b0 * b0 - lambda
}

/// Integrate (U, V, r, D, eta) along one characteristic up to the settings
/// horizon. The run is truncated (not failed) when any component exceeds
/// the blow-up cap; radius excursions outside the profile's valid range
/// surface as errors.
pub fn integrate_axisym(
    p: &RadialProfile,
    b0: f64,
    init: &AxisymState,
    settings: &IntegratorSettings,
) -> Result<AxisymTrajectory> {
    settings.validate()?;
    let y0 = [init.u, init.v, init.r, init.d, init.eta];
    if !y0.iter().all(|z| z.is_finite()) || init.r < 0.0 {
        return Err(Error::InvalidParameter(
            "initial axisymmetric state must be finite with r >= 0".into(),
        ));
    }
    let field_err = RefCell::new(None::<Error>);
    let rhs = |_t: f64, y: &[f64; 5]| -> [f64; 5] {
        let [u, v, r, d, eta] = *y;
        let data = p.s(r).and_then(|s| p.lambda_of_r(r).map(|l| (s, l)));
        match data {
            Ok((s, lam)) => [
                -u * u + v * v - b0 * v - s,
                (b0 - 2.0 * v) * u,
                r * u,
                -d * d + 2.0 * d * u + eta * (2.0 * v - b0) + moment_source(u, v, b0, lam),
                -d * eta,
            ],
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                [f64::NAN; 5]
            }
        }
    };
    let cap = settings.blowup_velocity_cap;
    let mut truncation = None;
    let mut states = vec![(0.0, *init)];
    let run = ode::integrate(
        rhs,
        0.0,
        y0,
        settings.horizon,
        &settings.ode_options(),
        |seg, y| {
            states.push((
                seg.t1,
                AxisymState {
                    u: y[0],
                    v: y[1],
                    r: y[2],
                    d: y[3],
                    eta: y[4],
                },
            ));
            if y.iter().any(|z| z.abs() > cap) {
                truncation = Some(seg.t1);
                StepOutcome::Halt
            } else {
                StepOutcome::Continue
            }
        },
    );
    let traj = match run {
        Ok(t) => t,
        Err(e) => return Err(field_err.into_inner().unwrap_or(e)),
    };
    if let Some(e) = field_err.into_inner() {
        return Err(e);
    }
    Ok(AxisymTrajectory {
        traj,
        states,
        truncation,
    })
}

/// Equilibrium structure of the (U, V) phase plane at one field strength S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UvEquilibria {
    /// 4S + B0^2 > 0: two centers on the U = 0 axis at V = (B0 +- g)/2,
    /// both with local rotation period 2 pi / g, g = sqrt(4S + B0^2).
    Centers { v_high: f64, v_low: f64, period: f64 },
    /// 4S + B0^2 < 0: a star-node pair at V = B0/2,
    /// U = +-(1/2) sqrt(-(4S + B0^2)); the linearization at each is
    /// diag(-2U*, -2U*), so the positive-U node attracts.
    Nodes { u_star: f64, v_star: f64 },
    /// 4S + B0^2 = 0: the centers merge at (0, B0/2).
    Degenerate { v_star: f64 },
}

pub fn uv_equilibria(s0: f64, b0: f64) -> UvEquilibria {
    let g2 = 4.0 * s0 + b0 * b0;
    if g2.abs() <= 1e-12 {
        UvEquilibria::Degenerate { v_star: b0 / 2.0 }
    } else if g2 > 0.0 {
        let g = g2.sqrt();
        UvEquilibria::Centers {
            v_high: (b0 + g) / 2.0,
            v_low: (b0 - g) / 2.0,
            period: 2.0 * std::f64::consts::PI / g,
        }
    } else {
        UvEquilibria::Nodes {
            u_star: 0.5 * (-g2).sqrt(),
            v_star: b0 / 2.0,
        }
    }
}

/// The constant-S orbit invariant C1; singular on the line V = B0/2.
pub fn phase_invariant(u: f64, v: f64, s0: f64, b0: f64) -> Result<f64> {
    let denom = 4.0 * (b0 - 2.0 * v);
    if denom.abs() < 1e-14 * (1.0 + b0.abs()) {
        return Err(Error::Singular {
            context: "phase invariant on the line V = B0/2",
        });
    }
    Ok((4.0 * s0 + b0 * b0 + 4.0 * u * u + 4.0 * v * v - 2.0 * b0 * v) / denom)
}

/// Trapping box for an orbit under S- <= S(r) <= S+, from the two extreme
/// invariant circles through the initial point.
///
/// `c_minus`/`c_plus` are the invariant values C1(S-), C1(S+) and
/// `r_minus_env`/`r_plus_env` the matching circle radii, all expressed in
/// the canonical frame V > B0/2 (initial data below the line is reflected
/// through (U, V) -> (-U, B0 - V), a symmetry of the orbit traces; the
/// box is mapped back).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Bounds {
    pub u_minus: f64,
    pub u_plus: f64,
    pub v_minus: f64,
    pub v_plus: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub r_minus_env: f64,
    pub r_plus_env: f64,
}

pub fn lemma1_bounds(
    s_minus: f64,
    s_plus: f64,
    b0: f64,
    u0: f64,
    v0: f64,
) -> Result<Lemma1Bounds> {
    if !(s_minus <= s_plus) {
        return Err(Error::InvalidParameter(format!(
            "field bounds out of order: S- = {s_minus} > S+ = {s_plus}"
        )));
    }
    if v0 < b0 / 2.0 {
        let can = lemma1_bounds(s_minus, s_plus, b0, -u0, b0 - v0)?;
        return Ok(Lemma1Bounds {
            v_minus: b0 - can.v_plus,
            v_plus: b0 - can.v_minus,
            ..can
        });
    }
    let c_minus = phase_invariant(u0, v0, s_minus, b0)?;
    let c_plus = phase_invariant(u0, v0, s_plus, b0)?;
    // Both circles pass through (u0, v0) by construction, so the radicands
    // are the squared distances to the centers and cannot be negative.
    let r2 = |c: f64, s: f64| ((c + b0 / 4.0).powi(2) - s - b0 * b0 / 4.0).max(0.0);
    let r_minus_env = r2(c_minus, s_minus).sqrt();
    let r_plus_env = r2(c_plus, s_plus).sqrt();
    let u_plus = r_minus_env.max(r_plus_env);
    // Circle centers sit at V = B0/4 - C1; the box is the hull of the two
    // disks.
    let top = (-c_minus + r_minus_env).max(-c_plus + r_plus_env);
    let bottom = (-c_minus - r_minus_env).min(-c_plus - r_plus_env);
    Ok(Lemma1Bounds {
        u_minus: -u_plus,
        u_plus,
        v_minus: b0 / 4.0 + bottom,
        v_plus: b0 / 4.0 + top,
        c_minus,
        c_plus,
        r_minus_env,
        r_plus_env,
    })
}

/// Radius excursion implied by the V-box and conservation of C2.
pub fn radius_interval(b: &Lemma1Bounds, b0: f64, c2: f64) -> Result<(f64, f64)> {
    if !(c2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius interval needs C2 > 0, got {c2}"
        )));
    }
    let half = b0 / 2.0;
    if b.v_minus < half && b.v_plus > half {
        return Err(Error::InvalidParameter(
            "V-box straddles V = B0/2, so C2 conservation does not bound r".into(),
        ));
    }
    let (far, near) = if b.v_minus >= half {
        (2.0 * b.v_plus - b0, 2.0 * b.v_minus - b0)
    } else {
        (b0 - 2.0 * b.v_minus, b0 - 2.0 * b.v_plus)
    };
    if !(near > 0.0) {
        return Err(Error::InvalidParameter(
            "V-box touches V = B0/2, so C2 conservation does not bound r".into(),
        ));
    }
    Ok((c2 / far.sqrt(), c2 / near.sqrt()))
}

/// Chaplygin envelopes in the (V, Z) chart, Z = U^2/2. Along an orbit
///
/// ```text
/// dZ/dV = (-2Z + V^2 - B0 V - S(r(V))) / (B0 - 2V),
/// ```
///
/// with r slaved to V through C2, and the right side is monotone in S at
/// fixed (V, Z). Freezing S at its bounds and integrating away from the
/// initial point in each direction therefore brackets the orbit's Z(V).
/// Which bound produces the upper curve flips with the sign of both
/// 2V - B0 and the direction of integration; `z_upper`/`z_lower` already
/// account for that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaplyginEnvelopes {
    /// Ascending V grid across the reachable interval on the initial
    /// point's side of V = B0/2.
    pub v: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub z_lower: Vec<f64>,
}

fn chaplygin_arc(
    s: f64,
    b0: f64,
    v0: f64,
    z0: f64,
    v_to: f64,
) -> Result<Option<Trajectory<1>>> {
    let span = (v_to - v0).abs();
    if span <= 0.0 {
        return Ok(None);
    }
    let dir = (v_to - v0).signum();
    let slope = move |tau: f64, z: &[f64; 1]| -> [f64; 1] {
        let v = v0 + dir * tau;
        [dir * (-2.0 * z[0] + v * v - b0 * v - s) / (b0 - 2.0 * v)]
    };
    let opts = OdeOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..OdeOptions::default()
    };
    let traj = ode::integrate(slope, 0.0, [z0], span, &opts, |_, _| StepOutcome::Continue)?;
    Ok(Some(traj))
}

pub fn chaplygin_envelopes_uv(
    s_minus: f64,
    s_plus: f64,
    b0: f64,
    u0: f64,
    v0: f64,
    n: usize,
) -> Result<ChaplyginEnvelopes> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!(
            "envelope grid needs at least 8 points, got {n}"
        )));
    }
    let bounds = lemma1_bounds(s_minus, s_plus, b0, u0, v0)?;
    let margin = 1e-6 * (1.0 + b0.abs());
    let half = b0 / 2.0;
    let (v_lo, v_hi) = if v0 > half {
        (bounds.v_minus.max(half + margin), bounds.v_plus)
    } else {
        (bounds.v_minus, bounds.v_plus.min(half - margin))
    };
    if !(v_lo < v_hi) || v0 < v_lo || v0 > v_hi {
        return Err(Error::InvalidParameter(
            "initial point too close to V = B0/2 for a one-sided envelope".into(),
        ));
    }
    let z0 = u0 * u0 / 2.0;
    // On the V > B0/2 side, larger S means larger slope, so S+ majorizes
    // rightward and minorizes leftward; the other side flips.
    let (s_up_right, s_up_left) = if v0 > half {
        (s_plus, s_minus)
    } else {
        (s_minus, s_plus)
    };
    let up_right = chaplygin_arc(s_up_right, b0, v0, z0, v_hi)?;
    let up_left = chaplygin_arc(s_up_left, b0, v0, z0, v_lo)?;
    let lo_right = chaplygin_arc(s_up_left, b0, v0, z0, v_hi)?;
    let lo_left = chaplygin_arc(s_up_right, b0, v0, z0, v_lo)?;
    let pick = |right: &Option<Trajectory<1>>, left: &Option<Trajectory<1>>, v: f64| -> f64 {
        if v >= v0 {
            match right {
                Some(t) => t.eval((v - v0).min(t.t_end))[0],
                None => z0,
            }
        } else {
            match left {
                Some(t) => t.eval((v0 - v).min(t.t_end))[0],
                None => z0,
            }
        }
    };
    let mut v_grid = Vec::with_capacity(n);
    let mut z_upper = Vec::with_capacity(n);
    let mut z_lower = Vec::with_capacity(n);
    for i in 0..n {
        let v = v_lo + (v_hi - v_lo) * i as f64 / (n - 1) as f64;
        v_grid.push(v);
        z_upper.push(pick(&up_right, &up_left, v));
        z_lower.push(pick(&lo_right, &lo_left, v));
    }
    Ok(ChaplyginEnvelopes {
        v: v_grid,
        z_upper,
        z_lower,
    })
}

/// Report on the finite-time moment blow-up condition of the trapped
/// regime, evaluated exactly as printed alongside the two readings of its
/// open question (which extreme V enters the magnetic term on each side).
///
/// The printed inequality is
///
/// ```text
/// D0^2 - (4/3)(2 V- - B0) eta0  <  -6 U+^2 - 2 V+^2 - 2 B0 V+ - B0^2 - lambda+
/// ```
///
/// together with D0 < 0 and eta0 > 0; `k2` swaps the right side's V+ for
/// V- (making it the constant that actually appears in the lower-envelope
/// derivation), and `lhs_v_plus` swaps the left side's V- for V+.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondBlowupReport {
    pub k11: f64,
    pub k12: f64,
    pub k2: f64,
    pub lhs: f64,
    pub lhs_v_plus: f64,
    pub rhs_displayed: f64,
    pub sign_ok: bool,
    pub ineq_displayed: bool,
    pub ineq_k2: bool,
    pub ineq_v_plus: bool,
    pub holds_displayed: bool,
    pub holds_k2: bool,
    pub holds_v_plus: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cond_blowup_check(
    u_plus: f64,
    v_minus: f64,
    v_plus: f64,
    b0: f64,
    lambda_minus: f64,
    lambda_plus: f64,
    d0: f64,
    eta0: f64,
) -> CondBlowupReport {
    let u2 = u_plus * u_plus;
    let k11 = 2.0 * (u2 + v_plus * v_plus - b0 * v_minus) - lambda_minus;
    let k12 = 3.0 * u2 - 2.0 * v_plus * v_plus - 2.0 * b0 * v_plus - b0 * b0 - lambda_plus;
    let k2 = -6.0 * u2 - 2.0 * v_plus * v_plus - 2.0 * b0 * v_minus - b0 * b0 - lambda_plus;
    let rhs_displayed =
        -6.0 * u2 - 2.0 * v_plus * v_plus - 2.0 * b0 * v_plus - b0 * b0 - lambda_plus;
    let lhs = d0 * d0 - (4.0 / 3.0) * (2.0 * v_minus - b0) * eta0;
    let lhs_v_plus = d0 * d0 - (4.0 / 3.0) * (2.0 * v_plus - b0) * eta0;
    let sign_ok = d0 < 0.0 && eta0 > 0.0;
    let ineq_displayed = lhs < rhs_displayed;
    let ineq_k2 = lhs < k2;
    let ineq_v_plus = lhs_v_plus < rhs_displayed;
    CondBlowupReport {
        k11,
        k12,
        k2,
        lhs,
        lhs_v_plus,
        rhs_displayed,
        sign_ok,
        ineq_displayed,
        ineq_k2,
        ineq_v_plus,
        holds_displayed: sign_ok && ineq_displayed,
        holds_k2: sign_ok && ineq_k2,
        holds_v_plus: sign_ok && ineq_v_plus,
    }
}

/// Envelope curves for the moment pair in the (eta, D) plane over a
/// trapped (U, V, r) orbit. The level sets are
///
/// ```text
/// upper:  D^2 + 4 eta^2 - C+ eta^(3/2)           = (4/3) K11
/// lower:  D^2 - (4/3) a- eta - C- eta^(5/2)      = (4/5) K2,   a- = 2 V- - B0,
/// ```
///
/// with C+ and C- fixed by the initial point. C- < 0 makes the lower
/// radicand eventually negative, which bounds the eta excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetaEnvelopes {
    pub k11: f64,
    pub k12: f64,
    pub k2: f64,
    pub a_minus: f64,
    pub c_plus_env: f64,
    pub c_minus_env: f64,
    pub eta_bounded: bool,
}

impl DetaEnvelopes {
    /// Squared D on the upper level set at this eta, if real.
    pub fn upper_radicand(&self, eta: f64) -> f64 {
        (4.0 / 3.0) * self.k11 - 4.0 * eta * eta + self.c_plus_env * eta.powf(1.5)
    }

    /// Squared D on the lower level set at this eta, if real.
    pub fn lower_radicand(&self, eta: f64) -> f64 {
        (4.0 / 5.0) * self.k2 + (4.0 / 3.0) * self.a_minus * eta
            + self.c_minus_env * eta.powf(2.5)
    }

    /// Negative-branch D on the upper level set.
    pub fn d_upper(&self, eta: f64) -> Option<f64> {
        let rad = self.upper_radicand(eta);
        (rad >= 0.0).then(|| -rad.sqrt())
    }

    /// Negative-branch D on the lower level set.
    pub fn d_lower(&self, eta: f64) -> Option<f64> {
        let rad = self.lower_radicand(eta);
        (rad >= 0.0).then(|| -rad.sqrt())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn deta_envelopes(
    u_plus: f64,
    v_minus: f64,
    v_plus: f64,
    b0: f64,
    lambda_minus: f64,
    lambda_plus: f64,
    d0: f64,
    eta0: f64,
) -> Result<DetaEnvelopes> {
    if !(eta0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "envelope constants need eta0 > 0, got {eta0}"
        )));
    }
    let u2 = u_plus * u_plus;
    let k11 = 2.0 * (u2 + v_plus * v_plus - b0 * v_minus) - lambda_minus;
    let k12 = 3.0 * u2 - 2.0 * v_plus * v_plus - 2.0 * b0 * v_plus - b0 * b0 - lambda_plus;
    let k2 = -6.0 * u2 - 2.0 * v_plus * v_plus - 2.0 * b0 * v_minus - b0 * b0 - lambda_plus;
    let a_minus = 2.0 * v_minus - b0;
    let c_plus_env = (d0 * d0 + 4.0 * eta0 * eta0 - (4.0 / 3.0) * k11) / eta0.powf(1.5);
    let c_minus_env =
        (d0 * d0 - (4.0 / 3.0) * a_minus * eta0 - (4.0 / 5.0) * k2) / eta0.powf(2.5);
    Ok(DetaEnvelopes {
        k11,
        k12,
        k2,
        a_minus,
        c_plus_env,
        c_minus_env,
        eta_bounded: c_minus_env < 0.0,
    })
}

/// The Hill coefficient Theta at one characteristic state:
/// Theta = 3V^2 - 3 B0 V + B0^2 - S + lambda.
pub fn hill_coefficient(v: f64, s_at: f64, lambda_at: f64, b0: f64) -> f64 {
    3.0 * v * v - 3.0 * b0 * v + b0 * b0 - s_at + lambda_at
}

/// Existence time scale 2 pi / sqrt(4 S+ + B0^2), the orbital period at the
/// stiffest field value. Reported next to measured existence times, never in
/// place of them: integrated blow-ups land on both sides of it.
pub fn theorem3_bound(s_plus: f64, b0: f64) -> Result<f64> {
    let rad = 4.0 * s_plus + b0 * b0;
    if !(rad > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "existence horizon needs 4 S+ + B0^2 > 0, got {rad}"
        )));
    }
    Ok(2.0 * std::f64::consts::PI / rad.sqrt())
}

/// Bracket on the orbit period when S- <= S(r) <= S+:
/// 2 pi / sqrt(4 S+ + B0^2) <= T <= 2 pi / sqrt(4 S- + B0^2).
pub fn period_bracket(s_minus: f64, s_plus: f64, b0: f64) -> Result<(f64, f64)> {
    let hi = theorem3_bound(s_minus, b0)?;
    let lo = theorem3_bound(s_plus, b0)?;
    Ok((lo, hi))
}

fn point_rhs<'a>(
    p: &'a RadialProfile,
    b0: f64,
    field_err: &'a RefCell<Option<Error>>,
) -> impl Fn(f64, &[f64; 3]) -> [f64; 3] + 'a {
    move |_t, y| {
        let [u, v, r] = *y;
        match p.s(r) {
            Ok(s) => [-u * u + v * v - b0 * v - s, (b0 - 2.0 * v) * u, r * u],
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                [f64::NAN; 3]
            }
        }
    }
}

/// Integrate only the (U, V, r) point flow up to the settings horizon.
///
/// The point flow decouples from the moments, so this never truncates on
/// their finite-time blow-up; it is the right object for orbit geometry
/// (trapping boxes, envelopes, figures).
pub fn integrate_point_flow(
    p: &RadialProfile,
    b0: f64,
    u0: f64,
    v0: f64,
    r0: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory<3>> {
    settings.validate()?;
    if !(u0.is_finite() && v0.is_finite() && r0.is_finite() && r0 >= 0.0) {
        return Err(Error::InvalidParameter(
            "initial point state must be finite with r >= 0".into(),
        ));
    }
    let field_err = RefCell::new(None::<Error>);
    let traj = ode::integrate(
        point_rhs(p, b0, &field_err),
        0.0,
        [u0, v0, r0],
        settings.horizon,
        &settings.ode_options(),
        |_, _| StepOutcome::Continue,
    );
    if let Some(e) = field_err.into_inner() {
        return Err(e);
    }
    traj
}

/// Orbit period from the Poincare section {U = 0, V > B0/2, U decreasing}:
/// the gap between the first two section hits, validated by requiring the
/// full (U, V, r) state to return to within 1e-6.
pub fn measure_period(
    p: &RadialProfile,
    b0: f64,
    u0: f64,
    v0: f64,
    r0: f64,
    settings: &IntegratorSettings,
) -> Result<f64> {
    settings.validate()?;
    if !(v0 > b0 / 2.0) {
        return Err(Error::InvalidParameter(
            "the period section lives at V > B0/2; reflect the orbit first".into(),
        ));
    }
    let bounds = p.bounds();
    let horizon = match period_bracket(bounds.s_minus, bounds.s_plus, b0) {
        Ok((_, hi)) => 3.5 * hi,
        Err(_) => settings.horizon,
    };
    let field_err = RefCell::new(None::<Error>);
    let run = ode::integrate(
        point_rhs(p, b0, &field_err),
        0.0,
        [u0, v0, r0],
        horizon,
        &settings.ode_options(),
        |_, _| StepOutcome::Continue,
    );
    let traj = match run {
        Ok(t) => t,
        Err(e) => return Err(field_err.into_inner().unwrap_or(e)),
    };
    let mut crossings = Vec::new();
    'outer: for seg in &traj.segments {
        let sub = 8;
        for k in 0..sub {
            let ta = seg.t0 + (seg.t1 - seg.t0) * k as f64 / sub as f64;
            let tb = seg.t0 + (seg.t1 - seg.t0) * (k + 1) as f64 / sub as f64;
            let ua = seg.eval(ta)[0];
            let ub = seg.eval(tb)[0];
            if ua > 0.0 && ub <= 0.0 {
                let tc = ode::bisect(|t| seg.eval(t)[0], ta, tb, 1e-12 * (1.0 + tb));
                if seg.eval(tc)[1] > b0 / 2.0 {
                    crossings.push(tc);
                    if crossings.len() == 2 {
                        break 'outer;
                    }
                }
            }
        }
    }
    if crossings.len() < 2 {
        return Err(Error::OrbitClosure(format!(
            "fewer than two section crossings within horizon {horizon:.3}"
        )));
    }
    let (ta, tb) = (crossings[0], crossings[1]);
    let ya = traj.eval(ta);
    let yb = traj.eval(tb);
    let scale = 1.0 + ya.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let defect = ya
        .iter()
        .zip(yb.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if defect > 1e-6 * scale {
        return Err(Error::OrbitClosure(format!(
            "section return misses closure: defect {defect:.3e} at period candidate {:.6}",
            tb - ta
        )));
    }
    Ok(tb - ta)
}

/// Floquet data of the moment system over one closed (U, V, r) orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetData {
    pub period: f64,
    /// Monodromy eigenvalues as (re, im); the third is the exact 1 carried
    /// by the constant eta0 direction.
    pub multipliers: [[f64; 2]; 3],
    /// Largest | |mu| - 1 | over the multipliers.
    pub unit_circle_defect: f64,
    /// Determinant of the (q, q') monodromy block; 1 for a closed orbit by
    /// Liouville, since int 2U dt = 2 ln(r(T)/r0) = 0.
    pub det_block: f64,
}

impl FloquetData {
    pub fn multiplier(&self, i: usize) -> Complex64 {
        Complex64::new(self.multipliers[i][0], self.multipliers[i][1])
    }
}

/// Monodromy of the linear moment system z' = A(t) z,
/// z = (q, q', eta0), A = [[0, 1, 0], [G, 2U, 2V - B0], [0, 0, 0]],
/// over one period of the closed orbit through (u0, v0, r0).
pub fn monodromy_floquet(
    p: &RadialProfile,
    b0: f64,
    u0: f64,
    v0: f64,
    r0: f64,
    settings: &IntegratorSettings,
) -> Result<FloquetData> {
    let period = measure_period(p, b0, u0, v0, r0, settings)?;
    let field_err = RefCell::new(None::<Error>);
    let rhs = |_t: f64, y: &[f64; 12]| -> [f64; 12] {
        let [u, v, r] = [y[0], y[1], y[2]];
        let data = p.s(r).and_then(|s| p.lambda_of_r(r).map(|l| (s, l)));
        let (s, lam) = match data {
            Ok(x) => x,
            Err(e) => {
                let mut slot = field_err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                return [f64::NAN; 12];
            }
        };
        let g = moment_source(u, v, b0, lam);
        let phi = &y[3..12];
        let mut out = [0.0; 12];
        out[0] = -u * u + v * v - b0 * v - s;
        out[1] = (b0 - 2.0 * v) * u;
        out[2] = r * u;
        for j in 0..3 {
            out[3 + j] = phi[3 + j];
            out[6 + j] = g * phi[j] + 2.0 * u * phi[3 + j] + (2.0 * v - b0) * phi[6 + j];
            out[9 + j] = 0.0;
        }
        out
    };
    let mut y0 = [0.0; 12];
    y0[0] = u0;
    y0[1] = v0;
    y0[2] = r0;
    y0[3] = 1.0;
    y0[7] = 1.0;
    y0[11] = 1.0;
    let run = ode::integrate(rhs, 0.0, y0, period, &settings.ode_options(), |_, _| {
        StepOutcome::Continue
    });
    let traj = match run {
        Ok(t) => t,
        Err(e) => return Err(field_err.into_inner().unwrap_or(e)),
    };
    let yt = traj.y_end;
    let (a, b, c, d) = (yt[3], yt[4], yt[6], yt[7]);
    let tr = Complex64::new(a + d, 0.0);
    let det = a * d - b * c;
    let disc = (tr * tr / 4.0 - det).sqrt();
    let mu1 = tr / 2.0 + disc;
    let mu2 = tr / 2.0 - disc;
    let defect = (mu1.norm() - 1.0).abs().max((mu2.norm() - 1.0).abs());
    Ok(FloquetData {
        period,
        multipliers: [[mu1.re, mu1.im], [mu2.re, mu2.im], [1.0, 0.0]],
        unit_circle_defect: defect,
        det_block: det,
    })
}
