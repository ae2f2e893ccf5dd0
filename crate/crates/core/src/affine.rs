//! Closed-form smoothness analysis for affine fields E0 = S0 x.
//!
//! With a constant symmetric S0 the linearized system Y' = M Y has constant
//! coefficients and the eigenvalues mu of M solve
//!
//! ```text
//! mu^4 + (B0^2 + lambda) mu^2 + K = 0,
//! lambda = tr S0,  K = det S0,
//! ```
//!
//! so mu = +-i omega_pm with omega_pm^2 = ((B0^2+lambda) +- sqrt((B0^2+lambda)^2
//! - 4K)) / 2 whenever
//!
//! ```text
//! (mu condition)   4K < (B0^2 + lambda)^2   and   K > 0.
//! ```
//!
//! In that oscillatory regime det Q(t) is exactly a trigonometric polynomial
//! in the two combination frequencies Delta = omega_+ - omega_- and
//! Sigma = omega_+ + omega_-:
//!
//! ```text
//! det Q(t) = (1/k) [ C + A_- cos(Delta t) + B_- sin(Delta t)
//!                      + A_+ cos(Sigma t) + B_+ sin(Sigma t) ],
//! ```
//!
//! normalized so that det Q(0) = 1 gives C + A_- + A_+ = k. The solution
//! stays globally smooth iff det Q never vanishes; C^2 > A_-^2 + B_-^2 +
//! A_+^2 + B_+^2 is the quadratic sufficient test, and the classifier
//! additionally demands the amplitude-sound version
//! C >= sqrt(A_-^2+B_-^2) + sqrt(A_+^2+B_+^2), without which a positive
//! constant term cannot dominate both oscillations. Rational frequency
//! ratios (resonance) are screened separately because they make det Q
//! periodic rather than almost periodic, changing the horizon needed for a
//! numerical verdict.
//!
//! General Fourier coefficients come from a least-squares projection of a
//! propagated det Q series; only the axisymmetric special case (S0 = s I,
//! derivative matrix [[v11, v12], [-v12, v11]]) has closed forms, kept here
//! as the oracle the fit is tested against.

use serde::{Deserialize, Serialize};

use crate::characteristics::{
    detect_blowup, linearized_affine, BlowupStatus, IntegratorSettings,
};
use crate::fields::AffineField;
use crate::smallmat::{eig4, expm, ComplexQuad, Mat2, Mat4};
use crate::{Error, Result};

/// Spectral data of the linearized system for one (S0, B0).
#[derive(Debug, Clone, Copy)]
pub struct FreqData {
    pub lambda: f64,
    /// K = det S0.
    pub k_det: f64,
    /// Slow and fast eigenfrequencies; NaN when the spectrum is not purely
    /// imaginary (see `omega_valid`).
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega_valid: bool,
    /// The four eigenvalues of M from the quartic solver.
    pub mu: ComplexQuad,
}

impl FreqData {
    /// Slow beat period T1 = 2 pi / (omega_+ - omega_-).
    pub fn t1(&self) -> Option<f64> {
        if !self.omega_valid {
            return None;
        }
        let delta = self.omega_plus - self.omega_minus;
        if delta > 0.0 {
            Some(2.0 * std::f64::consts::PI / delta)
        } else {
            None
        }
    }

    /// Fast period T2 = 2 pi / (omega_+ + omega_-).
    pub fn t2(&self) -> Option<f64> {
        if !self.omega_valid {
            return None;
        }
        let sigma = self.omega_plus + self.omega_minus;
        if sigma > 0.0 {
            Some(2.0 * std::f64::consts::PI / sigma)
        } else {
            None
        }
    }
}

/// Spectral data for the affine field: lambda, K, the omega pair when real,
/// and the full eigenvalue set of the assembled M.
pub fn frequencies(f: &AffineField, b0: f64) -> Result<FreqData> {
    let lambda = f.lambda();
    let k_det = f.k_det();
    let m = crate::characteristics::radon_matrix(&f.matrix(), b0);
    let mu = eig4(&m)?;
    let b = b0 * b0 + lambda;
    let disc = b * b - 4.0 * k_det;
    let (op, om, valid) = if disc >= 0.0 {
        let sq = disc.sqrt();
        let wp2 = (b + sq) / 2.0;
        let wm2 = (b - sq) / 2.0;
        if wp2 >= 0.0 && wm2 >= 0.0 {
            (wp2.sqrt(), wm2.sqrt(), true)
        } else {
            (f64::NAN, f64::NAN, false)
        }
    } else {
        (f64::NAN, f64::NAN, false)
    };
    Ok(FreqData {
        lambda,
        k_det,
        omega_plus: op,
        omega_minus: om,
        omega_valid: valid,
        mu,
    })
}

/// One strict-inequality check with its margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionFlag {
    pub holds: bool,
    /// Distance to the boundary was below 1e-12; the verdict is not robust.
    pub boundary: bool,
    /// Smallest slack among the inequalities tested.
    pub margin: f64,
}

const CRITERION_MARGIN: f64 = 1e-12;

/// The oscillatory-spectrum condition: 4K < (B0^2+lambda)^2 and K > 0, both
/// with margin 1e-12.
pub fn check_oscillatory(fd: &FreqData, b0: f64) -> CriterionFlag {
    let b = b0 * b0 + fd.lambda;
    let d1 = b * b - 4.0 * fd.k_det;
    let d2 = fd.k_det;
    let margin = d1.min(d2);
    CriterionFlag {
        holds: d1 > CRITERION_MARGIN && d2 > CRITERION_MARGIN,
        boundary: d1.abs() <= CRITERION_MARGIN || d2.abs() <= CRITERION_MARGIN,
        margin,
    }
}

/// A resonance hit: omega_-/omega_+ is within `tol` of m/n with n <= max_den.
fn resonance_hit(ratio: f64, max_den: u64, tol: f64) -> Option<(u64, u64)> {
    if !(0.0..=1.0 + tol).contains(&ratio) {
        return None;
    }
    // Continued-fraction convergents p/q of the ratio; for tol well below
    // 1/(2 max_den^2) any rational within tol and denominator <= max_den is
    // one of them.
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        let ai = a as u64;
        let p2 = ai.saturating_mul(p1).saturating_add(p0);
        let q2 = ai.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            break;
        }
        if (ratio - p2 as f64 / q2 as f64).abs() < tol {
            return Some((p2, q2));
        }
        let frac = x - a;
        if frac < 1e-15 {
            break;
        }
        x = 1.0 / frac;
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    None
}

/// Non-resonance screen: true iff omega_-/omega_+ is not within `tol` of any
/// rational with denominator <= `max_den`. A zero omega_- is resonant (the
/// ratio is 0/1).
pub fn check_nonresonant(fd: &FreqData, max_den: u64, tol: f64) -> bool {
    if !fd.omega_valid || !(fd.omega_plus > 0.0) {
        return false;
    }
    resonance_hit(fd.omega_minus / fd.omega_plus, max_den, tol).is_none()
}

pub const RESONANCE_MAX_DEN: u64 = 64;
pub const RESONANCE_TOL: f64 = 1e-9;

/// Fourier data of det Q in the oscillatory regime. A_* are cosine and B_*
/// sine coefficients; det Q(0) = 1 forces C + A_- + A_+ = k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffs {
    pub c: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub a_plus: f64,
    pub b_plus: f64,
    pub k: f64,
}

/// The closed-form constant term of k det Q for a general affine instance,
/// used to recover the absolute normalization k from a fitted series:
///
/// ```text
/// C = B0 K sqrt((B0^2+lambda)^2 - 4K) [ B0^3 + (v12 - v21) B0^2
///     + (lambda + 2 J0) B0 + 2 s12 (v11 - v22) - (v12 - v21)(s11 - s22) ],
/// ```
///
/// with v the initial derivative matrix and J0 = det v.
fn c_closed_form(s0: &Mat2, b0: f64, v0: &Mat2) -> f64 {
    let lambda = s0.trace();
    let k = s0.det();
    let b = b0 * b0 + lambda;
    let disc = (b * b - 4.0 * k).max(0.0);
    let j0 = v0.det();
    let skew = v0.a12 - v0.a21;
    let bracket = b0 * b0 * b0 + skew * b0 * b0 + (lambda + 2.0 * j0) * b0
        + 2.0 * s0.a12 * (v0.a11 - v0.a22)
        - skew * (s0.a11 - s0.a22);
    b0 * k * disc.sqrt() * bracket
}

/// Solve the small dense system a x = rhs in place (partial pivoting).
fn solve_small(a: &mut [[f64; 5]; 5], rhs: &mut [f64; 5]) -> Result<()> {
    for k in 0..5 {
        let mut piv = k;
        for i in k + 1..5 {
            if a[i][k].abs() > a[piv][k].abs() {
                piv = i;
            }
        }
        if a[piv][k].abs() < 1e-300 {
            return Err(Error::Singular {
                context: "normal equations of the det Q fit",
            });
        }
        a.swap(piv, k);
        rhs.swap(piv, k);
        for i in k + 1..5 {
            let f = a[i][k] / a[k][k];
            for j in k..5 {
                a[i][j] -= f * a[k][j];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    for i in (0..5).rev() {
        let mut s = rhs[i];
        for j in i + 1..5 {
            s -= a[i][j] * rhs[j];
        }
        rhs[i] = s / a[i][i];
    }
    Ok(())
}

/// Project a propagated det Q series onto {1, cos/sin(Delta t),
/// cos/sin(Sigma t)} over one beat period T1 and recover the five
/// absolute coefficients.
///
/// The normalization k is anchored to the closed-form constant term: the
/// fit returns det Q itself (constant term C/k), and k = C_closed / (C/k).
/// If the constant term is numerically zero the coefficients are returned
/// in det Q scale with k = 1. Residual above 1e-6 max|det Q| is an error:
/// it would mean the two-frequency structure of det Q does not hold.
pub fn detq_series_and_fit(
    f: &AffineField,
    b0: f64,
    v0: &Mat2,
    fd: &FreqData,
) -> Result<FourierCoeffs> {
    if !fd.omega_valid {
        return Err(Error::InvalidParameter(
            "det Q fit requires the oscillatory regime (condition on 4K and K)".into(),
        ));
    }
    let delta = fd.omega_plus - fd.omega_minus;
    let sigma = fd.omega_plus + fd.omega_minus;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(
            "det Q fit requires distinct frequencies (non-resonant regime)".into(),
        ));
    }
    if !(fd.omega_minus > 0.0) {
        return Err(Error::InvalidParameter(
            "det Q fit needs two distinct positive frequencies; omega_- = 0 collapses the basis"
                .into(),
        ));
    }
    let t1 = 2.0 * std::f64::consts::PI / delta;
    let per_fast = (t1 * sigma / (2.0 * std::f64::consts::PI)).ceil() as usize;
    if per_fast > 1562 {
        // More fast periods per beat than the sample budget resolves; an
        // aliased fit would pass the residual check with wrong amplitudes.
        return Err(Error::InvalidParameter(format!(
            "beat period spans {per_fast} fast periods, beyond the fit's sampling budget"
        )));
    }
    let n = (64 * per_fast.max(1)).clamp(512, 100_000);

    // Incremental exact propagation of Y = (Q; P).
    let m = crate::characteristics::radon_matrix(&f.matrix(), b0);
    let dt = t1 / n as f64;
    let e_dt = expm(&m, dt)?;
    let mut y = Mat4::from_blocks(&Mat2::identity(), &Mat2::zero(), v0, &Mat2::zero());
    let mut detq = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        detq.push(y.block(0, 0).det());
        y = e_dt.mul(&y);
    }

    // Normal equations for the 5-column basis.
    let mut gram = [[0.0; 5]; 5];
    let mut rhs = [0.0; 5];
    for (i, &d) in detq.iter().enumerate() {
        let t = dt * i as f64;
        let row = [
            1.0,
            (delta * t).cos(),
            (delta * t).sin(),
            (sigma * t).cos(),
            (sigma * t).sin(),
        ];
        for a in 0..5 {
            for b in 0..5 {
                gram[a][b] += row[a] * row[b];
            }
            rhs[a] += row[a] * d;
        }
    }
    solve_small(&mut gram, &mut rhs)?;
    let coef = rhs;

    let mut max_abs = 0.0f64;
    let mut max_res = 0.0f64;
    for (i, &d) in detq.iter().enumerate() {
        let t = dt * i as f64;
        let model = coef[0]
            + coef[1] * (delta * t).cos()
            + coef[2] * (delta * t).sin()
            + coef[3] * (sigma * t).cos()
            + coef[4] * (sigma * t).sin();
        max_abs = max_abs.max(d.abs());
        max_res = max_res.max((d - model).abs());
    }
    let limit = 1e-6 * max_abs;
    if max_res > limit {
        return Err(Error::FitResidual {
            residual: max_res,
            limit,
        });
    }

    let c_abs = c_closed_form(&f.matrix(), b0, v0);
    let k = if coef[0].abs() > 1e-12 && c_abs != 0.0 {
        c_abs / coef[0]
    } else {
        1.0
    };
    Ok(FourierCoeffs {
        c: k * coef[0],
        a_minus: k * coef[1],
        b_minus: k * coef[2],
        a_plus: k * coef[3],
        b_plus: k * coef[4],
        k,
    })
}

/// Closed-form Fourier coefficients for the axisymmetric affine case
/// S0 = s11 I with initial derivative matrix [[v11, v12], [-v12, v11]].
///
/// With G = sqrt(B0^2 + 4 s11) and s = s11:
///
/// ```text
/// k  = G^3 B0^3 s^2
/// C  = G   B0^3 s^2 (B0^2 + 2s + 2 v12 B0 + 2 v11^2 + 2 v12^2)
/// A+ = 2 G B0^3 s^2 (s - v12 B0 - v11^2 - v12^2)
/// B+ = 2 G^2 B0^3 s^2 v11
/// A- = B- = 0,
/// ```
///
/// so C + A_- + A_+ = k holds exactly: the beat frequency Delta carries no
/// amplitude in this symmetry class and det Q oscillates at Sigma = G alone.
pub fn axisym_affine_constants(s11: f64, b0: f64, v11: f64, v12: f64) -> Result<FourierCoeffs> {
    let rad = b0 * b0 + 4.0 * s11;
    if !(rad > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "axisymmetric constants need B0^2 + 4 s11 > 0, got {rad}"
        )));
    }
    let g = rad.sqrt();
    let b3 = b0 * b0 * b0;
    let s2 = s11 * s11;
    let base = b3 * s2;
    let c = g * base * (b0 * b0 + 2.0 * s11 + 2.0 * v12 * b0 + 2.0 * v11 * v11 + 2.0 * v12 * v12);
    let a_plus = 2.0 * g * base * (s11 - v12 * b0 - v11 * v11 - v12 * v12);
    let b_plus = 2.0 * g * g * base * v11;
    let k = g * g * g * base;
    Ok(FourierCoeffs {
        c,
        a_minus: 0.0,
        b_minus: 0.0,
        a_plus,
        b_plus,
        k,
    })
}

/// The quadratic sufficiency test C^2 > A_-^2 + B_-^2 + A_+^2 + B_+^2 with
/// margin 1e-12 (scaled by k^2 so the margin is meaningful at any
/// normalization).
pub fn check_sc(fc: &FourierCoeffs) -> CriterionFlag {
    let sum = fc.a_minus * fc.a_minus
        + fc.b_minus * fc.b_minus
        + fc.a_plus * fc.a_plus
        + fc.b_plus * fc.b_plus;
    let d = fc.c * fc.c - sum;
    let scale = (fc.k * fc.k).max(1.0);
    CriterionFlag {
        holds: d > CRITERION_MARGIN * scale,
        boundary: d.abs() <= CRITERION_MARGIN * scale,
        margin: d,
    }
}

/// The amplitude-sound positivity bound: C at least the sum of the two
/// oscillation amplitudes. This, not the squared form, is what actually
/// keeps det Q away from zero for all t.
pub fn amplitude_sound(fc: &FourierCoeffs) -> bool {
    let amp_minus = fc.a_minus.hypot(fc.b_minus);
    let amp_plus = fc.a_plus.hypot(fc.b_plus);
    fc.c > amp_minus + amp_plus + CRITERION_MARGIN * fc.k.abs().max(1.0)
}

/// Per-point classification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AffineStatus {
    /// All three closed-form criteria hold and the amplitude bound is
    /// sound: smooth for all time, no integration involved.
    GloballySmoothSufficient,
    /// det Q stayed positive over a covering period, which extends to all
    /// time in the oscillatory regime.
    GloballySmoothNumerical,
    BlowupAt(f64),
    Inconclusive(String),
}

/// Flags of the three criteria for one instance. `nr` and `sc` are absent
/// when the spectrum is not oscillatory (they are undefined there).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaFlags {
    pub mu: CriterionFlag,
    pub nr: Option<bool>,
    pub sc: Option<CriterionFlag>,
}

/// Classification of one initial derivative matrix under an affine field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineVerdict {
    pub status: AffineStatus,
    pub criteria: CriteriaFlags,
    pub coeffs: Option<FourierCoeffs>,
    /// Minimum of det Q seen by whichever numerical check ran.
    pub detq_min: Option<f64>,
}

/// One grid point of sampled initial data: position label and the initial
/// velocity-derivative matrix there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x0: [f64; 2],
    pub v0: Mat2,
}

fn numerical_verdict(
    s0: &Mat2,
    v0: &Mat2,
    b0: f64,
    horizon: f64,
    settings: &IntegratorSettings,
    smooth_is_global: bool,
) -> Result<(AffineStatus, f64)> {
    let s = IntegratorSettings {
        horizon,
        ..*settings
    };
    let lin = linearized_affine(s0, v0, b0, &s)?;
    let res = detect_blowup(&lin);
    let status = match res.status {
        BlowupStatus::BlowupAt(t) => AffineStatus::BlowupAt(t),
        BlowupStatus::Smooth(_) => {
            if smooth_is_global {
                AffineStatus::GloballySmoothNumerical
            } else {
                AffineStatus::Inconclusive(format!(
                    "no det Q zero up to t = {horizon:.6}; the spectrum admits growing modes so positivity there proves nothing further"
                ))
            }
        }
        BlowupStatus::Inconclusive(r) => AffineStatus::Inconclusive(r),
    };
    Ok((status, res.detq_min))
}

/// Classify every grid point of initial data under one affine field.
///
/// Oscillatory + non-resonant + sound coefficient dominance gives the
/// closed-form verdict; otherwise det Q is propagated over a covering
/// period (T1 in the non-resonant case, the common period of the two
/// frequencies in the resonant case) or, outside the oscillatory regime,
/// up to the configured horizon where only blow-up is conclusive.
pub fn classify_affine(
    f: &AffineField,
    b0: f64,
    points: &[GridPoint],
    settings: &IntegratorSettings,
) -> Result<Vec<AffineVerdict>> {
    let fd = frequencies(f, b0)?;
    let mu_flag = check_oscillatory(&fd, b0);
    let mut out = Vec::with_capacity(points.len());
    for pt in points {
        out.push(classify_point(f, b0, &fd, &mu_flag, &pt.v0, settings)?);
    }
    Ok(out)
}

fn classify_point(
    f: &AffineField,
    b0: f64,
    fd: &FreqData,
    mu_flag: &CriterionFlag,
    v0: &Mat2,
    settings: &IntegratorSettings,
) -> Result<AffineVerdict> {
    let s0 = f.matrix();
    // S0 = 0 sits on the K = 0 boundary but is still conclusive: the
    // eigenvalue 0 of M has full geometric multiplicity there (every (q, 0)
    // is a null vector), so exp(Mt) carries no secular terms and det Q is
    // periodic with period 2 pi / B0. Any other K = 0 field has a Jordan
    // block at 0 and genuinely falls outside the periodic argument.
    let zero_field = s0.max_abs() == 0.0 && b0 > 0.0;
    if !mu_flag.holds && !zero_field {
        // Growing or marginal spectrum: no finite check proves smoothness.
        let (status, dmin) =
            numerical_verdict(&s0, v0, b0, settings.horizon, settings, false)?;
        return Ok(AffineVerdict {
            status,
            criteria: CriteriaFlags {
                mu: *mu_flag,
                nr: None,
                sc: None,
            },
            coeffs: None,
            detq_min: Some(dmin),
        });
    }

    let t1 = fd.t1();
    let ratio = fd.omega_minus / fd.omega_plus;
    let hit = resonance_hit(ratio, RESONANCE_MAX_DEN, RESONANCE_TOL);
    let nr = hit.is_none();

    if nr {
        let t1 = t1.expect("nonresonant oscillatory spectrum has distinct frequencies");
        // A failed fit (degenerate basis, unresolvable beat, excess
        // residual) forfeits the closed-form shortcut, not the verdict.
        let (coeffs, sc) = match detq_series_and_fit(f, b0, v0, fd) {
            Ok(fc) => (Some(fc), Some(check_sc(&fc))),
            Err(_) => (None, None),
        };
        if let (Some(fc), Some(flag)) = (&coeffs, &sc) {
            if flag.holds && amplitude_sound(fc) {
                return Ok(AffineVerdict {
                    status: AffineStatus::GloballySmoothSufficient,
                    criteria: CriteriaFlags {
                        mu: *mu_flag,
                        nr: Some(true),
                        sc,
                    },
                    coeffs,
                    detq_min: None,
                });
            }
        }
        let t2 = fd.t2().expect("oscillatory spectrum has a fast period");
        if 16.0 * t1 / t2 > 400_000.0 {
            // The beat period outruns the step budget at the resolution the
            // fast oscillation needs; an aliased scan could miss a zero.
            return Ok(AffineVerdict {
                status: AffineStatus::Inconclusive(format!(
                    "beat period {t1:.3e} is too long to scan at the fast-oscillation resolution"
                )),
                criteria: CriteriaFlags {
                    mu: *mu_flag,
                    nr: Some(true),
                    sc,
                },
                coeffs,
                detq_min: None,
            });
        }
        // Positivity over (0, T1] extends to all t in this regime.
        let (status, dmin) = numerical_verdict(&s0, v0, b0, t1, settings, true)?;
        return Ok(AffineVerdict {
            status,
            criteria: CriteriaFlags {
                mu: *mu_flag,
                nr: Some(true),
                sc,
            },
            coeffs,
            detq_min: Some(dmin),
        });
    }

    // Resonant: det Q is periodic with the common period of Delta and
    // Sigma; positivity over one common period is conclusive. S0 = 0 lands
    // here via the 0/1 convergent with common period 2 pi / B0.
    let (_, n) = hit.expect("resonant branch");
    let t_common = 2.0 * std::f64::consts::PI * n as f64 / fd.omega_plus;
    let horizon = t_common.max(t1.unwrap_or(0.0));
    let (status, dmin) = numerical_verdict(&s0, v0, b0, horizon, settings, true)?;
    Ok(AffineVerdict {
        status,
        criteria: CriteriaFlags {
            mu: *mu_flag,
            nr: Some(false),
            sc: None,
        },
        coeffs: None,
        detq_min: Some(dmin),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::{e0zero_criterion, PointVerdict};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fd_of(s11: f64, s12: f64, s22: f64, b0: f64) -> FreqData {
        frequencies(&AffineField::new(s11, s12, s22), b0).unwrap()
    }

    #[test]
    fn frequencies_unit_field() {
        let fd = fd_of(1.0, 0.0, 1.0, 1.0);
        assert_eq!(fd.lambda, 2.0);
        assert_eq!(fd.k_det, 1.0);
        let wp = ((3.0 + 5f64.sqrt()) / 2.0f64).sqrt();
        let wm = ((3.0 - 5f64.sqrt()) / 2.0f64).sqrt();
        assert!(fd.omega_valid);
        assert_abs_diff_eq!(fd.omega_plus, wp, epsilon = 1e-12);
        assert_abs_diff_eq!(fd.omega_minus, wm, epsilon = 1e-12);
        // The mu set is +- i omega_pm.
        for target in [wp, wm, -wp, -wm] {
            assert!(fd
                .mu
                .iter()
                .any(|z| z.re.abs() <= 1e-9 && (z.im - target).abs() <= 1e-9));
        }
    }

    #[test]
    fn frequencies_resonant_field() {
        let fd = fd_of(6.0, 0.0, 6.0, 1.0);
        assert_abs_diff_eq!(fd.omega_plus, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fd.omega_minus, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn frequencies_zero_field() {
        let fd = fd_of(0.0, 0.0, 0.0, 1.0);
        assert_eq!(fd.lambda, 0.0);
        assert_eq!(fd.k_det, 0.0);
        assert_abs_diff_eq!(fd.omega_plus, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fd.omega_minus, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn oscillatory_condition_cases() {
        assert!(check_oscillatory(&fd_of(1.0, 0.0, 1.0, 1.0), 1.0).holds);
        // Indefinite field gradient: K = -1 < 0.
        let f = check_oscillatory(&fd_of(1.0, 0.0, -1.0, 1.0), 1.0);
        assert!(!f.holds);
        // K = 0 sits on the boundary.
        let f = check_oscillatory(&fd_of(0.0, 0.0, 0.0, 1.0), 1.0);
        assert!(!f.holds);
        assert!(f.boundary);
    }

    #[test]
    fn nonresonance_cases() {
        // 2:3 ratio is resonant.
        assert!(!check_nonresonant(
            &fd_of(6.0, 0.0, 6.0, 1.0),
            RESONANCE_MAX_DEN,
            RESONANCE_TOL
        ));
        // Golden-ratio-flavored irrational ratio is not.
        assert!(check_nonresonant(
            &fd_of(1.0, 0.0, 1.0, 1.0),
            RESONANCE_MAX_DEN,
            RESONANCE_TOL
        ));
        // omega_- = 0 is the m = 0 resonance.
        assert!(!check_nonresonant(
            &fd_of(0.0, 0.0, 0.0, 1.0),
            RESONANCE_MAX_DEN,
            RESONANCE_TOL
        ));
    }

    #[test]
    fn fit_unit_field_rest_data() {
        let f = AffineField::new(1.0, 0.0, 1.0);
        let fd = frequencies(&f, 1.0).unwrap();
        let fc = detq_series_and_fit(&f, 1.0, &Mat2::zero(), &fd).unwrap();
        // Closed forms: C = 3 sqrt 5, A+ = 2 sqrt 5, B+ = 0, k = 5 sqrt 5.
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(fc.c, 3.0 * s5, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.a_plus, 2.0 * s5, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.b_plus, 0.0, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.a_minus, 0.0, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.b_minus, 0.0, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.k, 5.0 * s5, epsilon = 1e-6 * fc.k);
        assert_abs_diff_eq!(fc.c + fc.a_minus + fc.a_plus, fc.k, epsilon = 1e-6 * fc.k);
    }

    #[test]
    fn fit_matches_axisym_oracle() {
        for (s11, v11, v12, b0) in [
            (0.5, 0.5, -0.5, 4.0),
            (1.0, 0.3, 0.2, 1.3),
            (2.0, -0.4, 0.7, 0.9),
        ] {
            let f = AffineField::new(s11, 0.0, s11);
            let fd = frequencies(&f, b0).unwrap();
            let v0 = Mat2::new(v11, v12, -v12, v11);
            let fit = detq_series_and_fit(&f, b0, &v0, &fd).unwrap();
            let oracle = axisym_affine_constants(s11, b0, v11, v12).unwrap();
            let scale = oracle.k;
            assert_abs_diff_eq!(fit.c, oracle.c, epsilon = 1e-6 * scale);
            assert_abs_diff_eq!(fit.a_minus, 0.0, epsilon = 1e-6 * scale);
            assert_abs_diff_eq!(fit.b_minus, 0.0, epsilon = 1e-6 * scale);
            assert_abs_diff_eq!(fit.a_plus, oracle.a_plus, epsilon = 1e-6 * scale);
            assert_abs_diff_eq!(fit.b_plus, oracle.b_plus, epsilon = 1e-6 * scale);
            assert_abs_diff_eq!(fit.k, oracle.k, epsilon = 1e-6 * scale);
        }
    }

    #[test]
    fn fit_refuses_zero_field() {
        let f = AffineField::new(0.0, 0.0, 0.0);
        let fd = frequencies(&f, 1.0).unwrap();
        assert!(detq_series_and_fit(&f, 1.0, &Mat2::zero(), &fd).is_err());
    }

    #[test]
    fn axisym_constants_vanishing_loci() {
        // v11 = 0 kills the sine amplitude.
        let fc = axisym_affine_constants(1.3, 1.1, 0.0, 0.4).unwrap();
        assert_eq!(fc.b_plus, 0.0);
        assert_eq!(fc.a_minus, 0.0);
        assert_eq!(fc.b_minus, 0.0);
        // s11 = v12 B0 + v11^2 + v12^2 kills A+ too; with v11 = 0, B0 = 1,
        // s11 = 1 that is v12 = (sqrt 5 - 1)/2.
        let v12 = (5f64.sqrt() - 1.0) / 2.0;
        let fc = axisym_affine_constants(1.0, 1.0, 0.0, v12).unwrap();
        assert_abs_diff_eq!(fc.a_plus, 0.0, epsilon = 1e-12 * fc.k);
        assert_eq!(fc.b_plus, 0.0);
        // B0^2 + 4 s11 < 0 has no real fast frequency and is rejected.
        assert!(axisym_affine_constants(-1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn sc_check_cases() {
        let t = check_sc(&FourierCoeffs {
            c: 5.0,
            a_minus: 1.0,
            b_minus: 1.0,
            a_plus: 1.0,
            b_plus: 1.0,
            k: 1.0,
        });
        assert!(t.holds);
        let fc = axisym_affine_constants(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(check_sc(&fc).holds);
        assert!(amplitude_sound(&fc));
        // Boundary: C^2 equal to the amplitude sum.
        let b = check_sc(&FourierCoeffs {
            c: 2.0,
            a_minus: 0.0,
            b_minus: 0.0,
            a_plus: 2.0,
            b_plus: 0.0,
            k: 1.0,
        });
        assert!(!b.holds);
        assert!(b.boundary);
    }

    #[test]
    fn scaling_laws_in_b0() {
        // C ~ B0^6 and A+, B+ ~ B0^5 as B0 grows with everything else fixed.
        let (s11, v11, v12) = (0.5, 0.5, -0.5);
        let mut prev: Option<FourierCoeffs> = None;
        for b0 in [4.0, 8.0, 16.0, 32.0, 64.0] {
            let fc = axisym_affine_constants(s11, b0, v11, v12).unwrap();
            if let Some(p) = prev {
                let rc = fc.c / p.c / 64.0;
                let rap = fc.a_plus / p.a_plus / 32.0;
                let rbp = fc.b_plus / p.b_plus / 32.0;
                assert!((rc - 1.0).abs() < 0.10, "C ratio off: {rc}");
                assert!((rap - 1.0).abs() < 0.10, "A+ ratio off: {rap}");
                assert!((rbp - 1.0).abs() < 0.10, "B+ ratio off: {rbp}");
            }
            prev = Some(fc);
        }
    }

    #[test]
    fn classify_unit_field_rest_is_sufficient() {
        let f = AffineField::new(1.0, 0.0, 1.0);
        let pts = [GridPoint {
            x0: [0.0, 0.0],
            v0: Mat2::zero(),
        }];
        let s = IntegratorSettings::default();
        let v = classify_affine(&f, 1.0, &pts, &s).unwrap();
        assert_eq!(v[0].status, AffineStatus::GloballySmoothSufficient);
        assert!(v[0].criteria.mu.holds);
        assert_eq!(v[0].criteria.nr, Some(true));
        assert!(v[0].criteria.sc.unwrap().holds);

        // Soundness: direct propagation over (0, T1] stays positive.
        let fd = frequencies(&f, 1.0).unwrap();
        let t1 = fd.t1().unwrap();
        let lin = linearized_affine(
            &f.matrix(),
            &Mat2::zero(),
            1.0,
            &IntegratorSettings {
                horizon: t1,
                ..IntegratorSettings::default()
            },
        )
        .unwrap();
        for (_, d) in lin.detq_samples() {
            assert!(d > 0.0);
        }
    }

    #[test]
    fn classify_resonant_never_sufficient() {
        let f = AffineField::new(6.0, 0.0, 6.0);
        let pts = [
            GridPoint {
                x0: [0.0, 0.0],
                v0: Mat2::zero(),
            },
            GridPoint {
                x0: [1.0, 0.0],
                v0: Mat2::new(0.2, 0.0, 0.0, 0.2),
            },
        ];
        let s = IntegratorSettings::default();
        for v in classify_affine(&f, 1.0, &pts, &s).unwrap() {
            assert_ne!(v.status, AffineStatus::GloballySmoothSufficient);
            assert_eq!(v.criteria.nr, Some(false));
            assert!(matches!(
                v.status,
                AffineStatus::GloballySmoothNumerical | AffineStatus::BlowupAt(_)
            ));
        }
    }

    #[test]
    fn classify_zero_field_matches_criterion() {
        // S0 = 0 reduces to the E0 = 0 closed form; the classifier must
        // agree wherever the criterion is not marginal.
        let f = AffineField::new(0.0, 0.0, 0.0);
        let b0 = 1.0;
        let s = IntegratorSettings::default();
        for i in 0..6 {
            for j in 0..6 {
                let d0 = -2.0 + 4.0 * i as f64 / 5.0;
                let xi0 = -2.0 + 4.0 * j as f64 / 5.0;
                let crit = e0zero_criterion(d0, 0.0, xi0, b0);
                if crit.value.abs() < 1e-3 {
                    continue;
                }
                let pts = [GridPoint {
                    x0: [0.0, 0.0],
                    v0: Mat2::new(d0, 0.0, xi0, 0.0),
                }];
                let v = classify_affine(&f, b0, &pts, &s).unwrap();
                match crit.verdict {
                    PointVerdict::Smooth => assert!(
                        matches!(v[0].status, AffineStatus::GloballySmoothNumerical),
                        "D0={d0} xi0={xi0}: want smooth, got {:?}",
                        v[0].status
                    ),
                    PointVerdict::Blowup => assert!(
                        matches!(v[0].status, AffineStatus::BlowupAt(_)),
                        "D0={d0} xi0={xi0}: want blow-up, got {:?}",
                        v[0].status
                    ),
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn omega_identities(
            s11 in 0.2f64..3.0,
            s12 in -0.5f64..0.5,
            s22 in 0.2f64..3.0,
            b0 in 0.5f64..2.5,
        ) {
            let f = AffineField::new(s11, s12, s22);
            let fd = frequencies(&f, b0).unwrap();
            let flag = check_oscillatory(&fd, b0);
            prop_assume!(flag.holds);
            prop_assert!(fd.omega_valid);
            prop_assert!((fd.omega_plus * fd.omega_minus - fd.k_det.sqrt()).abs() <= 1e-9);
            let sum2 = fd.omega_plus.powi(2) + fd.omega_minus.powi(2);
            prop_assert!((sum2 - (b0 * b0 + fd.lambda)).abs() <= 1e-9);
        }

        #[test]
        fn fit_residual_in_oscillatory_regime(
            s11 in 0.3f64..2.5,
            s12 in -0.4f64..0.4,
            s22 in 0.3f64..2.5,
            b0 in 0.6f64..2.0,
            v in proptest::array::uniform4(-0.8f64..0.8),
        ) {
            let f = AffineField::new(s11, s12, s22);
            let fd = frequencies(&f, b0).unwrap();
            prop_assume!(check_oscillatory(&fd, b0).holds);
            prop_assume!(check_nonresonant(&fd, RESONANCE_MAX_DEN, RESONANCE_TOL));
            // Near-degenerate beats need more samples than the fit budgets.
            prop_assume!(fd.omega_plus - fd.omega_minus > 0.05);
            // Residual enforcement is inside the fit; success is the assertion.
            let v0 = Mat2::new(v[0], v[1], v[2], v[3]);
            let fc = detq_series_and_fit(&f, b0, &v0, &fd).unwrap();
            // det Q(0) = 1 in absolute scale.
            prop_assert!((fc.c + fc.a_minus + fc.a_plus - fc.k).abs() <= 1e-6 * fc.k.abs().max(1.0));
        }

        #[test]
        fn axisym_identity_exact(
            s11 in 0.2f64..3.0,
            b0 in 0.5f64..3.0,
            v11 in -1.5f64..1.5,
            v12 in -1.5f64..1.5,
        ) {
            let fc = axisym_affine_constants(s11, b0, v11, v12).unwrap();
            let scale = fc.k.abs().max(1.0);
            prop_assert!((fc.c + fc.a_minus + fc.a_plus - fc.k).abs() <= 1e-12 * scale);
            prop_assert!(fc.k > 0.0);
        }
    }
}
