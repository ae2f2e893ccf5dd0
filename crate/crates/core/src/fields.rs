//! Stationary electric fields E0 and their derived scalar data.
//!
//! Two families drive every analysis in this crate:
//!
//! * affine fields E0 = S0 x with a constant symmetric 2x2 matrix S0, whose
//!   invariants lambda = tr S0 and K = det S0 control the spectrum of the
//!   linearized system;
//! * radial profiles E0 = S(r) x, for which the axisymmetric reduction needs
//!   lambda(r) = r S'(r) + 2 S(r) and the velocity average
//!
//!   G(V) = 2 (B0 - 2V) int_inf^V S(nu) / (B0 - 2 nu)^2 d nu,
//!
//!   evaluated here in the equivalent disk-average form
//!   G(V) = (2 / r_V^2) int_0^{r_V} S(rho) rho d rho with
//!   r_V = C2 / sqrt(|B0 - 2V|), which handles both signs of B0 - 2V and
//!   turns the improper tail into a regular endpoint at rho = 0.
//!
//! The profile catalog is a closed set of kinds with analytic derivatives,
//! so lambda(r) never touches numeric differentiation. Every profile carries
//! validated lower and upper bounds for S and lambda on its configured
//! radius range; the comparison results downstream consume only those
//! bounds, never raw samples.

use serde::{Deserialize, Serialize};

use crate::smallmat::Mat2;
use crate::{Error, Result};

/// Affine field E0 = S0 x with S0 symmetric; `s21` equals `s12` by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub s11: f64,
    pub s12: f64,
    pub s22: f64,
}

impl AffineField {
    pub fn new(s11: f64, s12: f64, s22: f64) -> Self {
        AffineField { s11, s12, s22 }
    }

    /// lambda = tr S0.
    pub fn lambda(&self) -> f64 {
        self.s11 + self.s22
    }

    /// K = det S0.
    pub fn k_det(&self) -> f64 {
        self.s11 * self.s22 - self.s12 * self.s12
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.s11, self.s12, self.s12, self.s22)
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        self.matrix().mul_vec(x)
    }
}

/// The closed catalog of radial profile shapes.
///
/// `Shifted` wraps a base kind as offset + scale * base(r), which is how the
/// strictly positive profiles of the comparison theorems are built (for
/// example 1.5 + 0.5 sin r).
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Constant(f64),
    Sine,
    Cosine,
    /// 1 / (1 + r^alpha) with alpha in {1, 2, 3, 4}.
    RationalDecay(u8),
    Shifted {
        base: Box<ProfileKind>,
        offset: f64,
        scale: f64,
    },
}

impl ProfileKind {
    /// S(r); defined for all r >= 0 regardless of the configured range.
    pub fn s(&self, r: f64) -> f64 {
        match self {
            ProfileKind::Constant(c) => *c,
            ProfileKind::Sine => r.sin(),
            ProfileKind::Cosine => r.cos(),
            ProfileKind::RationalDecay(a) => 1.0 / (1.0 + r.powi(*a as i32)),
            ProfileKind::Shifted {
                base,
                offset,
                scale,
            } => offset + scale * base.s(r),
        }
    }

    /// dS/dr, analytic per kind.
    pub fn s_prime(&self, r: f64) -> f64 {
        match self {
            ProfileKind::Constant(_) => 0.0,
            ProfileKind::Sine => r.cos(),
            ProfileKind::Cosine => -r.sin(),
            ProfileKind::RationalDecay(a) => {
                let a = *a as i32;
                let p = r.powi(a - 1);
                let d = 1.0 + r * p;
                -(a as f64) * p / (d * d)
            }
            ProfileKind::Shifted { base, scale, .. } => scale * base.s_prime(r),
        }
    }

    /// lambda(r) = r S'(r) + 2 S(r).
    pub fn lambda(&self, r: f64) -> f64 {
        r * self.s_prime(r) + 2.0 * self.s(r)
    }

    /// Limits of S and lambda as r -> infinity, for kinds that have them.
    fn tail_limit(&self) -> Option<(f64, f64)> {
        match self {
            ProfileKind::Constant(c) => Some((*c, 2.0 * c)),
            ProfileKind::RationalDecay(_) => Some((0.0, 0.0)),
            ProfileKind::Sine | ProfileKind::Cosine => None,
            ProfileKind::Shifted {
                base,
                offset,
                scale,
            } => base
                .tail_limit()
                .map(|(s, l)| (offset + scale * s, 2.0 * offset + scale * l)),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProfileKind::RationalDecay(a) => {
                if !(1..=4).contains(a) {
                    return Err(Error::InvalidParameter(format!(
                        "rational decay exponent must be 1..4, got {a}"
                    )));
                }
            }
            ProfileKind::Shifted { base, scale, .. } => {
                if *scale == 0.0 {
                    return Err(Error::InvalidParameter(
                        "shifted profile with zero scale collapses to a constant; use Constant"
                            .into(),
                    ));
                }
                base.validate()?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Validated bounds S- <= S(r) <= S+ and lambda- <= lambda(r) <= lambda+
/// on a profile's radius range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBounds {
    pub s_minus: f64,
    pub s_plus: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

/// Margin added around sampled extrema so the stored interval is a true
/// enclosure of the continuous range.
const BOUND_MARGIN: f64 = 1e-6;
const BOUND_SAMPLES: usize = 40_000;

/// Enclosing bounds for S and lambda over [r_min, r_max].
///
/// Constant is exact; decaying kinds on unbounded ranges combine dense
/// sampling of a finite window with the analytic tail limit, which is valid
/// because the tail is monotone past the window. Everything else is dense
/// sampling (40001 points) widened by 1e-6.
pub fn profile_bounds(kind: &ProfileKind, r_min: f64, r_max: f64) -> Result<ProfileBounds> {
    if !(r_min >= 0.0) || !(r_max > r_min) {
        return Err(Error::InvalidParameter(format!(
            "radius range [{r_min}, {r_max}] is not an interval in r >= 0"
        )));
    }
    if let ProfileKind::Constant(c) = kind {
        return Ok(ProfileBounds {
            s_minus: *c,
            s_plus: *c,
            lambda_minus: 2.0 * c,
            lambda_plus: 2.0 * c,
        });
    }
    let tail = kind.tail_limit();
    if r_max.is_infinite() && tail.is_none() {
        return Err(Error::InvalidParameter(
            "this profile kind has no limit at infinity; use a finite radius range".into(),
        ));
    }
    let cap = if r_max.is_infinite() {
        (r_min + 1000.0).max(1000.0)
    } else {
        r_max
    };
    let mut s_lo = f64::INFINITY;
    let mut s_hi = f64::NEG_INFINITY;
    let mut l_lo = f64::INFINITY;
    let mut l_hi = f64::NEG_INFINITY;
    for i in 0..=BOUND_SAMPLES {
        let r = r_min + (cap - r_min) * i as f64 / BOUND_SAMPLES as f64;
        let s = kind.s(r);
        let l = kind.lambda(r);
        s_lo = s_lo.min(s);
        s_hi = s_hi.max(s);
        l_lo = l_lo.min(l);
        l_hi = l_hi.max(l);
    }
    if r_max.is_infinite() {
        let (s_inf, l_inf) = tail.expect("checked above");
        s_lo = s_lo.min(s_inf);
        s_hi = s_hi.max(s_inf);
        l_lo = l_lo.min(l_inf);
        l_hi = l_hi.max(l_inf);
    }
    Ok(ProfileBounds {
        s_minus: s_lo - BOUND_MARGIN,
        s_plus: s_hi + BOUND_MARGIN,
        lambda_minus: l_lo - BOUND_MARGIN,
        lambda_plus: l_hi + BOUND_MARGIN,
    })
}

/// A radial field E0 = S(r) x restricted to a radius range, with bounds
/// computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    kind: ProfileKind,
    r_min: f64,
    r_max: f64,
    bounds: ProfileBounds,
}

impl RadialProfile {
    pub fn new(kind: ProfileKind, r_min: f64, r_max: f64) -> Result<Self> {
        kind.validate()?;
        let bounds = profile_bounds(&kind, r_min, r_max)?;
        Ok(RadialProfile {
            kind,
            r_min,
            r_max,
            bounds,
        })
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn r_range(&self) -> (f64, f64) {
        (self.r_min, self.r_max)
    }

    pub fn bounds(&self) -> ProfileBounds {
        self.bounds
    }

    fn check_r(&self, r: f64) -> Result<()> {
        // A hair of slack for roundoff in |x|.
        let slack = 1e-12 * (1.0 + r.abs());
        if r < self.r_min - slack || r > self.r_max + slack {
            return Err(Error::RadiusOutOfRange {
                r,
                r_max: self.r_max,
            });
        }
        Ok(())
    }

    /// S(r), range-checked.
    pub fn s(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        Ok(self.kind.s(r))
    }

    /// lambda(r) = r S'(r) + 2 S(r), range-checked.
    pub fn lambda_of_r(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        Ok(self.kind.lambda(r))
    }

    /// E0(x) = S(|x|) x.
    pub fn eval(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let s = self.s(r)?;
        Ok([s * x[0], s * x[1]])
    }

    /// Spatial gradient of E0 at x: S(r) I + (S'(r)/r) x x^T, symmetric.
    pub fn gradient(&self, x: [f64; 2]) -> Result<Mat2> {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        self.check_r(r)?;
        let s = self.kind.s(r);
        if r < 1e-12 {
            // At the origin the rank-one part vanishes for every kind in the
            // catalog (S'(0) = 0 or the x x^T factor does).
            return Ok(Mat2::new(s, 0.0, 0.0, s));
        }
        let f = self.kind.s_prime(r) / r;
        Ok(Mat2::new(
            s + f * x[0] * x[0],
            f * x[0] * x[1],
            f * x[0] * x[1],
            s + f * x[1] * x[1],
        ))
    }

    /// The velocity average G(V) in disk form, with C2 the conserved
    /// quantity r^2 |B0 - 2V| of the orbit being analyzed.
    ///
    /// Constant kind returns the constant exactly; other kinds use adaptive
    /// quadrature to 1e-9. The averaging radius r_V must lie in the profile
    /// range; the integrand is evaluated down to rho = 0 because the
    /// substitution from the velocity form reaches radii below any positive
    /// r_min.
    pub fn g_of_v(&self, v: f64, b0: f64, c2: f64) -> Result<f64> {
        let denom = b0 - 2.0 * v;
        if denom.abs() < 1e-14 * (1.0 + b0.abs()) {
            return Err(Error::Singular {
                context: "G(V) at the singular line V = B0/2",
            });
        }
        if let ProfileKind::Constant(c) = self.kind {
            return Ok(c);
        }
        let r_v = c2 / denom.abs().sqrt();
        self.check_r(r_v)?;
        let kind = &self.kind;
        let integral = adaptive_simpson(&|rho: f64| kind.s(rho) * rho, 0.0, r_v, 1e-12)?;
        Ok(2.0 * integral / (r_v * r_v))
    }
}

/// Either family, for callers generic over the field class.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Affine(AffineField),
    Radial(RadialProfile),
}

impl FieldSpec {
    /// E0(x).
    pub fn eval(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        match self {
            FieldSpec::Affine(a) => Ok(a.eval(x)),
            FieldSpec::Radial(p) => p.eval(x),
        }
    }

    /// The symmetric gradient matrix S0(x) feeding the linearized system.
    pub fn gradient(&self, x: [f64; 2]) -> Result<Mat2> {
        match self {
            FieldSpec::Affine(a) => Ok(a.matrix()),
            FieldSpec::Radial(p) => p.gradient(x),
        }
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
///
/// `tol` is an absolute tolerance on the whole interval; subdivision splits
/// it in half per side, which keeps the total error under `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Quadrature { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::Quadrature { a, b });
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature { a, b });
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Serialized shape of a profile kind: {"kind": ..., "params": [...]} with a
/// nested "base" object for the Shifted kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct KindRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Box<KindRepr>>,
}

impl KindRepr {
    fn from_kind(k: &ProfileKind) -> KindRepr {
        match k {
            ProfileKind::Constant(c) => KindRepr {
                kind: "Constant".into(),
                params: vec![*c],
                base: None,
            },
            ProfileKind::Sine => KindRepr {
                kind: "Sine".into(),
                params: vec![],
                base: None,
            },
            ProfileKind::Cosine => KindRepr {
                kind: "Cosine".into(),
                params: vec![],
                base: None,
            },
            ProfileKind::RationalDecay(a) => KindRepr {
                kind: "RationalDecay".into(),
                params: vec![*a as f64],
                base: None,
            },
            ProfileKind::Shifted {
                base,
                offset,
                scale,
            } => KindRepr {
                kind: "Shifted".into(),
                params: vec![*offset, *scale],
                base: Some(Box::new(KindRepr::from_kind(base))),
            },
        }
    }

    fn into_kind(self) -> std::result::Result<ProfileKind, String> {
        let want = |n: usize, got: &Vec<f64>| -> std::result::Result<(), String> {
            if got.len() != n {
                Err(format!(
                    "kind {} expects {} params, got {}",
                    self.kind,
                    n,
                    got.len()
                ))
            } else {
                Ok(())
            }
        };
        // "RationalDecay", "rational-decay" and "rational_decay" all name
        // the same kind; the canonical PascalCase form is what serializes.
        let norm: String = self
            .kind
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect::<String>()
            .to_lowercase();
        match norm.as_str() {
            "constant" => {
                want(1, &self.params)?;
                Ok(ProfileKind::Constant(self.params[0]))
            }
            "sine" => {
                want(0, &self.params)?;
                Ok(ProfileKind::Sine)
            }
            "cosine" => {
                want(0, &self.params)?;
                Ok(ProfileKind::Cosine)
            }
            "rationaldecay" => {
                want(1, &self.params)?;
                let a = self.params[0];
                if a.fract() != 0.0 || !(1.0..=4.0).contains(&a) {
                    return Err(format!("rational decay exponent must be 1..4, got {a}"));
                }
                Ok(ProfileKind::RationalDecay(a as u8))
            }
            "shifted" => {
                want(2, &self.params)?;
                let base = self
                    .base
                    .ok_or_else(|| "Shifted kind needs a base profile".to_string())?;
                Ok(ProfileKind::Shifted {
                    base: Box::new(base.into_kind()?),
                    offset: self.params[0],
                    scale: self.params[1],
                })
            }
            _ => Err(format!("unknown profile kind {:?}", self.kind)),
        }
    }
}

impl Serialize for ProfileKind {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        KindRepr::from_kind(self).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ProfileKind {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = KindRepr::deserialize(de)?;
        repr.into_kind().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileRepr {
    #[serde(flatten)]
    kind: ProfileKind,
    r_range: [f64; 2],
}

impl Serialize for RadialProfile {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileRepr {
            kind: self.kind.clone(),
            r_range: [self.r_min, self.r_max],
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for RadialProfile {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = ProfileRepr::deserialize(de)?;
        RadialProfile::new(repr.kind, repr.r_range[0], repr.r_range[1])
            .map_err(serde::de::Error::custom)
    }
}
