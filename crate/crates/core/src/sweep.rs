//! Deterministic parallel sweeps over grids of initial data.
//!
//! The smoothness criteria quantify over every initial point of the flow;
//! a sweep realizes that quantifier as a finite sampled grid and is honest
//! about it: outputs carry the grid metadata and a `sampled` marker, and
//! each verdict is a per-point statement, never an extrapolation.
//!
//! Three modes share the plumbing:
//!
//! - `affine`: the closed-form spectral classifier of [`crate::affine`],
//!   one verdict per initial derivative matrix;
//! - `general`: direct characteristic + linearized integration with det Q
//!   zero detection, for fields without closed-form structure;
//! - `axisym`: the reduced radial system with its existence bound and
//!   blow-up condition per initial moment pair.
//!
//! Rows are evaluated in parallel on a fixed-size pool and collected by
//! grid index, so the output bytes never depend on the worker count. CSV
//! cells are printed with 17 significant digits; JSON mirrors round-trip
//! exactly. Files are written to a sibling temp path and renamed, so a
//! crashed run never leaves a partial table behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::affine::{classify_affine, frequencies, AffineStatus, GridPoint};
use crate::axisym::{
    cond_blowup_check, integrate_axisym, lemma1_bounds, monodromy_floquet, theorem3_bound,
    AxisymState,
};
use crate::characteristics::{
    detect_blowup, integrate_characteristic, integrate_linearized, BlowupStatus, CharState,
    IntegratorSettings,
};
use crate::fields::{AffineField, FieldSpec, ProfileKind, RadialProfile};
use crate::smallmat::Mat2;
use crate::{Error, Result};

/// Which classification pipeline the sweep drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Affine,
    General,
    Axisym,
}

impl SweepMode {
    fn params(self) -> &'static [&'static str] {
        match self {
            SweepMode::Affine => &["x01", "x02", "v11", "v12", "v21", "v22"],
            SweepMode::General => &[
                "x01", "x02", "vel1", "vel2", "v11", "v12", "v21", "v22",
            ],
            SweepMode::Axisym => &["u", "v", "r", "d", "eta"],
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepMode::Affine => "affine",
            SweepMode::General => "general",
            SweepMode::Axisym => "axisym",
        }
    }
}

/// Raw entries of an affine field gradient. `s21` is accepted only as a
/// redundant echo of `s12`: the gradient of a potential field is symmetric,
/// and an asymmetric matrix is a config error, not data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineEntries {
    pub s11: f64,
    #[serde(default)]
    pub s12: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s21: Option<f64>,
    pub s22: f64,
}

/// Field section of a config: exactly one of `affine` or `profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineEntries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileKind>,
    /// Validity range of a radial profile; omitted means [0, infinity),
    /// which only profiles with a finite tail limit accept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_range: Option<[f64; 2]>,
}

/// One gridded scalar: `n` evenly spaced values from `lo` to `hi`
/// inclusive (`n` = 1 pins the value at `lo`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisSpec {
    fn value(&self, j: usize) -> f64 {
        if self.n <= 1 {
            self.lo
        } else {
            self.lo + (self.hi - self.lo) * j as f64 / (self.n - 1) as f64
        }
    }
}

/// Ungridded components of the initial data; axes override entries of
/// this point per row. Plane modes read `x0`, `vel`, `v0` (the derivative
/// matrix, row-major); the axisymmetric mode reads the scalar block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BasePoint {
    pub x0: [f64; 2],
    pub vel: [f64; 2],
    pub v0: [[f64; 2]; 2],
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub d: f64,
    pub eta: f64,
}

impl BasePoint {
    fn set(&mut self, param: &str, val: f64) {
        match param {
            "x01" => self.x0[0] = val,
            "x02" => self.x0[1] = val,
            "vel1" => self.vel[0] = val,
            "vel2" => self.vel[1] = val,
            "v11" => self.v0[0][0] = val,
            "v12" => self.v0[0][1] = val,
            "v21" => self.v0[1][0] = val,
            "v22" => self.v0[1][1] = val,
            "u" => self.u = val,
            "v" => self.v = val,
            "r" => self.r = val,
            "d" => self.d = val,
            "eta" => self.eta = val,
            other => unreachable!("unvalidated axis param {other}"),
        }
    }

    fn finite(&self) -> bool {
        self.x0
            .iter()
            .chain(self.vel.iter())
            .chain(self.v0.iter().flatten())
            .chain([self.u, self.v, self.r, self.d, self.eta].iter())
            .all(|z| z.is_finite())
    }
}

/// Cartesian product of axes applied onto a base point, row-major with
/// the first declared axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
    pub base: BasePoint,
}

impl GridSpec {
    /// Total number of grid points.
    pub fn total(&self) -> usize {
        self.axes.iter().map(|a| a.n).product::<usize>().max(1)
    }

    fn point(&self, i: usize) -> (Vec<usize>, BasePoint) {
        let mut idx = vec![0usize; self.axes.len()];
        let mut rem = i;
        for k in (0..self.axes.len()).rev() {
            idx[k] = rem % self.axes[k].n;
            rem /= self.axes[k].n;
        }
        let mut pt = self.base;
        for (axis, &j) in self.axes.iter().zip(idx.iter()) {
            pt.set(&axis.param, axis.value(j));
        }
        (idx, pt)
    }
}

/// Destination paths; any subset may be set. `svg` is carried for the
/// plotting front end and ignored by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Full sweep configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub field: FieldConfig,
    pub b0: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    /// Overrides the mode's derived default: five slow beat periods for an
    /// oscillatory affine field, five isochronous lower bounds for a
    /// radial profile, else the integrator's own horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub outputs: OutputPaths,
    /// Worker threads; omitted or 0 picks the machine default. The output
    /// bytes are identical either way.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Attach Floquet data to axisymmetric rows (one closed-orbit
    /// monodromy solve per row; off by default).
    #[serde(default)]
    pub floquet: bool,
}

const MAX_AXES: usize = 4;
const MAX_POINTS: usize = 1 << 22;
const MAX_WORKERS: usize = 512;

enum ResolvedField {
    Affine(AffineField),
    Radial(RadialProfile),
}

struct Resolved {
    mode: SweepMode,
    field: ResolvedField,
    b0: f64,
    grid: GridSpec,
    settings: IntegratorSettings,
    workers: usize,
    floquet: bool,
    omega: Option<(f64, f64)>,
    theorem3: Option<f64>,
}

impl SweepConfig {
    /// Structural and domain validation, with the derived defaults filled
    /// in. Every error is a [`Error::Config`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Resolved> {
        if !self.b0.is_finite() {
            return Err(Error::Config("b0 must be finite".into()));
        }
        let field = self.resolve_field()?;
        if self.grid.axes.len() > MAX_AXES {
            return Err(Error::Config(format!(
                "grid.axes: at most {MAX_AXES} axes supported, got {}",
                self.grid.axes.len()
            )));
        }
        let mut seen: Vec<&str> = Vec::new();
        for (i, a) in self.grid.axes.iter().enumerate() {
            if !self.mode.params().contains(&a.param.as_str()) {
                return Err(Error::Config(format!(
                    "grid.axes[{i}].param: {:?} is not a {} parameter (expected one of {:?})",
                    a.param,
                    self.mode.name(),
                    self.mode.params()
                )));
            }
            if seen.contains(&a.param.as_str()) {
                return Err(Error::Config(format!(
                    "grid.axes[{i}].param: duplicate axis {:?}",
                    a.param
                )));
            }
            seen.push(&a.param);
            if a.n < 1 {
                return Err(Error::Config(format!("grid.axes[{i}].n: must be >= 1")));
            }
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo <= a.hi) {
                return Err(Error::Config(format!(
                    "grid.axes[{i}]: range [{}, {}] must be finite and ordered",
                    a.lo, a.hi
                )));
            }
        }
        if self.grid.total() > MAX_POINTS {
            return Err(Error::Config(format!(
                "grid: {} points exceeds the {MAX_POINTS} cap",
                self.grid.total()
            )));
        }
        if !self.grid.base.finite() {
            return Err(Error::Config("grid.base: entries must be finite".into()));
        }
        if let Some(w) = self.workers {
            if w > MAX_WORKERS {
                return Err(Error::Config(format!(
                    "workers: {w} exceeds the {MAX_WORKERS} cap"
                )));
            }
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config("horizon: must be positive and finite".into()));
            }
        }
        self.integrator
            .validate()
            .map_err(|e| Error::Config(format!("integrator: {e}")))?;

        let omega = match (&field, self.mode) {
            (ResolvedField::Affine(f), SweepMode::Affine | SweepMode::General) => {
                let fd = frequencies(f, self.b0)?;
                fd.omega_valid.then_some((fd.omega_plus, fd.omega_minus))
            }
            _ => None,
        };
        let theorem3 = match &field {
            ResolvedField::Radial(p) => theorem3_bound(p.bounds().s_plus, self.b0).ok(),
            ResolvedField::Affine(_) => None,
        };
        let horizon = self.horizon.unwrap_or_else(|| match self.mode {
            SweepMode::Affine | SweepMode::General => match (&field, omega) {
                (ResolvedField::Affine(f), Some(_)) => frequencies(f, self.b0)
                    .ok()
                    .and_then(|fd| fd.t1())
                    .map(|t1| 5.0 * t1)
                    .unwrap_or(self.integrator.horizon),
                _ => self.integrator.horizon,
            },
            SweepMode::Axisym => theorem3.map(|t| 5.0 * t).unwrap_or(self.integrator.horizon),
        });
        let settings = IntegratorSettings {
            horizon,
            ..self.integrator
        };
        settings
            .validate()
            .map_err(|e| Error::Config(format!("resolved horizon: {e}")))?;
        Ok(Resolved {
            mode: self.mode,
            field,
            b0: self.b0,
            grid: self.grid.clone(),
            settings,
            workers: self.workers.unwrap_or(0),
            floquet: self.floquet,
            omega,
            theorem3,
        })
    }

    fn resolve_field(&self) -> Result<ResolvedField> {
        let fc = &self.field;
        match (&fc.affine, &fc.profile) {
            (Some(_), Some(_)) => Err(Error::Config(
                "field: give either affine entries or a radial profile, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "field: needs affine entries or a radial profile".into(),
            )),
            (Some(a), None) => {
                let vals = [a.s11, a.s12, a.s22, a.s21.unwrap_or(0.0)];
                if !vals.iter().all(|z| z.is_finite()) {
                    return Err(Error::Config("field.affine: entries must be finite".into()));
                }
                if let Some(s21) = a.s21 {
                    if s21 != a.s12 {
                        return Err(Error::Config(format!(
                            "field.affine: s21 = {s21} differs from s12 = {}; the field \
                             gradient must be symmetric",
                            a.s12
                        )));
                    }
                }
                if fc.r_range.is_some() {
                    return Err(Error::Config(
                        "field.r_range: only meaningful for a radial profile".into(),
                    ));
                }
                match self.mode {
                    SweepMode::Axisym => {
                        // An affine field is axisymmetric only when it is a
                        // scalar multiple of the identity.
                        if a.s12 != 0.0 || a.s11 != a.s22 {
                            return Err(Error::Config(
                                "field: the axisym mode needs a radial profile or a scalar \
                                 affine field (s12 = 0, s11 = s22)"
                                    .into(),
                            ));
                        }
                        let p = RadialProfile::new(
                            ProfileKind::Constant(a.s11),
                            0.0,
                            f64::INFINITY,
                        )
                        .map_err(|e| Error::Config(format!("field: {e}")))?;
                        Ok(ResolvedField::Radial(p))
                    }
                    _ => Ok(ResolvedField::Affine(AffineField::new(a.s11, a.s12, a.s22))),
                }
            }
            (None, Some(kind)) => {
                if self.mode == SweepMode::Affine {
                    return Err(Error::Config(
                        "field: the affine mode needs affine entries, not a profile".into(),
                    ));
                }
                let [r_min, r_max] = fc.r_range.unwrap_or([0.0, f64::INFINITY]);
                let p = RadialProfile::new(kind.clone(), r_min, r_max)
                    .map_err(|e| Error::Config(format!("field.profile: {e}")))?;
                Ok(ResolvedField::Radial(p))
            }
        }
    }
}

/// One classified grid point. The variant matches the sweep mode; numeric
/// fields are `None` when undefined for the row (and non-finite values
/// are dropped rather than printed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepRow {
    Affine(AffineRow),
    General(GeneralRow),
    Axisym(AxisymRow),
}

impl SweepRow {
    /// Status label, shared across variants for summarizing.
    pub fn status(&self) -> &str {
        match self {
            SweepRow::Affine(r) => &r.status,
            SweepRow::General(r) => &r.status,
            SweepRow::Axisym(r) => &r.status,
        }
    }

    fn t_star(&self) -> Option<f64> {
        match self {
            SweepRow::Affine(r) => r.t_star,
            SweepRow::General(r) => r.t_star,
            SweepRow::Axisym(r) => r.t_star,
        }
    }

    fn detq_min(&self) -> Option<f64> {
        match self {
            SweepRow::Affine(r) => r.detq_min,
            SweepRow::General(r) => r.detq_min,
            SweepRow::Axisym(_) => None,
        }
    }
}

/// Verdict of the closed-form affine classifier at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub idx: Vec<usize>,
    pub x0: [f64; 2],
    pub v0: [[f64; 2]; 2],
    /// One of sufficient | smooth | blowup | inconclusive | error.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub t_star: Option<f64>,
    pub detq_min: Option<f64>,
    pub c: Option<f64>,
    pub a_minus: Option<f64>,
    pub b_minus: Option<f64>,
    pub a_plus: Option<f64>,
    pub b_plus: Option<f64>,
    pub k: Option<f64>,
    pub omega_plus: Option<f64>,
    pub omega_minus: Option<f64>,
    pub mu: Option<bool>,
    pub nr: Option<bool>,
    pub sc: Option<bool>,
}

/// det Q detection along one directly integrated characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralRow {
    pub idx: Vec<usize>,
    pub x0: [f64; 2],
    pub vel: [f64; 2],
    pub v0: [[f64; 2]; 2],
    /// One of smooth | blowup | inconclusive | error; smooth only means
    /// no det Q zero before `t_checked`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub t_star: Option<f64>,
    pub detq_min: Option<f64>,
    pub t_checked: Option<f64>,
}

/// Existence data for one axisymmetric initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisymRow {
    pub idx: Vec<usize>,
    pub u0: f64,
    pub v0: f64,
    pub r0: f64,
    pub d0: f64,
    pub eta0: f64,
    /// One of bounded | moment_blowup | error; bounded means the moments
    /// stayed under the cap for the whole horizon.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub t_star: Option<f64>,
    /// Time the moments are known to stay finite (the horizon, or the
    /// truncation time when they blow up).
    pub existence_time: Option<f64>,
    /// Guaranteed lower existence horizon whenever `cond_bl` is true.
    pub theorem3_bound: Option<f64>,
    /// The divergence/vorticity blow-up condition at this initial moment
    /// pair, evaluated with the orbit's own trapping constants.
    pub cond_bl: Option<bool>,
    pub c2: Option<f64>,
    pub floquet_defect: Option<f64>,
    pub period: Option<f64>,
}

/// Verdict counts and extremes over a finished table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub counts: BTreeMap<String, usize>,
    pub min_detq: Option<f64>,
    pub earliest_t_star: Option<f64>,
    pub rows_with_errors: usize,
}

/// Grid provenance embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub mode: SweepMode,
    pub b0: f64,
    pub field: FieldConfig,
    pub grid: GridSpec,
    pub horizon: f64,
    /// Always true: verdicts hold at the sampled points only.
    pub sampled: bool,
    pub total: usize,
    pub note: String,
}

/// A finished sweep: metadata, ordered rows, and the summary block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
    pub summary: Summary,
}

fn fin(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Classify every grid point of the config, in parallel, in grid order.
///
/// Per-point failures land in their row's status/note and never abort the
/// sweep; only config-level problems error out.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    let rs = cfg.resolve()?;
    let total = rs.grid.total();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rs.workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| eval_row(&rs, i))
            .collect()
    });
    let summary = summarize(&rows);
    let note = match rs.mode {
        SweepMode::Axisym => {
            "verdicts are sampled per grid point, never extrapolated; theorem3_bound is the \
             isochronous time scale 2 pi / sqrt(4 s_plus + b0^2) and its relation to \
             existence_time is reported, not assumed: the underlying moment estimate admits \
             both a lower-horizon and an upper-bound reading, and sampled cond_bl rows are \
             observed on both sides of the bound"
        }
        _ => "verdicts are sampled per grid point, never extrapolated",
    };
    Ok(SweepOutput {
        meta: SweepMeta {
            mode: rs.mode,
            b0: rs.b0,
            field: cfg.field.clone(),
            grid: rs.grid.clone(),
            horizon: rs.settings.horizon,
            sampled: true,
            total,
            note: note.into(),
        },
        rows,
        summary,
    })
}

fn eval_row(rs: &Resolved, i: usize) -> SweepRow {
    let (idx, pt) = rs.grid.point(i);
    match rs.mode {
        SweepMode::Affine => SweepRow::Affine(eval_affine(rs, idx, &pt)),
        SweepMode::General => SweepRow::General(eval_general(rs, idx, &pt)),
        SweepMode::Axisym => SweepRow::Axisym(eval_axisym(rs, idx, &pt)),
    }
}

fn eval_affine(rs: &Resolved, idx: Vec<usize>, pt: &BasePoint) -> AffineRow {
    let f = match &rs.field {
        ResolvedField::Affine(f) => f,
        ResolvedField::Radial(_) => unreachable!("validated mode-field pairing"),
    };
    let v0 = Mat2::new(pt.v0[0][0], pt.v0[0][1], pt.v0[1][0], pt.v0[1][1]);
    let gp = GridPoint { x0: pt.x0, v0 };
    let mut row = AffineRow {
        idx,
        x0: pt.x0,
        v0: pt.v0,
        status: "error".into(),
        note: None,
        t_star: None,
        detq_min: None,
        c: None,
        a_minus: None,
        b_minus: None,
        a_plus: None,
        b_plus: None,
        k: None,
        omega_plus: rs.omega.map(|(p, _)| p),
        omega_minus: rs.omega.map(|(_, m)| m),
        mu: None,
        nr: None,
        sc: None,
    };
    match classify_affine(f, rs.b0, std::slice::from_ref(&gp), &rs.settings) {
        Ok(mut verdicts) => {
            let v = verdicts.remove(0);
            row.mu = Some(v.criteria.mu.holds);
            row.nr = v.criteria.nr;
            row.sc = v.criteria.sc.map(|c| c.holds);
            row.detq_min = v.detq_min.and_then(fin);
            if let Some(fc) = v.coeffs {
                row.c = fin(fc.c);
                row.a_minus = fin(fc.a_minus);
                row.b_minus = fin(fc.b_minus);
                row.a_plus = fin(fc.a_plus);
                row.b_plus = fin(fc.b_plus);
                row.k = fin(fc.k);
            }
            match v.status {
                AffineStatus::GloballySmoothSufficient => row.status = "sufficient".into(),
                AffineStatus::GloballySmoothNumerical => row.status = "smooth".into(),
                AffineStatus::BlowupAt(t) => {
                    row.status = "blowup".into();
                    row.t_star = fin(t);
                }
                AffineStatus::Inconclusive(why) => {
                    row.status = "inconclusive".into();
                    row.note = Some(why);
                }
            }
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    row
}

fn eval_general(rs: &Resolved, idx: Vec<usize>, pt: &BasePoint) -> GeneralRow {
    let field = match &rs.field {
        ResolvedField::Affine(f) => FieldSpec::Affine(*f),
        ResolvedField::Radial(p) => FieldSpec::Radial(p.clone()),
    };
    let mut row = GeneralRow {
        idx,
        x0: pt.x0,
        vel: pt.vel,
        v0: pt.v0,
        status: "error".into(),
        note: None,
        t_star: None,
        detq_min: None,
        t_checked: None,
    };
    let init = CharState {
        v: pt.vel,
        x: pt.x0,
        t: 0.0,
    };
    let v0 = Mat2::new(pt.v0[0][0], pt.v0[0][1], pt.v0[1][0], pt.v0[1][1]);
    let run = integrate_characteristic(&field, &init, rs.b0, &rs.settings).and_then(|traj| {
        integrate_linearized(&field, &traj, &v0, rs.b0, &rs.settings)
    });
    match run {
        Ok(lin) => {
            let res = detect_blowup(&lin);
            row.detq_min = fin(res.detq_min);
            match res.status {
                BlowupStatus::BlowupAt(t) => {
                    row.status = "blowup".into();
                    row.t_star = fin(t);
                }
                BlowupStatus::Smooth(t) => {
                    row.status = "smooth".into();
                    row.t_checked = fin(t);
                }
                BlowupStatus::Inconclusive(why) => {
                    row.status = "inconclusive".into();
                    row.note = Some(why);
                }
            }
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    row
}

fn eval_axisym(rs: &Resolved, idx: Vec<usize>, pt: &BasePoint) -> AxisymRow {
    let p = match &rs.field {
        ResolvedField::Radial(p) => p,
        ResolvedField::Affine(_) => unreachable!("validated mode-field pairing"),
    };
    let mut row = AxisymRow {
        idx,
        u0: pt.u,
        v0: pt.v,
        r0: pt.r,
        d0: pt.d,
        eta0: pt.eta,
        status: "error".into(),
        note: None,
        t_star: None,
        existence_time: None,
        theorem3_bound: rs.theorem3,
        cond_bl: None,
        c2: fin(pt.r * (rs.b0 - 2.0 * pt.v).abs().sqrt()),
        floquet_defect: None,
        period: None,
    };
    let bounds = p.bounds();
    if let Ok(lb) = lemma1_bounds(bounds.s_minus, bounds.s_plus, rs.b0, pt.u, pt.v) {
        let report = cond_blowup_check(
            lb.u_plus,
            lb.v_minus,
            lb.v_plus,
            rs.b0,
            bounds.lambda_minus,
            bounds.lambda_plus,
            pt.d,
            pt.eta,
        );
        row.cond_bl = Some(report.holds_displayed);
    }
    let init = AxisymState {
        u: pt.u,
        v: pt.v,
        r: pt.r,
        d: pt.d,
        eta: pt.eta,
    };
    match integrate_axisym(p, rs.b0, &init, &rs.settings) {
        Ok(traj) => match traj.truncation {
            Some(t) => {
                row.status = "moment_blowup".into();
                row.t_star = fin(t);
                row.existence_time = fin(t);
            }
            None => {
                row.status = "bounded".into();
                row.existence_time = fin(traj.t_end());
            }
        },
        Err(e) => row.note = Some(e.to_string()),
    }
    if rs.floquet {
        if let Ok(fd) = monodromy_floquet(p, rs.b0, pt.u, pt.v, pt.r, &rs.settings) {
            row.floquet_defect = fin(fd.unit_circle_defect);
            row.period = fin(fd.period);
        }
    }
    row
}

fn summarize(rows: &[SweepRow]) -> Summary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut min_detq: Option<f64> = None;
    let mut earliest: Option<f64> = None;
    let mut errors = 0usize;
    for r in rows {
        *counts.entry(r.status().to_string()).or_insert(0) += 1;
        if r.status() == "error" {
            errors += 1;
        }
        if let Some(d) = r.detq_min() {
            min_detq = Some(min_detq.map_or(d, |m: f64| m.min(d)));
        }
        if let Some(t) = r.t_star() {
            earliest = Some(earliest.map_or(t, |m: f64| m.min(t)));
        }
    }
    Summary {
        counts,
        min_detq,
        earliest_t_star: earliest,
        rows_with_errors: errors,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn bool_cell(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

/// Render the table as CSV: grid metadata as leading `#` comments, a
/// fixed header row, then one line per grid point with 17-significant-
/// digit floats and empty cells for undefined values.
pub fn csv_bytes(out: &SweepOutput) -> Vec<u8> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# sampled grid of initial data; mode={}; b0={:.16e}; points={}",
        out.meta.mode.name(),
        out.meta.b0,
        out.meta.total
    );
    for (i, a) in out.meta.grid.axes.iter().enumerate() {
        let _ = writeln!(
            s,
            "# axis {i}: {} in [{:.16e}, {:.16e}], n={}",
            a.param, a.lo, a.hi, a.n
        );
    }
    let _ = writeln!(s, "# rows are row-major over the axes; first axis slowest");
    match out.meta.mode {
        SweepMode::Affine => {
            let _ = writeln!(
                s,
                "x01,x02,status,t_star,c,a_minus,b_minus,a_plus,b_plus,k,omega_plus,omega_minus"
            );
            for row in &out.rows {
                let SweepRow::Affine(r) = row else { continue };
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{},{},{},{},{},{},{},{},{},{}",
                    r.x0[0],
                    r.x0[1],
                    r.status,
                    cell(r.t_star),
                    cell(r.c),
                    cell(r.a_minus),
                    cell(r.b_minus),
                    cell(r.a_plus),
                    cell(r.b_plus),
                    cell(r.k),
                    cell(r.omega_plus),
                    cell(r.omega_minus),
                );
            }
        }
        SweepMode::General => {
            let _ = writeln!(
                s,
                "x01,x02,vel1,vel2,status,t_star,detq_min,t_checked"
            );
            for row in &out.rows {
                let SweepRow::General(r) = row else { continue };
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
                    r.x0[0],
                    r.x0[1],
                    r.vel[0],
                    r.vel[1],
                    r.status,
                    cell(r.t_star),
                    cell(r.detq_min),
                    cell(r.t_checked),
                );
            }
        }
        SweepMode::Axisym => {
            let _ = writeln!(
                s,
                "u0,v0,r0,d0,eta0,status,t_star,existence_time,theorem3_bound,cond_bl,\
                 floquet_defect"
            );
            for row in &out.rows {
                let SweepRow::Axisym(r) = row else { continue };
                let _ = writeln!(
                    s,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{},{}",
                    r.u0,
                    r.v0,
                    r.r0,
                    r.d0,
                    r.eta0,
                    r.status,
                    cell(r.t_star),
                    cell(r.existence_time),
                    cell(r.theorem3_bound),
                    bool_cell(r.cond_bl),
                    cell(r.floquet_defect),
                );
            }
        }
    }
    s.into_bytes()
}

/// Write bytes to a sibling `.tmp` file and rename it into place, so the
/// destination is either absent, the old content, or the full new content.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Persist the table to the configured destinations (CSV and/or JSON
/// mirror), atomically per file.
pub fn write_outputs(out: &SweepOutput, paths: &OutputPaths) -> Result<()> {
    if let Some(p) = &paths.csv {
        atomic_write(p, &csv_bytes(out))?;
    }
    if let Some(p) = &paths.json {
        let body = serde_json::to_vec_pretty(out)
            .map_err(|e| Error::Config(format!("json serialization: {e}")))?;
        atomic_write(p, &body)?;
    }
    Ok(())
}

/// Parse a config from JSON text. `strict` rejects unknown keys; the
/// lenient mode drops them and reports each as a warning. The config is
/// validated either way.
pub fn parse_config(text: &str, strict: bool) -> Result<(SweepConfig, Vec<String>)> {
    let mut v: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("json: {e}")))?;
    let mut warnings = Vec::new();
    check_keys(&mut v, String::new(), strict, &mut warnings)?;
    let cfg: SweepConfig =
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok((cfg, warnings))
}

/// Load and validate a config file; see [`parse_config`].
pub fn load_config(path: &Path, strict: bool) -> Result<(SweepConfig, Vec<String>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, strict)
}

/// Keys accepted at a normalized config path (array hops become `[]`).
/// Paths not listed are scalar/array leaves where no object is expected,
/// so any keys found there are unknown.
fn allowed_children(path: &str) -> &'static [&'static str] {
    match path {
        "" => &[
            "mode", "field", "b0", "grid", "integrator", "horizon", "outputs", "workers",
            "floquet",
        ],
        "field" => &["affine", "profile", "r_range"],
        "field.affine" => &["s11", "s12", "s21", "s22"],
        "grid" => &["axes", "base"],
        "grid.axes[]" => &["param", "lo", "hi", "n"],
        "grid.base" => &["x0", "vel", "v0", "u", "v", "r", "d", "eta"],
        "integrator" => &["rel_tol", "abs_tol", "max_step", "horizon", "blowup_velocity_cap"],
        "outputs" => &["csv", "json", "svg"],
        p if p == "field.profile" || (p.starts_with("field.profile.") && p.ends_with("base")) => {
            &["kind", "params", "base"]
        }
        _ => &[],
    }
}

fn check_keys(
    v: &mut Value,
    path: String,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<()> {
    match v {
        Value::Object(map) => {
            let allowed = allowed_children(&path);
            let keys: Vec<String> = map.keys().cloned().collect();
            for k in keys {
                let full = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                if !allowed.contains(&k.as_str()) {
                    if strict {
                        return Err(Error::Config(format!("unknown key {full:?}")));
                    }
                    warnings.push(format!("ignoring unknown key {full:?}"));
                    map.remove(&k);
                } else {
                    check_keys(map.get_mut(&k).unwrap(), full, strict, warnings)?;
                }
            }
        }
        Value::Array(arr) => {
            for e in arr.iter_mut() {
                check_keys(e, format!("{path}[]"), strict, warnings)?;
            }
        }
        _ => {}
    }
    Ok(())
}
