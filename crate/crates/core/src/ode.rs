//! Explicit adaptive Runge-Kutta integration with dense output.
//!
//! The integrator is Dormand-Prince 5(4) with the classical order-4 dense
//! interpolant and FSAL. All systems in this crate are small (dimension at
//! most twelve) and smooth up to a possible finite-time blow-up, which the
//! caller detects through a per-step monitor: after every accepted step the
//! monitor sees the dense segment and the endpoint state and may halt the
//! run. Dense segments are retained so halted runs can be post-processed,
//! for example to bisect the first zero of a determinant to 1e-8.

use crate::{Error, Result};

/// Butcher tableau nodes.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Fifth-order weights (the last row of A, FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

/// Embedded fourth-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Dense-output weights for the order-4 interpolant.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step with its interpolation polynomial.
///
/// The interpolant is evaluated in the local variable theta = (t - t0) / h
/// and reproduces the endpoint values and slopes of the step.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    /// Interpolated state at time `t`, clamped to the segment.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 {
            0.0
        } else {
            ((t - self.t0) / h).clamp(0.0, 1.0)
        };
        let th1 = 1.0 - theta;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.rcont[0][i]
                + theta
                    * (self.rcont[1][i]
                        + th1
                            * (self.rcont[2][i]
                                + theta * (self.rcont[3][i] + th1 * self.rcont[4][i])));
        }
        y
    }
}

/// Verdict returned by the per-step monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Halt,
}

/// An integration result: the dense trajectory plus end state.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub segments: Vec<DenseSegment<N>>,
    pub t_start: f64,
    pub t_end: f64,
    pub y_end: [f64; N],
    /// True when the monitor stopped the run before the horizon.
    pub halted: bool,
    pub n_accepted: usize,
    pub n_rejected: usize,
}

impl<const N: usize> Trajectory<N> {
    /// State at time `t` from the dense interpolant (binary search over
    /// segments; clamped to the covered interval).
    pub fn eval(&self, t: f64) -> [f64; N] {
        let segs = &self.segments;
        if segs.is_empty() {
            return self.y_end;
        }
        if t <= segs[0].t0 {
            return segs[0].eval(segs[0].t0);
        }
        let last = segs.len() - 1;
        if t >= segs[last].t1 {
            return segs[last].eval(segs[last].t1);
        }
        let idx = segs.partition_point(|s| s.t1 < t).min(last);
        segs[idx].eval(t)
    }
}

/// Integrator tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

fn err_norm<const N: usize>(
    e: &[f64; N],
    y0: &[f64; N],
    y1: &[f64; N],
    atol: f64,
    rtol: f64,
) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
        let q = e[i] / sk;
        s += q * q;
    }
    (s / N as f64).sqrt()
}

/// Initial step size estimate following Hairer, Norsett and Wanner.
fn initial_step<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    t_end: f64,
    opts: &OdeOptions,
) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let span = t_end - t0;
    let sk = |y: &[f64; N], i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let s = sk(y0, i);
        d0 += (y0[i] / s).powi(2);
        d1 += (f0[i] / s).powi(2);
    }
    d0 = (d0 / N as f64).sqrt();
    d1 = (d1 / N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span.abs());
    let mut y1 = *y0;
    for i in 0..N {
        y1[i] += h0 * f0[i];
    }
    let f1 = f(t0 + h0, &y1);
    let mut d2 = 0.0;
    for i in 0..N {
        let s = sk(y0, i);
        d2 += ((f1[i] - f0[i]) / s).powi(2);
    }
    d2 = (d2 / N as f64).sqrt() / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span.abs()).min(opts.max_step)
}

/// Integrate dy/dt = f(t, y) from `t0` to `t_end` (forward), calling
/// `monitor` after every accepted step. The monitor may halt the run; the
/// returned trajectory then ends at the last accepted step.
pub fn integrate<const N: usize, F, M>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut monitor: M,
) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    M: FnMut(&DenseSegment<N>, &[f64; N]) -> StepOutcome,
{
    if !(t_end > t0) {
        return Err(Error::InvalidParameter(format!(
            "integration horizon {t_end} must exceed start time {t0}"
        )));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t,
            reason: "derivative not finite at the initial state".into(),
        });
    }
    let mut h = initial_step(&f, t0, &y0, &k1, t_end, opts);
    let mut traj = Trajectory {
        segments: Vec::new(),
        t_start: t0,
        t_end: t0,
        y_end: y0,
        halted: false,
        n_accepted: 0,
        n_rejected: 0,
    };
    let mut k = [[0.0; N]; 7];
    let mut just_rejected = false;

    loop {
        if t >= t_end {
            break;
        }
        if traj.n_accepted + traj.n_rejected >= opts.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        h = h.min(opts.max_step).min(t_end - t);
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                reason: "step size underflow".into(),
            });
        }

        k[0] = k1;
        let mut finite = true;
        for s in 1..7 {
            let mut ys = y;
            for i in 0..N {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s - 1][j] * kj[i];
                }
                ys[i] += h * acc;
            }
            k[s] = f(t + C[s] * h, &ys);
            if k[s].iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
        }
        if !finite {
            // Retreat: the state is heading into a singularity inside the
            // attempted step.
            traj.n_rejected += 1;
            h *= 0.25;
            just_rejected = true;
            continue;
        }

        let mut y1 = y;
        let mut e = [0.0; N];
        for i in 0..N {
            let mut acc5 = 0.0;
            let mut acce = 0.0;
            for (s, ks) in k.iter().enumerate() {
                acc5 += B5[s] * ks[i];
                acce += (B5[s] - B4[s]) * ks[i];
            }
            y1[i] += h * acc5;
            e[i] = h * acce;
        }
        // Stage 7 is f at the candidate endpoint (FSAL): it seeds the next
        // step and closes the dense interpolant.
        let finite_end = y1.iter().all(|v| v.is_finite());
        let err = if finite_end {
            err_norm(&e, &y, &y1, opts.abs_tol, opts.rel_tol)
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y1[i] - y[i];
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = h * k[0][i] - dy;
                rcont[3][i] = dy - h * k[6][i] - rcont[2][i];
                let mut acc = D[0] * k[0][i];
                for (s, ks) in k.iter().enumerate().skip(2) {
                    acc += D[s] * ks[i];
                }
                rcont[4][i] = h * acc;
            }
            let seg = DenseSegment {
                t0: t,
                t1: t + h,
                rcont,
            };
            t += h;
            y = y1;
            k1 = k[6];
            traj.n_accepted += 1;
            traj.t_end = t;
            traj.y_end = y;
            let outcome = monitor(&seg, &y);
            traj.segments.push(seg);
            if outcome == StepOutcome::Halt {
                traj.halted = true;
                break;
            }
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            let fac = if just_rejected { fac.min(1.0) } else { fac };
            just_rejected = false;
            h *= fac;
        } else {
            traj.n_rejected += 1;
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.25
            };
            h *= fac;
            just_rejected = true;
        }
    }
    Ok(traj)
}

/// Bisection for a sign change of `g` on [a, b]; returns the midpoint of the
/// final bracket, which is shorter than `xtol`. Assumes g(a) and g(b) have
/// opposite signs.
pub fn bisect<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut ga = g(a);
    if ga == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
