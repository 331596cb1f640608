//! Alternating-minimization detector.
//!
//! The relaxed detection problem minimizes V(Y) = Σ_i ‖y_i − h_i·x_i‖² over
//! per-symbol decomposition vectors y_i constrained to sum to the received
//! vector, and over box-bounded symbols x ∈ [−l, l]^(2N_t). All three
//! updates are closed form; the detector never forms a Gram matrix and never
//! inverts anything:
//!
//! - multipliers:  λ^(k) = (C/N_t)·(y^(k) − Σ_i h_i^(k)·x_i)
//! - decomposition: y_i^(k) = h_i^(k)·x_i + λ^(k)/2
//! - symbols:      x_i = clamp(Σ_k y_i^(k)h_i^(k) / Σ_k (h_i^(k))², ±l)
//!
//! The x-update clamp realizes the three KKT cases of the per-coordinate
//! subproblem in one branch-free step: the 1-D quadratic is strictly convex,
//! so the constrained minimizer is the projection of the stationary point.
//!
//! [`run`] fuses the λ- and Y-updates through a shared product table
//! h_i^(k)·x_i and evaluates V through the identity below, which is what the
//! reported multiply counts reflect. The standalone [`update_lambda`],
//! [`update_y`], and [`objective`] operations are plain transcriptions of the
//! formulas; they produce bit-identical states and serve as the reference
//! implementation in tests.
//!
//! After a Y-update every column residual y_i − h_i·x_i equals λ/2 exactly,
//! for any C, so V = 2N_t·‖λ/2‖². [`objective`] recomputes the full sum
//! instead and must agree to float accuracy.

use crate::mat::RMat;
use crate::metrics::OpCounter;
use crate::model::{Constellation, MimoSystem};
use crate::Error;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Tuning knobs for one detector run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltMinConfig {
    /// Convergence tolerance δ on the absolute objective difference.
    pub tol: f64,
    /// Iteration cap T; the loop body runs at most this many times.
    pub max_iter: usize,
    /// Scaling factor C in the multiplier update.
    pub c_scale: f64,
    /// Record the per-iteration objective trace in the result.
    pub record_trace: bool,
}

impl AltMinConfig {
    /// Defaults: δ = 1e−3, T = 24, C = N_t, no trace.
    pub fn defaults_for(n_t: usize) -> Self {
        Self { tol: 1e-3, max_iter: 24, c_scale: n_t as f64, record_trace: false }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol: must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter: must be at least 1".into()));
        }
        if !(self.c_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c_scale: must be positive, got {}",
                self.c_scale
            )));
        }
        Ok(())
    }
}

/// Iteration state of the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct AltMinState {
    /// Current symbol estimate, length 2N_t, always inside [−l, l].
    pub x: Vec<f64>,
    /// Decomposition matrix; column i is y_i, shape 2N_r × 2N_t.
    pub y_dec: RMat,
    /// Multipliers λ, length 2N_r.
    pub lambda: Vec<f64>,
    /// Objective V for the current decomposition.
    pub v_obj: f64,
    /// Completed iterations.
    pub iter: usize,
    /// Precomputed Σ_k (h_i^(k))² per column; strictly positive.
    pub col_norms_sq: Vec<f64>,
}

/// KKT diagnostics of the per-coordinate x-subproblem.
///
/// Multipliers are recovered from the active clamp case under the standard
/// Lagrangian sign convention (minimize f with x−l ≤ 0 carrying μ₁ and
/// −x−l ≤ 0 carrying μ₂, stationarity f′ + μ₁ − μ₂ = 0): interior
/// coordinates take μ₁ = μ₂ = 0, an upper clamp takes μ₁ = max(0, −f′), a
/// lower clamp takes μ₂ = max(0, f′). Clamped multipliers that would come
/// out negative are floored at zero so the violation shows up in the
/// stationarity residual instead of as an infeasible multiplier.
///
/// The residuals measure the state's x against the decomposition currently
/// held in y_dec, so they are meaningful when x is freshest; after a
/// converged run, refresh x once against the final decomposition before
/// reading them.
#[derive(Debug, Clone, PartialEq)]
pub struct KktDiagnostics {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub stationarity_residual: f64,
    pub comp_slack_residual: f64,
}

/// Outcome of one detection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResult {
    /// Estimate before slicing, length 2N_t.
    pub x_hat_real: Vec<f64>,
    /// Alphabet-valued estimate.
    pub x_hat_sliced: Vec<f64>,
    /// Iterations used (for AltMin, completed loop bodies).
    pub iterations: usize,
    /// Whether the tolerance fired before the iteration cap.
    pub converged: bool,
    /// Objective after init and after each iteration, when recorded.
    pub v_trace: Option<Vec<f64>>,
    /// Real multiplications consumed by this detection.
    pub multiply_count: u64,
}

/// One row of the diagnostic trace emitted by [`run_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub v_obj: f64,
    pub lambda_norm: f64,
    pub x: Vec<f64>,
}

/// Builds the starting state: x = 0, then one λ/Y refresh and the objective.
///
/// Rejects channels with a zero-norm column, since the x-update divides by
/// the column norm.
pub fn init_state(
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    counter: &mut OpCounter,
) -> Result<AltMinState, Error> {
    cfg.validate()?;
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;

    let mut col_norms_sq = Vec::with_capacity(two_nt);
    for i in 0..two_nt {
        let cn: f64 = sys.h_real.col(i).iter().map(|h| h * h).sum();
        counter.add_mults(two_nr as u64);
        if cn <= 0.0 {
            return Err(Error::DegenerateChannel { col: i });
        }
        col_norms_sq.push(cn);
    }

    let mut state = AltMinState {
        x: vec![0.0; two_nt],
        y_dec: RMat::zeros(two_nr, two_nt),
        lambda: vec![0.0; two_nr],
        v_obj: 0.0,
        iter: 0,
        col_norms_sq,
    };
    lambda_y_refresh(&mut state, sys, cfg, counter);
    Ok(state)
}

/// Fused λ-update, Y-update, and objective used by [`init_state`] and
/// [`run`]: the products h_i^(k)·x_i are written into y_dec once, reused for
/// the residual that feeds λ, and topped up with λ/2 in place. V follows
/// from the column-residual identity without touching the columns again.
fn lambda_y_refresh(
    state: &mut AltMinState,
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    counter: &mut OpCounter,
) {
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;
    let c_over_nt = cfg.c_scale / sys.n_t as f64;
    counter.add_mults(1);

    let mut resid = sys.y_real.clone();
    for i in 0..two_nt {
        let xi = state.x[i];
        let pcol = state.y_dec.col_mut(i);
        for ((p, &h), r) in pcol.iter_mut().zip(sys.h_real.col(i)).zip(resid.iter_mut()) {
            let prod = h * xi;
            *p = prod;
            *r -= prod;
        }
        counter.add_mults(two_nr as u64);
    }

    for (lam, &r) in state.lambda.iter_mut().zip(&resid) {
        *lam = c_over_nt * r;
    }
    counter.add_mults(two_nr as u64);

    let mut half = vec![0.0; two_nr];
    let mut half_sq_sum = 0.0;
    for (h, &lam) in half.iter_mut().zip(&state.lambda) {
        let v = 0.5 * lam;
        *h = v;
        half_sq_sum += v * v;
    }
    counter.add_mults(2 * two_nr as u64);

    for i in 0..two_nt {
        for (p, &h) in state.y_dec.col_mut(i).iter_mut().zip(&half) {
            *p += h;
        }
    }

    state.v_obj = two_nt as f64 * half_sq_sum;
    counter.add_mults(1);
}

/// Multiplier update: λ^(k) = (C/N_t)·(y^(k) − Σ_i h_i^(k)·x_i).
pub fn update_lambda(
    state: &mut AltMinState,
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    counter: &mut OpCounter,
) {
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;
    let c_over_nt = cfg.c_scale / sys.n_t as f64;
    counter.add_mults(1);

    let mut resid = sys.y_real.clone();
    for i in 0..two_nt {
        let xi = state.x[i];
        for (r, &h) in resid.iter_mut().zip(sys.h_real.col(i)) {
            *r -= h * xi;
        }
        counter.add_mults(two_nr as u64);
    }
    for (lam, &r) in state.lambda.iter_mut().zip(&resid) {
        *lam = c_over_nt * r;
    }
    counter.add_mults(two_nr as u64);
}

/// Decomposition update: y_i^(k) = h_i^(k)·x_i + λ^(k)/2.
pub fn update_y(state: &mut AltMinState, sys: &MimoSystem, counter: &mut OpCounter) {
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;

    let mut half = vec![0.0; two_nr];
    for (h, &lam) in half.iter_mut().zip(&state.lambda) {
        *h = 0.5 * lam;
    }
    counter.add_mults(two_nr as u64);

    for i in 0..two_nt {
        let xi = state.x[i];
        let ycol = state.y_dec.col_mut(i);
        for ((y, &h), &hf) in ycol.iter_mut().zip(sys.h_real.col(i)).zip(&half) {
            *y = h * xi + hf;
        }
        counter.add_mults(two_nr as u64);
    }
}

/// Symbol update: per coordinate, the box projection of the subproblem's
/// stationary point Σ_k y_i^(k)h_i^(k) / Σ_k (h_i^(k))².
pub fn update_x(
    state: &mut AltMinState,
    sys: &MimoSystem,
    c: &Constellation,
    counter: &mut OpCounter,
) {
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;
    for i in 0..two_nt {
        let dot: f64 =
            state.y_dec.col(i).iter().zip(sys.h_real.col(i)).map(|(&y, &h)| y * h).sum();
        counter.add_mults(two_nr as u64);
        let xi = dot / state.col_norms_sq[i];
        counter.add_mults(1);
        state.x[i] = xi.clamp(-c.l, c.l);
    }
}

/// Exact objective V = Σ_i ‖y_i − h_i·x_i‖² over all columns.
pub fn objective(state: &AltMinState, sys: &MimoSystem, counter: &mut OpCounter) -> f64 {
    let two_nt = 2 * sys.n_t;
    let two_nr = 2 * sys.n_r;
    let mut v = 0.0;
    for i in 0..two_nt {
        let xi = state.x[i];
        for (&y, &h) in state.y_dec.col(i).iter().zip(sys.h_real.col(i)) {
            let r = y - h * xi;
            v += r * r;
        }
        counter.add_mults(2 * two_nr as u64);
    }
    v
}

/// Full detection: init, then x → λ → Y → V per iteration until
/// |V^(t) − V^(t−1)| < δ or the cap T is reached.
pub fn run(
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<DetectorResult, Error> {
    run_core(sys, cfg, c, counter, None)
}

/// [`run`] with a full diagnostic trace (objective, λ-norm, and x snapshot
/// per iteration). Trace bookkeeping is not counted as detection work.
pub fn run_traced(
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<(DetectorResult, Vec<TraceRow>), Error> {
    let mut rows = Vec::new();
    let result = run_core(sys, cfg, c, counter, Some(&mut rows))?;
    Ok((result, rows))
}

fn run_core(
    sys: &MimoSystem,
    cfg: &AltMinConfig,
    c: &Constellation,
    counter: &mut OpCounter,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<DetectorResult, Error> {
    let start_mults = counter.real_mults();
    let mut state = init_state(sys, cfg, counter)?;
    let mut v_trace = cfg.record_trace.then(|| vec![state.v_obj]);
    if let Some(rows) = trace.as_deref_mut() {
        rows.push(trace_row(&state));
    }

    let mut converged = false;
    for t in 1..=cfg.max_iter {
        let v_prev = state.v_obj;
        update_x(&mut state, sys, c, counter);
        lambda_y_refresh(&mut state, sys, cfg, counter);
        state.iter = t;
        if let Some(tr) = v_trace.as_mut() {
            tr.push(state.v_obj);
        }
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(trace_row(&state));
        }
        if (v_prev - state.v_obj).abs() < cfg.tol {
            converged = true;
            break;
        }
    }

    let x_hat_sliced = state.x.iter().map(|&v| c.nearest(v)).collect();
    Ok(DetectorResult {
        x_hat_real: state.x,
        x_hat_sliced,
        iterations: state.iter,
        converged,
        v_trace,
        multiply_count: counter.real_mults() - start_mults,
    })
}

fn trace_row(state: &AltMinState) -> TraceRow {
    let lambda_norm = state.lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
    TraceRow { iter: state.iter, v_obj: state.v_obj, lambda_norm, x: state.x.clone() }
}

/// KKT diagnostics of the state's x against the current decomposition; see
/// [`KktDiagnostics`] for the recovery rule and the intended reading point.
pub fn kkt_residuals(state: &AltMinState, sys: &MimoSystem, c: &Constellation) -> KktDiagnostics {
    let two_nt = 2 * sys.n_t;
    let mut mu1 = vec![0.0; two_nt];
    let mut mu2 = vec![0.0; two_nt];
    let mut stationarity = 0.0f64;
    let mut comp_slack = 0.0f64;

    for i in 0..two_nt {
        let dot: f64 =
            state.y_dec.col(i).iter().zip(sys.h_real.col(i)).map(|(&y, &h)| y * h).sum();
        let xi = state.x[i];
        let fprime = 2.0 * xi * state.col_norms_sq[i] - 2.0 * dot;
        if xi >= c.l {
            mu1[i] = (-fprime).max(0.0);
        } else if xi <= -c.l {
            mu2[i] = fprime.max(0.0);
        }
        stationarity = stationarity.max((fprime + mu1[i] - mu2[i]).abs());
        comp_slack = comp_slack.max((mu1[i] * (c.l - xi)).abs());
        comp_slack = comp_slack.max((mu2[i] * (c.l + xi)).abs());
    }

    KktDiagnostics { mu1, mu2, stationarity_residual: stationarity, comp_slack_residual: comp_slack }
}

/// Writes a [`run_traced`] dump as CSV with columns
/// `iter,v_obj,lambda_norm,x_0,…,x_{2N_t−1}`.
pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<(), Error> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let width = rows.first().map_or(0, |r| r.x.len());
    let header: Vec<String> = ["iter", "v_obj", "lambda_norm"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..width).map(|i| format!("x_{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut fields = vec![row.iter.to_string(), row.v_obj.to_string(), row.lambda_norm.to_string()];
        fields.extend(row.x.iter().map(|v| v.to_string()));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
