//! Monte-Carlo experiment runners: BER-vs-SNR sweeps, the iteration sweep
//! with parity-T detection, the complexity table, an optimality oracle
//! check, and single-shot detection for inspection.
//!
//! Determinism contract: every trial draws from an [`RngStream`] keyed by
//! `(seed, stream_id)` with `stream_id = (point_index << 40) | trial_id`,
//! detectors within a trial all see the identical realization (paired
//! comparison), and early-stop decisions are evaluated only at fixed chunk
//! boundaries. A given [`ExperimentConfig`] therefore produces bit-identical
//! [`TrialRecord`]s for any worker count.

use crate::altmin::{self, AltMinConfig, AltMinState, DetectorResult, TraceRow};
use crate::baselines::{self, LinearDetectorKind, ML_CANDIDATE_LIMIT};
use crate::metrics::{ber, count_scope, BerStat};
use crate::model::{
    build_constellation, demodulate, realize_system, Constellation, MimoSystem, RngStream,
};
use crate::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Pass threshold for the scaled decomposition-constraint residual
/// max_k |Σ_i y_i^(k) − y^(k)| / (1 + |y^(k)|) with C = 1.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Additive slack allowed on the monotone-descent check with C = 1.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Relative tolerance between the AltMin objective and the
/// projected-gradient oracle objective.
pub const ORACLE_REL_TOL: f64 = 1e-6;
/// Pass threshold for both KKT residuals.
pub const KKT_TOL: f64 = 1e-6;

/// Trials are dispatched to workers in fixed-size chunks; stop rules are
/// only consulted at chunk boundaries so outcomes cannot depend on worker
/// scheduling.
const TRIAL_CHUNK: u64 = 256;

/// Which experiment a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "ber-sweep", alias = "ber-vs-snr")]
    BerVsSnr,
    #[serde(rename = "iter-sweep", alias = "ber-vs-iterations")]
    BerVsIterations,
    #[serde(rename = "complexity-table")]
    ComplexityTable,
    #[serde(rename = "oracle-check")]
    OracleCheck,
    #[serde(rename = "detect-once")]
    DetectOnce,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::BerVsSnr => "ber-sweep",
            Experiment::BerVsIterations => "iter-sweep",
            Experiment::ComplexityTable => "complexity-table",
            Experiment::OracleCheck => "oracle-check",
            Experiment::DetectOnce => "detect-once",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ber-sweep" | "ber-vs-snr" => Ok(Experiment::BerVsSnr),
            "iter-sweep" | "ber-vs-iterations" => Ok(Experiment::BerVsIterations),
            "complexity-table" => Ok(Experiment::ComplexityTable),
            "oracle-check" => Ok(Experiment::OracleCheck),
            "detect-once" => Ok(Experiment::DetectOnce),
            other => Err(Error::InvalidConfig(format!("experiment: unknown value `{other}`"))),
        }
    }
}

/// Detector selection for sweep configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    AltMin,
    Mmse,
    Zf,
    Ml,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::AltMin => "altmin",
            DetectorKind::Mmse => "mmse",
            DetectorKind::Zf => "zf",
            DetectorKind::Ml => "ml",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "altmin" => Ok(DetectorKind::AltMin),
            "mmse" => Ok(DetectorKind::Mmse),
            "zf" => Ok(DetectorKind::Zf),
            "ml" => Ok(DetectorKind::Ml),
            other => Err(Error::InvalidConfig(format!("detectors: unknown detector `{other}`"))),
        }
    }
}

/// Fully resolved experiment description; the manifest echoes this verbatim.
///
/// `nt_list`/`t_list` drive the complexity table (one parity T per N_t row);
/// `t_list` alternatively overrides the iteration-sweep grid, which defaults
/// to 2, 4, … up to `t_sweep_max`. `noiseless` forces σ_v² = 0 while keeping
/// the nominal `snr_db_list` labels in the output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_t: usize,
    pub n_r: usize,
    pub modulation: u32,
    pub snr_db_list: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    pub altmin: AltMinConfig,
    pub trials: u64,
    pub min_bit_errors: u64,
    pub max_bits: u64,
    pub seed: u64,
    pub workers: usize,
    pub nt_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub t_sweep_max: usize,
    pub noiseless: bool,
}

impl ExperimentConfig {
    /// Baseline defaults: 16×128 QPSK at 12 dB, AltMin vs MMSE, 1000 trials
    /// with a 200-bit-error floor and a 2 Mbit budget.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            n_t: 16,
            n_r: 128,
            modulation: 4,
            snr_db_list: vec![12.0],
            detectors: vec![DetectorKind::AltMin, DetectorKind::Mmse],
            altmin: AltMinConfig::defaults_for(16),
            trials: 1000,
            min_bit_errors: 200,
            max_bits: 2_000_000,
            seed: 1,
            workers: 0,
            nt_list: vec![16, 32, 64, 128],
            t_list: Vec::new(),
            t_sweep_max: 24,
            noiseless: false,
        }
    }

    pub fn constellation(&self) -> Result<Constellation, Error> {
        build_constellation(self.modulation)
    }

    /// Rejects invalid configs with a message naming the offending field.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_t == 0 {
            return bad("n_t must be at least 1".into());
        }
        if self.n_r == 0 {
            return bad("n_r must be at least 1".into());
        }
        if !matches!(self.modulation, 4 | 16) {
            return bad(format!(
                "modulation: supported orders are 4 and 16 (got {})",
                self.modulation
            ));
        }
        if self.snr_db_list.is_empty() {
            return bad("snr_db_list must contain at least one value".into());
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return bad(
                "snr_db_list entries must be finite (use the noiseless flag for zero noise)"
                    .into(),
            );
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.max_bits == 0 {
            return bad("max_bits must be at least 1".into());
        }
        self.altmin.validate()?;
        if self.detectors.contains(&DetectorKind::Ml) {
            let side = if self.modulation == 4 { 2u128 } else { 4u128 };
            let candidates = side.saturating_pow(2 * self.n_t as u32);
            if candidates > ML_CANDIDATE_LIMIT {
                return bad(format!(
                    "detectors: ml would enumerate {candidates} candidates at n_t = {}, \
                     above the limit {ML_CANDIDATE_LIMIT}",
                    self.n_t
                ));
            }
        }
        match self.experiment {
            Experiment::BerVsSnr | Experiment::DetectOnce => {
                if self.detectors.is_empty() {
                    return bad("detectors must contain at least one entry".into());
                }
            }
            Experiment::BerVsIterations => {
                if self.t_list.is_empty() && self.t_sweep_max < 2 {
                    return bad("t_sweep_max must be at least 2 when t_list is empty".into());
                }
                if self.t_list.iter().any(|&t| t == 0) {
                    return bad("t_list entries must be at least 1".into());
                }
            }
            Experiment::ComplexityTable => {
                if self.nt_list.is_empty() {
                    return bad("nt_list must contain at least one entry".into());
                }
                if self.nt_list.iter().any(|&n| n == 0) {
                    return bad("nt_list entries must be at least 1".into());
                }
                if self.t_list.len() != self.nt_list.len() {
                    return bad(format!(
                        "t_list must supply one parity T per nt_list entry (got {} for {} rows)",
                        self.t_list.len(),
                        self.nt_list.len()
                    ));
                }
                if self.t_list.iter().any(|&t| t == 0) {
                    return bad("t_list entries must be at least 1".into());
                }
                let has = |k| self.detectors.contains(&k);
                if !has(DetectorKind::AltMin) || !has(DetectorKind::Mmse) {
                    return bad(
                        "detectors must include both altmin and mmse for the complexity table"
                            .into(),
                    );
                }
            }
            Experiment::OracleCheck => {}
        }
        Ok(())
    }
}

/// One row of the trial CSV; field order is the file's column order:
/// `trial_id,snr_db,detector,iterations,bit_errors,bits,real_mults,converged`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub snr_db: f64,
    pub detector: String,
    pub iterations: usize,
    pub bit_errors: u64,
    pub bits: u64,
    pub real_mults: u64,
    pub converged: bool,
}

/// A concrete detector instance with its output label.
#[derive(Debug, Clone)]
pub enum DetectorSpec {
    Linear { kind: LinearDetectorKind, label: String },
    Ml { label: String },
    AltMin { cfg: AltMinConfig, label: String },
}

impl DetectorSpec {
    pub fn from_kind(kind: DetectorKind, altmin: &AltMinConfig) -> Self {
        match kind {
            DetectorKind::AltMin => {
                DetectorSpec::AltMin { cfg: *altmin, label: "altmin".into() }
            }
            DetectorKind::Mmse => {
                DetectorSpec::Linear { kind: LinearDetectorKind::Mmse, label: "mmse".into() }
            }
            DetectorKind::Zf => {
                DetectorSpec::Linear { kind: LinearDetectorKind::Zf, label: "zf".into() }
            }
            DetectorKind::Ml => DetectorSpec::Ml { label: "ml".into() },
        }
    }

    /// AltMin capped at exactly `t` iterations, labelled `altmin_t{t}`.
    pub fn altmin_with_iters(base: &AltMinConfig, t: usize) -> Self {
        DetectorSpec::AltMin {
            cfg: AltMinConfig { max_iter: t, ..*base },
            label: format!("altmin_t{t}"),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            DetectorSpec::Linear { label, .. }
            | DetectorSpec::Ml { label }
            | DetectorSpec::AltMin { label, .. } => label,
        }
    }
}

/// Runs one detector on one realized system under the given counter.
pub fn run_detector_spec(
    spec: &DetectorSpec,
    sys: &MimoSystem,
    c: &Constellation,
    counter: &mut crate::metrics::OpCounter,
) -> Result<DetectorResult, Error> {
    match spec {
        DetectorSpec::Linear { kind, .. } => baselines::linear_detect(sys, *kind, c, counter),
        DetectorSpec::Ml { .. } => baselines::ml_bruteforce(sys, c, counter),
        DetectorSpec::AltMin { cfg, .. } => altmin::run(sys, cfg, c, counter),
    }
}

/// Aggregate over one (SNR point, detector) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointSummary {
    pub snr_db: f64,
    pub detector: String,
    pub trials: u64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ci95_half_width: f64,
    pub mean_iterations: f64,
    pub mean_real_mults: f64,
    pub converged_fraction: f64,
}

impl PointSummary {
    pub fn stat(&self) -> BerStat {
        BerStat::from_counts(self.bit_errors, self.bits)
    }
}

#[derive(Debug, Default)]
struct DetectorAccum {
    bit_errors: u64,
    bits: u64,
    iterations: u64,
    real_mults: u64,
    converged: u64,
    trials: u64,
}

impl DetectorAccum {
    fn absorb(&mut self, rec: &TrialRecord) {
        self.bit_errors += rec.bit_errors;
        self.bits += rec.bits;
        self.iterations += rec.iterations as u64;
        self.real_mults += rec.real_mults;
        self.converged += rec.converged as u64;
        self.trials += 1;
    }

    fn summary(&self, snr_db: f64, label: &str) -> PointSummary {
        let stat = BerStat::from_counts(self.bit_errors, self.bits);
        let t = self.trials.max(1) as f64;
        PointSummary {
            snr_db,
            detector: label.to_string(),
            trials: self.trials,
            bit_errors: self.bit_errors,
            bits: self.bits,
            ber: stat.ber,
            ci95_half_width: stat.ci95_half_width,
            mean_iterations: self.iterations as f64 / t,
            mean_real_mults: self.real_mults as f64 / t,
            converged_fraction: self.converged as f64 / t,
        }
    }
}

struct PointParams<'a> {
    n_t: usize,
    n_r: usize,
    c: &'a Constellation,
    snr_db: f64,
    noiseless: bool,
    seed: u64,
    point_idx: u64,
    trials: u64,
    min_bit_errors: u64,
    max_bits: u64,
}

struct PointOutcome {
    records: Vec<TrialRecord>,
    summaries: Vec<PointSummary>,
    trials_done: u64,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder.build().map_err(|e| Error::ThreadPool(e.to_string()))
}

fn run_trial(
    p: &PointParams<'_>,
    specs: &[DetectorSpec],
    trial_id: u64,
) -> Result<Vec<TrialRecord>, Error> {
    let stream_id = (p.point_idx << 40) | trial_id;
    let mut rng = RngStream::new(p.seed, stream_id);
    let snr_eff = if p.noiseless { f64::INFINITY } else { p.snr_db };
    let sys = realize_system(p.n_t, p.n_r, p.c, snr_eff, &mut rng)?;
    let tx_bits = demodulate(&sys.x_true_real, p.c);

    specs
        .iter()
        .map(|spec| {
            let mut counter = count_scope(spec.label());
            let result = run_detector_spec(spec, &sys, p.c, &mut counter)?;
            let rx_bits = demodulate(&result.x_hat_sliced, p.c);
            let stat = ber(&tx_bits, &rx_bits)?;
            Ok(TrialRecord {
                trial_id,
                snr_db: p.snr_db,
                detector: spec.label().to_string(),
                iterations: result.iterations,
                bit_errors: stat.bit_errors,
                bits: stat.bits_total,
                real_mults: result.multiply_count,
                converged: result.converged,
            })
        })
        .collect()
}

/// Runs one sweep point. With `fixed_trials` the exact trial count is
/// imposed (used for complexity rows and parity refinement); otherwise the
/// stop rule is: continue until `trials` are done and every detector has
/// `min_bit_errors`, or the per-detector bit budget `max_bits` is reached.
fn run_point(
    p: &PointParams<'_>,
    specs: &[DetectorSpec],
    pool: &rayon::ThreadPool,
    fixed_trials: Option<u64>,
) -> Result<PointOutcome, Error> {
    let bits_per_trial = 2 * p.n_t as u64 * p.c.bits_per_real_dim as u64;
    let mut records: Vec<TrialRecord> = Vec::new();
    let mut accums: Vec<DetectorAccum> =
        specs.iter().map(|_| DetectorAccum::default()).collect();
    let mut done: u64 = 0;

    loop {
        let batch = match fixed_trials {
            Some(n) => TRIAL_CHUNK.min(n - done),
            None => {
                let base = if done < p.trials {
                    TRIAL_CHUNK.min(p.trials - done)
                } else {
                    TRIAL_CHUNK
                };
                // Never start trials whose bits would all land past the
                // budget; the final trial may straddle it.
                let bits_done = done * bits_per_trial;
                let room = (p.max_bits.saturating_sub(bits_done)).div_ceil(bits_per_trial);
                base.min(room)
            }
        };
        if batch == 0 {
            break;
        }

        let start = done;
        let chunk: Vec<Result<Vec<TrialRecord>, Error>> = pool.install(|| {
            (start..start + batch)
                .into_par_iter()
                .map(|tid| run_trial(p, specs, tid))
                .collect()
        });
        for trial in chunk {
            let trial = trial?;
            for (acc, rec) in accums.iter_mut().zip(&trial) {
                acc.absorb(rec);
            }
            records.extend(trial);
        }
        done += batch;

        match fixed_trials {
            Some(n) => {
                if done >= n {
                    break;
                }
            }
            None => {
                if done * bits_per_trial >= p.max_bits {
                    break;
                }
                if done >= p.trials
                    && accums.iter().all(|a| a.bit_errors >= p.min_bit_errors)
                {
                    break;
                }
            }
        }
    }

    let summaries = specs
        .iter()
        .zip(&accums)
        .map(|(s, a)| a.summary(p.snr_db, s.label()))
        .collect();
    Ok(PointOutcome { records, summaries, trials_done: done })
}

fn point_params<'a>(
    cfg: &ExperimentConfig,
    c: &'a Constellation,
    snr_db: f64,
    point_idx: u64,
) -> PointParams<'a> {
    PointParams {
        n_t: cfg.n_t,
        n_r: cfg.n_r,
        c,
        snr_db,
        noiseless: cfg.noiseless,
        seed: cfg.seed,
        point_idx,
        trials: cfg.trials,
        min_bit_errors: cfg.min_bit_errors,
        max_bits: cfg.max_bits,
    }
}

/// BER-vs-SNR sweep over `snr_db_list` with the configured detector set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BerSweepSummary {
    pub points: Vec<PointSummary>,
}

pub struct BerSweepRun {
    pub summary: BerSweepSummary,
    pub records: Vec<TrialRecord>,
}

pub fn run_ber_vs_snr(cfg: &ExperimentConfig) -> Result<BerSweepRun, Error> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let pool = build_pool(cfg.workers)?;
    let specs: Vec<DetectorSpec> =
        cfg.detectors.iter().map(|&k| DetectorSpec::from_kind(k, &cfg.altmin)).collect();

    let mut records = Vec::new();
    let mut points = Vec::new();
    for (idx, &snr_db) in cfg.snr_db_list.iter().enumerate() {
        let p = point_params(cfg, &c, snr_db, idx as u64);
        let out = run_point(&p, &specs, &pool, None)?;
        records.extend(out.records);
        points.extend(out.summaries);
    }
    Ok(BerSweepRun { summary: BerSweepSummary { points }, records })
}

/// One iteration-budget entry of the iteration sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterPointSummary {
    pub t: usize,
    #[serde(flatten)]
    pub point: PointSummary,
}

/// Iteration sweep at fixed SNR: MMSE reference plus AltMin capped at each
/// grid T, with `parity_t` the first cap whose BER falls within the MMSE
/// 95% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterSweepSummary {
    pub snr_db: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub c_scale: f64,
    pub trials: u64,
    pub parity_t: Option<usize>,
    pub mmse: PointSummary,
    pub altmin: Vec<IterPointSummary>,
}

pub struct IterSweepRun {
    pub summary: IterSweepSummary,
    pub records: Vec<TrialRecord>,
}

/// Sweeps the AltMin iteration cap at `snr_db_list[0]` and locates the
/// parity iteration count against exact MMSE.
///
/// The grid is `t_list` if given, else 2, 4, … up to `t_sweep_max`. All
/// budgets run against the identical trial set as MMSE (paired). Parity is
/// the first T whose BER falls within the MMSE 95% interval; once the first
/// grid cap at or below the interval's upper bound is found, the gap from
/// the previous grid point is searched at granularity 1 by rerunning the
/// same trial ids, so `parity_t` is exact, not grid-quantized. A fast
/// descent can step across the interval between consecutive integer caps;
/// the crossing T (first at or below the upper bound) is reported then.
/// The configured `detectors` list is ignored: the reference is always
/// MMSE.
pub fn run_ber_vs_iterations(cfg: &ExperimentConfig) -> Result<IterSweepRun, Error> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let pool = build_pool(cfg.workers)?;
    let snr_db = cfg.snr_db_list[0];

    let grid: Vec<usize> = if cfg.t_list.is_empty() {
        (2..=cfg.t_sweep_max).step_by(2).collect()
    } else {
        let mut g = cfg.t_list.clone();
        g.sort_unstable();
        g.dedup();
        g
    };

    let mut specs = vec![DetectorSpec::from_kind(DetectorKind::Mmse, &cfg.altmin)];
    specs.extend(grid.iter().map(|&t| DetectorSpec::altmin_with_iters(&cfg.altmin, t)));

    let p = point_params(cfg, &c, snr_db, 0);
    let out = run_point(&p, &specs, &pool, None)?;
    let mut records = out.records;
    let mmse = out.summaries[0].clone();
    let mmse_stat = mmse.stat();
    let mut entries: Vec<IterPointSummary> = grid
        .iter()
        .zip(out.summaries[1..].iter())
        .map(|(&t, point)| IterPointSummary { t, point: point.clone() })
        .collect();

    let (_, mmse_hi) = mmse_stat.ci_bounds();
    let mut parity_t = None;
    let mut refined: Vec<IterPointSummary> = Vec::new();
    for (gi, entry) in entries.iter().enumerate() {
        if entry.point.stat().ber > mmse_hi {
            continue;
        }
        // entry.t is the first grid cap at or below the interval's upper
        // bound; the true first such integer lies in the gap above the
        // previous grid point.
        parity_t = Some(entry.t);
        let floor = if gi == 0 { 0 } else { entries[gi - 1].t };
        for t in floor + 1..entry.t {
            let spec = [DetectorSpec::altmin_with_iters(&cfg.altmin, t)];
            let r = run_point(&p, &spec, &pool, Some(out.trials_done))?;
            let point = r.summaries[0].clone();
            let hit = point.stat().ber <= mmse_hi;
            records.extend(r.records);
            refined.push(IterPointSummary { t, point });
            if hit {
                parity_t = Some(t);
                break;
            }
        }
        break;
    }
    entries.extend(refined);
    entries.sort_by_key(|e| e.t);

    Ok(IterSweepRun {
        summary: IterSweepSummary {
            snr_db,
            n_t: cfg.n_t,
            n_r: cfg.n_r,
            c_scale: cfg.altmin.c_scale,
            trials: out.trials_done,
            parity_t,
            mmse,
            altmin: entries,
        },
        records,
    })
}

/// One complexity-table row: mean instrumented multiplications per
/// detection for AltMin (at parity T) and MMSE at a given N_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n_t: usize,
    pub n_r: usize,
    pub t: usize,
    pub trials: u64,
    pub mean_mults_altmin: f64,
    pub mean_mults_mmse: f64,
    pub sqrts_mmse: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexitySummary {
    pub snr_db: f64,
    pub rows: Vec<ComplexityRow>,
}

pub struct ComplexityRun {
    pub summary: ComplexitySummary,
    pub records: Vec<TrialRecord>,
}

/// Builds the complexity table over `nt_list` at fixed N_r, running exactly
/// `trials` paired detections per row with AltMin capped at the row's
/// parity T from `t_list`.
///
/// The scaling factor follows each row's N_t (the detector default);
/// per-detection multiply counts do not depend on C. Square roots are
/// reported separately for MMSE (Cholesky pivots; AltMin uses none).
pub fn run_complexity_table(cfg: &ExperimentConfig) -> Result<ComplexityRun, Error> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let pool = build_pool(cfg.workers)?;
    let snr_db = cfg.snr_db_list[0];

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (row_idx, (&n_t, &t)) in cfg.nt_list.iter().zip(&cfg.t_list).enumerate() {
        let altmin_cfg = AltMinConfig {
            max_iter: t,
            c_scale: n_t as f64,
            ..cfg.altmin
        };
        let specs = [
            DetectorSpec::AltMin { cfg: altmin_cfg, label: format!("altmin_t{t}") },
            DetectorSpec::from_kind(DetectorKind::Mmse, &cfg.altmin),
        ];
        let p = PointParams {
            n_t,
            n_r: cfg.n_r,
            c: &c,
            snr_db,
            noiseless: cfg.noiseless,
            seed: cfg.seed,
            point_idx: row_idx as u64,
            trials: cfg.trials,
            min_bit_errors: 0,
            max_bits: u64::MAX,
        };
        let out = run_point(&p, &specs, &pool, Some(cfg.trials))?;

        // The square-root tally is size-deterministic; measure it on one
        // representative detection.
        let mut rng = RngStream::new(cfg.seed, (row_idx as u64) << 40);
        let snr_eff = if cfg.noiseless { f64::INFINITY } else { snr_db };
        let sys = realize_system(n_t, cfg.n_r, &c, snr_eff, &mut rng)?;
        let mut counter = count_scope("mmse-sqrts");
        baselines::linear_detect(&sys, LinearDetectorKind::Mmse, &c, &mut counter)?;

        let alt = &out.summaries[0];
        let mmse = &out.summaries[1];
        rows.push(ComplexityRow {
            n_t,
            n_r: cfg.n_r,
            t,
            trials: out.trials_done,
            mean_mults_altmin: alt.mean_real_mults,
            mean_mults_mmse: mmse.mean_real_mults,
            sqrts_mmse: counter.sqrts(),
            ratio: alt.mean_real_mults / mmse.mean_real_mults,
        });
        records.extend(out.records);
    }
    Ok(ComplexityRun { summary: ComplexitySummary { snr_db, rows }, records })
}

/// Per-trial outcome of the oracle check. Checks that do not apply to the
/// configured C are reported as `None` and do not affect `pass`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleTrialReport {
    pub trial_id: u64,
    pub iterations: usize,
    pub converged: bool,
    pub box_feasible: bool,
    pub constraint_residual: Option<f64>,
    pub monotone: Option<bool>,
    pub final_objective: f64,
    pub pg_objective: Option<f64>,
    pub objective_rel_diff: Option<f64>,
    pub kkt_stationarity: Option<f64>,
    pub kkt_comp_slack: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheckSummary {
    pub n_t: usize,
    pub n_r: usize,
    pub snr_db: f64,
    pub c_scale: f64,
    pub passed: u64,
    pub total: u64,
    pub reports: Vec<OracleTrialReport>,
}

/// Verifies optimality properties of AltMin trial by trial.
///
/// With C = 1 every trial must show monotone descent, the decomposition
/// constraint within [`CONSTRAINT_TOL`], a final objective within
/// [`ORACLE_REL_TOL`] of the projected-gradient oracle, and KKT residuals
/// within [`KKT_TOL`] (x refreshed once against the final decomposition
/// before reading them, per [`altmin::KktDiagnostics`]). With C ≠ 1 only box
/// feasibility and the stop rule are asserted; the other columns are null.
pub fn run_oracle_check(cfg: &ExperimentConfig) -> Result<OracleCheckSummary, Error> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let snr_db = cfg.snr_db_list[0];
    let strict = cfg.altmin.c_scale == 1.0;

    let mut reports = Vec::with_capacity(cfg.trials as usize);
    let mut passed = 0u64;
    for trial_id in 0..cfg.trials {
        let mut rng = RngStream::new(cfg.seed, trial_id);
        let snr_eff = if cfg.noiseless { f64::INFINITY } else { snr_db };
        let sys = realize_system(cfg.n_t, cfg.n_r, &c, snr_eff, &mut rng)?;
        let report = oracle_check_trial(trial_id, &sys, &cfg.altmin, &c, strict)?;
        passed += report.pass as u64;
        reports.push(report);
    }
    Ok(OracleCheckSummary {
        n_t: cfg.n_t,
        n_r: cfg.n_r,
        snr_db,
        c_scale: cfg.altmin.c_scale,
        passed,
        total: cfg.trials,
        reports,
    })
}

fn oracle_check_trial(
    trial_id: u64,
    sys: &MimoSystem,
    acfg: &AltMinConfig,
    c: &Constellation,
    strict: bool,
) -> Result<OracleTrialReport, Error> {
    let mut counter = count_scope("oracle-check");
    let mut state = altmin::init_state(sys, acfg, &mut counter)?;
    let mut constraint = strict.then(|| constraint_residual(&state, sys));
    let mut monotone = strict.then_some(true);
    let mut v_prev = state.v_obj;
    let mut converged = false;

    for t in 1..=acfg.max_iter {
        altmin::update_x(&mut state, sys, c, &mut counter);
        altmin::update_lambda(&mut state, sys, acfg, &mut counter);
        altmin::update_y(&mut state, sys, &mut counter);
        let v = altmin::objective(&state, sys, &mut counter);
        state.v_obj = v;
        state.iter = t;
        if let Some(r) = constraint.as_mut() {
            *r = r.max(constraint_residual(&state, sys));
        }
        if let Some(m) = monotone.as_mut() {
            if v > v_prev + MONOTONE_SLACK {
                *m = false;
            }
        }
        let delta = (v_prev - v).abs();
        v_prev = v;
        if delta < acfg.tol {
            converged = true;
            break;
        }
    }

    let final_objective = v_prev;
    let box_feasible = state.x.iter().all(|&x| x.abs() <= c.l);

    let (kkt_stationarity, kkt_comp_slack, pg_objective, objective_rel_diff) = if strict {
        altmin::update_x(&mut state, sys, c, &mut counter);
        let kkt = altmin::kkt_residuals(&state, sys, c);
        let pg = oracle::box_ls(&sys.h_real, &sys.y_real, c.l, 1e-12, 200_000);
        let pg_obj = pg.objective / (2.0 * sys.n_t as f64);
        let denom = final_objective.abs().max(pg_obj.abs()).max(1e-12);
        (
            Some(kkt.stationarity_residual),
            Some(kkt.comp_slack_residual),
            Some(pg_obj),
            Some((final_objective - pg_obj).abs() / denom),
        )
    } else {
        (None, None, None, None)
    };

    let pass = box_feasible
        && state.iter <= acfg.max_iter
        && constraint.is_none_or(|r| r <= CONSTRAINT_TOL)
        && monotone.unwrap_or(true)
        && objective_rel_diff.is_none_or(|r| r <= ORACLE_REL_TOL)
        && kkt_stationarity.is_none_or(|r| r <= KKT_TOL)
        && kkt_comp_slack.is_none_or(|r| r <= KKT_TOL);

    Ok(OracleTrialReport {
        trial_id,
        iterations: state.iter,
        converged,
        box_feasible,
        constraint_residual: constraint,
        monotone,
        final_objective,
        pg_objective,
        objective_rel_diff,
        kkt_stationarity,
        kkt_comp_slack,
        pass,
    })
}

/// Scaled worst-case decomposition-constraint residual
/// max_k |Σ_i y_i^(k) − y^(k)| / (1 + |y^(k)|).
pub fn constraint_residual(state: &AltMinState, sys: &MimoSystem) -> f64 {
    let two_nt = 2 * sys.n_t;
    let mut worst = 0.0f64;
    for k in 0..2 * sys.n_r {
        let mut sum = 0.0;
        for i in 0..two_nt {
            sum += state.y_dec.get(k, i);
        }
        let yk = sys.y_real[k];
        worst = worst.max((sum - yk).abs() / (1.0 + yk.abs()));
    }
    worst
}

/// Single-shot detection report for `detect-once`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectOnceReport {
    pub detector: String,
    pub n_t: usize,
    pub n_r: usize,
    pub snr_db: f64,
    pub modulation: u32,
    pub seed: u64,
    pub x_true: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub x_sliced: Vec<f64>,
    pub bit_errors: u64,
    pub bits: u64,
    pub residual_sq_true: f64,
    pub residual_sq_detected: f64,
    pub iterations: usize,
    pub converged: bool,
    pub real_mults: u64,
    pub sqrts: u64,
}

/// Runs the first configured detector on a single realization (stream 0)
/// and reports symbols and residuals. With `record_trace` and the AltMin
/// detector, the per-iteration trace rows are returned as well.
pub fn run_detect_once(
    cfg: &ExperimentConfig,
    record_trace: bool,
) -> Result<(DetectOnceReport, Option<Vec<TraceRow>>), Error> {
    cfg.validate()?;
    let c = cfg.constellation()?;
    let snr_db = cfg.snr_db_list[0];
    let mut rng = RngStream::new(cfg.seed, 0);
    let snr_eff = if cfg.noiseless { f64::INFINITY } else { snr_db };
    let sys = realize_system(cfg.n_t, cfg.n_r, &c, snr_eff, &mut rng)?;

    let spec = DetectorSpec::from_kind(cfg.detectors[0], &cfg.altmin);
    let mut counter = count_scope(spec.label());
    let (result, trace) = match (&spec, record_trace) {
        (DetectorSpec::AltMin { cfg: acfg, .. }, true) => {
            let (r, rows) = altmin::run_traced(&sys, acfg, &c, &mut counter)?;
            (r, Some(rows))
        }
        _ => (run_detector_spec(&spec, &sys, &c, &mut counter)?, None),
    };

    let residual_sq = |x: &[f64]| -> f64 {
        let hx = sys.h_real.matvec(x);
        sys.y_real.iter().zip(&hx).map(|(y, v)| (y - v) * (y - v)).sum()
    };
    let tx_bits = demodulate(&sys.x_true_real, &c);
    let rx_bits = demodulate(&result.x_hat_sliced, &c);
    let stat = ber(&tx_bits, &rx_bits)?;

    let report = DetectOnceReport {
        detector: spec.label().to_string(),
        n_t: cfg.n_t,
        n_r: cfg.n_r,
        snr_db,
        modulation: cfg.modulation,
        seed: cfg.seed,
        x_true: sys.x_true_real.clone(),
        x_hat: result.x_hat_real.clone(),
        x_sliced: result.x_hat_sliced.clone(),
        bit_errors: stat.bit_errors,
        bits: stat.bits_total,
        residual_sq_true: residual_sq(&sys.x_true_real),
        residual_sq_detected: residual_sq(&result.x_hat_sliced),
        iterations: result.iterations,
        converged: result.converged,
        real_mults: result.multiply_count,
        sqrts: counter.sqrts(),
    };
    Ok((report, trace))
}

/// Writes trial records as CSV with the fixed header.
pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record([
            "trial_id",
            "snr_db",
            "detector",
            "iterations",
            "bit_errors",
            "bits",
            "real_mults",
            "converged",
        ])?;
    }
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes complexity rows as CSV (column order = field order).
pub fn write_complexity_csv(path: &Path, rows: &[ComplexityRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any summary value as pretty JSON.
pub fn write_summary_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    use std::io::Write;
    writeln!(file)?;
    Ok(())
}

/// Independent projected-gradient oracle for the box-constrained
/// least-squares relaxation; used only for verification and never counted
/// against any detector.
pub mod oracle {
    use crate::mat::RMat;

    pub struct PgOutcome {
        pub x: Vec<f64>,
        /// ‖y − Hx‖² at the returned point (unscaled).
        pub objective: f64,
        pub iterations: usize,
        pub fixed_point_residual: f64,
    }

    /// Minimizes ‖y − Hx‖² over the box [−l, l]^n by projected gradient
    /// descent with a power-iteration Lipschitz estimate, until the
    /// projected fixed-point residual ‖x − P(x − ∇f/L)‖_∞ drops to `tol`
    /// or `max_iter` is reached.
    pub fn box_ls(h: &RMat, y: &[f64], l: f64, tol: f64, max_iter: usize) -> PgOutcome {
        let n = h.cols();
        let lipschitz = 2.0 * top_eigenvalue(h) * 1.05;
        let step = 1.0 / lipschitz;

        let mut x = vec![0.0; n];
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let grad = gradient(h, y, &x);
            let mut worst = 0.0f64;
            for (xi, g) in x.iter_mut().zip(&grad) {
                let next = (*xi - step * g).clamp(-l, l);
                worst = worst.max((next - *xi).abs());
                *xi = next;
            }
            iterations = it;
            residual = worst;
            if worst <= tol {
                break;
            }
        }

        let hx = h.matvec(&x);
        let objective = y.iter().zip(&hx).map(|(a, b)| (a - b) * (a - b)).sum();
        PgOutcome { x, objective, iterations, fixed_point_residual: residual }
    }

    fn gradient(h: &RMat, y: &[f64], x: &[f64]) -> Vec<f64> {
        let hx = h.matvec(x);
        let resid: Vec<f64> = hx.iter().zip(y).map(|(a, b)| a - b).collect();
        h.t_matvec(&resid).into_iter().map(|v| 2.0 * v).collect()
    }

    /// Largest eigenvalue of HᵀH by power iteration; falls back to the
    /// Frobenius bound if the iterate collapses. The caller's 1.05 pad
    /// absorbs the remaining estimation error.
    fn top_eigenvalue(h: &RMat) -> f64 {
        let n = h.cols();
        let frobenius_sq: f64 =
            (0..n).map(|i| h.col(i).iter().map(|v| v * v).sum::<f64>()).sum();
        if frobenius_sq == 0.0 {
            return 1.0;
        }
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = frobenius_sq;
        for _ in 0..300 {
            let w = h.t_matvec(&h.matvec(&v));
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return frobenius_sq;
            }
            lambda = norm;
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
        lambda
    }
}
