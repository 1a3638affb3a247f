//! Reproducible experiment drivers: phase-transition sweeps, the broadband
//! DOA comparison, weight-sensitivity tables, and bound-validation sweeps,
//! plus plot-ready CSV/JSON emission.
//!
//! Configs are plain serde structs holding raw data (block sizes,
//! probabilities, set lists); the drivers construct the validated domain
//! types at run time, so a malformed JSON config fails with the same errors
//! as malformed library input.
//!
//! Reproducibility contract: every Monte-Carlo draw comes from a
//! [`ChaCha8Rng`] stream derived from `(seed, m-index, trial)`, so results
//! are independent of worker scheduling and a rerun with the same config is
//! byte-identical. Weight schemes are compared on *common random data*: one
//! draw of `(support, x, A)` per trial is shared by every scheme, so curves
//! differ only through the weights.

use crate::doa::{estimate, synthesize, DoaScenario, EtaRule, SpectrumEstimate};
use crate::error::{Error, Result};
use crate::model::{
    validate_partition, BlockPartition, LambdaVector, PriorModel1, PriorModel2, WeightVector,
};
use crate::recovery::{solve_weighted, success, MeasurementSystem, SolverConfig};
use crate::statdim::{expected_bound_model1, statdim_bound};
use crate::weights::{
    heuristic_lambda, heuristic_weights, robustness_constant, solve_model1, solve_model2,
    solve_weight_scalar, WeightSolverConfig,
};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

/// Default `ε` for the heuristic weight rule `1/(p + ε)`.
pub const DEFAULT_HEURISTIC_EPS: f64 = 0.01;

/// Weighting policy compared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Weights from the prior-optimality equation.
    Optimal,
    /// `1/(p + ε)` per block (or per set).
    Heuristic,
    /// All-ones.
    Equal,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Optimal => "optimal",
            WeightScheme::Heuristic => "heuristic",
            WeightScheme::Equal => "equal",
        })
    }
}

/// Serde-friendly mirror of [`SolverConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = SolverConfig::<f64>::default();
        Self {
            rho: c.rho,
            abs_tol: c.abs_tol,
            rel_tol: c.rel_tol,
            max_iters: c.max_iters,
        }
    }
}

impl SolverSettings {
    pub fn to_config(&self) -> SolverConfig<f64> {
        SolverConfig {
            rho: self.rho,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
        }
    }
}

fn default_heuristic_eps() -> f64 {
    DEFAULT_HEURISTIC_EPS
}

fn default_success_threshold() -> f64 {
    crate::recovery::DEFAULT_SUCCESS_THRESHOLD
}

fn default_rel_threshold() -> f64 {
    crate::doa::DEFAULT_PEAK_THRESHOLD
}

fn default_num_seeds() -> usize {
    1
}

fn default_delta_p() -> f64 {
    1e-3
}

fn default_sweep_supports() -> usize {
    20
}

fn validate_schemes(schemes: &[WeightScheme]) -> Result<()> {
    if schemes.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one weight scheme must be selected".into(),
        ));
    }
    Ok(())
}

fn validate_m_grid(m_grid: &[usize]) -> Result<()> {
    if m_grid.is_empty() {
        return Err(Error::InvalidArgument("m grid must be nonempty".into()));
    }
    if m_grid.contains(&0) {
        return Err(Error::InvalidArgument(
            "measurement counts must be ≥ 1".into(),
        ));
    }
    if m_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::InvalidArgument(
            "m grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Phase transition
// ---------------------------------------------------------------------------

/// Phase-transition sweep: success rate of each weighting scheme as the
/// measurement count crosses the predicted sample-complexity bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTransitionConfig {
    /// Block sizes of the partition; the ambient dimension is their sum.
    pub block_sizes: Vec<usize>,
    /// Per-block activation probabilities (Model-1 prior).
    pub probabilities: Vec<f64>,
    /// Measurement counts to sweep, strictly increasing.
    pub m_grid: Vec<usize>,
    /// Random instances per grid point.
    pub trials: usize,
    /// Base seed; trial `(i, t)` uses stream `(i << 32) | t`.
    pub seed: u64,
    /// Weighting schemes to compare on common random data.
    pub schemes: Vec<WeightScheme>,
    #[serde(default = "default_heuristic_eps")]
    pub heuristic_eps: f64,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl PhaseTransitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.len() != self.probabilities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} block sizes for {} probabilities",
                self.block_sizes.len(),
                self.probabilities.len()
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be ≥ 1".into()));
        }
        validate_m_grid(&self.m_grid)?;
        validate_schemes(&self.schemes)
    }

    /// The bundled benchmark prior: a head of 10 blocks that are almost
    /// surely active (`p = 0.9`) plus a 40-block geometric ramp from 0.5
    /// down to 0.02. The ramp spreads activation probabilities widely, which
    /// is exactly the regime where per-block weighting pays off.
    pub fn benchmark_probabilities() -> Vec<f64> {
        let mut p = vec![0.9; 10];
        p.extend((0..40).map(|j| 0.5 * (0.02f64 / 0.5).powf(j as f64 / 39.0)));
        p
    }

    /// Full-scale preset: 50 blocks of size 5 (n = 250), 100 trials per
    /// point, grid bracketing all three transition regions. Runtime is tens
    /// of minutes on one core.
    pub fn benchmark_full() -> Self {
        Self {
            block_sizes: vec![5; 50],
            probabilities: Self::benchmark_probabilities(),
            m_grid: (92..=168).step_by(4).collect(),
            trials: 100,
            seed: 414213562,
            schemes: vec![
                WeightScheme::Optimal,
                WeightScheme::Heuristic,
                WeightScheme::Equal,
            ],
            heuristic_eps: DEFAULT_HEURISTIC_EPS,
            success_threshold: default_success_threshold(),
            solver: SolverSettings::default(),
        }
    }

    /// Reduced preset: 50 blocks of size 2 (n = 100), 30 trials per point.
    /// Finishes in a few minutes on one core and shows the same crossover
    /// ordering as [`Self::benchmark_full`].
    pub fn benchmark_reduced() -> Self {
        Self {
            block_sizes: vec![2; 50],
            probabilities: Self::benchmark_probabilities(),
            m_grid: (28..=80).step_by(4).collect(),
            trials: 30,
            seed: 414213562,
            schemes: vec![
                WeightScheme::Optimal,
                WeightScheme::Heuristic,
                WeightScheme::Equal,
            ],
            heuristic_eps: DEFAULT_HEURISTIC_EPS,
            success_threshold: default_success_threshold(),
            solver: SolverSettings::default(),
        }
    }
}

/// One grid point of one scheme's success curve.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseTransitionRow {
    pub m: usize,
    pub scheme: WeightScheme,
    pub success_rate: f64,
    pub trials: usize,
    /// Prior-averaged sample-complexity bound for this scheme's weights
    /// (constant down the column; plotted as a vertical marker).
    pub predicted_bound: f64,
}

/// Success-rate table over (scheme, m).
#[derive(Debug, Clone, Serialize)]
pub struct PhaseTransitionTable {
    pub rows: Vec<PhaseTransitionRow>,
}

impl PhaseTransitionTable {
    /// `(m, success rate)` pairs of one scheme, in grid order.
    pub fn curve(&self, scheme: WeightScheme) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| (r.m, r.success_rate))
            .collect()
    }

    /// Interpolated measurement count where the scheme's success rate first
    /// crosses 1/2; `None` when the curve stays on one side.
    pub fn crossover(&self, scheme: WeightScheme) -> Option<f64> {
        let curve = self.curve(scheme);
        fifty_percent_crossover(&curve)
    }
}

/// Linear interpolation of the first upward 0.5 crossing of a success curve.
pub fn fifty_percent_crossover(curve: &[(usize, f64)]) -> Option<f64> {
    if curve.is_empty() {
        return None;
    }
    if curve[0].1 >= 0.5 {
        return Some(curve[0].0 as f64);
    }
    for pair in curve.windows(2) {
        let (m0, r0) = pair[0];
        let (m1, r1) = pair[1];
        if r0 < 0.5 && r1 >= 0.5 {
            let t = (0.5 - r0) / (r1 - r0);
            return Some(m0 as f64 + t * (m1 - m0) as f64);
        }
    }
    None
}

/// Checks that a success curve is non-decreasing up to sampling noise of
/// `3/√trials` per step.
pub fn is_monotone_within_noise(curve: &[(usize, f64)], trials: usize) -> bool {
    let slack = 3.0 / (trials as f64).sqrt();
    curve.windows(2).all(|p| p[1].1 >= p[0].1 - slack)
}

fn scheme_weights_model1(
    scheme: WeightScheme,
    prior: &PriorModel1<f64>,
    partition: &BlockPartition,
    eps: f64,
) -> Result<WeightVector<f64>> {
    match scheme {
        WeightScheme::Optimal => solve_model1(prior, partition, &WeightSolverConfig::default()),
        WeightScheme::Heuristic => heuristic_weights(prior, eps),
        WeightScheme::Equal => Ok(WeightVector::uniform(prior.q())),
    }
}

/// Runs the sweep. For each `(m, trial)` pair, one draw of
/// `(support, signal, measurement matrix)` is scored under every scheme.
pub fn run_phase_transition(cfg: &PhaseTransitionConfig) -> Result<PhaseTransitionTable> {
    cfg.validate()?;
    let n: usize = cfg.block_sizes.iter().sum();
    let partition = validate_partition(n, &cfg.block_sizes)?;
    let prior = PriorModel1::clamped(cfg.probabilities.clone())?;
    let solver = cfg.solver.to_config();

    let weights: Vec<(WeightScheme, WeightVector<f64>)> = cfg
        .schemes
        .iter()
        .map(|&s| Ok((s, scheme_weights_model1(s, &prior, &partition, cfg.heuristic_eps)?)))
        .collect::<Result<_>>()?;
    let bounds: Vec<f64> = weights
        .iter()
        .map(|(_, w)| Ok(expected_bound_model1(&partition, &prior, w)?.bound))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.m_grid.len() * cfg.schemes.len());
    for (mi, &m) in cfg.m_grid.iter().enumerate() {
        let outcomes: Vec<Vec<bool>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<bool>> {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((mi as u64) << 32) | t as u64);
                run_pt_trial(&partition, &prior, &weights, m, cfg, &solver, &mut rng)
            })
            .collect::<Result<_>>()?;
        for (si, &(scheme, _)) in weights.iter().enumerate() {
            let hits = outcomes.iter().filter(|o| o[si]).count();
            rows.push(PhaseTransitionRow {
                m,
                scheme,
                success_rate: hits as f64 / cfg.trials as f64,
                trials: cfg.trials,
                predicted_bound: bounds[si],
            });
        }
    }
    Ok(PhaseTransitionTable { rows })
}

fn run_pt_trial(
    partition: &BlockPartition,
    prior: &PriorModel1<f64>,
    weights: &[(WeightScheme, WeightVector<f64>)],
    m: usize,
    cfg: &PhaseTransitionConfig,
    solver: &SolverConfig<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let n = partition.n();
    // Independent Bernoulli(p_b) block activations; an all-empty draw is
    // resampled once, and a second failure counts as trivial success (the
    // zero signal is recovered by every scheme).
    let sample_mask = |rng: &mut ChaCha8Rng| -> Vec<bool> {
        (0..partition.q())
            .map(|b| rng.random::<f64>() < prior.p(b))
            .collect()
    };
    let mut mask = sample_mask(rng);
    if mask.iter().all(|&on| !on) {
        mask = sample_mask(rng);
    }
    if mask.iter().all(|&on| !on) {
        return Ok(vec![true; weights.len()]);
    }

    let mut x = Array1::<f64>::zeros(n);
    for (b, &on) in mask.iter().enumerate() {
        if on {
            for &i in partition.block(b) {
                x[i] = rng.sample(StandardNormal);
            }
        }
    }
    let a = Array2::<f64>::from_shape_fn((m, n), |_| rng.sample(StandardNormal));
    let y = a.dot(&x);
    let sys = MeasurementSystem::new(a, y, 0.0)?;

    weights
        .iter()
        .map(|(_, w)| {
            let r = solve_weighted(partition, w, &sys, solver)?;
            success(&r.x_hat, &x, cfg.success_threshold)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Broadband DOA comparison
// ---------------------------------------------------------------------------

/// DOA comparison: one synthesized scene per seed, estimated under each
/// weighting scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoaExperimentConfig {
    pub scenario: DoaScenario,
    /// Angular index sets of the interval prior.
    pub sets: Vec<Vec<usize>>,
    /// Expected hit rate per set.
    pub alphas: Vec<f64>,
    /// Accuracy assigned to the uncovered remainder of the grid, if any.
    pub complement_alpha: Option<f64>,
    pub schemes: Vec<WeightScheme>,
    /// Base seed; seed index `s` synthesizes with `seed + s`.
    pub seed: u64,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default = "default_heuristic_eps")]
    pub heuristic_eps: f64,
    #[serde(default = "default_rel_threshold")]
    pub rel_threshold: f64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl DoaExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.num_seeds == 0 {
            return Err(Error::InvalidArgument("num_seeds must be ≥ 1".into()));
        }
        validate_schemes(&self.schemes)
    }

    /// The bundled wideband comparison at [`DoaScenario::benchmark`] scale.
    pub fn benchmark() -> Self {
        Self {
            scenario: DoaScenario::benchmark(),
            sets: vec![
                vec![12, 14, 15, 46, 47, 48, 53, 54, 61, 73],
                vec![26, 27, 28],
            ],
            alphas: vec![0.8, 2.0 / 3.0],
            complement_alpha: Some(0.0),
            schemes: vec![
                WeightScheme::Optimal,
                WeightScheme::Heuristic,
                WeightScheme::Equal,
            ],
            seed: 271828182,
            num_seeds: 1,
            heuristic_eps: DEFAULT_HEURISTIC_EPS,
            rel_threshold: default_rel_threshold(),
            solver: SolverSettings::default(),
        }
    }
}

/// Per-(seed, scheme) detection outcome.
#[derive(Debug, Clone, Serialize)]
pub struct DoaRow {
    pub seed: u64,
    pub scheme: WeightScheme,
    /// Planted sources whose spectrum power clears the relative threshold.
    pub detected: usize,
    pub planted: usize,
    /// Peaks (threshold + strict local maximum) away from planted indices.
    pub spurious: usize,
    /// All planted detected and nothing spurious.
    pub clean: bool,
}

/// DOA comparison output: first-seed spectra per scheme plus per-seed
/// detection summaries.
#[derive(Debug, Clone, Serialize)]
pub struct DoaTable {
    pub grid_angles: Vec<f64>,
    pub support: Vec<usize>,
    pub spectra: Vec<(WeightScheme, SpectrumEstimate)>,
    pub rows: Vec<DoaRow>,
    /// λ per scheme, in scheme order (reported for the manifest/plots).
    pub lambdas: Vec<(WeightScheme, Vec<f64>)>,
}

/// Runs the comparison: per seed, one synthesized scene shared by all
/// schemes; per scheme, per-bin joint-sparse recovery and peak detection.
pub fn run_doa_experiment(cfg: &DoaExperimentConfig) -> Result<DoaTable> {
    cfg.validate()?;
    let scenario = &cfg.scenario;
    let prior = PriorModel2::new(
        scenario.q,
        cfg.sets.clone(),
        cfg.alphas.clone(),
        cfg.complement_alpha,
    )?;
    // Complex snapshots contribute two real dimensions each, so the
    // per-block dimension seen by the weight equation is 2k.
    let k_eff = 2 * scenario.k;
    let lambdas: Vec<(WeightScheme, LambdaVector<f64>)> = cfg
        .schemes
        .iter()
        .map(|&s| {
            let lam = match s {
                WeightScheme::Optimal => {
                    solve_model2(&prior, k_eff, &WeightSolverConfig::default())?
                }
                WeightScheme::Heuristic => heuristic_lambda(&prior, cfg.heuristic_eps)?,
                WeightScheme::Equal => LambdaVector::new(vec![1.0; prior.num_sets()])?,
            };
            Ok((s, lam))
        })
        .collect::<Result<_>>()?;

    let solver = cfg.solver.to_config();
    let mut rows = Vec::with_capacity(cfg.num_seeds * cfg.schemes.len());
    let mut spectra = Vec::new();
    let mut support = Vec::new();
    for s in 0..cfg.num_seeds {
        let seed = cfg.seed + s as u64;
        let obs = synthesize(scenario, seed)?;
        if s == 0 {
            support = obs.support.clone();
        }
        for (scheme, lam) in &lambdas {
            let est = estimate(
                scenario,
                &prior,
                lam,
                &obs.y,
                &EtaRule::Realized(obs.noise_norms.clone()),
                &solver,
                cfg.rel_threshold,
            )?;
            let max_power = est.power.iter().cloned().fold(0.0f64, f64::max);
            let cut = cfg.rel_threshold * max_power;
            let detected = obs
                .support
                .iter()
                .filter(|&&b| est.power[b] >= cut && max_power > 0.0)
                .count();
            let spurious = est
                .peaks
                .iter()
                .filter(|b| !obs.support.contains(b))
                .count();
            rows.push(DoaRow {
                seed,
                scheme: *scheme,
                detected,
                planted: obs.support.len(),
                spurious,
                clean: detected == obs.support.len() && spurious == 0,
            });
            if s == 0 {
                spectra.push((*scheme, est));
            }
        }
    }
    Ok(DoaTable {
        grid_angles: scenario.grid_angles(),
        support,
        spectra,
        rows,
        lambdas: lambdas
            .into_iter()
            .map(|(s, l)| (s, l.as_slice().to_vec()))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Weight-sensitivity (robustness) table
// ---------------------------------------------------------------------------

/// Sensitivity sweep of the optimal weight against the prior probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub k_list: Vec<usize>,
    /// Probabilities to probe, each in (0, 1 − Δp).
    pub p_grid: Vec<f64>,
    #[serde(default = "default_delta_p")]
    pub delta_p: f64,
}

impl RobustnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_list.is_empty() || self.p_grid.is_empty() {
            return Err(Error::InvalidArgument(
                "k list and p grid must be nonempty".into(),
            ));
        }
        if !(self.delta_p > 0.0) {
            return Err(Error::InvalidArgument("Δp must be positive".into()));
        }
        for &p in &self.p_grid {
            if !(p > 0.0 && p + self.delta_p < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "probe p = {p} with Δp = {} leaves (0, 1)",
                    self.delta_p
                )));
            }
        }
        Ok(())
    }
}

/// One `(k, p)` cell: the sensitivity constant against the finite-difference
/// sensitivity of the solved weight.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessRow {
    pub k: usize,
    pub p: f64,
    /// Claimed Lipschitz-style constant `c(k, p)`; `+∞` when the underlying
    /// tail mass underflows.
    pub c: f64,
    /// Empirical `|w*(p+Δp) − w*(p)| / Δp`.
    pub sensitivity: f64,
    /// Whether the empirical sensitivity exceeds the claimed constant.
    pub violation: bool,
}

/// Tabulates `c(k, p)` against finite-difference weight sensitivities and
/// flags every cell where the claimed constant is exceeded.
pub fn run_robustness_table(cfg: &RobustnessConfig) -> Result<Vec<RobustnessRow>> {
    cfg.validate()?;
    let wcfg = WeightSolverConfig::default();
    let mut rows = Vec::with_capacity(cfg.k_list.len() * cfg.p_grid.len());
    for &k in &cfg.k_list {
        for &p in &cfg.p_grid {
            let c = match robustness_constant(k, p) {
                Ok(c) => c,
                Err(Error::Overflow(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let w0 = solve_weight_scalar(p, k, &wcfg)?;
            let w1 = solve_weight_scalar(p + cfg.delta_p, k, &wcfg)?;
            let sensitivity = (w1 - w0).abs() / cfg.delta_p;
            rows.push(RobustnessRow {
                k,
                p,
                c,
                sensitivity,
                violation: sensitivity > c,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Bound-validation sweep
// ---------------------------------------------------------------------------

/// Bound-validation sweep: per scheme, the prior-averaged bound next to
/// per-support bounds of sampled supports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatdimSweepConfig {
    pub block_sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub schemes: Vec<WeightScheme>,
    pub seed: u64,
    #[serde(default = "default_sweep_supports")]
    pub supports: usize,
    #[serde(default = "default_heuristic_eps")]
    pub heuristic_eps: f64,
}

/// One sampled support under one scheme.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scheme: WeightScheme,
    pub support_index: usize,
    pub active_blocks: usize,
    /// Bound at the sampled support.
    pub bound: f64,
    /// Prior-averaged bound (constant per scheme).
    pub expected_bound: f64,
}

/// Samples supports from the prior and tabulates per-support bounds against
/// the prior-averaged bound for each scheme.
pub fn run_statdim_sweep(cfg: &StatdimSweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.block_sizes.len() != cfg.probabilities.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} block sizes for {} probabilities",
            cfg.block_sizes.len(),
            cfg.probabilities.len()
        )));
    }
    if cfg.supports == 0 {
        return Err(Error::InvalidArgument("supports must be ≥ 1".into()));
    }
    validate_schemes(&cfg.schemes)?;
    let n: usize = cfg.block_sizes.iter().sum();
    let partition = validate_partition(n, &cfg.block_sizes)?;
    let prior = PriorModel1::clamped(cfg.probabilities.clone())?;
    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        let w = scheme_weights_model1(scheme, &prior, &partition, cfg.heuristic_eps)?;
        let expected = expected_bound_model1(&partition, &prior, &w)?.bound;
        for si in 0..cfg.supports {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(si as u64);
            let support: Vec<usize> = (0..partition.q())
                .filter(|&b| rng.random::<f64>() < prior.p(b))
                .collect();
            let bound = statdim_bound(&partition, &support, &w)?.bound;
            rows.push(SweepRow {
                scheme,
                support_index: si,
                active_blocks: support.len(),
                bound,
                expected_bound: expected,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

/// Table serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Results of one experiment run, ready for emission.
#[derive(Debug, Clone)]
pub enum ExperimentResults {
    PhaseTransition(PhaseTransitionTable),
    Doa(DoaTable),
    Robustness(Vec<RobustnessRow>),
    StatdimSweep(Vec<SweepRow>),
}

impl ExperimentResults {
    fn experiment_name(&self) -> &'static str {
        match self {
            ExperimentResults::PhaseTransition(_) => "phase_transition",
            ExperimentResults::Doa(_) => "doa",
            ExperimentResults::Robustness(_) => "robustness",
            ExperimentResults::StatdimSweep(_) => "statdim_sweep",
        }
    }
}

fn io_ctx(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_ctx(path, e))
}

/// Writes one CSV table with an explicit header row, so empty tables still
/// produce a parseable header-only file.
fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let ctx = |e: csv::Error| Error::Io(std::io::Error::other(format!("{}: {e}", path.display())));
    w.write_record(header).map_err(ctx)?;
    for row in rows {
        w.serialize(row).map_err(ctx)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
    std::fs::write(path, &bytes).map_err(|e| io_ctx(path, e))
}

/// Writes plot-ready files under `out_dir`: one `{experiment}_{scheme}`
/// table per scheme (plus peak-list JSONs for DOA runs) and a
/// `manifest.json` recording the config hash, seed, and tool version.
/// Reruns with identical config and seed produce byte-identical files.
pub fn emit_results(
    results: &ExperimentResults,
    config_json: &str,
    seed: u64,
    format: OutputFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_ctx(out_dir, e))?;
    let mut files = Vec::new();
    let name = results.experiment_name();
    match results {
        ExperimentResults::PhaseTransition(table) => {
            let schemes = dedup_schemes(table.rows.iter().map(|r| r.scheme));
            for scheme in schemes {
                let rows: Vec<&PhaseTransitionRow> =
                    table.rows.iter().filter(|r| r.scheme == scheme).collect();
                let path = table_path(out_dir, name, &scheme.to_string(), format);
                match format {
                    OutputFormat::Csv => write_csv(
                        &path,
                        &["m", "scheme", "success_rate", "trials", "predicted_bound"],
                        &rows,
                    )?,
                    OutputFormat::Json => write_file(&path, &to_json_pretty(&rows)?)?,
                }
                files.push(path);
            }
        }
        ExperimentResults::Doa(table) => {
            for (scheme, est) in &table.spectra {
                let path = table_path(out_dir, name, &scheme.to_string(), format);
                match format {
                    OutputFormat::Csv => {
                        let recs: Vec<(f64, f64, String)> = table
                            .grid_angles
                            .iter()
                            .zip(&est.power)
                            .map(|(&angle, &p)| (angle, p, scheme.to_string()))
                            .collect();
                        write_csv(&path, &["angle_deg", "power", "scheme"], &recs)?;
                    }
                    OutputFormat::Json => {
                        write_file(&path, &to_json_pretty(est)?)?;
                    }
                }
                files.push(path);
                let peaks_path = out_dir.join(format!("{name}_{scheme}_peaks.json"));
                write_file(&peaks_path, &to_json_pretty(&est.peaks)?)?;
                files.push(peaks_path);
            }
            let summary_path = out_dir.join(format!("{name}_summary.csv"));
            write_csv(
                &summary_path,
                &["seed", "scheme", "detected", "planted", "spurious", "clean"],
                &table.rows,
            )?;
            files.push(summary_path);
        }
        ExperimentResults::Robustness(rows) => {
            let path = out_dir.join(match format {
                OutputFormat::Csv => format!("{name}.csv"),
                OutputFormat::Json => format!("{name}.json"),
            });
            match format {
                OutputFormat::Csv => {
                    write_csv(&path, &["k", "p", "c", "sensitivity", "violation"], rows)?
                }
                OutputFormat::Json => write_file(&path, &to_json_pretty(rows)?)?,
            }
            files.push(path);
        }
        ExperimentResults::StatdimSweep(rows) => {
            let schemes = dedup_schemes(rows.iter().map(|r| r.scheme));
            for scheme in schemes {
                let subset: Vec<&SweepRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
                let path = table_path(out_dir, name, &scheme.to_string(), format);
                match format {
                    OutputFormat::Csv => write_csv(
                        &path,
                        &["scheme", "support_index", "active_blocks", "bound", "expected_bound"],
                        &subset,
                    )?,
                    OutputFormat::Json => write_file(&path, &to_json_pretty(&subset)?)?,
                }
                files.push(path);
            }
        }
    }

    let manifest_path = out_dir.join("manifest.json");
    // The resolved config is embedded verbatim (not just hashed) so a result
    // directory is self-describing — every knob that produced it, including
    // scheme list and heuristic ε, is readable next to the tables.
    let config: serde_json::Value = serde_json::from_str(config_json)
        .unwrap_or_else(|_| serde_json::Value::String(config_json.to_owned()));
    let manifest = serde_json::json!({
        "experiment": name,
        "config": config,
        "config_sha256": hex_digest(config_json),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "format": match format { OutputFormat::Csv => "csv", OutputFormat::Json => "json" },
        "files": files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect::<Vec<_>>(),
    });
    write_file(&manifest_path, &to_json_pretty(&manifest)?)?;
    files.push(manifest_path);
    Ok(files)
}

fn dedup_schemes(it: impl Iterator<Item = WeightScheme>) -> Vec<WeightScheme> {
    let mut seen = Vec::new();
    for s in it {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen
}

fn table_path(out_dir: &Path, name: &str, scheme: &str, format: OutputFormat) -> PathBuf {
    out_dir.join(match format {
        OutputFormat::Csv => format!("{name}_{scheme}.csv"),
        OutputFormat::Json => format!("{name}_{scheme}.json"),
    })
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn hex_digest(s: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(s.as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_pt_config() -> PhaseTransitionConfig {
        PhaseTransitionConfig {
            block_sizes: vec![2; 3],
            probabilities: vec![0.9, 0.4, 0.1],
            m_grid: vec![2, 4, 6],
            trials: 6,
            seed: 5,
            schemes: vec![
                WeightScheme::Optimal,
                WeightScheme::Heuristic,
                WeightScheme::Equal,
            ],
            heuristic_eps: DEFAULT_HEURISTIC_EPS,
            success_threshold: 1e-3,
            solver: SolverSettings::default(),
        }
    }

    #[test]
    fn config_validation_catches_bad_grids() {
        let mut cfg = tiny_pt_config();
        cfg.m_grid = vec![];
        assert!(cfg.validate().is_err());
        cfg.m_grid = vec![0, 4];
        assert!(cfg.validate().is_err());
        cfg.m_grid = vec![4, 4];
        assert!(cfg.validate().is_err());
        cfg.m_grid = vec![4, 2];
        assert!(cfg.validate().is_err());
        cfg.m_grid = vec![2, 4];
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        cfg.trials = 1;
        cfg.schemes.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn square_system_always_succeeds() {
        let cfg = tiny_pt_config();
        let table = run_phase_transition(&cfg).unwrap();
        for &scheme in &cfg.schemes {
            let curve = table.curve(scheme);
            assert_eq!(curve.last().unwrap().0, 6);
            assert_eq!(curve.last().unwrap().1, 1.0, "scheme {scheme}");
        }
    }

    #[test]
    fn phase_transition_is_deterministic() {
        let cfg = tiny_pt_config();
        let a = run_phase_transition(&cfg).unwrap();
        let b = run_phase_transition(&cfg).unwrap();
        for (x, y) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(x.m, y.m);
            assert_eq!(x.scheme, y.scheme);
            assert_eq!(x.success_rate, y.success_rate);
            assert_eq!(x.predicted_bound, y.predicted_bound);
        }
    }

    #[test]
    fn crossover_interpolates_linearly() {
        let curve = vec![(10, 0.0), (20, 0.25), (30, 0.75), (40, 1.0)];
        assert_relative_eq!(fifty_percent_crossover(&curve).unwrap(), 25.0);
        assert!(fifty_percent_crossover(&[(10, 0.1), (20, 0.4)]).is_none());
        assert_eq!(fifty_percent_crossover(&[(10, 0.7), (20, 1.0)]), Some(10.0));
        assert!(fifty_percent_crossover(&[]).is_none());
    }

    #[test]
    fn monotonicity_check_allows_sampling_noise() {
        let trials = 100; // slack 0.3
        assert!(is_monotone_within_noise(
            &[(1, 0.2), (2, 0.1), (3, 0.5)],
            trials
        ));
        assert!(!is_monotone_within_noise(
            &[(1, 0.6), (2, 0.1)],
            trials
        ));
    }

    #[test]
    fn benchmark_prior_shape() {
        let p = PhaseTransitionConfig::benchmark_probabilities();
        assert_eq!(p.len(), 50);
        assert!(p[..10].iter().all(|&v| v == 0.9));
        assert_relative_eq!(p[10], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[49], 0.02, epsilon = 1e-12);
        // Geometric ramp: constant ratio between consecutive tail entries.
        let r = p[11] / p[10];
        for w in p[10..].windows(2) {
            assert_relative_eq!(w[1] / w[0], r, epsilon = 1e-12);
        }
        assert!(PhaseTransitionConfig::benchmark_full().validate().is_ok());
        assert!(PhaseTransitionConfig::benchmark_reduced().validate().is_ok());
    }

    #[test]
    fn noiseless_square_doa_every_scheme_exact() {
        let mut cfg = DoaExperimentConfig::benchmark();
        cfg.scenario = DoaScenario {
            m: 8,
            q: 8,
            d: 0.5,
            c: 3.0e8,
            freq_bins: vec![1.0e8, 2.0e8],
            k: 2,
            sources: vec![-70.0, -10.0, 55.0],
            sigma: 0.0,
        };
        cfg.sets = vec![vec![0, 3, 6]];
        cfg.alphas = vec![0.5];
        cfg.complement_alpha = Some(0.5);
        cfg.num_seeds = 2;
        let table = run_doa_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2 * cfg.schemes.len());
        for row in &table.rows {
            assert_eq!(row.detected, row.planted, "scheme {}", row.scheme);
            assert_eq!(row.spurious, 0, "scheme {}", row.scheme);
            assert!(row.clean);
        }
    }

    #[test]
    fn robustness_table_flags_known_cells() {
        let cfg = RobustnessConfig {
            k_list: vec![1, 5],
            p_grid: (0..=15).map(|i| 0.15 + 0.05 * i as f64).collect(),
            delta_p: 1e-3,
        };
        let rows = run_robustness_table(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 16);
        for r in &rows {
            assert!(r.c > 0.0);
            assert!(r.sensitivity.is_finite());
            if r.k == 1 {
                assert!(!r.violation, "unexpected violation at k=1, p={}", r.p);
            }
        }
        // The claimed constant is too small for k = 5 on part of this grid.
        assert!(rows.iter().any(|r| r.k == 5 && r.violation));
    }

    #[test]
    fn statdim_sweep_respects_averaging_direction() {
        let cfg = StatdimSweepConfig {
            block_sizes: vec![2; 8],
            probabilities: vec![0.9, 0.8, 0.6, 0.5, 0.3, 0.2, 0.1, 0.05],
            schemes: vec![WeightScheme::Optimal, WeightScheme::Equal],
            seed: 7,
            supports: 30,
            heuristic_eps: DEFAULT_HEURISTIC_EPS,
        };
        let rows = run_statdim_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 30);
        // Averaging before minimizing can only raise the value: the mean of
        // per-support bounds stays below the prior-averaged bound.
        for &scheme in &cfg.schemes {
            let subset: Vec<&SweepRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
            let mean = subset.iter().map(|r| r.bound).sum::<f64>() / subset.len() as f64;
            let expected = subset[0].expected_bound;
            assert!(
                mean <= expected + 1e-9,
                "mean per-support bound {mean} above prior-averaged {expected}"
            );
        }
    }

    #[test]
    fn emit_is_deterministic_and_documented() {
        let cfg = tiny_pt_config();
        let table = run_phase_transition(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg_json = serde_json::to_string(&cfg).unwrap();
        let results = ExperimentResults::PhaseTransition(table);
        let files = emit_results(
            &results,
            &cfg_json,
            cfg.seed,
            OutputFormat::Csv,
            dir.path(),
        )
        .unwrap();
        // One CSV per scheme plus the manifest.
        assert_eq!(files.len(), 4);
        let first = std::fs::read_to_string(&files[0]).unwrap();
        assert!(first.starts_with("m,scheme,success_rate,trials,predicted_bound\n"));
        assert!(first.contains(",optimal,"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(files.last().unwrap()).unwrap())
                .unwrap();
        assert_eq!(manifest["experiment"], "phase_transition");
        assert_eq!(manifest["seed"], cfg.seed);
        assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

        let snapshot: Vec<String> = files
            .iter()
            .map(|f| std::fs::read_to_string(f).unwrap())
            .collect();
        let table2 = run_phase_transition(&cfg).unwrap();
        emit_results(
            &ExperimentResults::PhaseTransition(table2),
            &cfg_json,
            cfg.seed,
            OutputFormat::Csv,
            dir.path(),
        )
        .unwrap();
        for (f, old) in files.iter().zip(&snapshot) {
            assert_eq!(&std::fs::read_to_string(f).unwrap(), old, "{f:?} changed");
        }
    }

    #[test]
    fn emit_handles_empty_tables_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let empty = ExperimentResults::Robustness(Vec::new());
        let files = emit_results(&empty, "{}", 0, OutputFormat::Csv, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv, "k,p,c,sensitivity,violation\n");

        let cfg = RobustnessConfig {
            k_list: vec![1],
            p_grid: vec![0.5],
            delta_p: 1e-3,
        };
        let rows = run_robustness_table(&cfg).unwrap();
        let files = emit_results(
            &ExperimentResults::Robustness(rows),
            "{}",
            0,
            OutputFormat::Json,
            dir.path(),
        )
        .unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert!(parsed.as_array().unwrap().len() == 1);
    }
}
