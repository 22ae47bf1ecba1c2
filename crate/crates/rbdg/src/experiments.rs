//! Monte-Carlo harness: instance generation, error metrics, sweeps over the
//! perturbation/sparsity/sample-count axes, hyperparameter grid search, and
//! CSV emission.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::diffusion::{diffuse, generate_sources, GenerationConfig, SignalMatrix, ValueDist};
use crate::error::{RbdgError, Result};
use crate::graph::{
    generate_small_world, perturb_rewire, synthesize_filter, FilterPair, Gso, PerturbationSpec,
};
use crate::seed::derive_seed;
use crate::solver::{normalize_ground_truth, rbdg_run, rbdh_run, Hyperparams};

/// Sweep grid of the perturbation-axis experiment.
pub const PERT_SWEEP: [f64; 6] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25];
/// Sweep grid of the sparsity-axis experiment.
pub const SPARSITY_SWEEP: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];
/// Sweep grid of the sample-count-axis experiment.
pub const SAMPLES_SWEEP: [f64; 4] = [15.0, 30.0, 50.0, 100.0];

/// The estimation methods, named after their data-series labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    RbdGRew,
    RbdG,
    RbdHRew,
    RbdH,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::RbdGRew, Method::RbdG, Method::RbdHRew, Method::RbdH];

    /// Data-series label used in CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            Method::RbdGRew => "RBD-G-rew",
            Method::RbdG => "RBD-G",
            Method::RbdHRew => "RBD-H-rew",
            Method::RbdH => "RBD-H",
        }
    }

    /// Key prefix used in config files.
    pub fn config_key(&self) -> &'static str {
        match self {
            Method::RbdGRew => "rbd_g_rew",
            Method::RbdG => "rbd_g",
            Method::RbdHRew => "rbd_h_rew",
            Method::RbdH => "rbd_h",
        }
    }

    pub fn parse(text: &str) -> Result<Method> {
        let trimmed = text.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.label() == trimmed || m.config_key() == trimmed)
            .ok_or_else(|| RbdgError::InvalidParameter(format!("unknown method '{trimmed}'")))
    }

    pub fn reweighted(&self) -> bool {
        matches!(self, Method::RbdGRew | Method::RbdHRew)
    }

    /// True for the inverse-filter methods, false for the forward baseline.
    pub fn inverse_domain(&self) -> bool {
        matches!(self, Method::RbdGRew | Method::RbdG)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Instance-generation parameters shared by all experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseConfig {
    pub n: usize,
    pub mean_degree: usize,
    pub rewire_prob: f64,
    pub filter_order: usize,
    pub cond_limit: f64,
    pub m_signals: usize,
    pub k_sparsity: usize,
    pub noise_power: f64,
    pub pert_ratio: f64,
    pub value_dist: ValueDist,
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig {
            n: 20,
            mean_degree: 4,
            rewire_prob: 0.2,
            filter_order: 3,
            cond_limit: 1e4,
            m_signals: 50,
            k_sparsity: 2,
            noise_power: 0.0,
            pert_ratio: 0.1,
            value_dist: ValueDist::Unit,
        }
    }
}

/// Which axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Perturbation,
    Sparsity,
    Samples,
    Custom,
}

impl SweepKind {
    pub fn axis_label(&self) -> &'static str {
        match self {
            SweepKind::Perturbation => "Eps",
            SweepKind::Sparsity => "S",
            SweepKind::Samples => "M",
            SweepKind::Custom => "Value",
        }
    }

    /// The error quantity a sweep of this kind reports.
    pub fn default_quantity(&self) -> Quantity {
        match self {
            SweepKind::Perturbation => Quantity::G,
            SweepKind::Sparsity => Quantity::X,
            SweepKind::Samples => Quantity::S,
            SweepKind::Custom => Quantity::G,
        }
    }
}

/// The three estimated quantities errors are reported for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    G,
    X,
    S,
}

/// A full sweep specification.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweep: SweepKind,
    pub sweep_values: Vec<f64>,
    pub n_realizations: usize,
    pub base: BaseConfig,
    pub methods: Vec<Method>,
    pub hp: BTreeMap<Method, Hyperparams>,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(RbdgError::InvalidParameter(
                "sweep values must be nonempty".to_string(),
            ));
        }
        if self.sweep_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RbdgError::InvalidParameter(
                "sweep values must be strictly increasing".to_string(),
            ));
        }
        if self.n_realizations == 0 {
            return Err(RbdgError::InvalidParameter(
                "need at least one realization".to_string(),
            ));
        }
        if self.methods.is_empty() {
            return Err(RbdgError::InvalidParameter(
                "need at least one method".to_string(),
            ));
        }
        for m in &self.methods {
            let hp = self.hp.get(m).ok_or_else(|| {
                RbdgError::InvalidParameter(format!("no hyperparameters for method {m}"))
            })?;
            hp.validate()?;
            if m.reweighted() != hp.reweight.is_some() {
                return Err(RbdgError::InvalidParameter(format!(
                    "method {m} and its reweighting setting disagree"
                )));
            }
        }
        for &v in &self.sweep_values {
            match self.sweep {
                SweepKind::Perturbation => {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(RbdgError::InvalidParameter(format!(
                            "perturbation ratio {v} outside [0, 1]"
                        )));
                    }
                }
                SweepKind::Sparsity | SweepKind::Samples => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(RbdgError::InvalidParameter(format!(
                            "sweep value {v} must be a positive integer"
                        )));
                    }
                }
                SweepKind::Custom => {}
            }
        }
        Ok(())
    }
}

/// Normalized errors of one solver run on one instance, plus the error of
/// the raw perturbed observation (the denoising baseline). Failed estimates
/// are recorded as NaN and excluded from medians.
#[derive(Debug, Clone, Copy)]
pub struct RealizationErrors {
    pub err_g: f64,
    pub err_x: f64,
    pub err_s: f64,
    pub raw_err_s: f64,
}

/// Frobenius-norm relative error.
pub fn normalized_error(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(RbdgError::DimensionMismatch(format!(
            "truth is {:?} but estimate is {:?}",
            truth.shape(),
            estimate.shape()
        )));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(RbdgError::InvalidParameter(
            "zero-norm ground truth".to_string(),
        ));
    }
    Ok((truth - estimate).norm() / denom)
}

/// One fully generated problem instance with its normalized ground truth.
pub struct Instance {
    pub s_true: Gso,
    pub filter: FilterPair,
    pub y: SignalMatrix,
    pub s_bar: Gso,
    pub g_ref: DMatrix<f64>,
    pub x_ref: SignalMatrix,
}

impl Instance {
    /// Deterministically generates one (S, H, X, Y, S_bar) instance from the
    /// seed, with one base parameter overridden by the sweep value.
    pub fn generate(
        seed: u64,
        base: &BaseConfig,
        sweep: SweepKind,
        sweep_value: f64,
    ) -> Result<Self> {
        let mut cfg = *base;
        match sweep {
            SweepKind::Perturbation => cfg.pert_ratio = sweep_value,
            SweepKind::Sparsity => cfg.k_sparsity = sweep_value as usize,
            SweepKind::Samples => cfg.m_signals = sweep_value as usize,
            SweepKind::Custom => {}
        }

        let s_true = generate_small_world(
            cfg.n,
            cfg.mean_degree,
            cfg.rewire_prob,
            derive_seed(seed, &[0]),
        )?;
        let filter = synthesize_filter(&s_true, cfg.filter_order, derive_seed(seed, &[1]), cfg.cond_limit)?;
        let x = generate_sources(
            cfg.n,
            cfg.m_signals,
            &GenerationConfig {
                k_sparsity: cfg.k_sparsity,
                noise_power: 0.0,
                value_dist: cfg.value_dist,
                seed: derive_seed(seed, &[2]),
            },
        )?;
        let y = diffuse(&filter, &x, cfg.noise_power, derive_seed(seed, &[3]))?;
        let s_bar = perturb_rewire(
            &s_true,
            &PerturbationSpec::rewire(cfg.pert_ratio, derive_seed(seed, &[4])),
        )?;
        let (g_ref, x_ref) = normalize_ground_truth(&filter, &x)?;
        Ok(Instance {
            s_true,
            filter,
            y,
            s_bar,
            g_ref,
            x_ref,
        })
    }

    /// Error of the raw perturbed observation relative to the true operator.
    pub fn raw_observation_error(&self) -> f64 {
        normalized_error(self.s_true.entries(), self.s_bar.entries()).unwrap_or(f64::NAN)
    }

    /// Runs one method on this instance and computes the three normalized
    /// errors. For the forward baseline the filter estimate is inverted and
    /// trace-normalized before comparison; a non-invertible estimate yields
    /// a NaN filter error.
    pub fn run_method(&self, method: Method, hp: &Hyperparams) -> Result<RealizationErrors> {
        let raw_err_s = self.raw_observation_error();
        let (g_est, x_est, s_est) = if method.inverse_domain() {
            let out = rbdg_run(&self.y, &self.s_bar, hp)?;
            (Some(out.g_hat), out.x_hat, out.s_hat)
        } else {
            let out = rbdh_run(&self.y, &self.s_bar, hp)?;
            let g_est = out.h_hat.clone().try_inverse().and_then(|inv| {
                let tr = inv.trace();
                (tr.abs() > 1e-12).then(|| inv / tr)
            });
            (g_est, out.x_hat, out.s_hat)
        };

        let err_g = match g_est {
            Some(g) => normalized_error(&self.g_ref, &g)?,
            None => f64::NAN,
        };
        let err_x = normalized_error(self.x_ref.entries(), x_est.entries())?;
        let err_s = normalized_error(self.s_true.entries(), &s_est)?;
        Ok(RealizationErrors {
            err_g,
            err_x,
            err_s,
            raw_err_s,
        })
    }
}

/// Generates the instance for `(instance_seed, sweep point)`, runs one
/// method, and returns its normalized errors.
pub fn run_realization(
    instance_seed: u64,
    spec: &ExperimentSpec,
    method: Method,
    sweep_value: f64,
) -> Result<RealizationErrors> {
    let hp = spec.hp.get(&method).ok_or_else(|| {
        RbdgError::InvalidParameter(format!("no hyperparameters for method {method}"))
    })?;
    let instance = Instance::generate(instance_seed, &spec.base, spec.sweep, sweep_value)?;
    instance.run_method(method, hp)
}

/// Quartile statistics of one error population (finite values only).
#[derive(Debug, Clone, Copy)]
pub struct QuartileStats {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub n_finite: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quartiles(values: impl Iterator<Item = f64>) -> QuartileStats {
    let mut finite: Vec<f64> = values.filter(|v| v.is_finite()).collect();
    finite.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    QuartileStats {
        q25: quantile(&finite, 0.25),
        median: quantile(&finite, 0.5),
        q75: quantile(&finite, 0.75),
        n_finite: finite.len(),
    }
}

/// Aggregated output of a sweep: per-method raw error triples for every
/// sweep point and realization, with medians and quartiles derived on
/// demand.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub sweep: SweepKind,
    pub x_values: Vec<f64>,
    pub methods: Vec<Method>,
    /// raw[method][point][realization]
    pub raw: BTreeMap<Method, Vec<Vec<RealizationErrors>>>,
    /// raw_observation[point][realization]: err_S of the perturbed operator.
    pub raw_observation: Vec<Vec<f64>>,
    /// (method, point index) pairs where more than 20% of runs failed.
    pub flagged: Vec<(Method, usize)>,
}

impl SweepResult {
    fn errors(&self, method: Method, quantity: Quantity, point: usize) -> impl Iterator<Item = f64> + '_ {
        self.raw[&method][point].iter().map(move |e| match quantity {
            Quantity::G => e.err_g,
            Quantity::X => e.err_x,
            Quantity::S => e.err_s,
        })
    }

    pub fn stats(&self, method: Method, quantity: Quantity, point: usize) -> QuartileStats {
        quartiles(self.errors(method, quantity, point))
    }

    pub fn median(&self, method: Method, quantity: Quantity, point: usize) -> f64 {
        self.stats(method, quantity, point).median
    }

    pub fn median_raw_observation_error(&self, point: usize) -> f64 {
        quartiles(self.raw_observation[point].iter().copied()).median
    }

    pub fn failure_count(&self, method: Method, point: usize) -> usize {
        self.raw[&method][point]
            .iter()
            .filter(|e| !e.err_g.is_finite() || !e.err_x.is_finite() || !e.err_s.is_finite())
            .count()
    }
}

/// Runs the full sweep: for each sweep value, `n_realizations` instances are
/// generated from seeds derived as hash(master, point index, realization
/// index) -- independent of the method, so every method sees identical
/// instances. Realizations execute on a dedicated thread pool; results are
/// reduced in index order, so the output is identical at any parallelism.
pub fn run_sweep(spec: &ExperimentSpec, parallelism: usize) -> Result<SweepResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| RbdgError::InvalidParameter(format!("thread pool: {e}")))?;

    let tasks: Vec<(usize, usize)> = (0..spec.sweep_values.len())
        .flat_map(|i| (0..spec.n_realizations).map(move |r| (i, r)))
        .collect();

    let nan_triple = RealizationErrors {
        err_g: f64::NAN,
        err_x: f64::NAN,
        err_s: f64::NAN,
        raw_err_s: f64::NAN,
    };

    let outcomes: Vec<(Vec<RealizationErrors>, f64)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(point, realization)| {
                let seed = derive_seed(spec.master_seed, &[point as u64, realization as u64]);
                let instance =
                    match Instance::generate(seed, &spec.base, spec.sweep, spec.sweep_values[point])
                    {
                        Ok(inst) => inst,
                        Err(e) => {
                            log::warn!(
                                "instance generation failed at point {point}, realization {realization}: {e}"
                            );
                            return (vec![nan_triple; spec.methods.len()], f64::NAN);
                        }
                    };
                let raw = instance.raw_observation_error();
                let per_method = spec
                    .methods
                    .iter()
                    .map(|&m| match instance.run_method(m, &spec.hp[&m]) {
                        Ok(errs) => errs,
                        Err(e) => {
                            log::warn!(
                                "{m} failed at point {point}, realization {realization}: {e}"
                            );
                            nan_triple
                        }
                    })
                    .collect();
                (per_method, raw)
            })
            .collect()
    });

    let n_points = spec.sweep_values.len();
    let mut raw: BTreeMap<Method, Vec<Vec<RealizationErrors>>> = spec
        .methods
        .iter()
        .map(|&m| (m, vec![Vec::with_capacity(spec.n_realizations); n_points]))
        .collect();
    let mut raw_observation = vec![Vec::with_capacity(spec.n_realizations); n_points];
    for (&(point, _), (per_method, raw_err)) in tasks.iter().zip(outcomes) {
        for (&m, errs) in spec.methods.iter().zip(per_method) {
            raw.get_mut(&m).expect("method present")[point].push(errs);
        }
        raw_observation[point].push(raw_err);
    }

    let mut result = SweepResult {
        sweep: spec.sweep,
        x_values: spec.sweep_values.clone(),
        methods: spec.methods.clone(),
        raw,
        raw_observation,
        flagged: Vec::new(),
    };
    for &m in &spec.methods {
        for point in 0..n_points {
            let failures = result.failure_count(m, point);
            if 5 * failures > spec.n_realizations {
                log::warn!(
                    "{m} at sweep point {point}: {failures}/{} runs failed",
                    spec.n_realizations
                );
                result.flagged.push((m, point));
            }
        }
    }
    Ok(result)
}

/// Formats a float in shortest round-trip decimal, dropping the fractional
/// part for integral values.
pub fn fmt_value(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Writes the median-error table of a sweep: one header row with the axis
/// name and the method labels, one row per sweep value. UTF-8, LF endings.
pub fn emit_csv(result: &SweepResult, quantity: Quantity, path: &Path) -> Result<()> {
    let mut text = String::new();
    text.push_str(result.sweep.axis_label());
    for m in &result.methods {
        text.push(',');
        text.push_str(m.label());
    }
    text.push('\n');
    for (i, &x) in result.x_values.iter().enumerate() {
        text.push_str(&fmt_value(x));
        for &m in &result.methods {
            text.push(',');
            text.push_str(&fmt_value(result.median(m, quantity, i)));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| RbdgError::io(path.display().to_string(), e))
}

/// Writes the quartile sidecar: per method, three columns `label:q25`,
/// `label:q50`, `label:q75`.
pub fn emit_quartiles_csv(result: &SweepResult, quantity: Quantity, path: &Path) -> Result<()> {
    let mut text = String::new();
    text.push_str(result.sweep.axis_label());
    for m in &result.methods {
        for q in ["q25", "q50", "q75"] {
            text.push(',');
            text.push_str(&format!("{}:{q}", m.label()));
        }
    }
    text.push('\n');
    for (i, &x) in result.x_values.iter().enumerate() {
        text.push_str(&fmt_value(x));
        for &m in &result.methods {
            let stats = result.stats(m, quantity, i);
            for v in [stats.q25, stats.median, stats.q75] {
                text.push(',');
                text.push_str(&fmt_value(v));
            }
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| RbdgError::io(path.display().to_string(), e))
}

/// Parses a CSV emitted by [`emit_csv`] back into header names and rows.
/// Comment lines (leading `#`) are skipped.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| RbdgError::InvalidParameter("empty CSV".to_string()))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| {
                    RbdgError::InvalidParameter(format!("row {}: bad float '{cell}': {e}", idx + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(RbdgError::InvalidParameter(format!(
                "row {} has {} cells, expected {}",
                idx + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Grid-search specification: Cartesian grids over the four regularization
/// weights, evaluated on a reduced realization count.
#[derive(Debug, Clone)]
pub struct GridSearchSpec {
    pub base: BaseConfig,
    pub methods: Vec<Method>,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Structural settings (budgets, tolerances, reweighting defaults)
    /// shared by every grid point.
    pub template: Hyperparams,
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("alpha", &self.alpha_grid),
            ("beta", &self.beta_grid),
            ("gamma", &self.gamma_grid),
            ("lambda", &self.lambda_grid),
        ] {
            if grid.is_empty() {
                return Err(RbdgError::InvalidParameter(format!(
                    "{name} grid must be nonempty"
                )));
            }
            if grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(RbdgError::InvalidParameter(format!(
                    "{name} grid values must be finite and nonnegative"
                )));
            }
        }
        if self.methods.is_empty() {
            return Err(RbdgError::InvalidParameter(
                "need at least one method".to_string(),
            ));
        }
        if self.n_realizations == 0 {
            return Err(RbdgError::InvalidParameter(
                "need at least one validation realization".to_string(),
            ));
        }
        Ok(())
    }

    fn hyperparams_for(&self, method: Method, combo: (f64, f64, f64, f64)) -> Hyperparams {
        let mut hp = self.template;
        hp.alpha = combo.0;
        hp.beta = combo.1;
        hp.gamma = combo.2;
        hp.lambda = combo.3;
        hp.reweight = if method.reweighted() {
            Some(hp.reweight.unwrap_or_default())
        } else {
            None
        };
        hp
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRow {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub med_err_g: f64,
    pub med_err_x: f64,
    pub med_err_s: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: BTreeMap<Method, Hyperparams>,
    pub table: Vec<ScoreRow>,
    /// False when the search was stopped early through the row callback.
    pub complete: bool,
}

/// Evaluates the Cartesian hyperparameter grid per method on the validation
/// scenario defined by the base config, selecting by median filter error
/// with median source error as tie-breaker. All grid points see the same
/// instances.
pub fn grid_search(spec: &GridSearchSpec, parallelism: usize) -> Result<GridSearchResult> {
    grid_search_streaming(spec, parallelism, |_| true)
}

/// As [`grid_search`], but evaluated in chunks: after each chunk the freshly
/// scored rows are handed to `on_rows`, which may return false to stop the
/// search early (the result is then marked incomplete and the selection
/// covers only the evaluated rows).
pub fn grid_search_streaming(
    spec: &GridSearchSpec,
    parallelism: usize,
    mut on_rows: impl FnMut(&[ScoreRow]) -> bool,
) -> Result<GridSearchResult> {
    spec.validate()?;
    let parallelism = parallelism.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| RbdgError::InvalidParameter(format!("thread pool: {e}")))?;

    let instances: Vec<Instance> = (0..spec.n_realizations)
        .map(|r| {
            Instance::generate(
                derive_seed(spec.master_seed, &[r as u64]),
                &spec.base,
                SweepKind::Custom,
                0.0,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut combos = Vec::new();
    for &a in &spec.alpha_grid {
        for &b in &spec.beta_grid {
            for &g in &spec.gamma_grid {
                for &l in &spec.lambda_grid {
                    combos.push((a, b, g, l));
                }
            }
        }
    }
    let tasks: Vec<(Method, (f64, f64, f64, f64))> = spec
        .methods
        .iter()
        .flat_map(|&m| combos.iter().map(move |&c| (m, c)))
        .collect();

    let mut table: Vec<ScoreRow> = Vec::with_capacity(tasks.len());
    let mut complete = true;
    for chunk in tasks.chunks(2 * parallelism) {
        let rows: Vec<ScoreRow> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(method, combo)| {
                    let hp = spec.hyperparams_for(method, combo);
                    let errs: Vec<RealizationErrors> = instances
                        .iter()
                        .map(|inst| {
                            inst.run_method(method, &hp).unwrap_or(RealizationErrors {
                                err_g: f64::NAN,
                                err_x: f64::NAN,
                                err_s: f64::NAN,
                                raw_err_s: f64::NAN,
                            })
                        })
                        .collect();
                    ScoreRow {
                        method,
                        alpha: combo.0,
                        beta: combo.1,
                        gamma: combo.2,
                        lambda: combo.3,
                        med_err_g: quartiles(errs.iter().map(|e| e.err_g)).median,
                        med_err_x: quartiles(errs.iter().map(|e| e.err_x)).median,
                        med_err_s: quartiles(errs.iter().map(|e| e.err_s)).median,
                    }
                })
                .collect()
        });
        let keep_going = on_rows(&rows);
        table.extend(rows);
        if !keep_going {
            complete = false;
            break;
        }
    }

    let mut best = BTreeMap::new();
    for &method in &spec.methods {
        let winner = table.iter().filter(|row| row.method == method).min_by(|a, b| {
            let key = |r: &ScoreRow| {
                (
                    if r.med_err_g.is_finite() {
                        r.med_err_g
                    } else {
                        f64::INFINITY
                    },
                    if r.med_err_x.is_finite() {
                        r.med_err_x
                    } else {
                        f64::INFINITY
                    },
                )
            };
            key(a).partial_cmp(&key(b)).expect("finite keys")
        });
        if let Some(winner) = winner {
            best.insert(
                method,
                spec.hyperparams_for(
                    method,
                    (winner.alpha, winner.beta, winner.gamma, winner.lambda),
                ),
            );
        }
    }
    Ok(GridSearchResult {
        best,
        table,
        complete,
    })
}
