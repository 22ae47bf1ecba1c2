//! Flat `key = value` configuration format shared by the CLI and the
//! grid-search harness. Lines hold one key each, `#` starts a comment,
//! method-specific keys are prefixed with the method's config key
//! (e.g. `rbd_g_rew.alpha`). Unknown keys are rejected with the offending
//! line number.

use std::collections::BTreeMap;

use crate::error::{RbdgError, Result};
use crate::experiments::{fmt_value, BaseConfig, Method};
use crate::solver::{Hyperparams, ReweightConfig};

/// Hyperparameter grids for the grid-search command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub n_realizations: usize,
}

/// Everything the CLI commands need: instance parameters, per-method
/// hyperparameters, experiment and grid-search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub version: u32,
    pub base: BaseConfig,
    pub n_realizations: usize,
    pub methods: Vec<Method>,
    pub simulate_method: Method,
    pub hp: BTreeMap<Method, Hyperparams>,
    pub grids: GridConfig,
}

impl FullConfig {
    /// Structural defaults with zeroed regularization weights; the tuned
    /// weights always come from a config file.
    pub fn baseline() -> Self {
        let mut hp = BTreeMap::new();
        for m in Method::ALL {
            let mut h = Hyperparams::new(0.0, 0.0, 0.0, 0.0);
            if m.reweighted() {
                h.reweight = Some(ReweightConfig::default());
            }
            hp.insert(m, h);
        }
        FullConfig {
            version: 1,
            base: BaseConfig::default(),
            n_realizations: 25,
            methods: Method::ALL.to_vec(),
            simulate_method: Method::RbdGRew,
            hp,
            grids: GridConfig {
                n_realizations: 5,
                ..GridConfig::default()
            },
        }
    }

    pub fn hyperparams(&self, method: Method) -> Result<&Hyperparams> {
        self.hp.get(&method).ok_or_else(|| {
            RbdgError::InvalidParameter(format!("no hyperparameters configured for {method}"))
        })
    }
}

fn parse_usize(value: &str) -> std::result::Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|e| format!("expected integer, got '{value}': {e}"))
}

fn parse_u32(value: &str) -> std::result::Result<u32, String> {
    value
        .parse::<u32>()
        .map_err(|e| format!("expected integer, got '{value}': {e}"))
}

fn parse_f64(value: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|e| format!("expected number, got '{value}': {e}"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|v| parse_f64(v.trim())).collect()
}

fn parse_method_list(value: &str) -> std::result::Result<Vec<Method>, String> {
    let methods: Vec<Method> = value
        .split(',')
        .map(|v| Method::parse(v).map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(format!("method {m} listed twice"));
        }
    }
    if methods.is_empty() {
        return Err("method list must be nonempty".to_string());
    }
    Ok(methods)
}

fn apply_hp_key(
    hp: &mut Hyperparams,
    method: Method,
    field: &str,
    value: &str,
) -> std::result::Result<(), String> {
    match field {
        "alpha" => hp.alpha = parse_f64(value)?,
        "beta" => hp.beta = parse_f64(value)?,
        "gamma" => hp.gamma = parse_f64(value)?,
        "lambda" => hp.lambda = parse_f64(value)?,
        "outer_iters" => hp.outer_iters = parse_usize(value)?,
        "outer_tol" => hp.outer_tol = parse_f64(value)?,
        "inner_rounds" => hp.inner_rounds = parse_usize(value)?,
        "inner_tol" => hp.inner_tol = parse_f64(value)?,
        "s_max_iters" => hp.s_max_iters = parse_usize(value)?,
        "s_tol" => hp.s_tol = parse_f64(value)?,
        "x_max_iters" => hp.x_max_iters = parse_usize(value)?,
        "x_tol" => hp.x_tol = parse_f64(value)?,
        "project_hollow_symmetric" => hp.project_hollow_symmetric = parse_bool(value)?,
        "reweight_epsilon" | "reweight_rounds" | "reweight_warmup" => {
            if !method.reweighted() {
                return Err(format!("{method} is not a reweighted method"));
            }
            let rw = hp.reweight.get_or_insert_with(ReweightConfig::default);
            match field {
                "reweight_epsilon" => rw.epsilon = parse_f64(value)?,
                "reweight_rounds" => rw.rounds = parse_usize(value)?,
                _ => rw.warmup = parse_usize(value)?,
            }
        }
        _ => return Err(format!("unknown hyperparameter field '{field}'")),
    }
    Ok(())
}

fn apply_key(cfg: &mut FullConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    match key {
        "config_version" => cfg.version = parse_u32(value)?,
        "base.n" => cfg.base.n = parse_usize(value)?,
        "base.mean_degree" => cfg.base.mean_degree = parse_usize(value)?,
        "base.rewire_prob" => cfg.base.rewire_prob = parse_f64(value)?,
        "base.filter_order" => cfg.base.filter_order = parse_usize(value)?,
        "base.cond_limit" => cfg.base.cond_limit = parse_f64(value)?,
        "base.m_signals" => cfg.base.m_signals = parse_usize(value)?,
        "base.k_sparsity" => cfg.base.k_sparsity = parse_usize(value)?,
        "base.noise_power" => cfg.base.noise_power = parse_f64(value)?,
        "base.pert_ratio" => cfg.base.pert_ratio = parse_f64(value)?,
        "base.value_dist" => {
            cfg.base.value_dist = match value {
                "unit" => crate::diffusion::ValueDist::Unit,
                "standard_normal" => crate::diffusion::ValueDist::StandardNormal,
                other => return Err(format!("unknown value distribution '{other}'")),
            }
        }
        "experiment.n_realizations" => cfg.n_realizations = parse_usize(value)?,
        "experiment.methods" => cfg.methods = parse_method_list(value)?,
        "simulate.method" => {
            cfg.simulate_method = Method::parse(value).map_err(|e| e.to_string())?
        }
        "gridsearch.alpha" => cfg.grids.alpha = parse_f64_list(value)?,
        "gridsearch.beta" => cfg.grids.beta = parse_f64_list(value)?,
        "gridsearch.gamma" => cfg.grids.gamma = parse_f64_list(value)?,
        "gridsearch.lambda" => cfg.grids.lambda = parse_f64_list(value)?,
        "gridsearch.n_realizations" => cfg.grids.n_realizations = parse_usize(value)?,
        _ => {
            for m in Method::ALL {
                if let Some(field) = key
                    .strip_prefix(m.config_key())
                    .and_then(|rest| rest.strip_prefix('.'))
                {
                    let hp = cfg.hp.get_mut(&m).expect("all methods present");
                    return apply_hp_key(hp, m, field, value);
                }
            }
            return Err(format!("unknown key '{key}'"));
        }
    }
    Ok(())
}

/// Parses the config text, starting from [`FullConfig::baseline`].
pub fn parse_config(text: &str) -> Result<FullConfig> {
    let mut cfg = FullConfig::baseline();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| RbdgError::Config {
            line: line_no,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        apply_key(&mut cfg, key.trim(), value.trim()).map_err(|message| RbdgError::Config {
            line: line_no,
            message,
        })?;
    }
    for (m, hp) in &cfg.hp {
        hp.validate().map_err(|e| RbdgError::Config {
            line: 0,
            message: format!("invalid hyperparameters for {m}: {e}"),
        })?;
    }
    Ok(cfg)
}

/// Applies `KEY=VALUE` override pairs on top of a parsed config.
pub fn apply_overrides(cfg: &mut FullConfig, overrides: &[String]) -> Result<()> {
    for (idx, pair) in overrides.iter().enumerate() {
        let (key, value) = pair.split_once('=').ok_or_else(|| RbdgError::Config {
            line: idx + 1,
            message: format!("override must be KEY=VALUE, got '{pair}'"),
        })?;
        apply_key(cfg, key.trim(), value.trim()).map_err(|message| RbdgError::Config {
            line: idx + 1,
            message: format!("override '{pair}': {message}"),
        })?;
    }
    Ok(())
}

fn push_kv(out: &mut String, key: &str, value: String) {
    out.push_str(key);
    out.push_str(" = ");
    out.push_str(&value);
    out.push('\n');
}

fn f64_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_value(*v))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Serializes a config in canonical key order; `parse_config` inverts it.
pub fn write_config(cfg: &FullConfig) -> String {
    let mut out = String::new();
    out.push_str("# robust blind deconvolution over graphs: configuration\n");
    push_kv(&mut out, "config_version", cfg.version.to_string());
    out.push('\n');

    out.push_str("# instance generation\n");
    push_kv(&mut out, "base.n", cfg.base.n.to_string());
    push_kv(&mut out, "base.mean_degree", cfg.base.mean_degree.to_string());
    push_kv(&mut out, "base.rewire_prob", fmt_value(cfg.base.rewire_prob));
    push_kv(&mut out, "base.filter_order", cfg.base.filter_order.to_string());
    push_kv(&mut out, "base.cond_limit", fmt_value(cfg.base.cond_limit));
    push_kv(&mut out, "base.m_signals", cfg.base.m_signals.to_string());
    push_kv(&mut out, "base.k_sparsity", cfg.base.k_sparsity.to_string());
    push_kv(&mut out, "base.noise_power", fmt_value(cfg.base.noise_power));
    push_kv(&mut out, "base.pert_ratio", fmt_value(cfg.base.pert_ratio));
    push_kv(
        &mut out,
        "base.value_dist",
        match cfg.base.value_dist {
            crate::diffusion::ValueDist::Unit => "unit".to_string(),
            crate::diffusion::ValueDist::StandardNormal => "standard_normal".to_string(),
        },
    );
    out.push('\n');

    out.push_str("# experiment harness\n");
    push_kv(
        &mut out,
        "experiment.n_realizations",
        cfg.n_realizations.to_string(),
    );
    push_kv(
        &mut out,
        "experiment.methods",
        cfg.methods
            .iter()
            .map(|m| m.label().to_string())
            .collect::<Vec<_>>()
            .join(", "),
    );
    push_kv(
        &mut out,
        "simulate.method",
        cfg.simulate_method.label().to_string(),
    );
    out.push('\n');

    for m in Method::ALL {
        let Some(hp) = cfg.hp.get(&m) else { continue };
        let k = m.config_key();
        out.push_str(&format!("# {} hyperparameters\n", m.label()));
        push_kv(&mut out, &format!("{k}.alpha"), fmt_value(hp.alpha));
        push_kv(&mut out, &format!("{k}.beta"), fmt_value(hp.beta));
        push_kv(&mut out, &format!("{k}.gamma"), fmt_value(hp.gamma));
        push_kv(&mut out, &format!("{k}.lambda"), fmt_value(hp.lambda));
        push_kv(&mut out, &format!("{k}.outer_iters"), hp.outer_iters.to_string());
        push_kv(&mut out, &format!("{k}.outer_tol"), fmt_value(hp.outer_tol));
        push_kv(&mut out, &format!("{k}.inner_rounds"), hp.inner_rounds.to_string());
        push_kv(&mut out, &format!("{k}.inner_tol"), fmt_value(hp.inner_tol));
        push_kv(&mut out, &format!("{k}.s_max_iters"), hp.s_max_iters.to_string());
        push_kv(&mut out, &format!("{k}.s_tol"), fmt_value(hp.s_tol));
        push_kv(&mut out, &format!("{k}.x_max_iters"), hp.x_max_iters.to_string());
        push_kv(&mut out, &format!("{k}.x_tol"), fmt_value(hp.x_tol));
        push_kv(
            &mut out,
            &format!("{k}.project_hollow_symmetric"),
            hp.project_hollow_symmetric.to_string(),
        );
        if let Some(rw) = &hp.reweight {
            push_kv(&mut out, &format!("{k}.reweight_epsilon"), fmt_value(rw.epsilon));
            push_kv(&mut out, &format!("{k}.reweight_rounds"), rw.rounds.to_string());
            push_kv(&mut out, &format!("{k}.reweight_warmup"), rw.warmup.to_string());
        }
        out.push('\n');
    }

    out.push_str("# grid-search ranges\n");
    if !cfg.grids.alpha.is_empty() {
        push_kv(&mut out, "gridsearch.alpha", f64_list(&cfg.grids.alpha));
    }
    if !cfg.grids.beta.is_empty() {
        push_kv(&mut out, "gridsearch.beta", f64_list(&cfg.grids.beta));
    }
    if !cfg.grids.gamma.is_empty() {
        push_kv(&mut out, "gridsearch.gamma", f64_list(&cfg.grids.gamma));
    }
    if !cfg.grids.lambda.is_empty() {
        push_kv(&mut out, "gridsearch.lambda", f64_list(&cfg.grids.lambda));
    }
    push_kv(
        &mut out,
        "gridsearch.n_realizations",
        cfg.grids.n_realizations.to_string(),
    );
    out
}
