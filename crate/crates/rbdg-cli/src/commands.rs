use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rbdg::config::{apply_overrides, parse_config, write_config, FullConfig};
use rbdg::experiments::{
    emit_csv, emit_quartiles_csv, fmt_value, grid_search_streaming, normalized_error, run_sweep,
    ExperimentSpec, GridSearchSpec, Instance, Method, ScoreRow, SweepKind,
    PERT_SWEEP, SAMPLES_SWEEP, SPARSITY_SWEEP,
};
use rbdg::solver::{rbdg_run, rbdh_run};
use rbdg::{RbdgError, Result};

use crate::{Cli, Command};

pub fn run(cli: &Cli, config_text: &str) -> Result<()> {
    let mut cfg = parse_config(config_text)?;
    apply_overrides(&mut cfg, &cli.overrides)?;
    fs::create_dir_all(&cli.out).map_err(|e| RbdgError::io(cli.out.display().to_string(), e))?;

    match &cli.command {
        Command::Simulate => simulate(&cfg, cli),
        Command::Experiment { test_case } => experiment(&cfg, cli, *test_case),
        Command::Gridsearch => gridsearch(&cfg, cli),
    }
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut text = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                text.push(',');
            }
            text.push_str(&fmt_value(m[(i, j)]));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| RbdgError::io(path.display().to_string(), e))
}

fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::from("iteration,objective\n");
    for (i, v) in trace.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, fmt_value(*v)));
    }
    fs::write(path, text).map_err(|e| RbdgError::io(path.display().to_string(), e))
}

fn simulate(cfg: &FullConfig, cli: &Cli) -> Result<()> {
    let method = cfg.simulate_method;
    let hp = cfg.hyperparams(method)?;
    let instance = Instance::generate(cli.seed, &cfg.base, SweepKind::Custom, 0.0)?;

    let (filter_est, filter_name, x_hat, s_hat, trace) = if method.inverse_domain() {
        let out = rbdg_run(&instance.y, &instance.s_bar, hp)?;
        (out.g_hat, "g_hat.csv", out.x_hat, out.s_hat, out.objective_trace)
    } else {
        let out = rbdh_run(&instance.y, &instance.s_bar, hp)?;
        (out.h_hat, "h_hat.csv", out.x_hat, out.s_hat, out.objective_trace)
    };

    let g_est = if method.inverse_domain() {
        Some(filter_est.clone())
    } else {
        filter_est.clone().try_inverse().and_then(|inv| {
            let tr = inv.trace();
            (tr.abs() > 1e-12).then(|| inv / tr)
        })
    };
    let err_g = match g_est {
        Some(g) => normalized_error(&instance.g_ref, &g)?,
        None => f64::NAN,
    };
    let err_x = normalized_error(instance.x_ref.entries(), x_hat.entries())?;
    let err_s = normalized_error(instance.s_true.entries(), &s_hat)?;

    write_matrix_csv(&cli.out.join(filter_name), &filter_est)?;
    write_matrix_csv(&cli.out.join("x_hat.csv"), x_hat.entries())?;
    write_matrix_csv(&cli.out.join("s_hat.csv"), &s_hat)?;
    write_trace_csv(&cli.out.join("objective_trace.csv"), &trace)?;

    println!(
        "err_G={} err_X={} err_S={}",
        fmt_value(err_g),
        fmt_value(err_x),
        fmt_value(err_s)
    );
    Ok(())
}

fn experiment(cfg: &FullConfig, cli: &Cli, test_case: u8) -> Result<()> {
    let (sweep, values, file): (SweepKind, Vec<f64>, &str) = match test_case {
        1 => (SweepKind::Perturbation, PERT_SWEEP.to_vec(), "err_G_pert.csv"),
        2 => (SweepKind::Sparsity, SPARSITY_SWEEP.to_vec(), "err_X_sparsity.csv"),
        3 => (SweepKind::Samples, SAMPLES_SWEEP.to_vec(), "err_S_samp.csv"),
        other => {
            return Err(RbdgError::InvalidParameter(format!(
                "test case must be 1, 2 or 3, got {other}"
            )))
        }
    };

    let spec = ExperimentSpec {
        sweep,
        sweep_values: values,
        n_realizations: cfg.n_realizations,
        base: cfg.base,
        methods: cfg.methods.clone(),
        hp: cfg
            .methods
            .iter()
            .map(|&m| cfg.hyperparams(m).map(|hp| (m, *hp)))
            .collect::<Result<_>>()?,
        master_seed: cli.seed,
    };
    let result = run_sweep(&spec, cli.parallelism)?;

    let path = cli.out.join(file);
    emit_csv(&result, sweep.default_quantity(), &path)?;
    let sidecar = cli.out.join(file.replace(".csv", ".q.csv"));
    emit_quartiles_csv(&result, sweep.default_quantity(), &sidecar)?;
    log::info!("wrote {} and {}", path.display(), sidecar.display());
    Ok(())
}

/// Streams score rows to disk as they are computed. If the search ends
/// early (error, panic or interrupt) the file is left with a `# partial`
/// trailer so consumers can tell it apart from a finished table.
struct ScoreTableWriter {
    file: File,
    path: PathBuf,
    complete: bool,
}

impl ScoreTableWriter {
    fn create(path: PathBuf) -> Result<Self> {
        let mut file =
            File::create(&path).map_err(|e| RbdgError::io(path.display().to_string(), e))?;
        file.write_all(b"method,alpha,beta,gamma,lambda,err_G,err_X,err_S\n")
            .and_then(|_| file.flush())
            .map_err(|e| RbdgError::io(path.display().to_string(), e))?;
        Ok(ScoreTableWriter {
            file,
            path,
            complete: false,
        })
    }

    fn write_rows(&mut self, rows: &[ScoreRow]) -> Result<()> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                fmt_value(r.alpha),
                fmt_value(r.beta),
                fmt_value(r.gamma),
                fmt_value(r.lambda),
                fmt_value(r.med_err_g),
                fmt_value(r.med_err_x),
                fmt_value(r.med_err_s)
            ));
        }
        self.file
            .write_all(text.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| RbdgError::io(self.path.display().to_string(), e))
    }

    fn finish(mut self) {
        self.complete = true;
    }
}

impl Drop for ScoreTableWriter {
    fn drop(&mut self) {
        if !self.complete {
            let _ = self.file.write_all(b"# partial\n");
            let _ = self.file.flush();
        }
    }
}

fn gridsearch(cfg: &FullConfig, cli: &Cli) -> Result<()> {
    let grids = &cfg.grids;
    for (name, grid) in [
        ("alpha", &grids.alpha),
        ("beta", &grids.beta),
        ("gamma", &grids.gamma),
        ("lambda", &grids.lambda),
    ] {
        if grid.is_empty() {
            return Err(RbdgError::Config {
                line: 0,
                message: format!("gridsearch.{name} is not defined in the config"),
            });
        }
    }

    // structural settings (budgets, reweighting) follow the configured
    // reweighted method so the search explores the same solver shape
    let mut template = *cfg.hyperparams(Method::RbdGRew)?;
    template.alpha = 0.0;
    template.beta = 0.0;
    template.gamma = 0.0;
    template.lambda = 0.0;

    let spec = GridSearchSpec {
        base: cfg.base,
        methods: cfg.methods.clone(),
        alpha_grid: grids.alpha.clone(),
        beta_grid: grids.beta.clone(),
        gamma_grid: grids.gamma.clone(),
        lambda_grid: grids.lambda.clone(),
        n_realizations: grids.n_realizations,
        master_seed: cli.seed,
        template,
    };

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
    }

    let mut writer = ScoreTableWriter::create(cli.out.join("gridsearch_scores.csv"))?;
    let mut stream_error = None;
    let result = grid_search_streaming(&spec, cli.parallelism, |rows| {
        if let Err(e) = writer.write_rows(rows) {
            stream_error = Some(e);
            return false;
        }
        !interrupted.load(Ordering::SeqCst)
    })?;
    if let Some(e) = stream_error {
        return Err(e);
    }
    if !result.complete {
        return Err(RbdgError::Divergence {
            iteration: result.table.len(),
            reason: "grid search interrupted".to_string(),
        });
    }
    writer.finish();

    let mut tuned = cfg.clone();
    for (method, hp) in &result.best {
        tuned.hp.insert(*method, *hp);
    }
    let path = cli.out.join("tuned.conf");
    fs::write(&path, write_config(&tuned))
        .map_err(|e| RbdgError::io(path.display().to_string(), e))?;
    log::info!("wrote {} and gridsearch_scores.csv", path.display());
    Ok(())
}
