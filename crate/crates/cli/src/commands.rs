use std::path::{Path, PathBuf};
use std::time::Instant;

use bpa_core::experiments::{
    fsc_benchmark, oracle_check, retrieval_benchmark, sphere_grid, SphereCell,
};
use bpa_core::{bpa, FeatureSet, SolverConfig, SphereConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, ClusterBenchConfig, FscBenchConfig, RetrievalBenchConfig};
use crate::error::{CliError, CliResult};
use crate::features::{read_features, write_features};
use crate::report::{format_float, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    Bpa,
    BpaAttn,
}

#[derive(Debug, Clone)]
pub struct TransformArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub solver: SolverConfig,
    pub mode: TransformMode,
}

/// Marginal residuals of the plan behind a transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSummary {
    pub rows: usize,
    pub cols: usize,
    pub row_dev: f64,
    pub col_dev: f64,
}

pub fn transform(args: &TransformArgs) -> CliResult<TransformSummary> {
    args.solver.validate()?;
    let data = read_features(&args.input)?;
    let features =
        FeatureSet::new(data).map_err(|e| CliError::malformed(&args.input, e.to_string()))?;
    let embedding = bpa(&features, &args.solver)?;
    let out = match args.mode {
        TransformMode::Bpa => embedding.values().to_owned(),
        TransformMode::BpaAttn => embedding.attend(&features)?.into_data(),
    };
    write_features(&args.output, out.view())?;
    Ok(TransformSummary {
        rows: out.nrows(),
        cols: out.ncols(),
        row_dev: embedding.row_dev(),
        col_dev: embedding.col_dev(),
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::output(path, e))
}

/// One CSV row per grid cell and transform.
pub fn cluster_csv(cells: &[SphereCell], runs: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dim",
        "noise_std",
        "transform",
        "runs",
        "acc_mean",
        "acc_ci95",
        "nmi_mean",
        "nmi_ci95",
        "ari_mean",
        "ari_ci95",
    ])
    .expect("in-memory write");
    for c in cells {
        w.write_record([
            c.dim.to_string(),
            format_float(c.noise_std),
            c.representation.name().to_string(),
            runs.to_string(),
            format_float(c.accuracy.mean),
            format_float(c.accuracy.ci95),
            format_float(c.nmi.mean),
            format_float(c.nmi.ci95),
            format_float(c.ari.mean),
            format_float(c.ari.ci95),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn cluster_bench(config_path: Option<&Path>, csv_path: Option<&Path>) -> CliResult<RunReport> {
    let cfg: ClusterBenchConfig = config::load(config_path)?;
    cfg.validate()?;
    eprintln!(
        "cluster-bench: {} cells x {} runs, {} transforms",
        cfg.dims.len() * cfg.noise.len(),
        cfg.runs,
        cfg.transforms.len()
    );
    let base = SphereConfig {
        k: cfg.k,
        points_per_cluster: cfg.points_per_cluster,
        seed: cfg.seed,
        ..SphereConfig::default()
    };
    let start = Instant::now();
    let cells = sphere_grid(
        &base,
        &cfg.dims,
        &cfg.noise,
        cfg.runs,
        cfg.restarts,
        &cfg.transforms,
        &cfg.solver,
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(path) = csv_path {
        write_text(path, &cluster_csv(&cells, cfg.runs))?;
    }
    Ok(RunReport::new(
        "cluster-bench",
        &cfg,
        &cells,
        cfg.seed,
        elapsed,
    ))
}

pub fn fsc_bench(config_path: Option<&Path>) -> CliResult<RunReport> {
    let cfg: FscBenchConfig = config::load(config_path)?;
    cfg.validate()?;
    eprintln!(
        "fsc-bench: {} episodes, {} transforms",
        cfg.episodes,
        cfg.transforms.len()
    );
    let start = Instant::now();
    let results = fsc_benchmark(&cfg.episode, cfg.episodes, &cfg.transforms, &cfg.solver)?;
    let elapsed = start.elapsed().as_secs_f64();
    let rows: Vec<_> = results
        .iter()
        .map(|(t, s)| json!({ "transform": t, "accuracy": s }))
        .collect();
    Ok(RunReport::new(
        "fsc-bench",
        &cfg,
        &rows,
        cfg.episode.seed,
        elapsed,
    ))
}

pub fn retrieval_bench(config_path: Option<&Path>) -> CliResult<RunReport> {
    let cfg: RetrievalBenchConfig = config::load(config_path)?;
    cfg.validate()?;
    eprintln!(
        "retrieval-bench: {} instances, {} transforms",
        cfg.instances,
        cfg.transforms.len()
    );
    let start = Instant::now();
    let results = retrieval_benchmark(&cfg.retrieval, cfg.instances, &cfg.transforms, &cfg.solver)?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(RunReport::new(
        "retrieval-bench",
        &cfg,
        &results,
        cfg.retrieval.seed,
        elapsed,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleArgs {
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
}

pub fn oracle(args: &OracleArgs) -> CliResult<RunReport> {
    if args.n_min < 2 || args.n_min > args.n_max {
        return Err(CliError::Config(format!(
            "invalid size range {}..={}",
            args.n_min, args.n_max
        )));
    }
    if args.trials == 0 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    let solver = SolverConfig::default()
        .with_lambda(args.lambda)
        .with_iterations(args.iterations);
    solver.validate()?;
    let sizes: Vec<usize> = (args.n_min..=args.n_max).collect();
    let start = Instant::now();
    let report = oracle_check(&sizes, args.trials, &solver, args.seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    eprintln!(
        "oracle-check: max relative gap {:.3e}, methods agree: {}",
        report.max_gap, report.all_agree
    );
    Ok(RunReport::new(
        "oracle-check",
        args,
        &report,
        args.seed,
        elapsed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bpa_core::experiments::Summary;
    use bpa_core::Representation;

    #[test]
    fn csv_rows_use_fixed_formatting() {
        let s = Summary {
            mean: 2.0 / 3.0,
            ci95: 0.1,
            count: 4,
        };
        let cell = SphereCell {
            dim: 10,
            noise_std: 0.3,
            representation: Representation::Bpa,
            accuracy: s,
            nmi: s,
            ari: s,
        };
        let text = cluster_csv(&[cell], 4);
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("dim,noise_std,transform"));
        assert_eq!(
            lines.next().unwrap(),
            "10,0.3,bpa,4,0.666666667,0.1,0.666666667,0.1,0.666666667,0.1"
        );
    }

    #[test]
    fn oracle_range_checked() {
        let args = OracleArgs {
            n_min: 5,
            n_max: 4,
            trials: 1,
            lambda: 1.0,
            iterations: 1,
            seed: 0,
        };
        assert!(matches!(oracle(&args), Err(CliError::Config(_))));
        let too_big = OracleArgs {
            n_min: 4,
            n_max: 10,
            ..args
        };
        assert!(matches!(oracle(&too_big), Err(CliError::Config(_))));
    }
}
