use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::Args;
use episodic::analytics::{batch_fit, curve_pca, hazard_curves, three_group_cluster, Group};
use episodic::uncertainty::bootstrap_corr;
use episodic::{EventSequence, FitResult, HazardSpec};
use serde::Deserialize;

use crate::config::FitOptions;
use crate::error::{CliError, Result};
use crate::io::{csv_bytes, read_events, write_atomic};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV with header `user_id,path`; paths are relative to the manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// CSV with header `user_id,n_following,n_followers`.
    #[arg(long)]
    pub covariates: PathBuf,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Points per day on which hazard curves are compared.
    #[arg(long, default_value_t = 96)]
    pub curve_grid: usize,
    /// Bootstrap replicates for correlation standard errors.
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    user_id: String,
    path: PathBuf,
}

#[derive(Debug, Deserialize)]
struct CovariateRow {
    user_id: String,
    n_following: f64,
    n_followers: f64,
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| CliError::data(format!("{}: {e}", path.display()))))
        .collect()
}

const METRICS: [&str; 3] = ["avg_daily_hazard", "events_per_episode", "episode_length"];

fn metric_values(fit: &FitResult) -> [f64; 3] {
    let d = fit.derived;
    [d.avg_daily_hazard, d.events_per_episode, d.episode_length]
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let config = args.options.fit_config(args.seed)?;
    let manifest: Vec<ManifestRow> = read_table(&args.manifest)?;
    if manifest.is_empty() {
        return Err(CliError::data(format!("{}: no users", args.manifest.display())));
    }
    let mut seen = HashMap::new();
    for (k, row) in manifest.iter().enumerate() {
        if let Some(prev) = seen.insert(row.user_id.as_str(), k) {
            return Err(CliError::data(format!(
                "{}: user `{}` listed on lines {} and {}",
                args.manifest.display(),
                row.user_id,
                prev + 2,
                k + 2
            )));
        }
    }
    let covariates: HashMap<String, CovariateRow> = read_table::<CovariateRow>(&args.covariates)?
        .into_iter()
        .map(|r| (r.user_id.clone(), r))
        .collect();

    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let loaded: Vec<Result<EventSequence>> = manifest
        .iter()
        .map(|row| read_events(&base.join(&row.path)).and_then(|t| t.into_sequence(None)))
        .collect();
    let placeholder = EventSequence::empty(0.0, 1.0);
    let datasets: Vec<EventSequence> = loaded
        .iter()
        .map(|r| r.as_ref().map_or_else(|_| placeholder.clone(), Clone::clone))
        .collect();
    let fits: Vec<std::result::Result<FitResult, String>> = batch_fit(&datasets, &config)
        .into_iter()
        .zip(&loaded)
        .map(|(fit, data)| match data {
            Err(e) => Err(e.to_string()),
            Ok(_) => fit.map_err(|e| e.to_string()),
        })
        .collect();
    for (row, fit) in manifest.iter().zip(&fits) {
        if let Err(e) = fit {
            eprintln!("warning: user `{}`: {e}", row.user_id);
        }
    }

    let ok: Vec<(usize, &FitResult)> = fits.iter().enumerate().filter_map(|(i, f)| f.as_ref().ok().map(|f| (i, f))).collect();
    let names = ok.first().map(|(_, f)| f.params.names()).unwrap_or_default();

    // Three-group clustering of each derived metric.
    let mut groups: Vec<Vec<Option<Group>>> = vec![vec![None; manifest.len()]; METRICS.len()];
    let mut cluster_rows = Vec::new();
    for (m, metric) in METRICS.iter().enumerate() {
        let values: Vec<f64> = ok.iter().map(|(_, f)| metric_values(f)[m]).collect();
        match three_group_cluster(&values) {
            Ok(c) => {
                for ((i, _), (label, v)) in ok.iter().zip(c.labels.iter().zip(&values)) {
                    groups[m][*i] = Some(*label);
                    let center = c.centers[*label as usize];
                    cluster_rows.push((*metric, manifest[*i].user_id.clone(), *v, label.name(), center));
                }
            }
            Err(e) => eprintln!("warning: clustering {metric}: {e}"),
        }
    }

    let mut header: Vec<String> = ["user_id", "status", "events", "converged", "loglik"].iter().map(|s| s.to_string()).collect();
    header.extend(names.iter().cloned());
    header.extend(METRICS.iter().map(|m| m.to_string()));
    header.extend(METRICS.iter().map(|m| format!("{m}_group")));
    let metric_rows = manifest.iter().enumerate().map(|(i, row)| {
        let mut out = vec![row.user_id.clone()];
        match &fits[i] {
            Ok(f) => {
                out.extend(["ok".into(), datasets[i].len().to_string(), f.converged.to_string(), f.loglik().to_string()]);
                out.extend(f.params.to_vec().iter().map(f64::to_string));
                out.extend(metric_values(f).iter().map(f64::to_string));
            }
            Err(e) => {
                out.push(format!("failed: {e}"));
                out.extend(std::iter::repeat_n(String::new(), 3 + names.len() + METRICS.len()));
            }
        }
        out.extend(groups.iter().map(|g| g[i].map(|l| l.name().to_string()).unwrap_or_default()));
        out
    });
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut files = vec![
        ("metrics.csv", csv_bytes(&header_refs, metric_rows)?),
        ("clusters.csv", csv_bytes(&["metric", "user_id", "value", "group", "center"], cluster_rows)?),
    ];

    // Grid PCA of the fitted hazard curves.
    let hazards: Vec<&HazardSpec> = ok.iter().map(|(_, f)| &f.params.hazard).collect();
    let curves = hazard_curves(&hazards, args.curve_grid)?;
    match curve_pca(&curves.values) {
        Ok(pca) => {
            let mut rows: Vec<(String, String, f64, f64)> = curves
                .grid
                .iter()
                .zip(&pca.mean)
                .map(|(t, v)| ("mean".into(), String::new(), *t, *v))
                .collect();
            for (k, phi) in pca.components.iter().enumerate() {
                rows.extend(curves.grid.iter().zip(phi).map(|(t, v)| (format!("pc{}", k + 1), pca.explained[k].to_string(), *t, *v)));
            }
            files.push(("pca.csv", csv_bytes(&["component", "explained", "t", "value"], rows)?));
            let shown = pca.components.len().min(3);
            let mut score_header = vec!["user_id".to_string()];
            score_header.extend((1..=shown).map(|k| format!("pc{k}")));
            let score_rows = ok.iter().zip(&curves.values).map(|((i, _), curve)| {
                let mut row = vec![manifest[*i].user_id.clone()];
                row.extend(pca.scores(curve).iter().take(shown).map(f64::to_string));
                row
            });
            let refs: Vec<&str> = score_header.iter().map(String::as_str).collect();
            files.push(("pca_scores.csv", csv_bytes(&refs, score_rows)?));
        }
        Err(e) => eprintln!("warning: hazard PCA: {e}"),
    }

    // Correlations of every parameter and metric with the log covariates.
    // Hazard coefficients come last in the parameter vector.
    let k = names.iter().take_while(|n| !n.starts_with("beta")).count();
    let mut variables: Vec<String> = names[..k].to_vec();
    variables.extend(METRICS.iter().map(|m| m.to_string()));
    let profile = |f: &FitResult| -> Vec<f64> {
        let mut v = f.params.to_vec()[..k].to_vec();
        v.extend(metric_values(f));
        v
    };
    let mut corr_rows = Vec::new();
    for (covariate, pick) in [
        ("log_n_followers", (|c: &CovariateRow| c.n_followers) as fn(&CovariateRow) -> f64),
        ("log_n_following", |c: &CovariateRow| c.n_following),
    ] {
        let paired: Vec<(Vec<f64>, f64)> = ok
            .iter()
            .filter_map(|(i, f)| covariates.get(&manifest[*i].user_id).map(|c| (profile(f), pick(c))))
            .filter(|(_, x)| *x > 0.0 && x.is_finite())
            .map(|(p, x)| (p, x.ln()))
            .collect();
        let x: Vec<f64> = paired.iter().map(|(_, x)| *x).collect();
        for (v, variable) in variables.iter().enumerate() {
            let y: Vec<f64> = paired.iter().map(|(p, _)| p[v]).collect();
            match bootstrap_corr(&x, &y, args.bootstrap, args.seed) {
                Ok(c) => corr_rows.push((variable.clone(), covariate, x.len(), c.r, c.se)),
                Err(e) => eprintln!("warning: correlation {variable} ~ {covariate}: {e}"),
            }
        }
    }
    files.push(("correlations.csv", csv_bytes(&["variable", "covariate", "n", "r", "se"], corr_rows)?));

    for (name, bytes) in files {
        write_atomic(&args.out_dir.join(name), &bytes)?;
    }
    eprintln!("fitted {} of {} users", ok.len(), manifest.len());
    Ok(())
}
