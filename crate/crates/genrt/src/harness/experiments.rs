use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{HResult, HarnessError, RunConfig};
use super::metrics::{mean_std, MetricsRecord};
use super::plot::line_plot_svg;
use super::train::train;

/// Map a closure over jobs — across worker threads when the `parallel`
/// feature is on, in order otherwise. Each job is internally single-threaded
/// and seeded, so the merged results are identical either way.
#[cfg(feature = "parallel")]
pub fn run_jobs<J, T, F>(jobs: &[J], f: F) -> Vec<HResult<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> HResult<T> + Sync + Send,
{
    use rayon::prelude::*;
    jobs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_jobs<J, T, F>(jobs: &[J], f: F) -> Vec<HResult<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> HResult<T> + Sync,
{
    jobs.iter().map(f).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub overrides: serde_json::Map<String, Value>,
}

fn merge(base: &mut Value, patch: &serde_json::Map<String, Value>) {
    let obj = base.as_object_mut().expect("config is a JSON object");
    for (k, v) in patch {
        match (obj.get_mut(k), v) {
            (Some(Value::Object(dst)), Value::Object(src)) => {
                let mut sub = Value::Object(dst.clone());
                merge(&mut sub, src);
                obj.insert(k.clone(), sub);
            }
            _ => {
                obj.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Base config with a variant's overrides applied. Unknown keys fail here,
/// before any run starts.
pub fn apply_overrides(base: &RunConfig, v: &Variant) -> HResult<RunConfig> {
    let mut val = serde_json::to_value(base)?;
    merge(&mut val, &v.overrides);
    let cfg: RunConfig = serde_json::from_value(val).map_err(|e| {
        HarnessError::Config(format!("variant `{}`: {e}", v.name))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantRow {
    pub variant: String,
    pub seed: u64,
    pub final_metrics: MetricsRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    pub noise_level_mean: Option<f64>,
    pub noise_level_std: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AblateReport {
    pub rows: Vec<VariantRow>,
    pub summaries: Vec<VariantSummary>,
}

/// Run every (variant, seed) pair on identical datasets and seed sets and
/// aggregate final-epoch metrics.
pub fn ablate(base: &RunConfig, matrix: &[Variant]) -> HResult<AblateReport> {
    base.validate()?;
    let mut names = BTreeSet::new();
    for v in matrix {
        if !names.insert(v.name.clone()) {
            return Err(HarnessError::Config(format!(
                "duplicate variant name `{}`",
                v.name
            )));
        }
    }
    let variants: Vec<(String, RunConfig)> = if matrix.is_empty() {
        vec![("base".into(), base.clone())]
    } else {
        matrix
            .iter()
            .map(|v| Ok((v.name.clone(), apply_overrides(base, v)?)))
            .collect::<HResult<_>>()?
    };
    let jobs: Vec<(String, RunConfig, u64)> = variants
        .iter()
        .flat_map(|(name, cfg)| {
            base.seeds
                .iter()
                .map(move |&s| (name.clone(), cfg.clone(), s))
        })
        .collect();
    let results = run_jobs(&jobs, |(name, cfg, seed)| {
        let run = train(cfg, *seed, None)?;
        Ok(VariantRow {
            variant: name.clone(),
            seed: *seed,
            final_metrics: run.final_record().clone(),
        })
    });
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    let summaries = variants
        .iter()
        .map(|(name, _)| {
            let fin: Vec<&MetricsRecord> = rows
                .iter()
                .filter(|r| &r.variant == name)
                .map(|r| &r.final_metrics)
                .collect();
            let accs: Vec<f64> = fin.iter().map(|m| m.test_acc).collect();
            let noise: Vec<f64> = fin.iter().filter_map(|m| m.noise_level).collect();
            let (am, asd) = mean_std(&accs);
            let (nm, nsd) = mean_std(&noise);
            VariantSummary {
                variant: name.clone(),
                test_acc_mean: am,
                test_acc_std: asd,
                noise_level_mean: (!noise.is_empty()).then_some(nm),
                noise_level_std: (!noise.is_empty()).then_some(nsd),
            }
        })
        .collect();
    Ok(AblateReport { rows, summaries })
}

pub fn write_ablate_outputs(report: &AblateReport, dir: &Path) -> HResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    writeln!(csv, "variant,seed,test_acc,noise_level,rhcp,disagree_tgt")?;
    for r in &report.rows {
        let m = &r.final_metrics;
        writeln!(
            csv,
            "{},{},{:.12},{},{:.12},{:.12}",
            r.variant,
            r.seed,
            m.test_acc,
            m.noise_level.map(|v| format!("{v:.12}")).unwrap_or_default(),
            m.rhcp,
            m.disagree_tgt,
        )?;
    }
    std::fs::write(dir.join("ablation.csv"), csv)?;
    std::fs::write(
        dir.join("ablation.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub fn sweep_lambda(base: &RunConfig, values: &[f64]) -> HResult<SweepReport> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one λ value".into()));
    }
    if values.iter().any(|&v| v < 0.0) {
        return Err(HarnessError::Config("λ values must be >= 0".into()));
    }
    let matrix: Vec<Variant> = values
        .iter()
        .map(|&v| Variant {
            name: format!("lambda_{v}"),
            overrides: {
                let mut m = serde_json::Map::new();
                m.insert("lambda".into(), serde_json::json!(v));
                m
            },
        })
        .collect();
    let report = ablate(base, &matrix)?;
    let rows = values
        .iter()
        .zip(report.summaries.iter())
        .map(|(&v, s)| SweepRow {
            lambda: v,
            test_acc_mean: s.test_acc_mean,
            test_acc_std: s.test_acc_std,
        })
        .collect();
    Ok(SweepReport { rows })
}

pub fn write_sweep_outputs(report: &SweepReport, dir: &Path) -> HResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    writeln!(csv, "lambda,test_acc_mean,test_acc_std")?;
    for r in &report.rows {
        writeln!(csv, "{},{:.12},{:.12}", r.lambda, r.test_acc_mean, r.test_acc_std)?;
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(report)?)?;
    let pts: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.lambda, r.test_acc_mean)).collect();
    let svg = line_plot_svg(&pts, "lambda", "mean test accuracy");
    std::fs::write(dir.join("sweep.svg"), svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        let mut cfg = RunConfig::default_msda();
        for d in cfg.dataset.domains.iter_mut() {
            d.n_train = 48;
            d.n_test = 24;
        }
        cfg.hidden = vec![8];
        cfg.feature_dim = 3;
        cfg.flow_hidden = 8;
        cfg.flow_blocks = 1;
        cfg.k_bins = 4;
        cfg.epochs = 2;
        cfg.warmup_epochs = 1;
        cfg.batch_size = 16;
        cfg.seeds = vec![0, 1];
        cfg
    }

    #[test]
    fn unknown_override_key_rejected_before_running() {
        let v = Variant {
            name: "bad".into(),
            overrides: [("no_such_knob".to_string(), serde_json::json!(1))]
                .into_iter()
                .collect(),
        };
        let err = ablate(&base(), &[v]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_variant_names_rejected() {
        let v = |n: &str| Variant {
            name: n.into(),
            overrides: serde_json::Map::new(),
        };
        assert!(ablate(&base(), &[v("a"), v("a")]).is_err());
    }

    #[test]
    fn empty_matrix_runs_base_only() {
        let report = ablate(&base(), &[]).unwrap();
        assert_eq!(report.rows.len(), 2); // one per seed
        assert_eq!(report.summaries.len(), 1);
        assert_eq!(report.summaries[0].variant, "base");
    }

    #[test]
    fn nested_override_reaches_dataset_section() {
        let v = Variant {
            name: "retarget".into(),
            overrides: [(
                "dataset".to_string(),
                serde_json::json!({"target": "rot30"}),
            )]
            .into_iter()
            .collect(),
        };
        let cfg = apply_overrides(&base(), &v).unwrap();
        assert_eq!(cfg.dataset.target, "rot30");
        assert_eq!(cfg.dataset.domains.len(), 4); // untouched sibling key
    }

    #[test]
    fn sweep_single_value() {
        let mut cfg = base();
        cfg.seeds = vec![0];
        let rep = sweep_lambda(&cfg, &[0.5]).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.rows[0].test_acc_mean.is_finite());
        assert!(sweep_lambda(&cfg, &[]).is_err());
        assert!(sweep_lambda(&cfg, &[-1.0]).is_err());
    }
}
