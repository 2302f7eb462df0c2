//! Config-driven experiment runner: training loop, ablations, λ sweep,
//! diagnostics and plots.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod plot;
pub mod train;

pub use config::{DatasetConfig, HResult, HarnessError, RunConfig};
pub use experiments::{
    ablate, apply_overrides, run_jobs, sweep_lambda, write_ablate_outputs, write_sweep_outputs,
    AblateReport, SweepReport, Variant,
};
pub use metrics::{write_metrics_csv, MetricsRecord, METRICS_HEADER};
pub use train::{
    compute_diagnostics, evaluate, load_manifest, prepare_data, total_loss, train, EvalReport,
    TaskData, TrainedRun,
};

use crate::netmodel::Network;
use crate::synthdata::Dataset;

/// Bottleneck-feature scatter for a set of datasets sharing one network;
/// features beyond 2-d are PCA-projected.
pub fn plot_features(net: &Network, datasets: &[&Dataset]) -> HResult<String> {
    let d = net.spec.feature_dim;
    let mut feats = Vec::new();
    let mut meta: Vec<(usize, usize)> = Vec::new(); // (class, domain)
    let mut domain_names = Vec::new();
    for (dom, ds) in datasets.iter().enumerate() {
        if ds.input_dim != net.spec.input_dim {
            return Err(HarnessError::Config(format!(
                "dataset `{}` has input dim {}, network expects {}",
                ds.domain, ds.input_dim, net.spec.input_dim
            )));
        }
        domain_names.push(ds.domain.clone());
        let f = net.features_values(&ds.inputs, ds.len());
        feats.extend(f);
        meta.extend(ds.labels.iter().map(|&y| (y, dom)));
    }
    let n = meta.len();
    let coords: Vec<f64> = if d == 2 {
        feats
    } else {
        plot::pca_2d(&feats, n, d).0
    };
    let points: Vec<plot::ScatterPoint> = meta
        .iter()
        .enumerate()
        .map(|(i, &(class, domain))| plot::ScatterPoint {
            xy: [coords[i * 2], coords[i * 2 + 1]],
            class,
            domain,
        })
        .collect();
    Ok(plot::scatter_svg(&points, &domain_names, net.spec.classes))
}
