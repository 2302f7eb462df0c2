use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{
    argmax_row, disagreement_rate, draw_alpha, gdc_loss, generative_predict, mix_distribution,
    mix_instance, DensityBackend, FeatureMemory, MixConfig, MixMode,
};
use crate::diffcore::{ops, OptimConfig, Optimizer, Schedule, Tensor};
use crate::flows::{flow_nll_loss, save_flow, FlowModel, FlowSpec, GaussianClassModel};
use crate::netmodel::{
    augment, pseudo_label, save_network, source_ce_loss, target_ce_loss, AugmentStrength,
    Network, NetworkSpec,
};
use crate::synthdata::{self, Dataset, Split};

use super::config::{hex_digest, HResult, HarnessError, RunConfig};
use super::metrics::{write_metrics_csv, MetricsRecord};

// ---------------------------------------------------------------------------
// data preparation

pub struct TaskData {
    pub sources: Vec<Dataset>,
    pub target_train: Dataset,
    pub target_test: Dataset,
    pub classes: usize,
    pub input_dim: usize,
    /// "domain/split" → sha256 of the CSV serialization
    pub checksums: BTreeMap<String, String>,
}

pub fn prepare_data(cfg: &RunConfig) -> HResult<TaskData> {
    let ds = &cfg.dataset;
    let all: Vec<Dataset> = if let Some(path) = &ds.csv {
        synthdata::load_csv(path)?.datasets
    } else {
        let mut out = Vec::new();
        for spec in &ds.domains {
            let (train, test) = synthdata::generate(spec, ds.data_seed);
            out.push(train);
            out.push(test);
        }
        out
    };
    let classes = all.iter().map(|d| d.classes).max().unwrap_or(0);
    let input_dim = all
        .first()
        .map(|d| d.input_dim)
        .ok_or_else(|| HarnessError::Config("dataset is empty".into()))?;
    if all.iter().any(|d| d.input_dim != input_dim) {
        return Err(HarnessError::Config(
            "all domains must share one input dimension".into(),
        ));
    }
    let mut checksums = BTreeMap::new();
    for d in &all {
        let mut buf = Vec::new();
        synthdata::write_csv(&[d], &mut buf)?;
        checksums.insert(format!("{}/{}", d.domain, d.split), hex_digest(&buf));
    }
    let mut sources = Vec::new();
    let mut target_train = None;
    let mut target_test = None;
    for d in all {
        if d.domain == ds.target {
            match d.split {
                Split::Train => target_train = Some(d),
                Split::Test => target_test = Some(d),
            }
        } else if d.split == Split::Train {
            sources.push(d);
        }
    }
    let target_train = target_train
        .ok_or_else(|| HarnessError::Config(format!("no train split for target `{}`", ds.target)))?;
    let target_test = target_test
        .ok_or_else(|| HarnessError::Config(format!("no test split for target `{}`", ds.target)))?;
    if sources.is_empty() {
        return Err(HarnessError::Config("no source domains".into()));
    }
    Ok(TaskData {
        sources,
        target_train,
        target_test,
        classes,
        input_dim,
        checksums,
    })
}

fn sample_batch(ds: &Dataset, b: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut xs = Vec::with_capacity(b * ds.input_dim);
    let mut ys = Vec::with_capacity(b);
    let mut idx = Vec::with_capacity(b);
    for _ in 0..b {
        let i = rng.gen_range(0..ds.len());
        xs.extend_from_slice(ds.row(i));
        ys.push(ds.labels[i]);
        idx.push(i);
    }
    (xs, ys, idx)
}

// ---------------------------------------------------------------------------
// diagnostics

pub struct Diagnostics {
    pub rhcp: f64,
    pub noise_level: Option<f64>,
    pub acc_p: Option<f64>,
    pub disagree: f64,
}

/// Threshold/noise/accuracy statistics of the discriminative classifier on
/// one dataset, plus its argmax disagreement with the generative classifier.
pub fn compute_diagnostics(
    net: &Network,
    backend: &DensityBackend,
    inputs: &[f64],
    n: usize,
    labels: Option<&[usize]>,
    tau: f64,
) -> Diagnostics {
    let c = net.spec.classes;
    let feats = net.features_values(inputs, n);
    let probs = net.probs_from_feature_values(&feats, n);
    let p_gen = generative_predict(backend, &feats, n);
    let mut accepted = 0usize;
    let mut accepted_wrong = 0usize;
    let mut correct = 0usize;
    for i in 0..n {
        let row = &probs[i * c..(i + 1) * c];
        let pred = argmax_row(row);
        if row[pred] > tau {
            accepted += 1;
            if let Some(y) = labels {
                if pred != y[i] {
                    accepted_wrong += 1;
                }
            }
        }
        if let Some(y) = labels {
            if pred == y[i] {
                correct += 1;
            }
        }
    }
    let rhcp = if n == 0 { 0.0 } else { accepted as f64 / n as f64 };
    let noise_level = match (labels, accepted) {
        (Some(_), a) if a > 0 => Some(accepted_wrong as f64 / a as f64),
        _ => None,
    };
    let acc_p = labels.map(|_| if n == 0 { 0.0 } else { correct as f64 / n as f64 });
    Diagnostics {
        rhcp,
        noise_level,
        acc_p,
        disagree: disagreement_rate(&probs, &p_gen, n, c),
    }
}

// ---------------------------------------------------------------------------
// training

pub struct TrainedRun {
    pub net: Network,
    pub flows: Vec<FlowModel>,
    pub metrics: Vec<MetricsRecord>,
    pub run_dir: Option<PathBuf>,
}

impl TrainedRun {
    pub fn final_record(&self) -> &MetricsRecord {
        self.metrics.last().expect("at least one epoch")
    }
}

struct FlowBank {
    flows: Vec<FlowModel>,
    opts: Vec<Optimizer>,
}

fn new_flow_bank(cfg: &RunConfig, classes: usize, rng: &mut ChaCha8Rng) -> FlowBank {
    let spec = FlowSpec {
        feature_dim: cfg.feature_dim,
        blocks: cfg.flow_blocks,
        hidden: cfg.flow_hidden,
        k_bins: cfg.k_bins,
        tail: cfg.tail,
    };
    let flows: Vec<FlowModel> = (0..classes).map(|c| FlowModel::new(c, spec, rng)).collect();
    let opts = flows
        .iter()
        .map(|f| Optimizer::new(OptimConfig::adam(cfg.flow_lr), f.params()))
        .collect();
    FlowBank { flows, opts }
}

fn check_finite(name: &str, v: f64, epoch: usize, step: usize) -> HResult<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HarnessError::Numeric(format!(
            "non-finite {name} ({v}) at epoch {epoch}, step {step}"
        )))
    }
}

/// One full training run. With `out_dir` set, writes metrics.csv,
/// manifest.json, summary.json and the network/flow checkpoints there.
pub fn train(cfg: &RunConfig, seed: u64, out_dir: Option<&Path>) -> HResult<TrainedRun> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    let classes = data.classes;
    let b = cfg.batch_size;
    let d = cfg.feature_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(
        NetworkSpec {
            input_dim: data.input_dim,
            hidden: cfg.hidden.clone(),
            feature_dim: d,
            classes,
        },
        &mut rng,
    );
    let mut bank = new_flow_bank(cfg, classes, &mut rng);
    let mut gaussians: Vec<Option<GaussianClassModel>> = (0..classes).map(|_| None).collect();
    let mut memory = FeatureMemory::new(classes, cfg.memory_capacity, d);
    let mix_cfg = MixConfig {
        beta_a: cfg.beta_a,
        beta_b: cfg.beta_b,
        mode: cfg.mix_mode,
        apply_to: cfg.apply_to,
    };

    let steps_per_epoch = (data.target_train.len() / b).max(1);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut net_opt = Optimizer::new(
        OptimConfig::adam(cfg.lr).with_schedule(Schedule::CosineAnnealing { total_steps }),
        net.params(),
    );

    let quarantined: Option<&Vec<usize>> =
        (!cfg.redact_target_labels).then_some(&data.target_train.labels);

    let mut metrics: Vec<MetricsRecord> = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if let Some(k) = cfg.flow_reset_epochs {
            if k > 0 && epoch > 0 && epoch % k == 0 {
                bank = new_flow_bank(cfg, classes, &mut rng);
            }
        }
        let use_gaussian_backend = cfg.mix_mode == MixMode::GaussianDcfa;
        if use_gaussian_backend {
            for c in 0..classes {
                gaussians[c] = (memory.class_len(c) >= 2).then(|| {
                    let n = memory.class_len(c);
                    let feats: Vec<f64> = (0..n).flat_map(|i| memory.get(c, i).to_vec()).collect();
                    GaussianClassModel::fit(c, &feats, n, d)
                });
            }
        }

        let mut sums = [0.0f64; 4]; // L_s, L_u, L_GDC, L_NFlow
        for step in 0..steps_per_epoch {
            // labeled source batches, weak view
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for src in &data.sources {
                let (x, y, _) = sample_batch(src, b, &mut rng);
                xs.extend(augment(&x, &cfg.augment, AugmentStrength::Weak, &mut rng));
                ys.extend(y);
            }
            // unlabeled target batch, weak + strong views
            let (xt, _, ti) = sample_batch(&data.target_train, b, &mut rng);
            let weak = augment(&xt, &cfg.augment, AugmentStrength::Weak, &mut rng);
            let strong = augment(&xt, &cfg.augment, AugmentStrength::Strong, &mut rng);
            let true_lab = quarantined.map(|q| ti.iter().map(|&i| q[i]).collect());
            let pseudo = pseudo_label(&net, &weak, b, cfg.tau, true_lab);
            memory.update(&pseudo);
            if cfg.model_all_domains {
                let kb = ys.len();
                let sf = net.features_values(&xs, kb);
                for (i, &y) in ys.iter().enumerate() {
                    memory.push(y, &sf[i * d..(i + 1) * d]);
                }
            }

            // one flow NLL step per training step, from epoch 0, drawing
            // per-class batches from memory (which already holds this step's
            // accepted features)
            let mut flow_feats = Vec::new();
            let mut flow_labels = Vec::new();
            let mut touched = vec![false; classes];
            for c in 0..classes {
                if memory.class_len(c) < 2 {
                    continue;
                }
                let mut draw = memory.draw_class_batch(c, b, &mut rng);
                // annealed smoothing: full bandwidth early (stabilizes the
                // density estimate while pseudo-labels are noisy), tapering
                // to zero so the final densities sharpen on the real
                // feature manifold
                let jitter =
                    cfg.flow_jitter * (1.0 - epoch as f64 / cfg.epochs as f64);
                if jitter > 0.0 {
                    use rand_distr::{Distribution, StandardNormal};
                    for v in draw.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *v += jitter * e;
                    }
                }
                let n_c = draw.len() / d;
                if !bank.flows[c].is_initialized() {
                    bank.flows[c].data_init(&draw, n_c);
                }
                flow_feats.extend(draw);
                flow_labels.extend(std::iter::repeat(c).take(n_c));
                touched[c] = true;
            }
            if !flow_labels.is_empty() {
                let feats = Tensor::constant(vec![flow_labels.len(), d], flow_feats);
                if let Some(nll) = flow_nll_loss(&bank.flows, &feats, &flow_labels)? {
                    let v = check_finite("L_NFlow", nll.item(), epoch, step)?;
                    sums[3] += v;
                    for opt in bank.opts.iter() {
                        opt.zero_grad();
                    }
                    nll.backward()?;
                    for (c, opt) in bank.opts.iter_mut().enumerate() {
                        if touched[c] {
                            opt.step()?;
                        }
                    }
                }
            }

            let backend = if use_gaussian_backend {
                DensityBackend::Gaussians(&gaussians)
            } else {
                DensityBackend::Flows(&bank.flows)
            };
            let mixing_on = epoch >= cfg.warmup_epochs && cfg.mix_mode != MixMode::None;
            let gdc_on = epoch >= cfg.warmup_epochs && cfg.lambda > 0.0;

            let kb = ys.len();
            let fs = net.features(&Tensor::constant(vec![kb, data.input_dim], xs))?;
            let fs = if mixing_on && cfg.apply_to.covers_source() {
                let alphas: Vec<f64> = (0..kb).map(|_| draw_alpha(&mix_cfg, &mut rng)).collect();
                match cfg.mix_mode {
                    MixMode::Instance => mix_instance(&fs, &ys, &memory, &alphas, &mut rng)?,
                    _ => mix_distribution(&fs, &ys, &backend, &alphas, &mut rng)?,
                }
            } else {
                fs
            };
            let l_s = source_ce_loss(&net, &fs, &ys)?;

            let ft = net.features(&Tensor::constant(vec![b, data.input_dim], strong))?;
            let ft = if mixing_on && cfg.apply_to.covers_target() {
                let alphas: Vec<f64> = (0..b).map(|_| draw_alpha(&mix_cfg, &mut rng)).collect();
                match cfg.mix_mode {
                    MixMode::Instance => {
                        mix_instance(&ft, &pseudo.pseudo_label, &memory, &alphas, &mut rng)?
                    }
                    _ => mix_distribution(&ft, &pseudo.pseudo_label, &backend, &alphas, &mut rng)?,
                }
            } else {
                ft
            };
            let l_u = target_ce_loss(&net, &ft, &pseudo)?;

            let l_gdc = if gdc_on {
                let fw = net.features(&Tensor::constant(vec![b, data.input_dim], weak))?;
                let p_d = net.probs_from_features(&fw)?;
                let p_g = generative_predict(&backend, &pseudo.features, b);
                gdc_loss(&p_d, &p_g, cfg.gdc_metric, cfg.gdc_subset)?
            } else {
                Tensor::scalar(0.0)
            };

            let total = total_loss(&l_s, &l_u, &l_gdc, cfg.lambda)?;
            sums[0] += check_finite("L_s", l_s.item(), epoch, step)?;
            sums[1] += check_finite("L_u", l_u.item(), epoch, step)?;
            sums[2] += check_finite("L_GDC", l_gdc.item(), epoch, step)?;
            check_finite("total loss", total.item(), epoch, step)?;
            net_opt.zero_grad();
            total.backward()?;
            net_opt.step()?;
        }

        // epoch-end diagnostics; inference uses the discriminative head only
        let backend = if use_gaussian_backend {
            DensityBackend::Gaussians(&gaussians)
        } else {
            DensityBackend::Flows(&bank.flows)
        };
        let tgt = compute_diagnostics(
            &net,
            &backend,
            &data.target_train.inputs,
            data.target_train.len(),
            quarantined.map(|q| q.as_slice()),
            cfg.tau,
        );
        let mut src_dis = 0.0;
        for s in &data.sources {
            let dch = compute_diagnostics(&net, &backend, &s.inputs, s.len(), None, cfg.tau);
            src_dis += dch.disagree;
        }
        src_dis /= data.sources.len() as f64;
        let test_probs = net.predict_values(&data.target_test.inputs, data.target_test.len());
        let c = classes;
        let test_correct = (0..data.target_test.len())
            .filter(|&i| argmax_row(&test_probs[i * c..(i + 1) * c]) == data.target_test.labels[i])
            .count();
        let n_steps = steps_per_epoch as f64;
        metrics.push(MetricsRecord {
            epoch,
            rhcp: tgt.rhcp,
            noise_level: tgt.noise_level,
            acc_p: tgt.acc_p,
            test_acc: test_correct as f64 / data.target_test.len() as f64,
            disagree_src: src_dis,
            disagree_tgt: tgt.disagree,
            loss_s: sums[0] / n_steps,
            loss_u: sums[1] / n_steps,
            loss_gdc: sums[2] / n_steps,
            loss_nflow: sums[3] / n_steps,
        });
    }

    let run_dir = if let Some(dir) = out_dir {
        write_run_outputs(cfg, seed, &data, &net, &bank.flows, &metrics, dir)?;
        Some(dir.to_path_buf())
    } else {
        None
    };
    Ok(TrainedRun {
        net,
        flows: bank.flows,
        metrics,
        run_dir,
    })
}

/// L = L_s + L_u + λ·L_GDC
pub fn total_loss(l_s: &Tensor, l_u: &Tensor, l_gdc: &Tensor, lambda: f64) -> crate::diffcore::Result<Tensor> {
    ops::add(&ops::add(l_s, l_u)?, &ops::mul_scalar(l_gdc, lambda))
}

fn write_run_outputs(
    cfg: &RunConfig,
    seed: u64,
    data: &TaskData,
    net: &Network,
    flows: &[FlowModel],
    metrics: &[MetricsRecord],
    dir: &Path,
) -> HResult<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(metrics, &mut f)?;
    f.flush()?;

    let mut nf = BufWriter::new(File::create(dir.join("net.bin"))?);
    save_network(net, &mut nf)?;
    nf.flush()?;
    for (c, flow) in flows.iter().enumerate() {
        let mut ff = BufWriter::new(File::create(dir.join(format!("flow_c{c}.bin")))?);
        save_flow(flow, &mut ff)?;
        ff.flush()?;
    }

    let manifest = serde_json::json!({
        "config": cfg,
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "dataset_checksums": data.checksums,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let last = metrics.last().expect("at least one epoch");
    let summary = serde_json::json!({
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "epochs": metrics.len(),
        "final": last,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Re-run configuration recorded in a run manifest.
pub fn load_manifest(path: &Path) -> HResult<(RunConfig, u64)> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let cfg: RunConfig = serde_json::from_value(
        v.get("config")
            .cloned()
            .ok_or_else(|| HarnessError::Config("manifest lacks a `config` section".into()))?,
    )?;
    let seed = v
        .get("seed")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| HarnessError::Config("manifest lacks a numeric `seed`".into()))?;
    Ok((cfg, seed))
}

// ---------------------------------------------------------------------------
// evaluation

pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

pub fn evaluate(net: &Network, ds: &Dataset) -> HResult<EvalReport> {
    if ds.input_dim != net.spec.input_dim {
        return Err(HarnessError::Config(format!(
            "checkpoint expects input dim {}, dataset has {}",
            net.spec.input_dim, ds.input_dim
        )));
    }
    if ds.classes > net.spec.classes {
        return Err(HarnessError::Config(format!(
            "checkpoint has {} classes, dataset needs {}",
            net.spec.classes, ds.classes
        )));
    }
    let c = net.spec.classes;
    let n = ds.len();
    let probs = net.predict_values(&ds.inputs, n);
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    for i in 0..n {
        let pred = argmax_row(&probs[i * c..(i + 1) * c]);
        confusion[ds.labels[i]][pred] += 1;
        if pred == ds.labels[i] {
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        confusion,
        n,
    })
}
