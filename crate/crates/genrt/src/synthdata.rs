//! Synthetic multi-domain classification tasks with controllable shift, plus
//! CSV ingestion. All generation is deterministic given (spec, seed) using
//! ChaCha8, a portable seedable generator.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    TwoMoons,
    GaussianBlobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub generator: Generator,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub translation: Vec<f64>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// applied to source labels only, for stress tests
    #[serde(default)]
    pub label_noise_rate: f64,
    /// class count for gaussian_blobs; two_moons is always 2
    #[serde(default = "default_classes")]
    pub classes: usize,
}

fn default_scale() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.1
}
fn default_classes() -> usize {
    2
}

impl DomainSpec {
    pub fn classes(&self) -> usize {
        match self.generator {
            Generator::TwoMoons => 2,
            Generator::GaussianBlobs => self.classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub input_dim: usize,
    pub labels: Vec<usize>,
    pub domain: String,
    pub split: Split,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// Canonical centroid of each generator, used as the rotation pivot so the
/// transform is identical across splits and sample sizes.
fn canonical_centroid(generator: Generator) -> (f64, f64) {
    match generator {
        // moons: class 0 arc centered (0,0), class 1 arc centered (1, 0.5)
        Generator::TwoMoons => (0.5, 0.25),
        Generator::GaussianBlobs => (0.0, 0.0),
    }
}

fn generate_points(
    spec: &DomainSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<usize>) {
    let c = spec.classes();
    let mut inputs = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // round-robin keeps classes balanced within ±1
        let y = i % c;
        let (mut px, mut py) = match spec.generator {
            Generator::TwoMoons => {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                if y == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                }
            }
            Generator::GaussianBlobs => {
                let angle = 2.0 * std::f64::consts::PI * y as f64 / c as f64;
                (2.0 * angle.cos(), 2.0 * angle.sin())
            }
        };
        let ex: f64 = StandardNormal.sample(rng);
        let ey: f64 = StandardNormal.sample(rng);
        px += spec.noise_sigma * ex;
        py += spec.noise_sigma * ey;
        inputs.push(px);
        inputs.push(py);
        labels.push(y);
    }
    (inputs, labels)
}

fn apply_domain_transform(spec: &DomainSpec, inputs: &mut [f64]) {
    let (cx, cy) = canonical_centroid(spec.generator);
    let theta = spec.rotation.to_radians();
    let (s, c) = theta.sin_cos();
    let (tx, ty) = match spec.translation.as_slice() {
        [x, y, ..] => (*x, *y),
        [x] => (*x, 0.0),
        [] => (0.0, 0.0),
    };
    for p in inputs.chunks_exact_mut(2) {
        let dx = (p[0] - cx) * spec.scale;
        let dy = (p[1] - cy) * spec.scale;
        p[0] = cx + c * dx - s * dy + tx;
        p[1] = cy + s * dx + c * dy + ty;
    }
}

fn seed_for(spec: &DomainSpec, seed: u64, split: Split) -> u64 {
    // cheap stable string hash so distinct domains decorrelate under one seed
    let mut h: u64 = 0xcbf29ce484222325;
    for b in spec.name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^= match split {
        Split::Train => 0x9e3779b97f4a7c15,
        Split::Test => 0x6a09e667f3bcc909,
    };
    h ^ seed
}

/// Deterministic dataset for one (spec, seed, split).
pub fn generate_split(spec: &DomainSpec, seed: u64, split: Split) -> Dataset {
    let n = match split {
        Split::Train => spec.n_train,
        Split::Test => spec.n_test,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(spec, seed, split));
    let (mut inputs, mut labels) = generate_points(spec, n, &mut rng);
    apply_domain_transform(spec, &mut inputs);
    if spec.label_noise_rate > 0.0 {
        let flipped = inject_label_noise_vec(
            &mut labels,
            spec.classes(),
            spec.label_noise_rate,
            seed_for(spec, seed, split) ^ 0x5deece66d,
        );
        let _ = flipped;
    }
    Dataset {
        inputs,
        input_dim: 2,
        labels,
        domain: spec.name.clone(),
        split,
        classes: spec.classes(),
    }
}

pub fn generate(spec: &DomainSpec, seed: u64) -> (Dataset, Dataset) {
    (
        generate_split(spec, seed, Split::Train),
        generate_split(spec, seed, Split::Test),
    )
}

/// Flip exactly round(rate·N) labels to a uniformly random different class.
/// Returns the flip mask.
pub fn inject_label_noise(ds: &Dataset, rate: f64, seed: u64) -> (Dataset, Vec<bool>) {
    let mut out = ds.clone();
    let mask_idx = inject_label_noise_vec(&mut out.labels, ds.classes, rate, seed);
    (out, mask_idx)
}

fn inject_label_noise_vec(labels: &mut [usize], classes: usize, rate: f64, seed: u64) -> Vec<bool> {
    assert!((0.0..=1.0).contains(&rate), "noise rate must be in [0,1]");
    let n = labels.len();
    let k = (rate * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates picks k distinct indices
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.gen_range(i..n);
        order.swap(i, j);
    }
    let mut mask = vec![false; n];
    for &i in order.iter().take(k) {
        let old = labels[i];
        let mut new = rng.gen_range(0..classes.saturating_sub(1).max(1));
        if new >= old {
            new += 1;
        }
        labels[i] = new.min(classes - 1);
        mask[i] = true;
    }
    mask
}

// ---------------------------------------------------------------------------
// CSV interchange: feature columns, then `label`, `domain`, `split`

#[derive(Debug)]
pub struct CsvLoad {
    pub datasets: Vec<Dataset>,
    /// original label value → dense index
    pub label_map: Vec<(String, usize)>,
}

pub fn write_csv<W: Write>(datasets: &[&Dataset], w: &mut W) -> Result<(), DataError> {
    let dim = datasets.first().map(|d| d.input_dim).unwrap_or(0);
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.extend(["label".into(), "domain".into(), "split".into()]);
    writeln!(w, "{}", header.join(","))?;
    for ds in datasets {
        for i in 0..ds.len() {
            let feats: Vec<String> = ds.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(
                w,
                "{},{},{},{}",
                feats.join(","),
                ds.labels[i],
                ds.domain,
                ds.split
            )?;
        }
    }
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<CsvLoad, DataError> {
    let text = std::fs::read_to_string(path)?;
    load_csv_str(&text)
}

pub fn load_csv_str(text: &str) -> Result<CsvLoad, DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Csv {
        line: 0,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 4 {
        return Err(DataError::Csv {
            line: 1,
            msg: "need at least one feature column plus label,domain,split".into(),
        });
    }
    let tail = &cols[cols.len() - 3..];
    if tail != ["label", "domain", "split"] {
        return Err(DataError::Csv {
            line: 1,
            msg: format!("header must end with label,domain,split; got {tail:?}"),
        });
    }
    let dim = cols.len() - 3;

    struct Bucket {
        inputs: Vec<f64>,
        labels: Vec<String>,
    }
    let mut buckets: Vec<((String, Split), Bucket)> = Vec::new();
    let mut label_values: Vec<String> = Vec::new();
    for (lineno, raw) in lines {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(DataError::Csv {
                line,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let mut feats = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            feats.push(f.parse::<f64>().map_err(|_| DataError::Csv {
                line,
                msg: format!("non-numeric feature `{f}`"),
            })?);
        }
        let label = fields[dim].to_string();
        let domain = fields[dim + 1].to_string();
        let split = match fields[dim + 2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(DataError::Csv {
                    line,
                    msg: format!("unknown split `{other}`"),
                })
            }
        };
        if !label_values.contains(&label) {
            label_values.push(label.clone());
        }
        let key = (domain, split);
        let bucket = match buckets.iter_mut().find(|(k, _)| *k == key) {
            Some((_, b)) => b,
            None => {
                buckets.push((
                    key,
                    Bucket {
                        inputs: Vec::new(),
                        labels: Vec::new(),
                    },
                ));
                &mut buckets.last_mut().unwrap().1
            }
        };
        bucket.inputs.extend(feats);
        bucket.labels.push(label);
    }
    if buckets.is_empty() {
        return Err(DataError::Csv {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    // dense re-index in sorted order of the original label strings
    let mut sorted = label_values.clone();
    sorted.sort();
    let label_map: Vec<(String, usize)> = sorted.into_iter().zip(0..).collect();
    let classes = label_map.len();
    let datasets = buckets
        .into_iter()
        .map(|((domain, split), b)| Dataset {
            labels: b
                .labels
                .iter()
                .map(|l| label_map.iter().find(|(s, _)| s == l).unwrap().1)
                .collect(),
            inputs: b.inputs,
            input_dim: dim,
            domain,
            split,
            classes,
        })
        .collect();
    Ok(CsvLoad {
        datasets,
        label_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rotation: f64) -> DomainSpec {
        DomainSpec {
            name: "d".into(),
            generator: Generator::TwoMoons,
            rotation,
            translation: vec![],
            scale: 1.0,
            noise_sigma: 0.1,
            n_train: 64,
            n_test: 32,
            label_noise_rate: 0.0,
            classes: 2,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_split(&spec(0.0), 7, Split::Train);
        let b = generate_split(&spec(0.0), 7, Split::Train);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn full_rotation_is_identity() {
        let a = generate_split(&spec(0.0), 3, Split::Train);
        let b = generate_split(&spec(360.0), 3, Split::Train);
        for (x, y) in a.inputs.iter().zip(b.inputs.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn classes_balanced_within_one() {
        let ds = generate_split(&spec(0.0), 1, Split::Train);
        let c0 = ds.labels.iter().filter(|&&y| y == 0).count();
        let c1 = ds.labels.iter().filter(|&&y| y == 1).count();
        assert!(c0.abs_diff(c1) <= 1);
    }

    #[test]
    fn noiseless_moons_separable_by_arc_membership() {
        // σ=0 points lie exactly on their arcs; nearest-arc assignment is a
        // closed-form oracle and must recover every label
        let mut s = spec(0.0);
        s.noise_sigma = 0.0;
        let ds = generate_split(&s, 5, Split::Train);
        for i in 0..ds.len() {
            let p = ds.row(i);
            // distance to arc 0 (unit circle, y>0 half) vs arc 1
            let d0 = ((p[0].powi(2) + p[1].powi(2)).sqrt() - 1.0).abs()
                + if p[1] < 0.0 { p[1].abs() } else { 0.0 };
            let dx = p[0] - 1.0;
            let dy = p[1] - 0.5;
            let d1 = ((dx.powi(2) + dy.powi(2)).sqrt() - 1.0).abs()
                + if dy > 0.0 { dy } else { 0.0 };
            let pred = if d0 <= d1 { 0 } else { 1 };
            assert_eq!(pred, ds.labels[i], "point {p:?}");
        }
    }

    #[test]
    fn label_noise_exact_count() {
        let ds = generate_split(&spec(0.0), 2, Split::Train);
        let (noisy, mask) = inject_label_noise(&ds, 0.25, 9);
        let flips = mask.iter().filter(|&&f| f).count();
        assert_eq!(flips, 16); // round(0.25·64) exactly
        for i in 0..ds.len() {
            assert_eq!(mask[i], ds.labels[i] != noisy.labels[i]);
        }
        let (same, mask0) = inject_label_noise(&ds, 0.0, 9);
        assert_eq!(same.labels, ds.labels);
        assert!(mask0.iter().all(|&f| !f));
        let (all, mask1) = inject_label_noise(&ds, 1.0, 9);
        assert!(mask1.iter().all(|&f| f));
        assert!(all.labels.iter().zip(&ds.labels).all(|(a, b)| a != b));
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate_split(&spec(15.0), 4, Split::Train);
        let mut buf = Vec::new();
        write_csv(&[&ds], &mut buf).unwrap();
        let loaded = load_csv_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(loaded.datasets.len(), 1);
        let back = &loaded.datasets[0];
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.inputs.iter().zip(ds.inputs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(load_csv_str("").is_err());
        let ragged = "f0,f1,label,domain,split\n1.0,2.0,0,a,train\n1.0,0,a,train\n";
        let err = load_csv_str(ragged).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let badsplit = "f0,f1,label,domain,split\n1.0,2.0,0,a,validation\n";
        assert!(load_csv_str(badsplit).unwrap_err().to_string().contains("split"));
        let nonnum = "f0,f1,label,domain,split\n1.0,x,0,a,train\n";
        assert!(load_csv_str(nonnum).unwrap_err().to_string().contains("non-numeric"));
    }

    #[test]
    fn csv_reindexes_sparse_labels() {
        let text = "f0,label,domain,split\n0.1,3,a,train\n0.2,7,a,train\n0.3,3,a,train\n";
        let loaded = load_csv_str(text).unwrap();
        assert_eq!(loaded.label_map, vec![("3".into(), 0), ("7".into(), 1)]);
        assert_eq!(loaded.datasets[0].labels, vec![0, 1, 0]);
    }
}
