use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::HResult;

/// One row per epoch. `noise_level` is undefined when nothing was accepted
/// (rhcp = 0) and blank when target labels are redacted; `acc_p` is likewise
/// blank under redaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub rhcp: f64,
    pub noise_level: Option<f64>,
    pub acc_p: Option<f64>,
    pub test_acc: f64,
    pub disagree_src: f64,
    pub disagree_tgt: f64,
    pub loss_s: f64,
    pub loss_u: f64,
    pub loss_gdc: f64,
    pub loss_nflow: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,rhcp,noise_level,acc_p,test_acc,disagree_src,disagree_tgt,loss_s,loss_u,loss_gdc,loss_nflow";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], w: &mut W) -> HResult<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.12},{},{},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12}",
            r.epoch,
            r.rhcp,
            fmt_opt(r.noise_level),
            fmt_opt(r.acc_p),
            r.test_acc,
            r.disagree_src,
            r.disagree_tgt,
            r.loss_s,
            r.loss_u,
            r.loss_gdc,
            r.loss_nflow,
        )?;
    }
    Ok(())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_blank_optionals() {
        let r = MetricsRecord {
            epoch: 3,
            rhcp: 0.0,
            noise_level: None,
            acc_p: Some(0.5),
            test_acc: 0.75,
            disagree_src: 0.1,
            disagree_tgt: 0.2,
            loss_s: 1.0,
            loss_u: 0.0,
            loss_gdc: 0.0,
            loss_nflow: 2.5,
        };
        let mut buf = Vec::new();
        write_metrics_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("3,0.000000000000,,0.5"), "{row}");
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
        let (m1, s1) = mean_std(&[4.0]);
        assert_eq!((m1, s1), (4.0, 0.0));
    }
}
