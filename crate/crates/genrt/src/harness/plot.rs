//! Dependency-free SVG output: feature scatter (PCA to 2-d when needed) and
//! simple line plots. Everything is deterministic given the inputs.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 48.0;

const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];
const MARKERS: &[&str] = &["circle", "square", "triangle", "diamond"];

/// Principal 2-d projection via Jacobi eigendecomposition of the covariance.
/// Returns projected points (n×2) and the two leading eigenvalues.
pub fn pca_2d(data: &[f64], n: usize, d: usize) -> (Vec<f64>, [f64; 2]) {
    assert!(d >= 2, "pca_2d needs at least 2 input dims");
    if n == 0 {
        return (Vec::new(), [0.0, 0.0]);
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += data[i * d + j];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        for a in 0..d {
            let xa = data[i * d + a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += xa * (data[i * d + b] - mean[b]);
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for v in cov.iter_mut() {
        *v /= denom;
    }
    let (eigvals, eigvecs) = jacobi_eigen(&cov, d);
    // indices of the two largest eigenvalues
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let (i1, i2) = (order[0], order[1]);
    let mut out = vec![0.0; n * 2];
    for i in 0..n {
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        for j in 0..d {
            let x = data[i * d + j] - mean[j];
            p1 += x * eigvecs[j * d + i1];
            p2 += x * eigvecs[j * d + i2];
        }
        out[i * 2] = p1;
        out[i * 2 + 1] = p2;
    }
    (out, [eigvals[i1], eigvals[i2]])
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns (eigenvalues,
/// column eigenvectors). Fine for the small d used here.
fn jacobi_eigen(sym: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = sym.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q].powi(2);
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-30 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..d).map(|i| a[i * d + i]).collect();
    (eig, v)
}

fn extent(points: &[f64], stride: usize, offset: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for chunk in points.chunks_exact(stride) {
        lo = lo.min(chunk[offset]);
        hi = hi.max(chunk[offset]);
    }
    if !lo.is_finite() || hi - lo < 1e-12 {
        (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
    } else {
        (lo, hi)
    }
}

fn marker_svg(kind: &str, x: f64, y: f64, color: &str) -> String {
    match kind {
        "square" => format!(
            r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{color}"/>"#,
            x - 3.0,
            y - 3.0
        ),
        "triangle" => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - 4.0,
            x - 4.0,
            y + 3.0,
            x + 4.0,
            y + 3.0
        ),
        "diamond" => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - 4.0,
            x + 4.0,
            y,
            x,
            y + 4.0,
            x - 4.0,
            y
        ),
        _ => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#),
    }
}

pub struct ScatterPoint {
    pub xy: [f64; 2],
    pub class: usize,
    pub domain: usize,
}

/// Scatter of 2-d points colored by class, marker shape by domain, with a
/// legend naming both mappings.
pub fn scatter_svg(points: &[ScatterPoint], domain_names: &[String], classes: usize) -> String {
    let flat: Vec<f64> = points.iter().flat_map(|p| p.xy).collect();
    let (x0, x1) = extent(&flat, 2, 0);
    let (y0, y1) = extent(&flat, 2, 1);
    let sx = (W - 2.0 * MARGIN) / (x1 - x0);
    let sy = (H - 2.0 * MARGIN) / (y1 - y0);
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for p in points {
        let px = MARGIN + (p.xy[0] - x0) * sx;
        let py = H - MARGIN - (p.xy[1] - y0) * sy;
        let color = COLORS[p.class % COLORS.len()];
        let marker = MARKERS[p.domain % MARKERS.len()];
        s.push_str(&marker_svg(marker, px, py, color));
    }
    // legend: one row per class color, one per domain marker
    let mut ly = 16.0;
    for c in 0..classes {
        let color = COLORS[c % COLORS.len()];
        s.push_str(&marker_svg("circle", 12.0, ly, color));
        let _ = write!(s, r#"<text x="20" y="{:.0}" font-size="11">class {c}</text>"#, ly + 4.0);
        ly += 14.0;
    }
    for (i, name) in domain_names.iter().enumerate() {
        let marker = MARKERS[i % MARKERS.len()];
        s.push_str(&marker_svg(marker, 12.0, ly, "#333333"));
        let _ = write!(s, r#"<text x="20" y="{:.0}" font-size="11">{name}</text>"#, ly + 4.0);
        ly += 14.0;
    }
    s.push_str("</svg>");
    s
}

/// Simple polyline plot with axis labels and point markers.
pub fn line_plot_svg(points: &[(f64, f64)], x_label: &str, y_label: &str) -> String {
    let flat: Vec<f64> = points.iter().flat_map(|&(x, y)| [x, y]).collect();
    let (x0, x1) = extent(&flat, 2, 0);
    let (y0, y1) = extent(&flat, 2, 1);
    let sx = (W - 2.0 * MARGIN) / (x1 - x0);
    let sy = (H - 2.0 * MARGIN) / (y1 - y0);
    let to_px = |x: f64, y: f64| (MARGIN + (x - x0) * sx, H - MARGIN - (y - y0) * sy);
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        s,
        r##"<line x1="{MARGIN}" y1="{:.0}" x2="{:.0}" y2="{:.0}" stroke="#333"/>"##,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    let _ = write!(
        s,
        r##"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{:.0}" stroke="#333"/>"##,
        H - MARGIN
    );
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = to_px(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    if points.len() > 1 {
        let _ = write!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            path.join(" ")
        );
    }
    for &(x, y) in points {
        let (px, py) = to_px(x, y);
        let _ = write!(s, r##"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="#1f77b4"/>"##);
        let _ = write!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">({x}, {y:.4})</text>"#,
            px + 5.0,
            py - 5.0
        );
    }
    let _ = write!(
        s,
        r#"<text x="{:.0}" y="{:.0}" font-size="12">{x_label}</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = write!(
        s,
        r#"<text x="12" y="{:.0}" font-size="12" transform="rotate(-90 12 {:.0})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s.push_str("</svg>");
    s
}
