//! Small statistics helpers shared by the reports.

use serde::{Deserialize, Serialize};

/// Binned counts. Bin `i` covers `[edges[i], edges[i+1])`; the last bin is
/// closed on the right. Values outside the edges are counted in `below` and
/// `above` so that counts always sum to the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn with_edges(values: &[f64], edges: Vec<f64>) -> Self {
        let bins = edges.len().saturating_sub(1);
        let mut h = Histogram { edges, counts: vec![0; bins], below: 0, above: 0 };
        for &v in values {
            h.add(v);
        }
        h
    }

    fn add(&mut self, v: f64) {
        let n = self.counts.len();
        if n == 0 {
            self.above += 1;
            return;
        }
        if v < self.edges[0] {
            self.below += 1;
        } else if v > self.edges[n] {
            self.above += 1;
        } else {
            let i = self.edges.partition_point(|&e| e <= v).saturating_sub(1).min(n - 1);
            self.counts[i] += 1;
        }
    }

    /// Equal-width bins covering `[lo, hi]`.
    pub fn uniform(values: &[f64], lo: f64, hi: f64, width: f64) -> Self {
        let bins = (((hi - lo) / width).round() as usize).max(1);
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Self::with_edges(values, edges)
    }

    /// Powers of two from 1 up to the first power at or above the maximum.
    pub fn log2_edges(values: &[f64]) -> Vec<f64> {
        let max = values.iter().copied().fold(1.0_f64, f64::max);
        let mut edges = vec![1.0];
        while *edges.last().unwrap() < max {
            let next = edges.last().unwrap() * 2.0;
            edges.push(next);
        }
        if edges.len() == 1 {
            edges.push(2.0);
        }
        edges
    }

    /// Bins of `width` aligned on multiples of `width`, spanning the data.
    pub fn aligned_edges(values: &[f64], width: f64) -> Vec<f64> {
        if values.is_empty() {
            return vec![0.0, width];
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = (lo / width).floor() as i64;
        let last = ((hi / width).floor() as i64 + 1).max(first + 1);
        (first..=last).map(|k| k as f64 * width).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    /// `label,lower,upper,count` rows.
    pub fn csv_rows(&self, label: &str) -> String {
        let mut out = String::new();
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{label},{},{},{c}\n", self.edges[i], self.edges[i + 1]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic two-sided p-value.
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F1 - F2|`.
/// `None` if either sample is empty.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Option<KsResult> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Some(KsResult { statistic: d, p_value: kolmogorov_q(lambda) })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
