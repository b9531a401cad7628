//! Poisson toy model of Lee-Ready accuracy as a function of the quote lag.
//!
//! Mid-price moves up with intensity `λLC+ + λM+` and down with
//! `λLC- + λM-`, always by one tick. Whether a trade is correctly signed
//! by a lagged quote then reduces to a Skellam probability.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::Aggressor;
use crate::numeric::{self, Bounds};

#[derive(Debug, Error, PartialEq)]
pub enum SkellamError {
    #[error("{name} must be finite and non-negative, got {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid lag density: {0}")]
    Density(String),
    #[error("calibration needs at least {needed} curve points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("calibration did not converge after {} iterations (residual norm {})", .best.iterations, .best.residual_norm)]
    NotConverged { best: Box<Calibration> },
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), SkellamError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(SkellamError::Domain { name, value })
    }
}

/// `ln(e^{-x} I_k(x))` for `k = 0..=kmax` by Miller's downward recurrence,
/// normalized with `I_0 + 2 Σ I_k = e^x`.
fn log_scaled_bessel(x: f64, kmax: usize) -> Vec<f64> {
    debug_assert!(x > 0.0);
    let reach = (kmax as f64).max(x);
    let start = reach as usize + 50 + (100.0 * reach).sqrt().ceil() as usize;
    const BIG: f64 = 1e250;
    let ln_big = BIG.ln();
    let mut out = vec![0.0; kmax + 1];
    let mut above = 0.0_f64;
    let mut cur = 1.0_f64;
    let mut log_scale = 0.0;
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        sum += 2.0 * cur;
        let prev = (2.0 * k as f64 / x) * cur + above;
        above = cur;
        cur = prev;
        if cur > BIG {
            cur /= BIG;
            above /= BIG;
            sum /= BIG;
            log_scale += ln_big;
        }
        if k - 1 <= kmax {
            out[k - 1] = cur.ln() + log_scale;
        }
    }
    sum += cur;
    let ln_norm = sum.ln() + log_scale;
    for v in &mut out {
        *v -= ln_norm;
    }
    out
}

/// Sums `pmf` over `k <= n`, walking outward from `center` and stopping
/// once terms drop below `1e-16` of the running total (or at the hard bounds).
fn cdf_by_walk(n: i64, center: i64, lo: i64, hi: i64, pmf: impl Fn(i64) -> f64) -> f64 {
    let center = center.clamp(lo, hi);
    let mut lower = 0.0;
    let mut upper = 0.0;
    let mut total = 0.0;
    let mut add = |k: i64, p: f64, total: &mut f64| {
        if k <= n {
            lower += p;
        } else {
            upper += p;
        }
        *total += p;
    };
    let p = pmf(center);
    add(center, p, &mut total);
    let mut k = center + 1;
    while k <= hi {
        let p = pmf(k);
        add(k, p, &mut total);
        if p < 1e-16 * total {
            break;
        }
        k += 1;
    }
    let mut k = center - 1;
    while k >= lo {
        let p = pmf(k);
        add(k, p, &mut total);
        if p < 1e-16 * total {
            break;
        }
        k -= 1;
    }
    if total <= 0.0 {
        return if n >= center { 1.0 } else { 0.0 };
    }
    if lower <= upper {
        (lower / total).clamp(0.0, 1.0)
    } else {
        (1.0 - upper / total).clamp(0.0, 1.0)
    }
}

fn ln_factorials(kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=kmax {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Poisson CDF `P(N <= n)` with mean `mu > 0`.
fn poisson_cdf(n: i64, mu: f64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let hi = (mu + 12.0 * mu.sqrt() + 60.0).ceil() as i64;
    if n >= hi {
        return 1.0;
    }
    let lf = ln_factorials(hi as usize);
    let ln_mu = mu.ln();
    cdf_by_walk(n, mu.floor() as i64, 0, hi, |k| (-mu + k as f64 * ln_mu - lf[k as usize]).exp())
}

/// Skellam CDF `F(n; μ1, μ2) = P(N1 - N2 <= n)` for independent Poisson
/// counts with means `μ1` and `μ2`.
pub fn skellam_cdf(n: i64, mu1: f64, mu2: f64) -> Result<f64, SkellamError> {
    check_nonneg("mu1", mu1)?;
    check_nonneg("mu2", mu2)?;
    Ok(match (mu1 > 0.0, mu2 > 0.0) {
        (false, false) => {
            if n >= 0 {
                1.0
            } else {
                0.0
            }
        }
        (true, false) => poisson_cdf(n, mu1),
        (false, true) => 1.0 - poisson_cdf(n.saturating_neg().saturating_sub(1), mu2),
        (true, true) => {
            let mean = mu1 - mu2;
            let spread = 12.0 * (mu1 + mu2).sqrt() + 40.0;
            let lo = (mean - spread).floor() as i64;
            let hi = (mean + spread).ceil() as i64;
            if n < lo {
                return Ok(0.0);
            }
            if n >= hi {
                return Ok(1.0);
            }
            let kmax = lo.unsigned_abs().max(hi.unsigned_abs()) as usize;
            let bessel = log_scaled_bessel(2.0 * (mu1 * mu2).sqrt(), kmax);
            let base = -(mu1.sqrt() - mu2.sqrt()).powi(2);
            let half_log_ratio = 0.5 * (mu1.ln() - mu2.ln());
            cdf_by_walk(n, mean.round() as i64, lo, hi, |k| {
                (base + k as f64 * half_log_ratio + bessel[k.unsigned_abs() as usize]).exp()
            })
        }
    })
}

/// Intensities of the toy model, in events per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkellamParams {
    pub lambda_lc_plus: f64,
    pub lambda_lc_minus: f64,
    pub lambda_m_plus: f64,
    pub lambda_m_minus: f64,
    /// Fraction of market orders that move the mid-price.
    pub rho_agg: f64,
}

impl SkellamParams {
    pub fn new(lambda_lc_plus: f64, lambda_lc_minus: f64, lambda_m_plus: f64, lambda_m_minus: f64, rho_agg: f64) -> Self {
        SkellamParams { lambda_lc_plus, lambda_lc_minus, lambda_m_plus, lambda_m_minus, rho_agg }
    }

    /// Symmetric intensities: `λLC± = lc`, `λM± = m`.
    pub fn symmetric(lc: f64, m: f64, rho_agg: f64) -> Self {
        Self::new(lc, lc, m, m, rho_agg)
    }

    pub fn validate(&self) -> Result<(), SkellamError> {
        check_nonneg("lambda_lc_plus", self.lambda_lc_plus)?;
        check_nonneg("lambda_lc_minus", self.lambda_lc_minus)?;
        check_nonneg("lambda_m_plus", self.lambda_m_plus)?;
        check_nonneg("lambda_m_minus", self.lambda_m_minus)?;
        if !(0.0..=1.0).contains(&self.rho_agg) {
            return Err(SkellamError::Params(format!("rho_agg must lie in [0, 1], got {}", self.rho_agg)));
        }
        if self.lambda_m_plus + self.lambda_m_minus <= 0.0 {
            return Err(SkellamError::Params("market order intensities are both zero".into()));
        }
        Ok(())
    }

    /// Intensity of upward mid-price moves.
    pub fn up_rate(&self) -> f64 {
        self.lambda_lc_plus + self.lambda_m_plus
    }

    pub fn down_rate(&self) -> f64 {
        self.lambda_lc_minus + self.lambda_m_minus
    }

    /// Fraction of buy market orders.
    pub fn rho_plus(&self) -> f64 {
        self.lambda_m_plus / (self.lambda_m_plus + self.lambda_m_minus)
    }
}

/// Probability that a trade is correctly signed by a quote taken `gap`
/// seconds before its own quote update.
pub fn p_before(side: Aggressor, params: &SkellamParams, gap: f64) -> Result<f64, SkellamError> {
    check_nonneg("gap", gap)?;
    let (up, down) = (params.up_rate() * gap, params.down_rate() * gap);
    match side {
        Aggressor::Buy => skellam_cdf(0, down, up),
        Aggressor::Sell => skellam_cdf(0, up, down),
    }
}

/// Probability that a trade is correctly signed by a quote taken `gap`
/// seconds after its own quote update. An aggressive trade has already moved
/// the mid by one tick in its own direction.
pub fn p_after(side: Aggressor, params: &SkellamParams, gap: f64, aggressive: bool) -> Result<f64, SkellamError> {
    check_nonneg("gap", gap)?;
    if !aggressive {
        let other = match side {
            Aggressor::Buy => Aggressor::Sell,
            Aggressor::Sell => Aggressor::Buy,
        };
        return p_before(other, params, gap);
    }
    let (up, down) = (params.up_rate() * gap, params.down_rate() * gap);
    match side {
        Aggressor::Buy => skellam_cdf(-1, up, down),
        Aggressor::Sell => skellam_cdf(-1, down, up),
    }
}

/// Accuracy for a deterministic reporting lag `delta` and quote lag
/// `delta_lr`, both in seconds. Equal lags give 1.
pub fn p_deterministic(params: &SkellamParams, delta: f64, delta_lr: f64) -> Result<f64, SkellamError> {
    params.validate()?;
    Ok(p_det_unchecked(params, delta - delta_lr))
}

fn p_det_unchecked(params: &SkellamParams, diff: f64) -> f64 {
    if diff == 0.0 {
        return 1.0;
    }
    let gap = diff.abs();
    let rho = params.rho_plus();
    let (up, down) = (params.up_rate() * gap, params.down_rate() * gap);
    // both branches only need F(0; D, U) and F(0; U, D): the aggressive
    // terms follow from F(-1; U, D) = 1 - F(0; D, U)
    let buy_before = skellam_cdf(0, down, up).expect("validated");
    let sell_before = skellam_cdf(0, up, down).expect("validated");
    let p = if diff > 0.0 {
        rho * buy_before + (1.0 - rho) * sell_before
    } else {
        let passive = rho * sell_before + (1.0 - rho) * buy_before;
        let aggressive = rho * (1.0 - buy_before) + (1.0 - rho) * (1.0 - sell_before);
        (1.0 - params.rho_agg) * passive + params.rho_agg * aggressive
    };
    p.clamp(0.0, 1.0)
}

/// Distribution of the reporting lag between trades and quotes, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagDensity {
    Dirac { delta: f64 },
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-constant density; `density[i]` holds on `[edges[i], edges[i+1])`.
    Empirical { edges: Vec<f64>, density: Vec<f64> },
}

/// Gaussian densities are integrated over `mean ± GAUSS_SPAN·sd`.
const GAUSS_SPAN: f64 = 12.0;

impl LagDensity {
    /// Normalized histogram density from bin counts.
    pub fn from_histogram(edges: Vec<f64>, counts: &[u64]) -> Result<Self, SkellamError> {
        if edges.len() != counts.len() + 1 {
            return Err(SkellamError::Density("edges must have one more entry than counts".into()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(SkellamError::Density("histogram is empty".into()));
        }
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, w)| c as f64 / total as f64 / (w[1] - w[0]))
            .collect();
        let d = LagDensity::Empirical { edges, density };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), SkellamError> {
        let bad = |m: &str| Err(SkellamError::Density(m.to_string()));
        match self {
            LagDensity::Dirac { delta } if !delta.is_finite() => bad("dirac location must be finite"),
            LagDensity::Gaussian { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) => {
                bad("gaussian needs a finite mean and a positive finite sd")
            }
            LagDensity::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bad("uniform bounds must be finite with lo < hi")
            }
            LagDensity::Empirical { edges, density } => {
                if edges.len() != density.len() + 1 || density.is_empty() {
                    return bad("edges must have one more entry than density values");
                }
                if edges.iter().any(|e| !e.is_finite()) {
                    return bad("support must be bounded");
                }
                if edges.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("edges must be strictly increasing");
                }
                if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    return bad("density values must be finite and non-negative");
                }
                let mass: f64 = density.iter().zip(edges.windows(2)).map(|(d, w)| d * (w[1] - w[0])).sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(SkellamError::Density(format!("density integrates to {mass}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Interval outside which the density is zero (or negligible).
    pub fn support(&self) -> (f64, f64) {
        match self {
            LagDensity::Dirac { delta } => (*delta, *delta),
            LagDensity::Gaussian { mean, sd } => (mean - GAUSS_SPAN * sd, mean + GAUSS_SPAN * sd),
            LagDensity::Uniform { lo, hi } => (*lo, *hi),
            LagDensity::Empirical { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    /// Density at `u`; zero for a Dirac.
    pub fn pdf(&self, u: f64) -> f64 {
        match self {
            LagDensity::Dirac { .. } => 0.0,
            LagDensity::Gaussian { mean, sd } => {
                let z = (u - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            LagDensity::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&u) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            LagDensity::Empirical { edges, density } => {
                let last = edges.len() - 1;
                if u < edges[0] || u > edges[last] {
                    return 0.0;
                }
                let i = edges.partition_point(|&e| e <= u).saturating_sub(1).min(density.len() - 1);
                density[i]
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            LagDensity::Empirical { edges, .. } => edges.clone(),
            LagDensity::Gaussian { mean, .. } => {
                let (lo, hi) = self.support();
                vec![lo, *mean, hi]
            }
            _ => {
                let (lo, hi) = self.support();
                vec![lo, hi]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LagDensity::Dirac { delta } => *delta,
            LagDensity::Gaussian { mean, .. } => *mean,
            LagDensity::Uniform { lo, hi } => 0.5 * (lo + hi),
            LagDensity::Empirical { edges, density } => density
                .iter()
                .zip(edges.windows(2))
                .map(|(d, w)| d * (w[1] - w[0]) * 0.5 * (w[0] + w[1]))
                .sum(),
        }
    }

    /// Draws one lag in seconds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LagDensity::Dirac { delta } => *delta,
            LagDensity::Gaussian { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            LagDensity::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            LagDensity::Empirical { edges, density } => {
                let mut target: f64 = rng.random();
                for (i, w) in edges.windows(2).enumerate() {
                    let mass = density[i] * (w[1] - w[0]);
                    if target < mass || i == density.len() - 1 {
                        let frac = (target / mass).clamp(0.0, 1.0);
                        return w[0] + frac * (w[1] - w[0]);
                    }
                    target -= mass;
                }
                unreachable!("density has at least one bin")
            }
        }
    }
}

/// `dirac D`, `gaussian MEAN SD`, `uniform LO HI` or
/// `empirical E0 E1 .. En | D1 .. Dn` (seconds; densities integrate to 1).
impl fmt::Display for LagDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        match self {
            LagDensity::Dirac { delta } => write!(f, "dirac {delta}"),
            LagDensity::Gaussian { mean, sd } => write!(f, "gaussian {mean} {sd}"),
            LagDensity::Uniform { lo, hi } => write!(f, "uniform {lo} {hi}"),
            LagDensity::Empirical { edges, density } => write!(f, "empirical {} | {}", join(edges), join(density)),
        }
    }
}

impl FromStr for LagDensity {
    type Err = String;

    fn from_str(v: &str) -> Result<Self, String> {
        let mut words = v.split_whitespace();
        let kind = words.next().ok_or("empty lag density")?;
        let rest: Vec<&str> = words.collect();
        let nums = |ws: &[&str]| -> Result<Vec<f64>, String> {
            ws.iter().map(|w| w.parse::<f64>().map_err(|_| format!("bad number {w:?}"))).collect()
        };
        let d = match kind {
            "dirac" => match nums(&rest)?[..] {
                [delta] => LagDensity::Dirac { delta },
                _ => return Err("dirac takes one value".into()),
            },
            "gaussian" => match nums(&rest)?[..] {
                [mean, sd] => LagDensity::Gaussian { mean, sd },
                _ => return Err("gaussian takes mean and sd".into()),
            },
            "uniform" => match nums(&rest)?[..] {
                [lo, hi] => LagDensity::Uniform { lo, hi },
                _ => return Err("uniform takes lo and hi".into()),
            },
            "empirical" => {
                let bar = rest.iter().position(|w| *w == "|").ok_or("empirical needs `edges | density`")?;
                LagDensity::Empirical { edges: nums(&rest[..bar])?, density: nums(&rest[bar + 1..])? }
            }
            other => return Err(format!("unknown lag density {other:?}")),
        };
        d.validate().map_err(|e| e.to_string())?;
        Ok(d)
    }
}

/// Absolute tolerance of the lag integral.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Accuracy at quote lag `delta_lr` averaged over the reporting-lag density.
pub fn p_expected(params: &SkellamParams, f_delta: &LagDensity, delta_lr: f64) -> Result<f64, SkellamError> {
    params.validate()?;
    f_delta.validate()?;
    if let LagDensity::Dirac { delta } = f_delta {
        return Ok(p_det_unchecked(params, delta - delta_lr));
    }
    let mut breaks = f_delta.breakpoints();
    let (lo, hi) = f_delta.support();
    if delta_lr > lo && delta_lr < hi {
        breaks.push(delta_lr);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let q = numeric::integrate(|u| p_det_unchecked(params, u - delta_lr) * f_delta.pdf(u), &breaks, QUADRATURE_TOL);
    Ok(q.value.clamp(0.0, 1.0))
}

/// Model curve at each lag of `grid`.
pub fn model_curve(params: &SkellamParams, f_delta: &LagDensity, grid: &[f64]) -> Result<Vec<(f64, f64)>, SkellamError> {
    grid.iter().map(|&l| Ok((l, p_expected(params, f_delta, l)?))).collect()
}

/// `delta_lr,probability` rows with a header.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("delta_lr,probability\n");
    for (l, p) in curve {
        out.push_str(&format!("{l},{p}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: SkellamParams,
    pub residual_norm: f64,
    /// Model minus empirical accuracy, in curve order.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Every intensity was driven to the lower bound: the curve carries no
    /// information about the order flow.
    pub degenerate: bool,
    pub objective: String,
}

const RATE_FLOOR: f64 = 1e-8;
const RATE_CEIL: f64 = 1e4;

fn unpack(theta: &[f64]) -> SkellamParams {
    SkellamParams::new(theta[0].exp(), theta[1].exp(), theta[2].exp(), theta[3].exp(), theta[4])
}

/// Unweighted least-squares fit of the model to `(delta_lr, accuracy)` pairs.
/// Rates are optimized on a log scale within `[1e-8, 1e4]`, `rho_agg` within `[0, 1]`.
pub fn calibrate(curve: &[(f64, f64)], f_delta: &LagDensity, init: &SkellamParams) -> Result<Calibration, SkellamError> {
    const FREE: usize = 5;
    if curve.len() < FREE {
        return Err(SkellamError::TooFewPoints { needed: FREE, got: curve.len() });
    }
    init.validate()?;
    f_delta.validate()?;
    let lower = [RATE_FLOOR.ln(), RATE_FLOOR.ln(), RATE_FLOOR.ln(), RATE_FLOOR.ln(), 0.0];
    let upper = [RATE_CEIL.ln(), RATE_CEIL.ln(), RATE_CEIL.ln(), RATE_CEIL.ln(), 1.0];
    let x0 = [
        init.lambda_lc_plus.max(RATE_FLOOR).ln(),
        init.lambda_lc_minus.max(RATE_FLOOR).ln(),
        init.lambda_m_plus.max(RATE_FLOOR).ln(),
        init.lambda_m_minus.max(RATE_FLOOR).ln(),
        init.rho_agg,
    ];
    let residuals = |theta: &[f64]| -> Vec<f64> {
        let p = unpack(theta);
        curve
            .iter()
            .map(|&(lag, acc)| p_expected(&p, f_delta, lag).map(|m| m - acc).unwrap_or(f64::NAN))
            .collect()
    };
    let opt = numeric::levenberg_marquardt(residuals, &x0, Bounds { lower: &lower, upper: &upper }, 300);
    let params = unpack(&opt.x);
    let degenerate = params.up_rate() + params.down_rate() < 1e3 * RATE_FLOOR;
    let result = Calibration {
        params,
        residual_norm: opt.value,
        residuals: residuals(&opt.x),
        iterations: opt.iterations,
        degenerate,
        objective: "unweighted_least_squares".into(),
    };
    if opt.converged {
        Ok(result)
    } else {
        Err(SkellamError::NotConverged { best: Box::new(result) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Truncated double sum over independent Poisson counts.
    fn brute_cdf(n: i64, mu1: f64, mu2: f64) -> f64 {
        let terms = 120;
        let pois = |mu: f64| {
            let mut p = vec![(-mu).exp()];
            for k in 1..terms {
                let prev = p[k - 1];
                p.push(prev * mu / k as f64);
            }
            p
        };
        let (a, b) = (pois(mu1), pois(mu2));
        let mut s = 0.0;
        for (i, pa) in a.iter().enumerate() {
            for (j, pb) in b.iter().enumerate() {
                if i as i64 - j as i64 <= n {
                    s += pa * pb;
                }
            }
        }
        s
    }

    #[test]
    fn cdf_matches_double_sum() {
        let mus = [0.0, 0.1, 1.0, 5.0, 20.0];
        for &m1 in &mus {
            for &m2 in &mus {
                for n in -5..=5 {
                    let got = skellam_cdf(n, m1, m2).unwrap();
                    let want = brute_cdf(n, m1, m2);
                    assert!((got - want).abs() < 1e-10, "F({n};{m1},{m2}) = {got}, brute {want}");
                    let mirror = skellam_cdf(-n - 1, m2, m1).unwrap();
                    assert!((got + mirror - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cdf_edge_cases() {
        assert_eq!(skellam_cdf(0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(skellam_cdf(-1, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(skellam_cdf(0, 0.0, 3.0).unwrap(), 1.0);
        assert!(matches!(skellam_cdf(0, -1.0, 1.0), Err(SkellamError::Domain { .. })));
        assert!(skellam_cdf(0, f64::NAN, 1.0).is_err());
        let v = skellam_cdf(0, 1.0, 1.0).unwrap();
        assert!((v - brute_cdf(0, 1.0, 1.0)).abs() < 1e-13);
        // large arguments stay in range and monotone
        let mut prev = 0.0;
        for n in -400..400 {
            let f = skellam_cdf(n, 3000.0, 2900.0).unwrap();
            assert!((0.0..=1.0).contains(&f) && f >= prev);
            prev = f;
        }
        assert!((skellam_cdf(100, 3000.0, 2900.0).unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn bessel_against_series() {
        // e^{-x} I_k(x) from the power series at moderate x
        let series = |k: usize, x: f64| {
            let mut term = (0.5 * x).powi(k as i32) / (1..=k).map(|v| v as f64).product::<f64>();
            let mut s = 0.0;
            for m in 0..200 {
                s += term;
                term *= (0.25 * x * x) / ((m + 1) as f64 * (m + 1 + k) as f64);
            }
            s * (-x).exp()
        };
        for &x in &[0.01, 0.5, 2.0, 10.0, 40.0] {
            let logs = log_scaled_bessel(x, 12);
            for k in 0..=12 {
                let want = series(k, x);
                let got = logs[k].exp();
                assert!((got - want).abs() <= 1e-13 * want.max(1e-300) + 1e-300, "k={k} x={x}");
            }
        }
    }

    fn fig10() -> SkellamParams {
        SkellamParams::symmetric(5.0, 1.0, 0.6)
    }

    #[test]
    fn conditional_probabilities() {
        let p = fig10();
        assert_eq!(p_before(Aggressor::Buy, &p, 0.0).unwrap(), 1.0);
        assert_eq!(p_after(Aggressor::Sell, &p, 0.0, false).unwrap(), 1.0);
        assert_eq!(p_after(Aggressor::Buy, &p, 0.0, true).unwrap(), 0.0);
        let b = p_before(Aggressor::Buy, &p, 0.3).unwrap();
        let s = p_before(Aggressor::Sell, &p, 0.3).unwrap();
        assert!((b - s).abs() < 1e-15 && b > 0.5);
        assert!((b - brute_cdf(0, 1.8, 1.8)).abs() < 1e-12);
        assert!(p_before(Aggressor::Buy, &p, -0.1).is_err());

        let one_sided = SkellamParams::new(5.0, 0.0, 1.0, 0.0, 0.5);
        assert_eq!(p_before(Aggressor::Buy, &one_sided, 2.0).unwrap(), 1.0);

        // aggressive buy = P(N+ + 1 - N- <= 0)
        let q = SkellamParams::new(3.0, 2.0, 1.0, 0.5, 0.4);
        let g = 0.7;
        let want = brute_cdf(-1, q.up_rate() * g, q.down_rate() * g);
        assert!((p_after(Aggressor::Buy, &q, g, true).unwrap() - want).abs() < 1e-12);
        let want = brute_cdf(-1, q.down_rate() * g, q.up_rate() * g);
        assert!((p_after(Aggressor::Sell, &q, g, true).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn deterministic_curve_shape() {
        let p = fig10();
        assert_eq!(p_deterministic(&p, 1.0, 1.0).unwrap(), 1.0);
        let left = p_deterministic(&p, 1.0, 1.0 - 1e-6).unwrap();
        let right = p_deterministic(&p, 1.0, 1.0 + 1e-6).unwrap();
        assert!(left > 0.999 && right < 0.5);
        // maximum of a grid sits just left of the true lag
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        let best = grid
            .iter()
            .copied()
            .filter(|&l| l != 1.0)
            .max_by(|a, b| p_deterministic(&p, 1.0, *a).unwrap().total_cmp(&p_deterministic(&p, 1.0, *b).unwrap()))
            .unwrap();
        assert!((best - 0.95).abs() < 1e-12);

        let calm = SkellamParams::symmetric(5.0, 1.0, 0.0);
        for g in [0.01, 0.2, 1.5] {
            let a = p_deterministic(&calm, 1.0, 1.0 - g).unwrap();
            let b = p_deterministic(&calm, 1.0, 1.0 + g).unwrap();
            assert!((a - b).abs() < 1e-14);
        }
        let mut prev = 1.0;
        for i in 1..50 {
            let v = p_deterministic(&calm, 1.0, 1.0 - i as f64 * 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn expectation_over_lag_densities() {
        let p = fig10();
        let dirac = LagDensity::Dirac { delta: 1.0 };
        assert_eq!(p_expected(&p, &dirac, 0.7).unwrap(), p_deterministic(&p, 1.0, 0.7).unwrap());

        let gauss = LagDensity::Gaussian { mean: 1.0, sd: 0.1 };
        let at_mean = p_expected(&p, &gauss, 1.0).unwrap();
        let far_left = p_expected(&p, &gauss, 0.5).unwrap();
        let near = p_expected(&p, &gauss, 0.8).unwrap();
        assert!(at_mean < near && far_left < near);
        // continuous in the quote lag
        let a = p_expected(&p, &gauss, 1.0 - 1e-4).unwrap();
        let b = p_expected(&p, &gauss, 1.0 + 1e-4).unwrap();
        assert!((a - b).abs() < 5e-3);

        // a one-bin histogram is the uniform density
        let hist = LagDensity::from_histogram(vec![0.05, 0.15], &[10]).unwrap();
        let uni = LagDensity::Uniform { lo: 0.05, hi: 0.15 };
        for l in [-0.2, 0.0, 0.1, 0.3] {
            let x = p_expected(&p, &hist, l).unwrap();
            let y = p_expected(&p, &uni, l).unwrap();
            assert!((x - y).abs() < 1e-9);
        }

        let bad = LagDensity::Empirical { edges: vec![0.0, f64::INFINITY], density: vec![0.0] };
        assert!(p_expected(&p, &bad, 0.0).is_err());
        let bad = LagDensity::Empirical { edges: vec![0.0, 1.0], density: vec![0.5] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn samples_follow_the_density() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d = LagDensity::from_histogram(vec![0.0, 1.0, 3.0], &[1, 3]).unwrap();
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let low = xs.iter().filter(|&&x| x < 1.0).count() as f64 / n as f64;
        assert!((low - 0.25).abs() < 0.015);
        assert!(xs.iter().all(|&x| (0.0..=3.0).contains(&x)));
        assert!((d.mean() - (0.25 * 0.5 + 0.75 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn calibration_recovers_identifiable_combinations() {
        let truth = SkellamParams::new(4.0, 3.0, 1.5, 0.8, 0.6);
        let density = LagDensity::Gaussian { mean: 0.1, sd: 0.02 };
        let grid = [-0.6, -0.3, -0.15, -0.05, 0.0, 0.05, 0.08, 0.1, 0.12, 0.15, 0.25, 0.5, 0.9];
        let curve = model_curve(&truth, &density, &grid).unwrap();
        let init = SkellamParams::symmetric(2.0, 2.0, 0.3);
        let fit = calibrate(&curve, &density, &init).unwrap();
        assert!(!fit.degenerate);
        assert!(fit.residual_norm < 1e-7, "{fit:?}");
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        // the curve is invariant under swapping the up and down intensities
        // together with rho_plus <-> 1 - rho_plus
        let direct = rel(fit.params.up_rate(), truth.up_rate()) < 1e-3
            && rel(fit.params.down_rate(), truth.down_rate()) < 1e-3
            && rel(fit.params.rho_plus(), truth.rho_plus()) < 1e-3;
        let mirrored = rel(fit.params.up_rate(), truth.down_rate()) < 1e-3
            && rel(fit.params.down_rate(), truth.up_rate()) < 1e-3
            && rel(fit.params.rho_plus(), 1.0 - truth.rho_plus()) < 1e-3;
        assert!(direct || mirrored, "{fit:?}");
        assert!(rel(fit.params.rho_agg, truth.rho_agg) < 1e-3);
    }

    #[test]
    fn constant_curve_is_degenerate() {
        let density = LagDensity::Dirac { delta: 0.1 };
        let curve: Vec<(f64, f64)> = [-0.5, -0.2, 0.0, 0.05, 0.2, 0.4].iter().map(|&l| (l, 1.0)).collect();
        let fit = match calibrate(&curve, &density, &SkellamParams::symmetric(1.0, 1.0, 0.5)) {
            Ok(f) => f,
            Err(SkellamError::NotConverged { best }) => *best,
            Err(e) => panic!("{e}"),
        };
        assert!(fit.degenerate, "{fit:?}");
        assert!(calibrate(&curve[..3], &density, &fig10()).is_err());
    }
}
