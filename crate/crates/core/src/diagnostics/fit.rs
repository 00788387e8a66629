use serde::{Serialize, Serializer};

use super::DiagnosticsRecord;
use crate::error::{Error, Result};

/// Fewest samples accepted by [`growth_fit`].
pub const MIN_FIT_SAMPLES: usize = 10;

/// Cumulative integrals with a sublinear growth bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthQuantity {
    /// `int_0^T int |u - mu|`
    UDevL1,
    /// `int_0^T int |grad u|^2 / u`
    FisherU,
    /// `int_0^T int |D^2 v|^2`
    HessVSq,
    /// `int_0^T int u/(1+eps u) |grad v|^2 / v`
    WeightedGradV,
}

impl GrowthQuantity {
    pub const ALL: [GrowthQuantity; 4] =
        [GrowthQuantity::UDevL1, GrowthQuantity::FisherU, GrowthQuantity::HessVSq, GrowthQuantity::WeightedGradV];

    pub fn name(self) -> &'static str {
        match self {
            GrowthQuantity::UDevL1 => "cum_u_dev_l1",
            GrowthQuantity::FisherU => "cum_fisher_u",
            GrowthQuantity::HessVSq => "cum_hess_v_sq",
            GrowthQuantity::WeightedGradV => "cum_weighted_grad_v",
        }
    }

    /// Asymptotic exponent the bound allows.
    pub fn predicted_exponent(self) -> f64 {
        match self {
            GrowthQuantity::UDevL1 => 0.75,
            _ => 0.5,
        }
    }

    pub fn value(self, r: &DiagnosticsRecord) -> f64 {
        match self {
            GrowthQuantity::UDevL1 => r.cum_u_dev_l1,
            GrowthQuantity::FisherU => r.cum_fisher_u,
            GrowthQuantity::HessVSq => r.cum_hess_v_sq,
            GrowthQuantity::WeightedGradV => r.cum_weighted_grad_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    /// Every sample in the window is zero; no exponent exists.
    QuantityZero,
}

/// `Q(T) ~ C T^beta` by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub window: [f64; 2],
    pub samples: usize,
    pub status: FitStatus,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    /// Root-mean-square residual of `ln Q`.
    pub residual: Option<f64>,
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub(crate) fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

/// Fit a power law to `(t, q)` samples with `t` in `window`.
pub fn fit_power_law(t: &[f64], q: &[f64], window: [f64; 2]) -> Result<GrowthFit> {
    let (ts, qs): (Vec<f64>, Vec<f64>) =
        t.iter().zip(q).filter(|(t, _)| **t > 0.0 && **t >= window[0] && **t <= window[1]).map(|(a, b)| (*a, *b)).unzip();
    if ts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Precondition(format!(
            "fit window [{}, {}] holds {} samples, need at least {MIN_FIT_SAMPLES}",
            window[0],
            window[1],
            ts.len()
        )));
    }
    if qs.iter().all(|&x| x == 0.0) {
        return Ok(GrowthFit { window, samples: ts.len(), status: FitStatus::QuantityZero, beta: None, c: None, residual: None });
    }
    if let Some(bad) = qs.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Precondition(format!("power-law fit needs positive samples, found {bad}")));
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = qs.iter().map(|q| q.ln()).collect();
    let (a, b, res) = line_fit(&lx, &ly);
    Ok(GrowthFit { window, samples: ts.len(), status: FitStatus::Ok, beta: Some(b), c: Some(a.exp()), residual: Some(res) })
}

pub fn growth_fit(records: &[DiagnosticsRecord], quantity: GrowthQuantity, window: [f64; 2]) -> Result<GrowthFit> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let q: Vec<f64> = records.iter().map(|r| quantity.value(r)).collect();
    fit_power_law(&t, &q, window)
}

/// First time a series drops below a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PassageTime {
    Reached(f64),
    NotReached,
}

impl Serialize for PassageTime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PassageTime::Reached(t) => s.serialize_f64(*t),
            PassageTime::NotReached => s.serialize_str("not reached by t_end"),
        }
    }
}

impl PassageTime {
    pub fn time(self) -> Option<f64> {
        match self {
            PassageTime::Reached(t) => Some(t),
            PassageTime::NotReached => None,
        }
    }
}

/// The crossing between two samples is interpolated linearly in `ln value`,
/// which is exact for exponential decay.
pub fn first_passage(t: &[f64], values: &[f64], threshold: f64) -> PassageTime {
    let Some(k) = values.iter().position(|v| *v < threshold) else {
        return PassageTime::NotReached;
    };
    if k == 0 {
        return PassageTime::Reached(t[0]);
    }
    let (qa, qb) = (values[k - 1], values[k]);
    if qb > 0.0 && qa > qb {
        let s = (qa.ln() - threshold.ln()) / (qa.ln() - qb.ln());
        PassageTime::Reached(t[k - 1] + s * (t[k] - t[k - 1]))
    } else {
        PassageTime::Reached(t[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPassage {
    pub threshold: f64,
    pub u_dev_linf: PassageTime,
    pub v_linf: PassageTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub mu: f64,
    pub t: Vec<f64>,
    pub u_dev_linf: Vec<f64>,
    pub v_linf: Vec<f64>,
    /// Decay rate of `max v` fitted over the last decade of its values.
    pub v_rate: f64,
    pub v_rate_window: [f64; 2],
    pub v_rate_residual: f64,
    pub passages: Vec<ThresholdPassage>,
}

pub const PASSAGE_THRESHOLDS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Time series, exponential decay rate of `max v`, and first-passage times.
/// The rate is fitted to `ln max v` over the records whose value lies within
/// one decade of the final value.
pub fn convergence_report(records: &[DiagnosticsRecord], mu: f64) -> Result<ConvergenceReport> {
    let first = records.first().ok_or_else(|| Error::Precondition("empty trajectory".into()))?;
    let last = records.last().unwrap();
    if !(last.v_linf < 0.5 * first.v_linf) {
        return Err(Error::Precondition(format!(
            "max v fell only from {} to {}; run longer before fitting a rate",
            first.v_linf, last.v_linf
        )));
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let u_dev_linf: Vec<f64> = records.iter().map(|r| r.u_dev_linf).collect();
    let v_linf: Vec<f64> = records.iter().map(|r| r.v_linf).collect();
    let start = v_linf.iter().position(|&v| v <= 10.0 * last.v_linf).unwrap();
    let (tx, ly): (Vec<f64>, Vec<f64>) = t[start..].iter().zip(&v_linf[start..]).map(|(t, v)| (*t, v.ln())).unzip();
    if tx.len() < 3 {
        return Err(Error::Precondition(format!("only {} records in the final decade of max v", tx.len())));
    }
    let (_, slope, res) = line_fit(&tx, &ly);
    let passages = PASSAGE_THRESHOLDS
        .iter()
        .map(|&thr| ThresholdPassage {
            threshold: thr,
            u_dev_linf: first_passage(&t, &u_dev_linf, thr),
            v_linf: first_passage(&t, &v_linf, thr),
        })
        .collect();
    Ok(ConvergenceReport {
        mu,
        v_rate: -slope,
        v_rate_window: [tx[0], *tx.last().unwrap()],
        v_rate_residual: res,
        t,
        u_dev_linf,
        v_linf,
        passages,
    })
}
