//! Empirical estimate records shared by the fitting and probing routines.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InequalityId {
    #[serde(rename = "G-bound")]
    GBound,
    #[serde(rename = "g2-bound")]
    G2Bound,
    #[serde(rename = "Gd-bound")]
    GdBound,
    #[serde(rename = "log-bound")]
    LogBound,
    #[serde(rename = "S-first")]
    SFirst,
    #[serde(rename = "S-second")]
    SSecond,
    #[serde(rename = "gradS")]
    GradS,
    #[serde(rename = "K-bound")]
    KBound,
    #[serde(rename = "ee-bound")]
    EeBound,
    #[serde(rename = "pq-bound")]
    PqBound,
    #[serde(rename = "uniform-bound")]
    UniformBound,
    #[serde(rename = "t2-ratio")]
    T2Ratio,
    #[serde(rename = "projection-bound")]
    ProjectionBound,
}

impl InequalityId {
    pub const ALL: [InequalityId; 13] = [
        Self::GBound,
        Self::G2Bound,
        Self::GdBound,
        Self::LogBound,
        Self::SFirst,
        Self::SSecond,
        Self::GradS,
        Self::KBound,
        Self::EeBound,
        Self::PqBound,
        Self::UniformBound,
        Self::T2Ratio,
        Self::ProjectionBound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GBound => "G-bound",
            Self::G2Bound => "g2-bound",
            Self::GdBound => "Gd-bound",
            Self::LogBound => "log-bound",
            Self::SFirst => "S-first",
            Self::SSecond => "S-second",
            Self::GradS => "gradS",
            Self::KBound => "K-bound",
            Self::EeBound => "ee-bound",
            Self::PqBound => "pq-bound",
            Self::UniformBound => "uniform-bound",
            Self::T2Ratio => "t2-ratio",
            Self::ProjectionBound => "projection-bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Empirical constant fitted for one inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub inequality: InequalityId,
    pub domain: String,
    pub samples: usize,
    /// Empirical supremum at the largest sample size or finest grid.
    pub supremum: f64,
    /// Supremum at half the samples or the coarser grid.
    pub baseline_supremum: Option<f64>,
    /// `supremum / baseline_supremum`.
    pub stability_ratio: Option<f64>,
    /// Log–log slope of the radial profile, where one was fitted.
    pub slope: Option<f64>,
    /// Points realizing the supremum, as `[re, im]` pairs.
    pub argmax: Vec<[f64; 2]>,
    pub extra: BTreeMap<String, f64>,
    pub grid: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(inequality: InequalityId, domain: impl Into<String>) -> Self {
        Self {
            inequality,
            domain: domain.into(),
            samples: 0,
            supremum: 0.0,
            baseline_supremum: None,
            stability_ratio: None,
            slope: None,
            argmax: Vec::new(),
            extra: BTreeMap::new(),
            grid: BTreeMap::new(),
        }
    }

    pub fn set_stability(&mut self, baseline: f64) {
        self.baseline_supremum = Some(baseline);
        self.stability_ratio = Some(stability_ratio(baseline, self.supremum));
    }

    pub fn set_argmax(&mut self, points: &[Complex64]) {
        self.argmax = points.iter().map(|z| [z.re, z.im]).collect();
    }

    /// True when the stability ratio lies within `1 ± tol`.
    pub fn is_stable(&self, tol: f64) -> bool {
        self.stability_ratio.is_some_and(|r| (r - 1.0).abs() <= tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `fine / coarse`, with `0/0` read as 1.
pub fn stability_ratio(coarse: f64, fine: f64) -> f64 {
    if coarse == 0.0 && fine == 0.0 {
        1.0
    } else {
        fine / coarse
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Running supremum together with the sample that attained it.
#[derive(Debug, Clone, Default)]
pub(crate) struct SupTracker {
    pub value: f64,
    pub at: Vec<Complex64>,
}

impl SupTracker {
    pub fn offer(&mut self, v: f64, at: &[Complex64]) {
        if v.is_finite() && (v > self.value || self.at.is_empty()) {
            self.value = v;
            self.at = at.to_vec();
        }
    }
}
