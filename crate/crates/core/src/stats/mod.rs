//! Effect sizes and significance tests used to analyse Likert-scale study ratings:
//! one-way ANOVA with η², t-based confidence intervals, and Pearson's chi-square with
//! Cramér's V.

pub mod special;
mod study;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use study::{
    load_study_csv, summarize, Category, CategoryReport, LikertRow, LikertTable, ModeCi,
    Preference, StatsReport, StudyMode,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("contingency table: {0}")]
    Table(String),
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("duplicate rating for participant `{participant}`, {mode}, {category}")]
    Duplicate {
        participant: String,
        mode: StudyMode,
        category: Category,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult<T> {
    #[serde(rename = "F")]
    pub f: T,
    pub df1: u32,
    pub df2: u32,
    pub p: T,
    pub eta_squared: T,
    pub ss_between: T,
    pub ss_within: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub mean: T,
    pub lo: T,
    pub hi: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult<T> {
    pub chi2: T,
    pub df: u32,
    pub p: T,
    pub cramers_v: T,
    pub n: T,
}

fn mean<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |s, &v| s + v) / T::from_usize_lossy(values.len())
}

/// Classical one-way between-groups ANOVA.
///
/// When every value is identical `F` is 0 and `p` is 1. When only the within-group
/// variance vanishes `F` is infinite, `p` 0 and η² 1.
pub fn one_way_anova<T: Real, G: AsRef<[T]>>(groups: &[G]) -> Result<AnovaResult<T>, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew {
            what: "groups",
            need: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(StatsError::TooFew {
                what: "values per group",
                need: 2,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    let k = groups.len();
    let grand = groups
        .iter()
        .flat_map(|g| g.as_ref().iter())
        .fold(T::zero(), |s, &v| s + v)
        / T::from_usize_lossy(n);
    let (mut ss_between, mut ss_within) = (T::zero(), T::zero());
    for g in groups {
        let g = g.as_ref();
        let m = mean(g);
        ss_between = ss_between + T::from_usize_lossy(g.len()) * (m - grand) * (m - grand);
        ss_within = g.iter().fold(ss_within, |s, &v| s + (v - m) * (v - m));
    }
    let df1 = (k - 1) as u32;
    let df2 = (n - k) as u32;
    let (f, p, eta_squared) = if ss_between == T::zero() {
        (T::zero(), T::one(), T::zero())
    } else if ss_within == T::zero() {
        (T::infinity(), T::zero(), T::one())
    } else {
        let f = (ss_between / T::from_u32(df1).unwrap()) / (ss_within / T::from_u32(df2).unwrap());
        let p = special::f_sf(f, T::from_u32(df1).unwrap(), T::from_u32(df2).unwrap());
        (f, p, eta_squared_from_f(f, df1, df2))
    };
    Ok(AnovaResult {
        f,
        df1,
        df2,
        p,
        eta_squared,
        ss_between,
        ss_within,
    })
}

/// η² recovered from a reported F statistic: `df1·F / (df1·F + df2)`.
pub fn eta_squared_from_f<T: Real>(f: T, df1: u32, df2: u32) -> T {
    let num = T::from_u32(df1).unwrap() * f;
    if num == T::zero() {
        return T::zero();
    }
    num / (num + T::from_u32(df2).unwrap())
}

/// `P(F > f)` for an F statistic with the given degrees of freedom.
pub fn f_p_value<T: Real>(f: T, df1: u32, df2: u32) -> T {
    special::f_sf(f, T::from_u32(df1).unwrap(), T::from_u32(df2).unwrap())
}

/// `P(χ² > x)` with `df` degrees of freedom.
pub fn chi2_p_value<T: Real>(chi2: T, df: u32) -> T {
    special::chi2_sf(chi2, T::from_u32(df).unwrap())
}

/// Mean with a two-sided Student-t confidence interval at `level` (e.g. 0.95).
pub fn mean_ci<T: Real>(values: &[T], level: T) -> Result<ConfidenceInterval<T>, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            what: "values",
            need: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = T::from_usize_lossy(values.len());
    let m = mean(values);
    let var = values.iter().fold(T::zero(), |s, &v| s + (v - m) * (v - m)) / (n - T::one());
    let q = special::t_quantile((T::one() + level) / T::lit(2.0), n - T::one());
    let half = q * var.sqrt() / n.sqrt();
    Ok(ConfidenceInterval {
        mean: m,
        lo: m - half,
        hi: m + half,
    })
}

pub fn mean_ci95<T: Real>(values: &[T]) -> Result<ConfidenceInterval<T>, StatsError> {
    mean_ci(values, T::lit(0.95))
}

/// Cramér's V from a chi-square statistic, total count and table shape.
pub fn cramers_v<T: Real>(chi2: T, n: T, rows: usize, cols: usize) -> T {
    let m = T::from_usize_lossy(rows.min(cols).saturating_sub(1).max(1));
    (chi2 / (n * m)).sqrt()
}

/// Pearson chi-square test of independence on an `r × c` table of counts.
pub fn chi_square<T: Real, R: AsRef<[T]>>(table: &[R]) -> Result<ChiSquareResult<T>, StatsError> {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.as_ref().len());
    if rows < 2 || cols < 2 {
        return Err(StatsError::Table(format!("need at least 2×2, got {rows}×{cols}")));
    }
    if table.iter().any(|r| r.as_ref().len() != cols) {
        return Err(StatsError::Table("ragged rows".into()));
    }
    let cells = || table.iter().flat_map(|r| r.as_ref().iter().copied());
    if cells().any(|v| !(v.is_finite() && v >= T::zero())) {
        return Err(StatsError::Table("counts must be finite and non-negative".into()));
    }
    let row_sums: Vec<T> = table
        .iter()
        .map(|r| r.as_ref().iter().fold(T::zero(), |s, &v| s + v))
        .collect();
    let col_sums: Vec<T> = (0..cols)
        .map(|j| table.iter().fold(T::zero(), |s, r| s + r.as_ref()[j]))
        .collect();
    if row_sums.iter().chain(&col_sums).any(|&s| s == T::zero()) {
        return Err(StatsError::Table("degenerate margins: an all-zero row or column".into()));
    }
    let n = row_sums.iter().fold(T::zero(), |s, &v| s + v);
    let mut chi2 = T::zero();
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.as_ref().iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / n;
            chi2 = chi2 + (obs - expected) * (obs - expected) / expected;
        }
    }
    let df = ((rows - 1) * (cols - 1)) as u32;
    Ok(ChiSquareResult {
        chi2,
        df,
        p: chi2_p_value(chi2, df),
        cramers_v: cramers_v(chi2, n, rows, cols).min(T::one()),
        n,
    })
}
