//! Study ratings CSV (`participant,mode,category,rating`) and the summary report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{mean_ci95, one_way_anova, AnovaResult, StatsError};

/// Modes rated in the study, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyMode {
    Smooth,
    Detent,
    Spring,
}

impl StudyMode {
    pub const ALL: [StudyMode; 3] = [StudyMode::Smooth, StudyMode::Detent, StudyMode::Spring];
}

impl fmt::Display for StudyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for StudyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyMode::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Comfort,
    Flexibility,
    EaseOfControl,
    Helpfulness,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Comfort,
        Category::Flexibility,
        Category::EaseOfControl,
        Category::Helpfulness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Comfort => "comfort",
            Category::Flexibility => "flexibility",
            Category::EaseOfControl => "ease_of_control",
            Category::Helpfulness => "helpfulness",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikertRow {
    pub participant: String,
    pub mode: StudyMode,
    pub category: Category,
    pub rating: u8,
}

/// Validated ratings: each `(participant, mode, category)` at most once, ratings 1–10.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LikertTable {
    rows: Vec<LikertRow>,
    keys: BTreeSet<(String, StudyMode, Category)>,
}

impl LikertTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, row: LikertRow) -> Result<(), StatsError> {
        if !(1..=10).contains(&row.rating) {
            return Err(StatsError::Csv {
                line: 0,
                reason: format!("rating {} outside 1..=10", row.rating),
            });
        }
        let key = (row.participant.clone(), row.mode, row.category);
        if !self.keys.insert(key) {
            return Err(StatsError::Duplicate {
                participant: row.participant,
                mode: row.mode,
                category: row.category,
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[LikertRow] {
        &self.rows
    }

    pub fn ratings(&self, mode: StudyMode, category: Category) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.mode == mode && r.category == category)
            .map(|r| f64::from(r.rating))
            .collect()
    }
}

pub fn load_study_csv(bytes: &[u8]) -> Result<LikertTable, StatsError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let err = |line: u64, reason: String| StatsError::Csv { line, reason };
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["participant", "mode", "category", "rating"] {
        return Err(err(1, "expected header `participant,mode,category,rating`".into()));
    }
    let mut table = LikertTable::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(err(line, "expected 4 fields".into()));
        }
        let rating: u8 = record[3]
            .parse()
            .map_err(|_| err(line, format!("bad rating `{}`", &record[3])))?;
        let row = LikertRow {
            participant: record[0].to_owned(),
            mode: record[1].parse().map_err(|e| err(line, e))?,
            category: record[2].parse().map_err(|e| err(line, e))?,
            rating,
        };
        table.insert(row).map_err(|e| match e {
            StatsError::Csv { reason, .. } => err(line, reason),
            other => other,
        })?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCi {
    pub mode: StudyMode,
    pub n: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: Category,
    pub anova: AnovaResult<f64>,
    pub ci95: Vec<ModeCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub participant: String,
    pub mode: StudyMode,
    /// Mean rating of the preferred mode across the categories rated.
    pub mean: f64,
    /// Other modes with the same mean, if any; the tie went to the earliest mode.
    pub tied_with: Vec<StudyMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub participants: usize,
    pub categories: Vec<CategoryReport>,
    pub preferences: Vec<Preference>,
    pub preferred_counts: BTreeMap<StudyMode, usize>,
}

/// Per-category ANOVA across modes, per-mode 95% CIs, and each participant's preferred mode.
///
/// Categories with no ratings are left out of the report.
pub fn summarize(table: &LikertTable) -> Result<StatsReport, StatsError> {
    let mut categories = Vec::new();
    for category in Category::ALL {
        let groups: Vec<Vec<f64>> = StudyMode::ALL
            .iter()
            .map(|&m| table.ratings(m, category))
            .collect();
        if groups.iter().all(Vec::is_empty) {
            continue;
        }
        let anova = one_way_anova(&groups)?;
        let ci95 = StudyMode::ALL
            .iter()
            .zip(&groups)
            .map(|(&mode, g)| {
                mean_ci95(g).map(|ci| ModeCi {
                    mode,
                    n: g.len(),
                    mean: ci.mean,
                    lo: ci.lo,
                    hi: ci.hi,
                })
            })
            .collect::<Result<_, _>>()?;
        categories.push(CategoryReport {
            category,
            anova,
            ci95,
        });
    }

    let mut per_participant: BTreeMap<&str, BTreeMap<StudyMode, (f64, usize)>> = BTreeMap::new();
    for r in table.rows() {
        let e = per_participant
            .entry(r.participant.as_str())
            .or_default()
            .entry(r.mode)
            .or_default();
        e.0 += f64::from(r.rating);
        e.1 += 1;
    }
    let mut preferred_counts: BTreeMap<StudyMode, usize> =
        StudyMode::ALL.iter().map(|&m| (m, 0)).collect();
    let preferences: Vec<Preference> = per_participant
        .into_iter()
        .map(|(participant, modes)| {
            let means: Vec<(StudyMode, f64)> = modes
                .into_iter()
                .map(|(m, (sum, n))| (m, sum / n as f64))
                .collect();
            let best = means.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
            let mut top = means.iter().filter(|&&(_, v)| v == best).map(|&(m, _)| m);
            let mode = top.next().expect("participant has at least one rating");
            *preferred_counts.entry(mode).or_default() += 1;
            Preference {
                participant: participant.to_owned(),
                mode,
                mean: best,
                tied_with: top.collect(),
            }
        })
        .collect();

    Ok(StatsReport {
        participants: preferences.len(),
        categories,
        preferences,
        preferred_counts,
    })
}
