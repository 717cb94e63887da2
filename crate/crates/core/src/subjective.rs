//! Pairwise forced-choice preference study: tallies per dimension and an
//! exact one-tailed binomial test against a fair coin.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Plausible,
    SinglePlot,
    MakesSense,
    Quality,
    Enjoyable,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Plausible,
        Dimension::SinglePlot,
        Dimension::MakesSense,
        Dimension::Quality,
        Dimension::Enjoyable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Plausible => "plausible",
            Dimension::SinglePlot => "single_plot",
            Dimension::MakesSense => "makes_sense",
            Dimension::Quality => "quality",
            Dimension::Enjoyable => "enjoyable",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Plausible => "Plausible",
            Dimension::SinglePlot => "Single plot",
            Dimension::MakesSense => "Makes sense",
            Dimension::Quality => "Quality",
            Dimension::Enjoyable => "Enjoyable",
        }
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInfo {
    #[serde(rename = "A")]
    pub a: String,
    #[serde(rename = "B")]
    pub b: String,
    #[serde(rename = "story_A", default)]
    pub story_a: Option<String>,
    #[serde(rename = "story_B", default)]
    pub story_b: Option<String>,
}

pub type PairsManifest = BTreeMap<String, PairInfo>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseRecord {
    pub participant_id: String,
    pub pair_id: String,
    pub dimension: Dimension,
    pub chosen_system_id: String,
}

pub type Counts = BTreeMap<Dimension, BTreeMap<String, u64>>;

pub fn read_pairs(path: &Path) -> Result<PairsManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

#[derive(Deserialize)]
struct CsvRow {
    participant_id: String,
    pair_id: String,
    dimension: String,
    choice: String,
    #[serde(default)]
    eliminated: Option<String>,
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(format!("eliminated must be a boolean, got {other:?}")),
    }
}

/// Reads `participant_id,pair_id,dimension,choice[,eliminated]`, resolving
/// choice A/B through `pairs`. Rows flagged eliminated are dropped.
pub fn read_records_csv<R: Read>(input: R, pairs: &PairsManifest) -> Result<Vec<PairwiseRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match row.eliminated.as_deref().map(flag).transpose() {
            Ok(Some(true)) => continue,
            Ok(_) => {}
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        }
        let dimension = match row.dimension.parse::<Dimension>() {
            Ok(d) => d,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let Some(pair) = pairs.get(&row.pair_id) else {
            problems.push(format!("line {line}: unknown pair_id {:?}", row.pair_id));
            continue;
        };
        let chosen = match row.choice.as_str() {
            "A" => pair.a.clone(),
            "B" => pair.b.clone(),
            other => {
                problems.push(format!("line {line}: choice must be A or B, got {other:?}"));
                continue;
            }
        };
        out.push(PairwiseRecord {
            participant_id: row.participant_id,
            pair_id: row.pair_id,
            dimension,
            chosen_system_id: chosen,
        });
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Ingest { problems })
    }
}

/// Every dimension appears in the result, with a zero for every system
/// named in `pairs`.
pub fn tally(records: &[PairwiseRecord], pairs: &PairsManifest) -> Result<Counts> {
    let systems: BTreeSet<&str> = pairs
        .values()
        .flat_map(|p| [p.a.as_str(), p.b.as_str()])
        .collect();
    let mut counts: Counts = Dimension::ALL
        .into_iter()
        .map(|d| (d, systems.iter().map(|s| (s.to_string(), 0)).collect()))
        .collect();
    let mut problems = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let Some(pair) = pairs.get(&r.pair_id) else {
            problems.push(format!("record {}: unknown pair_id {:?}", i + 1, r.pair_id));
            continue;
        };
        if r.chosen_system_id != pair.a && r.chosen_system_id != pair.b {
            problems.push(format!(
                "record {}: chose {:?}, which is not in pair {:?}",
                i + 1,
                r.chosen_system_id,
                r.pair_id
            ));
            continue;
        }
        *counts
            .get_mut(&r.dimension)
            .expect("all dimensions present")
            .get_mut(&r.chosen_system_id)
            .expect("system listed in manifest") += 1;
    }
    if problems.is_empty() {
        Ok(counts)
    } else {
        Err(Error::Ingest { problems })
    }
}

/// `n!/(k!(n-k)!)` for every k in `0..=n`.
fn binomial_row(n: u64) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::from(1u32);
    for k in 0..=n {
        row.push(c.clone());
        c = c * (n - k) / (k + 1);
    }
    row
}

/// `num / 2^n` rounded to f64 from the top 64 bits of `num`.
fn ratio_pow2(num: &BigUint, n: u64) -> f64 {
    let bits = num.bits();
    let shift = bits.saturating_sub(64);
    let top = (num >> shift).to_u64_digits().first().copied().unwrap_or(0);
    let exp = shift as i64 - n as i64;
    top as f64 * 2f64.powi(exp.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

/// Exact `P(X >= wins)` for `X ~ Binomial(total, 1/2)`. Binomial
/// coefficients are summed as integers and divided once at the end.
pub fn binomial_p_one_tailed(wins: u64, total: u64) -> f64 {
    assert!(total >= 1 && wins <= total, "need 0 <= wins <= total and total >= 1");
    let tail: BigUint = binomial_row(total).into_iter().skip(wins as usize).sum();
    ratio_pow2(&tail, total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub dimension: Dimension,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub treatment_wins: u64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub treatment: String,
    pub rows: Vec<DimensionRow>,
}

pub fn report(counts: &Counts, treatment: &str) -> Result<PairwiseReport> {
    let mut rows = Vec::new();
    for (&dimension, per_system) in counts {
        if !per_system.contains_key(treatment) {
            return Err(Error::Validation(format!(
                "treatment system {treatment:?} does not appear in the pairs"
            )));
        }
        let total: u64 = per_system.values().sum();
        let wins = per_system[treatment];
        // With no responses the tail is the whole distribution.
        let p_value = if total == 0 { 1.0 } else { binomial_p_one_tailed(wins, total) };
        rows.push(DimensionRow {
            dimension,
            counts: per_system.clone(),
            total,
            treatment_wins: wins,
            p_value,
        });
    }
    Ok(PairwiseReport {
        treatment: treatment.to_string(),
        rows,
    })
}

impl PairwiseReport {
    /// Fixed-width table: one row per dimension, treatment column first.
    pub fn to_table(&self) -> String {
        let mut systems: Vec<&str> = vec![self.treatment.as_str()];
        if let Some(row) = self.rows.first() {
            systems.extend(row.counts.keys().map(String::as_str).filter(|s| *s != self.treatment));
        }
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "Question");
        for s in &systems {
            let _ = write!(out, " | {s:>8}");
        }
        let _ = writeln!(out, " | {:>7}", "p-value");
        let width = out.trim_end().len();
        let _ = writeln!(out, "{}", "-".repeat(width));
        for row in &self.rows {
            let _ = write!(out, "{:<12}", row.dimension.label());
            for s in &systems {
                let _ = write!(out, " | {:>8}", row.counts.get(*s).copied().unwrap_or(0));
            }
            let _ = writeln!(out, " | {:>7.3}", row.p_value);
        }
        out
    }
}
