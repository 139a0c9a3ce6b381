//! Derivation of exogenous model inputs from stage-, sex-, and
//! histology-specific tables in the MISCAN-Lung style: stage-aggregated
//! test sensitivities, and overall / early- / advanced-stage mean sojourn
//! times from per-stage dwell times and stage-transition probabilities.
//!
//! Stages follow the AJCC7 progression chain IA -> IB -> II -> IIIA ->
//! IIIB -> IV; "early" aggregates IA-II and "advanced" IIIA-IV.

use std::collections::BTreeMap;
use std::io::Read;

use crate::error::{Error, Result};

pub const STAGES: [&str; 6] = ["IA", "IB", "II", "IIIA", "IIIB", "IV"];
pub const EARLY_STAGES: [&str; 3] = ["IA", "IB", "II"];
pub const ADVANCED_STAGES: [&str; 3] = ["IIIA", "IIIB", "IV"];
/// Transitions between successive stages, in chain order.
pub const TRANSITIONS: [(&str, &str); 5] = [
    ("IA", "IB"),
    ("IB", "II"),
    ("II", "IIIA"),
    ("IIIA", "IIIB"),
    ("IIIB", "IV"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageGroup {
    Early,
    Advanced,
}

impl StageGroup {
    pub fn stages(&self) -> &'static [&'static str] {
        match self {
            StageGroup::Early => &EARLY_STAGES,
            StageGroup::Advanced => &ADVANCED_STAGES,
        }
    }
}

/// Histology mix and per-group stage proportions.
#[derive(Debug, Clone)]
pub struct StageHistologyWeights {
    /// Histology shares of diagnoses; must sum to 1 within rounding.
    pub shares: BTreeMap<String, f64>,
    /// `(group, histology) -> (stage -> proportion)`. Columns may be off by
    /// rounding in the source tables and are renormalized before use.
    pub proportions: BTreeMap<(String, String), BTreeMap<String, f64>>,
}

impl StageHistologyWeights {
    pub fn validate(&self) -> Result<()> {
        let share_sum: f64 = self.shares.values().sum();
        if (share_sum - 1.0).abs() > 0.02 {
            return Err(Error::InvalidParameter(format!(
                "histology shares sum to {share_sum}, expected ~1"
            )));
        }
        for ((group, histology), column) in &self.proportions {
            let sum: f64 = column.values().sum();
            if (sum - 1.0).abs() > 0.02 {
                return Err(Error::InvalidParameter(format!(
                    "stage proportions for {group}/{histology} sum to {sum}, expected ~1"
                )));
            }
        }
        Ok(())
    }

    fn column(&self, group: StageGroup, histology: &str) -> Result<&BTreeMap<String, f64>> {
        let key = (group_label(group).to_string(), histology.to_string());
        self.proportions
            .get(&key)
            .ok_or_else(|| Error::MissingCell(format!("stage proportions for {histology} ({:?})", group)))
    }
}

fn group_label(group: StageGroup) -> &'static str {
    match group {
        StageGroup::Early => "early",
        StageGroup::Advanced => "advanced",
    }
}

/// Per-stage, per-histology test sensitivities (fractions in [0, 1]).
#[derive(Debug, Clone)]
pub struct SensitivityTable {
    /// `(stage, histology) -> sensitivity`.
    pub cells: BTreeMap<(String, String), f64>,
}

impl SensitivityTable {
    fn cell(&self, stage: &str, histology: &str) -> Result<f64> {
        self.cells
            .get(&(stage.to_string(), histology.to_string()))
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("sensitivity for stage {stage}, histology {histology}")))
    }
}

/// Stage-aggregated sensitivity: within each histology, a weighted mean
/// over the group's stages using the diagnosis proportions (renormalized);
/// then a weighted mean over histologies using the histology shares.
pub fn weighted_sensitivity(
    sens: &SensitivityTable,
    weights: &StageHistologyWeights,
    group: StageGroup,
) -> Result<f64> {
    weights.validate()?;
    let mut total = 0.0;
    let mut share_sum = 0.0;
    for (histology, &share) in &weights.shares {
        let column = weights.column(group, histology)?;
        let mut col_sum = 0.0;
        let mut acc = 0.0;
        for stage in group.stages() {
            let weight = column.get(*stage).copied().ok_or_else(|| {
                Error::MissingCell(format!("proportion for stage {stage}, histology {histology}"))
            })?;
            acc += weight * sens.cell(stage, histology)?;
            col_sum += weight;
        }
        if col_sum <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stage proportions for {histology} are all zero"
            )));
        }
        total += share * (acc / col_sum);
        share_sum += share;
    }
    Ok(total / share_sum)
}

/// Per-histology mean sojourn time per stage and transition probabilities
/// between successive stages.
#[derive(Debug, Clone)]
pub struct StageChain {
    /// `(stage, histology) -> mean sojourn time in years`.
    pub mean_sojourn: BTreeMap<(String, String), f64>,
    /// `(from_stage, histology) -> probability of progressing to the next
    /// stage in the chain`.
    pub transition: BTreeMap<(String, String), f64>,
    /// Histology shares used for the weighted summary.
    pub shares: BTreeMap<String, f64>,
}

impl StageChain {
    fn mst(&self, stage: &str, histology: &str) -> Result<f64> {
        self.mean_sojourn
            .get(&(stage.to_string(), histology.to_string()))
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("mean sojourn time for stage {stage}, histology {histology}")))
    }

    fn step(&self, from: &str, histology: &str) -> Result<f64> {
        self.transition
            .get(&(from.to_string(), histology.to_string()))
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("transition probability from stage {from}, histology {histology}")))
    }
}

fn stage_index(stage: &str) -> Result<usize> {
    STAGES
        .iter()
        .position(|s| *s == stage)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {stage:?}")))
}

/// Probability of ever reaching `to_stage` from `from_stage` for one
/// histology: the product of the successive transition probabilities along
/// the chain. An empty path (same stage) has probability 1.
pub fn chain_reach_probability(
    chain: &StageChain,
    histology: &str,
    from_stage: &str,
    to_stage: &str,
) -> Result<f64> {
    let from = stage_index(from_stage)?;
    let to = stage_index(to_stage)?;
    if to < from {
        return Err(Error::InvalidArgument(format!(
            "stage {to_stage} is upstream of {from_stage}"
        )));
    }
    let mut prob = 1.0;
    for step in from..to {
        prob *= chain.step(STAGES[step], histology)?;
    }
    Ok(prob)
}

/// Sojourn-time summary for one histology or the share-weighted mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SojournInputs {
    pub omst: f64,
    pub emst: f64,
    pub lmst: f64,
}

/// Derives overall, early-, and advanced-stage mean sojourn times for each
/// histology, plus the share-weighted summary.
///
/// The early-stage sum runs over IA, IB, II conditional on starting in IA.
/// The overall sum extends it with the advanced stages, expanding stage III
/// occupancy into the IIIA -> IIIB sub-chain. The advanced-stage time
/// conditions on entering IIIA.
pub fn derive_sojourn_inputs(
    chain: &StageChain,
) -> Result<(BTreeMap<String, SojournInputs>, SojournInputs)> {
    let mut per_histology = BTreeMap::new();
    for histology in chain.shares.keys() {
        let reach = |to: &str| chain_reach_probability(chain, histology, "IA", to);

        let emst = chain.mst("IA", histology)?
            + reach("IB")? * chain.mst("IB", histology)?
            + reach("II")? * chain.mst("II", histology)?;

        let omst = emst
            + reach("IIIA")?
                * (chain.mst("IIIA", histology)?
                    + chain.step("IIIA", histology)? * chain.mst("IIIB", histology)?)
            + reach("IV")? * chain.mst("IV", histology)?;

        let lmst = chain.mst("IIIA", histology)?
            + chain.step("IIIA", histology)? * chain.mst("IIIB", histology)?
            + chain.step("IIIA", histology)? * chain.step("IIIB", histology)?
                * chain.mst("IV", histology)?;

        per_histology.insert(histology.clone(), SojournInputs { omst, emst, lmst });
    }

    let share_sum: f64 = chain.shares.values().sum();
    let mut weighted = SojournInputs { omst: 0.0, emst: 0.0, lmst: 0.0 };
    for (histology, inputs) in &per_histology {
        let w = chain.shares[histology] / share_sum;
        weighted.omst += w * inputs.omst;
        weighted.emst += w * inputs.emst;
        weighted.lmst += w * inputs.lmst;
    }
    Ok((per_histology, weighted))
}

/// Averages two sex-specific mean-sojourn tables into one, weighting the
/// first by `first_share`.
pub fn average_sexes(
    first: &BTreeMap<(String, String), f64>,
    second: &BTreeMap<(String, String), f64>,
    first_share: f64,
) -> Result<BTreeMap<(String, String), f64>> {
    if !(0.0..=1.0).contains(&first_share) {
        return Err(Error::InvalidArgument(format!(
            "sex share must lie in [0, 1], got {first_share}"
        )));
    }
    let mut out = BTreeMap::new();
    for (key, &a) in first {
        let b = second
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("{key:?} missing from second table")))?;
        out.insert(key.clone(), first_share * a + (1.0 - first_share) * b);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV ingestion for the four table layouts.
// ---------------------------------------------------------------------------

fn read_csv<R: Read>(source: R, what: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: None, msg: format!("{what}: {e}") })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: Some(idx + 1),
            msg: format!("{what}: {e}"),
        })?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

fn parse_value(what: &str, row: usize, text: &str) -> Result<f64> {
    text.parse::<f64>().map_err(|_| Error::Parse {
        row: Some(row),
        msg: format!("{what}: cannot parse value {text:?}"),
    })
}

/// Reads histology shares: columns `histology, share`.
pub fn load_histology_shares<R: Read>(source: R) -> Result<BTreeMap<String, f64>> {
    let (headers, rows) = read_csv(source, "histology shares")?;
    if headers != ["histology", "share"] {
        return Err(Error::Parse {
            row: None,
            msg: format!("histology shares header must be [histology, share], got {headers:?}"),
        });
    }
    let mut shares = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        shares.insert(row[0].clone(), parse_value("share", idx + 1, &row[1])?);
    }
    Ok(shares)
}

/// Reads stage-by-histology diagnosis proportions: columns
/// `stage_group, stage, <histology...>`.
pub fn load_stage_proportions<R: Read>(
    source: R,
    shares: &BTreeMap<String, f64>,
) -> Result<StageHistologyWeights> {
    let (headers, rows) = read_csv(source, "stage proportions")?;
    if headers.len() < 3 || headers[0] != "stage_group" || headers[1] != "stage" {
        return Err(Error::Parse {
            row: None,
            msg: format!("stage proportions header must start with [stage_group, stage], got {headers:?}"),
        });
    }
    let histologies = &headers[2..];
    let mut proportions: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        for (col, histology) in histologies.iter().enumerate() {
            let value = parse_value("proportion", idx + 1, &row[2 + col])?;
            proportions
                .entry((row[0].clone(), histology.clone()))
                .or_default()
                .insert(row[1].clone(), value);
        }
    }
    let weights = StageHistologyWeights {
        shares: shares.clone(),
        proportions,
    };
    weights.validate()?;
    Ok(weights)
}

/// Reads per-stage sensitivities for one test and stage group: columns
/// `stage, <histology...>`; values are percentages.
pub fn load_sensitivities<R: Read>(source: R) -> Result<SensitivityTable> {
    let (headers, rows) = read_csv(source, "sensitivities")?;
    if headers.len() < 2 || headers[0] != "stage" {
        return Err(Error::Parse {
            row: None,
            msg: format!("sensitivity header must start with [stage], got {headers:?}"),
        });
    }
    let histologies = &headers[1..];
    let mut cells = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        for (col, histology) in histologies.iter().enumerate() {
            let pct = parse_value("sensitivity", idx + 1, &row[1 + col])?;
            cells.insert((row[0].clone(), histology.clone()), pct / 100.0);
        }
    }
    Ok(SensitivityTable { cells })
}

/// Reads per-stage mean sojourn times: columns `stage, <histology...>`.
pub fn load_mean_sojourn<R: Read>(source: R) -> Result<BTreeMap<(String, String), f64>> {
    let (headers, rows) = read_csv(source, "mean sojourn times")?;
    if headers.len() < 2 || headers[0] != "stage" {
        return Err(Error::Parse {
            row: None,
            msg: format!("mean sojourn header must start with [stage], got {headers:?}"),
        });
    }
    let histologies = &headers[1..];
    let mut out = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        for (col, histology) in histologies.iter().enumerate() {
            out.insert(
                (row[0].clone(), histology.clone()),
                parse_value("mean sojourn time", idx + 1, &row[1 + col])?,
            );
        }
    }
    Ok(out)
}

/// Reads stage-transition probabilities: columns
/// `from_stage, to_stage, <histology...>`.
pub fn load_transitions<R: Read>(source: R) -> Result<BTreeMap<(String, String), f64>> {
    let (headers, rows) = read_csv(source, "stage transitions")?;
    if headers.len() < 3 || headers[0] != "from_stage" || headers[1] != "to_stage" {
        return Err(Error::Parse {
            row: None,
            msg: format!(
                "transition header must start with [from_stage, to_stage], got {headers:?}"
            ),
        });
    }
    let histologies = &headers[2..];
    let mut out = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        for (col, histology) in histologies.iter().enumerate() {
            out.insert(
                (row[0].clone(), histology.clone()),
                parse_value("transition probability", idx + 1, &row[2 + col])?,
            );
        }
    }
    Ok(out)
}
