//! Incidence table ingestion and validation.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

const EXPECTED_HEADER: [&str; 5] = [
    "age_lo",
    "age_hi",
    "early_count",
    "advanced_count",
    "person_years",
];

/// One five-year age group (the terminal group may be wider, covering the
/// open-ended tail).
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceRow {
    pub age_lo: f64,
    pub age_hi: f64,
    /// Observed early-stage clinical diagnoses in the group.
    pub early_count: u64,
    /// Observed advanced-stage clinical diagnoses in the group.
    pub advanced_count: u64,
    /// Population exposure underlying the counts.
    pub person_years: f64,
}

impl IncidenceRow {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.age_lo + self.age_hi)
    }
}

/// Observed early/advanced diagnosis counts and person-years by age group.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceTable {
    rows: Vec<IncidenceRow>,
}

impl IncidenceTable {
    pub fn new(rows: Vec<IncidenceRow>) -> Result<Self> {
        let table = IncidenceTable { rows };
        table.validate()?;
        Ok(table)
    }

    pub fn rows(&self) -> &[IncidenceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Midpoint ages of the groups, used as hazard evaluation points.
    pub fn midpoints(&self) -> Vec<f64> {
        self.rows.iter().map(IncidenceRow::midpoint).collect()
    }

    pub fn total_counts(&self) -> (u64, u64) {
        let early = self.rows.iter().map(|r| r.early_count).sum();
        let advanced = self.rows.iter().map(|r| r.advanced_count).sum();
        (early, advanced)
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Parse {
                row: None,
                msg: "incidence table has no rows".into(),
            });
        }
        for (idx, row) in self.rows.iter().enumerate() {
            let rownum = idx + 1;
            if !(row.age_lo.is_finite() && row.age_hi.is_finite()) || row.age_lo < 0.0 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("invalid age bounds [{}, {})", row.age_lo, row.age_hi),
                });
            }
            if row.age_hi <= row.age_lo {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: "age_hi must exceed age_lo".into(),
                });
            }
            let width = row.age_hi - row.age_lo;
            let is_last = idx + 1 == self.rows.len();
            if !is_last && (width - 5.0).abs() > 1e-9 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("age group width must be 5 years, got {width}"),
                });
            }
            if is_last && width < 5.0 - 1e-9 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("terminal age group must span at least 5 years, got {width}"),
                });
            }
            if !(row.person_years.is_finite() && row.person_years >= 0.0) {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("person_years must be non-negative, got {}", row.person_years),
                });
            }
            if (row.early_count > 0 || row.advanced_count > 0) && row.person_years <= 0.0 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: "person_years must be positive where counts are positive".into(),
                });
            }
        }
        for (idx, pair) in self.rows.windows(2).enumerate() {
            if (pair[1].age_lo - pair[0].age_hi).abs() > 1e-9 {
                return Err(Error::Parse {
                    row: Some(idx + 2),
                    msg: format!(
                        "age groups must be contiguous: group ending at {} followed by group starting at {}",
                        pair[0].age_hi, pair[1].age_lo
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated incidence table.
///
/// The header must contain exactly the columns `age_lo, age_hi, early_count,
/// advanced_count, person_years`; lines starting with `#` are comments.
pub fn load_incidence<R: Read>(source: R) -> Result<IncidenceTable> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: None,
            msg: format!("cannot read header: {e}"),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != EXPECTED_HEADER {
        return Err(Error::Parse {
            row: None,
            msg: format!(
                "header must be exactly {:?}, got {:?}",
                EXPECTED_HEADER, names
            ),
        });
    }

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let rownum = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row: Some(rownum),
            msg: e.to_string(),
        })?;
        let field = |pos: usize| -> Result<f64> {
            record[pos].parse::<f64>().map_err(|_| Error::Parse {
                row: Some(rownum),
                msg: format!("cannot parse {} value {:?}", EXPECTED_HEADER[pos], &record[pos]),
            })
        };
        let age_lo = field(0)?;
        let age_hi = field(1)?;
        let early = field(2)?;
        let advanced = field(3)?;
        let person_years = field(4)?;
        for (name, value) in [("early_count", early), ("advanced_count", advanced)] {
            if value < 0.0 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("{name} must be non-negative, got {value}"),
                });
            }
            if value.fract() != 0.0 {
                return Err(Error::Parse {
                    row: Some(rownum),
                    msg: format!("{name} must be an integer, got {value}"),
                });
            }
        }
        rows.push(IncidenceRow {
            age_lo,
            age_hi,
            early_count: early as u64,
            advanced_count: advanced as u64,
            person_years,
        });
    }
    IncidenceTable::new(rows)
}

/// Loads an incidence table from a file path.
pub fn load_incidence_path(path: &Path) -> Result<IncidenceTable> {
    let file = std::fs::File::open(path)?;
    load_incidence(file)
}

/// Multiplies counts by `factor`, rounding ties to even; person-years are
/// unchanged. Used to represent elevated-risk cohorts.
pub fn inflate_risk(table: &IncidenceTable, factor: f64) -> Result<IncidenceTable> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "risk inflation factor must be positive, got {factor}"
        )));
    }
    let rows = table
        .rows()
        .iter()
        .map(|r| IncidenceRow {
            age_lo: r.age_lo,
            age_hi: r.age_hi,
            early_count: (r.early_count as f64 * factor).round_ties_even() as u64,
            advanced_count: (r.advanced_count as f64 * factor).round_ties_even() as u64,
            person_years: r.person_years,
        })
        .collect();
    IncidenceTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_csv() -> String {
        let mut text = String::from("age_lo,age_hi,early_count,advanced_count,person_years\n");
        for g in 0..17 {
            let lo = g * 5;
            text.push_str(&format!("{},{},{},{},{}\n", lo, lo + 5, g * 10, g * 18, 1.0e6));
        }
        text.push_str("85,90,120,210,5.0e5\n");
        text
    }

    #[test]
    fn loads_well_formed_table() {
        let table = load_incidence(table_csv().as_bytes()).unwrap();
        assert_eq!(table.len(), 18);
        assert_eq!(table.rows()[17].midpoint(), 87.5);
    }

    #[test]
    fn comments_are_ignored() {
        let mut text = String::from("# reconstructed table\n");
        text.push_str(&table_csv());
        let table = load_incidence(text.as_bytes()).unwrap();
        assert_eq!(table.len(), 18);
    }

    #[test]
    fn rejects_negative_count_naming_row() {
        let text = "age_lo,age_hi,early_count,advanced_count,person_years\n\
                    0,5,3,-1,1000\n5,10,0,0,1000\n";
        let err = load_incidence(text.as_bytes()).unwrap_err();
        match err {
            Error::Parse { row: Some(1), msg } => assert!(msg.contains("advanced_count")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_gap_in_age_groups() {
        let text = "age_lo,age_hi,early_count,advanced_count,person_years\n\
                    40,45,3,1,1000\n50,55,0,0,1000\n";
        let err = load_incidence(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("contiguous"), "{err}");
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "age_lo,age_hi,early,advanced,person_years\n0,5,0,0,10\n";
        assert!(load_incidence(text.as_bytes()).is_err());
    }

    #[test]
    fn inflation_identity_and_scaling() {
        let table = load_incidence(table_csv().as_bytes()).unwrap();
        let same = inflate_risk(&table, 1.0).unwrap();
        assert_eq!(same, table);
        let tripled = inflate_risk(&table, 3.0).unwrap();
        assert_eq!(tripled.rows()[2].early_count, table.rows()[2].early_count * 3);
        assert_eq!(tripled.rows()[2].person_years, table.rows()[2].person_years);
    }

    #[test]
    fn inflation_rounds_ties_to_even() {
        let rows = vec![IncidenceRow {
            age_lo: 0.0,
            age_hi: 5.0,
            early_count: 101,
            advanced_count: 3,
            person_years: 1000.0,
        }];
        let table = IncidenceTable::new(rows).unwrap();
        let inflated = inflate_risk(&table, 2.5).unwrap();
        // 101 * 2.5 = 252.5 rounds to the even 252; 3 * 2.5 = 7.5 rounds to 8.
        assert_eq!(inflated.rows()[0].early_count, 252);
        assert_eq!(inflated.rows()[0].advanced_count, 8);
        assert!(inflate_risk(&table, 0.0).is_err());
    }
}
