//! Loading occurrence reports from the normalized JSON or CSV layout.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Aircraft damage level. Integer codes are stable and used on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DamageLabel {
    Destroyed = 0,
    Substantial = 1,
    Minor = 2,
    NoDamage = 3,
}

impl DamageLabel {
    pub const ALL: [DamageLabel; 4] = [
        DamageLabel::Destroyed,
        DamageLabel::Substantial,
        DamageLabel::Minor,
        DamageLabel::NoDamage,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DamageLabel::Destroyed => "Destroyed",
            DamageLabel::Substantial => "Substantial",
            DamageLabel::Minor => "Minor",
            DamageLabel::NoDamage => "None",
        }
    }
}

impl fmt::Display for DamageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Case-insensitive synonym lookup; `None` when the string is not recognised.
pub fn map_damage_label(raw: &str) -> Option<DamageLabel> {
    match raw.trim().to_ascii_uppercase().as_str() {
        "DESTROYED" | "DSTR" => Some(DamageLabel::Destroyed),
        "SUBSTANTIAL" | "SUBS" => Some(DamageLabel::Substantial),
        "MINOR" | "MINR" => Some(DamageLabel::Minor),
        "NONE" | "NONE REPORTED" => Some(DamageLabel::NoDamage),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceRecord {
    pub report_id: String,
    pub narrative: String,
    pub damage_level: DamageLabel,
    pub investigation_complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Json,
    Csv,
}

impl InputFormat {
    /// `.csv` means CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Json,
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(InputFormat::Json),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!("unknown input format {other:?} (expected json or csv)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not a JSON array of report objects: {reason}")]
    Json { path: PathBuf, reason: String },
    #[error("{path}: CSV header must be exactly report_id,narrative,damage_level,investigation_complete (found {found:?})")]
    CsvHeader { path: PathBuf, found: Vec<String> },
    #[error("{path}: malformed CSV: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error("duplicate report_id {0:?}")]
    DuplicateId(String),
}

/// Why an entry was skipped during loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    /// Zero-based entry position in the source file (data rows for CSV).
    pub entry: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedReports {
    pub records: Vec<OccurrenceRecord>,
    pub warnings: Vec<LoadWarning>,
}

const CSV_HEADER: [&str; 4] = [
    "report_id",
    "narrative",
    "damage_level",
    "investigation_complete",
];

pub fn load_reports(path: &Path, format: InputFormat) -> Result<LoadedReports, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = LoadedReports::default();
    let mut seen = HashSet::new();
    let mut accept = |entry: usize,
                      parsed: Result<OccurrenceRecord, String>,
                      out: &mut LoadedReports|
     -> Result<(), IngestError> {
        match parsed {
            Ok(rec) => {
                if !seen.insert(rec.report_id.clone()) {
                    return Err(IngestError::DuplicateId(rec.report_id));
                }
                out.records.push(rec);
            }
            Err(message) => {
                log::warn!("{}: entry {entry} skipped: {message}", path.display());
                out.warnings.push(LoadWarning { entry, message });
            }
        }
        Ok(())
    };

    match format {
        InputFormat::Json => {
            let entries: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| IngestError::Json {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?;
            for (i, entry) in entries.iter().enumerate() {
                accept(i, parse_json_entry(entry), &mut out)?;
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(true)
                .from_reader(text.as_bytes());
            let header = reader.headers().map_err(|e| IngestError::Csv {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            if header.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(IngestError::CsvHeader {
                    path: path.to_path_buf(),
                    found: header.iter().map(str::to_string).collect(),
                });
            }
            for (i, row) in reader.records().enumerate() {
                let parsed = match row {
                    Ok(row) => parse_csv_row(&row),
                    Err(e) => Err(e.to_string()),
                };
                accept(i, parsed, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn parse_json_entry(entry: &serde_json::Value) -> Result<OccurrenceRecord, String> {
    let obj = entry.as_object().ok_or("entry is not an object")?;
    let field_str = |name: &str| -> Result<&str, String> {
        obj.get(name)
            .and_then(|v| v.as_str())
            .ok_or_else(|| format!("missing or non-string field {name}"))
    };
    let report_id = field_str("report_id")?;
    let narrative = field_str("narrative")?;
    let raw_label = field_str("damage_level")?;
    let complete = obj
        .get("investigation_complete")
        .and_then(|v| v.as_bool())
        .ok_or("missing or non-boolean field investigation_complete")?;
    build_record(report_id, narrative, raw_label, complete)
}

fn parse_csv_row(row: &csv::StringRecord) -> Result<OccurrenceRecord, String> {
    if row.len() != 4 {
        return Err(format!("expected 4 fields, found {}", row.len()));
    }
    let complete = match row[3].trim().to_ascii_lowercase().as_str() {
        "true" | "1" => true,
        "false" | "0" => false,
        other => return Err(format!("investigation_complete {other:?} is not a boolean")),
    };
    build_record(&row[0], &row[1], &row[2], complete)
}

fn build_record(
    report_id: &str,
    narrative: &str,
    raw_label: &str,
    investigation_complete: bool,
) -> Result<OccurrenceRecord, String> {
    if report_id.trim().is_empty() {
        return Err("empty report_id".into());
    }
    let damage_level =
        map_damage_label(raw_label).ok_or_else(|| format!("unknown damage level {raw_label:?}"))?;
    Ok(OccurrenceRecord {
        report_id: report_id.to_string(),
        narrative: narrative.to_string(),
        damage_level,
        investigation_complete,
    })
}

/// Keeps completed investigations with a non-blank narrative, in order.
pub fn filter_completed(records: &[OccurrenceRecord]) -> Vec<OccurrenceRecord> {
    records
        .iter()
        .filter(|r| r.investigation_complete && !r.narrative.trim().is_empty())
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    /// Indexed by `DamageLabel::code`.
    pub counts: [usize; 4],
    pub total: usize,
}

impl ClassDistribution {
    pub fn from_labels(labels: impl IntoIterator<Item = DamageLabel>) -> Self {
        let mut dist = Self::default();
        for label in labels {
            dist.counts[label.code()] += 1;
            dist.total += 1;
        }
        dist
    }

    pub fn count(&self, label: DamageLabel) -> usize {
        self.counts[label.code()]
    }

    /// `max(counts) / total`, or `None` for an empty distribution.
    pub fn majority_share(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let max = *self.counts.iter().max().unwrap_or(&0);
        Some(max as f64 / self.total as f64)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for label in DamageLabel::ALL {
            map.insert(label.name().to_string(), self.count(label).into());
        }
        serde_json::json!({ "counts": map, "total": self.total })
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>8} {:>8}\n", "Class", "Count", "Share"));
        for label in DamageLabel::ALL {
            let c = self.count(label);
            let share = if self.total == 0 {
                0.0
            } else {
                100.0 * c as f64 / self.total as f64
            };
            out.push_str(&format!("{:<12} {:>8} {:>7.1}%\n", label.name(), c, share));
        }
        out.push_str(&format!("{:<12} {:>8}\n", "Total", self.total));
        out
    }
}

pub fn class_distribution(records: &[OccurrenceRecord]) -> ClassDistribution {
    ClassDistribution::from_labels(records.iter().map(|r| r.damage_level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(id: &str, narrative: &str, label: DamageLabel, complete: bool) -> OccurrenceRecord {
        OccurrenceRecord {
            report_id: id.into(),
            narrative: narrative.into(),
            damage_level: label,
            investigation_complete: complete,
        }
    }

    fn write_temp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn label_synonyms() {
        assert_eq!(map_damage_label("Substantial"), Some(DamageLabel::Substantial));
        assert_eq!(map_damage_label("dstr"), Some(DamageLabel::Destroyed));
        assert_eq!(map_damage_label("  minr "), Some(DamageLabel::Minor));
        assert_eq!(map_damage_label("None Reported"), Some(DamageLabel::NoDamage));
        assert_eq!(map_damage_label("catastrophic"), None);
    }

    #[test]
    fn label_codes_are_stable() {
        let codes: Vec<usize> = DamageLabel::ALL.iter().map(|l| l.code()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn json_three_entries() {
        let f = write_temp(
            r#"[
              {"report_id":"A1","narrative":"x","damage_level":"SUBS","investigation_complete":true},
              {"report_id":"A2","narrative":"y","damage_level":"DESTROYED","investigation_complete":false},
              {"report_id":"A3","narrative":"z","damage_level":"none","investigation_complete":true}
            ]"#,
            ".json",
        );
        let loaded = load_reports(f.path(), InputFormat::Json).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.records[1].report_id, "A2");
        assert_eq!(loaded.records[2].damage_level, DamageLabel::NoDamage);
    }

    #[test]
    fn json_empty_array() {
        let f = write_temp("[]", ".json");
        let loaded = load_reports(f.path(), InputFormat::Json).unwrap();
        assert!(loaded.records.is_empty() && loaded.warnings.is_empty());
    }

    #[test]
    fn unknown_label_is_skipped_with_warning() {
        let f = write_temp(
            r#"[
              {"report_id":"A1","narrative":"x","damage_level":"MINR","investigation_complete":true},
              {"report_id":"A2","narrative":"y","damage_level":"UNKNOWN","investigation_complete":true},
              {"report_id":"A3","narrative":"z","damage_level":"Minor","investigation_complete":true}
            ]"#,
            ".json",
        );
        let loaded = load_reports(f.path(), InputFormat::Json).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.warnings.len(), 1);
        assert_eq!(loaded.warnings[0].entry, 1);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let f = write_temp(
            r#"[
              {"report_id":"A1","narrative":"x","damage_level":"MINR","investigation_complete":true},
              {"report_id":"A1","narrative":"y","damage_level":"MINR","investigation_complete":true}
            ]"#,
            ".json",
        );
        let err = load_reports(f.path(), InputFormat::Json).unwrap_err();
        assert!(err.to_string().contains("A1"));
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = load_reports(Path::new("/definitely/not/here.json"), InputFormat::Json);
        assert!(matches!(err, Err(IngestError::Io { .. })));
    }

    #[test]
    fn csv_with_quoting() {
        let f = write_temp(
            "report_id,narrative,damage_level,investigation_complete\n\
             C1,\"The pilot said, \"\"engine quit\"\"\",Substantial,true\n\
             C2,short,bogus,true\n\
             C3,\"multi\nline\",DSTR,false\n",
            ".csv",
        );
        let loaded = load_reports(f.path(), InputFormat::Csv).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[0].narrative, "The pilot said, \"engine quit\"");
        assert_eq!(loaded.records[1].narrative, "multi\nline");
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn csv_wrong_header_rejected() {
        let f = write_temp("id,text,label,done\n", ".csv");
        assert!(matches!(
            load_reports(f.path(), InputFormat::Csv),
            Err(IngestError::CsvHeader { .. })
        ));
    }

    #[test]
    fn filter_examples() {
        let all = vec![
            rec("1", "a", DamageLabel::Minor, true),
            rec("2", "b", DamageLabel::Minor, true),
        ];
        assert_eq!(filter_completed(&all), all);

        let mixed = vec![
            rec("1", "a", DamageLabel::Minor, true),
            rec("2", "b", DamageLabel::Minor, false),
            rec("3", "c", DamageLabel::Minor, true),
            rec("4", "d", DamageLabel::Minor, false),
            rec("5", "e", DamageLabel::Minor, true),
        ];
        let kept: Vec<_> = filter_completed(&mixed)
            .into_iter()
            .map(|r| r.report_id)
            .collect();
        assert_eq!(kept, vec!["1", "3", "5"]);
        assert_eq!(filter_completed(&filter_completed(&mixed)), filter_completed(&mixed));
    }

    #[test]
    fn blank_narratives_dropped() {
        let recs = vec![
            rec("1", "   \n", DamageLabel::Minor, true),
            rec("2", "ok", DamageLabel::Minor, true),
        ];
        assert_eq!(filter_completed(&recs).len(), 1);
    }

    #[test]
    fn distribution_examples() {
        let empty = class_distribution(&[]);
        assert_eq!(empty.counts, [0; 4]);
        assert_eq!(empty.total, 0);
        assert_eq!(empty.majority_share(), None);

        let one_each: Vec<_> = DamageLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| rec(&i.to_string(), "n", l, true))
            .collect();
        let d = class_distribution(&one_each);
        assert_eq!(d.counts, [1; 4]);
        assert_eq!(d.total, 4);
    }

    #[test]
    fn published_distribution_majority_share() {
        let d = ClassDistribution {
            counts: [1409, 15163, 195, 152],
            total: 16919,
        };
        assert_eq!(d.counts.iter().sum::<usize>(), d.total);
        assert!((d.majority_share().unwrap() - 15163.0 / 16919.0).abs() < 1e-15);
        assert!((d.majority_share().unwrap() - 0.896).abs() < 5e-4);
    }
}
