//! Aggregation of results snapshots into conformance matrices, pass totals,
//! evolution series and benchmark tables, and their rendering as JSON, CSV
//! or markdown.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::bench::{BenchResult, BenchStatus, ModelVariant};
use crate::config::Language;
use crate::suite::{SpecVersion, TestCase, TestOutcome};

/// The evidence gathered by one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsSnapshot {
    pub snapshot_id: String,
    pub captured_at: DateTime<Utc>,
    pub system_label: String,
    pub commit_pins: BTreeMap<String, String>,
    /// Every test found in the triggered suites, filtered or not.
    #[serde(default)]
    pub discovered: Vec<TestCase>,
    pub outcomes: Vec<TestOutcome>,
    pub bench: Vec<BenchResult>,
}

impl ResultsSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes") + "\n"
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    fn targets(&self) -> BTreeSet<&str> {
        self.outcomes
            .iter()
            .map(|o| o.target_id.as_str())
            .chain(self.bench.iter().map(|b| b.target_id.as_str()))
            .collect()
    }

    /// The system a target's results are reported under: the snapshot
    /// label, qualified by target when the snapshot covers several.
    pub fn system_for(&self, target_id: &str) -> String {
        system_name(&self.system_label, self.targets().len() > 1, target_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageGroup {
    CAndCxx,
    Fortran,
}

impl LanguageGroup {
    pub const ALL: [LanguageGroup; 2] = [LanguageGroup::CAndCxx, LanguageGroup::Fortran];

    pub fn of(lang: Language) -> Self {
        match lang {
            Language::C | Language::Cxx => LanguageGroup::CAndCxx,
            Language::Fortran => LanguageGroup::Fortran,
        }
    }
}

impl fmt::Display for LanguageGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LanguageGroup::CAndCxx => "C & C++",
            LanguageGroup::Fortran => "Fortran",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Column {
    pub system: String,
    pub toolchain: String,
}

impl Column {
    pub fn label(&self) -> String {
        format!("{} {}", self.system, self.toolchain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub version: SpecVersion,
    pub cells: Vec<usize>,
}

/// Pass counts per spec version (rows) and (system, toolchain) (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionMatrix {
    pub language_group: LanguageGroup,
    pub columns: Vec<Column>,
    pub rows: Vec<MatrixRow>,
    pub total: Vec<usize>,
    /// Passing tests per column and language, before grouping.
    pub per_language: BTreeMap<Language, Vec<usize>>,
    /// Outcomes in the group left out for having no spec version.
    pub unknown_version_excluded: usize,
}

impl VersionMatrix {
    pub fn cell(&self, version: SpecVersion, column: &Column) -> Option<usize> {
        let c = self.columns.iter().position(|k| k == column)?;
        let row = self.rows.iter().find(|r| r.version == version)?;
        Some(row.cells[c])
    }

    pub fn total_for(&self, column: &Column) -> Option<usize> {
        let c = self.columns.iter().position(|k| k == column)?;
        Some(self.total[c])
    }

    /// Every total equals the sum of its column's version rows.
    pub fn is_conserved(&self) -> bool {
        (0..self.columns.len())
            .all(|c| self.rows.iter().map(|r| r.cells[c]).sum::<usize>() == self.total[c])
    }
}

fn system_name(label: &str, qualify: bool, target_id: &str) -> String {
    if qualify {
        format!("{label}/{target_id}")
    } else {
        label.to_string()
    }
}

/// Whether a snapshot's system names need a target qualifier.
fn qualify(snapshot: &ResultsSnapshot) -> bool {
    snapshot.targets().len() > 1
}

fn column_of(snapshot: &ResultsSnapshot, q: bool, o: &TestOutcome) -> Column {
    Column {
        system: system_name(&snapshot.system_label, q, &o.target_id),
        toolchain: o.toolchain_id.clone(),
    }
}

fn all_columns(snapshots: &[ResultsSnapshot]) -> Vec<Column> {
    let set: BTreeSet<Column> = snapshots
        .iter()
        .flat_map(|s| {
            let q = qualify(s);
            s.outcomes.iter().map(move |o| column_of(s, q, o))
        })
        .collect();
    set.into_iter().collect()
}

/// Identity of a test within its snapshot: (suite, relative path).
type TestKey<'a> = (&'a str, &'a str);

fn test_key(o: &TestOutcome) -> TestKey<'_> {
    (o.test.suite_id.as_str(), o.test.rel_path.as_str())
}

pub fn aggregate_by_version(snapshots: &[ResultsSnapshot], group: LanguageGroup) -> VersionMatrix {
    let columns = all_columns(snapshots);
    let col_index: BTreeMap<&Column, usize> =
        columns.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut passing: BTreeMap<(usize, SpecVersion, Language), BTreeSet<TestKey>> = BTreeMap::new();
    let mut unknown = BTreeSet::new();
    for (si, s) in snapshots.iter().enumerate() {
        let q = qualify(s);
        for o in s
            .outcomes
            .iter()
            .filter(|o| LanguageGroup::of(o.test.language) == group)
        {
            if o.test.spec_version == SpecVersion::Unknown {
                unknown.insert((
                    si,
                    test_key(o),
                    o.toolchain_id.as_str(),
                    o.target_id.as_str(),
                ));
                continue;
            }
            if o.phase_result.is_pass() {
                let c = col_index[&column_of(s, q, o)];
                passing
                    .entry((c, o.test.spec_version, o.test.language))
                    .or_default()
                    .insert(test_key(o));
            }
        }
    }
    let count = |c: usize, v: SpecVersion, l: Option<Language>| -> usize {
        passing
            .iter()
            .filter(|((ci, vi, li), _)| *ci == c && *vi == v && l.is_none_or(|l| l == *li))
            .map(|(_, set)| set.len())
            .sum()
    };
    let rows: Vec<MatrixRow> = SpecVersion::KNOWN
        .iter()
        .map(|&v| MatrixRow {
            version: v,
            cells: (0..columns.len()).map(|c| count(c, v, None)).collect(),
        })
        .collect();
    let total = (0..columns.len())
        .map(|c| rows.iter().map(|r| r.cells[c]).sum())
        .collect();
    let langs: &[Language] = match group {
        LanguageGroup::CAndCxx => &[Language::C, Language::Cxx],
        LanguageGroup::Fortran => &[Language::Fortran],
    };
    let per_language = langs
        .iter()
        .map(|&l| {
            let per_col = (0..columns.len())
                .map(|c| {
                    SpecVersion::KNOWN
                        .iter()
                        .map(|&v| count(c, v, Some(l)))
                        .sum()
                })
                .collect();
            (l, per_col)
        })
        .collect();
    VersionMatrix {
        language_group: group,
        columns,
        rows,
        total,
        per_language,
        unknown_version_excluded: unknown.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TotalsRow {
    pub system: String,
    pub toolchain: String,
    pub language_group: LanguageGroup,
    pub pass_count: usize,
    pub denominator: usize,
}

/// Passing tests per (system, toolchain, group) against the number of
/// discovered tests in the group.
pub fn totals_by_language(snapshots: &[ResultsSnapshot]) -> Vec<TotalsRow> {
    let mut rows = Vec::new();
    for s in snapshots {
        let q = qualify(s);
        let mut denominators: BTreeMap<LanguageGroup, BTreeSet<(&str, &str)>> = BTreeMap::new();
        if s.discovered.is_empty() {
            for o in &s.outcomes {
                denominators
                    .entry(LanguageGroup::of(o.test.language))
                    .or_default()
                    .insert(test_key(o));
            }
        } else {
            for t in &s.discovered {
                denominators
                    .entry(LanguageGroup::of(t.language))
                    .or_default()
                    .insert((t.suite_id.as_str(), t.rel_path.as_str()));
            }
        }
        let mut passing: BTreeMap<(Column, LanguageGroup), BTreeSet<(&str, &str)>> =
            BTreeMap::new();
        for o in &s.outcomes {
            let entry = passing
                .entry((column_of(s, q, o), LanguageGroup::of(o.test.language)))
                .or_default();
            if o.phase_result.is_pass() {
                entry.insert(test_key(o));
            }
        }
        let columns: BTreeSet<Column> = s.outcomes.iter().map(|o| column_of(s, q, o)).collect();
        for col in columns {
            for group in LanguageGroup::ALL {
                let pass_count = passing.get(&(col.clone(), group)).map_or(0, BTreeSet::len);
                rows.push(TotalsRow {
                    system: col.system.clone(),
                    toolchain: col.toolchain.clone(),
                    language_group: group,
                    pass_count,
                    denominator: denominators.get(&group).map_or(0, BTreeSet::len),
                });
            }
        }
    }
    rows.sort();
    rows
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeSeriesPoint {
    pub date: DateTime<Utc>,
    pub system_label: String,
    pub toolchain_id: String,
    pub language_group: LanguageGroup,
    pub pass_count: usize,
}

/// One point per (snapshot, system, toolchain, group), oldest first.
pub fn evolution_series(snapshots: &[ResultsSnapshot]) -> Vec<TimeSeriesPoint> {
    let mut points = Vec::new();
    for s in snapshots {
        let q = qualify(s);
        let mut passing: BTreeMap<(Column, LanguageGroup), BTreeSet<(&str, &str)>> =
            BTreeMap::new();
        for o in &s.outcomes {
            for group in LanguageGroup::ALL {
                passing.entry((column_of(s, q, o), group)).or_default();
            }
            if o.phase_result.is_pass() {
                passing
                    .get_mut(&(column_of(s, q, o), LanguageGroup::of(o.test.language)))
                    .expect("seeded above")
                    .insert(test_key(o));
            }
        }
        for ((col, group), set) in passing {
            points.push(TimeSeriesPoint {
                date: s.captured_at,
                system_label: col.system,
                toolchain_id: col.toolchain,
                language_group: group,
                pass_count: set.len(),
            });
        }
    }
    points.sort();
    points
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BenchRow {
    pub app_id: String,
    pub variant: ModelVariant,
    pub cells: Vec<String>,
}

impl BenchRow {
    pub fn label(&self) -> String {
        match self.variant {
            ModelVariant::Tgt => self.app_id.clone(),
            ModelVariant::Acc => format!("{} [ACC]", self.app_id),
        }
    }
}

/// Estimated base times per app (rows) and (system, toolchain) (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub columns: Vec<Column>,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn cell(&self, app_id: &str, variant: ModelVariant, column: &Column) -> Option<&str> {
        let c = self.columns.iter().position(|k| k == column)?;
        let row = self
            .rows
            .iter()
            .find(|r| r.app_id == app_id && r.variant == variant)?;
        Some(row.cells[c].as_str())
    }
}

pub fn format_bench_status(status: BenchStatus) -> String {
    match status {
        BenchStatus::Time(secs) => format!("{secs:.2}"),
        BenchStatus::BE => "BE".into(),
        BenchStatus::EE => "EE".into(),
    }
}

/// Cells are seconds with two decimals, `BE`, `EE`, or `-` when absent.
pub fn bench_table(snapshots: &[ResultsSnapshot]) -> BenchTable {
    let mut cells: BTreeMap<(String, ModelVariant), BTreeMap<Column, BenchStatus>> =
        BTreeMap::new();
    let mut columns = BTreeSet::new();
    for s in snapshots {
        let q = qualify(s);
        for b in &s.bench {
            let col = Column {
                system: system_name(&s.system_label, q, &b.target_id),
                toolchain: b.toolchain_id.clone(),
            };
            columns.insert(col.clone());
            cells
                .entry((b.app_id.clone(), b.variant))
                .or_default()
                .insert(col, b.status);
        }
    }
    let columns: Vec<Column> = columns.into_iter().collect();
    let rows = cells
        .into_iter()
        .map(|((app_id, variant), by_col)| BenchRow {
            app_id,
            variant,
            cells: columns
                .iter()
                .map(|c| {
                    by_col
                        .get(c)
                        .map_or_else(|| "-".to_string(), |s| format_bench_status(*s))
                })
                .collect(),
        })
        .collect();
    BenchTable { columns, rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

/// A report shape that can be laid out as a table.
pub trait Tabular {
    fn header(&self) -> Vec<String>;
    fn table_rows(&self) -> Vec<Vec<String>>;
    fn to_json_value(&self) -> serde_json::Value;
}

impl Tabular for VersionMatrix {
    fn header(&self) -> Vec<String> {
        std::iter::once("version".to_string())
            .chain(self.columns.iter().map(Column::label))
            .collect()
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        if self.columns.is_empty() {
            return Vec::new();
        }
        let line = |label: &str, cells: &[usize]| {
            std::iter::once(label.to_string())
                .chain(cells.iter().map(usize::to_string))
                .collect()
        };
        self.rows
            .iter()
            .map(|r| line(r.version.as_str(), &r.cells))
            .chain(std::iter::once(line("Total", &self.total)))
            .collect()
    }

    fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("matrix serializes")
    }
}

impl Tabular for Vec<TotalsRow> {
    fn header(&self) -> Vec<String> {
        [
            "system",
            "toolchain",
            "language_group",
            "pass_count",
            "denominator",
        ]
        .map(String::from)
        .to_vec()
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| {
                vec![
                    r.system.clone(),
                    r.toolchain.clone(),
                    r.language_group.to_string(),
                    r.pass_count.to_string(),
                    r.denominator.to_string(),
                ]
            })
            .collect()
    }

    fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("totals serialize")
    }
}

impl Tabular for Vec<TimeSeriesPoint> {
    fn header(&self) -> Vec<String> {
        [
            "date",
            "system",
            "toolchain",
            "language_group",
            "pass_count",
        ]
        .map(String::from)
        .to_vec()
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|p| {
                vec![
                    crate::clock::iso8601(&p.date),
                    p.system_label.clone(),
                    p.toolchain_id.clone(),
                    p.language_group.to_string(),
                    p.pass_count.to_string(),
                ]
            })
            .collect()
    }

    fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("series serializes")
    }
}

impl Tabular for BenchTable {
    fn header(&self) -> Vec<String> {
        std::iter::once("app".to_string())
            .chain(self.columns.iter().map(Column::label))
            .collect()
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                std::iter::once(r.label())
                    .chain(r.cells.iter().cloned())
                    .collect()
            })
            .collect()
    }

    fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("bench table serializes")
    }
}

pub fn render(report: &dyn Tabular, format: Format) -> String {
    match format {
        Format::Json => {
            serde_json::to_string_pretty(&report.to_json_value()).expect("json renders") + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(report.header()).expect("in-memory write");
            for row in report.table_rows() {
                w.write_record(row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        Format::Markdown => {
            let esc = |s: &str| s.replace('|', "\\|");
            let line = |cells: &[String]| {
                let inner: Vec<String> = cells.iter().map(|c| esc(c)).collect();
                format!("| {} |\n", inner.join(" | "))
            };
            let header = report.header();
            let mut out = line(&header);
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for row in report.table_rows() {
                out.push_str(&line(&row));
            }
            out
        }
    }
}
