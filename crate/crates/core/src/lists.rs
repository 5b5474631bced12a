//! Green/red expected-outcome lists per (toolchain, target, suite), green
//! filtering, and regression diffs against a baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::suite::{TestCase, TestOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum ListError {
    #[error("test {0} appears more than once")]
    DuplicateTest(String),
    #[error("outcomes span several scopes: {0} and {1}")]
    MixedScope(Box<Scope>, Box<Scope>),
    #[error("scope mismatch: list is {expected}, outcome is {found}")]
    ScopeMismatch {
        expected: Box<Scope>,
        found: Box<Scope>,
    },
    #[error("no outcomes to build a list from")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Scope {
    pub toolchain_id: String,
    pub target_id: String,
    pub suite_id: String,
}

impl Scope {
    pub fn new(toolchain: &str, target: &str, suite: &str) -> Self {
        Self {
            toolchain_id: toolchain.into(),
            target_id: target.into(),
            suite_id: suite.into(),
        }
    }

    pub fn of(outcome: &TestOutcome) -> Self {
        Self::new(
            &outcome.toolchain_id,
            &outcome.target_id,
            &outcome.test.suite_id,
        )
    }

    /// `greenlist-<toolchain>-<target>-<suite>.json`
    pub fn list_file_name(&self) -> String {
        format!(
            "greenlist-{}-{}-{}.json",
            self.toolchain_id, self.target_id, self.suite_id
        )
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.toolchain_id, self.target_id, self.suite_id
        )
    }
}

impl std::str::FromStr for Scope {
    type Err = String;

    /// Parses `toolchain:target:suite`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [tc, tgt, suite] if !tc.is_empty() && !tgt.is_empty() && !suite.is_empty() => {
                Ok(Scope::new(tc, tgt, suite))
            }
            _ => Err(format!("expected toolchain:target:suite, got {s:?}")),
        }
    }
}

/// Test identities are suite-relative paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenRedList {
    pub toolchain_id: String,
    pub target_id: String,
    pub suite_id: String,
    pub baseline_pin: String,
    pub green: BTreeSet<String>,
    pub red: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
}

impl GreenRedList {
    pub fn empty(toolchain: &str, target: &str, suite: &str, pin: &str) -> Self {
        Self {
            toolchain_id: toolchain.into(),
            target_id: target.into(),
            suite_id: suite.into(),
            baseline_pin: pin.into(),
            green: BTreeSet::new(),
            red: BTreeSet::new(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    pub fn scope(&self) -> Scope {
        Scope::new(&self.toolchain_id, &self.target_id, &self.suite_id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("list serializes") + "\n"
    }
}

fn single_scope(outcomes: &[TestOutcome]) -> Result<Option<Scope>, ListError> {
    let mut scope: Option<Scope> = None;
    for o in outcomes {
        let s = Scope::of(o);
        match &scope {
            None => scope = Some(s),
            Some(first) if *first != s => {
                return Err(ListError::MixedScope(Box::new(first.clone()), Box::new(s)))
            }
            _ => {}
        }
    }
    Ok(scope)
}

/// Partition one scope's outcomes into green (passing) and red (the rest).
pub fn build_lists(
    outcomes: &[TestOutcome],
    pin: &str,
    created_at: DateTime<Utc>,
) -> Result<GreenRedList, ListError> {
    let scope = single_scope(outcomes)?.ok_or(ListError::Empty)?;
    let mut list = GreenRedList::empty(&scope.toolchain_id, &scope.target_id, &scope.suite_id, pin);
    list.created_at = created_at;
    for o in outcomes {
        let id = o.test.id().to_string();
        if list.green.contains(&id) || list.red.contains(&id) {
            return Err(ListError::DuplicateTest(id));
        }
        if o.phase_result.is_pass() {
            list.green.insert(id);
        } else {
            list.red.insert(id);
        }
    }
    Ok(list)
}

/// Group a snapshot's outcomes by scope, then build one list per scope.
pub fn build_all_lists(
    outcomes: &[TestOutcome],
    pins: &BTreeMap<String, String>,
    created_at: DateTime<Utc>,
) -> Result<Vec<GreenRedList>, ListError> {
    let mut by_scope: BTreeMap<Scope, Vec<TestOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_scope.entry(Scope::of(o)).or_default().push(o.clone());
    }
    by_scope
        .into_iter()
        .map(|(scope, outs)| {
            let pin = pins.get(&scope.suite_id).map(String::as_str).unwrap_or("");
            build_lists(&outs, pin, created_at)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GreenFilter {
    pub selected: Vec<TestCase>,
    /// Tests on neither list, e.g. added to the suite after the list was made.
    pub unlisted: Vec<TestCase>,
}

pub fn filter_green(tests: &[TestCase], list: &GreenRedList) -> GreenFilter {
    let mut out = GreenFilter::default();
    for t in tests {
        if list.green.contains(t.id()) {
            out.selected.push(t.clone());
        } else if !list.red.contains(t.id()) {
            out.unlisted.push(t.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub list_ref: Scope,
    /// Baseline green, now not passing.
    pub regressions: BTreeSet<String>,
    /// Baseline red, now passing.
    pub promotions: BTreeSet<String>,
    pub unchanged_green: usize,
    pub unchanged_red: usize,
}

impl RegressionReport {
    pub fn is_clean(&self) -> bool {
        self.regressions.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn diff_results(
    baseline: &GreenRedList,
    new_outcomes: &[TestOutcome],
) -> Result<RegressionReport, ListError> {
    let expected = baseline.scope();
    let mut report = RegressionReport {
        list_ref: expected.clone(),
        regressions: BTreeSet::new(),
        promotions: BTreeSet::new(),
        unchanged_green: 0,
        unchanged_red: 0,
    };
    for o in new_outcomes {
        let found = Scope::of(o);
        if found != expected {
            return Err(ListError::ScopeMismatch {
                expected: Box::new(expected),
                found: Box::new(found),
            });
        }
        let id = o.test.id();
        let pass = o.phase_result.is_pass();
        if baseline.green.contains(id) {
            if pass {
                report.unchanged_green += 1;
            } else {
                report.regressions.insert(id.to_string());
            }
        } else if baseline.red.contains(id) {
            if pass {
                report.promotions.insert(id.to_string());
            } else {
                report.unchanged_red += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Language;
    use crate::suite::{PhaseResult, SpecVersion};

    fn case(name: &str) -> TestCase {
        TestCase {
            suite_id: "vv".into(),
            rel_path: name.into(),
            spec_version: SpecVersion::V5_0,
            language: Language::C,
            name: name.into(),
        }
    }

    fn outcome(name: &str, r: PhaseResult) -> TestOutcome {
        TestOutcome {
            test: case(name),
            toolchain_id: "llvm".into(),
            target_id: "mi210".into(),
            phase_result: r,
            compile_seconds: 0.0,
            run_seconds: 0.0,
            diagnostics: String::new(),
        }
    }

    fn now() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    #[test]
    fn builds_partition() {
        let outs = [
            outcome("a", PhaseResult::Pass),
            outcome("b", PhaseResult::CompileFail),
            outcome("c", PhaseResult::Pass),
        ];
        let l = build_lists(&outs, "pin", now()).unwrap();
        assert_eq!(l.green, ["a", "c"].map(String::from).into());
        assert_eq!(l.red, ["b"].map(String::from).into());
        assert_eq!(l.scope().list_file_name(), "greenlist-llvm-mi210-vv.json");
    }

    #[test]
    fn all_pass_has_empty_red() {
        let outs: Vec<_> = (0..5)
            .map(|i| outcome(&format!("t{i}"), PhaseResult::Pass))
            .collect();
        assert!(build_lists(&outs, "p", now()).unwrap().red.is_empty());
    }

    #[test]
    fn duplicate_and_mixed_scope() {
        let outs = [
            outcome("a", PhaseResult::Pass),
            outcome("a", PhaseResult::Timeout),
        ];
        assert_eq!(
            build_lists(&outs, "p", now()),
            Err(ListError::DuplicateTest("a".into()))
        );
        let mut other = outcome("b", PhaseResult::Pass);
        other.target_id = "h100".into();
        let outs = [outcome("a", PhaseResult::Pass), other];
        assert!(matches!(
            build_lists(&outs, "p", now()),
            Err(ListError::MixedScope(..))
        ));
    }

    #[test]
    fn filter_keeps_order_and_reports_unlisted() {
        let mut l = GreenRedList::empty("llvm", "mi210", "vv", "p");
        l.green.extend(["a".to_string(), "c".to_string()]);
        l.red.insert("b".into());
        let tests = [case("a"), case("b"), case("c"), case("d")];
        let f = filter_green(&tests, &l);
        assert_eq!(f.selected, vec![case("a"), case("c")]);
        assert_eq!(f.unlisted, vec![case("d")]);

        l.green.extend(["b".to_string(), "d".to_string()]);
        l.red.clear();
        assert_eq!(filter_green(&tests, &l).selected, tests.to_vec());
    }

    #[test]
    fn diff_detects_regression() {
        let base = build_lists(
            &[
                outcome("a", PhaseResult::Pass),
                outcome("b", PhaseResult::Pass),
                outcome("c", PhaseResult::Pass),
            ],
            "p",
            now(),
        )
        .unwrap();
        let new = [
            outcome("a", PhaseResult::Pass),
            outcome("b", PhaseResult::CompileFail),
            outcome("c", PhaseResult::Pass),
        ];
        let r = diff_results(&base, &new).unwrap();
        assert_eq!(r.regressions, ["b".to_string()].into());
        assert!(r.promotions.is_empty());
        assert_eq!((r.unchanged_green, r.unchanged_red), (2, 0));
    }

    #[test]
    fn diff_against_own_outcomes_is_empty() {
        let outs = [
            outcome("a", PhaseResult::Pass),
            outcome("b", PhaseResult::WrongAnswer),
        ];
        let base = build_lists(&outs, "p", now()).unwrap();
        let r = diff_results(&base, &outs).unwrap();
        assert!(r.regressions.is_empty() && r.promotions.is_empty());
        assert_eq!((r.unchanged_green, r.unchanged_red), (1, 1));
    }

    #[test]
    fn diff_scope_mismatch() {
        let base = GreenRedList::empty("gnu", "mi210", "vv", "p");
        assert!(matches!(
            diff_results(&base, &[outcome("a", PhaseResult::Pass)]),
            Err(ListError::ScopeMismatch { .. })
        ));
    }

    #[test]
    fn scope_parsing() {
        assert_eq!("a:b:c".parse::<Scope>().unwrap(), Scope::new("a", "b", "c"));
        assert!("a:b".parse::<Scope>().is_err());
        assert!("a::c".parse::<Scope>().is_err());
    }
}
