//! Three-stage validation of generated tests through external commands:
//! syntactic, import, runtime. Exit code 0 is a pass.

mod runner;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use runner::OUTPUT_CAP;

pub const FILE_PLACEHOLDER: &str = "{file}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Syntactic,
    Import,
    Runtime,
}

impl Stage {
    pub const ORDER: [Stage; 3] = [Stage::Syntactic, Stage::Import, Stage::Runtime];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Syntactic => "syntactic",
            Stage::Import => "import",
            Stage::Runtime => "runtime",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    /// Split into arguments shell-style; `{file}` is replaced inside
    /// whichever argument holds it. No shell is involved unless the
    /// template invokes one.
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// A private temporary directory is used when absent.
    #[serde(default)]
    pub workdir: Option<PathBuf>,
}

impl StageConfig {
    pub fn new(stage: Stage, command: impl Into<String>) -> Self {
        StageConfig {
            stage,
            command: command.into(),
            timeout_s: default_timeout(),
            workdir: None,
        }
    }

    pub fn with_timeout(mut self, timeout_s: f64) -> Self {
        self.timeout_s = timeout_s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.command.matches(FILE_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::InvalidStageConfig(format!(
                "{} command must contain {FILE_PLACEHOLDER} exactly once, found {n}",
                self.stage
            )));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::InvalidStageConfig(format!(
                "{} timeout must be positive, got {}",
                self.stage, self.timeout_s
            )));
        }
        self.argv(Path::new("x")).map(|_| ())
    }

    fn argv(&self, file: &Path) -> Result<Vec<String>> {
        let words = shell_words::split(&self.command).map_err(|e| {
            Error::InvalidStageConfig(format!("{} command: {e}", self.stage))
        })?;
        if words.is_empty() {
            return Err(Error::InvalidStageConfig(format!("{} command is empty", self.stage)));
        }
        let file = file.to_string_lossy();
        Ok(words
            .into_iter()
            .map(|w| w.replace(FILE_PLACEHOLDER, &file))
            .collect())
    }
}

/// Checks a full stage list: three stages, in pipeline order.
pub fn check_stages(stages: &[StageConfig]) -> Result<()> {
    let order: Vec<Stage> = stages.iter().map(|s| s.stage).collect();
    if order != Stage::ORDER {
        return Err(Error::InvalidStageConfig(format!(
            "stages must be syntactic, import, runtime in that order; got {order:?}"
        )));
    }
    stages.iter().try_for_each(StageConfig::validate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Timeout,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub outcome: Outcome,
    pub exit_code: Option<i32>,
    pub duration_ms: f64,
    pub output_excerpt: String,
}

impl StageResult {
    fn skipped(stage: Stage) -> Self {
        StageResult {
            stage,
            outcome: Outcome::Skipped,
            exit_code: None,
            duration_ms: 0.0,
            output_excerpt: String::new(),
        }
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "test file not found"),
        ));
    }
    fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

fn run_in(test_path: &Path, cfg: &StageConfig, default_dir: &Path) -> Result<StageResult> {
    cfg.validate()?;
    let argv = cfg.argv(&absolute(test_path)?)?;
    let workdir = cfg.workdir.as_deref().unwrap_or(default_dir);
    let done = runner::run_with_timeout(&argv, workdir, Duration::from_secs_f64(cfg.timeout_s))?;
    let outcome = match (done.timed_out, done.exit_code) {
        (true, _) => Outcome::Timeout,
        (false, Some(0)) => Outcome::Pass,
        _ => Outcome::Fail,
    };
    Ok(StageResult {
        stage: cfg.stage,
        outcome,
        exit_code: done.exit_code,
        duration_ms: done.duration_ms,
        output_excerpt: String::from_utf8_lossy(&done.output).into_owned(),
    })
}

fn private_dir() -> Result<tempfile::TempDir> {
    tempfile::Builder::new()
        .prefix("ragsmith-validate-")
        .tempdir()
        .map_err(|e| Error::io(std::env::temp_dir(), e))
}

/// Runs one stage. Exit 0 passes, anything else fails; a stage over its
/// time limit is killed together with its process group.
pub fn run_stage(test_path: &Path, cfg: &StageConfig) -> Result<StageResult> {
    let dir = private_dir()?;
    run_in(test_path, cfg, dir.path())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub test_id: String,
    pub test_path: PathBuf,
    pub stages: Vec<StageResult>,
}

impl ValidationReport {
    pub fn outcome(&self, stage: Stage) -> Outcome {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .map_or(Outcome::Skipped, |s| s.outcome)
    }

    pub fn passed(&self, stage: Stage) -> bool {
        self.outcome(stage) == Outcome::Pass
    }
}

/// The file name without its extension.
pub fn test_id_for(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Runs the stages in order and stops at the first non-pass; the remaining
/// stages are recorded as skipped. Stages without a workdir share one
/// private temporary directory.
pub fn validate_test(test_path: &Path, stages: &[StageConfig]) -> Result<ValidationReport> {
    check_stages(stages)?;
    let dir = private_dir()?;
    let mut results = Vec::with_capacity(stages.len());
    let mut blocked = false;
    for cfg in stages {
        if blocked {
            results.push(StageResult::skipped(cfg.stage));
            continue;
        }
        let r = run_in(test_path, cfg, dir.path())?;
        blocked = r.outcome != Outcome::Pass;
        results.push(r);
    }
    Ok(ValidationReport {
        test_id: test_id_for(test_path),
        test_path: test_path.to_path_buf(),
        stages: results,
    })
}

/// Validates many tests with at most `jobs` in flight; output follows input
/// order.
pub fn validate_all(paths: &[PathBuf], stages: &[StageConfig], jobs: usize) -> Result<Vec<ValidationReport>> {
    check_stages(stages)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| paths.par_iter().map(|p| validate_test(p, stages)).collect())
}

/// Test files directly inside `dir` ending in `suffix`, sorted by name.
pub fn discover_tests(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.to_string_lossy().ends_with(suffix) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub passed: usize,
    pub denominator: usize,
    /// Percentage rounded to one decimal; 0 when the denominator is 0.
    pub percent: f64,
}

impl Rate {
    pub fn new(passed: usize, denominator: usize) -> Self {
        let percent = if denominator == 0 {
            0.0
        } else {
            (passed as f64 * 1000.0 / denominator as f64).round() / 10.0
        };
        Rate {
            passed,
            denominator,
            percent,
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.passed as f64 / self.denominator as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub total: usize,
    pub syntactic: Rate,
    pub import: Rate,
    pub runtime: Rate,
    pub timeouts: usize,
    /// When set, each stage is rated against the tests that reached it
    /// rather than against all tests.
    pub conditional: bool,
}

pub fn aggregate_validation(reports: &[ValidationReport], conditional: bool) -> Result<ValidationSummary> {
    if reports.is_empty() {
        return Err(Error::EmptyReportSet);
    }
    let count = |stage| reports.iter().filter(|r| r.passed(stage)).count();
    let (syn, imp, run) = (count(Stage::Syntactic), count(Stage::Import), count(Stage::Runtime));
    let total = reports.len();
    let (imp_den, run_den) = if conditional { (syn, imp) } else { (total, total) };
    Ok(ValidationSummary {
        total,
        syntactic: Rate::new(syn, total),
        import: Rate::new(imp, imp_den),
        runtime: Rate::new(run, run_den),
        timeouts: reports
            .iter()
            .flat_map(|r| &r.stages)
            .filter(|s| s.outcome == Outcome::Timeout)
            .count(),
        conditional,
    })
}

/// Text table with one row per configuration.
pub fn render_table(rows: &[(String, ValidationSummary)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Configuration".len());
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>5}\n",
        "Configuration", "Syntactic", "Import", "Runtime", "Tests"
    );
    out.push_str(&"-".repeat(width + 41));
    out.push('\n');
    for (label, s) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>8.1}%  {:>8.1}%  {:>8.1}%  {:>5}\n",
            label, s.syntactic.percent, s.import.percent, s.runtime.percent, s.total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(dir: &Path) -> PathBuf {
        let p = dir.join("t_test.py");
        fs::File::create(&p).unwrap().write_all(b"x = 1\n").unwrap();
        p
    }

    fn stages(cmds: [&str; 3]) -> Vec<StageConfig> {
        Stage::ORDER
            .iter()
            .zip(cmds)
            .map(|(s, c)| StageConfig::new(*s, c).with_timeout(10.0))
            .collect()
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let pass = run_stage(&f, &StageConfig::new(Stage::Syntactic, "test -f {file}")).unwrap();
        assert_eq!((pass.outcome, pass.exit_code), (Outcome::Pass, Some(0)));
        let fail = run_stage(&f, &StageConfig::new(Stage::Syntactic, "sh -c 'exit 1' {file}")).unwrap();
        assert_eq!((fail.outcome, fail.exit_code), (Outcome::Fail, Some(1)));
    }

    #[test]
    fn output_is_captured_and_capped() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let r = run_stage(&f, &StageConfig::new(Stage::Runtime, "cat {file}")).unwrap();
        assert_eq!(r.output_excerpt, "x = 1\n");
        let big = StageConfig::new(Stage::Runtime, "sh -c 'head -c 100000 /dev/zero | tr \"\\0\" a; echo {file} >/dev/null'");
        let r = run_stage(&f, &big).unwrap();
        assert_eq!(r.output_excerpt.len(), OUTPUT_CAP);
    }

    #[test]
    fn missing_binary() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let err = run_stage(&f, &StageConfig::new(Stage::Import, "no-such-binary-xyz {file}")).unwrap_err();
        assert!(matches!(err, Error::CommandSpawn { .. }));
    }

    #[test]
    fn placeholder_rules() {
        assert!(StageConfig::new(Stage::Import, "python -c pass").validate().is_err());
        assert!(StageConfig::new(Stage::Import, "diff {file} {file}").validate().is_err());
        assert!(StageConfig::new(Stage::Import, "python {file}").with_timeout(0.0).validate().is_err());
        assert!(StageConfig::new(Stage::Import, "python '{file}").validate().is_err());
    }

    #[test]
    fn paths_with_spaces_stay_one_argument() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a b_test.py");
        fs::write(&p, "").unwrap();
        let r = run_stage(&p, &StageConfig::new(Stage::Syntactic, "test -f {file}")).unwrap();
        assert_eq!(r.outcome, Outcome::Pass);
    }

    #[test]
    fn stop_at_first_failure() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let all = validate_test(&f, &stages(["test -f {file}"; 3])).unwrap();
        assert!(Stage::ORDER.iter().all(|s| all.outcome(*s) == Outcome::Pass));
        let syn = validate_test(&f, &stages(["test -d {file}", "test -f {file}", "test -f {file}"])).unwrap();
        assert_eq!(
            syn.stages.iter().map(|s| s.outcome).collect::<Vec<_>>(),
            [Outcome::Fail, Outcome::Skipped, Outcome::Skipped]
        );
        let imp = validate_test(&f, &stages(["test -f {file}", "test -d {file}", "test -f {file}"])).unwrap();
        assert_eq!(
            imp.stages.iter().map(|s| s.outcome).collect::<Vec<_>>(),
            [Outcome::Pass, Outcome::Fail, Outcome::Skipped]
        );
        assert_eq!(imp.test_id, "t_test");
    }

    #[test]
    fn stage_order_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let mut s = stages(["test -f {file}"; 3]);
        s.swap(0, 1);
        assert!(matches!(validate_test(&f, &s), Err(Error::InvalidStageConfig(_))));
    }

    fn pid_alive(pid: i32) -> bool {
        match fs::read_to_string(format!("/proc/{pid}/stat")) {
            Ok(stat) => {
                let state = stat.rsplit(')').next().unwrap_or("").trim_start();
                !state.starts_with('Z') && !state.starts_with('X')
            }
            Err(_) => false,
        }
    }

    #[test]
    fn timeout_kills_process_tree() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(dir.path());
        let pids = dir.path().join("pids");
        let script = format!(
            "sh -c 'sleep 30 & echo $! > {p}; echo $$ >> {p}; exec sleep 30' {{file}}",
            p = pids.display()
        );
        let cfg = StageConfig::new(Stage::Runtime, script).with_timeout(1.0);
        let r = run_stage(&f, &cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Timeout);
        assert!(r.duration_ms >= 1000.0 && r.duration_ms < 10_000.0);
        let listed = fs::read_to_string(&pids).unwrap();
        let pids: Vec<i32> = listed.lines().map(|l| l.trim().parse().unwrap()).collect();
        assert_eq!(pids.len(), 2);
        std::thread::sleep(Duration::from_millis(100));
        for pid in pids {
            assert!(!pid_alive(pid), "pid {pid} survived the timeout");
        }
    }

    fn report(outcomes: [Outcome; 3]) -> ValidationReport {
        ValidationReport {
            test_id: "t".into(),
            test_path: "t.py".into(),
            stages: Stage::ORDER
                .iter()
                .zip(outcomes)
                .map(|(s, o)| StageResult {
                    stage: *s,
                    outcome: o,
                    exit_code: None,
                    duration_ms: 0.0,
                    output_excerpt: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn rates() {
        use Outcome::*;
        let mut reports = vec![report([Pass, Pass, Pass]); 9];
        reports.push(report([Pass, Pass, Fail]));
        let s = aggregate_validation(&reports, false).unwrap();
        assert_eq!(s.runtime.percent, 90.0);
        assert_eq!(s.syntactic.percent, 100.0);
        let all = vec![report([Pass, Pass, Pass]); 96];
        assert_eq!(aggregate_validation(&all, false).unwrap().syntactic.percent, 100.0);
        assert!(matches!(aggregate_validation(&[], false), Err(Error::EmptyReportSet)));
    }

    #[test]
    fn conditional_rates() {
        use Outcome::*;
        let reports = vec![
            report([Pass, Pass, Pass]),
            report([Pass, Pass, Fail]),
            report([Pass, Fail, Skipped]),
            report([Fail, Skipped, Skipped]),
        ];
        let plain = aggregate_validation(&reports, false).unwrap();
        assert_eq!((plain.import.percent, plain.runtime.percent), (50.0, 25.0));
        let cond = aggregate_validation(&reports, true).unwrap();
        assert_eq!((cond.import.percent, cond.runtime.percent), (66.7, 50.0));
    }

    #[test]
    fn table_layout() {
        use Outcome::*;
        let s = aggregate_validation(&[report([Pass, Pass, Fail])], false).unwrap();
        let t = render_table(&[("RAG".into(), s)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Configuration"));
        assert!(lines[2].contains("100.0%") && lines[2].contains("0.0%"));
    }
}
