//! Knowledge-base discovery: C headers, C sources and legacy tests under a
//! corpus root, plus the software requirements that drive generation.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    CHeader,
    CSource,
    LegacyTest,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::CHeader => "c_header",
            Role::CSource => "c_source",
            Role::LegacyTest => "legacy_test",
        }
    }

    pub fn is_code(self) -> bool {
        matches!(self, Role::CHeader | Role::CSource)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One file of the knowledge base. `text` has newlines canonicalized to `\n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub role: Role,
    pub text: String,
    pub byte_len: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, role: Role, text: &str) -> Self {
        let text = canonicalize_newlines(text);
        Document {
            id: id.into(),
            role,
            byte_len: text.len(),
            text,
        }
    }

    /// Length in characters; chunk offsets are expressed in this unit.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleGlobs {
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl RoleGlobs {
    pub fn new(include: &[&str]) -> Self {
        RoleGlobs {
            include: include.iter().map(|s| s.to_string()).collect(),
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleRules {
    #[serde(default)]
    pub legacy_test: Option<RoleGlobs>,
    #[serde(default)]
    pub c_header: Option<RoleGlobs>,
    #[serde(default)]
    pub c_source: Option<RoleGlobs>,
}

impl Default for RoleRules {
    fn default() -> Self {
        RoleRules {
            legacy_test: Some(RoleGlobs::new(&["**/test_*.py", "**/*_test.py"])),
            c_header: Some(RoleGlobs::new(&["**/*.h"])),
            c_source: Some(RoleGlobs::new(&["**/*.c"])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub root: PathBuf,
    #[serde(default)]
    pub roles: RoleRules,
    #[serde(default)]
    pub requirement_file: Option<PathBuf>,
}

impl CorpusConfig {
    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        CorpusConfig {
            root: root.into(),
            roles: RoleRules::default(),
            requirement_file: None,
        }
    }
}

/// A file that matched a role rule but could not be loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedFile {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub documents: Vec<Document>,
    pub rejected: Vec<RejectedFile>,
}

struct RoleMatcher {
    role: Role,
    include: GlobSet,
    exclude: GlobSet,
}

impl RoleMatcher {
    fn matches(&self, rel: &str) -> bool {
        self.include.is_match(rel) && !self.exclude.is_match(rel)
    }
}

fn build_globset(globs: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for g in globs {
        let glob = Glob::new(g).map_err(|e| Error::InvalidGlob {
            glob: g.clone(),
            message: e.to_string(),
        })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| Error::InvalidGlob {
        glob: globs.join(","),
        message: e.to_string(),
    })
}

fn role_matchers(rules: &RoleRules) -> Result<Vec<RoleMatcher>> {
    // Precedence: legacy_test > c_header > c_source.
    let ordered = [
        (Role::LegacyTest, &rules.legacy_test),
        (Role::CHeader, &rules.c_header),
        (Role::CSource, &rules.c_source),
    ];
    let mut out = Vec::new();
    for (role, globs) in ordered {
        let Some(globs) = globs else { continue };
        if globs.include.is_empty() {
            return Err(Error::Config(format!(
                "role `{role}` is enabled but has no include globs"
            )));
        }
        out.push(RoleMatcher {
            role,
            include: build_globset(&globs.include)?,
            exclude: build_globset(&globs.exclude)?,
        });
    }
    Ok(out)
}

/// Classify a corpus-relative path (forward slashes). First matching rule wins.
pub fn classify(rules: &RoleRules, rel_path: &str) -> Result<Option<Role>> {
    let matchers = role_matchers(rules)?;
    Ok(matchers
        .iter()
        .find(|m| m.matches(rel_path))
        .map(|m| m.role))
}

pub fn canonicalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_string();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn relative_id(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    Some(parts.join("/"))
}

pub fn scan_corpus(cfg: &CorpusConfig) -> Result<ScanOutcome> {
    if !cfg.root.is_dir() {
        return Err(Error::RootMissing(cfg.root.clone()));
    }
    let matchers = role_matchers(&cfg.roles)?;

    let mut candidates: Vec<(String, Role, PathBuf)> = Vec::new();
    let mut rejected = Vec::new();
    for entry in WalkDir::new(&cfg.root).follow_links(false) {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let id = e
                    .path()
                    .and_then(|p| relative_id(&cfg.root, p))
                    .unwrap_or_default();
                rejected.push(RejectedFile {
                    id,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(id) = relative_id(&cfg.root, entry.path()) else {
            continue;
        };
        if let Some(m) = matchers.iter().find(|m| m.matches(&id)) {
            candidates.push((id, m.role, entry.into_path()));
        }
    }

    let loaded: Vec<std::result::Result<Document, RejectedFile>> = candidates
        .into_par_iter()
        .map(|(id, role, path)| {
            let bytes = fs::read(&path).map_err(|e| RejectedFile {
                id: id.clone(),
                reason: e.to_string(),
            })?;
            let text = String::from_utf8(bytes).map_err(|e| RejectedFile {
                id: id.clone(),
                reason: format!("not valid UTF-8: {e}"),
            })?;
            Ok(Document::new(id, role, &text))
        })
        .collect();

    let mut documents = Vec::new();
    for item in loaded {
        match item {
            Ok(doc) => documents.push(doc),
            Err(rej) => {
                log::warn!("rejected {}: {}", rej.id, rej.reason);
                rejected.push(rej);
            }
        }
    }
    documents.sort_by(|a, b| a.id.cmp(&b.id));
    rejected.sort_by(|a, b| a.id.cmp(&b.id));

    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(ScanOutcome {
        documents,
        rejected,
    })
}

pub fn load_requirements(path: &Path) -> Result<Vec<Requirement>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_requirements(&raw)
}

/// Parses the requirements JSON array. Record numbers in errors are 1-based.
pub fn parse_requirements(raw: &str) -> Result<Vec<Requirement>> {
    let records: Vec<serde_json::Value> =
        serde_json::from_str(raw).map_err(|e| Error::MalformedRecord {
            record: 0,
            message: format!("expected a JSON array of requirement objects: {e}"),
        })?;

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, value) in records.into_iter().enumerate() {
        let record = i + 1;
        let req: Requirement =
            serde_json::from_value(value).map_err(|e| Error::MalformedRecord {
                record,
                message: e.to_string(),
            })?;
        if req.id.trim().is_empty() {
            return Err(Error::MalformedRecord {
                record,
                message: "empty id".into(),
            });
        }
        if req.body.trim().is_empty() {
            return Err(Error::MalformedRecord {
                record,
                message: format!("requirement `{}` has an empty body", req.id),
            });
        }
        if !seen.insert(req.id.clone()) {
            return Err(Error::DuplicateRequirementId(req.id));
        }
        out.push(req);
    }
    Ok(out)
}
