//! Deterministic fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragsmith_core::corpus::{Document, Requirement, Role};
use ragsmith_core::embed::fnv1a64;
use ragsmith_core::lexical::tokenize_code;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const MODULES: [&str; 16] = [
    "adc", "can_bus", "crc", "diag", "eeprom", "flash", "gpio", "i2c", "lin", "pwm", "rtc", "scheduler", "spi",
    "timer", "uart", "watchdog",
];

const VERBS: [&str; 16] = [
    "init", "configure", "read", "write", "reset", "poll", "enable", "disable", "get_status", "set_threshold",
    "handle_irq", "flush", "start", "stop", "calibrate", "update",
];

const FIELDS: [&str; 10] = [
    "baudrate", "timeout_ms", "retries", "threshold", "prescaler", "channel_mask", "window", "flags", "period_us",
    "gain",
];

/// One generated driver module: a header and a source file.
#[derive(Debug, Clone)]
pub struct Module {
    pub name: String,
    pub functions: Vec<String>,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CCorpus {
    pub modules: Vec<Module>,
    /// Relative path to text, in path order.
    pub files: BTreeMap<String, String>,
}

impl CCorpus {
    pub fn write_to(&self, root: &Path) {
        for (rel, text) in &self.files {
            let path = root.join(rel);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, text).unwrap();
        }
    }

    pub fn documents(&self) -> Vec<Document> {
        self.files
            .iter()
            .map(|(rel, text)| {
                let role = if rel.ends_with(".h") {
                    Role::CHeader
                } else if rel.ends_with(".c") {
                    Role::CSource
                } else {
                    Role::LegacyTest
                };
                Document::new(rel.clone(), role, text)
            })
            .collect()
    }

    pub fn code_documents(&self) -> Vec<Document> {
        self.documents().into_iter().filter(|d| d.role.is_code()).collect()
    }
}

fn upper(name: &str) -> String {
    name.to_ascii_uppercase()
}

struct BodyGen<'a> {
    rng: &'a mut ChaCha8Rng,
    module: &'a str,
    fields: &'a [String],
    loops: usize,
}

impl BodyGen<'_> {
    fn field(&mut self) -> String {
        self.fields.choose(self.rng).unwrap().clone()
    }

    fn cond(&mut self) -> String {
        let up = upper(self.module);
        match self.rng.random_range(0..4) {
            0 => format!("ctx->cfg.{} > {}u", self.field(), self.rng.random_range(1..500)),
            1 => format!("(ctx->state & {}u) != 0u", 1u32 << self.rng.random_range(0..8)),
            2 => format!("status == {up}_OK"),
            _ => format!("acc >= {up}_MAX_CHANNELS"),
        }
    }

    fn simple(&mut self, ind: &str, out: &mut String) {
        let up = upper(self.module);
        let m = self.module;
        match self.rng.random_range(0..7) {
            0 => writeln!(out, "{ind}acc += ctx->cfg.{};", self.field()).unwrap(),
            1 => writeln!(out, "{ind}ctx->counters[acc % {up}_MAX_CHANNELS]++;").unwrap(),
            2 => writeln!(out, "{ind}/* keep {{ braces }} in comments balanced or not: {{ */").unwrap(),
            3 => writeln!(out, "{ind}diag_log(\"{m}: state {{%u}} }}\\n\", (unsigned)ctx->state);").unwrap(),
            4 => writeln!(out, "{ind}if (sep == '}}') {{ sep = ','; }}").unwrap(),
            5 => writeln!(out, "{ind}// unmatched in a line comment: {{").unwrap(),
            _ => writeln!(out, "{ind}ctx->state = (uint8_t)(ctx->state | {}u);", self.rng.random_range(1..128)).unwrap(),
        }
    }

    fn stmt(&mut self, depth: usize, out: &mut String) -> usize {
        let ind = "    ".repeat(depth + 1);
        let kind = if depth >= 3 { 0 } else { self.rng.random_range(0..10) };
        let before = out.lines().count();
        match kind {
            0..=4 => self.simple(&ind, out),
            5 | 6 => {
                let c = self.cond();
                writeln!(out, "{ind}if ({c}) {{").unwrap();
                for _ in 0..self.rng.random_range(1..4) {
                    self.stmt(depth + 1, out);
                }
                if self.rng.random_bool(0.4) {
                    writeln!(out, "{ind}}} else {{").unwrap();
                    self.stmt(depth + 1, out);
                }
                writeln!(out, "{ind}}}").unwrap();
            }
            7 => {
                let up = upper(self.module);
                self.loops += 1;
                let i = format!("i{}", self.loops);
                writeln!(out, "{ind}for (uint32_t {i} = 0u; {i} < {up}_MAX_CHANNELS; {i}++) {{").unwrap();
                for _ in 0..self.rng.random_range(1..3) {
                    self.stmt(depth + 1, out);
                }
                writeln!(out, "{ind}}}").unwrap();
            }
            8 => {
                let up = upper(self.module);
                writeln!(out, "{ind}switch (ctx->state) {{").unwrap();
                for case in 0..self.rng.random_range(2..4) {
                    writeln!(out, "{ind}case {case}u: {{").unwrap();
                    self.stmt(depth + 1, out);
                    writeln!(out, "{ind}    break;").unwrap();
                    writeln!(out, "{ind}}}").unwrap();
                }
                writeln!(out, "{ind}default:").unwrap();
                writeln!(out, "{ind}    status = {up}_ERR_PARAM;").unwrap();
                writeln!(out, "{ind}    break;").unwrap();
                writeln!(out, "{ind}}}").unwrap();
            }
            _ => {
                let up = upper(self.module);
                writeln!(out, "#ifdef {up}_DEBUG").unwrap();
                self.simple(&ind, out);
                writeln!(out, "#endif").unwrap();
            }
        }
        out.lines().count() - before
    }
}

fn function(rng: &mut ChaCha8Rng, m: &Module, fname: &str) -> String {
    let up = upper(&m.name);
    let mut out = String::new();
    if rng.random_bool(0.7) {
        writeln!(out, "/**\n * {fname}() - driver entry point.\n * Returns {up}_OK on success.\n */").unwrap();
    }
    let sig = format!("{}_status_t {fname}({}_ctx_t *ctx, uint32_t arg)", m.name, m.name);
    if rng.random_bool(0.25) {
        writeln!(out, "{sig} {{").unwrap();
    } else {
        writeln!(out, "{sig}\n{{").unwrap();
    }
    writeln!(out, "    {}_status_t status = {up}_OK;", m.name).unwrap();
    writeln!(out, "    uint32_t acc = arg;").unwrap();
    writeln!(out, "    char sep = ',';").unwrap();
    writeln!(out).unwrap();
    writeln!(out, "    if (ctx == NULL) {{\n        return {up}_ERR_PARAM;\n    }}").unwrap();
    let target = rng.random_range(15..55);
    let fields = m.fields.clone();
    let mut gen = BodyGen {
        rng,
        module: &m.name,
        fields: &fields,
        loops: 0,
    };
    let mut lines = 0;
    while lines < target {
        lines += gen.stmt(0, &mut out);
    }
    writeln!(out, "    (void)sep;\n    return status;\n}}").unwrap();
    out
}

fn header(rng: &mut ChaCha8Rng, m: &Module) -> String {
    let up = upper(&m.name);
    let n = &m.name;
    let mut out = format!("#ifndef {up}_H\n#define {up}_H\n\n#include <stdbool.h>\n#include <stdint.h>\n\n");
    writeln!(out, "#define {up}_MAX_CHANNELS {}u", rng.random_range(2..17)).unwrap();
    writeln!(out, "#define {up}_LOCK() do {{ __disable_irq(); }} while (0)\n").unwrap();
    writeln!(out, "/* Status codes returned by the {n} driver. */").unwrap();
    writeln!(
        out,
        "typedef enum {{\n    {up}_OK = 0,\n    {up}_ERR_PARAM,\n    {up}_ERR_BUSY,\n    {up}_ERR_TIMEOUT,\n}} {n}_status_t;\n"
    )
    .unwrap();
    writeln!(out, "typedef struct {{").unwrap();
    for f in &m.fields {
        writeln!(out, "    uint32_t {f};").unwrap();
    }
    writeln!(out, "}} {n}_config_t;\n").unwrap();
    writeln!(
        out,
        "typedef struct {n}_ctx {{\n    {n}_config_t cfg;\n    uint8_t state;\n    uint32_t counters[{up}_MAX_CHANNELS];\n}} {n}_ctx_t;\n"
    )
    .unwrap();
    for f in &m.functions {
        writeln!(out, "/** See {n}.c. */\n{n}_status_t {f}({n}_ctx_t *ctx, uint32_t arg);").unwrap();
    }
    writeln!(out, "\nextern volatile uint32_t g_{n}_ticks;\n\n#endif /* {up}_H */").unwrap();
    out
}

fn source(rng: &mut ChaCha8Rng, m: &Module) -> String {
    let up = upper(&m.name);
    let n = &m.name;
    let mut out = format!("#include \"{n}.h\"\n#include <string.h>\n\n#define {up}_RETRY_LIMIT 3u\n\n");
    writeln!(out, "volatile uint32_t g_{n}_ticks = 0u;").unwrap();
    writeln!(out, "static const char *const {n}_names[] = {{ \"idle{{\", \"busy}}\", \"error\" }};").unwrap();
    writeln!(out, "static uint8_t {n}_scratch[16];\n").unwrap();
    writeln!(out, "extern void diag_log(const char *fmt, ...);\n").unwrap();
    for f in &m.functions {
        out.push_str(&function(rng, m, f));
        out.push('\n');
    }
    out
}

fn legacy_tests(rng: &mut ChaCha8Rng, m: &Module) -> String {
    let n = &m.name;
    let mut out = format!("import pytest\n\nfrom firmware import {n}\n\n\n@pytest.fixture\ndef ctx():\n    return {n}.Ctx()\n");
    for f in m.functions.iter().take(rng.random_range(3..6)) {
        let up = upper(n);
        write!(
            out,
            "\n\ndef test_{f}_rejects_null():\n    assert {n}.{f}(None, 0) == {n}.{up}_ERR_PARAM\n\n\ndef test_{f}_ok(ctx):\n    ctx.cfg.{} = 10\n    assert {n}.{f}(ctx, 1) == {n}.{up}_OK\n",
            m.fields[0]
        )
        .unwrap();
    }
    out
}

/// Sixteen driver modules (header plus source) and eight legacy pytest
/// modules: 40 files.
pub fn c_corpus(seed: u64) -> CCorpus {
    let mut rng = rng(seed);
    let mut modules = Vec::new();
    for name in MODULES {
        let mut verbs = VERBS.to_vec();
        verbs.shuffle(&mut rng);
        let count = rng.random_range(4..8);
        let mut fields: Vec<String> = FIELDS.iter().map(|s| s.to_string()).collect();
        fields.shuffle(&mut rng);
        fields.truncate(rng.random_range(3..8));
        modules.push(Module {
            name: name.to_string(),
            functions: verbs[..count].iter().map(|v| format!("{name}_{v}")).collect(),
            fields,
        });
    }
    let mut files = BTreeMap::new();
    for (i, m) in modules.iter().enumerate() {
        files.insert(format!("include/{}.h", m.name), header(&mut rng, m));
        files.insert(format!("src/{}.c", m.name), source(&mut rng, m));
        if i % 2 == 0 {
            files.insert(format!("tests/test_{}.py", m.name), legacy_tests(&mut rng, m));
        }
    }
    CCorpus { modules, files }
}

/// 57 requirements, each about one driver function.
pub fn requirements(corpus: &CCorpus) -> Vec<Requirement> {
    let mut pairs: Vec<(&Module, &String)> = corpus
        .modules
        .iter()
        .flat_map(|m| m.functions.iter().map(move |f| (m, f)))
        .collect();
    assert!(pairs.len() >= 57, "fixture has only {} functions", pairs.len());
    pairs.shuffle(&mut rng(57));
    pairs
        .into_iter()
        .take(57)
        .enumerate()
        .map(|(i, (m, f))| {
            let up = upper(&m.name);
            Requirement {
                id: format!("REQ-{:03}", i + 1),
                title: format!("{f} behaviour"),
                body: format!(
                    "{f} shall return {up}_ERR_PARAM when called with a NULL context and shall update \
                     the {} configuration of the {} driver only when the state allows it.",
                    m.fields[i % m.fields.len()],
                    m.name
                ),
            }
        })
        .collect()
}

/// One well-formed fenced Python test per requirement.
pub fn mock_responses(reqs: &[Requirement]) -> BTreeMap<String, String> {
    reqs.iter()
        .map(|r| {
            let ident = r.id.to_ascii_lowercase().replace('-', "_");
            let text = format!(
                "Here is the test for {}.\n\n```python\nimport pytest\n\n\ndef test_{ident}():\n    \
                 \"\"\"{}\"\"\"\n    assert True\n```\n",
                r.id, r.title
            );
            (r.id.clone(), text)
        })
        .collect()
}

/// Lowercase alphabetic token, distinct from every token in `avoid`, that
/// lands in the same hash bucket with the same sign as `word`.
fn hash_twin(word: &str, dims: usize, avoid: &BTreeSet<String>) -> String {
    let target = fnv1a64(word.as_bytes());
    let want = (target % dims as u64, target >> 63);
    for n in 0u64.. {
        let mut s = String::from("qz");
        let mut x = n;
        for _ in 0..4 {
            s.push((b'a' + (x % 26) as u8) as char);
            x /= 26;
        }
        let h = fnv1a64(s.as_bytes());
        if (h % dims as u64, h >> 63) == want && !avoid.contains(&s) {
            return s;
        }
    }
    unreachable!()
}

pub struct Adversarial {
    pub documents: Vec<Document>,
    pub query: Requirement,
    pub target_doc: String,
    pub identifier: &'static str,
}

/// A query holding one rare identifier among common words. Five
/// distractors are built from tokens that collide with the common words
/// under the hash embedder, so they are close in dense space but share no
/// token with the query. The target holds the identifier buried in
/// unrelated text. Ten filler chunks pad the corpus.
pub fn adversarial(dims: usize) -> Adversarial {
    let identifier = "vlvXq9_calibrate";
    let query = Requirement {
        id: "REQ-ADV".into(),
        title: "Valve calibration".into(),
        body: format!("The {identifier} routine shall reset the valve controller state after every power loss."),
    };
    let query_tokens: BTreeSet<String> = tokenize_code(&query.body).into_iter().collect();
    let id_tokens: BTreeSet<String> = tokenize_code(identifier).into_iter().collect();
    let common: Vec<String> = query_tokens.difference(&id_tokens).cloned().collect();
    let mut avoid = query_tokens.clone();
    let mut twins = Vec::new();
    for w in &common {
        let t = hash_twin(w, dims, &avoid);
        avoid.insert(t.clone());
        twins.push(t);
    }

    let mut r = rng(5);
    let noise_word = |r: &mut ChaCha8Rng| -> String {
        loop {
            let len = r.random_range(5..9);
            let w: String = (0..len).map(|_| (b'a' + r.random_range(0..26u8)) as char).collect();
            if !avoid.contains(&w) {
                return w;
            }
        }
    };

    let mut documents = Vec::new();
    for i in 0..5 {
        let mut words = twins.clone();
        words.remove(i % words.len());
        words.rotate_left(i);
        documents.push(Document::new(format!("src/distractor_{i}.c"), Role::CSource, &format!("/* {} */", words.join(" "))));
    }
    let noise: Vec<String> = (0..60).map(|_| noise_word(&mut r)).collect();
    let target_doc = "src/valve.c".to_string();
    documents.push(Document::new(
        target_doc.clone(),
        Role::CSource,
        &format!("int {identifier}(void)\n{{\n    /* {} */\n    return 0;\n}}\n", noise.join(" ")),
    ));
    for i in 0..10 {
        let words: Vec<String> = (0..12).map(|_| noise_word(&mut r)).collect();
        documents.push(Document::new(format!("src/filler_{i:02}.c"), Role::CSource, &format!("/* {} */", words.join(" "))));
    }
    Adversarial {
        documents,
        query,
        target_doc,
        identifier,
    }
}
