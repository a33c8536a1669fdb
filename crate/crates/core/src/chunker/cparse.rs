//! Top-level C declaration recognizer.
//!
//! Not a grammar: it walks the token stream at brace depth zero and
//! classifies each declaration by shape. It never fails; anything it cannot
//! make sense of is returned as a `DeclKind::Other` span so no text is lost.

use serde::{Deserialize, Serialize};

use super::clex::{lex, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclKind {
    Function,
    StructDef,
    EnumDef,
    Typedef,
    GlobalVar,
    Preprocessor,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CDecl {
    pub kind: DeclKind,
    /// Character offset, including any attached leading comment.
    pub start: usize,
    pub end: usize,
    pub name: String,
    pub leading_comment_start: Option<usize>,
}

const QUALIFIERS: &[&str] = &[
    "static", "extern", "const", "volatile", "inline", "register", "__inline", "__inline__",
];

enum Statement {
    /// Token index one past the closing `}` of the body.
    Function { end: usize },
    /// Token index one past the terminating `;`.
    Terminated { end: usize },
}

fn punct(t: &Token) -> Option<char> {
    match t.kind {
        TokenKind::Punct(c) => Some(c),
        _ => None,
    }
}

fn ident<'a>(t: &Token, chars: &'a [char], buf: &'a mut String) -> Option<&'a str> {
    if t.kind != TokenKind::Ident {
        return None;
    }
    buf.clear();
    buf.extend(&chars[t.start..t.end]);
    Some(buf.as_str())
}

/// Scans one statement starting at token `i`. `None` means the input ended
/// (or a stray `}` appeared) before the statement terminated.
fn scan_statement(toks: &[Token], chars: &[char], i: usize) -> Option<Statement> {
    let mut parens = 0usize;
    let mut braces = 0usize;
    let mut top_paren_closed = false;
    let mut saw_eq = false;
    let mut is_typedef = false;
    let mut buf = String::new();
    let mut j = i;
    while j < toks.len() {
        let t = &toks[j];
        if t.is_trivia() || t.kind == TokenKind::Directive {
            j += 1;
            continue;
        }
        let top = parens == 0 && braces == 0;
        if top && ident(t, chars, &mut buf) == Some("typedef") {
            is_typedef = true;
        }
        match punct(t) {
            Some('(') => parens += 1,
            Some(')') => {
                parens = parens.saturating_sub(1);
                if parens == 0 && braces == 0 {
                    top_paren_closed = true;
                }
            }
            Some('=') if top => saw_eq = true,
            Some(';') if top => return Some(Statement::Terminated { end: j + 1 }),
            Some('{') if top && top_paren_closed && !saw_eq && !is_typedef => {
                let mut depth = 0usize;
                for (k, tk) in toks.iter().enumerate().skip(j) {
                    match punct(tk) {
                        Some('{') => depth += 1,
                        Some('}') => {
                            depth -= 1;
                            if depth == 0 {
                                return Some(Statement::Function { end: k + 1 });
                            }
                        }
                        _ => {}
                    }
                }
                return None;
            }
            Some('{') => braces += 1,
            Some('}') => {
                if braces == 0 {
                    return None;
                }
                braces -= 1;
            }
            _ => {}
        }
        j += 1;
    }
    None
}

/// Significant tokens at paren/brace/bracket depth zero, plus whether a
/// top-level brace group occurred.
fn top_level(toks: &[Token]) -> (Vec<Token>, bool) {
    let mut depth = 0usize;
    let mut had_braces = false;
    let mut out = Vec::new();
    for t in toks.iter().filter(|t| !t.is_trivia() && t.kind != TokenKind::Directive) {
        match punct(t) {
            Some('(' | '[' | '{') => {
                if depth == 0 {
                    out.push(*t);
                    if punct(t) == Some('{') {
                        had_braces = true;
                    }
                }
                depth += 1;
                continue;
            }
            Some(')' | ']' | '}') => {
                depth = depth.saturating_sub(1);
                continue;
            }
            _ => {}
        }
        if depth == 0 {
            out.push(*t);
        }
    }
    (out, had_braces)
}

fn text_of(t: &Token, chars: &[char]) -> String {
    t.text(chars)
}

fn name_before_first_paren(top: &[Token], chars: &[char]) -> String {
    top.iter()
        .position(|t| punct(t) == Some('('))
        .and_then(|p| p.checked_sub(1))
        .map(|p| &top[p])
        .filter(|t| t.kind == TokenKind::Ident)
        .map(|t| text_of(t, chars))
        .unwrap_or_default()
}

/// `( * name )` as in function-pointer declarators.
fn pointer_declarator_name(toks: &[Token], chars: &[char]) -> Option<String> {
    let sig: Vec<&Token> = toks.iter().filter(|t| !t.is_trivia()).collect();
    sig.windows(3).find_map(|w| {
        (punct(w[0]) == Some('(') && punct(w[1]) == Some('*') && w[2].kind == TokenKind::Ident)
            .then(|| text_of(w[2], chars))
    })
}

fn last_ident_before_init(top: &[Token], chars: &[char]) -> String {
    let stop = top
        .iter()
        .position(|t| matches!(punct(t), Some('=' | '[' | ';')))
        .unwrap_or(top.len());
    top[..stop]
        .iter()
        .rev()
        .find(|t| t.kind == TokenKind::Ident)
        .map(|t| text_of(t, chars))
        .unwrap_or_default()
}

fn classify_terminated(toks: &[Token], chars: &[char]) -> (DeclKind, String) {
    let (top, had_braces) = top_level(toks);
    let words: Vec<String> = top
        .iter()
        .filter(|t| t.kind == TokenKind::Ident)
        .map(|t| text_of(t, chars))
        .collect();

    if words.iter().any(|w| w == "typedef") {
        let name = pointer_declarator_name(toks, chars)
            .unwrap_or_else(|| last_ident_before_init(&top, chars));
        return (DeclKind::Typedef, name);
    }

    let first_kw = top
        .iter()
        .filter(|t| t.kind == TokenKind::Ident)
        .map(|t| text_of(t, chars))
        .find(|w| !QUALIFIERS.contains(&w.as_str()));
    if let Some(kw @ ("struct" | "union" | "enum")) = first_kw.as_deref() {
        let kw_pos = top
            .iter()
            .position(|t| t.kind == TokenKind::Ident && text_of(t, chars) == kw)
            .unwrap_or(0);
        let tag = top
            .get(kw_pos + 1)
            .filter(|t| t.kind == TokenKind::Ident)
            .map(|t| text_of(t, chars));
        if had_braces {
            let kind = if kw == "enum" {
                DeclKind::EnumDef
            } else {
                DeclKind::StructDef
            };
            let name = tag.unwrap_or_else(|| last_ident_before_init(&top, chars));
            return (kind, name);
        }
        // Forward declaration: `struct foo;`
        if top.len() <= 3 {
            return (DeclKind::Other, tag.unwrap_or_default());
        }
    }

    let has_paren = top.iter().any(|t| punct(t) == Some('('));
    let eq_before_paren = top
        .iter()
        .position(|t| punct(t) == Some('='))
        .is_some_and(|eq| {
            top.iter()
                .position(|t| punct(t) == Some('('))
                .is_none_or(|p| eq < p)
        });
    if has_paren && !eq_before_paren {
        if let Some(name) = pointer_declarator_name(toks, chars) {
            return (DeclKind::GlobalVar, name);
        }
        // Prototype or top-level macro invocation.
        return (DeclKind::Other, name_before_first_paren(&top, chars));
    }

    let has_eq = top.iter().any(|t| punct(t) == Some('='));
    if words.len() >= 2 || (!words.is_empty() && has_eq) {
        return (DeclKind::GlobalVar, last_ident_before_init(&top, chars));
    }
    (DeclKind::Other, String::new())
}

fn directive_name(text: &str) -> String {
    let body = text.trim_start_matches('#').trim_start();
    let mut parts = body.split(|c: char| !(c == '_' || c.is_alphanumeric()));
    match parts.next() {
        Some("define" | "undef" | "ifdef" | "ifndef") => body
            .split_whitespace()
            .nth(1)
            .map(|w| {
                w.chars()
                    .take_while(|c| *c == '_' || c.is_alphanumeric())
                    .collect()
            })
            .unwrap_or_default(),
        _ => String::new(),
    }
}

pub fn parse_c_toplevel(text: &str) -> Vec<CDecl> {
    let chars: Vec<char> = text.chars().collect();
    parse_chars(&chars)
}

pub(crate) fn parse_chars(chars: &[char]) -> Vec<CDecl> {
    let toks = lex(chars);
    let n = toks.len();
    let mut decls = Vec::new();
    let mut i = 0;
    loop {
        let mut comment_start = None;
        let mut comment_end = 0;
        while i < n && toks[i].is_trivia() {
            if toks[i].is_comment() {
                comment_start.get_or_insert(toks[i].start);
                comment_end = toks[i].end;
            }
            i += 1;
        }
        if i == n {
            if let Some(cs) = comment_start {
                decls.push(CDecl {
                    kind: DeclKind::Other,
                    start: cs,
                    end: comment_end,
                    name: String::new(),
                    leading_comment_start: Some(cs),
                });
            }
            break;
        }

        let start = comment_start.unwrap_or(toks[i].start);
        let (kind, name, mut end_tok) = if toks[i].kind == TokenKind::Directive {
            let name = directive_name(&toks[i].text(chars));
            (DeclKind::Preprocessor, name, i + 1)
        } else {
            match scan_statement(&toks, chars, i) {
                Some(Statement::Function { end }) => {
                    let (top, _) = top_level(&toks[i..end]);
                    (
                        DeclKind::Function,
                        name_before_first_paren(&top, chars),
                        end,
                    )
                }
                Some(Statement::Terminated { end }) => {
                    let (kind, name) = classify_terminated(&toks[i..end], chars);
                    (kind, name, end)
                }
                None => {
                    // Recover: swallow the rest of the current line.
                    let mut k = i + 1;
                    while k < n && !(toks[k].kind == TokenKind::Whitespace && toks[k].contains_newline(chars)) {
                        k += 1;
                    }
                    (DeclKind::Other, String::new(), k)
                }
            }
        };

        // A comment on the same line as the terminator belongs to this decl.
        let mut k = end_tok;
        while k < n && toks[k].kind == TokenKind::Whitespace && !toks[k].contains_newline(chars) {
            k += 1;
        }
        if k < n && toks[k].is_comment() && !toks[k].contains_newline(chars) {
            end_tok = k + 1;
        }

        let end = toks[end_tok - 1].end;
        decls.push(CDecl {
            kind,
            start,
            end,
            name,
            leading_comment_start: comment_start,
        });
        i = end_tok;
    }
    decls
}
