//! Minimal C lexer. Enough to know where comments, literals and
//! preprocessor lines are so that brace depth can be tracked reliably.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    LineComment,
    BlockComment,
    Str,
    CharLit,
    /// A whole preprocessor line, including `\` continuations.
    Directive,
    Ident,
    Number,
    Punct(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_trivia(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Whitespace | TokenKind::LineComment | TokenKind::BlockComment
        )
    }

    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TokenKind::LineComment | TokenKind::BlockComment)
    }

    pub fn text(&self, chars: &[char]) -> String {
        chars[self.start..self.end].iter().collect()
    }

    pub fn contains_newline(&self, chars: &[char]) -> bool {
        chars[self.start..self.end].contains(&'\n')
    }
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// Scans a quoted literal starting at `i` (the opening quote). Unterminated
/// literals stop before the end of the line.
fn scan_quoted(chars: &[char], i: usize, quote: char) -> usize {
    let mut j = i + 1;
    while j < chars.len() {
        match chars[j] {
            '\\' => j += 2,
            '\n' => return j,
            c if c == quote => return j + 1,
            _ => j += 1,
        }
    }
    chars.len()
}

fn scan_block_comment(chars: &[char], i: usize) -> usize {
    let mut j = i + 2;
    while j + 1 < chars.len() {
        if chars[j] == '*' && chars[j + 1] == '/' {
            return j + 2;
        }
        j += 1;
    }
    chars.len()
}

fn scan_line_end(chars: &[char], i: usize) -> usize {
    chars[i..]
        .iter()
        .position(|&c| c == '\n')
        .map_or(chars.len(), |p| i + p)
}

fn scan_directive(chars: &[char], i: usize) -> usize {
    let mut j = i + 1;
    while j < chars.len() {
        match chars[j] {
            '\n' => return j,
            '\\' if chars.get(j + 1) == Some(&'\n') => j += 2,
            '/' if chars.get(j + 1) == Some(&'*') => j = scan_block_comment(chars, j),
            '/' if chars.get(j + 1) == Some(&'/') => return scan_line_end(chars, j),
            '"' => j = scan_quoted(chars, j, '"'),
            _ => j += 1,
        }
    }
    chars.len()
}

pub fn lex(chars: &[char]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut at_line_start = true;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let (kind, end) = if c.is_whitespace() {
            let mut j = i;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            (TokenKind::Whitespace, j)
        } else if c == '/' && next == Some('/') {
            (TokenKind::LineComment, scan_line_end(chars, i))
        } else if c == '/' && next == Some('*') {
            (TokenKind::BlockComment, scan_block_comment(chars, i))
        } else if c == '#' && at_line_start {
            (TokenKind::Directive, scan_directive(chars, i))
        } else if c == '"' {
            (TokenKind::Str, scan_quoted(chars, i, '"'))
        } else if c == '\'' {
            (TokenKind::CharLit, scan_quoted(chars, i, '\''))
        } else if is_ident_start(c) {
            let mut j = i + 1;
            while j < chars.len() && is_ident_continue(chars[j]) {
                j += 1;
            }
            (TokenKind::Ident, j)
        } else if c.is_ascii_digit() {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '.' || chars[j] == '_')
            {
                j += 1;
            }
            (TokenKind::Number, j)
        } else {
            (TokenKind::Punct(c), i + 1)
        };
        let tok = Token {
            kind,
            start: i,
            end,
        };
        match kind {
            TokenKind::Whitespace => {
                if tok.contains_newline(chars) {
                    at_line_start = true;
                }
            }
            TokenKind::Directive => at_line_start = false,
            _ => at_line_start = false,
        }
        tokens.push(tok);
        i = end;
    }
    tokens
}

/// Brace balance over code tokens only (comments, literals and directives
/// are opaque). Returns `Err(position)` of the offending brace: a stray `}`
/// or the last unmatched `{`.
pub fn check_braces(tokens: &[Token]) -> Result<(), usize> {
    let mut open: Vec<usize> = Vec::new();
    for t in tokens {
        match t.kind {
            TokenKind::Punct('{') => open.push(t.start),
            TokenKind::Punct('}') => {
                if open.pop().is_none() {
                    return Err(t.start);
                }
            }
            _ => {}
        }
    }
    match open.last() {
        Some(&pos) => Err(pos),
        None => Ok(()),
    }
}

pub fn braces_balanced(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    check_braces(&lex(&chars)).is_ok()
}
