/// Code-aware tokenizer.
///
/// Words are maximal runs of alphanumerics and underscores. Each word is
/// split at underscores, camelCase humps and letter/digit transitions; the
/// lowercased pieces are emitted in order, followed by the whole lowercased
/// word when it had more than one piece.
pub fn tokenize_code(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else if !word.is_empty() {
            split_word(&word, &mut out);
            word.clear();
        }
    }
    if !word.is_empty() {
        split_word(&word, &mut out);
    }
    out
}

fn split_word(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut pieces: Vec<String> = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if let Some(prev) = cur.chars().last() {
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            let boundary = (prev.is_lowercase() && c.is_uppercase())
                || (prev.is_alphabetic() && c.is_numeric())
                || (prev.is_numeric() && c.is_alphabetic())
                || (prev.is_uppercase() && c.is_uppercase() && next_lower);
            if boundary {
                pieces.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        pieces.push(cur);
    }
    let compound = pieces.len() > 1;
    out.extend(pieces.into_iter().map(|p| p.to_lowercase()));
    if compound {
        out.push(word.to_lowercase());
    }
}
