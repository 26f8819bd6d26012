//! Textual modalities of a unit: code tokens, name words and API calls.

use serde::{Deserialize, Serialize};

use super::extract::FunctionUnit;
use super::lexer::{code_tokens, matching_close, Token, TokenKind};
use super::words::{is_elementary_type, is_reserved, split_identifier};

/// Length caps for the three textual sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub tokens: usize,
    pub name: usize,
    pub api: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { tokens: 100, name: 6, api: 20 }
    }
}

/// A capped word sequence. `words.len()` is the true (pre-padding) length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSeq {
    pub words: Vec<String>,
}

impl WordSeq {
    fn capped(words: Vec<String>, cap: usize) -> Self {
        let mut words = words;
        words.truncate(cap);
        WordSeq { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Code tokens (T), function-name words (F) and API invocation words (A).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBundle {
    pub tokens: WordSeq,
    pub name: WordSeq,
    pub api: WordSeq,
}

impl TokenBundle {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty() && self.name.is_empty() && self.api.is_empty()
    }
}

/// Header and body of a unit: tokens before the outermost `{`, and tokens
/// strictly inside it. Inline assembly blocks are removed from the body.
pub(crate) fn split_header_body(source: &str) -> (Vec<Token>, Vec<Token>) {
    let toks = code_tokens(source);
    let mut parens = 0i32;
    let mut open = None;
    for (i, t) in toks.iter().enumerate() {
        if t.is_punct("(") {
            parens += 1;
        } else if t.is_punct(")") {
            parens -= 1;
        } else if parens == 0 && t.is_punct("{") {
            open = Some(i);
            break;
        }
    }
    let Some(open) = open else {
        return (toks, Vec::new());
    };
    let close = matching_close(&toks, open).unwrap_or(toks.len());
    let header = toks[..open].to_vec();
    let raw_body = &toks[open + 1..close.min(toks.len())];
    (header, strip_assembly(raw_body))
}

fn strip_assembly(tokens: &[Token]) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].is_ident("assembly") {
            // `assembly ("memory-safe")? { ... }`
            let mut j = i + 1;
            while j < tokens.len() && !tokens[j].is_punct("{") && !tokens[j].is_punct(";") {
                j += 1;
            }
            if j < tokens.len() && tokens[j].is_punct("{") {
                i = matching_close(tokens, j).map_or(tokens.len(), |c| c + 1);
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Index of the `(` that makes `tokens[i]` a callee, if it is one.
/// Call options (`x.call{value: v}(...)`) are looked through.
pub(crate) fn call_paren(tokens: &[Token], i: usize) -> Option<usize> {
    let t = &tokens[i];
    if t.kind != TokenKind::Ident || is_reserved(&t.text) {
        return None;
    }
    let mut j = i + 1;
    if tokens.get(j).is_some_and(|n| n.is_punct("{")) {
        j = matching_close(tokens, j)? + 1;
    }
    tokens.get(j).filter(|n| n.is_punct("(")).map(|_| j)
}

/// Callee names in source order. Elementary-type conversions and the guard
/// builtins (`require`, `assert`, `revert`) are not API calls.
pub(crate) fn callees(body: &[Token]) -> Vec<&str> {
    (0..body.len())
        .filter(|&i| call_paren(body, i).is_some())
        .filter(|&i| i == 0 || !body[i - 1].is_ident("function"))
        .map(|i| body[i].text.as_str())
        .filter(|s| !is_elementary_type(s))
        .collect()
}

/// Extracts the three textual modalities of `unit`.
pub fn tokenize_code(unit: &FunctionUnit, caps: Caps) -> TokenBundle {
    let (_, body) = split_header_body(&unit.source);
    let tokens: Vec<String> = body
        .iter()
        .filter(|t| t.kind == TokenKind::Ident)
        .flat_map(|t| split_identifier(&t.text))
        .collect();
    let api: Vec<String> = callees(&body).into_iter().flat_map(split_identifier).collect();
    TokenBundle {
        tokens: WordSeq::capped(tokens, caps.tokens),
        name: WordSeq::capped(split_identifier(&unit.name), caps.name),
        api: WordSeq::capped(api, caps.api),
    }
}
