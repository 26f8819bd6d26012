//! Function-level unit extraction.

use serde::{Deserialize, Serialize};

use super::lexer::{lex, matching_close, Token, TokenKind};
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Function,
    Modifier,
    Fallback,
}

/// One function, modifier or fallback definition together with its docstring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub id: String,
    pub kind: UnitKind,
    /// Empty for fallback units.
    pub name: String,
    #[serde(rename = "code")]
    pub source: String,
    pub docstring: Option<String>,
    pub path: String,
    /// First and last 1-based line of the definition.
    pub span: (usize, usize),
    /// Enclosing contract name; empty for file-level functions.
    #[serde(default)]
    pub contract: String,
}

impl FunctionUnit {
    /// Parses one JSON Lines record.
    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("unit serializes")
    }
}

/// Reads a JSON Lines corpus, skipping blank lines.
pub fn read_corpus(text: &str) -> Result<Vec<FunctionUnit>, FrontendError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            FunctionUnit::from_json_line(l).map_err(|e| FrontendError::Corpus {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_corpus(units: &[FunctionUnit]) -> String {
    let mut out = String::new();
    for u in units {
        out.push_str(&u.to_json_line());
        out.push('\n');
    }
    out
}

/// Checks that braces balance at file scope, ignoring comments and strings.
fn check_braces(tokens: &[Token]) -> Result<(), FrontendError> {
    let mut open = Vec::new();
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Punct) {
        match t.text.as_str() {
            "{" => open.push(t.start),
            "}"
                if open.pop().is_none() => {
                    return Err(FrontendError::UnbalancedBraces { offset: t.start });
                }
            _ => {}
        }
    }
    match open.pop() {
        Some(offset) => Err(FrontendError::UnbalancedBraces { offset }),
        None => Ok(()),
    }
}

/// Splits a Solidity file into function-level units.
///
/// Definitions are recognized at contract scope (and at file scope for free
/// functions). A comment block that ends on the line right above a definition,
/// with nothing else on its lines, becomes the docstring.
pub fn extract_functions(source: &str, path: &str) -> Result<Vec<FunctionUnit>, FrontendError> {
    let all = lex(source);
    let code: Vec<Token> = all.iter().filter(|t| !t.is_comment()).cloned().collect();
    check_braces(&code)?;

    let mut units = Vec::new();
    // Contract-name per brace depth 1 scope.
    let mut contract = String::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < code.len() {
        let t = &code[i];
        if t.kind == TokenKind::Punct {
            match t.text.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth == 0 {
                        contract.clear();
                    }
                }
                _ => {}
            }
            i += 1;
            continue;
        }
        if t.kind != TokenKind::Ident {
            i += 1;
            continue;
        }
        if depth == 0 && matches!(t.text.as_str(), "contract" | "library" | "interface") {
            if let Some(n) = code.get(i + 1).filter(|n| n.kind == TokenKind::Ident) {
                contract = n.text.clone();
            }
            i += 1;
            continue;
        }
        let at_scope = depth == 0 || (depth == 1 && !contract.is_empty());
        if !at_scope {
            i += 1;
            continue;
        }
        let next_is = |k: usize, s: &str| code.get(i + k).is_some_and(|n| n.is_punct(s));
        let def = match t.text.as_str() {
            "function" if next_is(1, "(") => Some((UnitKind::Fallback, String::new())),
            "function" | "modifier" => code.get(i + 1).filter(|n| n.kind == TokenKind::Ident).map(|n| {
                let kind = if t.text == "function" { UnitKind::Function } else { UnitKind::Modifier };
                (kind, n.text.clone())
            }),
            "fallback" | "receive" if next_is(1, "(") => Some((UnitKind::Fallback, String::new())),
            "constructor" if next_is(1, "(") => Some((UnitKind::Function, "constructor".to_string())),
            _ => None,
        };
        let Some((kind, name)) = def else {
            i += 1;
            continue;
        };
        // Header runs to the body brace, or to `;` for declarations without a body.
        let mut j = i + 1;
        let mut parens = 0i32;
        let mut body_open = None;
        while j < code.len() {
            let tj = &code[j];
            if tj.is_punct("(") {
                parens += 1;
            } else if tj.is_punct(")") {
                parens -= 1;
            } else if parens == 0 && tj.is_punct("{") {
                body_open = Some(j);
                break;
            } else if parens == 0 && (tj.is_punct(";") || tj.is_punct("}")) {
                break;
            }
            j += 1;
        }
        let Some(open) = body_open else {
            i = j.max(i + 1);
            continue;
        };
        let close = matching_close(&code, open).ok_or(FrontendError::UnbalancedBraces {
            offset: code[open].start,
        })?;
        let start_tok = &code[i];
        let end_tok = &code[close];
        let docstring = docstring_before(&all, start_tok);
        let label = if name.is_empty() { "fallback" } else { name.as_str() };
        let id = if contract.is_empty() {
            format!("{path}#{label}@{}", start_tok.line)
        } else {
            format!("{path}#{contract}.{label}@{}", start_tok.line)
        };
        units.push(FunctionUnit {
            id,
            kind,
            name,
            source: source[start_tok.start..end_tok.end].to_string(),
            docstring,
            path: path.to_string(),
            span: (start_tok.line, end_tok.end_line),
            contract: contract.clone(),
        });
        i = close + 1;
    }
    Ok(units)
}

/// Collects the comment block directly above `def`.
fn docstring_before(all: &[Token], def: &Token) -> Option<String> {
    let pos = all.iter().position(|t| t.start == def.start)?;
    let mut block: Vec<&Token> = Vec::new();
    let mut expect_line = def.line;
    let mut k = pos;
    while k > 0 {
        let c = &all[k - 1];
        if !c.is_comment() || c.end_line + 1 != expect_line && c.end_line != expect_line {
            break;
        }
        // A trailing comment after code on the same line is not a docstring.
        let shares_line_with_code = all[..k - 1]
            .iter()
            .rev()
            .find(|p| !p.is_comment())
            .is_some_and(|p| p.end_line == c.line);
        if shares_line_with_code {
            break;
        }
        block.push(c);
        expect_line = c.line;
        k -= 1;
    }
    if block.is_empty() {
        return None;
    }
    block.reverse();
    let text = clean_comment_block(&block);
    (!text.is_empty()).then_some(text)
}

fn clean_comment_block(block: &[&Token]) -> String {
    let mut lines = Vec::new();
    for c in block {
        let body = match c.kind {
            TokenKind::BlockComment => {
                let inner = c.text.trim_start_matches("/*").trim_start_matches('*');
                inner.strip_suffix("*/").unwrap_or(inner).to_string()
            }
            _ => c.text.trim_start_matches('/').to_string(),
        };
        for raw in body.lines() {
            let l = raw.trim().trim_start_matches('*').trim();
            if l.starts_with("@param") || l.starts_with("@return") || l.starts_with("@inheritdoc") {
                continue;
            }
            let l = l
                .strip_prefix("@notice")
                .or_else(|| l.strip_prefix("@dev"))
                .or_else(|| l.strip_prefix("@title"))
                .unwrap_or(l)
                .trim();
            if !l.is_empty() {
                lines.push(l.to_string());
            }
        }
    }
    lines.join(" ")
}

/// Source with comments removed and whitespace runs collapsed to one space.
pub fn normalized_source(source: &str) -> String {
    let mut stripped = String::with_capacity(source.len());
    let mut last = 0;
    for t in lex(source).iter().filter(|t| t.is_comment()) {
        stripped.push_str(&source[last..t.start]);
        stripped.push(' ');
        last = t.end;
    }
    stripped.push_str(&source[last..]);
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops units whose normalized source was already seen, keeping the first.
pub fn deduplicate(units: Vec<FunctionUnit>) -> Vec<FunctionUnit> {
    let mut seen = std::collections::HashSet::new();
    units
        .into_iter()
        .filter(|u| seen.insert(normalized_source(&u.source)))
        .collect()
}
