//! Lexical scanner for Solidity source.
//!
//! The scanner is deliberately shallow: it knows about comments, string and
//! number literals, identifiers and operators, and nothing about grammar.
//! Everything structural (function boundaries, statements, expressions) is
//! recovered on top of the token stream by pattern rules.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Punct,
    LineComment,
    BlockComment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset of the first byte.
    pub start: usize,
    /// Byte offset one past the last byte.
    pub end: usize,
    /// 1-based line of the first byte.
    pub line: usize,
    /// 1-based line of the last byte.
    pub end_line: usize,
}

impl Token {
    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TokenKind::LineComment | TokenKind::BlockComment)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }

    pub fn is_ident(&self, s: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == s
    }
}

const PUNCT3: &[&str] = &["<<=", ">>=", "**=", ">>>"];
const PUNCT2: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "|=", "&=",
    "^=", "<<", ">>", "**", "=>", "->", ":=",
];

/// Splits `src` into tokens. Never fails: unterminated comments and strings
/// extend to the end of input, and unknown bytes become single-char punctuation.
pub fn lex(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;

    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let start_line = line;
        let kind;
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            kind = TokenKind::LineComment;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                if bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            kind = TokenKind::BlockComment;
        } else if c == b'"' || c == b'\'' {
            i += 1;
            while i < bytes.len() && bytes[i] != c {
                if bytes[i] == b'\\' {
                    i += 1;
                } else if bytes[i] == b'\n' {
                    line += 1;
                }
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            kind = TokenKind::Str;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
            {
                i += 1;
            }
            kind = TokenKind::Number;
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            kind = TokenKind::Ident;
        } else if !c.is_ascii() {
            // Skip the whole UTF-8 sequence as one opaque token.
            i += 1;
            while i < bytes.len() && (bytes[i] & 0xC0) == 0x80 {
                i += 1;
            }
            kind = TokenKind::Punct;
        } else {
            let rest = &src[i..];
            let len = PUNCT3
                .iter()
                .find(|p| rest.starts_with(**p))
                .or_else(|| PUNCT2.iter().find(|p| rest.starts_with(**p)))
                .map_or(1, |p| p.len());
            i += len;
            kind = TokenKind::Punct;
        }
        out.push(Token {
            kind,
            text: src[start..i].to_string(),
            start,
            end: i,
            line: start_line,
            end_line: line,
        });
    }
    out
}

/// Tokens with comments removed.
pub fn code_tokens(src: &str) -> Vec<Token> {
    lex(src).into_iter().filter(|t| !t.is_comment()).collect()
}

/// Index of the token closing the group opened at `open`, honoring nesting of
/// the same bracket pair. Returns `None` when the group is never closed.
pub fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let (o, c) = match tokens[open].text.as_str() {
        "(" => ("(", ")"),
        "[" => ("[", "]"),
        "{" => ("{", "}"),
        _ => return None,
    };
    let mut depth = 0usize;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        if t.text == o {
            depth += 1;
        } else if t.text == c {
            depth -= 1;
            if depth == 0 {
                return Some(j);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_comments_strings_and_operators() {
        let toks = lex("a += \"x}\"; // c {\n/* b\n */ b>>=1");
        let kinds: Vec<_> = toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            kinds,
            vec![
                (TokenKind::Ident, "a"),
                (TokenKind::Punct, "+="),
                (TokenKind::Str, "\"x}\""),
                (TokenKind::Punct, ";"),
                (TokenKind::LineComment, "// c {"),
                (TokenKind::BlockComment, "/* b\n */"),
                (TokenKind::Ident, "b"),
                (TokenKind::Punct, ">>="),
                (TokenKind::Number, "1"),
            ]
        );
        assert_eq!(toks[5].line, 2);
        assert_eq!(toks[5].end_line, 3);
        assert_eq!(toks[6].line, 3);
    }

    #[test]
    fn matching_close_nests() {
        let toks = code_tokens("{ a { b } ( ) }");
        assert_eq!(matching_close(&toks, 0), Some(toks.len() - 1));
        assert_eq!(matching_close(&toks, 2), Some(4));
        assert_eq!(matching_close(&code_tokens("{ {"), 0), None);
    }
}
