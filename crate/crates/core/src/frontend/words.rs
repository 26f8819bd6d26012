//! Identifier splitting and the small keyword tables shared by the frontend
//! and the graph builder.

/// Splits an identifier on underscores and case boundaries and lowercases
/// the pieces. `itemCount`, `item_count` and `ItemCount` all yield
/// `["item", "count"]`; acronym runs stay together (`ERCToken` -> `erc`, `token`).
/// Every returned word matches `[a-z0-9]+`.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in ident.split(|c: char| !c.is_ascii_alphanumeric()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let boundary = i > 0 && c.is_ascii_uppercase() && {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
                prev.is_ascii_lowercase() || prev.is_ascii_digit() || (prev.is_ascii_uppercase() && next_lower)
            };
            if boundary && !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            cur.push(c.to_ascii_lowercase());
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words
}

/// Normalizes free text (docstrings, queries) into words: anything that is not
/// alphanumeric separates words, then each piece is identifier-split.
pub fn normalize_text(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|s| !s.is_empty())
        .flat_map(split_identifier)
        .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

/// Elementary type names (`uint256`, `bytes32`, `address`, ...).
pub fn is_elementary_type(s: &str) -> bool {
    fn sized(s: &str, prefix: &str) -> bool {
        s.strip_prefix(prefix)
            .is_some_and(|rest| rest.is_empty() || rest.chars().all(|c| c.is_ascii_digit()))
    }
    matches!(s, "address" | "bool" | "string" | "byte" | "var" | "fixed" | "ufixed")
        || sized(s, "uint")
        || sized(s, "int")
        || sized(s, "bytes")
}

/// Identifiers that never name a program element.
pub fn is_reserved(s: &str) -> bool {
    is_elementary_type(s)
        || matches!(
            s,
            "if" | "else"
                | "while"
                | "do"
                | "for"
                | "break"
                | "continue"
                | "return"
                | "returns"
                | "try"
                | "catch"
                | "require"
                | "assert"
                | "revert"
                | "emit"
                | "new"
                | "delete"
                | "true"
                | "false"
                | "memory"
                | "storage"
                | "calldata"
                | "payable"
                | "public"
                | "private"
                | "internal"
                | "external"
                | "view"
                | "pure"
                | "constant"
                | "immutable"
                | "virtual"
                | "override"
                | "function"
                | "modifier"
                | "mapping"
                | "type"
                | "unchecked"
                | "assembly"
                | "wei"
                | "gwei"
                | "szabo"
                | "finney"
                | "ether"
                | "seconds"
                | "minutes"
                | "hours"
                | "days"
                | "weeks"
                | "years"
                | "_"
                | "super"
                | "indexed"
                | "anonymous"
                | "event"
                | "struct"
                | "enum"
                | "using"
                | "is"
                | "import"
                | "pragma"
                | "constructor"
                | "fallback"
                | "receive"
        )
}

/// Built-in global variables and their (normalized) types.
pub fn system_variable_type(path: &str) -> Option<&'static str> {
    Some(match path {
        "msg.sender" | "tx.origin" | "block.coinbase" | "this" => "address",
        "msg.value" | "msg.gas" | "tx.gasprice" | "block.timestamp" | "block.number"
        | "block.difficulty" | "block.gaslimit" | "block.chainid" | "block.basefee"
        | "block.prevrandao" | "now" => "uint",
        "msg.data" => "bytes",
        "msg.sig" => "bytes",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_camel_and_snake_case() {
        assert_eq!(split_identifier("itemCount"), vec!["item", "count"]);
        assert_eq!(split_identifier("item_count"), vec!["item", "count"]);
        assert_eq!(split_identifier("_totalSupply"), vec!["total", "supply"]);
        assert_eq!(split_identifier("ERCToken"), vec!["erc", "token"]);
        assert_eq!(split_identifier("balanceOf"), vec!["balance", "of"]);
        assert_eq!(split_identifier("uint256"), vec!["uint256"]);
        assert_eq!(split_identifier("count"), vec!["count"]);
        assert!(split_identifier("__").is_empty());
    }

    #[test]
    fn normalizes_free_text() {
        assert_eq!(normalize_text("Destroy  Tokens"), normalize_text("destroy tokens"));
        assert_eq!(normalize_text("@dev burns 10 tokens."), vec!["dev", "burns", "tokens"]);
    }

    #[test]
    fn elementary_types() {
        for t in ["uint", "uint256", "int8", "bytes32", "bytes", "address", "bool", "string"] {
            assert!(is_elementary_type(t), "{t}");
        }
        for t in ["uints", "amount", "bytesx", "Uint"] {
            assert!(!is_elementary_type(t), "{t}");
        }
    }
}
