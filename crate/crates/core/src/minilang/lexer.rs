use serde::{Deserialize, Serialize};

use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKind {
    Identifier,
    Keyword,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    Punctuation,
}

/// 1-based line and column of the first character of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text. For string literals this is the decoded contents, without quotes.
    pub text: String,
    pub position: Position,
}

pub const KEYWORDS: &[&str] = &["fn", "struct", "if", "else", "while", "return", "null", "new"];

// Longest match first.
const PUNCTUATION: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", ".", ":", "=", "<",
    ">", "+", "-", "*", "/", "%", "!",
];

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut column = 1u32;

    macro_rules! advance {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance!();
            }
            continue;
        }
        let position = Position { line, column };
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance!();
            }
            let text: String = chars[start..i].iter().collect();
            let kind = if KEYWORDS.contains(&text.as_str()) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            tokens.push(Token { kind, text, position });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance!();
            }
            let mut kind = TokenKind::IntLiteral;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                kind = TokenKind::FloatLiteral;
                advance!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance!();
                }
            }
            let text: String = chars[start..i].iter().collect();
            tokens.push(Token { kind, text, position });
            continue;
        }
        if c == '"' {
            advance!();
            let mut text = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(SyntaxError::new(position, ["closing '\"'"]));
                    }
                    Some('"') => {
                        advance!();
                        break;
                    }
                    Some('\\') => {
                        advance!();
                        let escaped = match chars.get(i) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                let at = Position { line, column };
                                return Err(SyntaxError::new(at, ["escape sequence"]));
                            }
                        };
                        text.push(escaped);
                        advance!();
                    }
                    Some(&other) => {
                        text.push(other);
                        advance!();
                    }
                }
            }
            tokens.push(Token { kind: TokenKind::StringLiteral, text, position });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTUATION.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    advance!();
                }
                tokens.push(Token {
                    kind: TokenKind::Punctuation,
                    text: (*p).to_string(),
                    position,
                });
            }
            None => return Err(SyntaxError::new(position, ["token"])),
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_increase() {
        let toks = tokenize("fn abs(v) {\n  return 0 - v; // neg\n}").unwrap();
        assert!(toks.windows(2).all(|w| w[0].position < w[1].position));
        assert_eq!(toks[0].kind, TokenKind::Keyword);
        assert_eq!(toks[1].text, "abs");
        assert_eq!(toks.last().unwrap().position, Position { line: 3, column: 1 });
    }

    #[test]
    fn literals() {
        let toks = tokenize(r#"12 3.5 "a\"b" x.y"#).unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            [
                TokenKind::IntLiteral,
                TokenKind::FloatLiteral,
                TokenKind::StringLiteral,
                TokenKind::Identifier,
                TokenKind::Punctuation,
                TokenKind::Identifier
            ]
        );
        assert_eq!(toks[2].text, "a\"b");
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize("x = \"abc").unwrap_err();
        assert_eq!(err.position.line, 1);
        assert_eq!(err.position.column, 5);
    }

    #[test]
    fn two_char_operators() {
        let toks = tokenize("a<=b!=c").unwrap();
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["a", "<=", "b", "!=", "c"]);
    }
}
