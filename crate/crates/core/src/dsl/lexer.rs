//! Tokenizer for factor formulas. Byte offsets are kept on every token so
//! parse errors can point at their source span.

use super::parser::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Question,
    Colon,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

pub(super) fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
                continue;
            }
            '(' => tokens.push(Token { tok: Tok::LParen, offset: start }),
            ')' => tokens.push(Token { tok: Tok::RParen, offset: start }),
            ',' => tokens.push(Token { tok: Tok::Comma, offset: start }),
            '+' => tokens.push(Token { tok: Tok::Plus, offset: start }),
            '-' => tokens.push(Token { tok: Tok::Minus, offset: start }),
            '*' => tokens.push(Token { tok: Tok::Star, offset: start }),
            '/' => tokens.push(Token { tok: Tok::Slash, offset: start }),
            '^' => tokens.push(Token { tok: Tok::Caret, offset: start }),
            '?' => tokens.push(Token { tok: Tok::Question, offset: start }),
            ':' => tokens.push(Token { tok: Tok::Colon, offset: start }),
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    tokens.push(Token { tok: Tok::Le, offset: start });
                } else {
                    tokens.push(Token { tok: Tok::Lt, offset: start });
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    tokens.push(Token { tok: Tok::Ge, offset: start });
                } else {
                    tokens.push(Token { tok: Tok::Gt, offset: start });
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    tokens.push(Token { tok: Tok::EqEq, offset: start });
                } else {
                    return Err(ParseError::new(start, "expected `==`"));
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    tokens.push(Token { tok: Tok::Ne, offset: start });
                } else {
                    return Err(ParseError::new(start, "expected `!=`"));
                }
            }
            '&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    i += 1;
                    tokens.push(Token { tok: Tok::AndAnd, offset: start });
                } else {
                    return Err(ParseError::new(start, "expected `&&`"));
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    i += 1;
                    tokens.push(Token { tok: Tok::OrOr, offset: start });
                } else {
                    return Err(ParseError::new(start, "expected `||`"));
                }
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                let mut seen_dot = false;
                let mut seen_exp = false;
                while j < bytes.len() {
                    let b = bytes[j] as char;
                    if b.is_ascii_digit() {
                        j += 1;
                    } else if b == '.' && !seen_dot && !seen_exp {
                        seen_dot = true;
                        j += 1;
                    } else if (b == 'e' || b == 'E')
                        && !seen_exp
                        && j > i
                        && bytes.get(j + 1).map_or(false, |n| {
                            (*n as char).is_ascii_digit() || *n == b'+' || *n == b'-'
                        })
                    {
                        seen_exp = true;
                        j += 1;
                        if bytes[j] == b'+' || bytes[j] == b'-' {
                            j += 1;
                        }
                    } else {
                        break;
                    }
                }
                let text = &source[i..j];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::new(start, format!("invalid number `{text}`")))?;
                tokens.push(Token { tok: Tok::Num(value), offset: start });
                i = j;
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() {
                    let b = bytes[j] as char;
                    if b.is_ascii_alphanumeric() || b == '_' {
                        j += 1;
                    } else {
                        break;
                    }
                }
                // Names are case-insensitive; normalize once here.
                tokens.push(Token { tok: Tok::Ident(source[i..j].to_ascii_lowercase()), offset: start });
                i = j;
                continue;
            }
            _ => return Err(ParseError::new(start, format!("unexpected character `{c}`"))),
        }
        i += 1;
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_numbers_idents_and_operators() {
        let toks = lex("rank(Close - 1.5e-2) <= x_1").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("rank".into()));
        assert_eq!(toks[1].tok, Tok::LParen);
        assert_eq!(toks[2].tok, Tok::Ident("close".into()));
        assert!(matches!(toks[4].tok, Tok::Num(v) if (v - 0.015).abs() < 1e-15));
        assert_eq!(toks[6].tok, Tok::Le);
        assert_eq!(toks[7].tok, Tok::Ident("x_1".into()));
    }

    #[test]
    fn trailing_dot_number_parses() {
        let toks = lex("2.").unwrap();
        assert!(matches!(toks[0].tok, Tok::Num(v) if v == 2.0));
    }

    #[test]
    fn stray_character_errors_with_offset() {
        let err = lex("close @ open").unwrap_err();
        assert_eq!(err.offset, 6);
    }
}
