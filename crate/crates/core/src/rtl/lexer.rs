// SPDX-License-Identifier: Apache-2.0

use super::{Loc, RtlError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    /// Plain decimal integer (ranges, slice bounds, shift amounts).
    Int(u64),
    /// Sized literal such as `8'hff`.
    Sized {
        width: u32,
        value: u64,
    },
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

const SYMBOLS: &[&str] = &[
    "<=", "==", "<<", ">>", "(", ")", "[", "]", ",", ";", ":", "=", "~", "&", "|", "^", "+", "-",
    "<", "?",
];

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, RtlError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let loc = Loc::new(line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(RtlError::Syntax {
                        loc,
                        msg: "unterminated block comment".into(),
                    });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                s.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            out.push(Token {
                tok: Tok::Ident(s),
                loc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                if chars[i] != '_' {
                    digits.push(chars[i]);
                }
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            let n: u64 = digits.parse().map_err(|_| RtlError::Syntax {
                loc,
                msg: format!("integer `{digits}` out of range"),
            })?;
            if i < chars.len() && chars[i] == '\'' {
                advance(&mut i, &mut line, &mut col, '\'');
                let base = chars.get(i).copied().map(|b| b.to_ascii_lowercase());
                let radix = match base {
                    Some('d') => 10,
                    Some('h') => 16,
                    Some('b') => 2,
                    Some('o') => 8,
                    _ => {
                        return Err(RtlError::Syntax {
                            loc,
                            msg: "expected base specifier d, h, b or o after `'`".into(),
                        })
                    }
                };
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
                let mut body = String::new();
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    if chars[i] != '_' {
                        body.push(chars[i]);
                    }
                    {
                        let ch = chars[i];
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
                let value = u64::from_str_radix(&body, radix).map_err(|_| RtlError::Syntax {
                    loc,
                    msg: format!("malformed literal digits `{body}`"),
                })?;
                if n == 0 || n > super::MAX_WIDTH as u64 {
                    return Err(RtlError::Width {
                        loc,
                        msg: format!("literal width {n} outside 1..=64"),
                    });
                }
                let width = n as u32;
                if value & !super::mask(width) != 0 {
                    return Err(RtlError::Width {
                        loc,
                        msg: format!("literal value {value} does not fit in {width} bits"),
                    });
                }
                out.push(Token {
                    tok: Tok::Sized { width, value },
                    loc,
                });
            } else {
                out.push(Token {
                    tok: Tok::Int(n),
                    loc,
                });
            }
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                for ch in sym.chars() {
                    advance(&mut i, &mut line, &mut col, ch);
                }
                out.push(Token {
                    tok: Tok::Sym(sym),
                    loc,
                });
            }
            None => {
                return Err(RtlError::Syntax {
                    loc,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: Loc::new(line, col),
    });
    Ok(out)
}
