use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(u64),
    Float(String),
    Punct(&'static str),
    /// A character or sequence the lexer could not make sense of.
    Invalid(String),
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "`{s}`"),
            TokenKind::Int(v) => write!(f, "`{v}`"),
            TokenKind::Float(s) => write!(f, "`{s}`"),
            TokenKind::Punct(p) => write!(f, "`{p}`"),
            TokenKind::Invalid(s) => write!(f, "invalid input `{s}`"),
            TokenKind::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<=", ">=",
    "==", "!=", "&&", "||", "->", "<<", ">>", "+", "-", "*", "/", "%", "<", ">", "=", "!", "?",
    ":", ";", ",", "(", ")", "{", "}", "[", "]", "&", "|", "^", "~", ".",
];

/// Splits source text into tokens. Never fails: unrecognized input becomes
/// an `Invalid` token so the parser can attribute it to a function.
pub fn tokenize(src: &str) -> Vec<Token> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;
    let mut at_line_start = true;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
                at_line_start = true;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        // Preprocessor lines are skipped; macros are treated as symbolic names.
        if c == '#' && at_line_start {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        at_line_start = false;
        let pos = Pos { line, column: col };
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            let mut closed = false;
            while i < chars.len() {
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    closed = true;
                    break;
                }
                bump!();
            }
            if !closed {
                out.push(Token {
                    kind: TokenKind::Invalid("unterminated comment".into()),
                    pos,
                });
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            out.push(Token {
                kind: lex_number(&chars, &mut i, &mut col),
                pos,
            });
            continue;
        }
        if let Some(p) = PUNCTS.iter().find(|p| {
            p.chars()
                .enumerate()
                .all(|(k, pc)| chars.get(i + k) == Some(&pc))
        }) {
            for _ in 0..p.len() {
                bump!();
            }
            out.push(Token {
                kind: TokenKind::Punct(p),
                pos,
            });
            continue;
        }
        bump!();
        out.push(Token {
            kind: TokenKind::Invalid(c.to_string()),
            pos,
        });
    }
    out.push(Token {
        kind: TokenKind::Eof,
        pos: Pos { line, column: col },
    });
    out
}

fn lex_number(chars: &[char], i: &mut usize, col: &mut u32) -> TokenKind {
    let start = *i;
    let digits = |mut j: usize| {
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
        j
    };
    let mut j = digits(start);
    let mut is_float = false;
    if j < chars.len() && chars[j] == '.' {
        is_float = true;
        j = digits(j + 1);
    }
    if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
        let mut k = j + 1;
        if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_digit() {
            is_float = true;
            j = digits(k);
        }
    }
    // Suffixes (f, u, l) and stray identifier characters make the literal unsupported.
    let mut bad = false;
    while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
        bad = true;
        j += 1;
    }
    let text: String = chars[start..j].iter().collect();
    *col += (j - start) as u32;
    *i = j;
    if bad {
        return TokenKind::Invalid(text);
    }
    if is_float {
        TokenKind::Float(text)
    } else {
        match text.parse::<u64>() {
            Ok(v) => TokenKind::Int(v),
            Err(_) => TokenKind::Invalid(text),
        }
    }
}
