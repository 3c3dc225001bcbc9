use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Semi,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(s) => write!(f, "number `{s}`"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::Eof => f.write_str("end of input"),
            other => {
                let s = match other {
                    Tok::LBrace => "{",
                    Tok::RBrace => "}",
                    Tok::LBracket => "[",
                    Tok::RBracket => "]",
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::Comma => ",",
                    Tok::Semi => ";",
                    Tok::Eq => "=",
                    Tok::Ne => "!=",
                    Tok::Lt => "<",
                    Tok::Le => "<=",
                    Tok::Gt => ">",
                    Tok::Ge => ">=",
                    Tok::Arrow => "->",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
    /// First token on its line; statement recovery resumes only here.
    pub line_start: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

/// Splits `src` into tokens, ending with `Eof`. `#` starts a comment.
/// Lexing errors are collected and the offending character skipped.
pub fn tokenize(src: &str) -> (Vec<Token>, Vec<LexError>) {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let mut fresh_line = true;

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            fresh_line = true;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let peek = chars.get(i + 1).copied();
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit()
            || (c == '.' && peek.is_some_and(|d| d.is_ascii_digit()))
            || (c == '-' && peek.is_some_and(|d| d.is_ascii_digit() || d == '.'))
        {
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            Tok::Num(chars[start..i].iter().collect())
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' && chars[i] != '\n' {
                i += 1;
            }
            if chars.get(i) != Some(&'"') {
                errors.push(LexError {
                    pos,
                    message: "unterminated string".into(),
                });
                col += i - start;
                continue;
            }
            i += 1;
            Tok::Str(chars[start + 1..i - 1].iter().collect())
        } else {
            let two = |next: char| peek == Some(next);
            let (tok, len) = match c {
                '{' => (Tok::LBrace, 1),
                '}' => (Tok::RBrace, 1),
                '[' => (Tok::LBracket, 1),
                ']' => (Tok::RBracket, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                ';' => (Tok::Semi, 1),
                '=' => (Tok::Eq, 1),
                '!' if two('=') => (Tok::Ne, 2),
                '<' if two('=') => (Tok::Le, 2),
                '<' => (Tok::Lt, 1),
                '>' if two('=') => (Tok::Ge, 2),
                '>' => (Tok::Gt, 1),
                '-' if two('>') => (Tok::Arrow, 2),
                other => {
                    errors.push(LexError {
                        pos,
                        message: format!("unexpected character `{other}`"),
                    });
                    i += 1;
                    col += 1;
                    continue;
                }
            };
            i += len;
            tok
        };
        col += i - start;
        out.push(Token {
            tok,
            pos,
            line_start: fresh_line,
        });
        fresh_line = false;
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
        line_start: true,
    });
    (out, errors)
}
