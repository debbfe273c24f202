use std::fmt;

use thiserror::Error;

/// Source position of a token or AST node.
///
/// Spans never take part in structural equality so that re-parsed trees
/// compare equal to the originals regardless of layout.
#[derive(Debug, Clone, Copy, Default, Eq, serde::Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
    pub len: usize,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    /// Smallest span covering both `self` and `other`.
    pub fn to(self, other: Span) -> Span {
        if other.end() <= self.offset {
            return self;
        }
        Span { len: other.end() - self.offset, ..self }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Int,
    Char,
    Void,
    Struct,
    If,
    Else,
    While,
    Return,
    Break,
    Continue,
    Unchecked,
    Null,
    MmPtr,
    MmArrayPtr,
    MmAlloc,
    MmFree,
    MmChecked,
    MmArrayChecked,
    Marshal,
    Unmarshal,
}

impl Keyword {
    const ALL: [(&'static str, Keyword); 20] = [
        ("int", Keyword::Int),
        ("char", Keyword::Char),
        ("void", Keyword::Void),
        ("struct", Keyword::Struct),
        ("if", Keyword::If),
        ("else", Keyword::Else),
        ("while", Keyword::While),
        ("return", Keyword::Return),
        ("break", Keyword::Break),
        ("continue", Keyword::Continue),
        ("unchecked", Keyword::Unchecked),
        ("null", Keyword::Null),
        ("mm_ptr", Keyword::MmPtr),
        ("mm_array_ptr", Keyword::MmArrayPtr),
        ("mm_alloc", Keyword::MmAlloc),
        ("mm_free", Keyword::MmFree),
        ("mm_checked", Keyword::MmChecked),
        ("mm_array_checked", Keyword::MmArrayChecked),
        ("marshal", Keyword::Marshal),
        ("unmarshal", Keyword::Unmarshal),
    ];

    pub fn from_ident(s: &str) -> Option<Keyword> {
        Self::ALL.iter().find(|(k, _)| *k == s).map(|(_, kw)| *kw)
    }

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(_, kw)| *kw == self).map(|(k, _)| *k).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Punct {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Assign,
    PlusAssign,
    MinusAssign,
    StarAssign,
    PlusPlus,
    MinusMinus,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Not,
    Amp,
}

impl Punct {
    // Longest first so that maximal munch falls out of a linear scan.
    const ALL: [(&'static str, Punct); 31] = [
        ("->", Punct::Arrow),
        ("+=", Punct::PlusAssign),
        ("-=", Punct::MinusAssign),
        ("*=", Punct::StarAssign),
        ("++", Punct::PlusPlus),
        ("--", Punct::MinusMinus),
        ("==", Punct::EqEq),
        ("!=", Punct::NotEq),
        ("<=", Punct::Le),
        (">=", Punct::Ge),
        ("&&", Punct::AndAnd),
        ("||", Punct::OrOr),
        ("(", Punct::LParen),
        (")", Punct::RParen),
        ("{", Punct::LBrace),
        ("}", Punct::RBrace),
        ("[", Punct::LBracket),
        ("]", Punct::RBracket),
        (";", Punct::Semi),
        (",", Punct::Comma),
        (".", Punct::Dot),
        ("+", Punct::Plus),
        ("-", Punct::Minus),
        ("*", Punct::Star),
        ("/", Punct::Slash),
        ("%", Punct::Percent),
        ("=", Punct::Assign),
        ("<", Punct::Lt),
        (">", Punct::Gt),
        ("!", Punct::Not),
        ("&", Punct::Amp),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(_, p)| *p == self).map(|(s, _)| *s).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident,
    IntLit,
    StrLit,
    Punct(Punct),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "`{}`", k.as_str()),
            TokenKind::Ident => f.write_str("identifier"),
            TokenKind::IntLit => f.write_str("integer literal"),
            TokenKind::StrLit => f.write_str("string literal"),
            TokenKind::Punct(p) => write!(f, "`{}`", p.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexErrorKind {
    UnterminatedString,
    UnterminatedChar,
    UnterminatedComment,
    InvalidCharacter,
    InvalidEscape,
    IntegerOverflow,
}

#[derive(Debug, Clone, Error)]
#[error("{span}: {kind:?}")]
pub struct LexError {
    pub kind: LexErrorKind,
    pub span: Span,
}

pub type TokenStream = Vec<Token>;

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: usize, line: u32, col: u32) -> Span {
        Span { line, col, offset: start, len: self.pos - start }
    }
}

/// Split `src` into tokens, skipping whitespace and comments.
pub fn tokenize(src: &str) -> Result<TokenStream, LexError> {
    let mut cur = Cursor { src, pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        let (start, line, col) = (cur.pos, cur.line, cur.col);
        if c.is_ascii_whitespace() {
            cur.bump();
            continue;
        }
        if cur.rest().starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.rest().starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(LexError {
                        kind: LexErrorKind::UnterminatedComment,
                        span: cur.span_from(start, line, col),
                    });
                }
            }
            continue;
        }

        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                cur.bump();
            }
            match Keyword::from_ident(&src[start..cur.pos]) {
                Some(kw) => TokenKind::Keyword(kw),
                None => TokenKind::Ident,
            }
        } else if c.is_ascii_digit() {
            lex_number(&mut cur, start, line, col)?;
            TokenKind::IntLit
        } else if c == '"' {
            cur.bump();
            loop {
                match cur.bump() {
                    None | Some('\n') => {
                        return Err(LexError {
                            kind: LexErrorKind::UnterminatedString,
                            span: Span { line, col, offset: start, len: 1 },
                        })
                    }
                    Some('\\') => {
                        if cur.bump().is_none() {
                            return Err(LexError {
                                kind: LexErrorKind::UnterminatedString,
                                span: Span { line, col, offset: start, len: 1 },
                            });
                        }
                    }
                    Some('"') => break,
                    Some(_) => {}
                }
            }
            let span = cur.span_from(start, line, col);
            unescape(&src[start + 1..cur.pos - 1], span)?;
            TokenKind::StrLit
        } else if c == '\'' {
            cur.bump();
            loop {
                match cur.bump() {
                    None | Some('\n') => {
                        return Err(LexError {
                            kind: LexErrorKind::UnterminatedChar,
                            span: Span { line, col, offset: start, len: 1 },
                        })
                    }
                    Some('\\') => {
                        cur.bump();
                    }
                    Some('\'') => break,
                    Some(_) => {}
                }
            }
            let span = cur.span_from(start, line, col);
            let bytes = unescape(&src[start + 1..cur.pos - 1], span)?;
            if bytes.len() != 1 {
                return Err(LexError { kind: LexErrorKind::InvalidCharacter, span });
            }
            TokenKind::IntLit
        } else if let Some((text, p)) = Punct::ALL.iter().find(|(s, _)| cur.rest().starts_with(*s)) {
            for _ in 0..text.len() {
                cur.bump();
            }
            TokenKind::Punct(*p)
        } else {
            cur.bump();
            return Err(LexError {
                kind: LexErrorKind::InvalidCharacter,
                span: cur.span_from(start, line, col),
            });
        };

        out.push(Token {
            kind,
            lexeme: src[start..cur.pos].to_string(),
            span: cur.span_from(start, line, col),
        });
    }
    Ok(out)
}

fn lex_number(cur: &mut Cursor<'_>, start: usize, line: u32, col: u32) -> Result<(), LexError> {
    let hex = cur.peek() == Some('0') && matches!(cur.peek_at(1), Some('x' | 'X'));
    if hex {
        cur.bump();
        cur.bump();
        while matches!(cur.peek(), Some(c) if c.is_ascii_hexdigit()) {
            cur.bump();
        }
    } else {
        while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            cur.bump();
        }
    }
    let span = cur.span_from(start, line, col);
    if int_value(&cur.src[start..cur.pos]).is_none() {
        return Err(LexError { kind: LexErrorKind::IntegerOverflow, span });
    }
    Ok(())
}

/// Numeric value of an integer-literal lexeme (decimal, hex, or char).
pub fn int_value(lexeme: &str) -> Option<i64> {
    if let Some(body) = lexeme.strip_prefix('\'') {
        let body = body.strip_suffix('\'')?;
        let bytes = unescape(body, Span::default()).ok()?;
        return (bytes.len() == 1).then(|| bytes[0] as i64);
    }
    if let Some(hex) = lexeme.strip_prefix("0x").or_else(|| lexeme.strip_prefix("0X")) {
        if hex.is_empty() {
            return None;
        }
        return i64::from_str_radix(hex, 16).ok();
    }
    lexeme.parse().ok()
}

/// Decode the body of a string or char literal (without the quotes).
pub fn unescape(body: &str, span: Span) -> Result<Vec<u8>, LexError> {
    let mut out = Vec::with_capacity(body.len());
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        let b = match chars.next() {
            Some('n') => b'\n',
            Some('t') => b'\t',
            Some('r') => b'\r',
            Some('0') => 0,
            Some('\\') => b'\\',
            Some('"') => b'"',
            Some('\'') => b'\'',
            _ => return Err(LexError { kind: LexErrorKind::InvalidEscape, span }),
        };
        out.push(b);
    }
    Ok(out)
}

/// Inverse of [`unescape`] for the formatter.
pub fn escape(bytes: &[u8], quote: char) -> String {
    let mut s = String::new();
    for c in String::from_utf8_lossy(bytes).chars() {
        match c {
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            '\r' => s.push_str("\\r"),
            '\0' => s.push_str("\\0"),
            '\\' => s.push_str("\\\\"),
            '"' if quote == '"' => s.push_str("\\\""),
            '\'' if quote == '\'' => s.push_str("\\'"),
            c => s.push(c),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn checked_pointer_declaration() {
        use Keyword as K;
        use Punct as P;
        assert_eq!(
            kinds("mm_ptr<int> p;"),
            vec![
                TokenKind::Keyword(K::MmPtr),
                TokenKind::Punct(P::Lt),
                TokenKind::Keyword(K::Int),
                TokenKind::Punct(P::Gt),
                TokenKind::Ident,
                TokenKind::Punct(P::Semi),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").unwrap().is_empty());
        assert!(tokenize("  // only a comment\n /* and another */ ").unwrap().is_empty());
    }

    #[test]
    fn unterminated_string_at_byte_zero() {
        let err = tokenize("\"abc").unwrap_err();
        assert_eq!(err.kind, LexErrorKind::UnterminatedString);
        assert_eq!(err.span.offset, 0);
    }

    #[test]
    fn invalid_character_has_span() {
        let err = tokenize("int x = 3 @ 4;").unwrap_err();
        assert_eq!(err.kind, LexErrorKind::InvalidCharacter);
        assert_eq!(err.span.offset, 10);
        assert_eq!((err.span.line, err.span.col), (1, 11));
    }

    #[test]
    fn maximal_munch() {
        use Punct as P;
        assert_eq!(
            kinds("p->f-- - -x"),
            vec![
                TokenKind::Ident,
                TokenKind::Punct(P::Arrow),
                TokenKind::Ident,
                TokenKind::Punct(P::MinusMinus),
                TokenKind::Punct(P::Minus),
                TokenKind::Punct(P::Minus),
                TokenKind::Ident,
            ]
        );
    }

    #[test]
    fn literals() {
        let toks = tokenize("0x2A 42 'a' '\\n' \"hi\\n\"").unwrap();
        let vals: Vec<_> = toks[..4].iter().map(|t| int_value(&t.lexeme).unwrap()).collect();
        assert_eq!(vals, vec![42, 42, 97, 10]);
        assert_eq!(toks[4].kind, TokenKind::StrLit);
        assert_eq!(unescape("hi\\n", Span::default()).unwrap(), b"hi\n");
    }

    #[test]
    fn overflowing_literal() {
        let err = tokenize("99999999999999999999").unwrap_err();
        assert_eq!(err.kind, LexErrorKind::IntegerOverflow);
    }

    proptest::proptest! {
        #[test]
        fn lexemes_tile_the_source(src in "[ -~\n\t]{0,80}") {
            let Ok(toks) = tokenize(&src) else { return Ok(()) };
            let mut prev_end = 0;
            for t in &toks {
                proptest::prop_assert!(t.span.offset >= prev_end);
                proptest::prop_assert_eq!(&src[t.span.offset..t.span.end()], t.lexeme.as_str());
                let gap = &src[prev_end..t.span.offset];
                proptest::prop_assert!(gap.trim().is_empty() || gap.contains("//") || gap.contains("/*"));
                prev_end = t.span.end();
            }
            let retokenized = tokenize(&src).unwrap();
            proptest::prop_assert_eq!(toks, retokenized);
        }
    }
}
