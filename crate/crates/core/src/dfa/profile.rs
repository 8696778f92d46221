//! Profile language.
//!
//! ```text
//! # comment
//! set D = [0-9]
//! token NUM = D+ ("." D+)?
//! token SELECT = "select" nocase
//! skip [ \t\r\n]+
//! ```

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// A set of byte values.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub const EMPTY: ByteSet = ByteSet([0; 4]);
    pub const FULL: ByteSet = ByteSet([u64::MAX; 4]);

    pub fn single(b: u8) -> Self {
        let mut s = ByteSet::EMPTY;
        s.insert(b);
        s
    }

    pub fn range(lo: u8, hi: u8) -> Self {
        let mut s = ByteSet::EMPTY;
        for b in lo..=hi {
            s.insert(b);
        }
        s
    }

    pub fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1 << (b & 63);
    }

    pub fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] >> (b & 63) & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union(self, o: ByteSet) -> ByteSet {
        ByteSet(std::array::from_fn(|i| self.0[i] | o.0[i]))
    }

    pub fn complement(self) -> ByteSet {
        ByteSet(self.0.map(|w| !w))
    }

    /// Adds the other ASCII case of every letter.
    pub fn case_closed(self) -> ByteSet {
        let mut s = self;
        for b in self.iter() {
            if b.is_ascii_alphabetic() {
                s.insert(b ^ 0x20);
            }
        }
        s
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..=255u8).filter(move |&b| self.contains(b))
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Renders in profile syntax with hex escapes, e.g. `[\x30-\x39]`.
impl fmt::Display for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        let mut b = 0u16;
        while b < 256 {
            if !self.contains(b as u8) {
                b += 1;
                continue;
            }
            let lo = b;
            while b + 1 < 256 && self.contains((b + 1) as u8) {
                b += 1;
            }
            if lo == b {
                write!(f, "\\x{lo:02x}")?;
            } else {
                write!(f, "\\x{lo:02x}-\\x{b:02x}")?;
            }
            b += 1;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    /// One byte from the set.
    Class(ByteSet),
    Concat(Vec<Pattern>),
    Alt(Vec<Pattern>),
    Star(Box<Pattern>),
    Plus(Box<Pattern>),
    Opt(Box<Pattern>),
}

impl Pattern {
    pub fn literal(s: &[u8]) -> Pattern {
        if s.len() == 1 {
            Pattern::Class(ByteSet::single(s[0]))
        } else {
            Pattern::Concat(s.iter().map(|&b| Pattern::Class(ByteSet::single(b))).collect())
        }
    }

    /// True when the pattern matches the empty string.
    pub fn nullable(&self) -> bool {
        match self {
            Pattern::Class(_) => false,
            Pattern::Concat(v) => v.iter().all(Pattern::nullable),
            Pattern::Alt(v) => v.iter().any(Pattern::nullable),
            Pattern::Star(_) | Pattern::Opt(_) => true,
            Pattern::Plus(p) => p.nullable(),
        }
    }

    /// True when some class in the pattern is empty.
    pub fn has_empty_class(&self) -> bool {
        match self {
            Pattern::Class(s) => s.is_empty(),
            Pattern::Concat(v) | Pattern::Alt(v) => v.iter().any(Pattern::has_empty_class),
            Pattern::Star(p) | Pattern::Plus(p) | Pattern::Opt(p) => p.has_empty_class(),
        }
    }

    fn fmt_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Class(_) => write!(f, "{self}"),
            _ => write!(f, "({self})"),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Class(s) => write!(f, "{s}"),
            Pattern::Concat(v) => {
                for (i, p) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    p.fmt_atom(f)?;
                }
                Ok(())
            }
            Pattern::Alt(v) => {
                for (i, p) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    p.fmt_atom(f)?;
                }
                Ok(())
            }
            Pattern::Star(p) => {
                p.fmt_atom(f)?;
                f.write_str("*")
            }
            Pattern::Plus(p) => {
                p.fmt_atom(f)?;
                f.write_str("+")
            }
            Pattern::Opt(p) => {
                p.fmt_atom(f)?;
                f.write_str("?")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleKind {
    Token(String),
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub kind: RuleKind,
    pub pattern: Pattern,
    pub nocase: bool,
    /// 1-based source line, 0 for rules built in code.
    pub line: usize,
}

/// Rules in priority order: earlier rules win ties.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Profile {
    pub sets: Vec<(String, ByteSet)>,
    pub rules: Vec<Rule>,
}

impl Profile {
    pub fn token_names(&self) -> Vec<&str> {
        self.rules
            .iter()
            .filter_map(|r| match &r.kind {
                RuleKind::Token(n) => Some(n.as_str()),
                RuleKind::Skip => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("{line}:{col}: {msg}")]
    SyntaxError { line: usize, col: usize, msg: String },
    #[error("{line}: duplicate token {name}")]
    DuplicateToken { line: usize, name: String },
    #[error("{line}: pattern matches the empty string")]
    EmptyPattern { line: usize },
    #[error("profile defines no token rules")]
    NoTokens,
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ProfileError> {
        Err(ProfileError::SyntaxError {
            line: self.line,
            col: self.pos + 1,
            msg: msg.into(),
        })
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        self.ws();
        let start = self.pos;
        if !self.s.get(self.pos).is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_') {
            return None;
        }
        while self.s.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn hex(&mut self) -> Result<u8, ProfileError> {
        let digits = self.s.get(self.pos..self.pos + 2).and_then(|d| std::str::from_utf8(d).ok());
        match digits.and_then(|d| u8::from_str_radix(d, 16).ok()) {
            Some(b) => {
                self.pos += 2;
                Ok(b)
            }
            None => self.err("expected two hex digits after \\x"),
        }
    }

    /// One possibly escaped byte inside a string or class.
    fn escaped(&mut self) -> Result<u8, ProfileError> {
        let Some(&c) = self.s.get(self.pos) else {
            return self.err("unexpected end of line");
        };
        self.pos += 1;
        if c != b'\\' {
            return Ok(c);
        }
        let Some(&e) = self.s.get(self.pos) else {
            return self.err("dangling escape");
        };
        self.pos += 1;
        Ok(match e {
            b'n' => b'\n',
            b't' => b'\t',
            b'r' => b'\r',
            b'0' => 0,
            b'x' => return self.hex(),
            other => other,
        })
    }

    fn string(&mut self) -> Result<Vec<u8>, ProfileError> {
        let start = self.pos;
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            match self.s.get(self.pos) {
                None => {
                    self.pos = start;
                    return self.err("unterminated string literal");
                }
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(_) => out.push(self.escaped()?),
            }
        }
    }

    fn class(&mut self) -> Result<ByteSet, ProfileError> {
        let start = self.pos;
        self.pos += 1;
        let negate = self.s.get(self.pos) == Some(&b'^');
        if negate {
            self.pos += 1;
        }
        let mut set = ByteSet::EMPTY;
        loop {
            match self.s.get(self.pos) {
                None => {
                    self.pos = start;
                    return self.err("unterminated character class");
                }
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => {
                    let lo = self.escaped()?;
                    let is_range = self.s.get(self.pos) == Some(&b'-') && self.s.get(self.pos + 1).is_some_and(|&c| c != b']');
                    if is_range {
                        self.pos += 1;
                        let hi = self.escaped()?;
                        if hi < lo {
                            return self.err("reversed range in character class");
                        }
                        set = set.union(ByteSet::range(lo, hi));
                    } else {
                        set.insert(lo);
                    }
                }
            }
        }
        let set = if negate { set.complement() } else { set };
        if set.is_empty() {
            self.pos = start;
            return self.err("empty character class");
        }
        Ok(set)
    }
}

struct Parser<'a, 'p> {
    c: Cursor<'a>,
    sets: &'p [(String, ByteSet)],
}

impl Parser<'_, '_> {
    fn alt(&mut self) -> Result<Pattern, ProfileError> {
        let mut arms = vec![self.concat()?];
        while self.c.eat(b'|') {
            arms.push(self.concat()?);
        }
        Ok(if arms.len() == 1 { arms.pop().unwrap() } else { Pattern::Alt(arms) })
    }

    fn concat(&mut self) -> Result<Pattern, ProfileError> {
        let mut parts = Vec::new();
        while let Some(p) = self.postfix()? {
            parts.push(p);
        }
        match parts.len() {
            0 => self.c.err("expected a pattern"),
            1 => Ok(parts.pop().unwrap()),
            _ => Ok(Pattern::Concat(parts)),
        }
    }

    fn postfix(&mut self) -> Result<Option<Pattern>, ProfileError> {
        let Some(mut p) = self.atom()? else {
            return Ok(None);
        };
        loop {
            p = match self.c.peek() {
                Some(b'+') => Pattern::Plus(Box::new(p)),
                Some(b'*') => Pattern::Star(Box::new(p)),
                Some(b'?') => Pattern::Opt(Box::new(p)),
                _ => return Ok(Some(p)),
            };
            self.c.pos += 1;
        }
    }

    fn atom(&mut self) -> Result<Option<Pattern>, ProfileError> {
        match self.c.peek() {
            Some(b'"') => {
                let s = self.c.string()?;
                if s.is_empty() {
                    return self.c.err("empty string literal");
                }
                Ok(Some(Pattern::literal(&s)))
            }
            Some(b'[') => Ok(Some(Pattern::Class(self.c.class()?))),
            Some(b'(') => {
                self.c.pos += 1;
                let p = self.alt()?;
                if !self.c.eat(b')') {
                    return self.c.err("expected ')'");
                }
                Ok(Some(p))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let save = self.c.pos;
                let name = self.c.ident().unwrap_or_default();
                if name == "nocase" && self.c.at_end() {
                    self.c.pos = save;
                    return Ok(None);
                }
                match self.sets.iter().rev().find(|(n, _)| n == name) {
                    Some((_, s)) => Ok(Some(Pattern::Class(*s))),
                    None => {
                        self.c.pos = save;
                        self.c.err(format!("unknown set {name}"))
                    }
                }
            }
            _ => Ok(None),
        }
    }
}

pub fn parse_profile(text: &str) -> Result<Profile, ProfileError> {
    let mut profile = Profile::default();
    let mut names = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut c = Cursor {
            s: raw.as_bytes(),
            pos: 0,
            line,
        };
        if c.peek().is_none_or(|b| b == b'#') {
            continue;
        }
        let kw_start = c.pos;
        let kw = match c.ident() {
            Some(k @ ("set" | "token" | "skip")) => k,
            _ => {
                c.pos = kw_start;
                return c.err("expected 'set', 'token' or 'skip'");
            }
        };
        let name = if kw == "skip" {
            None
        } else {
            let Some(n) = c.ident() else {
                return c.err("expected a name");
            };
            if !c.eat(b'=') {
                return c.err("expected '='");
            }
            Some(n.to_string())
        };
        if kw == "set" {
            if c.peek() != Some(b'[') {
                return c.err("expected a character class");
            }
            let s = c.class()?;
            if !c.at_end() {
                return c.err("unexpected text after set");
            }
            profile.sets.push((name.unwrap(), s));
            continue;
        }
        let mut p = Parser { c, sets: &profile.sets };
        let pattern = p.alt()?;
        let nocase = match p.c.ident() {
            Some("nocase") => true,
            Some(_) => return p.c.err("expected 'nocase' or end of line"),
            None => false,
        };
        if !p.c.at_end() {
            return p.c.err("unexpected text after pattern");
        }
        if pattern.nullable() {
            return Err(ProfileError::EmptyPattern { line });
        }
        let kind = match name {
            Some(n) => {
                if !names.insert(n.clone()) {
                    return Err(ProfileError::DuplicateToken { line, name: n });
                }
                RuleKind::Token(n)
            }
            None => RuleKind::Skip,
        };
        profile.rules.push(Rule {
            kind,
            pattern,
            nocase,
            line,
        });
    }
    if profile.token_names().is_empty() {
        return Err(ProfileError::NoTokens);
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_nocase_token() {
        let p = parse_profile("token SELECT = \"select\" nocase\n").unwrap();
        assert_eq!(p.rules.len(), 1);
        assert!(p.rules[0].nocase);
        assert_eq!(p.rules[0].pattern, Pattern::literal(b"select"));
        assert_eq!(p.token_names(), vec!["SELECT"]);
    }

    #[test]
    fn set_reference_resolves() {
        let p = parse_profile("set D = [0-9]\ntoken NUM = D+\n").unwrap();
        assert_eq!(p.rules[0].pattern, Pattern::Plus(Box::new(Pattern::Class(ByteSet::range(b'0', b'9')))));
    }

    #[test]
    fn unterminated_string_reports_location() {
        let e = parse_profile("# c\ntoken A = \"abc\n").unwrap_err();
        assert_eq!(
            e,
            ProfileError::SyntaxError {
                line: 2,
                col: 11,
                msg: "unterminated string literal".into()
            }
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_profile("token A = \"a\"\ntoken A = \"b\""), Err(ProfileError::DuplicateToken { line: 2, .. })));
        assert_eq!(parse_profile("token A = \"a\"*"), Err(ProfileError::EmptyPattern { line: 1 }));
        assert_eq!(parse_profile("skip [ ]+"), Err(ProfileError::NoTokens));
        assert!(matches!(parse_profile("token A = Q"), Err(ProfileError::SyntaxError { .. })));
        assert!(matches!(parse_profile("token A = [^\\x00-\\xff]"), Err(ProfileError::SyntaxError { .. })));
        assert!(matches!(parse_profile("token A = (\"a\""), Err(ProfileError::SyntaxError { .. })));
        assert!(matches!(parse_profile("tokn A = \"a\""), Err(ProfileError::SyntaxError { line: 1, col: 1, .. })));
    }

    #[test]
    fn classes_and_escapes() {
        let p = parse_profile(r#"token A = [a\-z] | [^\x00-\xfe] | "\x41\"" | [-x]"#).unwrap();
        let Pattern::Alt(arms) = &p.rules[0].pattern else { panic!() };
        let Pattern::Class(s) = arms[0] else { panic!() };
        assert_eq!(s.iter().collect::<Vec<_>>(), b"-az");
        assert_eq!(arms[1], Pattern::Class(ByteSet::single(0xff)));
        assert_eq!(arms[2], Pattern::literal(b"A\""));
        let Pattern::Class(s) = arms[3] else { panic!() };
        assert_eq!(s.iter().collect::<Vec<_>>(), b"-x");
    }

    #[test]
    fn display_round_trips_through_parser() {
        let src = r#"set W = [a-z_]
token T = ("ab" | W+)? "c" ([\n\t]* "d")+ nocase"#;
        let p = parse_profile(src).unwrap();
        let text = format!("token T = {}", p.rules[0].pattern);
        let q = parse_profile(&text).unwrap();
        assert_eq!(q.rules[0].pattern, p.rules[0].pattern);
    }

    #[test]
    fn case_closure() {
        let s = ByteSet::range(b'a', b'c').union(ByteSet::single(b'1')).case_closed();
        assert_eq!(s.iter().collect::<Vec<_>>(), b"1ABCabc");
    }
}
