//! Table-driven tokenizer generated from a profile of token rules.
//!
//! The engine's inner loop is one lookup per byte, `s = T[s][c]`, with
//! maximal munch: it remembers the last accepting state and, on reaching
//! the dead state, emits the remembered token and restarts from the byte
//! after it.

mod compile;
mod dump;
mod profile;

pub use compile::{compile, compile_with, CompileError, DEFAULT_MAX_STATES};
pub use dump::DumpError;
pub use profile::{parse_profile, ByteSet, Pattern, Profile, ProfileError, Rule, RuleKind};

pub const DEAD: u32 = 0;
pub const INITIAL: u32 = 1;
pub(crate) const SKIP_TAG: u32 = u32::MAX;

pub const SQLI_PROFILE: &str = include_str!("../../profiles/sqli.prof");
pub const XSS_PROFILE: &str = include_str!("../../profiles/xss.prof");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accept {
    Token(u32),
    Skip,
}

/// Dense transition table (`n_states × 256`) plus accept codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfaTable {
    trans: Vec<u32>,
    /// 0 = not accepting, `id + 1` = token, [`SKIP_TAG`] = skip rule.
    accept: Vec<u32>,
    token_names: Vec<String>,
}

impl DfaTable {
    /// Validates the table invariants.
    pub(crate) fn from_parts(trans: Vec<u32>, accept: Vec<u32>, token_names: Vec<String>) -> Result<Self, &'static str> {
        let n = accept.len();
        if n < 2 || trans.len() != n * 256 {
            return Err("table size mismatch");
        }
        if trans.iter().any(|&t| t as usize >= n) {
            return Err("transition out of range");
        }
        if trans[..256].iter().any(|&t| t != DEAD) {
            return Err("dead state must self-loop");
        }
        if accept[DEAD as usize] != 0 || accept[INITIAL as usize] != 0 {
            return Err("dead and initial states cannot accept");
        }
        if accept.iter().any(|&a| a != SKIP_TAG && a as usize > token_names.len()) {
            return Err("accept code out of range");
        }
        Ok(DfaTable {
            trans,
            accept,
            token_names,
        })
    }

    pub fn n_states(&self) -> usize {
        self.accept.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.token_names.len()
    }

    pub fn token_names(&self) -> &[String] {
        &self.token_names
    }

    pub fn token_name(&self, id: u32) -> &str {
        &self.token_names[id as usize]
    }

    pub fn token_id(&self, name: &str) -> Option<u32> {
        self.token_names.iter().position(|n| n == name).map(|i| i as u32)
    }

    #[inline]
    pub fn next(&self, state: u32, byte: u8) -> u32 {
        self.trans[(state as usize) << 8 | byte as usize]
    }

    pub fn accept(&self, state: u32) -> Option<Accept> {
        match self.accept[state as usize] {
            0 => None,
            SKIP_TAG => Some(Accept::Skip),
            t => Some(Accept::Token(t - 1)),
        }
    }

    /// Tokenizes `input`, appending to `out`.
    pub fn tokenize_into(&self, input: &[u8], out: &mut Vec<Token>) -> ScanStats {
        let mut stats = ScanStats::default();
        let mut pos = 0;
        while pos < input.len() {
            let mut s = INITIAL;
            let mut last = None;
            let mut i = pos;
            while i < input.len() {
                s = self.trans[(s as usize) << 8 | input[i] as usize];
                stats.lookups += 1;
                if s == DEAD {
                    break;
                }
                i += 1;
                let a = self.accept[s as usize];
                if a != 0 {
                    last = Some((i, a));
                }
            }
            match last {
                Some((end, tag)) => {
                    if tag == SKIP_TAG {
                        stats.skip_rule_bytes += end - pos;
                    } else {
                        out.push(Token {
                            id: tag - 1,
                            start: pos,
                            end,
                        });
                    }
                    pos = end;
                }
                None => {
                    stats.skipped += 1;
                    pos += 1;
                }
            }
        }
        stats
    }

    pub fn tokenize(&self, input: &[u8]) -> Tokenization {
        let mut tokens = Vec::new();
        let stats = self.tokenize_into(input, &mut tokens);
        Tokenization { tokens, stats }
    }

    /// `[count per token id..., total tokens, unmatched bytes]`.
    pub fn token_histogram(&self, t: &Tokenization) -> Vec<u32> {
        let mut h = vec![0u32; self.n_tokens() + 2];
        self.histogram_into(&t.tokens, t.stats, &mut h);
        h
    }

    pub(crate) fn histogram_into(&self, tokens: &[Token], stats: ScanStats, h: &mut [u32]) {
        let n = self.n_tokens();
        for t in tokens {
            h[t.id as usize] += 1;
        }
        h[n] += tokens.len() as u32;
        h[n + 1] += stats.skipped as u32;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        dump::to_bytes(self)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, DumpError> {
        dump::from_bytes(b)
    }
}

/// Byte span `start..end` of one emitted token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn lexeme<'a>(&self, input: &'a [u8]) -> &'a [u8] {
        &input[self.start..self.end]
    }

    pub fn name<'t>(&self, table: &'t DfaTable) -> &'t str {
        table.token_name(self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanStats {
    /// Bytes no rule could start a match at.
    pub skipped: usize,
    /// Bytes consumed by skip rules.
    pub skip_rule_bytes: usize,
    /// Transition-table lookups, including rescans after each emission.
    pub lookups: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Tokenization {
    pub tokens: Vec<Token>,
    pub stats: ScanStats,
}

impl Tokenization {
    pub fn names<'t>(&self, table: &'t DfaTable) -> Vec<&'t str> {
        self.tokens.iter().map(|t| t.name(table)).collect()
    }
}

pub fn tokenize(table: &DfaTable, input: &[u8]) -> Tokenization {
    table.tokenize(input)
}

/// Decodes `%XX` escapes and `+` as space. Malformed escapes are kept as is.
pub fn url_decode(input: &[u8]) -> Vec<u8> {
    let hex = |c: u8| (c as char).to_digit(16).map(|d| d as u8);
    let mut out = Vec::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        match input[i] {
            b'+' => out.push(b' '),
            b'%' => match (input.get(i + 1).and_then(|&c| hex(c)), input.get(i + 2).and_then(|&c| hex(c))) {
                (Some(h), Some(l)) => {
                    out.push(h << 4 | l);
                    i += 2;
                }
                _ => out.push(b'%'),
            },
            c => out.push(c),
        }
        i += 1;
    }
    out
}

/// Compiles a bundled profile.
pub fn bundled(profile_text: &str) -> DfaTable {
    compile(&parse_profile(profile_text).expect("bundled profile parses")).expect("bundled profile compiles")
}
