//! Reference implementations shared by the integration tests. Each one is
//! written directly from the definition, without the library's algorithms.

#![allow(dead_code)]

use std::collections::BTreeSet;

use flowlens::dfa::{ByteSet, Pattern, Profile, RuleKind};
use flowlens::forest::ForestModel;
use flowlens::hist::{Category, LaneVector, LANES};
use rand::Rng;

/// Category straight from the lane contents: all sixteen raw bins in the
/// overflow bin, sixteen distinct clamped bins, one clamped bin, or other.
pub fn brute_category(raw_bins: &[u32; 16]) -> Category {
    if raw_bins.iter().all(|&b| b >= 15) {
        return Category::Cat4AllOverflow;
    }
    let clamped: BTreeSet<u32> = raw_bins.iter().map(|&b| b.min(15)).collect();
    match clamped.len() {
        16 => Category::Cat1AllDistinctBins,
        1 => Category::Cat3AllOneBin,
        _ => Category::Cat2Random,
    }
}

pub fn lane(v: &[u32; 16]) -> LaneVector {
    assert_eq!(LANES, 16);
    LaneVector::load(v)
}

/// End offsets reachable by matching `p` at `at`.
fn ends(p: &Pattern, s: &[u8], at: usize, nocase: bool) -> BTreeSet<usize> {
    match p {
        Pattern::Class(set) => {
            let set = if nocase { set.case_closed() } else { *set };
            match s.get(at) {
                Some(&b) if set.contains(b) => BTreeSet::from([at + 1]),
                _ => BTreeSet::new(),
            }
        }
        Pattern::Concat(parts) => {
            let mut cur = BTreeSet::from([at]);
            for q in parts {
                cur = cur.iter().flat_map(|&i| ends(q, s, i, nocase)).collect();
            }
            cur
        }
        Pattern::Alt(parts) => parts.iter().flat_map(|q| ends(q, s, at, nocase)).collect(),
        Pattern::Opt(q) => {
            let mut r = ends(q, s, at, nocase);
            r.insert(at);
            r
        }
        Pattern::Star(q) => closure(q, s, BTreeSet::from([at]), nocase),
        Pattern::Plus(q) => {
            let first = ends(q, s, at, nocase);
            closure(q, s, first, nocase)
        }
    }
}

fn closure(q: &Pattern, s: &[u8], start: BTreeSet<usize>, nocase: bool) -> BTreeSet<usize> {
    let mut all = start.clone();
    let mut frontier: Vec<usize> = start.into_iter().collect();
    while let Some(i) = frontier.pop() {
        for e in ends(q, s, i, nocase) {
            if all.insert(e) {
                frontier.push(e);
            }
        }
    }
    all
}

/// (rule index or None for skip, start, end) plus unmatched byte count.
#[derive(Debug, PartialEq, Eq)]
pub struct RefScan {
    pub tokens: Vec<(u32, usize, usize)>,
    pub unmatched: usize,
    pub skip_bytes: usize,
}

/// Leftmost-longest scan: at each position every rule is tried, the longest
/// nonempty match wins, earlier rules break ties, unmatched bytes are
/// dropped one at a time.
pub fn reference_tokenize(profile: &Profile, s: &[u8]) -> RefScan {
    let token_ids: Vec<Option<u32>> = {
        let mut next = 0;
        profile
            .rules
            .iter()
            .map(|r| match r.kind {
                RuleKind::Token(_) => {
                    next += 1;
                    Some(next - 1)
                }
                RuleKind::Skip => None,
            })
            .collect()
    };
    let mut out = RefScan {
        tokens: Vec::new(),
        unmatched: 0,
        skip_bytes: 0,
    };
    let mut pos = 0;
    while pos < s.len() {
        let mut best: Option<(usize, usize)> = None;
        for (ri, r) in profile.rules.iter().enumerate() {
            if let Some(&e) = ends(&r.pattern, s, pos, r.nocase).iter().next_back() {
                if e > pos && best.is_none_or(|(_, be)| e > be) {
                    best = Some((ri, e));
                }
            }
        }
        match best {
            Some((ri, e)) => {
                match token_ids[ri] {
                    Some(id) => out.tokens.push((id, pos, e)),
                    None => out.skip_bytes += e - pos,
                }
                pos = e;
            }
            None => {
                out.unmatched += 1;
                pos += 1;
            }
        }
    }
    out
}

const ALPHABET: &[u8] = b"abcAB1 -";

fn random_class(rng: &mut impl Rng) -> ByteSet {
    let mut set = ByteSet::EMPTY;
    let n = rng.random_range(1..=3);
    for _ in 0..n {
        set.insert(ALPHABET[rng.random_range(0..ALPHABET.len())]);
    }
    if rng.random_bool(0.1) {
        set = set.union(ByteSet::range(b'a', b'c'));
    }
    set
}

pub fn random_pattern(rng: &mut impl Rng, depth: u32) -> Pattern {
    if depth == 0 || rng.random_bool(0.35) {
        return Pattern::Class(random_class(rng));
    }
    match rng.random_range(0..5) {
        0 | 1 => Pattern::Concat((0..rng.random_range(2..=3)).map(|_| random_pattern(rng, depth - 1)).collect()),
        2 => Pattern::Alt((0..rng.random_range(2..=3)).map(|_| random_pattern(rng, depth - 1)).collect()),
        3 => Pattern::Plus(Box::new(random_pattern(rng, depth - 1))),
        _ => {
            let inner = Box::new(random_pattern(rng, depth - 1));
            if rng.random_bool(0.5) {
                Pattern::Star(inner)
            } else {
                Pattern::Opt(inner)
            }
        }
    }
}

/// Profile source with 1..=`max_rules` rules, at least one a token, no
/// rule matching the empty string.
pub fn random_profile_text(rng: &mut impl Rng, max_rules: usize) -> String {
    let n = rng.random_range(1..=max_rules);
    let mut text = String::from("# generated\n");
    let mut tokens = 0;
    for i in 0..n {
        let p = loop {
            let p = random_pattern(rng, 3);
            if !p.nullable() {
                break p;
            }
        };
        let nocase = if rng.random_bool(0.3) { " nocase" } else { "" };
        if i > 0 && rng.random_bool(0.15) {
            text.push_str(&format!("skip {p}{nocase}\n"));
        } else {
            text.push_str(&format!("token T{tokens} = {p}{nocase}\n"));
            tokens += 1;
        }
    }
    text
}

pub fn random_input(rng: &mut impl Rng, max_len: usize) -> Vec<u8> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                rng.random()
            } else {
                ALPHABET[rng.random_range(0..ALPHABET.len())]
            }
        })
        .collect()
}

/// Forest prediction by walking every tree from its node array and
/// averaging normalized leaf counts; ties go to the lowest class.
pub fn reference_predict(model: &ForestModel, x: &[f64]) -> (usize, Vec<f64>) {
    let k = model.classes.len();
    let mut acc = vec![0.0; k];
    for t in &model.trees {
        let mut i = 0usize;
        loop {
            let n = &t.nodes[i];
            if n.left == u32::MAX {
                let total: f64 = n.counts.iter().map(|&c| c as f64).sum();
                for c in 0..k {
                    acc[c] += n.counts[c] as f64 / total;
                }
                break;
            }
            i = if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
        }
    }
    for a in &mut acc {
        *a /= model.trees.len() as f64;
    }
    let mut best = 0;
    for c in 1..k {
        if acc[c] > acc[best] {
            best = c;
        }
    }
    (best, acc)
}
