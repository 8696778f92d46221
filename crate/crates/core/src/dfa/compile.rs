//! Profile → Thompson NFA → subset construction → Hopcroft minimization →
//! dense 256-column table.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::profile::{ByteSet, Pattern, Profile, RuleKind};
use super::{DfaTable, DEAD, INITIAL, SKIP_TAG};

pub const DEFAULT_MAX_STATES: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("DFA exceeds {limit} states")]
    StateBlowup { limit: usize },
    #[error("rule at line {line} matches the empty string")]
    Nullable { line: usize },
    #[error("rule at line {line} uses an empty character class")]
    EmptyClass { line: usize },
    #[error("profile defines no token rules")]
    NoTokens,
}

#[derive(Default)]
struct Nfa {
    eps: Vec<Vec<u32>>,
    edges: Vec<Vec<(usize, u32)>>,
    /// Priority (rule index) of accepting states.
    accept: Vec<Option<usize>>,
    sets: Vec<ByteSet>,
    set_ids: HashMap<ByteSet, usize>,
}

impl Nfa {
    fn state(&mut self) -> u32 {
        self.eps.push(Vec::new());
        self.edges.push(Vec::new());
        self.accept.push(None);
        (self.eps.len() - 1) as u32
    }

    fn set_id(&mut self, s: ByteSet) -> usize {
        *self.set_ids.entry(s).or_insert_with(|| {
            self.sets.push(s);
            self.sets.len() - 1
        })
    }

    fn fragment(&mut self, p: &Pattern, nocase: bool) -> (u32, u32) {
        match p {
            Pattern::Class(s) => {
                let s = if nocase { s.case_closed() } else { *s };
                let id = self.set_id(s);
                let (a, b) = (self.state(), self.state());
                self.edges[a as usize].push((id, b));
                (a, b)
            }
            Pattern::Concat(parts) => {
                let mut frags = parts.iter().map(|q| self.fragment(q, nocase)).collect::<Vec<_>>().into_iter();
                let (start, mut end) = frags.next().expect("empty concatenation");
                for (s, e) in frags {
                    self.eps[end as usize].push(s);
                    end = e;
                }
                (start, end)
            }
            Pattern::Alt(arms) => {
                let (a, b) = (self.state(), self.state());
                for q in arms {
                    let (s, e) = self.fragment(q, nocase);
                    self.eps[a as usize].push(s);
                    self.eps[e as usize].push(b);
                }
                (a, b)
            }
            Pattern::Star(q) | Pattern::Plus(q) | Pattern::Opt(q) => {
                let (s, e) = self.fragment(q, nocase);
                let (a, b) = (self.state(), self.state());
                self.eps[a as usize].push(s);
                self.eps[e as usize].push(b);
                if !matches!(p, Pattern::Plus(_)) {
                    self.eps[a as usize].push(b);
                }
                if !matches!(p, Pattern::Opt(_)) {
                    self.eps[e as usize].push(s);
                }
                (a, b)
            }
        }
    }

    fn closure(&self, seed: impl IntoIterator<Item = u32>, mark: &mut [bool]) -> Vec<u32> {
        let mut stack: Vec<u32> = seed.into_iter().collect();
        let mut out = Vec::new();
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut mark[s as usize], true) {
                continue;
            }
            out.push(s);
            stack.extend(&self.eps[s as usize]);
        }
        for &s in &out {
            mark[s as usize] = false;
        }
        out.sort_unstable();
        out
    }
}

/// Partition of the 256 byte values into classes no pattern distinguishes.
fn byte_classes(sets: &[ByteSet]) -> (Vec<usize>, [usize; 256]) {
    let mut ids: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut class_of = [0usize; 256];
    for b in 0..=255u8 {
        let sig: Vec<bool> = sets.iter().map(|s| s.contains(b)).collect();
        let next = ids.len();
        let id = *ids.entry(sig).or_insert(next);
        if id == reps.len() {
            reps.push(b as usize);
        }
        class_of[b as usize] = id;
    }
    (reps, class_of)
}

struct Dfa {
    n_classes: usize,
    trans: Vec<u32>,
    /// Accept code per state (0, token id + 1, or the skip tag).
    tags: Vec<u32>,
}

fn subset_construction(
    nfa: &Nfa,
    start: u32,
    reps: &[usize],
    rule_tags: &[u32],
    max_states: usize,
) -> Result<Dfa, CompileError> {
    let n_classes = reps.len();
    let mut mark = vec![false; nfa.eps.len()];
    let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut states: Vec<Vec<u32>> = vec![Vec::new(), nfa.closure([start], &mut mark)];
    ids.insert(Vec::new(), DEAD);
    ids.insert(states[1].clone(), INITIAL);
    let mut trans = vec![DEAD; 2 * n_classes];
    let mut next = 1usize;
    while next < states.len() {
        for (c, &rep) in reps.iter().enumerate() {
            let moved = states[next].iter().flat_map(|&s| {
                nfa.edges[s as usize]
                    .iter()
                    .filter(|(set, _)| nfa.sets[*set].contains(rep as u8))
                    .map(|&(_, t)| t)
            });
            let target = nfa.closure(moved, &mut mark);
            let id = match ids.get(&target) {
                Some(&id) => id,
                None => {
                    if states.len() >= max_states {
                        return Err(CompileError::StateBlowup { limit: max_states });
                    }
                    let id = states.len() as u32;
                    ids.insert(target.clone(), id);
                    states.push(target);
                    trans.extend(std::iter::repeat_n(DEAD, n_classes));
                    id
                }
            };
            trans[next * n_classes + c] = id;
        }
        next += 1;
    }
    let tags = states
        .iter()
        .map(|set| {
            set.iter()
                .filter_map(|&s| nfa.accept[s as usize])
                .min()
                .map_or(0, |rule| rule_tags[rule])
        })
        .collect();
    Ok(Dfa { n_classes, trans, tags })
}

/// Hopcroft partition refinement. Returns the block of every state.
fn minimize(dfa: &Dfa) -> Vec<usize> {
    let n = dfa.tags.len();
    let k = dfa.n_classes;
    let mut inv: Vec<Vec<u32>> = vec![Vec::new(); n * k];
    for s in 0..n {
        for c in 0..k {
            let t = dfa.trans[s * k + c] as usize;
            inv[t * k + c].push(s as u32);
        }
    }
    let mut tag_block: HashMap<u32, usize> = HashMap::new();
    let mut blocks: Vec<Vec<u32>> = Vec::new();
    let mut block_of = vec![0usize; n];
    for s in 0..n {
        let next = blocks.len();
        let b = *tag_block.entry(dfa.tags[s]).or_insert(next);
        if b == blocks.len() {
            blocks.push(Vec::new());
        }
        blocks[b].push(s as u32);
        block_of[s] = b;
    }
    let mut in_work = vec![true; blocks.len()];
    let mut work: VecDeque<usize> = (0..blocks.len()).collect();
    let mut hit = vec![false; n];
    let mut hit_count: Vec<usize> = vec![0; blocks.len()];
    while let Some(a) = work.pop_front() {
        in_work[a] = false;
        let splitter = blocks[a].clone();
        for c in 0..k {
            let mut touched = Vec::new();
            let mut marked = Vec::new();
            for &t in &splitter {
                for &s in &inv[t as usize * k + c] {
                    if !std::mem::replace(&mut hit[s as usize], true) {
                        marked.push(s);
                        let b = block_of[s as usize];
                        if hit_count[b] == 0 {
                            touched.push(b);
                        }
                        hit_count[b] += 1;
                    }
                }
            }
            for y in touched {
                let count = std::mem::take(&mut hit_count[y]);
                if count == blocks[y].len() {
                    continue;
                }
                let (inside, outside): (Vec<u32>, Vec<u32>) = blocks[y].iter().partition(|&&s| hit[s as usize]);
                let z = blocks.len();
                for &s in &inside {
                    block_of[s as usize] = z;
                }
                blocks[y] = outside;
                blocks.push(inside);
                hit_count.push(0);
                in_work.push(false);
                if in_work[y] {
                    in_work[z] = true;
                    work.push_back(z);
                } else {
                    let smaller = if blocks[z].len() <= blocks[y].len() { z } else { y };
                    in_work[smaller] = true;
                    work.push_back(smaller);
                }
            }
            for s in marked {
                hit[s as usize] = false;
            }
        }
    }
    block_of
}

pub fn compile(profile: &Profile) -> Result<DfaTable, CompileError> {
    compile_with(profile, DEFAULT_MAX_STATES)
}

pub fn compile_with(profile: &Profile, max_states: usize) -> Result<DfaTable, CompileError> {
    let mut nfa = Nfa::default();
    let start = nfa.state();
    let mut rule_tags = Vec::with_capacity(profile.rules.len());
    let mut token_names = Vec::new();
    for (i, rule) in profile.rules.iter().enumerate() {
        if rule.pattern.nullable() {
            return Err(CompileError::Nullable { line: rule.line });
        }
        if rule.pattern.has_empty_class() {
            return Err(CompileError::EmptyClass { line: rule.line });
        }
        rule_tags.push(match &rule.kind {
            RuleKind::Token(name) => {
                token_names.push(name.clone());
                token_names.len() as u32
            }
            RuleKind::Skip => SKIP_TAG,
        });
        let (s, e) = nfa.fragment(&rule.pattern, rule.nocase);
        nfa.eps[start as usize].push(s);
        nfa.accept[e as usize] = Some(i);
    }
    if token_names.is_empty() {
        return Err(CompileError::NoTokens);
    }
    let (reps, class_of) = byte_classes(&nfa.sets);
    let dfa = subset_construction(&nfa, start, &reps, &rule_tags, max_states)?;
    let block_of = minimize(&dfa);

    // Number blocks breadth-first from the initial state, dead first.
    let k = dfa.n_classes;
    let n_blocks = block_of.iter().max().map_or(0, |m| m + 1);
    let mut rep_of = vec![usize::MAX; n_blocks];
    for (s, &b) in block_of.iter().enumerate() {
        if rep_of[b] == usize::MAX {
            rep_of[b] = s;
        }
    }
    let mut id = vec![u32::MAX; n_blocks];
    let mut order = vec![block_of[DEAD as usize], block_of[INITIAL as usize]];
    debug_assert_ne!(order[0], order[1], "non-empty language keeps initial live");
    id[order[0]] = DEAD;
    id[order[1]] = INITIAL;
    let mut at = 1;
    while at < order.len() {
        let rep = rep_of[order[at]];
        for b in 0..256 {
            let t = block_of[dfa.trans[rep * k + class_of[b]] as usize];
            if id[t] == u32::MAX {
                id[t] = order.len() as u32;
                order.push(t);
            }
        }
        at += 1;
    }
    let mut trans = Vec::with_capacity(order.len() * 256);
    let mut accept = Vec::with_capacity(order.len());
    for &blk in &order {
        let rep = rep_of[blk];
        for b in 0..256 {
            trans.push(id[block_of[dfa.trans[rep * k + class_of[b]] as usize]]);
        }
        accept.push(dfa.tags[rep]);
    }
    Ok(DfaTable::from_parts(trans, accept, token_names).expect("compiler produced an invalid table"))
}
