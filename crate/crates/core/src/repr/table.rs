//! Per-level variable tables over an enumerated history set, with the
//! class partitions and per-action signatures the checks and the search
//! share.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use super::{HistVar, VarKind};
use crate::error::{CoreError, Result};
use crate::fpomdp::{quantize, HistorySet, NodeId};

pub(crate) const NO_SIG: u32 = u32::MAX;

/// Row-per-history value tables, one per level. Column order at level `t`
/// is `o_0, a_0, o_1, a_1, ..., o_t` with the observed factors of each
/// step in `obs_vars` order.
pub(crate) struct Levels {
    pub obs_vars: Vec<usize>,
    pub cols: Vec<Vec<HistVar>>,
    rows: Vec<Vec<u8>>,
    packed: Vec<Vec<u64>>,
    words: Vec<usize>,
    counts: Vec<usize>,
    /// Position of each node within its level.
    pub pos: Vec<u32>,
}

impl Levels {
    pub fn build(set: &HistorySet, obs_vars: Vec<usize>) -> Result<Levels> {
        let no = obs_vars.len();
        let horizon = set.horizon;
        let cols: Vec<Vec<HistVar>> = (0..horizon)
            .map(|t| {
                let mut c = Vec::new();
                for s in 0..=t {
                    c.extend(obs_vars.iter().map(|&v| HistVar::obs(v, s)));
                    if s < t {
                        c.push(HistVar::action(s));
                    }
                }
                c
            })
            .collect();
        if cols.last().map_or(0, |c| c.len()) > 64 {
            return Err(CoreError::Precondition(format!(
                "{} history variables at the last level; at most 64 are supported",
                cols.last().map_or(0, |c| c.len())
            )));
        }
        let mut pos = vec![0u32; set.len()];
        let mut rows: Vec<Vec<u8>> = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let w = (t + 1) * no + t;
            let mut r = Vec::with_capacity(set.level(t).len() * w);
            for (p, &id) in set.level(t).iter().enumerate() {
                pos[id.index()] = p as u32;
                let node = set.node(id);
                if let Some(parent) = node.parent {
                    let pw = w - no - 1;
                    let pp = pos[parent.index()] as usize;
                    r.extend_from_slice(&rows[t - 1][pp * pw..(pp + 1) * pw]);
                    r.push(node.action.expect("child has an action").0 as u8);
                }
                r.extend(obs_vars.iter().map(|&v| node.obs.value(v).unwrap_or(u8::MAX)));
            }
            rows.push(r);
        }
        let counts: Vec<usize> = (0..horizon).map(|t| set.level(t).len()).collect();
        let words: Vec<usize> = cols.iter().map(|c| c.len().div_ceil(8)).collect();
        let packed = rows
            .iter()
            .zip(&cols)
            .zip(&words)
            .zip(&counts)
            .map(|(((r, c), &nw), &n)| {
                let w = c.len();
                let mut out = vec![0u64; n * nw];
                for i in 0..n {
                    for (j, &b) in r[i * w..(i + 1) * w].iter().enumerate() {
                        out[i * nw + j / 8] |= (b as u64) << (8 * (j % 8));
                    }
                }
                out
            })
            .collect();
        Ok(Levels { obs_vars, cols, rows, packed, words, counts, pos })
    }

    pub fn width(&self, t: usize) -> usize {
        self.cols[t].len()
    }

    pub fn row(&self, t: usize, p: usize) -> &[u8] {
        let w = self.width(t);
        &self.rows[t][p * w..(p + 1) * w]
    }

    pub fn column(&self, t: usize, v: &HistVar) -> Option<usize> {
        let no = self.obs_vars.len();
        if !v.available_at(t) {
            return None;
        }
        let off = match v.kind {
            VarKind::Obs(i) => self.obs_vars.iter().position(|&x| x == i)?,
            VarKind::Action => no,
        };
        Some(v.t * (no + 1) + off)
    }

    pub fn mask_of(&self, t: usize, keep: &BTreeSet<HistVar>) -> Result<u64> {
        let mut m = 0u64;
        for v in keep {
            let c = self.column(t, v).ok_or_else(|| {
                CoreError::RepSpec(format!("{v:?} is not a history variable at timestep {t}"))
            })?;
            m |= 1 << c;
        }
        Ok(m)
    }

    #[cfg(test)]
    pub fn vars_of(&self, t: usize, mask: u64) -> BTreeSet<HistVar> {
        self.cols[t]
            .iter()
            .enumerate()
            .filter(|(c, _)| mask & (1 << c) != 0)
            .map(|(_, v)| *v)
            .collect()
    }

    pub fn len(&self, t: usize) -> usize {
        self.counts[t]
    }

    /// Class id per position, numbered by first occurrence.
    pub fn partition(&self, t: usize, mask: u64) -> Vec<u32> {
        let cols: Vec<usize> = (0..self.width(t)).filter(|c| mask & (1 << c) != 0).collect();
        let mut ids: FxHashMap<Vec<u8>, u32> = FxHashMap::default();
        (0..self.len(t))
            .map(|p| {
                let row = self.row(t, p);
                let key: Vec<u8> = cols.iter().map(|&c| row[c]).collect();
                let next = ids.len() as u32;
                *ids.entry(key).or_insert(next)
            })
            .collect()
    }

    /// Bitmask of columns where rows `p` and `q` differ.
    #[inline]
    pub fn diff(&self, t: usize, p: usize, q: usize) -> u64 {
        let nw = self.words[t];
        let a = &self.packed[t][p * nw..(p + 1) * nw];
        let b = &self.packed[t][q * nw..(q + 1) * nw];
        let mut m = 0u64;
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            m |= nonzero_bytes(x ^ y) << (8 * i);
        }
        m
    }
}

/// Bit `i` of the result is set when byte `i` of `x` is nonzero.
#[inline]
pub(crate) fn nonzero_bytes(x: u64) -> u64 {
    const LOW7: u64 = 0x7f7f_7f7f_7f7f_7f7f;
    const HIGH: u64 = 0x8080_8080_8080_8080;
    let y = ((x & LOW7) + LOW7) | x;
    let flags = (y & HIGH) >> 7;
    flags.wrapping_mul(0x0102_0408_1020_4080) >> 56
}

/// What a level's histories must agree on, given the next level's classes.
pub(crate) struct Targets {
    pub done: Vec<bool>,
    /// `sig[p * na + a]`: interned (reward, next-class distribution) of
    /// action `a`, or `NO_SIG` when `a` is not supported.
    pub sig: Vec<u32>,
    pub reward: Vec<i64>,
    pub na: usize,
    /// Every live history supports every action.
    pub full_support: bool,
}

impl Targets {
    /// `next` gives the class of each position at level `t + 1`; `None`
    /// drops the transition condition (last level).
    pub fn build(set: &HistorySet, levels: &Levels, t: usize, next: Option<&[u32]>) -> Targets {
        let na = set.num_actions;
        let all = if na == 64 { u64::MAX } else { (1u64 << na) - 1 };
        let ids = set.level(t);
        let mut intern: FxHashMap<(i64, Vec<(u32, i64)>), u32> = FxHashMap::default();
        let mut done = Vec::with_capacity(ids.len());
        let mut sig = vec![NO_SIG; ids.len() * na];
        let mut reward = vec![0i64; ids.len() * na];
        let mut full_support = true;
        for (p, &id) in ids.iter().enumerate() {
            let node = set.node(id);
            done.push(node.done);
            if !node.done && node.support != all {
                full_support = false;
            }
            for a in 0..na {
                if node.support & (1 << a) == 0 {
                    continue;
                }
                let r = quantize(node.rewards[a]);
                reward[p * na + a] = r;
                let mut dist: Vec<(u32, i64)> = Vec::new();
                if let Some(next) = next {
                    let mut acc: Vec<(u32, f64)> = Vec::new();
                    for &(b, child, prob) in &node.children {
                        if b.0 != a {
                            continue;
                        }
                        let c = next[levels.pos[child.index()] as usize];
                        match acc.iter_mut().find(|(k, _)| *k == c) {
                            Some(e) => e.1 += prob,
                            None => acc.push((c, prob)),
                        }
                    }
                    acc.sort_by_key(|(k, _)| *k);
                    dist = acc.into_iter().map(|(k, q)| (k, quantize(q))).collect();
                }
                let n = intern.len() as u32;
                sig[p * na + a] = *intern.entry((r, dist)).or_insert(n);
            }
        }
        Targets { done, sig, reward, na, full_support }
    }

    pub fn sig(&self, p: usize, a: usize) -> u32 {
        self.sig[p * self.na + a]
    }

    /// Groups of positions that must be separated from each other: every
    /// pair drawn from two different groups of one list conflicts.
    pub fn conflict_groups(&self) -> Vec<Vec<Vec<u32>>> {
        let n = self.done.len();
        let mut lists = Vec::new();
        let live: Vec<u32> = (0..n as u32).filter(|&p| !self.done[p as usize]).collect();
        let dead: Vec<u32> = (0..n as u32).filter(|&p| self.done[p as usize]).collect();
        if !live.is_empty() && !dead.is_empty() {
            lists.push(vec![live.clone(), dead]);
        }
        if self.full_support {
            let mut by: FxHashMap<&[u32], Vec<u32>> = FxHashMap::default();
            for &p in &live {
                let p_ = p as usize;
                by.entry(&self.sig[p_ * self.na..(p_ + 1) * self.na]).or_default().push(p);
            }
            if by.len() > 1 {
                let mut groups: Vec<Vec<u32>> = by.into_values().collect();
                groups.sort();
                lists.push(groups);
            }
        } else {
            for a in 0..self.na {
                let mut by: FxHashMap<u32, Vec<u32>> = FxHashMap::default();
                for &p in &live {
                    let s = self.sig(p as usize, a);
                    if s != NO_SIG {
                        by.entry(s).or_default().push(p);
                    }
                }
                if by.len() > 1 {
                    let mut groups: Vec<Vec<u32>> = by.into_values().collect();
                    groups.sort();
                    lists.push(groups);
                }
            }
        }
        lists
    }
}

/// Positions of `set`'s level `t` as node ids.
pub(crate) fn node_at(set: &HistorySet, t: usize, p: usize) -> NodeId {
    set.level(t)[p]
}
