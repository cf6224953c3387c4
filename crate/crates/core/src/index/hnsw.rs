//! Hierarchical navigable small-world graph over the index's slots.
//!
//! The graph only knows slot numbers; similarity is supplied by the caller
//! through [`Similarity`], so the same code serves insertion (slot vs slot)
//! and queries (external vector vs slot).

use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Highest layer a node may be assigned; keeps levels inside a `u8` on disk.
pub const MAX_LEVEL: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswParams {
    /// Neighbours per node on layers above 0; layer 0 uses `2 * m`, both when
    /// linking a new node and when trimming overfull lists.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 0x5eed,
        }
    }
}

impl HnswParams {
    /// `1 / ln(M)`.
    pub fn level_lambda(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    pub fn max_neighbors(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    /// Layer for a uniform draw `u` in (0, 1): `floor(-ln(u) * lambda)`.
    pub fn level_for(&self, u: f64) -> usize {
        ((-u.ln() * self.level_lambda()).floor() as usize).min(MAX_LEVEL)
    }
}

/// Similarity oracle used during traversal; larger is closer.
pub(crate) trait Similarity {
    fn to_query(&self, slot: u32) -> f64;
    fn between(&self, a: u32, b: u32) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scored {
    pub sim: f64,
    pub slot: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    // Higher similarity first; on exact ties the lower slot wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct HnswGraph {
    /// `links[slot][layer]` = neighbour slots.
    pub links: Vec<Vec<Vec<u32>>>,
    pub entry: Option<u32>,
    pub max_layer: usize,
}

impl HnswGraph {
    pub fn level_of(&self, slot: u32) -> usize {
        self.links[slot as usize].len() - 1
    }

    fn greedy_step(&self, sim: &impl Similarity, mut best: Scored, layer: usize) -> Scored {
        loop {
            let mut improved = false;
            for &n in &self.links[best.slot as usize][layer] {
                let cand = Scored {
                    sim: sim.to_query(n),
                    slot: n,
                };
                if cand > best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Best-first beam search on one layer. Result is sorted best first.
    pub fn search_layer(
        &self,
        sim: &impl Similarity,
        entries: &[Scored],
        ef: usize,
        layer: usize,
        skip: Option<u32>,
    ) -> Vec<Scored> {
        let mut visited = vec![false; self.links.len()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut found: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &e in entries {
            if visited[e.slot as usize] {
                continue;
            }
            visited[e.slot as usize] = true;
            candidates.push(e);
            if Some(e.slot) != skip {
                found.push(Reverse(e));
            }
        }
        if let Some(s) = skip {
            visited[s as usize] = true;
        }
        while found.len() > ef {
            found.pop();
        }

        while let Some(current) = candidates.pop() {
            if found.len() >= ef {
                if let Some(Reverse(worst)) = found.peek() {
                    if current < *worst {
                        break;
                    }
                }
            }
            for &n in &self.links[current.slot as usize][layer] {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let cand = Scored {
                    sim: sim.to_query(n),
                    slot: n,
                };
                let admit = found.len() < ef || found.peek().is_some_and(|Reverse(w)| cand > *w);
                if admit {
                    candidates.push(cand);
                    found.push(Reverse(cand));
                    if found.len() > ef {
                        found.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = found.into_iter().map(|Reverse(s)| s).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Greedy descent to `target_layer`, returning the entry for that layer.
    fn descend(&self, sim: &impl Similarity, target_layer: usize) -> Option<Scored> {
        let entry = self.entry?;
        let mut best = Scored {
            sim: sim.to_query(entry),
            slot: entry,
        };
        let mut layer = self.max_layer;
        while layer > target_layer {
            best = self.greedy_step(sim, best, layer);
            layer -= 1;
        }
        Some(best)
    }

    pub fn search(&self, sim: &impl Similarity, ef: usize) -> Vec<Scored> {
        match self.descend(sim, 0) {
            Some(ep) => self.search_layer(sim, &[ep], ef, 0, None),
            None => Vec::new(),
        }
    }

    /// Keeps candidates that are closer to `base` than to any already kept
    /// neighbour, scanning best first, then tops the list up to `m` with the
    /// best of the pruned ones. Lists that already fit are kept whole.
    fn select_neighbors(sim: &impl Similarity, candidates: &[Scored], m: usize) -> Vec<u32> {
        if candidates.len() <= m {
            return candidates.iter().map(|s| s.slot).collect();
        }
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned: Vec<Scored> = Vec::new();
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            let diverse = kept.iter().all(|k| sim.between(c.slot, k.slot) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        let room = m - kept.len();
        kept.extend(pruned.into_iter().take(room));
        kept.into_iter().map(|s| s.slot).collect()
    }

    pub fn push_node(&mut self, level: usize) -> u32 {
        self.links.push(vec![Vec::new(); level + 1]);
        (self.links.len() - 1) as u32
    }

    /// Links `slot` (already pushed with its level) into the graph.
    /// `sim.to_query` must measure similarity to `slot`'s own vector.
    pub fn connect(&mut self, sim: &impl Similarity, slot: u32, params: &HnswParams) {
        let level = self.level_of(slot);
        let Some(entry) = self.entry.filter(|&e| e != slot) else {
            self.entry = Some(slot);
            self.max_layer = level;
            return;
        };

        let mut ep = Scored {
            sim: sim.to_query(entry),
            slot: entry,
        };
        let mut layer = self.max_layer;
        while layer > level {
            ep = self.greedy_step(sim, ep, layer);
            layer -= 1;
        }

        let mut entries = vec![ep];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let found = self.search_layer(sim, &entries, params.ef_construction, layer, Some(slot));
            let neighbors = Self::select_neighbors(sim, &found, params.max_neighbors(layer));
            for &n in &neighbors {
                self.add_link(sim, n, slot, layer, params);
            }
            self.links[slot as usize][layer] = neighbors;
            if !found.is_empty() {
                entries = found;
            }
        }

        if level > self.max_layer {
            self.entry = Some(slot);
            self.max_layer = level;
        }
    }

    fn add_link(&mut self, sim: &impl Similarity, from: u32, to: u32, layer: usize, params: &HnswParams) {
        let list = &mut self.links[from as usize][layer];
        if list.contains(&to) {
            return;
        }
        list.push(to);
        let cap = params.max_neighbors(layer);
        if list.len() <= cap {
            return;
        }
        let mut scored: Vec<Scored> = list
            .iter()
            .map(|&n| Scored {
                sim: sim.between(from, n),
                slot: n,
            })
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        let pruned = Self::select_neighbors(sim, &scored, cap);
        self.links[from as usize][layer] = pruned;
    }
}
