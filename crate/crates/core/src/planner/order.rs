//! Admissible processing orders for one emergency-group.
//!
//! Members linked by time-dependencies form a block that is processed
//! contiguously, placed at the rank of its most urgent member. Blocks are
//! ordered by that rank; blocks of equal rank may run in any order. Inside a
//! block members go by priority, equal priorities in any order. Every
//! admissible order is therefore one choice of permutation for each "slot"
//! (a set of interchangeable units), and orders are numbered in mixed radix
//! over those permutations.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::Emergency;

/// Sequence of member indices into the group.
pub type Order = Vec<usize>;

#[derive(Debug, Clone)]
pub struct OrderSpace {
    /// Tiers of blocks with equal head priority, most urgent first.
    block_tiers: Vec<Vec<Block>>,
}

#[derive(Debug, Clone)]
struct Block {
    /// Tiers of members with equal priority, most urgent first.
    member_tiers: Vec<Vec<usize>>,
}

impl OrderSpace {
    /// `tdt` holds index pairs `(before, after)` within `members`.
    pub fn new(members: &[Emergency], tdt: &[(usize, usize)]) -> Self {
        let n = members.len();
        // union-find over the undirected dependency graph
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        for &(a, b) in tdt {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(i);
        }

        let mut by_head: BTreeMap<i64, Vec<Block>> = BTreeMap::new();
        for (_, idxs) in comps {
            let mut tiers: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for i in idxs {
                tiers.entry(members[i].prio).or_default().push(i);
            }
            let head = *tiers.keys().next().expect("component is non-empty");
            by_head.entry(head).or_default().push(Block {
                member_tiers: tiers.into_values().collect(),
            });
        }
        OrderSpace {
            block_tiers: by_head.into_values().collect(),
        }
    }

    /// Sizes of the permutation slots, in decoding order.
    fn slot_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for tier in &self.block_tiers {
            sizes.push(tier.len());
            for b in tier {
                sizes.extend(b.member_tiers.iter().map(Vec::len));
            }
        }
        sizes
    }

    /// Number of admissible orders, `None` if it exceeds `u128`.
    pub fn count(&self) -> Option<u128> {
        self.slot_sizes()
            .into_iter()
            .try_fold(1u128, |acc, n| acc.checked_mul(factorial(n)?))
    }

    /// Order number `index` (`0 <= index < count()`).
    pub fn decode(&self, mut index: u128) -> Order {
        let mut perms = Vec::new();
        for n in self.slot_sizes() {
            let radix = factorial(n).expect("count() fits, so each slot does");
            perms.push(nth_permutation(n, index % radix));
            index /= radix;
        }
        self.assemble(&mut perms.into_iter())
    }

    fn assemble(&self, perms: &mut impl Iterator<Item = Vec<usize>>) -> Order {
        let mut order = Vec::new();
        for tier in &self.block_tiers {
            let block_perm = perms.next().expect("slot per block tier");
            let mut member_perms: Vec<Vec<Vec<usize>>> = Vec::new();
            for b in tier {
                member_perms.push(
                    b.member_tiers
                        .iter()
                        .map(|_| perms.next().expect("slot per member tier"))
                        .collect(),
                );
            }
            for bi in block_perm {
                let block = &tier[bi];
                for (mt, perm) in block.member_tiers.iter().zip(&member_perms[bi]) {
                    order.extend(perm.iter().map(|&k| mt[k]));
                }
            }
        }
        order
    }

    pub fn all(&self) -> Vec<Order> {
        let count = self.count().expect("caller checked the space is enumerable");
        (0..count).map(|i| self.decode(i)).collect()
    }

    /// Every order when there are at most `k`; otherwise exactly `k`
    /// distinct orders drawn uniformly with `rng`. Results come back in
    /// order-number order when the space is countable.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<Order> {
        match self.count() {
            Some(count) if count <= k as u128 => self.all(),
            Some(count) => {
                // Floyd's algorithm for k distinct indices in [0, count)
                let mut chosen = BTreeSet::new();
                for j in (count - k as u128)..count {
                    let t = rng.gen_range(0..=j);
                    if !chosen.insert(t) {
                        chosen.insert(j);
                    }
                }
                chosen.into_iter().map(|i| self.decode(i)).collect()
            }
            None => {
                let mut seen = BTreeSet::new();
                while seen.len() < k {
                    let mut perms = self.slot_sizes().into_iter().map(|n| {
                        let mut p: Vec<usize> = (0..n).collect();
                        p.shuffle(rng);
                        p
                    });
                    seen.insert(self.assemble(&mut perms));
                }
                seen.into_iter().collect()
            }
        }
    }
}

fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, x| acc.checked_mul(x))
}

/// Lexicographic `index`-th permutation of `0..n`.
fn nth_permutation(n: usize, mut index: u128) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for remaining in (1..=n).rev() {
        let f = factorial(remaining - 1).unwrap_or(u128::MAX);
        let pos = (index / f) as usize;
        index %= f;
        out.push(pool.remove(pos));
    }
    out
}
