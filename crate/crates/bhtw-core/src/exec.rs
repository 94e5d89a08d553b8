//! Deterministic execution of embarrassingly parallel index ranges.
//!
//! Ensemble reductions must produce bit-identical results whether they run on
//! one thread or many: acceptance checks compare the two paths at the level
//! of floating-point equality, and reproducibility across machines with
//! different core counts is a contract of the run manifest. Floating-point
//! addition is not associative, so determinism is obtained structurally:
//!
//! 1. the index range is split into fixed-size blocks ([`REDUCTION_BLOCK`]);
//! 2. each block is folded sequentially, in index order, into a fresh
//!    accumulator (blocks may run concurrently — no block ever shares an
//!    accumulator);
//! 3. block partials are collected in block order and combined by repeated
//!    pairwise merging (a fixed-shape binary tree).
//!
//! The tree shape depends only on the trajectory count, never on thread
//! scheduling, so both execution policies walk exactly the same sequence of
//! floating-point operations.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Indices folded sequentially per accumulator before merging. Large enough
/// to amortize accumulator allocation, small enough to load-balance a
/// four-digit ensemble across any realistic worker count.
pub const REDUCTION_BLOCK: usize = 64;

/// Which execution path a reduction uses. `Parallel` degrades to the
/// sequential path when the crate is built without the `parallel` feature;
/// results are bit-identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecPolicy {
    Sequential,
    Parallel,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }
}

/// Folds `fold(accum, i)` over `i in 0..count` and merges the partials.
///
/// `make` builds an empty accumulator; `fold` must be deterministic per
/// index; `merge` combines two partials (called in a fixed tree order). Any
/// `fold` error aborts the reduction and is returned as-is — callers wrap
/// the failing index themselves if they need it attributed.
pub fn block_fold_reduce<A, MK, F, MG>(
    count: usize,
    policy: ExecPolicy,
    make: MK,
    fold: F,
    merge: MG,
) -> Result<A>
where
    A: Send,
    MK: Fn() -> A + Sync,
    F: Fn(&mut A, usize) -> Result<()> + Sync,
    MG: Fn(A, A) -> A,
{
    let blocks = count.div_ceil(REDUCTION_BLOCK);
    let fold_block = |b: usize| -> Result<A> {
        let mut accum = make();
        let lo = b * REDUCTION_BLOCK;
        let hi = ((b + 1) * REDUCTION_BLOCK).min(count);
        for i in lo..hi {
            fold(&mut accum, i)?;
        }
        Ok(accum)
    };
    let partials: Vec<A> = match policy {
        ExecPolicy::Sequential => (0..blocks).map(fold_block).collect::<Result<_>>()?,
        ExecPolicy::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..blocks)
                    .into_par_iter()
                    .map(fold_block)
                    .collect::<Result<_>>()?
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..blocks).map(fold_block).collect::<Result<_>>()?
            }
        }
    };
    Ok(tree_merge(partials, &merge).unwrap_or_else(&make))
}

/// Pairwise reduction with a shape fixed by the partial count.
fn tree_merge<A>(mut parts: Vec<A>, merge: &impl Fn(A, A) -> A) -> Option<A> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(first) = it.next() {
            match it.next() {
                Some(second) => next.push(merge(first, second)),
                None => next.push(first),
            }
        }
        parts = next;
    }
    parts.pop()
}
