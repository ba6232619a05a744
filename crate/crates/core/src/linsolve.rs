//! Sparse Gaussian elimination over exact rationals.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::rational::Prob;

pub(crate) type SparseRow = BTreeMap<usize, Prob>;

/// Solves `A X = B` for square nonsingular `A` given as sparse rows, with
/// one sparse right-hand-side row per equation (keys are RHS columns).
/// Returns one sparse solution row per unknown.
///
/// Pivoting takes the first row (in index order) with a nonzero entry in the
/// current column, so the result is deterministic.
pub(crate) fn solve(mut a: Vec<SparseRow>, mut b: Vec<SparseRow>) -> Option<Vec<SparseRow>> {
    let n = a.len();
    assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n).find(|&r| a[r].get(&col).is_some_and(|v| !v.is_zero()))?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][&col].clone();
        for v in a[col].values_mut() {
            *v /= &p;
        }
        for v in b[col].values_mut() {
            *v /= &p;
        }
        let (pivot_a, pivot_b) = (a[col].clone(), b[col].clone());
        for r in 0..n {
            if r == col {
                continue;
            }
            let Some(factor) = a[r].get(&col).cloned() else {
                continue;
            };
            axpy(&mut a[r], &factor, &pivot_a);
            axpy(&mut b[r], &factor, &pivot_b);
        }
    }
    Some(b)
}

/// `row -= factor * pivot`, dropping entries that cancel.
fn axpy(row: &mut SparseRow, factor: &Prob, pivot: &SparseRow) {
    for (&k, v) in pivot {
        let delta = factor * v;
        let entry = row.entry(k).or_insert_with(Prob::zero);
        *entry -= delta;
        if entry.is_zero() {
            row.remove(&k);
        }
    }
}
