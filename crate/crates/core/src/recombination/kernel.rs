//! Null-space vectors of small dense systems via Gauss-Jordan elimination
//! with complete pivoting.

use nalgebra::{DMatrix, DVector};

/// Pivots below this (after row equilibration) are treated as zero.
const RANK_TOLERANCE: f64 = 1e-13;

/// Returns a nonzero `v` with `a·v ≈ 0`, or `None` when `a` has full column rank.
///
/// Rows are equilibrated to unit max-norm first, which leaves the kernel
/// unchanged but makes the rank decision scale-free. The free column picked
/// is the first one left over by complete pivoting.
pub(crate) fn kernel_vector(a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (m, k) = a.shape();
    let mut work = a.clone();
    for i in 0..m {
        let scale = work.row(i).amax();
        if scale > 0.0 {
            work.row_mut(i).unscale_mut(scale);
        }
    }

    // perm[c] = original column living at working column c
    let mut perm: Vec<usize> = (0..k).collect();
    let mut rank = 0;
    while rank < m.min(k) {
        let (mut pr, mut pc, mut best) = (rank, rank, 0.0);
        for c in rank..k {
            for r in rank..m {
                let v = work[(r, c)].abs();
                if v > best {
                    best = v;
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= RANK_TOLERANCE {
            break;
        }
        work.swap_rows(rank, pr);
        work.swap_columns(rank, pc);
        perm.swap(rank, pc);

        let pivot = work[(rank, rank)];
        work.row_mut(rank).unscale_mut(pivot);
        for r in 0..m {
            if r == rank {
                continue;
            }
            let factor = work[(r, rank)];
            if factor != 0.0 {
                for c in rank..k {
                    let delta = factor * work[(rank, c)];
                    work[(r, c)] -= delta;
                }
            }
        }
        rank += 1;
    }

    if rank == k {
        return None;
    }

    // Reduced form is [I_r  B] in permuted columns; set the first free variable to 1.
    let free = rank;
    let mut v = DVector::zeros(k);
    v[perm[free]] = 1.0;
    for r in 0..rank {
        v[perm[r]] = -work[(r, free)];
    }
    Some(v)
}
