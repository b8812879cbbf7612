//! Exact solver for separable quadratics over a spacing chain.
//!
//! Solves
//!
//! ```text
//! min  sum_n q_n (x_n - c_n)^2
//! s.t. x_n - x_{n-1} >= gap,   lo <= x_1,   x_N <= hi
//! ```
//!
//! Substituting `z_n = x_n - (n-1) gap` turns the chain into `z_1 <= ... <= z_N`
//! with every `z_n` in `[lo, hi - (N-1) gap]`, i.e. a bounded weighted isotonic
//! regression. Pool-adjacent-violators gives the unbounded solution, and the
//! bounded optimum is its projection onto the box.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ChainBounds {
    pub gap: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Returns the unique minimiser. `weights` must be positive.
pub fn solve(weights: &[f64], targets: &[f64], bounds: ChainBounds) -> Result<Vec<f64>> {
    let n = weights.len();
    if n != targets.len() || n == 0 {
        return Err(Error::Domain("chain QP needs matching, non-empty inputs".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Domain("chain QP weights must be positive".into()));
    }
    let z_hi = bounds.hi - (n - 1) as f64 * bounds.gap;
    if z_hi < bounds.lo {
        return Err(Error::Config(format!(
            "{n} points at spacing {} do not fit in [{}, {}]",
            bounds.gap, bounds.lo, bounds.hi
        )));
    }

    // blocks of (weighted mean, total weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
    for (i, (&w, &c)) in weights.iter().zip(targets).enumerate() {
        let mut block = (c - i as f64 * bounds.gap, w, 1usize);
        while let Some(&(m, bw, cnt)) = blocks.last() {
            if m <= block.0 {
                break;
            }
            blocks.pop();
            let total = bw + block.1;
            block = ((m * bw + block.0 * block.1) / total, total, cnt + block.2);
        }
        blocks.push(block);
    }

    let mut x = Vec::with_capacity(n);
    for (m, _, cnt) in blocks {
        let z = m.clamp(bounds.lo, z_hi);
        for _ in 0..cnt {
            let i = x.len();
            x.push(z + i as f64 * bounds.gap);
        }
    }
    Ok(x)
}
