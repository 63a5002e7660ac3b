//! Receive-array placement: the coordinate spread (TSS) is the only term the
//! receive positions control, and its maximizer clusters antennas at the two
//! segment boundaries with minimum spacing inside each cluster. The closed
//! form is paired with a brute-force search oracle over the one-large-gap
//! family.

use crate::metrics::tss;
use crate::scenario::{ArrayKind, ArrayLayout, ScenarioError};

/// Closed-form TSS-optimal receive layout: `j` antennas packed at the lower
/// boundary with spacing `d_min`, the rest packed against the upper boundary,
/// with `j = n/2` for even `n` and `(n-1)/2` for odd `n` (the tie partner
/// `(n+1)/2` has equal TSS; the lower index is chosen deterministically).
pub fn optimal_rx_positions(n_rx: usize, d_min: f64, d_fa: f64) -> Result<ArrayLayout, ScenarioError> {
    if n_rx == 0 {
        return Err(ScenarioError::Invariant("receive array needs antennas".into()));
    }
    if (n_rx - 1) as f64 * d_min > d_fa * (1.0 + 1e-12) {
        return Err(ScenarioError::Invariant(format!(
            "receive array infeasible: ({n_rx} - 1) * {d_min} > {d_fa}"
        )));
    }
    let j = if n_rx % 2 == 0 { n_rx / 2 } else { (n_rx - 1) / 2 };
    let coords = (1..=n_rx)
        .map(|p| {
            if p <= j {
                (p - 1) as f64 * d_min
            } else {
                d_fa - (n_rx - p) as f64 * d_min
            }
        })
        .collect();
    let layout = ArrayLayout::new(coords, ArrayKind::Receive);
    layout.validate(d_min, d_fa)?;
    Ok(layout)
}

/// Layout with split index `j` (antennas `1..=j` at the lower boundary) and a
/// common inner spacing `g >= d_min`; the remaining gap absorbs the slack.
fn split_layout(n: usize, j: usize, g: f64, d_min: f64, d_fa: f64) -> Option<Vec<f64>> {
    debug_assert!((1..n).contains(&j));
    let big = d_fa - (n - 2) as f64 * g;
    if big < d_min - 1e-12 {
        return None;
    }
    let mut coords = Vec::with_capacity(n);
    let mut x = 0.0;
    coords.push(x);
    for p in 1..n {
        x += if p == j { big } else { g };
        coords.push(x);
    }
    Some(coords)
}

/// Brute-force TSS maximization over the boundary family (one large gap at
/// position `j`, all other gaps equal) with the common gap swept on a grid of
/// step `grid_step`. The optimum provably lies in this family, so the search
/// is exhaustive for the placement problem.
pub fn brute_force_rx(n_rx: usize, d_min: f64, d_fa: f64, grid_step: f64) -> ArrayLayout {
    assert!(n_rx >= 2, "brute force needs at least two antennas");
    assert!(grid_step > 0.0);
    if n_rx == 2 {
        return ArrayLayout::new(vec![0.0, d_fa], ArrayKind::Receive);
    }
    let g_max = (d_fa - d_min) / (n_rx - 2) as f64;
    let steps = ((g_max - d_min) / grid_step).ceil() as usize;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 1..n_rx {
        for k in 0..=steps {
            let g = (d_min + k as f64 * grid_step).min(g_max);
            let Some(coords) = split_layout(n_rx, j, g, d_min, d_fa) else {
                continue;
            };
            let v = tss(&coords);
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, coords));
            }
        }
    }
    ArrayLayout::new(best.expect("nonempty family").1, ArrayKind::Receive)
}
