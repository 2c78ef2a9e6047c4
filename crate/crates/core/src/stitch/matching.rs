//! Descriptor matching with the ratio test and mutual-best filtering.

use serde::{Deserialize, Serialize};

use super::{Keypoint, StitchError};

/// A tentative correspondence between keypoint `a` of the first image and
/// keypoint `b` of the second, with the descriptor distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PutativeMatch {
    pub a: usize,
    pub b: usize,
    pub distance: f32,
}

fn dist_sq(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest and second-nearest neighbor of `query` among `set`, by squared
/// descriptor distance. Ties keep the earlier index.
fn two_nearest(query: &[f32], set: &[Keypoint]) -> (usize, f32, f32) {
    let mut best = usize::MAX;
    let mut d1 = f32::INFINITY;
    let mut d2 = f32::INFINITY;
    for (j, kp) in set.iter().enumerate() {
        let d = dist_sq(query, &kp.descriptor);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

/// Matches descriptors of `a` against `b`: Lowe ratio test on nearest vs
/// second-nearest distance, then mutual-best filtering. Empty inputs give
/// an empty result.
pub fn match_descriptors(
    a: &[Keypoint],
    b: &[Keypoint],
    ratio: f64,
) -> Result<Vec<PutativeMatch>, StitchError> {
    if !(0.0..1.0).contains(&ratio) || ratio <= 0.0 {
        return Err(StitchError::InvalidParameter(format!("ratio {ratio} not in (0, 1)")));
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    let ratio_sq = (ratio * ratio) as f32;
    let mut best_in_a: Vec<usize> = Vec::with_capacity(b.len());
    for kp in b {
        best_in_a.push(two_nearest(&kp.descriptor, a).0);
    }

    let mut out = Vec::new();
    for (i, kp) in a.iter().enumerate() {
        let (j, d1, d2) = two_nearest(&kp.descriptor, b);
        // With a single candidate the ratio test cannot reject.
        let passes = if b.len() == 1 { true } else { d1 < ratio_sq * d2 };
        if passes && best_in_a[j] == i {
            out.push(PutativeMatch { a: i, b: j, distance: d1.sqrt() });
        }
    }
    Ok(out)
}
