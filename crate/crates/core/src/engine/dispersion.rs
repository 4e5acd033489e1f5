//! Group joining with a preference against same-origin collisions.
//!
//! Groups that come from the same origin (I-groups of one stock, S-groups of
//! one sector) avoid sharing a target group. When the origin has no more
//! members than there are targets, its members land on distinct targets
//! chosen uniformly without replacement. Otherwise members are dealt
//! round-robin over a fresh random permutation of the targets, so per-target
//! loads from that origin differ by at most one.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;

/// Target indices in `0..targets` for `members` same-origin groups, appended
/// to `out` in member order.
pub fn disperse<R: Rng + ?Sized>(members: usize, targets: u32, rng: &mut R, out: &mut Vec<u32>) {
    assert!(targets >= 1, "at least one target group is required");
    if members == 0 {
        return;
    }
    let t = targets as usize;
    if members <= t {
        out.extend(index::sample(rng, t, members).into_iter().map(|k| k as u32));
    } else {
        let mut order: Vec<u32> = (0..targets).collect();
        order.shuffle(rng);
        out.extend((0..members).map(|k| order[k % t]));
    }
}

/// Assignment for several origins sharing one random stream. `origin_sizes[o]`
/// consecutive members belong to origin `o`; the result lists every member's
/// target in that order.
pub fn assign_with_dispersion<R: Rng + ?Sized>(origin_sizes: &[usize], targets: u32, rng: &mut R) -> Vec<u32> {
    let mut out = Vec::with_capacity(origin_sizes.iter().sum());
    for &m in origin_sizes {
        disperse(m, targets, rng, &mut out);
    }
    out
}
