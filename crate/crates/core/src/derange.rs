//! Seeded derangements for the noisy-skills condition.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::skills::SkillsDictionary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no derangement exists for {0} element(s); at least 2 are required")]
pub struct TooFewElements(pub usize);

/// A uniformly random fixed-point-free permutation of `0..n`, drawn by rejection sampling
/// over uniform shuffles. `perm[i]` is the source position assigned to position `i`.
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>, TooFewElements> {
    if n < 2 {
        return Err(TooFewElements(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Reassigns skill definitions so that no skill keeps its own. Ids and names stay in place.
pub fn derange_definitions(dictionary: &SkillsDictionary, seed: u64) -> Result<SkillsDictionary, TooFewElements> {
    let perm = derangement(dictionary.len(), seed)?;
    Ok(dictionary.with_definitions_from(&perm))
}
