//! Seed derivation for dataset items.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotate::SeedChain;
use crate::noisefield::mix64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MASK_STREAM: u64 = 0x6d61_736b;
const GENERATE_STREAM: u64 = 0x6765_6e65;
const STYLE_STREAM: u64 = 0x7374_796c;

/// Seed for item `index`. Injective in `index` for a fixed base: the affine
/// step is a bijection mod 2^64 (odd multiplier) and so is [`mix64`].
pub fn item_seed(base_seed: u64, index: u64) -> u64 {
    mix64(base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

fn stream(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

/// Seed used to shuffle style images for one epoch.
pub fn style_epoch_seed(base_seed: u64, epoch: u64) -> u64 {
    stream(base_seed, STYLE_STREAM.wrapping_add(epoch))
}

pub fn seed_chain(base_seed: u64, index: u64, style_pool: usize) -> SeedChain {
    let item = item_seed(base_seed, index);
    let epoch = if style_pool == 0 { 0 } else { index / style_pool as u64 };
    SeedChain {
        item,
        mask: stream(item, MASK_STREAM),
        style: style_epoch_seed(base_seed, epoch),
        generate: stream(item, GENERATE_STREAM),
    }
}

/// Style index for each of `count` items: every epoch visits the whole pool
/// once, in an order reshuffled per epoch.
pub fn style_schedule(base_seed: u64, pool: usize, count: usize) -> Vec<usize> {
    if pool == 0 {
        return Vec::new();
    }
    let mut order = Vec::with_capacity(count);
    let mut epoch = 0u64;
    while order.len() < count {
        let mut perm: Vec<usize> = (0..pool).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(style_epoch_seed(base_seed, epoch));
        for i in (1..pool).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        order.extend(perm.into_iter().take(count - order.len()));
        epoch += 1;
    }
    order
}
