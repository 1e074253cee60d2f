//! Vertices of very deep trees, stored as explicit bit paths.
//!
//! These never materialize predecessor sets; only the meet kernel is
//! available, which is all the atomic capacity solver needs.

use std::sync::Arc;

use rand::Rng;

use crate::tree::MeetKernel;

/// Path of `level` steps from the root; step `i` goes to child `bit(i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeepNode1 {
    level: u64,
    words: Arc<Vec<u64>>,
}

impl DeepNode1 {
    pub fn root() -> Self {
        DeepNode1 { level: 0, words: Arc::new(Vec::new()) }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        DeepNode1 { level: bits.len() as u64, words: Arc::new(words) }
    }

    pub fn random<R: Rng>(level: u64, rng: &mut R) -> Self {
        let n = (level as usize).div_ceil(64);
        let mut words: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
        mask_tail(&mut words, level);
        DeepNode1 { level, words: Arc::new(words) }
    }

    /// Follows `self` for `prefix` steps, then continues with fresh random bits
    /// (the first of which leaves the path of `self`) down to `level`.
    pub fn branch<R: Rng>(&self, prefix: u64, level: u64, rng: &mut R) -> Self {
        assert!(prefix <= self.level && prefix <= level);
        let n = (level as usize).div_ceil(64);
        let mut words: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
        for i in 0..prefix {
            set_bit(&mut words, i, self.bit(i));
        }
        if prefix < level && prefix < self.level {
            set_bit(&mut words, prefix, !self.bit(prefix));
        }
        mask_tail(&mut words, level);
        DeepNode1 { level, words: Arc::new(words) }
    }

    /// Ancestor at `level`.
    pub fn truncate(&self, level: u64) -> Self {
        assert!(level <= self.level);
        let mut words: Vec<u64> = self.words[..(level as usize).div_ceil(64)].to_vec();
        mask_tail(&mut words, level);
        DeepNode1 { level, words: Arc::new(words) }
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn bit(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    /// `d_T(a ∧ b)`.
    pub fn meet_count(&self, other: &Self) -> u64 {
        let limit = self.level.min(other.level);
        let mut common = 0u64;
        for (a, b) in self.words.iter().zip(other.words.iter()) {
            let x = a ^ b;
            if x != 0 {
                common += x.trailing_zeros() as u64;
                return common.min(limit) + 1;
            }
            common += 64;
            if common >= limit {
                break;
            }
        }
        common.min(limit) + 1
    }
}

fn set_bit(words: &mut [u64], i: u64, v: bool) {
    let w = &mut words[(i / 64) as usize];
    if v {
        *w |= 1 << (i % 64);
    } else {
        *w &= !(1 << (i % 64));
    }
}

fn mask_tail(words: &mut [u64], level: u64) {
    let r = level % 64;
    if r != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << r) - 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeepNode2 {
    pub x: DeepNode1,
    pub y: DeepNode1,
}

impl DeepNode2 {
    pub fn new(x: DeepNode1, y: DeepNode1) -> Self {
        DeepNode2 { x, y }
    }

    pub fn ancestor_count(&self) -> f64 {
        (self.x.level + 1) as f64 * (self.y.level + 1) as f64
    }
}

impl MeetKernel for DeepNode1 {
    fn kernel(&self, other: &Self) -> f64 {
        self.meet_count(other) as f64
    }
}

impl MeetKernel for DeepNode2 {
    fn kernel(&self, other: &Self) -> f64 {
        self.x.meet_count(&other.x) as f64 * self.y.meet_count(&other.y) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn meet_counts() {
        let a = DeepNode1::from_bits(&[true, false, true]);
        let b = DeepNode1::from_bits(&[true, false, false, true]);
        assert_eq!(a.meet_count(&b), 3);
        assert_eq!(a.meet_count(&a), 4);
        assert_eq!(DeepNode1::root().meet_count(&a), 1);
        assert_eq!(a.truncate(2).meet_count(&a), 3);
    }

    #[test]
    fn branch_meets_at_prefix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DeepNode1::random(1_000_000, &mut rng);
        for prefix in [0u64, 1, 63, 64, 65, 777_777, 999_999] {
            let b = a.branch(prefix, 1_000_000, &mut rng);
            assert_eq!(a.meet_count(&b), prefix + 1);
        }
        let c = a.branch(500, 500, &mut rng);
        assert_eq!(a.meet_count(&c), 501);
    }

    #[test]
    fn agrees_with_shallow_nodes() {
        use crate::tree::{Node1, TreeShape};
        let shape = TreeShape::new(5).unwrap();
        let conv = |n: Node1| {
            let bits: Vec<bool> =
                (0..n.level()).map(|i| (n.pos() >> (n.level() - 1 - i)) & 1 == 1).collect();
            DeepNode1::from_bits(&bits)
        };
        for a in shape.nodes1() {
            for b in shape.nodes1() {
                assert_eq!(conv(a).meet_count(&conv(b)), a.meet(&b).ancestor_count());
            }
        }
    }
}
