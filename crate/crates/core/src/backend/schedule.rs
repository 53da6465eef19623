//! Checkpoint schedules.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

/// Dense-early, sparse-late checkpoint steps.
///
/// The first 1.28% of training gets up to ten checkpoints at halving
/// intervals (for 1M steps: 25, 50, …, 12 800); after that a checkpoint lands
/// every `total_steps / 50` steps. Always contains 0 and `total_steps`.
pub fn default_checkpoint_schedule(total_steps: u64) -> Vec<u64> {
    let mut steps = BTreeSet::new();
    steps.insert(0);
    steps.insert(total_steps);
    for k in 1..=50u64 {
        steps.insert(((total_steps as u128 * k as u128) / 50) as u64);
    }
    let mut early = ((total_steps as u128 * 128 + 5000) / 10_000) as u64;
    for _ in 0..10 {
        if early == 0 {
            break;
        }
        steps.insert(early);
        early /= 2;
    }
    steps.into_iter().collect()
}

/// `0, every, 2·every, …` plus `total_steps`.
pub fn uniform_checkpoint_schedule(total_steps: u64, every: u64) -> Vec<u64> {
    let mut steps: Vec<u64> = (0..=total_steps).step_by(every.max(1) as usize).collect();
    if steps.last() != Some(&total_steps) {
        steps.push(total_steps);
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_scale_schedule_resembles_reported_count() {
        let s = default_checkpoint_schedule(1_000_000);
        assert_eq!(s.first(), Some(&0));
        assert_eq!(s.last(), Some(&1_000_000));
        assert!((55..=70).contains(&s.len()), "len {}", s.len());
        for k in 1..=50u64 {
            assert!(s.contains(&(k * 20_000)));
        }
        assert!(s.contains(&12_800));
        assert_eq!(s.iter().filter(|&&x| x > 0 && x < 20_000).count(), 10);
    }

    #[test]
    fn tiny_schedule() {
        let s = default_checkpoint_schedule(50);
        assert_eq!(s, (0..=50).collect::<Vec<_>>());
        assert_eq!(default_checkpoint_schedule(1), alloc::vec![0, 1]);
    }

    #[test]
    fn uniform() {
        assert_eq!(uniform_checkpoint_schedule(500, 250), alloc::vec![0, 250, 500]);
        assert_eq!(uniform_checkpoint_schedule(600, 250), alloc::vec![0, 250, 500, 600]);
        assert_eq!(uniform_checkpoint_schedule(5000, 250).len(), 21);
    }

    proptest! {
        #[test]
        fn sorted_idempotent_and_bounded(total in 1u64..5_000_000) {
            let s = default_checkpoint_schedule(total);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(s[0], 0);
            prop_assert_eq!(*s.last().unwrap(), total);
            prop_assert_eq!(default_checkpoint_schedule(total), s);
        }
    }
}
