//! Piecing schedule for the infinite-horizon construction.
//!
//! Segment `k` replays a `T_k`-horizon policy `n_k` times, so it lasts
//! `T'_k = n_k T_k` steps and ends at `N_k = T'_1 + ... + T'_k`. The counts are
//!
//! ```text
//! n_1 = 1
//! n_k = ceil(k * max(T_{k+1} / T_k, n_{k-1} T_{k-1} / T_k))
//! ```
//!
//! which makes each segment at least `k` times longer than the one before,
//! so the earlier segments vanish from the running average.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecingSchedule {
    /// `T_1 .. T_{k_max}`.
    pub horizons: Vec<u64>,
    /// `n_1 .. n_{k_max}`.
    pub repetitions: Vec<u64>,
    /// `T'_k = n_k T_k`.
    pub segment_lengths: Vec<u64>,
    /// `N_k`, the cumulative segment lengths.
    pub boundaries: Vec<u64>,
    /// `N_{k-1} / T'_k` for `k >= 2`.
    pub tail_ratios: Vec<f64>,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a / b + u64::from(!a.is_multiple_of(b))
}

fn overflow() -> Error {
    Error::InvalidSchedule("schedule overflows u64".into())
}

/// Builds the schedule for the first `k_max` segments; needs `T_{k_max + 1}`.
pub fn piecing_schedule(t_list: &[u64], k_max: usize) -> Result<PiecingSchedule> {
    if k_max == 0 {
        return Err(Error::InvalidSchedule("k_max must be >= 1".into()));
    }
    if t_list.len() < k_max + 1 {
        return Err(Error::InvalidSchedule(format!(
            "need {} horizons for k_max = {k_max}, got {}",
            k_max + 1,
            t_list.len()
        )));
    }
    if t_list[0] == 0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule(
            "horizons must be strictly increasing positive integers".into(),
        ));
    }
    let mut repetitions = vec![1u64];
    for k in 2..=k_max as u64 {
        let i = (k - 1) as usize;
        let t_k = t_list[i];
        let by_next = ceil_div(k.checked_mul(t_list[i + 1]).ok_or_else(overflow)?, t_k);
        let prev = repetitions[i - 1]
            .checked_mul(t_list[i - 1])
            .and_then(|v| v.checked_mul(k))
            .ok_or_else(overflow)?;
        repetitions.push(by_next.max(ceil_div(prev, t_k)));
    }
    let horizons = t_list[..k_max].to_vec();
    let segment_lengths = horizons
        .iter()
        .zip(&repetitions)
        .map(|(t, n)| t.checked_mul(*n).ok_or_else(overflow))
        .collect::<Result<Vec<_>>>()?;
    let mut boundaries = Vec::with_capacity(k_max);
    let mut total = 0u64;
    for len in &segment_lengths {
        total = total.checked_add(*len).ok_or_else(overflow)?;
        boundaries.push(total);
    }
    let tail_ratios = (1..k_max)
        .map(|i| boundaries[i - 1] as f64 / segment_lengths[i] as f64)
        .collect();
    Ok(PiecingSchedule {
        horizons,
        repetitions,
        segment_lengths,
        boundaries,
        tail_ratios,
    })
}

impl PiecingSchedule {
    pub fn k_max(&self) -> usize {
        self.horizons.len()
    }

    /// `N_{k_max}`.
    pub fn total_length(&self) -> u64 {
        *self.boundaries.last().expect("non-empty schedule")
    }

    /// Segment (0-based) and offset inside the current `T_k` block at time
    /// `t`. Past `N_{k_max}` the last segment repeats.
    pub fn position(&self, t: u64) -> (usize, u64) {
        let total = self.total_length();
        if t >= total {
            let k = self.k_max() - 1;
            return (k, (t - total) % self.horizons[k]);
        }
        let k = self.boundaries.partition_point(|&n| n <= t);
        let start = if k == 0 { 0 } else { self.boundaries[k - 1] };
        (k, (t - start) % self.horizons[k])
    }

    /// Descriptions of every violated schedule invariant; empty when sound.
    pub fn violations(&self, t_list: &[u64]) -> Vec<String> {
        let mut out = Vec::new();
        if self.repetitions.first() != Some(&1) {
            out.push("n_1 != 1".into());
        }
        for i in 1..self.k_max() {
            let k = (i + 1) as u128;
            let (t_prev, t_k, t_next) = (t_list[i - 1] as u128, t_list[i] as u128, t_list[i + 1] as u128);
            let n = self.repetitions[i] as u128;
            let n_prev = self.repetitions[i - 1] as u128;
            // n is the least integer with n T_k >= k T_{k+1} and n T_k >= k n_{k-1} T_{k-1}
            let covers = n * t_k >= k * t_next && n * t_k >= k * n_prev * t_prev;
            let least = (n - 1) * t_k < k * t_next || (n - 1) * t_k < k * n_prev * t_prev;
            if !(covers && least) {
                out.push(format!("n_{} = {n} does not satisfy the ceiling recursion", i + 1));
            }
            if (self.segment_lengths[i] as u128) < k * self.segment_lengths[i - 1] as u128 {
                out.push(format!("T'_{} < {k} T'_{}", i + 1, i));
            }
            if i >= 2 && self.tail_ratios[i - 1] > 2.0 / i as f64 {
                out.push(format!("N_{} / T'_{} > 2 / {}", i, i + 1, i));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let s = piecing_schedule(&[2, 4, 8, 16], 3).unwrap();
        assert_eq!(s.repetitions, vec![1, 4, 6]);
        assert_eq!(s.segment_lengths, vec![2, 16, 48]);
        assert_eq!(s.boundaries, vec![2, 18, 66]);
        assert!(s.violations(&[2, 4, 8, 16]).is_empty());
        let s = piecing_schedule(&[1, 2, 4, 8], 3).unwrap();
        assert_eq!(s.repetitions, vec![1, 4, 6]);
    }

    #[test]
    fn rejects_bad_lists() {
        assert!(piecing_schedule(&[2, 2, 8], 2).is_err());
        assert!(piecing_schedule(&[0, 2, 8], 2).is_err());
        assert!(piecing_schedule(&[2, 4], 2).is_err());
        assert!(piecing_schedule(&[2, 4], 0).is_err());
    }

    #[test]
    fn positions() {
        let s = piecing_schedule(&[2, 4, 8, 16], 3).unwrap();
        assert_eq!(s.position(0), (0, 0));
        assert_eq!(s.position(1), (0, 1));
        assert_eq!(s.position(2), (1, 0));
        assert_eq!(s.position(7), (1, 1));
        assert_eq!(s.position(17), (1, 3));
        assert_eq!(s.position(18), (2, 0));
        assert_eq!(s.position(65), (2, 7));
        assert_eq!(s.position(66), (2, 0));
        assert_eq!(s.position(75), (2, 1));
    }

    proptest! {
        #[test]
        fn invariants_hold(start in 1u64..5, steps in proptest::collection::vec(1u64..6, 9)) {
            let mut t = vec![start];
            for d in steps {
                let last = *t.last().unwrap();
                t.push(last + d * last.max(1));
            }
            let s = piecing_schedule(&t, 8).unwrap();
            prop_assert!(s.violations(&t).is_empty(), "{:?}", s.violations(&t));
            prop_assert!(s.segment_lengths[1] >= 2 * s.segment_lengths[0]);
        }
    }
}
