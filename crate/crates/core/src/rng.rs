//! Counter-based random streams.
//!
//! Every draw in the crate comes from a stream keyed by `(seed, domain, index)`.
//! The key is a hash of `(seed, domain)` and the ChaCha stream id is the index,
//! so replicate `r` sees the same numbers whatever the worker count or order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains. Distinct domains never share a key.
pub mod domain {
    pub const DATA: u64 = 0;
    pub const OPTIMIZER_STARTS: u64 = 1;
    pub const LAW: u64 = 2;
    pub const CONE: u64 = 3;
    pub const REFERENCE: u64 = 4;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for replicate `index` of domain `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> Stream {
    let mut state = seed ^ domain.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Data stream for replicate `index`.
pub fn stream(seed: u64, index: u64) -> Stream {
    substream(seed, domain::DATA, index)
}

/// Derive a child seed, e.g. for the optimizer starts of one replicate.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut state = seed ^ domain.rotate_left(17) ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_key_same_numbers() {
        let a: Vec<u64> = substream(7, domain::LAW, 3).random_iter().take(8).collect();
        let b: Vec<u64> = substream(7, domain::LAW, 3).random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn indices_and_domains_do_not_collide() {
        let first = |s: &mut Stream| -> [u64; 4] { [s.random(), s.random(), s.random(), s.random()] };
        let mut seen = std::collections::HashSet::new();
        for seed in 0..4u64 {
            for dom in 0..5u64 {
                for idx in 0..50u64 {
                    assert!(seen.insert(first(&mut substream(seed, dom, idx))));
                }
            }
        }
    }

    #[test]
    fn disjoint_index_ranges_look_independent() {
        // Correlation between the first uniforms of streams r and r + 5000.
        let n = 5000u64;
        let xs: Vec<f64> = (0..n).map(|r| stream(11, r).random::<f64>()).collect();
        let ys: Vec<f64> = (n..2 * n).map(|r| stream(11, r).random::<f64>()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let r = cov / (vx * vy).sqrt();
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "r = {r}");
    }
}
