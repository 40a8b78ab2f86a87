//! Poisson spike encoding of images.
//!
//! Each pixel drives an independent homogeneous Poisson process with a rate
//! proportional to its intensity; rates are normalized so the whole image
//! emits `total_rate_eps` events per second regardless of its brightness.

use rand::Rng;

use crate::dynamics::SpikeEvent;

/// Encode one image as a time-sorted spike train over `duration_us`.
///
/// Returns an empty train for an all-black image. Event times are rounded
/// down to integer microseconds; ties are ordered by pixel index.
pub fn encode(pixels: &[u8], total_rate_eps: f64, duration_us: u64, rng: &mut impl Rng) -> Vec<SpikeEvent> {
    let total: f64 = pixels.iter().map(|&p| p as f64).sum();
    if total <= 0.0 || total_rate_eps <= 0.0 || duration_us == 0 {
        return Vec::new();
    }
    let mut events = Vec::new();
    let duration = duration_us as f64;
    for (j, &p) in pixels.iter().enumerate() {
        if p == 0 {
            continue;
        }
        // Rate in events per microsecond.
        let rate = total_rate_eps * (p as f64 / total) / 1e6;
        let mut t = 0.0f64;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / rate;
            if t > duration {
                break;
            }
            let t_us = t as u64;
            if t_us > duration_us {
                break;
            }
            events.push(SpikeEvent { t_us, source: j as u32 });
        }
    }
    events.sort_by_key(|e| (e.t_us, e.source));
    events
}
