//! Synthetic event-camera recordings of static images.
//!
//! Emulates the standard neuromorphic digitization protocol: the sensor
//! performs three 100 ms saccades over a static digit, and each pixel emits
//! ON/OFF events whenever its log-brightness moves one contrast step away
//! from its last reference level. The result is written in the same 34x34
//! AER format as real recordings, so the rest of the pipeline cannot tell
//! the difference. Generation is fully deterministic in the seed.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::mnist::ImageSet;
use crate::data::nmnist::{write_stream, DvsEvent, HEIGHT, WIDTH};
use crate::data::mix_seed;
use crate::error::{Error, Result};

/// Saccade segment length and step granularity.
const SEGMENT_US: u32 = 100_000;
const STEP_US: u32 = 1_000;
/// Contrast step that triggers one event.
const CONTRAST: f64 = 0.15;
/// Background noise events per second over the whole frame.
const NOISE_EPS: f64 = 300.0;
/// Digit offset inside the 34x34 frame.
const MARGIN: f64 = 3.0;

/// Camera offset at time `t_us`: a closed triangle of three linear saccades.
fn camera_offset(t_us: u32) -> (f64, f64) {
    const VERTS: [(f64, f64); 4] =
        [(-1.6, -1.2), (1.6, -0.4), (0.0, 1.6), (-1.6, -1.2)];
    let seg = ((t_us / SEGMENT_US) as usize).min(2);
    let frac = (t_us - seg as u32 * SEGMENT_US) as f64 / SEGMENT_US as f64;
    let (x0, y0) = VERTS[seg];
    let (x1, y1) = VERTS[seg + 1];
    (x0 + (x1 - x0) * frac, y0 + (y1 - y0) * frac)
}

/// Bilinear brightness of the shifted digit at frame pixel (px, py), in [0, 1].
fn brightness(img: &[u8], px: usize, py: usize, off: (f64, f64)) -> f64 {
    let sx = px as f64 - MARGIN - off.0;
    let sy = py as f64 - MARGIN - off.1;
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let mut acc = 0.0;
    for (dx, dy, w) in [
        (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
        (1.0, 0.0, fx * (1.0 - fy)),
        (0.0, 1.0, (1.0 - fx) * fy),
        (1.0, 1.0, fx * fy),
    ] {
        let x = x0 + dx;
        let y = y0 + dy;
        if (0.0..28.0).contains(&x) && (0.0..28.0).contains(&y) {
            acc += w * img[y as usize * 28 + x as usize] as f64 / 255.0;
        }
    }
    acc
}

/// Synthesize one 300 ms event stream for a 28x28 image.
pub fn synth_stream(img: &[u8], seed: u64) -> Vec<DvsEvent> {
    assert_eq!(img.len(), 28 * 28);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = 3 * SEGMENT_US;
    let mut reference = vec![0.0f64; WIDTH * HEIGHT];
    let off0 = camera_offset(0);
    for py in 0..HEIGHT {
        for px in 0..WIDTH {
            reference[py * WIDTH + px] = brightness(img, px, py, off0);
        }
    }

    let mut events: Vec<DvsEvent> = Vec::new();
    let mut t = STEP_US;
    while t <= duration {
        let off = camera_offset(t - 1);
        for py in 0..HEIGHT {
            for px in 0..WIDTH {
                let r = &mut reference[py * WIDTH + px];
                let b = brightness(img, px, py, off);
                let diff = b - *r;
                if diff.abs() < CONTRAST {
                    continue;
                }
                let k = (diff.abs() / CONTRAST) as u32;
                let on = diff > 0.0;
                for _ in 0..k {
                    let jitter: u32 = rng.random_range(0..STEP_US);
                    events.push(DvsEvent {
                        x: px as u8,
                        y: py as u8,
                        on,
                        t_us: t - STEP_US + jitter,
                    });
                }
                *r += if on { k as f64 * CONTRAST } else { -(k as f64) * CONTRAST };
            }
        }
        t += STEP_US;
    }

    let noise_count = (NOISE_EPS * duration as f64 / 1e6) as usize;
    for _ in 0..noise_count {
        events.push(DvsEvent {
            x: rng.random_range(0..WIDTH as u8),
            y: rng.random_range(0..HEIGHT as u8),
            on: rng.random_range(0..2) == 1,
            t_us: rng.random_range(0..duration),
        });
    }

    events.sort_by_key(|e| (e.t_us, e.y, e.x, e.on));
    events
}

fn class_indices(set: &ImageSet, per_class: usize) -> Vec<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for idx in 0..set.count {
        let c = set.label(idx) as usize;
        if by_class[c].len() < per_class {
            by_class[c].push(idx);
        }
    }
    by_class
}

fn marker_text(seed: u64, train_per_class: usize, test_per_class: usize) -> String {
    format!("synthetic-dvs v1\nseed {seed}\ntrain_per_class {train_per_class}\ntest_per_class {test_per_class}\n")
}

/// Generate a balanced synthetic corpus under `out_root` with the layout
/// `Train/<digit>/<index>.bin` and `Test/<digit>/<index>.bin`. A marker file
/// records the generation parameters; when it already matches, the corpus is
/// reused as is.
pub fn synth_corpus(
    train: &ImageSet,
    test: &ImageSet,
    out_root: &Path,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<()> {
    let marker = out_root.join("corpus.txt");
    let want = marker_text(seed, train_per_class, test_per_class);
    if let Ok(have) = fs::read_to_string(&marker) {
        if have == want {
            return Ok(());
        }
    }

    for (split_id, (set, per_class, split)) in
        [(train, train_per_class, "Train"), (test, test_per_class, "Test")].into_iter().enumerate()
    {
        let by_class = class_indices(set, per_class);
        for (digit, indices) in by_class.iter().enumerate() {
            if indices.len() < per_class {
                return Err(Error::format(
                    "source images",
                    format!("class {digit} has only {} samples, need {per_class}", indices.len()),
                ));
            }
            let dir = out_root.join(split).join(digit.to_string());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (k, &idx) in indices.iter().enumerate() {
                let stream_seed = mix_seed(seed, split_id as u64, (digit * 1_000_000 + k) as u64);
                let events = synth_stream(set.image(idx), stream_seed);
                write_stream(&dir.join(format!("{k:05}.bin")), &events)?;
            }
        }
    }
    fs::write(&marker, want).map_err(|e| Error::io(&marker, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::nmnist;

    fn blob_image() -> Vec<u8> {
        // A bright 10x10 square in the middle of the field.
        let mut img = vec![0u8; 28 * 28];
        for y in 9..19 {
            for x in 9..19 {
                img[y * 28 + x] = 255;
            }
        }
        img
    }

    #[test]
    fn stream_is_sorted_in_frame_and_in_range() {
        let events = synth_stream(&blob_image(), 42);
        assert!(events.len() > 500, "only {} events", events.len());
        assert!(events.len() < 20_000, "{} events", events.len());
        let mut prev = 0;
        for e in &events {
            assert!((e.x as usize) < WIDTH && (e.y as usize) < HEIGHT);
            assert!(e.t_us >= prev);
            assert!(e.t_us <= 300_000);
            prev = e.t_us;
        }
        // Both polarities occur: edges brighten and darken as the camera moves.
        assert!(events.iter().any(|e| e.on));
        assert!(events.iter().any(|e| !e.on));
    }

    #[test]
    fn stream_is_deterministic_in_seed() {
        let a = synth_stream(&blob_image(), 7);
        let b = synth_stream(&blob_image(), 7);
        let c = synth_stream(&blob_image(), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn events_trace_the_moving_edges() {
        // Events should concentrate near the blob edges, not the far corners.
        let events = synth_stream(&blob_image(), 3);
        let near_blob = events
            .iter()
            .filter(|e| (8..=24).contains(&(e.x as usize)) && (8..=24).contains(&(e.y as usize)))
            .count();
        assert!(near_blob as f64 > 0.8 * events.len() as f64);
    }

    #[test]
    fn empty_image_emits_only_noise() {
        let events = synth_stream(&vec![0u8; 28 * 28], 1);
        let expected_noise = (NOISE_EPS * 0.3) as usize;
        assert_eq!(events.len(), expected_noise);
    }

    #[test]
    fn corpus_layout_and_caching() {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let blob = blob_image();
        for digit in 0..10u8 {
            for _ in 0..2 {
                images.extend_from_slice(&blob);
                labels.push(digit);
            }
        }
        let set = ImageSet { count: labels.len(), images, labels };
        let dir = tempfile::tempdir().unwrap();
        synth_corpus(&set, &set, dir.path(), 2, 1, 99).unwrap();
        let train = nmnist::load_split_dir(&dir.path().join("Train"), 0).unwrap();
        let test = nmnist::load_split_dir(&dir.path().join("Test"), 0).unwrap();
        assert_eq!(train.len(), 20);
        assert_eq!(test.len(), 10);
        // Streams are valid AER files with events.
        assert!(train.streams.iter().all(|s| !s.is_empty()));
        // Second call is a cache hit and leaves files untouched.
        let path = dir.path().join("Train/0/00000.bin");
        let before = fs::metadata(&path).unwrap().modified().unwrap();
        synth_corpus(&set, &set, dir.path(), 2, 1, 99).unwrap();
        let after = fs::metadata(&path).unwrap().modified().unwrap();
        assert_eq!(before, after);
    }
}
