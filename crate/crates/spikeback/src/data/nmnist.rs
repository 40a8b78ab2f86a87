//! Event-camera digit streams in the 34x34 AER binary format.
//!
//! Each event is 5 big-endian bytes: x, y, then polarity in the top bit of
//! the third byte with the remaining 23 bits holding the microsecond
//! timestamp. Streams are stored one file per sample under directories
//! named by digit: `<root>/Train/3/00042.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::dynamics::SpikeEvent;
use crate::error::{Error, Result};

pub const WIDTH: usize = 34;
pub const HEIGHT: usize = 34;
/// Two polarity channels of a 34x34 frame.
pub const INPUT_DIM: usize = 2 * WIDTH * HEIGHT;
pub const MAX_T_US: u32 = (1 << 23) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DvsEvent {
    pub x: u8,
    pub y: u8,
    pub on: bool,
    pub t_us: u32,
}

/// Decode a raw AER byte stream. Validates record framing, coordinate
/// bounds, and timestamp monotonicity.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<DvsEvent>> {
    if bytes.len() % 5 != 0 {
        return Err(Error::format("aer stream", format!("{} bytes is not a multiple of 5", bytes.len())));
    }
    let mut events = Vec::with_capacity(bytes.len() / 5);
    let mut prev = 0u32;
    for (k, rec) in bytes.chunks_exact(5).enumerate() {
        let x = rec[0];
        let y = rec[1];
        let on = rec[2] & 0x80 != 0;
        let t_us = ((rec[2] as u32 & 0x7f) << 16) | ((rec[3] as u32) << 8) | rec[4] as u32;
        if (x as usize) >= WIDTH || (y as usize) >= HEIGHT {
            return Err(Error::format("aer stream", format!("event {k} at ({x}, {y}) is outside the 34x34 frame")));
        }
        if t_us < prev {
            return Err(Error::format("aer stream", format!("event {k} at {t_us} us precedes {prev} us")));
        }
        prev = t_us;
        events.push(DvsEvent { x, y, on, t_us });
    }
    Ok(events)
}

/// Encode events back to raw AER bytes (the exact inverse of
/// [`decode_stream`] for valid streams).
pub fn encode_stream(events: &[DvsEvent]) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(events.len() * 5);
    for (k, e) in events.iter().enumerate() {
        if e.t_us > MAX_T_US {
            return Err(Error::format("aer stream", format!("event {k} timestamp {} us exceeds 23 bits", e.t_us)));
        }
        bytes.push(e.x);
        bytes.push(e.y);
        bytes.push(((e.on as u8) << 7) | ((e.t_us >> 16) as u8 & 0x7f));
        bytes.push((e.t_us >> 8) as u8);
        bytes.push(e.t_us as u8);
    }
    Ok(bytes)
}

pub fn read_stream(path: &Path) -> Result<Vec<DvsEvent>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_stream(&bytes)
}

pub fn write_stream(path: &Path, events: &[DvsEvent]) -> Result<()> {
    fs::write(path, encode_stream(events)?).map_err(|e| Error::io(path, e))
}

/// Flatten an event to a network input line: the off channel occupies lines
/// `[0, 1156)` and the on channel `[1156, 2312)`, row-major within each.
pub fn input_line(e: &DvsEvent) -> u32 {
    (e.on as u32) * (WIDTH * HEIGHT) as u32 + e.y as u32 * WIDTH as u32 + e.x as u32
}

/// Convert a stream to network input events (already time-sorted).
pub fn to_input_events(events: &[DvsEvent]) -> Vec<SpikeEvent> {
    events.iter().map(|e| SpikeEvent { t_us: e.t_us as u64, source: input_line(e) }).collect()
}

/// Cut a random contiguous `window` of events, rebased to start at time 0.
/// Streams shorter than the window are returned whole. The second value is
/// the presentation duration (the last rebased timestamp).
pub fn pick_window(events: &[DvsEvent], window: usize, rng: &mut impl Rng) -> (Vec<SpikeEvent>, u64) {
    if events.is_empty() {
        return (Vec::new(), 0);
    }
    let (start, end) = if events.len() <= window {
        (0, events.len())
    } else {
        let start = rng.random_range(0..=events.len() - window);
        (start, start + window)
    };
    let t0 = events[start].t_us as u64;
    let cut: Vec<SpikeEvent> = events[start..end]
        .iter()
        .map(|e| SpikeEvent { t_us: e.t_us as u64 - t0, source: input_line(e) })
        .collect();
    let duration = cut.last().map_or(0, |e| e.t_us);
    (cut, duration)
}

/// A labeled split of event streams.
#[derive(Debug, Clone, Default)]
pub struct EventSet {
    pub streams: Vec<Vec<DvsEvent>>,
    pub labels: Vec<u8>,
}

impl EventSet {
    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// Reorder so classes alternate (first sample of each digit, then the
    /// second of each, and so on), making any prefix class-balanced.
    pub fn interleave_classes(&mut self) {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
        for (idx, &label) in self.labels.iter().enumerate() {
            by_class[label as usize].push(idx);
        }
        let mut order = Vec::with_capacity(self.len());
        let deepest = by_class.iter().map(|c| c.len()).max().unwrap_or(0);
        for k in 0..deepest {
            for class in &by_class {
                if let Some(&idx) = class.get(k) {
                    order.push(idx);
                }
            }
        }
        self.streams = order.iter().map(|&i| std::mem::take(&mut self.streams[i])).collect();
        self.labels = order.iter().map(|&i| self.labels[i]).collect();
    }

    /// Keep only the first `k` streams; `k = 0` keeps everything.
    pub fn truncate(&mut self, k: usize) {
        if k == 0 || k >= self.len() {
            return;
        }
        self.streams.truncate(k);
        self.labels.truncate(k);
    }
}

/// Load every stream under `<split_dir>/<digit>/*.bin`, digits ascending,
/// file names sorted within each digit. `limit_per_class` of 0 means all.
pub fn load_split_dir(split_dir: &Path, limit_per_class: usize) -> Result<EventSet> {
    let mut set = EventSet::default();
    for digit in 0..10u8 {
        let dir = split_dir.join(digit.to_string());
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        if limit_per_class > 0 {
            files.truncate(limit_per_class);
        }
        if files.is_empty() {
            return Err(Error::format("event dataset", format!("no .bin streams under {}", dir.display())));
        }
        for f in files {
            set.streams.push(read_stream(&f)?);
            set.labels.push(digit);
        }
    }
    Ok(set)
}
