//! IDX-format MNIST loading and the fixed-pixel-permutation variant.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PIXELS: usize = 28 * 28;

/// A full image split: `images` is `count * PIXELS` bytes, row-major.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub count: usize,
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn image(&self, idx: usize) -> &[u8] {
        &self.images[idx * PIXELS..(idx + 1) * PIXELS]
    }

    pub fn label(&self, idx: usize) -> u8 {
        self.labels[idx]
    }

    /// Label histogram over the 10 classes.
    pub fn histogram(&self) -> [usize; 10] {
        let mut h = [0usize; 10];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Keep only the first `k` samples; `k = 0` keeps everything.
    pub fn truncate(&mut self, k: usize) {
        if k == 0 || k >= self.count {
            return;
        }
        self.count = k;
        self.images.truncate(k * PIXELS);
        self.labels.truncate(k);
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn read_u32(f: &mut File, path: &Path) -> Result<u32> {
    f.read_u32::<BigEndian>().map_err(|e| Error::io(path, e))
}

/// Read an IDX image file (magic 2051): returns flat `count * rows * cols` bytes.
pub fn read_idx_images(path: &Path) -> Result<(usize, Vec<u8>)> {
    let mut f = open(path)?;
    let magic = read_u32(&mut f, path)?;
    if magic != 2051 {
        return Err(Error::format("idx image file", format!("magic {magic}, expected 2051 in {}", path.display())));
    }
    let count = read_u32(&mut f, path)? as usize;
    let rows = read_u32(&mut f, path)? as usize;
    let cols = read_u32(&mut f, path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(Error::format("idx image file", format!("{rows}x{cols} images, expected 28x28")));
    }
    let mut data = Vec::new();
    f.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    if data.len() != count * rows * cols {
        return Err(Error::format(
            "idx image file",
            format!("{} payload bytes for {count} {rows}x{cols} images", data.len()),
        ));
    }
    Ok((count, data))
}

/// Read an IDX label file (magic 2049).
pub fn read_idx_labels(path: &Path) -> Result<(usize, Vec<u8>)> {
    let mut f = open(path)?;
    let magic = read_u32(&mut f, path)?;
    if magic != 2049 {
        return Err(Error::format("idx label file", format!("magic {magic}, expected 2049 in {}", path.display())));
    }
    let count = read_u32(&mut f, path)? as usize;
    let mut data = Vec::new();
    f.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    if data.len() != count {
        return Err(Error::format("idx label file", format!("{} labels for a count of {count}", data.len())));
    }
    if let Some(bad) = data.iter().find(|&&l| l > 9) {
        return Err(Error::format("idx label file", format!("label {bad} out of range")));
    }
    Ok((count, data))
}

fn load_split(images_path: PathBuf, labels_path: PathBuf) -> Result<ImageSet> {
    let (ni, images) = read_idx_images(&images_path)?;
    let (nl, labels) = read_idx_labels(&labels_path)?;
    if ni != nl {
        return Err(Error::format(
            "mnist split",
            format!("{ni} images but {nl} labels ({})", images_path.display()),
        ));
    }
    Ok(ImageSet { count: ni, images, labels })
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: ImageSet,
    pub test: ImageSet,
}

/// Load the four standard IDX files from `dir`.
pub fn load(dir: &Path) -> Result<Mnist> {
    Ok(Mnist {
        train: load_split(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?,
        test: load_split(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?,
    })
}

/// A fixed random bijection of pixel positions.
pub fn make_permutation(seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..PIXELS).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// Apply a pixel permutation to every image in the set, in place.
pub fn apply_permutation(set: &mut ImageSet, perm: &[usize]) {
    assert_eq!(perm.len(), PIXELS);
    let mut scratch = [0u8; PIXELS];
    for idx in 0..set.count {
        let img = &mut set.images[idx * PIXELS..(idx + 1) * PIXELS];
        for (dst, &src) in perm.iter().enumerate() {
            scratch[dst] = img[src];
        }
        img.copy_from_slice(&scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::{BigEndian, WriteBytesExt};
    use std::io::Write;

    fn write_images(path: &Path, images: &[[u8; PIXELS]]) {
        let mut f = File::create(path).unwrap();
        f.write_u32::<BigEndian>(2051).unwrap();
        f.write_u32::<BigEndian>(images.len() as u32).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_u32::<BigEndian>(2049).unwrap();
        f.write_u32::<BigEndian>(labels.len() as u32).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn synthetic_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = [0u8; PIXELS];
        img[100] = 255;
        img[101] = 17;
        write_images(&dir.path().join("imgs"), &[img, [7u8; PIXELS]]);
        write_labels(&dir.path().join("lbls"), &[3, 9]);
        let set = load_split(dir.path().join("imgs"), dir.path().join("lbls")).unwrap();
        assert_eq!(set.count, 2);
        assert_eq!(set.image(0)[100], 255);
        assert_eq!(set.image(1)[0], 7);
        assert_eq!(set.label(1), 9);
        assert_eq!(set.histogram()[3], 1);
        assert_eq!(set.histogram()[9], 1);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        let mut f = File::create(&path).unwrap();
        f.write_u32::<BigEndian>(1234).unwrap();
        f.write_u32::<BigEndian>(0).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        drop(f);
        let err = read_idx_images(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        let mut f = File::create(&path).unwrap();
        f.write_u32::<BigEndian>(2051).unwrap();
        f.write_u32::<BigEndian>(2).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_u32::<BigEndian>(28).unwrap();
        f.write_all(&[0u8; PIXELS]).unwrap(); // one image instead of two
        drop(f);
        assert!(read_idx_images(&path).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_images(&dir.path().join("imgs"), &[[0u8; PIXELS]]);
        write_labels(&dir.path().join("lbls"), &[1, 2]);
        assert!(load_split(dir.path().join("imgs"), dir.path().join("lbls")).is_err());
    }

    #[test]
    fn permutation_is_a_seeded_bijection() {
        let p1 = make_permutation(11);
        let p2 = make_permutation(11);
        let p3 = make_permutation(12);
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        let mut seen = vec![false; PIXELS];
        for &i in &p1 {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn permutation_preserves_multiset_of_pixels() {
        let mut img = [0u8; PIXELS];
        for (i, px) in img.iter_mut().enumerate() {
            *px = (i % 251) as u8;
        }
        let mut set = ImageSet { count: 1, images: img.to_vec(), labels: vec![0] };
        let perm = make_permutation(5);
        let mut before = set.images.clone();
        apply_permutation(&mut set, &perm);
        let mut after = set.images.clone();
        assert_ne!(before, after);
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
    }
}
