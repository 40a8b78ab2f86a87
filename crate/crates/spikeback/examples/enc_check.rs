use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikeback::data::{mnist, poisson};

fn main() {
    let images = mnist::load(std::path::Path::new("data/mnist")).unwrap();
    let mut total = 0usize;
    let n = 200;
    for idx in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(idx as u64);
        let ev = poisson::encode(images.train.image(idx), 5_000.0, 50_000, &mut rng);
        total += ev.len();
    }
    println!("mean events per 50ms presentation: {:.1} (expect 250)", total as f64 / n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ev = poisson::encode(images.train.image(0), 5_000.0, 1_000_000, &mut rng);
    println!("events in 1s presentation: {} (expect 5000)", ev.len());
}
