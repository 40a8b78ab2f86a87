use spikeback::data::{dvs, mnist};
use std::path::Path;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tr: usize = args[1].parse().unwrap();
    let te: usize = args[2].parse().unwrap();
    let out = Path::new(&args[3]);
    let data = mnist::load(Path::new("data/mnist")).unwrap();
    let t0 = Instant::now();
    dvs::synth_corpus(&data.train, &data.test, out, tr, te, 7).unwrap();
    println!("generated {}+{} per class in {:.1}s", tr, te, t0.elapsed().as_secs_f64());
}
