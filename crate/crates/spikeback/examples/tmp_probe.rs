use spikeback::config::TrainConfig;
use spikeback::data::mix_seed;
use spikeback::learning;
use spikeback::network::{self, Network};
use spikeback::optim::{Optimizer, WeightReg};
use spikeback::trainer;

fn main() {
    let mut cfg = TrainConfig::default();
    cfg.alpha = 3.0;
    cfg.lambda = 0.002;
    cfg.rho = 2e-4;
    let mut ablate = String::new();
    let mut samples = 6000usize;
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("key=value");
        if k == "ablate" {
            ablate = v.to_string();
        } else if k == "samples" {
            samples = v.parse().unwrap();
        } else {
            cfg.set(k, v).unwrap();
        }
    }
    let data = trainer::load_data(&cfg).unwrap();
    let net_cfg = cfg.network_config();
    let mut net = Network::init(&net_cfg, mix_seed(cfg.seed, 1, 0)).unwrap();
    let mut opt = Optimizer::new(cfg.optimizer, &net);
    opt.set_epoch_rates(cfg.eta_w);
    let reg = if cfg.lambda > 0.0 {
        WeightReg { lambda: cfg.lambda, beta: cfg.beta }
    } else {
        WeightReg::off()
    };
    let rho = if cfg.threshold_reg { Some(cfg.rho) } else { None };
    let enc_base = trainer::train_encode_base(cfg.seed);

    let block = 200;
    let mut o_spikes = 0u64;
    let mut h_spikes = 0u64;
    let mut active = 0usize;
    let mut correct = 0usize;
    let mut delta_abs = 0.0f64;
    let mut delta_n = 0usize;
    let mut hid_sq = 0.0f64;
    println!("block  active  out/smp  hid/smp  acc    mean|dOut|  sumdH2   vth_h    vth_o    sumw2_h  sumw2_o");
    for idx in 0..samples.min(data.train_len()) {
        let (events, dur) = trainer::encode_train(&cfg, &data, idx, 0, cfg.train_duration_us, enc_base);
        let rec = network::forward_sample(&mut net, &events, &network::ForwardOpts::train(dur, rho)).unwrap();
        let label = data.train_label(idx);
        let out = rec.layers.last().unwrap();
        let o: u32 = out.counts.iter().sum();
        o_spikes += o as u64;
        h_spikes += rec.layers[0].counts.iter().map(|&c| c as u64).sum::<u64>();
        if o > 0 {
            active += 1;
            let best = out
                .counts
                .iter()
                .enumerate()
                .max_by_key(|(_, &c)| c)
                .map(|(i, _)| i)
                .unwrap();
            if best == label {
                correct += 1;
            }
        }
        let mut grads = learning::backward(&net, &rec, label).unwrap();
        if let Some(ref mut g) = grads {
            let last = g.layers.len() - 1;
            match ablate.as_str() {
                "out_w" => g.layers[last].d_w.iter_mut().for_each(|v| *v = 0.0),
                "hid_w" => g.layers[0].d_w.iter_mut().for_each(|v| *v = 0.0),
                "vth" => g.layers.iter_mut().for_each(|l| l.d_vth.iter_mut().for_each(|v| *v = 0.0)),
                _ => {}
            }
        }
        if let Some(ref g) = grads {
            let d = &g.layers.last().unwrap().delta;
            delta_abs += d.iter().map(|x| x.abs()).sum::<f64>();
            delta_n += d.len();
            let dh = &g.layers[0].delta;
            hid_sq += dh.iter().map(|x| x * x).sum::<f64>();
        }
        opt.apply(&mut net, grads.as_ref(), &reg).unwrap();
        if (idx + 1) % block == 0 {
            let vth_h =
                net.layers[0].v_th.iter().sum::<f64>() / net.layers[0].n as f64;
            let vth_o =
                net.layers[1].v_th.iter().sum::<f64>() / net.layers[1].n as f64;
            let sw2 = |l: usize| {
                let p = &net.layers[l];
                (0..p.n)
                    .map(|i| p.row(i).iter().map(|w| w * w).sum::<f64>())
                    .sum::<f64>()
                    / p.n as f64
            };
            println!(
                "{:5}  {:6}  {:7.3}  {:7.2}  {:.3}  {:10.4}  {:7.4}  {:.5}  {:.5}  {:.5}  {:.5}",
                idx + 1,
                active,
                o_spikes as f64 / block as f64,
                h_spikes as f64 / block as f64,
                correct as f64 / block as f64,
                if delta_n > 0 { delta_abs / delta_n as f64 } else { 0.0 },
                if active > 0 { hid_sq / active as f64 } else { 0.0 },
                vth_h,
                vth_o,
                sw2(0),
                sw2(1)
            );
            o_spikes = 0;
            h_spikes = 0;
            active = 0;
            correct = 0;
            delta_abs = 0.0;
            delta_n = 0;
            hid_sq = 0.0;
        }
    }
}
