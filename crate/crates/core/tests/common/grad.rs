//! Central finite-difference checks. Each check returns the worst relative
//! error it saw; callers decide the tolerance.

use super::{rand_tensor, rel_err, rng};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wakeloc::model::{param_table, LayerSpec, Mode, ModelConfig, Network, WeightStore};
use wakeloc::tensor::*;
use wakeloc::train::{batch_loss, segment_loss};

pub const SEEDS: u64 = 50;
const STEP: f64 = 1e-3;
/// Tolerance for f32 per-op checks and the tiny network.
pub const F32_TOL: f64 = 1e-3;
/// Tolerance for the f64 scalar loss check.
pub const LOSS_TOL: f64 = 1e-6;

/// Numeric gradient of `sum(w * f(x))` wrt `x`, in f32 with f64 accumulation
/// of the per-output differences.
fn numeric<F>(x: &Tensor<f32>, w: &[f64], f: F) -> Vec<f64>
where
    F: Fn(&Tensor<f32>) -> Tensor<f32>,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + STEP as f32;
        let hi = f(&xp);
        xp.data_mut()[i] = orig - STEP as f32;
        let lo = f(&xp);
        xp.data_mut()[i] = orig;
        let h = (orig + STEP as f32) as f64 - (orig - STEP as f32) as f64;
        g[i] = hi
            .data()
            .iter()
            .zip(lo.data())
            .zip(w)
            .map(|((&a, &b), &wi)| wi * (a as f64 - b as f64))
            .sum::<f64>()
            / h;
    }
    g
}

fn as_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn out_weights(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f32>) {
    let w: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    (w.iter().map(|&v| v as f64).collect(), w)
}

/// Runs `check` for every seed and returns the worst error.
fn worst(name: &str, check: impl Fn(u64) -> f64) -> f64 {
    let e = (0..SEEDS).map(check).fold(0.0, f64::max);
    println!("{name}: max relative error {e:.3e} over {SEEDS} seeds");
    e
}

pub fn conv2d() -> f64 {
    worst("conv2d", |seed| {
        let mut r = rng(seed);
        let groups = [1, 2][r.gen_range(0..2)];
        let ci = groups * r.gen_range(1..=2);
        let co = groups * r.gen_range(1..=2);
        let spec = ConvSpec::new((r.gen_range(1..=3), r.gen_range(1..=3)))
            .stride(r.gen_range(1..=2), r.gen_range(1..=2))
            .dilation(r.gen_range(1..=2), r.gen_range(1..=2))
            .padding(r.gen_range(0..=1), r.gen_range(0..=1))
            .groups(groups);
        let x = rand_tensor(&mut r, &[2, ci, 6, 7]);
        let k = rand_tensor(&mut r, &[co, ci / groups, spec.kernel.0, spec.kernel.1]);
        let b = rand_tensor(&mut r, &[co]);
        let y = conv2d_forward(&x, &k, Some(&b), &spec).unwrap();
        let (w64, w32) = out_weights(&mut r, y.len());
        let gy = Tensor::from_vec(y.dims(), w32).unwrap();
        let g = conv2d_backward(&gy, &x, &k, &spec).unwrap();
        let ex = rel_err(&as_f64(&g.input), &numeric(&x, &w64, |x| conv2d_forward(x, &k, Some(&b), &spec).unwrap()));
        let ek = rel_err(&as_f64(&g.weight), &numeric(&k, &w64, |k| conv2d_forward(&x, k, Some(&b), &spec).unwrap()));
        let eb = rel_err(&as_f64(&g.bias), &numeric(&b, &w64, |b| conv2d_forward(&x, &k, Some(b), &spec).unwrap()));
        ex.max(ek).max(eb)
    })
}

fn unary_check(name: &str, fwd: fn(&Tensor<f32>) -> Tensor<f32>, bwd: impl Fn(&Tensor<f32>, &Tensor<f32>) -> Tensor<f32>) -> f64 {
    worst(name, |seed| {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, &[2, 3, 4, 5]);
        let y = fwd(&x);
        let (w64, w32) = out_weights(&mut r, y.len());
        let gy = Tensor::from_vec(y.dims(), w32).unwrap();
        rel_err(&as_f64(&bwd(&gy, &x)), &numeric(&x, &w64, fwd))
    })
}

pub fn swish() -> f64 {
    unary_check("swish", swish_forward, swish_backward)
}

pub fn relu() -> f64 {
    unary_check("relu", relu_forward, |g, x| relu_backward(g, &relu_forward(x)))
}

pub fn avgpool() -> f64 {
    unary_check("freq_avgpool", freq_avgpool_forward, |g, x| freq_avgpool_backward(g, x.dims()[2]))
}

pub fn time_trim() -> f64 {
    unary_check("time_trim", |x| time_trim_forward(x, 2, 1).unwrap(), |g, _| time_trim_backward(g, 2, 1))
}

pub fn dropout() -> f64 {
    worst("channel_dropout", |seed| {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, &[2, 3, 4, 5]);
        let mask: Vec<f32> = dropout_mask(&mut r, 2, 3, 0.3);
        let y = channel_dropout_forward(&x, &mask);
        let (w64, w32) = out_weights(&mut r, y.len());
        let gy = Tensor::from_vec(y.dims(), w32).unwrap();
        let g = channel_dropout_backward(&gy, &mask);
        rel_err(&as_f64(&g), &numeric(&x, &w64, |x| channel_dropout_forward(x, &mask)))
    })
}

pub fn broadcast_add() -> f64 {
    worst("freq_broadcast_add", |seed| {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, &[2, 3, 4, 5]);
        let h = rand_tensor(&mut r, &[2, 3, 1, 5]);
        let y = freq_broadcast_add(&x, &h).unwrap();
        let (w64, w32) = out_weights(&mut r, y.len());
        let gy = Tensor::from_vec(y.dims(), w32).unwrap();
        let eh = rel_err(
            &as_f64(&freq_broadcast_add_backward(&gy)),
            &numeric(&h, &w64, |h| freq_broadcast_add(&x, h).unwrap()),
        );
        let ex = rel_err(&as_f64(&gy), &numeric(&x, &w64, |x| freq_broadcast_add(x, &h).unwrap()));
        eh.max(ex)
    })
}

fn norm_check(name: &str, groups: Option<usize>) -> f64 {
    worst(name, |seed| {
        let mut r = rng(seed);
        let (c, f) = (3, 4);
        let pc = c * groups.unwrap_or(1);
        let x = rand_tensor(&mut r, &[2, c, f, 5]);
        let scale = rand_tensor(&mut r, &[pc]);
        let shift = rand_tensor(&mut r, &[pc]);
        let (rm, rv) = (Tensor::zeros(&[pc]), Tensor::full(&[pc], 1.0));
        let fwd = |x: &Tensor<f32>, s: &Tensor<f32>, b: &Tensor<f32>| match groups {
            None => batchnorm_forward(x, s, b, &rm, &rv, NormMode::Train).unwrap(),
            Some(g) => subspectral_norm_forward(x, s, b, &rm, &rv, g, NormMode::Train).unwrap(),
        };
        let (y, cache) = fwd(&x, &scale, &shift);
        let cache = cache.unwrap();
        let (w64, w32) = out_weights(&mut r, y.len());
        let gy = Tensor::from_vec(y.dims(), w32).unwrap();
        let (gx, gs, gb) = match groups {
            None => batchnorm_backward(&gy, &cache, &scale).unwrap(),
            Some(g) => subspectral_norm_backward(&gy, &cache, &scale, g).unwrap(),
        };
        let ex = rel_err(&as_f64(&gx), &numeric(&x, &w64, |x| fwd(x, &scale, &shift).0));
        let es = rel_err(&as_f64(&gs), &numeric(&scale, &w64, |s| fwd(&x, s, &shift).0));
        let eb = rel_err(&as_f64(&gb), &numeric(&shift, &w64, |b| fwd(&x, &scale, b).0));
        ex.max(es).max(eb)
    })
}

pub fn batchnorm() -> f64 {
    norm_check("batchnorm", None)
}

pub fn subspectral_norm() -> f64 {
    norm_check("subspectral_norm", Some(2))
}

pub fn loss_f64() -> f64 {
    let h = 1e-6;
    let mut worst_err: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        for gamma in [0.0, 1.0, 2.0, 4.0] {
            let z = r.gen_range(-8.0..8.0);
            let o = r.gen_range(-1.0..2.0);
            let label = r.gen_range(0..2u8);
            let target = Some(r.gen_range(0.0..1.0));
            let t = segment_loss(z, label, o, target, gamma);
            let f = |z: f64, o: f64| segment_loss(z, label, o, target, gamma).total();
            let nz = (f(z + h, o) - f(z - h, o)) / (2.0 * h);
            let no = (f(z, o + h) - f(z, o - h)) / (2.0 * h);
            worst_err = worst_err.max(rel_err(&[t.grad_logit, t.grad_offset], &[nz, no]));
        }
    }
    println!("loss: max relative error {worst_err:.3e}");
    worst_err
}

/// Two blocks, four frequency bins, 15 frames.
pub fn fd_config() -> ModelConfig {
    ModelConfig {
        name: "fd".into(),
        input_freq: 4,
        ssn_groups: 2,
        dropout: 0.1,
        layers: vec![
            LayerSpec::conv(4, (3, 3), (1, 0), 1),
            LayerSpec::transition(4, 1, 1),
            LayerSpec::broadcast(4, 2, 1),
            LayerSpec::head((4, 1)),
        ],
    }
}

pub fn network_end_to_end() -> f64 {
    let cfg = fd_config();
    let net = Network::new(cfg.clone()).unwrap();
    let rf = net.receptive_field();
    let frames = 15;
    let out_frames = frames - rf + 1;
    let mut worst_err: f64 = 0.0;
    for seed in 0..5u64 {
        let mut r = rng(seed);
        let mut w = WeightStore::<f32>::build(&cfg, seed).unwrap().cast::<f64>();
        // Random shifts and scales so no unit sits exactly at a kink.
        let names: Vec<String> = w.names().map(String::from).collect();
        for n in &names {
            if n.contains("running") {
                continue;
            }
            let t = w.get_mut(n).unwrap();
            for v in t.data_mut() {
                *v += r.gen_range(-0.3..0.3);
            }
        }
        let n = 2;
        let x: Vec<f64> = (0..n * 4 * frames).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[n, 1, 4, frames], x).unwrap();
        let labels: Vec<u8> = (0..n * out_frames).map(|i| (i % 3 == 0) as u8).collect();
        let targets: Vec<Option<f64>> = (0..n * out_frames).map(|i| Some(i as f64 / 20.0)).collect();
        let dropout_seed = seed + 100;

        let loss_at = |w: &WeightStore<f64>| {
            let mut dr = ChaCha8Rng::seed_from_u64(dropout_seed);
            let (out, _) = net.forward(w, &x, Mode::Train(&mut dr)).unwrap();
            batch_loss(out.detection_logits.data(), out.offsets.data(), &labels, &targets, 4.0).mean
        };

        let mut dr = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (out, cache) = net.forward(&w, &x, Mode::Train(&mut dr)).unwrap();
        let loss = batch_loss(out.detection_logits.data(), out.offsets.data(), &labels, &targets, 4.0);
        let gd = Tensor::from_vec(out.detection_logits.dims(), loss.grad_logits.clone()).unwrap();
        let go = Tensor::from_vec(out.offsets.dims(), loss.grad_offsets.clone()).unwrap();
        let grads = net.backward(&w, &cache.unwrap(), &gd, &go).unwrap();

        let mut analytic = Vec::new();
        let mut num = Vec::new();
        for (name, _, role) in param_table(&cfg).unwrap() {
            if !role.trainable() {
                continue;
            }
            let g = grads.get(&name).unwrap().data().to_vec();
            for i in 0..g.len() {
                let orig = w.get(&name).unwrap().data()[i];
                let h = 1e-5;
                w.get_mut(&name).unwrap().data_mut()[i] = orig + h;
                let hi = loss_at(&w);
                w.get_mut(&name).unwrap().data_mut()[i] = orig - h;
                let lo = loss_at(&w);
                w.get_mut(&name).unwrap().data_mut()[i] = orig;
                analytic.push(g[i]);
                num.push((hi - lo) / (2.0 * h));
            }
        }
        worst_err = worst_err.max(rel_err(&analytic, &num));
    }
    println!("tiny network: max relative error {worst_err:.3e}");
    worst_err
}

/// Every per-op check, by name.
pub fn layer_ops() -> Vec<(&'static str, f64)> {
    vec![
        ("conv2d", conv2d()),
        ("swish", swish()),
        ("relu", relu()),
        ("freq_avgpool", avgpool()),
        ("time_trim", time_trim()),
        ("channel_dropout", dropout()),
        ("freq_broadcast_add", broadcast_add()),
        ("batchnorm", batchnorm()),
        ("subspectral_norm", subspectral_norm()),
    ]
}
