//! Self-checks of every differentiable op and the optimizer pieces, shared by
//! the test suites and the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gradcheck::{grad_check, Input};
use crate::nn::ParamStore;
use crate::optim::{clip_global_norm, cosine_lr, AdamW};
use crate::tape::{Tape, Var, DROP};

pub type OpFn = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;
/// Op name, input shapes and the op.
pub type OpCase = (&'static str, Vec<(usize, usize)>, OpFn);

/// Magnitudes in `[0.5, 2)` with random sign.
pub fn signed(rng: &mut ChaCha8Rng) -> f64 {
    let x = rng.gen_range(0.5..2.0);
    if rng.gen_bool(0.5) {
        x
    } else {
        -x
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Input {
    Input::new((0..rows * cols).map(|_| signed(rng)).collect(), rows, cols)
}

/// Random weighted sum so every output coordinate carries an O(1) gradient.
pub fn weighted(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant((0..r * c).map(|_| signed(&mut rng)).collect(), r, c)?;
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

const SEG: [usize; 6] = [0, 2, 0, DROP, 2, 1];

/// One case per differentiable op.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        ("add", vec![(3, 4), (3, 4)], |t, v| t.add(v[0], v[1])),
        ("sub", vec![(3, 4), (3, 4)], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![(3, 4), (3, 4)], |t, v| t.mul(v[0], v[1])),
        ("add_row", vec![(3, 4), (1, 4)], |t, v| t.add_row(v[0], v[1])),
        ("mul_col", vec![(3, 4), (3, 1)], |t, v| t.mul_col(v[0], v[1])),
        ("scale", vec![(3, 4)], |t, v| t.scale(v[0], -1.5)),
        ("matmul", vec![(3, 5), (5, 2)], |t, v| t.matmul(v[0], v[1])),
        ("concat", vec![(3, 2), (3, 3), (3, 1)], |t, v| t.concat(v)),
        ("gather", vec![(4, 3)], |t, v| t.gather(v[0], &[2, 0, 2, 3])),
        ("scatter_add", vec![(4, 3), (3, 3)], |t, v| t.scatter_add(v[0], &[1, 1, 3], v[1])),
        ("segment_sum", vec![(6, 3)], |t, v| t.segment_sum(v[0], &SEG, 4)),
        ("segment_mean", vec![(6, 3)], |t, v| t.segment_mean(v[0], &SEG, 4)),
        ("log_scaled_sum", vec![(6, 3)], |t, v| t.log_scaled_sum(v[0], &SEG, 3)),
        ("segment_max", vec![(6, 3)], |t, v| t.segment_max(v[0], &SEG, 4)),
        ("leaky_relu", vec![(4, 4)], |t, v| t.leaky_relu(v[0], 0.01)),
        ("layer_norm", vec![(3, 5), (1, 5), (1, 5)], |t, v| t.layer_norm(v[0], v[1], v[2])),
        ("softmax", vec![(3, 4)], |t, v| t.softmax(v[0])),
        ("log", vec![(3, 4)], |t, v| {
            let s = t.mul(v[0], v[0])?;
            t.log(s)
        }),
        ("cross_entropy", vec![(4, 3)], |t, v| t.cross_entropy(v[0], &[0, 2, 1, 2])),
        ("gumbel_softmax_st_soft", vec![(5, 1)], |t, v| {
            t.gumbel_softmax_st(v[0], &[0, 1, 0, 1, 1], 2, &[0.3, -0.2, 1.1, 0.0, 0.4], 2.0 / 3.0, false)
        }),
        ("rows_dot", vec![(3, 4), (3, 4)], |t, v| t.rows_dot(v[0], v[1])),
        ("sum", vec![(3, 4)], |t, v| t.sum(v[0])),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Finite-difference check of every op on random inputs drawn from `seed`.
pub fn op_checks(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases()
        .into_iter()
        .map(|(name, shapes, op)| {
            let inputs: Vec<Input> = shapes.iter().map(|&(r, c)| random_input(&mut rng, r, c)).collect();
            let report = grad_check(
                |t, v| {
                    let o = op(t, v)?;
                    weighted(t, o, seed)
                },
                &inputs,
                1e-3,
            )?;
            Ok(OpCheck {
                name,
                max_rel_error: report.max_rel_error,
                checked: report.checked,
            })
        })
        .collect()
}

pub fn standard_gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Number of hard straight-through draws (out of `draws`) whose forward value
/// is not exactly one-hot.
pub fn non_one_hot_draws(seed: u64, draws: usize) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..draws {
        let m = rng.gen_range(1..8);
        let mut t = Tape::new();
        let z = t.leaf((0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(), m, 1)?;
        let noise: Vec<f64> = (0..m).map(|_| standard_gumbel(&mut rng)).collect();
        let y = t.gumbel_softmax_st(z, &vec![0; m], 1, &noise, 2.0 / 3.0, true)?;
        let v = t.value(y);
        let ones = v.iter().filter(|&&x| x == 1.0).count();
        let zeros = v.iter().filter(|&&x| x == 0.0).count();
        bad += usize::from(ones != 1 || zeros != m - 1);
    }
    Ok(bad)
}

/// Largest absolute deviation of clipping, the cosine schedule and AdamW
/// from their closed forms on fixed examples.
pub fn closed_form_deviation() -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut dev = |a: f64, b: f64| worst = worst.max((a - b).abs());

    let mut g = vec![vec![2.4, 0.0], vec![3.2]];
    dev(clip_global_norm(&mut g, 1.0), 4.0);
    dev(g[0][0], 0.6);
    dev(g[1][0], 0.8);
    let mut g = vec![vec![0.3], vec![0.4]];
    dev(clip_global_norm(&mut g, 1.0), 0.5);
    dev(g[0][0], 0.3);

    let (hi, lo, total) = (1e-4, 1e-11, 100);
    for step in [0, 17, 50, 83, 100] {
        let want = lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos());
        dev(cosine_lr(step, total, hi, lo), want);
    }

    let grads = [0.5, -1.2, 2.0, 0.1];
    let (lr, wd, b1, b2, eps) = (0.01, 0.1, 0.9f64, 0.999f64, 1e-8);
    let mut store = ParamStore::new();
    store.add("x", 1, 1, vec![0.7]);
    let mut opt = AdamW::new(&store, lr, wd);
    let (mut x, mut m, mut v) = (0.7, 0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        opt.step(&mut store, &[vec![g]])?;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let k = (t + 1) as i32;
        x -= lr * wd * x;
        x -= lr * (m / (1.0 - b1.powi(k))) / ((v / (1.0 - b2.powi(k))).sqrt() + eps);
        dev(store.iter().next().map_or(f64::NAN, |p| p.values[0]), x);
    }
    Ok(worst)
}
