//! Finite-difference checks of every differentiable tensor op.

use lungdet::nn::{Graph, ParamStore, Var};
use lungdet::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
    .unwrap()
}

/// Distinct values spaced 0.01 apart, so max-pool windows have no near ties.
pub fn spaced(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f32> = (0..n).map(|i| i as f32 * 0.01 - n as f32 * 0.005).collect();
    v.shuffle(rng);
    Tensor::new(shape, v).unwrap()
}

pub fn scaled(mut t: Tensor, k: f32) -> Tensor {
    t.data_mut().iter_mut().for_each(|v| *v *= k);
    t
}

pub fn leaf(store: &mut ParamStore, name: &str, t: Tensor) {
    store.insert(name, t.with_requires_grad(true)).unwrap();
}

pub fn vars(g: &mut Graph, store: &ParamStore, names: &[&str]) -> Vec<Var> {
    names
        .iter()
        .map(|n| g.param(store, store.id_of(n).unwrap()).unwrap())
        .collect()
}

/// Compares backward against central differences of `Σ wᵢ·yᵢ` (h = 1e-3,
/// relative error < 1e-2 with the denominator clamped at 1e-3), sampling
/// up to 25 coordinates of every parameter.
pub fn fd_check(
    store: ParamStore,
    seed: u64,
    build: impl Fn(&mut Graph, &ParamStore) -> Var,
) -> Result<usize, String> {
    fd_check_step(store, seed, 1e-3, 1e-3, build)
}

pub fn fd_check_step(
    mut store: ParamStore,
    seed: u64,
    h: f32,
    floor: f64,
    build: impl Fn(&mut Graph, &ParamStore) -> Var,
) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let out = build(&mut g, &store);
    let n = g.value(out).numel();
    let weights: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let loss = g.weighted_sum(out, weights.clone()).unwrap();
    store.zero_grad();
    g.backward(loss, &mut store).unwrap();

    let objective = |store: &ParamStore| -> f64 {
        let mut g = Graph::new();
        let out = build(&mut g, store);
        g.value(out)
            .data()
            .iter()
            .zip(&weights)
            .map(|(&y, &w)| y as f64 * w as f64)
            .sum()
    };
    let mut checked = 0;
    let names: Vec<String> = store.iter().map(|(_, p)| p.name.clone()).collect();
    for name in names {
        let id = store.id_of(&name).unwrap();
        let numel = store.get(id).tensor.numel();
        let analytic = store
            .get(id)
            .tensor
            .grad()
            .ok_or_else(|| format!("no gradient reached {name}"))?
            .to_vec();
        let mut idx: Vec<usize> = (0..numel).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(25) {
            let orig = store.get(id).tensor.data()[i];
            store.get_mut(id).tensor.data_mut()[i] = orig + h;
            let up = objective(&store);
            store.get_mut(id).tensor.data_mut()[i] = orig - h;
            let down = objective(&store);
            store.get_mut(id).tensor.data_mut()[i] = orig;
            let step = (orig + h) as f64 - (orig - h) as f64;
            let fd = (up - down) / step;
            let a = analytic[i] as f64;
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            if rel.is_nan() || rel >= 1e-2 {
                return Err(format!("{name}[{i}]: analytic {a} vs fd {fd} (rel {rel})"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn fd_conv() -> Result<usize, String> {
    let mut checked = 0;
    for (stride, pad, bias) in [(1, 1, true), (2, 1, false), (1, 0, true), (2, 2, true)] {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + stride as u64 + pad as u64);
        let mut s = ParamStore::new();
        leaf(&mut s, "x", scaled(random(&[2, 3, 7, 6], &mut rng), 0.25));
        leaf(&mut s, "w", scaled(random(&[4, 3, 3, 3], &mut rng), 0.25));
        if bias {
            leaf(&mut s, "b", scaled(random(&[4], &mut rng), 0.25));
        }
        checked += fd_check(s, 1, move |g, s| {
            let v = vars(g, s, &["x", "w"]);
            let b = bias.then(|| g.param(s, s.id_of("b").unwrap()).unwrap());
            g.conv2d(v[0], v[1], b, stride, pad).unwrap()
        })?;
    }
    Ok(checked)
}

pub fn fd_conv_pointwise() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = ParamStore::new();
    leaf(&mut s, "x", random(&[2, 5, 4, 4], &mut rng));
    leaf(&mut s, "w", random(&[3, 5, 1, 1], &mut rng));
    leaf(&mut s, "b", random(&[3], &mut rng));
    fd_check(s, 2, |g, s| {
        let v = vars(g, s, &["x", "w", "b"]);
        g.conv2d(v[0], v[1], Some(v[2]), 1, 0).unwrap()
    })
}

pub fn fd_batch_norm() -> Result<usize, String> {
    let mut checked = 0;
    for training in [true, false] {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut s = ParamStore::new();
        leaf(&mut s, "x", scaled(random(&[3, 2, 3, 4], &mut rng), 0.1));
        leaf(&mut s, "gamma", random(&[2], &mut rng));
        leaf(&mut s, "beta", random(&[2], &mut rng));
        checked += fd_check(s, 3, move |g, s| {
            let v = vars(g, s, &["x", "gamma", "beta"]);
            g.batch_norm2d(v[0], v[1], v[2], &[0.1, -0.2], &[0.8, 1.3], 1e-3, training)
                .unwrap()
                .0
        })?;
    }
    Ok(checked)
}

pub fn fd_silu() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut s = ParamStore::new();
    leaf(&mut s, "x", scaled(random(&[40], &mut rng), 6.0));
    fd_check(s, 4, |g, s| {
        let x = vars(g, s, &["x"])[0];
        g.silu(x).unwrap()
    })
}

pub fn fd_maxpool() -> Result<usize, String> {
    let mut checked = 0;
    for (k, stride, pad) in [(3, 1, 1), (2, 2, 0), (5, 1, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut s = ParamStore::new();
        leaf(&mut s, "x", spaced(&[2, 2, 6, 6], &mut rng));
        checked += fd_check(s, 5, move |g, s| {
            let x = vars(g, s, &["x"])[0];
            g.maxpool2d(x, k, stride, pad).unwrap()
        })?;
    }
    Ok(checked)
}

pub fn fd_upsample_concat_add() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut s = ParamStore::new();
    leaf(&mut s, "a", random(&[2, 2, 3, 3], &mut rng));
    leaf(&mut s, "b", random(&[2, 3, 6, 6], &mut rng));
    leaf(&mut s, "c", random(&[2, 5, 6, 6], &mut rng));
    fd_check(s, 6, |g, s| {
        let v = vars(g, s, &["a", "b", "c"]);
        let u = g.upsample_nearest2x(v[0]).unwrap();
        let cat = g.concat_channels(&[u, v[1]]).unwrap();
        g.add(cat, v[2]).unwrap()
    })
}

pub fn fd_weighted_sum() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut s = ParamStore::new();
    leaf(&mut s, "x", random(&[3, 4], &mut rng));
    let w: Vec<f32> = (0..12).map(|i| i as f32 * 0.25 - 1.0).collect();
    fd_check(s, 8, move |g, s| {
        let x = vars(g, s, &["x"])[0];
        g.weighted_sum(x, w.clone()).unwrap()
    })
}

pub type OpCheck = fn() -> Result<usize, String>;

/// One entry per differentiable op, each returning how many coordinates
/// were compared.
pub fn op_gradient_checks() -> Vec<(&'static str, OpCheck)> {
    vec![
        ("conv2d", fd_conv),
        ("conv2d 1x1", fd_conv_pointwise),
        ("batch_norm2d", fd_batch_norm),
        ("silu", fd_silu),
        ("maxpool2d", fd_maxpool),
        ("upsample/concat/add", fd_upsample_concat_add),
        ("weighted_sum", fd_weighted_sum),
    ]
}
