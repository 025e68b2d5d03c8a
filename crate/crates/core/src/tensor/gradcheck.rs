//! Central-difference checks of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};

pub type Build = dyn Fn(&mut Graph, &[NodeId]) -> NodeId;
pub type Generate = dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub cases: usize,
    /// Scalar partial derivatives compared.
    pub values: usize,
    pub max_rel_error: f64,
    pub worst: Option<String>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    fn record(&mut self, rel: f64, what: impl FnOnce() -> String) {
        self.values += 1;
        if rel > self.max_rel_error || rel.is_nan() {
            self.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            self.worst = Some(what());
        }
    }
}

/// Scalar probe `Σ r ⊙ f(inputs)` with fixed random `r`.
fn probe(g: &mut Graph, build: &Build, inputs: &[NodeId], r: &Tensor) -> NodeId {
    let y = build(g, inputs);
    let shape = g.value(y).shape().to_vec();
    let r = g.constant(r.reshaped(&shape).expect("probe matches output size"));
    let p = g.mul(y, r).expect("same shape");
    g.sum(p).expect("sum")
}

fn eval(build: &Build, xs: &[Tensor], r: &Tensor) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
    let l = probe(&mut g, build, &ids, r);
    g.value(l).item().expect("scalar probe")
}

/// Compares `backward` against central differences on `cases` seeded inputs.
pub fn check_primitive(name: &str, build: &Build, gen: &Generate, cases: usize, h: f64) -> GradCheck {
    let mut out = GradCheck {
        name: name.to_string(),
        cases,
        values: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for case in 0..cases as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case * 7919 + name.len() as u64);
        let xs = gen(&mut rng);
        let n_out = {
            let mut g = Graph::new();
            let ids: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
            let y = build(&mut g, &ids);
            g.value(y).numel()
        };
        let r = Tensor::randn(&[n_out], 1.0, &mut rng);
        let mut g = Graph::new();
        let ids: Vec<_> = xs.iter().map(|x| g.leaf(x.clone().with_grad())).collect();
        let l = probe(&mut g, build, &ids, &r);
        let grads = g.backward(l).expect("scalar probe");
        for (k, id) in ids.iter().enumerate() {
            let analytic = grads.get(*id).expect("leaf gradient");
            for i in 0..xs[k].numel() {
                let mut plus = xs.to_vec();
                plus[k].data_mut()[i] += h;
                let mut minus = xs.to_vec();
                minus[k].data_mut()[i] -= h;
                let numeric = (eval(build, &plus, &r) - eval(build, &minus, &r)) / (2.0 * h);
                let a = analytic.data()[i];
                out.record(relative_error(a, numeric), || {
                    format!("case {case} input {k}[{i}]: analytic {a} numeric {numeric}")
                });
            }
        }
    }
    out
}

pub struct Primitive {
    pub name: String,
    pub build: Box<Build>,
    pub gen: Box<Generate>,
}

fn prim(
    name: &str,
    build: impl Fn(&mut Graph, &[NodeId]) -> NodeId + 'static,
    gen: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
) -> Primitive {
    Primitive {
        name: name.to_string(),
        build: Box::new(build),
        gen: Box::new(gen),
    }
}

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Entries bounded away from zero, for primitives with a kink there.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = randn(shape, rng);
    for v in t.data_mut() {
        let s = if *v < 0.0 { -1.0 } else { 1.0 };
        *v = s * (v.abs() + 0.05);
    }
    t
}

fn broadcast_pair(r: &mut ChaCha8Rng) -> Vec<Tensor> {
    match r.gen_range(0..3) {
        0 => vec![randn(&[3, 2, 2], r), randn(&[3, 2, 2], r)],
        1 => vec![randn(&[3, 2, 2], r), randn(&[3, 1, 1], r)],
        _ => vec![randn(&[4], r), randn(&[1], r)],
    }
}

/// Every differentiable primitive with an input generator.
pub fn primitive_suite() -> Vec<Primitive> {
    let mut v = vec![prim(
        "matmul",
        |g, x| g.matmul(x[0], x[1]).unwrap(),
        |r| {
            let (m, k, n) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..4));
            vec![randn(&[m, k], r), randn(&[k, n], r)]
        },
    )];
    for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
        v.push(prim(
            &format!("conv2d s{stride} p{pad}"),
            move |g, x| g.conv2d(x[0], x[1], Some(x[2]), stride, pad).unwrap(),
            |r| {
                let (c, o, h) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(3..6));
                let k = if r.gen_bool(0.5) { 3 } else { 1 };
                vec![randn(&[c, h, h], r), randn(&[o, c, k, k], r), randn(&[o], r)]
            },
        ));
    }
    v.extend([
        prim(
            "conv2d nobias",
            |g, x| g.conv2d(x[0], x[1], None, 2, 1).unwrap(),
            |r| vec![randn(&[2, 5, 4], r), randn(&[3, 2, 3, 3], r)],
        ),
        prim("relu", |g, x| g.relu(x[0]).unwrap(), |r| vec![away_from_zero(&[7], r)]),
        prim("silu", |g, x| g.silu(x[0]).unwrap(), |r| vec![randn(&[2, 3], r)]),
        prim("exp", |g, x| g.exp(x[0]).unwrap(), |r| vec![randn(&[5], r)]),
        prim("add", |g, x| g.add(x[0], x[1]).unwrap(), broadcast_pair),
        prim("sub", |g, x| g.sub(x[0], x[1]).unwrap(), broadcast_pair),
        prim("mul", |g, x| g.mul(x[0], x[1]).unwrap(), broadcast_pair),
        prim(
            "concat0",
            |g, x| g.concat(&[x[0], x[1]], 0).unwrap(),
            |r| vec![randn(&[2, 3], r), randn(&[1, 3], r)],
        ),
        prim(
            "concat1",
            |g, x| g.concat(&[x[0], x[1]], 1).unwrap(),
            |r| vec![randn(&[2, 3], r), randn(&[2, 1], r)],
        ),
        prim("gap", |g, x| g.global_avg_pool(x[0]).unwrap(), |r| vec![randn(&[3, 2, 4], r)]),
        prim("softmax", |g, x| g.softmax(x[0]).unwrap(), |r| vec![randn(&[2, 4], r)]),
        prim("scale", |g, x| g.scale(x[0], -1.7).unwrap(), |r| vec![randn(&[3], r)]),
        prim(
            "mse",
            |g, x| g.mse(x[0], x[1]).unwrap(),
            |r| vec![randn(&[2, 3], r), randn(&[2, 3], r)],
        ),
        prim("l2norm", |g, x| g.l2norm(x[0]).unwrap(), |r| vec![away_from_zero(&[4], r)]),
        prim("sum", |g, x| g.sum(x[0]).unwrap(), |r| vec![randn(&[2, 2, 2], r)]),
        prim("reshape", |g, x| g.reshape(x[0], &[3, 2]).unwrap(), |r| vec![randn(&[2, 3], r)]),
        prim(
            "resize down",
            |g, x| g.resize_bilinear(x[0], 3, 2).unwrap(),
            |r| vec![randn(&[2, 6, 5], r)],
        ),
        prim(
            "resize up",
            |g, x| g.resize_bilinear(x[0], 5, 7).unwrap(),
            |r| vec![randn(&[1, 3, 4], r)],
        ),
        prim(
            "affine",
            |g, x| g.affine(x[0], x[1], x[2]).unwrap(),
            |r| vec![randn(&[4], r), randn(&[4, 3], r), randn(&[3], r)],
        ),
        prim(
            "x*x+exp(x)",
            |g, x| {
                let a = g.mul(x[0], x[0]).unwrap();
                let b = g.exp(x[0]).unwrap();
                g.add(a, b).unwrap()
            },
            |r| vec![randn(&[5], r)],
        ),
    ]);
    v
}
