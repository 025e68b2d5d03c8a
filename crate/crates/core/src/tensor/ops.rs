//! Forward and backward kernels for the graph primitives.

use super::graph::Op;
use super::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

fn mismatch(op: &'static str, inputs: &[&Tensor], reason: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
        reason: reason.into(),
    }
}

fn arity(op: &'static str, inputs: &[&Tensor], expected: &'static str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(TensorError::Arity {
            op,
            expected,
            got: inputs.len(),
        })
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).expect("kernel produced a consistent shape")
}

pub(crate) fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul => "matmul",
        Op::Conv2d { .. } => "conv2d",
        Op::Relu => "relu",
        Op::Silu => "silu",
        Op::Exp => "exp",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Concat { .. } => "concat",
        Op::GlobalAvgPool => "global_avg_pool",
        Op::Softmax => "softmax",
        Op::Scale(_) => "scale",
        Op::Mse => "mse",
        Op::L2Norm => "l2norm",
        Op::Sum => "sum",
        Op::Reshape(_) => "reshape",
        Op::ResizeBilinear { .. } => "resize_bilinear",
    }
}

pub(crate) fn forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    let name = op_name(op);
    match op {
        Op::Leaf => Err(mismatch(name, inputs, "leaves are not computed")),
        Op::Matmul => {
            arity(name, inputs, "2", inputs.len() == 2)?;
            matmul(inputs[0], inputs[1])
        }
        Op::Conv2d { stride, padding } => {
            arity(name, inputs, "2 or 3", (2..=3).contains(&inputs.len()))?;
            conv2d(inputs, *stride, *padding)
        }
        Op::Relu | Op::Silu | Op::Exp => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let f: fn(f64) -> f64 = match op {
                Op::Relu => |x| x.max(0.0),
                Op::Silu => |x| x * sigmoid(x),
                _ => f64::exp,
            };
            let x = inputs[0];
            Ok(tensor(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()))
        }
        Op::Add | Op::Sub | Op::Mul => {
            arity(name, inputs, "2", inputs.len() == 2)?;
            binary(op, inputs[0], inputs[1])
        }
        Op::Concat { axis } => {
            arity(name, inputs, "at least 1", !inputs.is_empty())?;
            concat(inputs, *axis)
        }
        Op::GlobalAvgPool => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let x = inputs[0];
            if x.shape().len() != 3 {
                return Err(mismatch(name, inputs, "expected [C, H, W]"));
            }
            let (c, hw) = (x.shape()[0], x.shape()[1] * x.shape()[2]);
            let data = x
                .data()
                .chunks(hw)
                .map(|ch| ch.iter().sum::<f64>() / hw as f64)
                .collect();
            Ok(tensor(vec![c], data))
        }
        Op::Softmax => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let x = inputs[0];
            let n = *x.shape().last().unwrap();
            let mut out = Vec::with_capacity(x.numel());
            for row in x.data().chunks(n) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                out.extend(e.into_iter().map(|v| v / s));
            }
            Ok(tensor(x.shape().to_vec(), out))
        }
        Op::Scale(c) => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let x = inputs[0];
            Ok(tensor(x.shape().to_vec(), x.data().iter().map(|v| v * c).collect()))
        }
        Op::Mse => {
            arity(name, inputs, "2", inputs.len() == 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape() != b.shape() {
                return Err(mismatch(name, inputs, "operands must have identical shapes"));
            }
            let s: f64 = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Ok(Tensor::scalar(s / a.numel() as f64))
        }
        Op::L2Norm => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            Ok(Tensor::scalar(
                inputs[0].data().iter().map(|v| v * v).sum::<f64>().sqrt(),
            ))
        }
        Op::Sum => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            Ok(Tensor::scalar(inputs[0].data().iter().sum()))
        }
        Op::Reshape(shape) => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let x = inputs[0];
            Tensor::new(shape.clone(), x.data().to_vec())
                .map_err(|_| mismatch(name, inputs, format!("cannot reshape to {shape:?}")))
        }
        Op::ResizeBilinear { height, width } => {
            arity(name, inputs, "1", inputs.len() == 1)?;
            let x = inputs[0];
            if x.shape().len() != 3 || *height == 0 || *width == 0 {
                return Err(mismatch(name, inputs, "expected [C, H, W] and a non-empty target"));
            }
            Ok(resize_forward(x, *height, *width))
        }
    }
}

/// Gradients of the loss with respect to each input; `None` where not requested.
pub(crate) fn backward(
    op: &Op,
    inputs: &[&Tensor],
    output: &Tensor,
    grad: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let g = grad.data();
    let mut out: Vec<Option<Tensor>> = vec![None; inputs.len()];
    match op {
        Op::Leaf => {}
        Op::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            if needs[0] {
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * b.data()[p * n + j];
                        }
                        da[i * k + p] = acc;
                    }
                }
                out[0] = Some(tensor(vec![m, k], da));
            }
            if needs[1] {
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let av = a.data()[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let row = &mut db[p * n..(p + 1) * n];
                        for (d, gv) in row.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *d += av * gv;
                        }
                    }
                }
                out[1] = Some(tensor(vec![k, n], db));
            }
        }
        Op::Conv2d { stride, padding } => {
            let grads = conv2d_backward(inputs, grad, *stride, *padding, needs);
            out = grads;
        }
        Op::Relu => {
            let x = inputs[0];
            let d = x
                .data()
                .iter()
                .zip(g)
                .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                .collect();
            out[0] = Some(tensor(x.shape().to_vec(), d));
        }
        Op::Silu => {
            let x = inputs[0];
            let d = x
                .data()
                .iter()
                .zip(g)
                .map(|(&xv, &gv)| {
                    let s = sigmoid(xv);
                    gv * s * (1.0 + xv * (1.0 - s))
                })
                .collect();
            out[0] = Some(tensor(x.shape().to_vec(), d));
        }
        Op::Exp => {
            let d = output.data().iter().zip(g).map(|(y, gv)| y * gv).collect();
            out[0] = Some(tensor(output.shape().to_vec(), d));
        }
        Op::Add | Op::Sub | Op::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let shape = output.shape();
            let ia = broadcast_index(a.shape(), shape);
            let ib = broadcast_index(b.shape(), shape);
            if needs[0] {
                let mut da = vec![0.0; a.numel()];
                for (o, gv) in g.iter().enumerate() {
                    da[ia[o]] += match op {
                        Op::Mul => gv * b.data()[ib[o]],
                        _ => *gv,
                    };
                }
                out[0] = Some(tensor(a.shape().to_vec(), da));
            }
            if needs[1] {
                let mut db = vec![0.0; b.numel()];
                for (o, gv) in g.iter().enumerate() {
                    db[ib[o]] += match op {
                        Op::Mul => gv * a.data()[ia[o]],
                        Op::Sub => -gv,
                        _ => *gv,
                    };
                }
                out[1] = Some(tensor(b.shape().to_vec(), db));
            }
        }
        Op::Concat { axis } => {
            let outer: usize = output.shape()[..*axis].iter().product();
            let inner: usize = output.shape()[axis + 1..].iter().product();
            let total = output.shape()[*axis] * inner;
            let mut offset = 0;
            for (i, x) in inputs.iter().enumerate() {
                let w = x.shape()[*axis] * inner;
                if needs[i] {
                    let mut d = Vec::with_capacity(x.numel());
                    for o in 0..outer {
                        d.extend_from_slice(&g[o * total + offset..o * total + offset + w]);
                    }
                    out[i] = Some(tensor(x.shape().to_vec(), d));
                }
                offset += w;
            }
        }
        Op::GlobalAvgPool => {
            let x = inputs[0];
            let hw = x.shape()[1] * x.shape()[2];
            let mut d = Vec::with_capacity(x.numel());
            for gv in g {
                d.extend(std::iter::repeat_n(gv / hw as f64, hw));
            }
            out[0] = Some(tensor(x.shape().to_vec(), d));
        }
        Op::Softmax => {
            let n = *output.shape().last().unwrap();
            let mut d = Vec::with_capacity(output.numel());
            for (y, gr) in output.data().chunks(n).zip(g.chunks(n)) {
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                d.extend(y.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
            }
            out[0] = Some(tensor(output.shape().to_vec(), d));
        }
        Op::Scale(c) => {
            out[0] = Some(tensor(grad.shape().to_vec(), g.iter().map(|v| v * c).collect()));
        }
        Op::Mse => {
            let (a, b) = (inputs[0], inputs[1]);
            let k = 2.0 * g[0] / a.numel() as f64;
            let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| k * (x - y)).collect();
            if needs[1] {
                out[1] = Some(tensor(b.shape().to_vec(), diff.iter().map(|v| -v).collect()));
            }
            if needs[0] {
                out[0] = Some(tensor(a.shape().to_vec(), diff));
            }
        }
        Op::L2Norm => {
            let x = inputs[0];
            let norm = output.data()[0];
            let d = if norm > 0.0 {
                x.data().iter().map(|v| g[0] * v / norm).collect()
            } else {
                vec![0.0; x.numel()]
            };
            out[0] = Some(tensor(x.shape().to_vec(), d));
        }
        Op::Sum => {
            let x = inputs[0];
            out[0] = Some(Tensor::full(x.shape(), g[0]));
        }
        Op::Reshape(_) => {
            out[0] = Some(tensor(inputs[0].shape().to_vec(), g.to_vec()));
        }
        Op::ResizeBilinear { height, width } => {
            out[0] = Some(resize_backward(inputs[0], grad, *height, *width));
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(mismatch("matmul", &[a, b], "expected [m, k] x [k, n]"));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data()[i * k + p];
            for (cv, bv) in crow.iter_mut().zip(&b.data()[p * n..(p + 1) * n]) {
                *cv += av * bv;
            }
        }
    }
    Ok(tensor(vec![m, n], c))
}

/// Right-aligned broadcast of two shapes; dimensions must agree or be 1.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat index of `out_shape`, the flat index into a tensor of `in_shape`
/// broadcast to it.
fn broadcast_index(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let total: usize = out_shape.iter().product();
    if in_shape == out_shape {
        return (0..total).collect();
    }
    let n = out_shape.len();
    let offset = n - in_shape.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..in_shape.len()).rev() {
        strides[i + offset] = if in_shape[i] == 1 { 0 } else { s };
        s *= in_shape[i];
    }
    let mut idx = vec![0usize; n];
    let mut map = Vec::with_capacity(total);
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for d in (0..n).rev() {
            idx[d] += 1;
            flat += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            flat -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

fn binary(op: &Op, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let f: fn(f64, f64) -> f64 = match op {
        Op::Add => |x, y| x + y,
        Op::Sub => |x, y| x - y,
        _ => |x, y| x * y,
    };
    if a.shape() == b.shape() {
        let d = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        return Ok(tensor(a.shape().to_vec(), d));
    }
    let shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| mismatch(op_name(op), &[a, b], "shapes are not broadcast-compatible"))?;
    let ia = broadcast_index(a.shape(), &shape);
    let ib = broadcast_index(b.shape(), &shape);
    let d = ia
        .iter()
        .zip(&ib)
        .map(|(&i, &j)| f(a.data()[i], b.data()[j]))
        .collect();
    Ok(tensor(shape, d))
}

fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs[0].shape();
    if axis >= first.len() {
        return Err(mismatch("concat", inputs, format!("axis {axis} out of range")));
    }
    for t in inputs {
        let s = t.shape();
        let compatible = s.len() == first.len()
            && s.iter()
                .zip(first)
                .enumerate()
                .all(|(d, (x, y))| d == axis || x == y);
        if !compatible {
            return Err(mismatch("concat", inputs, "non-concatenated dimensions differ"));
        }
    }
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let along: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut data = Vec::with_capacity(outer * along * inner);
    for o in 0..outer {
        for t in inputs {
            let w = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.to_vec();
    shape[axis] = along;
    Ok(tensor(shape, data))
}

/// Output spatial size of a convolution: floor((n + 2p - k) / s) + 1.
pub fn conv_output_size(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || n + 2 * padding < kernel {
        return None;
    }
    Some((n + 2 * padding - kernel) / stride + 1)
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

fn conv_geom(inputs: &[&Tensor], stride: usize, padding: usize) -> Result<ConvGeom> {
    let (x, k) = (inputs[0], inputs[1]);
    let (xs, ks) = (x.shape(), k.shape());
    if xs.len() != 3 || ks.len() != 4 || xs[0] != ks[1] {
        return Err(mismatch(
            "conv2d",
            inputs,
            "expected input [C, H, W] and weight [O, C, kh, kw]",
        ));
    }
    if let Some(b) = inputs.get(2) {
        if b.shape() != [ks[0]] {
            return Err(mismatch("conv2d", inputs, "bias must be [O]"));
        }
    }
    let ho = conv_output_size(xs[1], ks[2], stride, padding);
    let wo = conv_output_size(xs[2], ks[3], stride, padding);
    match (ho, wo) {
        (Some(ho), Some(wo)) => Ok(ConvGeom {
            c: xs[0],
            h: xs[1],
            w: xs[2],
            o: ks[0],
            kh: ks[2],
            kw: ks[3],
            ho,
            wo,
        }),
        _ => Err(mismatch(
            "conv2d",
            inputs,
            format!("kernel does not fit (stride {stride}, padding {padding})"),
        )),
    }
}

fn conv2d(inputs: &[&Tensor], stride: usize, padding: usize) -> Result<Tensor> {
    let gm = conv_geom(inputs, stride, padding)?;
    let (x, k) = (inputs[0].data(), inputs[1].data());
    let plane = gm.ho * gm.wo;
    let mut out = vec![0.0; gm.o * plane];
    for o in 0..gm.o {
        let dst = &mut out[o * plane..(o + 1) * plane];
        if let Some(b) = inputs.get(2) {
            dst.iter_mut().for_each(|v| *v = b.data()[o]);
        }
        for c in 0..gm.c {
            let src = &x[c * gm.h * gm.w..(c + 1) * gm.h * gm.w];
            for ky in 0..gm.kh {
                for kx in 0..gm.kw {
                    let wv = k[((o * gm.c + c) * gm.kh + ky) * gm.kw + kx];
                    for oy in 0..gm.ho {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= gm.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * gm.w..(iy as usize + 1) * gm.w];
                        let drow = &mut dst[oy * gm.wo..(oy + 1) * gm.wo];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix >= 0 && ix < gm.w as isize {
                                *d += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(tensor(vec![gm.o, gm.ho, gm.wo], out))
}

fn conv2d_backward(
    inputs: &[&Tensor],
    grad: &Tensor,
    stride: usize,
    padding: usize,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let gm = conv_geom(inputs, stride, padding).expect("geometry validated in forward");
    let (x, k, g) = (inputs[0].data(), inputs[1].data(), grad.data());
    let plane = gm.ho * gm.wo;
    let mut dx = needs[0].then(|| vec![0.0; x.len()]);
    let mut dk = needs[1].then(|| vec![0.0; k.len()]);
    for o in 0..gm.o {
        let gp = &g[o * plane..(o + 1) * plane];
        for c in 0..gm.c {
            let base = c * gm.h * gm.w;
            for ky in 0..gm.kh {
                for kx in 0..gm.kw {
                    let widx = ((o * gm.c + c) * gm.kh + ky) * gm.kw + kx;
                    let wv = k[widx];
                    let mut acc = 0.0;
                    for oy in 0..gm.ho {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= gm.h as isize {
                            continue;
                        }
                        let rbase = base + iy as usize * gm.w;
                        for ox in 0..gm.wo {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= gm.w as isize {
                                continue;
                            }
                            let gv = gp[oy * gm.wo + ox];
                            let xi = rbase + ix as usize;
                            acc += gv * x[xi];
                            if let Some(dx) = dx.as_mut() {
                                dx[xi] += wv * gv;
                            }
                        }
                    }
                    if let Some(dk) = dk.as_mut() {
                        dk[widx] = acc;
                    }
                }
            }
        }
    }
    let mut out = vec![
        dx.map(|d| tensor(inputs[0].shape().to_vec(), d)),
        dk.map(|d| tensor(inputs[1].shape().to_vec(), d)),
    ];
    if inputs.len() == 3 {
        out.push(needs[2].then(|| {
            tensor(
                vec![gm.o],
                g.chunks(plane).map(|p| p.iter().sum()).collect(),
            )
        }));
    }
    out
}

/// Source taps for one output axis under half-pixel bilinear sampling.
fn resize_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn resize_forward(x: &Tensor, height: usize, width: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ty = resize_taps(h, height);
    let tx = resize_taps(w, width);
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let src = &x.data()[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, ly) in &ty {
            for &(x0, x1, lx) in &tx {
                let top = (1.0 - lx) * src[y0 * w + x0] + lx * src[y0 * w + x1];
                let bot = (1.0 - lx) * src[y1 * w + x0] + lx * src[y1 * w + x1];
                out.push((1.0 - ly) * top + ly * bot);
            }
        }
    }
    tensor(vec![c, height, width], out)
}

fn resize_backward(x: &Tensor, grad: &Tensor, height: usize, width: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ty = resize_taps(h, height);
    let tx = resize_taps(w, width);
    let mut d = vec![0.0; x.numel()];
    let mut gi = grad.data().iter();
    for ch in 0..c {
        let dst = &mut d[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, ly) in &ty {
            for &(x0, x1, lx) in &tx {
                let g = *gi.next().unwrap();
                dst[y0 * w + x0] += (1.0 - ly) * (1.0 - lx) * g;
                dst[y0 * w + x1] += (1.0 - ly) * lx * g;
                dst[y1 * w + x0] += ly * (1.0 - lx) * g;
                dst[y1 * w + x1] += ly * lx * g;
            }
        }
    }
    tensor(x.shape().to_vec(), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[4, 2, 2], &[4, 1, 1]), Some(vec![4, 2, 2]));
        assert_eq!(broadcast_shape(&[3], &[1]), Some(vec![3]));
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
    }

    #[test]
    fn broadcast_index_channel() {
        assert_eq!(broadcast_index(&[2, 1, 1], &[2, 1, 2]), vec![0, 0, 1, 1]);
        assert_eq!(broadcast_index(&[1, 2], &[2, 2]), vec![0, 1, 0, 1]);
    }

    #[test]
    fn conv_size_rule() {
        assert_eq!(conv_output_size(4, 3, 1, 0), Some(2));
        assert_eq!(conv_output_size(5, 3, 2, 1), Some(3));
        assert_eq!(conv_output_size(1, 3, 2, 1), Some(1));
        assert_eq!(conv_output_size(1, 3, 1, 0), None);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let x = tensor(vec![1, 2, 3], vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(resize_forward(&x, 2, 3), x);
    }

    #[test]
    fn resize_upsample_pytorch_reference() {
        // torch.nn.functional.interpolate([[0,1],[2,3]], size=4, mode="bilinear",
        // align_corners=False) first row: [0, 0.25, 0.75, 1]
        let x = tensor(vec![1, 2, 2], vec![0., 1., 2., 3.]);
        let y = resize_forward(&x, 4, 4);
        let row: Vec<f64> = y.data()[..4].to_vec();
        assert_eq!(row, vec![0.0, 0.25, 0.75, 1.0]);
        assert_eq!(y.data()[12..].to_vec(), vec![2.0, 2.25, 2.75, 3.0]);
    }
}
