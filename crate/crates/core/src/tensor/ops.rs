use crate::error::{invalid, shape_err, Result};
use crate::scalar::Real;

use super::Tensor;

/// Moves each `r×r` spatial block into channel depth: `C×H×W -> (C·r²)×(H/r)×(W/r)`.
///
/// Output channel `c·r² + dy·r + dx` at `(y, x)` holds input channel `c` at
/// `(y·r + dy, x·r + dx)`.
pub fn pixel_unshuffle<T: Real>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    if r == 0 {
        return Err(invalid!("pixel_unshuffle factor must be ≥ 1"));
    }
    if h % r != 0 {
        return Err(shape_err!("pixel_unshuffle: height {h} is not divisible by {r}"));
    }
    if w % r != 0 {
        return Err(shape_err!("pixel_unshuffle: width {w} is not divisible by {r}"));
    }
    let (oh, ow) = (h / r, w / r);
    let src = input.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                for y in 0..oh {
                    let row = (ch * h + y * r + dy) * w;
                    out.extend((0..ow).map(|x| src[row + x * r + dx]));
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![c * r * r, oh, ow], out))
}

/// Inverse of [`pixel_unshuffle`]: `(C·r²)×H×W -> C×(H·r)×(W·r)`.
pub fn pixel_shuffle<T: Real>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (cr, h, w) = input.dims3()?;
    if r == 0 {
        return Err(invalid!("pixel_shuffle factor must be ≥ 1"));
    }
    if cr % (r * r) != 0 {
        return Err(shape_err!(
            "pixel_shuffle: {cr} channels are not divisible by {}",
            r * r
        ));
    }
    let c = cr / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = input.data();
    let mut out = vec![T::zero(); src.len()];
    for ch in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let plane = (ch * r * r + dy * r + dx) * h * w;
                for y in 0..h {
                    let dst_row = (ch * oh + y * r + dy) * ow;
                    for x in 0..w {
                        out[dst_row + x * r + dx] = src[plane + y * w + x];
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, oh, ow], out))
}

pub fn leaky_relu<T: Real>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Gradient through [`leaky_relu`] given its pre-activation input.
pub fn leaky_relu_backward<T: Real>(pre: &Tensor<T>, grad_out: &Tensor<T>, slope: T) -> Result<Tensor<T>> {
    pre.zip_map(grad_out, |x, g| if x > T::zero() { g } else { g * slope })
}

pub fn nearest_upsample<T: Real>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    if factor == 0 {
        return Err(invalid!("upsample factor must be ≥ 1"));
    }
    let (oh, ow) = (h * factor, w * factor);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            let row = (ch * h + y / factor) * w;
            out.extend((0..ow).map(|x| src[row + x / factor]));
        }
    }
    Ok(Tensor::from_parts(vec![c, oh, ow], out))
}

pub fn nearest_upsample_backward<T: Real>(grad_out: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, oh, ow) = grad_out.dims3()?;
    if factor == 0 || oh % factor != 0 || ow % factor != 0 {
        return Err(shape_err!(
            "upsample gradient {:?} is not a multiple of factor {factor}",
            grad_out.shape()
        ));
    }
    let (h, w) = (oh / factor, ow / factor);
    let g = grad_out.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            let dst = (ch * h + y / factor) * w;
            let src = (ch * oh + y) * ow;
            for x in 0..ow {
                out[dst + x / factor] += g[src + x];
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h, w], out))
}

/// Flat input index of the maximum chosen for every pooled output.
#[derive(Clone, Debug)]
pub struct MaxPoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties resolve to the first maximum in row-major window order.
pub fn max_pool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolIndices)> {
    let (c, h, w) = input.dims3()?;
    if h < 2 || w < 2 {
        return Err(shape_err!("max_pool2 needs at least 2×2 input, got {h}×{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let base = (ch * h + 2 * y) * w + 2 * x;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![c, oh, ow], out),
        MaxPoolIndices {
            input_shape: vec![c, h, w],
            argmax,
        },
    ))
}

pub fn max_pool2_backward<T: Real>(indices: &MaxPoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != indices.argmax.len() {
        return Err(shape_err!(
            "max_pool2 gradient has {} values, expected {}",
            grad_out.len(),
            indices.argmax.len()
        ));
    }
    let mut out = vec![T::zero(); indices.input_shape.iter().product()];
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        out[idx] += g;
    }
    Ok(Tensor::from_parts(indices.input_shape.clone(), out))
}

/// Mean over the spatial dims: `C×H×W -> C`.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    let n = T::from_usize(h * w).unwrap();
    let out = input
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().copied().sum::<T>() / n)
        .collect();
    Ok(Tensor::from_parts(vec![c], out))
}

pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    if grad_out.rank() != 1 {
        return Err(shape_err!("global_avg_pool gradient must be rank 1"));
    }
    let n = T::from_usize(height * width).unwrap();
    let c = grad_out.len();
    let mut out = Vec::with_capacity(c * height * width);
    for &g in grad_out.data() {
        out.extend(std::iter::repeat_n(g / n, height * width));
    }
    Tensor::new(&[c, height, width], out)
}

/// Numerically stable softmax over a rank-1 tensor of at least two logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 1 || logits.len() < 2 {
        return Err(shape_err!(
            "softmax needs a vector of ≥ 2 logits, got shape {:?}",
            logits.shape()
        ));
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(Tensor::from_parts(
        vec![exps.len()],
        exps.into_iter().map(|e| e / total).collect(),
    ))
}

pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| invalid!("concat_channels needs at least one tensor"))?;
    let (_, h, w) = first.dims3()?;
    let mut channels = 0;
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        let (c, ph, pw) = p.dims3()?;
        if (ph, pw) != (h, w) {
            return Err(shape_err!(
                "concat_channels: spatial dims {ph}×{pw} differ from {h}×{w}"
            ));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::from_parts(vec![channels, h, w], data))
}

pub fn split_channels<T: Real>(input: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (c, h, w) = input.dims3()?;
    if sizes.iter().sum::<usize>() != c || sizes.contains(&0) {
        return Err(shape_err!("cannot split {c} channels into {:?}", sizes));
    }
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&n| {
            let part = input.data()[start * h * w..(start + n) * h * w].to_vec();
            start += n;
            Tensor::from_parts(vec![n, h, w], part)
        })
        .collect())
}

/// Bilinear taps with half-pixel centres: for each output index, the two
/// source indices and the weight of the second one.
pub(crate) fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    if out_h == 0 || out_w == 0 {
        return Err(invalid!("resize target must be at least 1×1"));
    }
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let src = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            let (fy1, fy0) = (T::lit(fy), T::lit(1.0 - fy));
            for &(x0, x1, fx) in &tx {
                let (fx1, fx0) = (T::lit(fx), T::lit(1.0 - fx));
                let top = plane[y0 * w + x0] * fx0 + plane[y0 * w + x1] * fx1;
                let bottom = plane[y1 * w + x0] * fx0 + plane[y1 * w + x1] * fx1;
                out.push(top * fy0 + bottom * fy1);
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, out_h, out_w], out))
}

pub fn resize_bilinear_backward<T: Real>(grad_out: &Tensor<T>, in_h: usize, in_w: usize) -> Result<Tensor<T>> {
    let (c, out_h, out_w) = grad_out.dims3()?;
    let ty = axis_taps(in_h, out_h);
    let tx = axis_taps(in_w, out_w);
    let g = grad_out.data();
    let mut out = vec![T::zero(); c * in_h * in_w];
    for ch in 0..c {
        let plane = &mut out[ch * in_h * in_w..(ch + 1) * in_h * in_w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let (fy1, fy0) = (T::lit(fy), T::lit(1.0 - fy));
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (fx1, fx0) = (T::lit(fx), T::lit(1.0 - fx));
                let gv = g[(ch * out_h + oy) * out_w + ox];
                plane[y0 * in_w + x0] += gv * fy0 * fx0;
                plane[y0 * in_w + x1] += gv * fy0 * fx1;
                plane[y1 * in_w + x0] += gv * fy1 * fx0;
                plane[y1 * in_w + x1] += gv * fy1 * fx1;
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, in_h, in_w], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| i as f64)
    }

    #[test]
    fn unshuffle_hand_enumerated() {
        let out = pixel_unshuffle(&ramp(&[1, 4, 4]), 2).unwrap();
        assert_eq!(out.shape(), &[4, 2, 2]);
        assert_eq!(
            out.data(),
            &[0., 2., 8., 10., 1., 3., 9., 11., 4., 6., 12., 14., 5., 7., 13., 15.]
        );
        let back = pixel_shuffle(&out, 2).unwrap();
        assert_eq!(back, ramp(&[1, 4, 4]));
    }

    #[test]
    fn factor_one_is_identity() {
        let t = ramp(&[3, 2, 5]);
        assert_eq!(pixel_unshuffle(&t, 1).unwrap(), t);
        assert_eq!(pixel_shuffle(&t, 1).unwrap(), t);
    }

    #[test]
    fn unshuffle_names_offending_dim() {
        let err = pixel_unshuffle(&ramp(&[1, 4, 6]), 4).unwrap_err().to_string();
        assert!(err.contains("width 6"), "{err}");
        let err = pixel_unshuffle(&ramp(&[1, 6, 4]), 4).unwrap_err().to_string();
        assert!(err.contains("height 6"), "{err}");
        assert!(pixel_shuffle(&ramp(&[3, 2, 2]), 2).is_err());
    }

    #[test]
    fn unshuffle_permutes_values() {
        let t = Tensor::from_fn(&[2, 4, 6], |i| ((i * 31) % 17) as f64);
        let mut a = t.data().to_vec();
        let mut b = pixel_unshuffle(&t, 2).unwrap().into_data();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_basics() {
        let p = softmax(&Tensor::new(&[2], vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let big = softmax(&Tensor::<f64>::new(&[3], vec![1000.0, 1001.0, 999.0]).unwrap()).unwrap();
        assert!(big.all_finite());
        assert!((big.sum() - 1.0).abs() < 1e-12);
        assert!(softmax(&Tensor::new(&[1], vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn pooling_basics() {
        let t = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap().data(), &[2.5]);
        let (m, idx) = max_pool2(&t).unwrap();
        assert_eq!(m.shape(), &[1, 1, 1]);
        assert_eq!(m.data(), &[4.0]);
        let g = max_pool2_backward(&idx, &Tensor::new(&[1, 1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn upsample_and_its_adjoint() {
        let t = Tensor::new(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let up = nearest_upsample(&t, 2).unwrap();
        assert_eq!(up.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let g = nearest_upsample_backward(&Tensor::full(&[1, 2, 4], 1.0), 2).unwrap();
        assert_eq!(g.data(), &[4.0, 4.0]);
    }

    #[test]
    fn leaky_relu_slope() {
        let t = Tensor::new(&[3], vec![-2.0, 0.0, 3.0]).unwrap();
        assert_eq!(leaky_relu(&t, 0.2).data(), &[-0.4, 0.0, 3.0]);
        let g = leaky_relu_backward(&t, &Tensor::full(&[3], 1.0), 0.2).unwrap();
        assert_eq!(g.data(), &[0.2, 0.2, 1.0]);
    }

    #[test]
    fn concat_split_round_trip() {
        let a = ramp(&[2, 3, 3]);
        let b = ramp(&[1, 3, 3]).scale(-1.0);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[3, 3, 3]);
        let parts = split_channels(&cat, &[2, 1]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert!(concat_channels(&[&a, &ramp(&[1, 2, 3])]).is_err());
    }

    #[test]
    fn resize_identity_and_adjoint() {
        let t = Tensor::from_fn(&[2, 3, 5], |i| (i as f64).sin());
        assert_eq!(resize_bilinear(&t, 3, 5).unwrap(), t);

        // <resize(x), g> == <x, resize_backward(g)>
        let g = Tensor::from_fn(&[2, 7, 4], |i| (i as f64 * 0.37).cos());
        let fwd = resize_bilinear(&t, 7, 4).unwrap();
        let lhs: f64 = fwd.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let back = resize_bilinear_backward(&g, 3, 5).unwrap();
        let rhs: f64 = t.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
