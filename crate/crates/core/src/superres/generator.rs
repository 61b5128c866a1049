use crate::error::{invalid, shape_err, Error, Result};
use crate::image_io::{denormalize, normalize, ImageBuffer};
use crate::scalar::Real;
use crate::tensor::{
    concat_channels, conv2d, conv2d_backward, leaky_relu, leaky_relu_backward, nearest_upsample,
    nearest_upsample_backward, pixel_unshuffle, resize_bilinear, resize_bilinear_backward, split_channels,
    Conv2DSpec, Tensor,
};

use super::{DenseBlockParams, GeneratorConfig, GeneratorParams, RrdbParams};

/// Space-to-depth factor applied before the trunk so that the fixed ×4 tail
/// yields the requested scale: 4 for ×1, 2 for ×2, 1 otherwise.
pub fn unshuffle_factor(out_scale: usize) -> usize {
    match out_scale {
        1 => 4,
        2 => 2,
        _ => 1,
    }
}

struct DenseCache<T> {
    inputs: Vec<Tensor<T>>,
    pres: Vec<Tensor<T>>,
}

fn dense_forward<T: Real>(
    x: &Tensor<T>,
    p: &DenseBlockParams<T>,
    beta: T,
    slope: T,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    let mut feats = vec![x.clone()];
    let mut inputs = Vec::with_capacity(p.convs.len());
    let mut pres = Vec::with_capacity(p.convs.len() - 1);
    let mut last = None;
    for (i, conv) in p.convs.iter().enumerate() {
        let input = concat_channels(&feats.iter().collect::<Vec<_>>())?;
        let pre = conv2d(&input, conv)?;
        inputs.push(input);
        if i + 1 < p.convs.len() {
            feats.push(leaky_relu(&pre, slope));
            pres.push(pre);
        } else {
            last = Some(pre);
        }
    }
    let out = x.add(&last.expect("five convs").scale(beta))?;
    Ok((out, DenseCache { inputs, pres }))
}

fn dense_backward<T: Real>(
    cache: &DenseCache<T>,
    p: &DenseBlockParams<T>,
    beta: T,
    slope: T,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, DenseBlockParams<T>)> {
    let n = p.convs.len();
    let features = p.features();
    let growth = p.convs[0].out_channels();
    let sizes: Vec<usize> = (0..n).map(|i| if i == 0 { features } else { growth }).collect();
    let mut grad_feats: Vec<Option<Tensor<T>>> = vec![None; n];
    grad_feats[0] = Some(grad_out.clone());
    let mut convs: Vec<Option<Conv2DSpec<T>>> = vec![None; n];

    for i in (0..n).rev() {
        let grad_pre = if i + 1 == n {
            grad_out.scale(beta)
        } else {
            let g = grad_feats[i + 1].take().expect("later convs read every feature");
            leaky_relu_backward(&cache.pres[i], &g, slope)?
        };
        let cg = conv2d_backward(&cache.inputs[i], &p.convs[i], &grad_pre, true)?;
        let parts = split_channels(&cg.input.expect("requested"), &sizes[..=i])?;
        for (slot, part) in grad_feats.iter_mut().zip(parts) {
            *slot = Some(match slot.take() {
                Some(acc) => acc.add(&part)?,
                None => part,
            });
        }
        convs[i] = Some(p.convs[i].with_params(cg.weight, cg.bias)?);
    }
    let grad_x = grad_feats[0].take().expect("input gradient");
    Ok((
        grad_x,
        DenseBlockParams {
            convs: convs.into_iter().map(Option::unwrap).collect(),
        },
    ))
}

/// One dense block: `x + β·conv5(...)`, each conv seeing all earlier outputs.
pub fn dense_block_forward<T: Real>(x: &Tensor<T>, p: &DenseBlockParams<T>, beta: T, slope: T) -> Result<Tensor<T>> {
    check_features(x, p.features())?;
    Ok(dense_forward(x, p, beta, slope)?.0)
}

fn check_features<T: Real>(x: &Tensor<T>, features: usize) -> Result<()> {
    let (c, _, _) = x.dims3()?;
    if c != features {
        return Err(shape_err!("block expects {features} input channels, got {c}"));
    }
    Ok(())
}

fn rrdb_cached<T: Real>(
    x: &Tensor<T>,
    p: &RrdbParams<T>,
    beta: T,
    slope: T,
) -> Result<(Tensor<T>, Vec<DenseCache<T>>)> {
    let mut y = x.clone();
    let mut caches = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let (next, cache) = dense_forward(&y, block, beta, slope)?;
        caches.push(cache);
        y = next;
    }
    // x + β·(y − x): all-zero blocks leave y == x, so the block is an exact identity
    let out = x.zip_map(&y, |a, b| a + beta * (b - a))?;
    Ok((out, caches))
}

fn rrdb_backward<T: Real>(
    caches: &[DenseCache<T>],
    p: &RrdbParams<T>,
    beta: T,
    slope: T,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, RrdbParams<T>)> {
    let mut g = grad_out.scale(beta);
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for (cache, block) in caches.iter().zip(&p.blocks).rev() {
        let (gx, gp) = dense_backward(cache, block, beta, slope, &g)?;
        g = gx;
        blocks.push(gp);
    }
    blocks.reverse();
    let grad_x = grad_out.scale(T::one() - beta).add(&g)?;
    Ok((grad_x, RrdbParams { blocks }))
}

/// Residual-in-residual dense block on an `F×H×W` feature map.
pub fn rrdb_forward<T: Real>(x: &Tensor<T>, p: &RrdbParams<T>, beta: T, slope: T) -> Result<Tensor<T>> {
    check_features(x, p.features())?;
    Ok(rrdb_cached(x, p, beta, slope)?.0)
}

pub(crate) struct GeneratorCache<T> {
    unshuffled: Tensor<T>,
    trunk: Vec<Vec<DenseCache<T>>>,
    trunk_out: Tensor<T>,
    up1_in: Tensor<T>,
    up1_pre: Tensor<T>,
    up2_in: Tensor<T>,
    up2_pre: Tensor<T>,
    hr_in: Tensor<T>,
    hr_pre: Tensor<T>,
    last_in: Tensor<T>,
    /// Spatial size after the ×4 tail, before any final resize.
    tail_hw: (usize, usize),
    pub(crate) output: Tensor<T>,
}

pub(crate) fn forward_cached<T: Real>(
    input: &Tensor<T>,
    config: &GeneratorConfig,
    params: &GeneratorParams<T>,
) -> Result<GeneratorCache<T>> {
    let (c, h, w) = input.dims3()?;
    if c != 3 {
        return Err(shape_err!("generator expects 3 input channels, got {c}"));
    }
    let r = unshuffle_factor(config.out_scale);
    if h % r != 0 || w % r != 0 {
        return Err(shape_err!(
            "input {h}×{w} is not divisible by the unshuffle factor {r} required for ×{}",
            config.out_scale
        ));
    }
    let beta = T::lit(config.residual_scale);
    let slope = T::lit(config.leaky_slope);

    let unshuffled = pixel_unshuffle(input, r)?;
    let feat = conv2d(&unshuffled, &params.conv_first)?;
    let mut x = feat.clone();
    let mut trunk = Vec::with_capacity(params.trunk.len());
    for rrdb in &params.trunk {
        let (next, cache) = rrdb_cached(&x, rrdb, beta, slope)?;
        trunk.push(cache);
        x = next;
    }
    let trunk_out = x;
    let fused = feat.add(&conv2d(&trunk_out, &params.conv_body)?)?;
    let up1_in = nearest_upsample(&fused, 2)?;
    let up1_pre = conv2d(&up1_in, &params.conv_up1)?;
    let up2_in = nearest_upsample(&leaky_relu(&up1_pre, slope), 2)?;
    let up2_pre = conv2d(&up2_in, &params.conv_up2)?;
    let hr_in = leaky_relu(&up2_pre, slope);
    let hr_pre = conv2d(&hr_in, &params.conv_hr)?;
    let last_in = leaky_relu(&hr_pre, slope);
    let tail = conv2d(&last_in, &params.conv_last)?;
    let (_, th, tw) = tail.dims3()?;
    let output = if config.out_scale == 3 {
        resize_bilinear(&tail, 3 * h, 3 * w)?
    } else {
        tail
    };
    Ok(GeneratorCache {
        unshuffled,
        trunk,
        trunk_out,
        up1_in,
        up1_pre,
        up2_in,
        up2_pre,
        hr_in,
        hr_pre,
        last_in,
        tail_hw: (th, tw),
        output,
    })
}

pub(crate) fn backward<T: Real>(
    cache: &GeneratorCache<T>,
    config: &GeneratorConfig,
    params: &GeneratorParams<T>,
    grad_out: &Tensor<T>,
) -> Result<GeneratorParams<T>> {
    let beta = T::lit(config.residual_scale);
    let slope = T::lit(config.leaky_slope);
    let g = if config.out_scale == 3 {
        resize_bilinear_backward(grad_out, cache.tail_hw.0, cache.tail_hw.1)?
    } else {
        grad_out.clone()
    };
    let pair = |spec: &Conv2DSpec<T>, w, b| spec.with_params(w, b);

    let last = conv2d_backward(&cache.last_in, &params.conv_last, &g, true)?;
    let g = leaky_relu_backward(&cache.hr_pre, &last.input.unwrap(), slope)?;
    let hr = conv2d_backward(&cache.hr_in, &params.conv_hr, &g, true)?;
    let g = leaky_relu_backward(&cache.up2_pre, &hr.input.unwrap(), slope)?;
    let up2 = conv2d_backward(&cache.up2_in, &params.conv_up2, &g, true)?;
    let g = nearest_upsample_backward(&up2.input.unwrap(), 2)?;
    let g = leaky_relu_backward(&cache.up1_pre, &g, slope)?;
    let up1 = conv2d_backward(&cache.up1_in, &params.conv_up1, &g, true)?;
    let grad_fused = nearest_upsample_backward(&up1.input.unwrap(), 2)?;

    let body = conv2d_backward(&cache.trunk_out, &params.conv_body, &grad_fused, true)?;
    let mut g = body.input.unwrap();
    let mut trunk = Vec::with_capacity(params.trunk.len());
    for (rc, rp) in cache.trunk.iter().zip(&params.trunk).rev() {
        let (gx, gp) = rrdb_backward(rc, rp, beta, slope, &g)?;
        g = gx;
        trunk.push(gp);
    }
    trunk.reverse();
    let grad_feat = grad_fused.add(&g)?;
    let first = conv2d_backward(&cache.unshuffled, &params.conv_first, &grad_feat, false)?;

    Ok(GeneratorParams {
        conv_first: pair(&params.conv_first, first.weight, first.bias)?,
        trunk,
        conv_body: pair(&params.conv_body, body.weight, body.bias)?,
        conv_up1: pair(&params.conv_up1, up1.weight, up1.bias)?,
        conv_up2: pair(&params.conv_up2, up2.weight, up2.bias)?,
        conv_hr: pair(&params.conv_hr, hr.weight, hr.bias)?,
        conv_last: pair(&params.conv_last, last.weight, last.bias)?,
    })
}

/// Upscales a `3×H×W` tensor by `config.out_scale`. The output is not clamped.
pub fn generator_forward<T: Real>(
    input: &Tensor<T>,
    config: &GeneratorConfig,
    params: &GeneratorParams<T>,
) -> Result<Tensor<T>> {
    config.validate()?;
    if !params.all_finite() {
        return Err(Error::NonFinite("generator weights".into()));
    }
    let out = forward_cached(input, config, params)?.output;
    if !out.all_finite() {
        return Err(Error::NonFinite("generator output".into()));
    }
    Ok(out)
}

/// Mean absolute error and its gradient with respect to `output` (sign(0) = 0).
pub fn l1_loss<T: Real>(output: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if output.shape() != target.shape() {
        return Err(shape_err!(
            "output {:?} and target {:?} differ in shape",
            output.shape(),
            target.shape()
        ));
    }
    let n = T::lit(output.len() as f64);
    let diff = output.sub(target)?;
    let loss = diff.data().iter().map(|d| d.abs()).sum::<T>() / n;
    let grad = diff.map(|d| {
        if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        }
    });
    Ok((loss, grad))
}

/// L1 loss of one pair and the gradient for every generator parameter.
pub fn generator_l1_grad<T: Real>(
    input: &Tensor<T>,
    target: &Tensor<T>,
    config: &GeneratorConfig,
    params: &GeneratorParams<T>,
) -> Result<(T, GeneratorParams<T>)> {
    let cache = forward_cached(input, config, params)?;
    let (loss, grad) = l1_loss(&cache.output, target)?;
    Ok((loss, backward(&cache, config, params, &grad)?))
}

/// Runs the generator on an 8-bit image. Grayscale input is replicated to RGB;
/// the result is clamped and rounded back to 8 bits.
pub fn enhance<T: Real>(
    image: &ImageBuffer,
    config: &GeneratorConfig,
    params: &GeneratorParams<T>,
) -> Result<ImageBuffer> {
    let r = unshuffle_factor(config.out_scale);
    if !image.width().is_multiple_of(r) || !image.height().is_multiple_of(r) {
        return Err(invalid!(
            "image {}×{} must have sides divisible by {r} for ×{} output",
            image.width(),
            image.height(),
            config.out_scale
        ));
    }
    let input = normalize::<T>(&image.to_rgb());
    denormalize(&generator_forward(&input, config, params)?)
}
