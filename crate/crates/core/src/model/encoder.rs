//! Post-norm Transformer encoder forward and backward passes.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::params::{Encoder, EncoderLayer, LayerNorm};
use super::ModelError;

const LN_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(dy: &Array2<f64>, cache: &NormCache, ln: &LayerNorm, grad: &mut LayerNorm) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let dxhat = dy * &ln.gamma;
    let d = dy.ncols() as f64;
    let sum = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
    let dot = (&dxhat * &cache.xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
    let inner = dxhat * d - &sum - &cache.xhat * &dot;
    inner * &(&cache.rstd / d).insert_axis(Axis(1))
}

/// Inverted-dropout mask, or `None` when inactive.
fn dropout_mask<R: Rng + ?Sized>(shape: (usize, usize), rate: f64, rng: Option<&mut R>) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    }))
}

fn apply(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

fn check(x: &Array2<f64>, layer: &str) -> Result<(), ModelError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(layer.to_string()))
    }
}

pub(crate) struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attention_dropout: Option<Array2<f64>>,
    attention_norm: NormCache,
    h1: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
    ffn_dropout: Option<Array2<f64>>,
    ffn_norm: NormCache,
}

pub(crate) struct EncoderCache {
    token_ids: Vec<u32>,
    segment_ids: Vec<u8>,
    embedding_norm: NormCache,
    embedding_dropout: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

/// Runs the encoder over the first `len` positions. Padding is never attended
/// to, so trimming it gives identical outputs for the active positions.
pub(crate) fn encode<R: Rng + ?Sized>(
    enc: &Encoder,
    num_heads: usize,
    dropout: f64,
    token_ids: &[u32],
    segment_ids: &[u8],
    mut rng: Option<&mut R>,
) -> Result<(Array2<f64>, EncoderCache), ModelError> {
    let len = token_ids.len();
    let d = enc.token_embeddings.ncols();
    if len > enc.position_embeddings.nrows() {
        return Err(ModelError::TooLong {
            length: len,
            max: enc.position_embeddings.nrows(),
        });
    }
    let mut x = Array2::zeros((len, d));
    for (t, (&id, &seg)) in token_ids.iter().zip(segment_ids).enumerate() {
        if id as usize >= enc.token_embeddings.nrows() {
            return Err(ModelError::UnknownToken(id));
        }
        let mut row = x.row_mut(t);
        row += &enc.token_embeddings.row(id as usize);
        row += &enc.position_embeddings.row(t);
        row += &enc.segment_embeddings.row(seg as usize);
    }
    let (h, embedding_norm) = layer_norm(&x, &enc.embedding_norm);
    let embedding_dropout = dropout_mask((len, d), dropout, rng.as_deref_mut());
    let mut h = apply(h, &embedding_dropout);
    check(&h, "embeddings")?;

    let mut layers = Vec::with_capacity(enc.layers.len());
    for (i, layer) in enc.layers.iter().enumerate() {
        let (out, cache) = layer_forward(layer, num_heads, dropout, h, rng.as_deref_mut());
        check(&out, &format!("layer {i}"))?;
        h = out;
        layers.push(cache);
    }
    Ok((
        h,
        EncoderCache {
            token_ids: token_ids.to_vec(),
            segment_ids: segment_ids.to_vec(),
            embedding_norm,
            embedding_dropout,
            layers,
        },
    ))
}

fn layer_forward<R: Rng + ?Sized>(
    layer: &EncoderLayer,
    num_heads: usize,
    dropout: f64,
    input: Array2<f64>,
    mut rng: Option<&mut R>,
) -> (Array2<f64>, LayerCache) {
    let (len, d) = input.dim();
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = layer.query.forward(&input);
    let k = layer.key.forward(&input);
    let v = layer.value.forward(&input);
    let mut context = Array2::zeros((len, d));
    let mut probs = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for mut row in scores.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let attention = layer.attention_output.forward(&context);
    let attention_dropout = dropout_mask((len, d), dropout, rng.as_deref_mut());
    let r1 = &input + &apply(attention, &attention_dropout);
    let (h1, attention_norm) = layer_norm(&r1, &layer.attention_norm);

    let f1 = layer.ffn_in.forward(&h1);
    let g = f1.mapv(gelu);
    let f2 = layer.ffn_out.forward(&g);
    let ffn_dropout = dropout_mask((len, d), dropout, rng.as_deref_mut());
    let r2 = &h1 + &apply(f2, &ffn_dropout);
    let (out, ffn_norm) = layer_norm(&r2, &layer.ffn_norm);
    (
        out,
        LayerCache {
            input,
            q,
            k,
            v,
            probs,
            context,
            attention_dropout,
            attention_norm,
            h1,
            f1,
            g,
            ffn_dropout,
            ffn_norm,
        },
    )
}

fn layer_backward(
    layer: &EncoderLayer,
    cache: &LayerCache,
    num_heads: usize,
    dout: &Array2<f64>,
    grad: &mut EncoderLayer,
) -> Array2<f64> {
    let (len, d) = cache.input.dim();
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(dout, &cache.ffn_norm, &layer.ffn_norm, &mut grad.ffn_norm);
    let df2 = apply(dr2.clone(), &cache.ffn_dropout);
    let dg = layer.ffn_out.backward(&cache.g, &df2, &mut grad.ffn_out);
    let df1 = dg * &cache.f1.mapv(gelu_grad);
    let dh1 = dr2 + layer.ffn_in.backward(&cache.h1, &df1, &mut grad.ffn_in);

    let dr1 = layer_norm_backward(&dh1, &cache.attention_norm, &layer.attention_norm, &mut grad.attention_norm);
    let da = apply(dr1.clone(), &cache.attention_dropout);
    let dcontext = layer.attention_output.backward(&cache.context, &da, &mut grad.attention_output);

    let mut dq = Array2::zeros((len, d));
    let mut dk = Array2::zeros((len, d));
    let mut dv = Array2::zeros((len, d));
    for h in 0..num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let p = &cache.probs[h];
        let dc = dcontext.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&dc));
        let dp = dc.dot(&cache.v.slice(cols).t());
        let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dz = (dp - &row_dot) * p * scale;
        dq.slice_mut(cols).assign(&dz.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&dz.t().dot(&cache.q.slice(cols)));
    }
    let mut dinput = dr1;
    dinput += &layer.query.backward(&cache.input, &dq, &mut grad.query);
    dinput += &layer.key.backward(&cache.input, &dk, &mut grad.key);
    dinput += &layer.value.backward(&cache.input, &dv, &mut grad.value);
    dinput
}

/// Accumulates parameter gradients for `dout` (gradient w.r.t. the encoder
/// output of the trimmed sequence) into `grad`.
pub(crate) fn encode_backward(
    enc: &Encoder,
    cache: &EncoderCache,
    num_heads: usize,
    dout: Array2<f64>,
    grad: &mut Encoder,
) {
    let mut dh = dout;
    for ((layer, layer_cache), layer_grad) in enc.layers.iter().zip(&cache.layers).zip(&mut grad.layers).rev() {
        dh = layer_backward(layer, layer_cache, num_heads, &dh, layer_grad);
    }
    let dh = apply(dh, &cache.embedding_dropout);
    let dx = layer_norm_backward(&dh, &cache.embedding_norm, &enc.embedding_norm, &mut grad.embedding_norm);
    for (t, row) in dx.rows().into_iter().enumerate() {
        let mut tok = grad.token_embeddings.row_mut(cache.token_ids[t] as usize);
        tok += &row;
        let mut pos = grad.position_embeddings.row_mut(t);
        pos += &row;
        let mut seg = grad.segment_embeddings.row_mut(cache.segment_ids[t] as usize);
        seg += &row;
    }
}
