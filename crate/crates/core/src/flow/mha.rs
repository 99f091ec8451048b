//! Forward and backward passes of the attention estimator.

use super::params::{EstimatorParams, Layout, HEAD_OUTPUT, TOKEN_INPUT};
use super::time::{time_encode_units, TimeCode};
use crate::error::{Error, Result};

pub(crate) struct AttnCache {
    query_in: Vec<f64>,
    e: Vec<Vec<f64>>,
    q: Vec<f64>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Attention weights, `[head][token]`.
    p: Vec<Vec<f64>>,
    o: Vec<f64>,
    pub z: Vec<f64>,
}

fn attend(params: &EstimatorParams, layout: &Layout, query_in: Vec<f64>, e: Vec<Vec<f64>>) -> AttnCache {
    let d = params.dims.d;
    let hd = params.dims.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let p = &params.values;
    let mut q = vec![0.0; d];
    layout.query.apply(p, &query_in, &mut q);
    let mut k = vec![vec![0.0; d]; e.len()];
    let mut v = vec![vec![0.0; d]; e.len()];
    for (i, ei) in e.iter().enumerate() {
        layout.key.apply(p, ei, &mut k[i]);
        layout.value.apply(p, ei, &mut v[i]);
    }
    let mut weights = Vec::with_capacity(params.dims.n_heads);
    let mut o = vec![0.0; d];
    for h in 0..params.dims.n_heads {
        let s = h * hd..(h + 1) * hd;
        let scores: Vec<f64> = k
            .iter()
            .map(|ki| scale * q[s.clone()].iter().zip(&ki[s.clone()]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        let w: Vec<f64> = exps.iter().map(|x| x / total).collect();
        for (wi, vi) in w.iter().zip(&v) {
            for j in s.clone() {
                o[j] += wi * vi[j];
            }
        }
        weights.push(w);
    }
    let mut z = vec![0.0; d];
    layout.proj.apply(p, &o, &mut z);
    AttnCache { query_in, e, q, k, v, p: weights, o, z }
}

/// Accumulates attention parameter gradients for upstream `gz` and returns
/// the gradient with respect to each token embedding.
fn attend_backward(
    params: &EstimatorParams,
    layout: &Layout,
    c: &AttnCache,
    gz: &[f64],
    grad: &mut [f64],
) -> Vec<Vec<f64>> {
    let d = params.dims.d;
    let hd = params.dims.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let p = &params.values;
    let n = c.e.len();
    let mut go = vec![0.0; d];
    layout.proj.backward(p, &c.o, gz, grad, Some(&mut go));
    let mut gq = vec![0.0; d];
    let mut gk = vec![vec![0.0; d]; n];
    let mut gv = vec![vec![0.0; d]; n];
    for h in 0..params.dims.n_heads {
        let s = h * hd..(h + 1) * hd;
        let w = &c.p[h];
        let gp: Vec<f64> =
            c.v.iter().map(|vi| go[s.clone()].iter().zip(&vi[s.clone()]).map(|(a, b)| a * b).sum::<f64>()).collect();
        let mean: f64 = w.iter().zip(&gp).map(|(a, b)| a * b).sum();
        for i in 0..n {
            for j in s.clone() {
                gv[i][j] += w[i] * go[j];
            }
            let gs = w[i] * (gp[i] - mean) * scale;
            for j in s.clone() {
                gq[j] += gs * c.k[i][j];
                gk[i][j] += gs * c.q[j];
            }
        }
    }
    layout.query.backward(p, &c.query_in, &gq, grad, None);
    let mut ge = vec![vec![0.0; d]; n];
    for i in 0..n {
        layout.key.backward(p, &c.e[i], &gk[i], grad, Some(&mut ge[i]));
        layout.value.backward(p, &c.e[i], &gv[i], grad, Some(&mut ge[i]));
    }
    ge
}

fn attention_inputs(
    query: &TimeCode,
    tokens: &[(Vec<f64>, TimeCode)],
    params: &EstimatorParams,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    params.validate()?;
    let d = params.dims.d;
    if tokens.is_empty() {
        return Err(Error::invalid("attention needs at least one token"));
    }
    if query.dim() != d || tokens.iter().any(|(f, u)| f.len() != d || u.dim() != d) {
        return Err(Error::invalid(format!("attention inputs must all have width {d}")));
    }
    let e = tokens
        .iter()
        .map(
            |(f, u)| {
                if params.time_encoding {
                    f.iter().zip(&u.values).map(|(a, b)| a + b).collect()
                } else {
                    f.clone()
                }
            },
        )
        .collect();
    let q = if params.time_encoding { query.values.clone() } else { vec![0.0; d] };
    Ok((q, e))
}

/// Multi-head attention of a time-code query over token features, each
/// token's key and value built from its feature plus its own time code.
/// Returns the output projection of the concatenated heads.
pub fn mha_forward(query: &TimeCode, tokens: &[(Vec<f64>, TimeCode)], params: &EstimatorParams) -> Result<Vec<f64>> {
    let (q, e) = attention_inputs(query, tokens, params)?;
    Ok(attend(params, &params.dims.layout(), q, e).z)
}

/// `‖mha_forward(..)‖²` and its gradient over the full parameter vector.
/// Only the attention block's entries are nonzero.
pub fn mha_norm_gradient(
    query: &TimeCode,
    tokens: &[(Vec<f64>, TimeCode)],
    params: &EstimatorParams,
) -> Result<(f64, Vec<f64>)> {
    let (q, e) = attention_inputs(query, tokens, params)?;
    let layout = params.dims.layout();
    let c = attend(params, &layout, q, e);
    let value = c.z.iter().map(|x| x * x).sum();
    let gz: Vec<f64> = c.z.iter().map(|x| 2.0 * x).collect();
    let mut grad = vec![0.0; params.len()];
    attend_backward(params, &layout, &c, &gz, &mut grad);
    Ok((value, grad))
}

/// Relative, normalized history of one tracklet plus the query offset.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ModelInput {
    pub tokens: Vec<[f64; TOKEN_INPUT]>,
    /// Token times relative to the newest state, in encoding units.
    pub token_times: Vec<f64>,
    pub query_time: f64,
}

pub(crate) struct ModelCache {
    hidden: Vec<Vec<f64>>,
    attn: AttnCache,
    pub y: [f64; HEAD_OUTPUT],
}

pub(crate) fn model_forward(params: &EstimatorParams, layout: &Layout, input: &ModelInput) -> ModelCache {
    let d = params.dims.d;
    let p = &params.values;
    let mut hidden = Vec::with_capacity(input.tokens.len());
    let mut e = Vec::with_capacity(input.tokens.len());
    for (r, &tau) in input.tokens.iter().zip(&input.token_times) {
        let mut a = vec![0.0; params.dims.hidden];
        layout.mlp_in.apply(p, r, &mut a);
        a.iter_mut().for_each(|x| *x = x.tanh());
        let mut f = vec![0.0; d];
        layout.mlp_out.apply(p, &a, &mut f);
        if params.time_encoding {
            let u = time_encode_units(tau, d).expect("validated width");
            f.iter_mut().zip(&u.values).for_each(|(x, c)| *x += c);
        }
        hidden.push(a);
        e.push(f);
    }
    let q = if params.time_encoding {
        time_encode_units(input.query_time, d).expect("validated width").values
    } else {
        vec![0.0; d]
    };
    let attn = attend(params, layout, q, e);
    let mut y = [0.0; HEAD_OUTPUT];
    layout.head.apply(p, &attn.z, &mut y);
    ModelCache { hidden, attn, y }
}

pub(crate) fn model_backward(
    params: &EstimatorParams,
    layout: &Layout,
    input: &ModelInput,
    cache: &ModelCache,
    gy: &[f64; HEAD_OUTPUT],
    grad: &mut [f64],
) {
    let p = &params.values;
    let mut gz = vec![0.0; params.dims.d];
    layout.head.backward(p, &cache.attn.z, gy, grad, Some(&mut gz));
    let ge = attend_backward(params, layout, &cache.attn, &gz, grad);
    for ((r, h), gf) in input.tokens.iter().zip(&cache.hidden).zip(&ge) {
        let mut gh = vec![0.0; params.dims.hidden];
        layout.mlp_out.backward(p, h, gf, grad, Some(&mut gh));
        for (g, a) in gh.iter_mut().zip(h) {
            *g *= 1.0 - a * a;
        }
        layout.mlp_in.backward(p, r, &gh, grad, None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::params::EstimatorDims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> EstimatorParams {
        EstimatorParams::init(EstimatorDims { d: 8, n_heads: 2, hidden: 6 }, true, seed).unwrap()
    }

    fn tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Vec<f64>, TimeCode)> {
        (0..n)
            .map(|_| {
                let f = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                (f, time_encode_units(rng.random_range(-5.0..0.0), 8).unwrap())
            })
            .collect()
    }

    #[test]
    fn rejects_empty_tokens() {
        let p = params(0);
        assert!(mha_forward(&TimeCode::zeros(8), &[], &p).is_err());
    }

    #[test]
    fn single_token_is_projected_value() {
        let p = params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = tokens(&mut rng, 1);
        let q = time_encode_units(2.0, 8).unwrap();
        let z = mha_forward(&q, &t, &p).unwrap();
        let l = p.dims.layout();
        let e: Vec<f64> = t[0].0.iter().zip(&t[0].1.values).map(|(a, b)| a + b).collect();
        let mut v = vec![0.0; 8];
        l.value.apply(&p.values, &e, &mut v);
        let mut expect = vec![0.0; 8];
        l.proj.apply(&p.values, &v, &mut expect);
        for (a, b) in z.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_token_matches_single() {
        let p = params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = tokens(&mut rng, 1);
        let q = time_encode_units(1.0, 8).unwrap();
        let one = mha_forward(&q, &t, &p).unwrap();
        let two = mha_forward(&q, &[t[0].clone(), t[0].clone()], &p).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = params(3);
        let t = tokens(&mut rng, 3);
        let q = time_encode_units(1.5, 8).unwrap();
        let (_, g) = mha_norm_gradient(&q, &t, &p).unwrap();
        let eps = 1e-5;
        for i in p.dims.layout().attention_range().step_by(7) {
            let orig = p.values[i];
            p.values[i] = orig + eps;
            let up = mha_norm_gradient(&q, &t, &p).unwrap().0;
            p.values[i] = orig - eps;
            let down = mha_norm_gradient(&q, &t, &p).unwrap().0;
            p.values[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(1e-3), "param {i}: {fd} vs {}", g[i]);
        }
    }
}
