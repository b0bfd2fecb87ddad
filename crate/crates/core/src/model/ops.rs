//! Dense kernels with hand-written backward passes. Matrices are row-major
//! with one token per row.

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};

pub const LN_EPS: f64 = 1e-5;

pub(crate) fn cst<F: NdFloat>(x: f64) -> F {
    F::from(x).expect("representable constant")
}

pub struct LayerNormCache<F> {
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
}

/// Row-wise layer norm with affine parameters `gamma`, `beta` (shape 1×d).
pub fn layer_norm<F: NdFloat>(
    x: &Array2<F>,
    gamma: &Array2<F>,
    beta: &Array2<F>,
) -> (Array2<F>, LayerNormCache<F>) {
    let d = cst::<F>(x.ncols() as f64);
    let eps = cst::<F>(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(F::zero(), |acc, &v| acc + v * v) / d;
        *s = F::one() / (var + eps).sqrt();
        let inv = *s;
        row.mapv_inplace(|v| v * inv);
    }
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward<F: NdFloat>(
    dy: &Array2<F>,
    cache: &LayerNormCache<F>,
    gamma: &Array2<F>,
) -> (Array2<F>, Array2<F>, Array2<F>) {
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gamma;
    let d = cst::<F>(dy.ncols() as f64);
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.iter().zip(xh.iter()).fold(F::zero(), |a, (&g, &x)| a + g * x) / d;
        for ((o, &gi), &xi) in out.iter_mut().zip(g.iter()).zip(xh.iter()) {
            *o = inv * (gi - mean_g - xi * mean_gx);
        }
    }
    (dx, dgamma, dbeta)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<F: NdFloat>(x: &Array2<F>) -> Array2<F> {
    let (c, k, half) = (cst::<F>(GELU_C), cst::<F>(GELU_K), cst::<F>(0.5));
    x.mapv(|v| half * v * (F::one() + (c * (v + k * v * v * v)).tanh()))
}

pub fn gelu_backward<F: NdFloat>(x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let (c, k, half, three) = (cst::<F>(GELU_C), cst::<F>(GELU_K), cst::<F>(0.5), cst::<F>(3.0));
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |g, &v| {
        let t = (c * (v + k * v * v * v)).tanh();
        let dt = (F::one() - t * t) * c * (F::one() + three * k * v * v);
        *g = *g * (half * (F::one() + t) + half * v * dt);
    });
    dx
}

/// `x · w + b` with `w` shaped in×out and `b` shaped 1×out.
pub fn affine<F: NdFloat>(x: &Array2<F>, w: &Array2<F>, b: &Array2<F>) -> Array2<F> {
    x.dot(w) + b
}

/// Numerically stable softmax of a slice in place; `valid[i] == false`
/// entries get probability zero. All-invalid input yields all zeros.
pub fn masked_softmax_in_place<F: NdFloat>(v: &mut [F], valid: impl Fn(usize) -> bool) {
    let mut max = F::neg_infinity();
    for (i, &x) in v.iter().enumerate() {
        if valid(i) && x > max {
            max = x;
        }
    }
    if max == F::neg_infinity() {
        v.iter_mut().for_each(|x| *x = F::zero());
        return;
    }
    // accumulate in f64 so long f32 rows still sum to 1 within 1e-6
    let mut sum = 0.0f64;
    for (i, x) in v.iter_mut().enumerate() {
        *x = if valid(i) { (*x - max).exp() } else { F::zero() };
        sum += x.to_f64().expect("float to f64");
    }
    v.iter_mut().for_each(|x| *x = cst(x.to_f64().expect("float to f64") / sum));
}

pub fn softmax<F: NdFloat>(logits: &[F]) -> Vec<F> {
    let mut p = logits.to_vec();
    masked_softmax_in_place(&mut p, |_| true);
    p
}

/// Backward of a softmax over the last axis given probabilities `p`:
/// `ds = p ⊙ (dp − Σ p ⊙ dp)`, row by row.
pub fn softmax_rows_backward<F: NdFloat>(p: ArrayView2<F>, dp: ArrayView2<F>) -> Array2<F> {
    let mut ds = Array2::zeros(p.raw_dim());
    for ((mut out, pr), dr) in ds.rows_mut().into_iter().zip(p.rows()).zip(dp.rows()) {
        let dot = pr.iter().zip(dr.iter()).fold(F::zero(), |a, (&p, &d)| a + p * d);
        for ((o, &pi), &di) in out.iter_mut().zip(pr.iter()).zip(dr.iter()) {
            *o = pi * (di - dot);
        }
    }
    ds
}
