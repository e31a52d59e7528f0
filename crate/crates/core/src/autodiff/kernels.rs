//! Scalar and small dense kernels shared by the tape's forward and backward rules.

use core::f64::consts::PI;

/// `c[m,n] += a[m,k] · b[k,n]`
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m,k] += a[m,n] · b[k,n]ᵀ`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · b[m,n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

const GELU_CUBIC: f64 = 0.044715;

fn gelu_inner(x: f64) -> f64 {
    libm::sqrt(2.0 / PI) * (x + GELU_CUBIC * x * x * x)
}

/// tanh approximation of `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(gelu_inner(x)))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(gelu_inner(x));
    let du = libm::sqrt(2.0 / PI) * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Angle table for pairwise rotation: `cos/sin(n·θ_j)` with `θ_j = base^(−2j/d)`,
/// laid out `[n][j]`.
pub(crate) fn rotation_table(
    positions: usize,
    dim: usize,
    base: f64,
) -> (alloc::vec::Vec<f64>, alloc::vec::Vec<f64>) {
    let half = dim / 2;
    let mut cos = alloc::vec::Vec::with_capacity(positions * half);
    let mut sin = alloc::vec::Vec::with_capacity(positions * half);
    for n in 0..positions {
        for j in 0..half {
            let theta = libm::pow(base, -2.0 * j as f64 / dim as f64);
            let angle = n as f64 * theta;
            cos.push(libm::cos(angle));
            sin.push(libm::sin(angle));
        }
    }
    (cos, sin)
}
