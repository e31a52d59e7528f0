use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Forward DFT `X[k] = Σ x[n]·e^(−2πikn/N)`. Radix-2 iterative for
/// power-of-two lengths, direct summation otherwise.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_radix2(&mut buf);
        buf
    } else {
        dft_direct(x)
    }
}

/// O(N²) transform, also the fallback for lengths that are not powers of two.
pub fn dft_direct(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (j, &v)| {
                    // reduce k·j mod n first so the angle stays small
                    let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    acc + v * Complex64::new(libm::cos(ang), libm::sin(ang))
                })
        })
        .collect()
}

fn fft_radix2(buf: &mut [Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| {
                let ang = -2.0 * PI * k as f64 / len as f64;
                Complex64::new(libm::cos(ang), libm::sin(ang))
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

/// One-sided raw periodogram `|X[k]|²/N`, `k = 0..=N/2`. No window, no averaging.
pub fn periodogram_psd(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Contract(
            "periodogram needs at least two samples".into(),
        ));
    }
    let spec = dft(&x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect::<Vec<_>>());
    Ok(spec[..=n / 2]
        .iter()
        .map(|c| c.norm_sqr() / n as f64)
        .collect())
}
