use nalgebra::RealField;

/// Output width of [`positional_encoding`] for `frequencies` octaves.
pub const fn encoded_width(frequencies: usize) -> usize {
    3 + 6 * frequencies
}

/// Frequency encoding `[x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L-1}πx), cos(2^{L-1}πx)]`,
/// each block holding the three coordinates.
pub fn positional_encoding<T: RealField + Copy>(x: &[T; 3], frequencies: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(encoded_width(frequencies));
    out.extend_from_slice(x);
    let pi = T::pi();
    let two: T = nalgebra::convert(2.0);
    let mut scale = pi;
    for _ in 0..frequencies {
        out.extend(x.iter().map(|v| (scale * *v).sin()));
        out.extend(x.iter().map(|v| (scale * *v).cos()));
        scale *= two;
    }
    out
}

/// Adjoint of [`positional_encoding`]: dL/dx from dL/d(encoding).
pub fn positional_encoding_backward(x: &[f64; 3], frequencies: usize, grad: &[f64]) -> [f64; 3] {
    assert_eq!(grad.len(), encoded_width(frequencies));
    let mut out = [grad[0], grad[1], grad[2]];
    let mut scale = std::f64::consts::PI;
    for k in 0..frequencies {
        let base = 3 + 6 * k;
        for i in 0..3 {
            let (s, c) = (scale * x[i]).sin_cos();
            out[i] += grad[base + i] * scale * c - grad[base + 3 + i] * scale * s;
        }
        scale *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input() {
        let e = positional_encoding(&[0.0f64; 3], 10);
        assert_eq!(e.len(), 63);
        for k in 0..10 {
            let base = 3 + 6 * k;
            assert!(e[base..base + 3].iter().all(|v| *v == 0.0));
            assert!(e[base + 3..base + 6].iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn no_frequencies_is_identity() {
        assert_eq!(positional_encoding(&[0.1, 0.2, 0.3], 0), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn first_octave_value() {
        let e = positional_encoding(&[0.5f64, 0.0, 0.0], 1);
        assert!((e[3] - 1.0).abs() < 1e-12);
        assert!(e[6].abs() < 1e-12);
    }

    #[test]
    fn distinct_inputs_encode_distinctly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            assert_ne!(positional_encoding(&a, 4), positional_encoding(&b, 4));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = [0.31, -0.52, 0.77];
        let w: Vec<f64> = (0..encoded_width(6)).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let loss = |x: &[f64; 3]| positional_encoding(x, 6).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let g = positional_encoding_backward(&x, 6, &w);
        for i in 0..3 {
            let h = 1e-6;
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() / fd.abs().max(1.0) < 1e-6);
        }
    }
}
