//! Lateral inhibition layer.
//!
//! Forward: `y = x · Diag(Θ(x · ZeroDiag(W) + b))`, a hard pass/reject gate on
//! every input coordinate driven by the other coordinates. Backward replaces
//! the derivative of Θ with the derivative of the steep sigmoid
//! `σ_k(z) = 1 / (1 + e^{-kz})`, i.e. `σ'_k(z) = k σ_k(z) σ_k(-z)`.
//!
//! The diagonal of `W` never influences any output: the pre-activation skips
//! it and the returned weight gradient has an exactly zero diagonal.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::DetRng;

/// Default surrogate steepness.
pub const DEFAULT_K: f64 = 10.0;

/// How the backward pass treats the direct multiplicative path `x ⊙ gate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SurrogateMode {
    /// Direct path uses the hard gate from the forward pass; only Θ' is
    /// replaced by σ'_k. This is the training mode.
    #[default]
    Hard,
    /// Direct path uses σ_k(z) as well: the exact gradient of
    /// [`li_relaxed_forward`]. Used to verify the chain rule.
    Relaxed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiParams {
    pub w: Matrix,
    pub b: Vector,
    pub k: f64,
}

impl LiParams {
    pub fn new(w: Matrix, b: Vector, k: f64) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::NotSquare {
                op: "LiParams::new",
                rows: w.rows(),
                cols: w.cols(),
            });
        }
        if w.rows() != b.len() {
            return Err(dim_err("LiParams::new", w.rows(), b.len()));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("surrogate steepness k must be > 0, got {k}")));
        }
        Ok(Self { w, b, k })
    }

    /// Off-diagonal `W ~ U(-1/√d, 1/√d)`, zero diagonal, `b = 0`.
    pub fn init(d: usize, k: f64, rng: &mut DetRng) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let mut w = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    w.set(i, j, rng.uniform_range(-bound, bound));
                }
            }
        }
        Self::new(w, Vector::zeros(d), k)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `z = x · ZeroDiag(W) + b`.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vector> {
        let d = self.dim();
        if x.len() != d {
            return Err(dim_err("li pre-activation", d, x.len()));
        }
        let mut z = self.b.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = self.w.row(i);
            for j in 0..d {
                if j != i {
                    z[j] += xi * row[j];
                }
            }
        }
        Ok(z)
    }
}

/// Values kept from the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LiCache {
    pub x: Vector,
    pub z: Vector,
    pub g: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiGrads {
    pub dw: Matrix,
    pub db: Vector,
    pub dx: Vector,
}

/// Θ(z): 1 where `z > 0`, else 0 (including `z == 0`).
pub fn heaviside(z: &[f64]) -> Vector {
    Vector(z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect())
}

/// `1 / (1 + e^{-kz})`, evaluated without overflow.
pub fn surrogate_sigmoid(z: f64, k: f64) -> f64 {
    let t = k * z;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `k σ_k(z) σ_k(-z)`.
pub fn surrogate_sigmoid_deriv(z: f64, k: f64) -> f64 {
    k * surrogate_sigmoid(z, k) * surrogate_sigmoid(-z, k)
}

pub fn li_forward(x: &[f64], params: &LiParams) -> Result<(Vector, LiCache)> {
    let z = params.pre_activation(x)?;
    let g = heaviside(&z);
    // g is exactly 0 or 1, so select rather than multiply to keep y bitwise
    // equal to 0 or x (multiplying a negative x by 0 would give -0.0).
    let y = Vector(
        x.iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| if gi == 1.0 { xi } else { 0.0 })
            .collect(),
    );
    Ok((
        y,
        LiCache {
            x: Vector::from(x),
            z,
            g,
        },
    ))
}

/// `y = x ⊙ σ_k(z)`, the differentiable relaxation of [`li_forward`].
pub fn li_relaxed_forward(x: &[f64], params: &LiParams) -> Result<Vector> {
    let z = params.pre_activation(x)?;
    Ok(Vector(
        x.iter()
            .zip(z.iter())
            .map(|(&xi, &zi)| xi * surrogate_sigmoid(zi, params.k))
            .collect(),
    ))
}

pub fn li_backward(
    cache: &LiCache,
    params: &LiParams,
    dy: &[f64],
    mode: SurrogateMode,
) -> Result<LiGrads> {
    let d = params.dim();
    if dy.len() != d || cache.x.len() != d || cache.z.len() != d || cache.g.len() != d {
        return Err(dim_err("li_backward", d, dy.len()));
    }
    let k = params.k;
    let x = &cache.x;
    let s: Vec<f64> = (0..d)
        .map(|j| dy[j] * x[j] * surrogate_sigmoid_deriv(cache.z[j], k))
        .collect();

    let mut dx = Vector::zeros(d);
    for i in 0..d {
        let direct = match mode {
            SurrogateMode::Hard => cache.g[i],
            SurrogateMode::Relaxed => surrogate_sigmoid(cache.z[i], k),
        };
        let row = params.w.row(i);
        let mut acc = dy[i] * direct;
        for j in 0..d {
            if j != i {
                acc += s[j] * row[j];
            }
        }
        dx[i] = acc;
    }

    let mut dw = Matrix::zeros(d, d);
    for i in 0..d {
        let row = dw.row_mut(i);
        for j in 0..d {
            if j != i {
                row[j] = x[i] * s[j];
            }
        }
    }

    Ok(LiGrads {
        dw,
        db: Vector(s),
        dx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_dim(w01: f64, w10: f64) -> LiParams {
        let w = Matrix::from_rows(&[vec![0.0, w01], vec![w10, 0.0]]).unwrap();
        LiParams::new(w, Vector::zeros(2), DEFAULT_K).unwrap()
    }

    #[test]
    fn heaviside_boundary() {
        assert_eq!(heaviside(&[0.5, -2.0, 0.0]).0, vec![1.0, 0.0, 0.0]);
        assert_eq!(heaviside(&[1.0, 3.0]).0, vec![1.0, 1.0]);
        assert_eq!(heaviside(&[-1.0, -3.0]).0, vec![0.0, 0.0]);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(surrogate_sigmoid(0.0, 3.0), 0.5);
        assert_eq!(surrogate_sigmoid(1e3, 1.0), 1.0);
        assert_eq!(surrogate_sigmoid(-1e3, 1.0), 0.0);
        assert!(surrogate_sigmoid(-1e3, 1e3).is_finite());
        // 1/(1+e^-1) = 0.7310585786300049 (50-digit reference value truncated)
        assert!((surrogate_sigmoid(0.1, 10.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_derivative() {
        assert_eq!(surrogate_sigmoid_deriv(0.0, 10.0), 2.5);
        assert_eq!(surrogate_sigmoid_deriv(0.0, 1.0), 0.25);
        let h = 1e-5;
        for &k in &[0.5, 1.0, 10.0] {
            for i in -20..=20 {
                let z = i as f64 * 0.07;
                let fd = (surrogate_sigmoid(z + h, k) - surrogate_sigmoid(z - h, k)) / (2.0 * h);
                assert!((fd - surrogate_sigmoid_deriv(z, k)).abs() <= 1e-7, "z={z} k={k}");
            }
        }
    }

    #[test]
    fn forward_examples() {
        let x = [1.0, -2.0];
        let (y, c) = li_forward(&x, &two_dim(0.5, -0.5)).unwrap();
        assert_eq!(c.z.0, vec![1.0, 0.5]);
        assert_eq!(c.g.0, vec![1.0, 1.0]);
        assert_eq!(y.0, vec![1.0, -2.0]);

        let (y, c) = li_forward(&x, &two_dim(-0.5, 0.5)).unwrap();
        assert_eq!(c.z.0, vec![-1.0, -0.5]);
        assert_eq!(c.g.0, vec![0.0, 0.0]);
        assert_eq!(y.0, vec![0.0, 0.0]);

        let mut p = two_dim(-0.5, 0.5);
        p.b = Vector(vec![1e6, 1e6]);
        assert_eq!(li_forward(&x, &p).unwrap().0 .0, x.to_vec());
    }

    #[test]
    fn forward_dimension_error() {
        assert!(li_forward(&[1.0, 2.0, 3.0], &two_dim(0.1, 0.1)).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(LiParams::new(Matrix::zeros(2, 3), Vector::zeros(2), 1.0).is_err());
        assert!(LiParams::new(Matrix::zeros(2, 2), Vector::zeros(3), 1.0).is_err());
        assert!(LiParams::new(Matrix::zeros(2, 2), Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn relaxed_forward_examples() {
        let p = LiParams::new(Matrix::zeros(3, 3), Vector::zeros(3), 10.0).unwrap();
        assert_eq!(li_relaxed_forward(&[2.0, -4.0, 1.0], &p).unwrap().0, vec![1.0, -2.0, 0.5]);
        assert_eq!(li_relaxed_forward(&[0.0; 3], &p).unwrap().0, vec![0.0; 3]);

        let mut steep = two_dim(0.5, -0.5);
        steep.k = 1e4;
        let hard = li_forward(&[1.0, -2.0], &steep).unwrap().0;
        let relaxed = li_relaxed_forward(&[1.0, -2.0], &steep).unwrap();
        for (a, b) in hard.iter().zip(relaxed.iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = DetRng::new(2);
        let p = LiParams::init(4, 10.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let (_, c) = li_forward(&x, &p).unwrap();
        let g = li_backward(&c, &p, &[0.0; 4], SurrogateMode::Hard).unwrap();
        assert!(g.dx.iter().chain(g.db.iter()).chain(g.dw.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn backward_diag_is_zero() {
        let mut rng = DetRng::new(4);
        for _ in 0..50 {
            let p = LiParams::init(5, 10.0, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let dy: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            let (_, c) = li_forward(&x, &p).unwrap();
            for mode in [SurrogateMode::Hard, SurrogateMode::Relaxed] {
                let g = li_backward(&c, &p, &dy, mode).unwrap();
                for i in 0..5 {
                    assert_eq!(g.dw.get(i, i), 0.0);
                }
            }
        }
    }

    #[test]
    fn init_zero_diag_and_bounds() {
        let mut rng = DetRng::new(8);
        let p = LiParams::init(16, DEFAULT_K, &mut rng).unwrap();
        for i in 0..16 {
            assert_eq!(p.w.get(i, i), 0.0);
            for j in 0..16 {
                assert!(p.w.get(i, j).abs() <= 0.25);
            }
        }
        assert!(p.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steepness_is_monotone() {
        for &z in &[-0.3, -0.01, 0.02, 0.5] {
            let theta = if z > 0.0 { 1.0 } else { 0.0 };
            let mut prev = f64::INFINITY;
            for k in [0.1, 1.0, 2.0, 10.0, 50.0, 100.0, 1e3] {
                let gap = (surrogate_sigmoid(z, k) - theta).abs();
                assert!(gap <= prev);
                prev = gap;
            }
        }
    }
}
