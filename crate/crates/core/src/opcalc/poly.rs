//! Concrete polynomial maps (degree <= 3) with explicit symmetric
//! coefficient tensors, so every derivative is an exact contraction. These
//! back the numeric oracles: exact derivatives of a composition via
//! coefficient extraction in a scalar parameter, with at most one
//! finite-difference layer at fourth order.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `p(x) = c0 + C1 x + C2(x, x) + C3(x, x, x)` with C2, C3 symmetric in
/// their input slots.
#[derive(Clone, Debug)]
pub struct PolyMap {
    pub in_dim: usize,
    pub out_dim: usize,
    c0: DVector<f64>,
    c1: DMatrix<f64>,
    c2: Vec<f64>, // [out][in][in], symmetric in the two input slots
    c3: Vec<f64>, // [out][in][in][in], symmetric in the three input slots
}

impl PolyMap {
    /// Random map with entries scaled by `scale`; coefficient tensors are
    /// symmetrized after sampling.
    pub fn random(rng: &mut impl Rng, in_dim: usize, out_dim: usize, scale: f64) -> PolyMap {
        let n = in_dim;
        let c0 = DVector::from_fn(out_dim, |_, _| rng.gen_range(-scale..scale));
        let c1 = DMatrix::from_fn(out_dim, n, |_, _| rng.gen_range(-scale..scale));
        let mut c2 = vec![0.0; out_dim * n * n];
        for o in 0..out_dim {
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-scale..scale) * 0.5;
                    c2[o * n * n + i * n + j] = v;
                    c2[o * n * n + j * n + i] = v;
                }
            }
        }
        let mut c3 = vec![0.0; out_dim * n * n * n];
        for o in 0..out_dim {
            for i in 0..n {
                for j in i..n {
                    for k in j..n {
                        let v = rng.gen_range(-scale..scale) * 0.25;
                        for (a, b, c) in [
                            (i, j, k),
                            (i, k, j),
                            (j, i, k),
                            (j, k, i),
                            (k, i, j),
                            (k, j, i),
                        ] {
                            c3[((o * n + a) * n + b) * n + c] = v;
                        }
                    }
                }
            }
        }
        PolyMap {
            in_dim,
            out_dim,
            c0,
            c1,
            c2,
            c3,
        }
    }

    /// Purely linear map (zero higher coefficients).
    pub fn linear(c1: DMatrix<f64>) -> PolyMap {
        let (out_dim, in_dim) = (c1.nrows(), c1.ncols());
        PolyMap {
            in_dim,
            out_dim,
            c0: DVector::zeros(out_dim),
            c1,
            c2: vec![0.0; out_dim * in_dim * in_dim],
            c3: vec![0.0; out_dim * in_dim * in_dim * in_dim],
        }
    }

    pub fn identity(dim: usize) -> PolyMap {
        PolyMap::linear(DMatrix::identity(dim, dim))
    }

    fn c2_apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.in_dim;
        DVector::from_fn(self.out_dim, |o, _| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.c2[o * n * n + i * n + j] * u[i] * v[j];
                }
            }
            acc
        })
    }

    fn c3_apply(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.in_dim;
        DVector::from_fn(self.out_dim, |o, _| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        acc += self.c3[((o * n + i) * n + j) * n + k] * u[i] * v[j] * w[k];
                    }
                }
            }
            acc
        })
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c0 + &self.c1 * x + self.c2_apply(x, x) + self.c3_apply(x, x, x)
    }

    /// Jacobian at `x`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.in_dim;
        let mut j = self.c1.clone();
        for o in 0..self.out_dim {
            for i in 0..n {
                let mut acc = 0.0;
                for a in 0..n {
                    acc += 2.0 * self.c2[o * n * n + i * n + a] * x[a];
                }
                for a in 0..n {
                    for b in 0..n {
                        acc += 3.0 * self.c3[((o * n + i) * n + a) * n + b] * x[a] * x[b];
                    }
                }
                j[(o, i)] += acc;
            }
        }
        j
    }

    /// Exact `D^k p(x) · (z_1, ..., z_k)`; identically zero for k > 3.
    pub fn dk_apply(&self, x: &DVector<f64>, dirs: &[DVector<f64>]) -> DVector<f64> {
        match dirs {
            [] => self.value(x),
            [z] => self.jacobian(x) * z,
            [z1, z2] => self.c2_apply(z1, z2) * 2.0 + self.c3_apply(x, z1, z2) * 6.0,
            [z1, z2, z3] => self.c3_apply(z1, z2, z3) * 6.0,
            _ => DVector::zeros(self.out_dim),
        }
    }

    /// `D^2 p(x)` matricized to `out_dim x in_dim^2`, column `(i, j)` holding
    /// `D^2 p(x) · (e_i, e_j)`.
    pub fn d2_matricized(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.in_dim;
        let mut m = DMatrix::zeros(self.out_dim, n * n);
        for i in 0..n {
            for j in 0..n {
                let col = self.dk_apply(x, &[unit(n, i), unit(n, j)]);
                m.set_column(i * n + j, &col);
            }
        }
        m
    }

    /// Coefficients `w_0..w_3` of `t -> p(x + t z)` (exact; degree 3).
    pub fn taylor_along(&self, x: &DVector<f64>, z: &DVector<f64>) -> [DVector<f64>; 4] {
        [
            self.value(x),
            self.jacobian(x) * z,
            self.c2_apply(z, z) + self.c3_apply(x, z, z) * 3.0,
            self.c3_apply(z, z, z),
        ]
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

/// Exact `d^k/dt^k f(g(x + t z))` at `t = 0` for `k <= 3`: expand the inner
/// map along the ray, push the coefficients through `f`, and read off the
/// `t^k` coefficient.
pub fn composition_derivative_exact(
    f: &PolyMap,
    g: &PolyMap,
    x: &DVector<f64>,
    z: &DVector<f64>,
    k: usize,
) -> DVector<f64> {
    assert!(k <= 3, "exact extraction implemented through third order");
    let w = g.taylor_along(x, z);
    let phi = compose_coeffs(f, &w, k);
    let kfact: f64 = (1..=k).product::<usize>() as f64;
    phi * kfact
}

/// `t^k` coefficient of `f(w(t))` for `w(t) = sum_i t^i w_i`.
fn compose_coeffs(f: &PolyMap, w: &[DVector<f64>; 4], k: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(f.out_dim);
    if k == 0 {
        acc += &f.c0;
    }
    if k <= 3 {
        acc += &f.c1 * &w[k];
    }
    for i in 0..=3usize {
        for j in 0..=3usize {
            if i + j == k {
                acc += f.c2_apply(&w[i], &w[j]);
            }
            for l in 0..=3usize {
                if i + j + l == k {
                    acc += f.c3_apply(&w[i], &w[j], &w[l]);
                }
            }
        }
    }
    acc
}

/// Fourth derivative of the composition along `z` with a single central
/// finite-difference layer on top of the exact third derivative.
pub fn composition_derivative_k4_fd(
    f: &PolyMap,
    g: &PolyMap,
    x: &DVector<f64>,
    z: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let plus = composition_derivative_exact(f, g, &(x + z * h), z, 3);
    let minus = composition_derivative_exact(f, g, &(x - z * h), z, 3);
    (plus - minus) / (2.0 * h)
}

/// Exact mixed second derivative `∂²/∂s∂t f(g(x + sZ + tT))` at the origin,
/// by bivariate coefficient extraction (independent of any chain-rule
/// expansion).
pub fn composition_mixed_second(
    f: &PolyMap,
    g: &PolyMap,
    x: &DVector<f64>,
    z: &DVector<f64>,
    t: &DVector<f64>,
) -> DVector<f64> {
    let w00 = g.value(x);
    let w10 = g.jacobian(x) * z;
    let w01 = g.jacobian(x) * t;
    let w11 = g.c2_apply(z, t) * 2.0 + g.c3_apply(x, z, t) * 6.0;
    &f.c1 * &w11
        + f.c2_apply(&w00, &w11) * 2.0
        + f.c2_apply(&w10, &w01) * 2.0
        + f.c3_apply(&w00, &w00, &w11) * 3.0
        + f.c3_apply(&w00, &w10, &w01) * 6.0
}

/// k-fold nested central difference of `fun` along `z`.
pub fn nested_central<F>(
    fun: &F,
    x: &DVector<f64>,
    z: &DVector<f64>,
    k: usize,
    h: f64,
) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if k == 0 {
        return fun(x);
    }
    let plus = nested_central(fun, &(x + z * h), z, k - 1, h);
    let minus = nested_central(fun, &(x - z * h), z, k - 1, h);
    (plus - minus) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolyMap::random(&mut rng, 3, 2, 0.8);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let z = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let h = 1e-6;
        let fd = (p.value(&(&x + &z * h)) - p.value(&(&x - &z * h))) / (2.0 * h);
        let exact = p.dk_apply(&x, std::slice::from_ref(&z));
        assert!((fd - &exact).norm() <= 1e-7 * (1.0 + exact.norm()));
    }

    #[test]
    fn second_derivative_is_symmetric_and_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolyMap::random(&mut rng, 3, 3, 0.8);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let z1 = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let z2 = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let a = p.dk_apply(&x, &[z1.clone(), z2.clone()]);
        let b = p.dk_apply(&x, &[z2.clone(), z1.clone()]);
        assert!((&a - &b).norm() < 1e-14);
        let h = 1e-4;
        let fd = (p.dk_apply(&(&x + &z2 * h), std::slice::from_ref(&z1))
            - p.dk_apply(&(&x - &z2 * h), std::slice::from_ref(&z1)))
            / (2.0 * h);
        assert!((&fd - &a).norm() <= 1e-6 * (1.0 + a.norm()));
    }

    #[test]
    fn taylor_reconstructs_values_on_the_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PolyMap::random(&mut rng, 2, 2, 0.7);
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5));
        let z = DVector::from_fn(2, |_, _| rng.gen_range(-0.5..0.5));
        let w = p.taylor_along(&x, &z);
        for t in [-0.3, 0.1, 0.7] {
            let direct = p.value(&(&x + &z * t));
            let series = &w[0] + &w[1] * t + &w[2] * (t * t) + &w[3] * (t * t * t);
            assert!((direct - series).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_composition_derivative_matches_nested_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = PolyMap::random(&mut rng, 3, 2, 0.6);
        let f = PolyMap::random(&mut rng, 2, 2, 0.6);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-0.4..0.4));
        let z = DVector::from_fn(3, |_, _| rng.gen_range(-0.4..0.4));
        let compose = |p: &DVector<f64>| f.value(&g.value(p));
        for k in 1..=3usize {
            let exact = composition_derivative_exact(&f, &g, &x, &z, k);
            let h = f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * (1.0 + x.norm());
            let fd = nested_central(&compose, &x, &z, k, h);
            let rel = (&fd - &exact).norm() / (1.0 + exact.norm());
            assert!(rel < 1e-5, "k={k}: rel={rel:.3e}");
        }
    }

    #[test]
    fn mixed_second_matches_two_sided_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = PolyMap::random(&mut rng, 2, 3, 0.6);
        let f = PolyMap::random(&mut rng, 3, 1, 0.6);
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-0.4..0.4));
        let z = DVector::from_fn(2, |_, _| rng.gen_range(-0.4..0.4));
        let t = DVector::from_fn(2, |_, _| rng.gen_range(-0.4..0.4));
        let exact = composition_mixed_second(&f, &g, &x, &z, &t);
        let h = 1e-4;
        let val = |s: f64, u: f64| f.value(&g.value(&(&x + &z * s + &t * u)));
        let fd = (val(h, h) - val(h, -h) - val(-h, h) + val(-h, -h)) / (4.0 * h * h);
        assert!((&fd - &exact).norm() <= 1e-5 * (1.0 + exact.norm()));
    }
}
