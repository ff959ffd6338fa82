mod common;

use std::f64::consts::PI;

use eri_core::input::Molecule;
use eri_core::scf::{density_from_mos, eigh, one_electron, orthogonalizer};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Gauss-Hermite rule for weight `exp(-x^2)` from the Jacobi matrix.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    (0..n)
        .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

/// One Cartesian primitive factor `(x - a)^i exp(-alpha (x - a)^2)`.
#[derive(Clone, Copy)]
struct Factor {
    a: f64,
    i: i32,
    alpha: f64,
}

impl Factor {
    fn value(&self, x: f64) -> f64 {
        (x - self.a).powi(self.i)
    }

    /// Polynomial part of the derivative of the full factor.
    fn deriv(&self, x: f64) -> f64 {
        let d = x - self.a;
        let lower = if self.i > 0 { self.i as f64 * d.powi(self.i - 1) } else { 0.0 };
        lower - 2.0 * self.alpha * d.powi(self.i + 1)
    }
}

/// `int poly(x) exp(-sum_k w_k (x - c_k)^2) dx`, exact for low-degree polynomials.
fn gaussian_integral(terms: &[(f64, f64)], poly: impl Fn(f64) -> f64, rule: &[(f64, f64)]) -> f64 {
    let gamma: f64 = terms.iter().map(|t| t.0).sum();
    let center = terms.iter().map(|t| t.0 * t.1).sum::<f64>() / gamma;
    let rest: f64 = terms.iter().map(|t| t.0 * (t.1 - center).powi(2)).sum();
    let s = gamma.sqrt();
    (-rest).exp() / s * rule.iter().map(|&(x, w)| w * poly(center + x / s)).sum::<f64>()
}

/// Primitive-expanded basis function: `scale * sum_k c_k prod_x Factor`.
struct Function {
    scale: f64,
    prims: Vec<(f64, [Factor; 3])>,
}

fn functions(mol: &Molecule) -> Vec<Function> {
    mol.expand_functions()
        .iter()
        .map(|f| {
            let sh = &mol.shells[f.shell];
            Function {
                scale: f.scale,
                prims: sh
                    .exponents
                    .iter()
                    .zip(&sh.coefficients)
                    .map(|(&alpha, &c)| {
                        (c, [0, 1, 2].map(|k| Factor { a: sh.center[k], i: f.momentum.0[k] as i32, alpha }))
                    })
                    .collect(),
            }
        })
        .collect()
}

fn pair_sum(f: &Function, g: &Function, mut prim: impl FnMut(&[Factor; 3], &[Factor; 3]) -> f64) -> f64 {
    let mut sum = 0.0;
    for (ca, fa) in &f.prims {
        for (cb, fb) in &g.prims {
            sum += ca * cb * prim(fa, fb);
        }
    }
    f.scale * g.scale * sum
}

fn overlap_q(f: &Function, g: &Function, rule: &[(f64, f64)]) -> f64 {
    pair_sum(f, g, |a, b| {
        (0..3)
            .map(|k| gaussian_integral(&[(a[k].alpha, a[k].a), (b[k].alpha, b[k].a)], |x| a[k].value(x) * b[k].value(x), rule))
            .product()
    })
}

/// `1/2 int grad f . grad g`.
fn kinetic_q(f: &Function, g: &Function, rule: &[(f64, f64)]) -> f64 {
    pair_sum(f, g, |a, b| {
        let terms = |k: usize| [(a[k].alpha, a[k].a), (b[k].alpha, b[k].a)];
        let s: Vec<f64> = (0..3).map(|k| gaussian_integral(&terms(k), |x| a[k].value(x) * b[k].value(x), rule)).collect();
        let d: Vec<f64> = (0..3).map(|k| gaussian_integral(&terms(k), |x| a[k].deriv(x) * b[k].deriv(x), rule)).collect();
        0.5 * (d[0] * s[1] * s[2] + s[0] * d[1] * s[2] + s[0] * s[1] * d[2])
    })
}

/// `-sum_C Z_C int f g / |r - C|` with `1/r = 2/sqrt(pi) int_0^inf exp(-u^2 r^2) du`,
/// the `u` integral by composite Gauss-Legendre after `u = s/(1-s)`.
fn nuclear_q(mol: &Molecule, f: &Function, g: &Function, rule: &[(f64, f64)]) -> f64 {
    let outer = common::gauss_legendre(20);
    let mut total = 0.0;
    for atom in &mol.atoms {
        let c = atom.position;
        let v = pair_sum(f, g, |a, b| {
            let integrand = |s: f64| {
                let u = s / (1.0 - s);
                let jac = 1.0 / (1.0 - s).powi(2);
                let prod: f64 = (0..3)
                    .map(|k| {
                        gaussian_integral(&[(a[k].alpha, a[k].a), (b[k].alpha, b[k].a), (u * u, c[k])], |x| a[k].value(x) * b[k].value(x), rule)
                    })
                    .product();
                prod * jac
            };
            2.0 / PI.sqrt() * common::integrate(integrand, 0.0, 1.0, 200, &outer)
        });
        total -= atom.atomic_number as f64 * v;
    }
    total
}

#[test]
fn water_entries_match_quadrature() {
    let mol = common::water();
    let ints = one_electron(&mol);
    let funcs = functions(&mol);
    let rule = gauss_hermite(12);
    let mut rng = StdRng::seed_from_u64(31);
    let mut picks: Vec<(usize, usize)> = (0..3).map(|_| (rng.gen_range(0..7), rng.gen_range(0..7))).collect();
    // Always include an s-p cross term on different centers.
    picks.push((2, 5));
    for (i, j) in picks {
        let (f, g) = (&funcs[i], &funcs[j]);
        assert!((ints.s[(i, j)] - overlap_q(f, g, &rule)).abs() < 1e-8, "S[{i},{j}]");
        assert!((ints.t[(i, j)] - kinetic_q(f, g, &rule)).abs() < 1e-8, "T[{i},{j}]");
        let vq = nuclear_q(&mol, f, g, &rule);
        assert!((ints.v[(i, j)] - vq).abs() < 1e-8, "V[{i},{j}]: {} vs {vq}", ints.v[(i, j)]);
    }
}

#[test]
fn matrices_symmetric_with_unit_overlap_diagonal() {
    for mol in [common::water(), common::benzene()] {
        let ints = one_electron(&mol);
        for m in [&ints.s, &ints.t, &ints.v] {
            assert!((m - m.transpose()).amax() < 1e-10);
        }
        assert!(ints.s.diagonal().iter().all(|d| (d - 1.0).abs() < 1e-10));
    }
}

#[test]
fn orthogonalizer_of_random_spd() {
    let mut rng = StdRng::seed_from_u64(4);
    let a = DMatrix::from_fn(7, 7, |_, _| rng.gen_range(-1.0..1.0));
    let s = &a * a.transpose() + DMatrix::identity(7, 7) * 0.5;
    let x = orthogonalizer(&s).unwrap();
    assert!((x.transpose() * &s * &x - DMatrix::identity(7, 7)).amax() < 1e-10);
}

#[test]
fn density_trace_counts_pairs() {
    let mol = common::water();
    let ints = one_electron(&mol);
    let x = orthogonalizer(&ints.s).unwrap();
    let (_, cp) = eigh(&(x.transpose() * ints.core_hamiltonian() * &x));
    let d = density_from_mos(&(&x * cp), 5).unwrap();
    assert!(((&d * &ints.s).trace() - 5.0).abs() < 1e-10);
}
