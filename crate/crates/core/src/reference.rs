//! Slow reference evaluation used to cross-check compiled plans.
//!
//! Applies the same recurrences as the compiler in a fixed order (HRR on `b`,
//! then `d`, then VRR on `a`, then `c`, lowest axis first) with a memo table
//! per primitive quadruple, and contracts at the very end.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::boys::boys_into;
use crate::compiler::EriClass;
use crate::input::{cartesian_components, Molecule, Momentum, Shell, Vec3};

struct Prim {
    a: Vec3,
    b: Vec3,
    c: Vec3,
    d: Vec3,
    p: f64,
    q: f64,
    pc: Vec3,
    qc: Vec3,
    w: Vec3,
    rho: f64,
    base: Vec<f64>,
}

type Key = ([u8; 3], [u8; 3], [u8; 3], [u8; 3], u8);

fn first_axis(m: Momentum) -> Option<usize> {
    (0..3).find(|&i| m.get(i) > 0)
}

fn rec(pr: &Prim, a: Momentum, b: Momentum, c: Momentum, d: Momentum, m: u8, memo: &mut HashMap<Key, f64>) -> f64 {
    let key = (a.0, b.0, c.0, d.0, m);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let v = if let Some(i) = first_axis(b) {
        let b1 = b.lowered(i).unwrap();
        rec(pr, a.raised(i), b1, c, d, m, memo) + (pr.a[i] - pr.b[i]) * rec(pr, a, b1, c, d, m, memo)
    } else if let Some(i) = first_axis(d) {
        let d1 = d.lowered(i).unwrap();
        rec(pr, a, b, c.raised(i), d1, m, memo) + (pr.c[i] - pr.d[i]) * rec(pr, a, b, c, d1, m, memo)
    } else if let Some(i) = first_axis(a) {
        let e = a.lowered(i).unwrap();
        let z = Momentum::ZERO;
        let mut v = (pr.pc[i] - pr.a[i]) * rec(pr, e, z, c, z, m, memo)
            + (pr.w[i] - pr.pc[i]) * rec(pr, e, z, c, z, m + 1, memo);
        if let Some(e2) = e.lowered(i) {
            let f = e.get(i) as f64 / (2.0 * pr.p);
            v += f * (rec(pr, e2, z, c, z, m, memo) - pr.rho / pr.p * rec(pr, e2, z, c, z, m + 1, memo));
        }
        if let Some(c2) = c.lowered(i) {
            v += c.get(i) as f64 / (2.0 * (pr.p + pr.q)) * rec(pr, e, z, c2, z, m + 1, memo);
        }
        v
    } else if let Some(i) = first_axis(c) {
        let f = c.lowered(i).unwrap();
        let z = Momentum::ZERO;
        let mut v = (pr.qc[i] - pr.c[i]) * rec(pr, a, z, f, z, m, memo)
            + (pr.w[i] - pr.qc[i]) * rec(pr, a, z, f, z, m + 1, memo);
        if let Some(f2) = f.lowered(i) {
            let g = f.get(i) as f64 / (2.0 * pr.q);
            v += g * (rec(pr, a, z, f2, z, m, memo) - pr.rho / pr.q * rec(pr, a, z, f2, z, m + 1, memo));
        }
        v
    } else {
        pr.base[m as usize]
    };
    memo.insert(key, v);
    v
}

fn prepare(centers: [Vec3; 4], exps: [f64; 4], mmax: usize) -> Prim {
    let [a, b, c, d] = centers;
    let [al, be, ga, de] = exps;
    let (p, q) = (al + be, ga + de);
    let pc = (a * al + b * be) / p;
    let qc = (c * ga + d * de) / q;
    let w = (pc * p + qc * q) / (p + q);
    let rho = p * q / (p + q);
    let kab = (-al * be / p * (a - b).norm_squared()).exp();
    let kcd = (-ga * de / q * (c - d).norm_squared()).exp();
    let pref = 2.0 * PI.powf(2.5) / (p * q * (p + q).sqrt()) * kab * kcd;
    let mut base = vec![0.0; mmax + 1];
    boys_into(rho * (pc - qc).norm_squared(), &mut base);
    base.iter_mut().for_each(|x| *x *= pref);
    Prim { a, b, c, d, p, q, pc, qc, w, rho, base }
}

/// Unnormalized primitive `[ab|cd]` for Gaussians with the given centers and exponents.
pub fn primitive_eri(moms: [Momentum; 4], centers: [Vec3; 4], exps: [f64; 4]) -> f64 {
    let mmax = moms.iter().map(|m| m.total()).sum::<u32>() as usize;
    let pr = prepare(centers, exps, mmax);
    rec(&pr, moms[0], moms[1], moms[2], moms[3], 0, &mut HashMap::new())
}

/// Every component of a primitive class, `a`-major, sharing one memo table.
pub fn primitive_class(class: EriClass, centers: [Vec3; 4], exps: [f64; 4]) -> Vec<f64> {
    let pr = prepare(centers, exps, class.total() as usize);
    let [la, lb, lc, ld] = class.0.map(cartesian_components);
    let mut memo = HashMap::new();
    let mut out = Vec::with_capacity(class.n_components());
    for &a in &la {
        for &b in &lb {
            for &c in &lc {
                for &d in &ld {
                    out.push(rec(&pr, a, b, c, d, 0, &mut memo));
                }
            }
        }
    }
    out
}

/// Contracted `(ab|cd)` for one Cartesian component per shell.
pub fn contracted_eri(shells: [&Shell; 4], moms: [Momentum; 4]) -> f64 {
    let centers = shells.map(|s| s.center);
    let mut sum = 0.0;
    for (&ea, &da) in shells[0].exponents.iter().zip(&shells[0].coefficients) {
        for (&eb, &db) in shells[1].exponents.iter().zip(&shells[1].coefficients) {
            for (&ec, &dc) in shells[2].exponents.iter().zip(&shells[2].coefficients) {
                for (&ed, &dd) in shells[3].exponents.iter().zip(&shells[3].coefficients) {
                    sum += da * db * dc * dd * primitive_eri(moms, centers, [ea, eb, ec, ed]);
                }
            }
        }
    }
    sum
}

/// Full `N^4` ERI tensor over normalized basis functions, index `((i*N+j)*N+k)*N+l`.
pub fn eri_tensor(mol: &Molecule) -> Vec<f64> {
    let funcs = mol.expand_functions();
    let n = funcs.len();
    let mut out = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let f = [funcs[i], funcs[j], funcs[k], funcs[l]];
                    let v = contracted_eri(f.map(|f| &mol.shells[f.shell]), f.map(|f| f.momentum))
                        * f.iter().map(|f| f.scale).product::<f64>();
                    out[((i * n + j) * n + k) * n + l] = v;
                }
            }
        }
    }
    out
}

/// `2J - K` from a full ERI tensor.
pub fn dense_g(eri: &[f64], density: &DMatrix<f64>) -> DMatrix<f64> {
    let n = density.nrows();
    let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    DMatrix::from_fn(n, n, |i, j| {
        let mut g = 0.0;
        for k in 0..n {
            for l in 0..n {
                g += density[(k, l)] * (2.0 * eri[idx(i, j, k, l)] - eri[idx(i, k, j, l)]);
            }
        }
        g
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ssss_closed_form() {
        let z = Momentum::ZERO;
        let v = primitive_eri([z; 4], [Vec3::zeros(); 4], [1.0; 4]);
        assert!((v - PI.powf(2.5) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn pair_symmetry_of_a_p_integral() {
        let p = Momentum([0, 1, 0]);
        let z = Momentum::ZERO;
        let cs = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.5, 0.0), Vec3::new(0.0, -0.3, 0.7), Vec3::new(0.9, 0.1, -0.2)];
        let ex = [1.1, 0.4, 0.8, 2.0];
        let v = primitive_eri([p, z, p, z], cs, ex);
        let w = primitive_eri([z, p, z, p], [cs[1], cs[0], cs[3], cs[2]], [ex[1], ex[0], ex[3], ex[2]]);
        let u = primitive_eri([p, z, p, z], [cs[2], cs[3], cs[0], cs[1]], [ex[2], ex[3], ex[0], ex[1]]);
        assert!((v - w).abs() < 1e-13 * v.abs().max(1.0));
        assert!((v - u).abs() < 1e-13 * v.abs().max(1.0));
    }
}
