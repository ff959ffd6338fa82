//! One-electron integrals and the restricted Hartree-Fock loop.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::allocator::{tune, BlockSampleWorkload, TuningState, DEFAULT_REPEATS};
use crate::block::BlockOptions;
use crate::boys::boys_into;
use crate::compiler::CompilerConfig;
use crate::error::{Error, Result};
use crate::executor::{Executor, FockEngine, ReductionMode};
use crate::input::{cartesian_components, component_scales, Molecule, Momentum, Vec3};

/// Smallest overlap eigenvalue accepted by [`orthogonalizer`].
pub const LINEAR_DEPENDENCE_THRESHOLD: f64 = 1e-10;

/// Overlap of 1-D Cartesian Gaussians `(x-A)^i (x-B)^j` for `i <= imax`, `j <= jmax`.
fn overlap_1d(imax: usize, jmax: usize, pa: f64, pb: f64, p: f64, s00: f64) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; jmax + 1]; imax + 1];
    s[0][0] = s00;
    let h = 0.5 / p;
    for i in 0..=imax {
        for j in 0..=jmax {
            if i == 0 && j == 0 {
                continue;
            }
            s[i][j] = if i > 0 {
                let (i1, j1) = (i - 1, j);
                let mut v = pa * s[i1][j1];
                if i1 > 0 {
                    v += h * i1 as f64 * s[i1 - 1][j1];
                }
                if j1 > 0 {
                    v += h * j1 as f64 * s[i1][j1 - 1];
                }
                v
            } else {
                let j1 = j - 1;
                let mut v = pb * s[0][j1];
                if j1 > 0 {
                    v += h * j1 as f64 * s[0][j1 - 1];
                }
                v
            };
        }
    }
    s
}

struct NuclearPrim {
    pa: Vec3,
    ab: Vec3,
    pc: Vec3,
    p: f64,
    base: Vec<f64>,
}

fn nuclear_rec(n: &NuclearPrim, a: Momentum, b: Momentum, m: usize, memo: &mut HashMap<([u8; 3], [u8; 3], usize), f64>) -> f64 {
    if let Some(&v) = memo.get(&(a.0, b.0, m)) {
        return v;
    }
    let v = if let Some(i) = (0..3).find(|&i| b.get(i) > 0) {
        let b1 = b.lowered(i).unwrap();
        nuclear_rec(n, a.raised(i), b1, m, memo) + n.ab[i] * nuclear_rec(n, a, b1, m, memo)
    } else if let Some(i) = (0..3).find(|&i| a.get(i) > 0) {
        let e = a.lowered(i).unwrap();
        let mut v = n.pa[i] * nuclear_rec(n, e, b, m, memo) - n.pc[i] * nuclear_rec(n, e, b, m + 1, memo);
        if let Some(e2) = e.lowered(i) {
            v += e.get(i) as f64 / (2.0 * n.p) * (nuclear_rec(n, e2, b, m, memo) - nuclear_rec(n, e2, b, m + 1, memo));
        }
        v
    } else {
        n.base[m]
    };
    memo.insert((a.0, b.0, m), v);
    v
}

/// Overlap `S`, kinetic `T` and nuclear attraction `V` over normalized functions.
#[derive(Debug, Clone, PartialEq)]
pub struct OneElectron {
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl OneElectron {
    pub fn core_hamiltonian(&self) -> DMatrix<f64> {
        &self.t + &self.v
    }
}

pub fn one_electron(mol: &Molecule) -> OneElectron {
    let n = mol.n_functions();
    let offsets = mol.shell_offsets();
    let (mut s, mut t, mut v) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    let nuclei: Vec<(f64, Vec3)> = mol.atoms.iter().map(|a| (a.atomic_number as f64, a.position)).collect();
    for (si, sa) in mol.shells.iter().enumerate() {
        for (sj, sb) in mol.shells.iter().enumerate().take(si + 1) {
            let (ca, cb) = (cartesian_components(sa.l), cartesian_components(sb.l));
            let (fa, fb) = (component_scales(sa.l), component_scales(sb.l));
            let (la, lb) = (sa.l as usize, sb.l as usize);
            let (a, b) = (sa.center, sb.center);
            let ab = a - b;
            let mut block_s = vec![0.0; ca.len() * cb.len()];
            let mut block_t = vec![0.0; ca.len() * cb.len()];
            let mut block_v = vec![0.0; ca.len() * cb.len()];
            for (&alpha, &da) in sa.exponents.iter().zip(&sa.coefficients) {
                for (&beta, &db) in sb.exponents.iter().zip(&sb.coefficients) {
                    let p = alpha + beta;
                    let pc = (a * alpha + b * beta) / p;
                    let mu = alpha * beta / p;
                    let kab = (-mu * ab.norm_squared()).exp();
                    let s1: Vec<Vec<Vec<f64>>> = (0..3)
                        .map(|k| {
                            let s00 = (PI / p).sqrt() * (-mu * ab[k] * ab[k]).exp();
                            overlap_1d(la, lb + 2, pc[k] - a[k], pc[k] - b[k], p, s00)
                        })
                        .collect();
                    let kin_1d = |k: usize, i: usize, j: usize| {
                        let sk = &s1[k];
                        let mut x = -2.0 * beta * (2 * j + 1) as f64 * sk[i][j] + 4.0 * beta * beta * sk[i][j + 2];
                        if j >= 2 {
                            x += (j * (j - 1)) as f64 * sk[i][j - 2];
                        }
                        -0.5 * x
                    };
                    let mut prims = Vec::with_capacity(nuclei.len());
                    for &(_, c) in &nuclei {
                        let mut base = vec![0.0; la + lb + 1];
                        boys_into(p * (pc - c).norm_squared(), &mut base);
                        let pref = 2.0 * PI / p * kab;
                        base.iter_mut().for_each(|x| *x *= pref);
                        prims.push(NuclearPrim {
                            pa: pc - a,
                            ab,
                            pc: pc - c,
                            p,
                            base,
                        });
                    }
                    let mut memos: Vec<HashMap<_, _>> = vec![HashMap::new(); nuclei.len()];
                    let w = da * db;
                    for (x, ma) in ca.iter().enumerate() {
                        for (y, mb) in cb.iter().enumerate() {
                            let (i, j) = (ma.0.map(usize::from), mb.0.map(usize::from));
                            let sx = s1[0][i[0]][j[0]];
                            let sy = s1[1][i[1]][j[1]];
                            let sz = s1[2][i[2]][j[2]];
                            let idx = x * cb.len() + y;
                            block_s[idx] += w * sx * sy * sz;
                            block_t[idx] += w
                                * (kin_1d(0, i[0], j[0]) * sy * sz
                                    + sx * kin_1d(1, i[1], j[1]) * sz
                                    + sx * sy * kin_1d(2, i[2], j[2]));
                            let mut vv = 0.0;
                            for ((z, _), (np, memo)) in nuclei.iter().zip(prims.iter().zip(memos.iter_mut())) {
                                vv -= z * nuclear_rec(np, *ma, *mb, 0, memo);
                            }
                            block_v[idx] += w * vv;
                        }
                    }
                }
            }
            for (x, &fx) in fa.iter().enumerate() {
                for (y, &fy) in fb.iter().enumerate() {
                    let (mu, nu) = (offsets[si] + x, offsets[sj] + y);
                    let f = fx * fy;
                    let idx = x * cb.len() + y;
                    for (mat, blk) in [(&mut s, &block_s), (&mut t, &block_t), (&mut v, &block_v)] {
                        mat[(mu, nu)] = blk[idx] * f;
                        mat[(nu, mu)] = blk[idx] * f;
                    }
                }
            }
        }
    }
    OneElectron { s, t, v }
}

/// Symmetric eigendecomposition with eigenvalues ascending.
pub fn eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (values, vectors)
}

/// Symmetric orthogonalizer `X = S^{-1/2}`.
pub fn orthogonalizer(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = eigh(s);
    if let Some(&low) = vals.iter().find(|&&v| v < LINEAR_DEPENDENCE_THRESHOLD) {
        return Err(Error::LinearDependence(low));
    }
    let inv_sqrt = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Ok(&vecs * inv_sqrt * vecs.transpose())
}

/// `D = C_occ C_occ^T` over the first `n_occ` columns.
pub fn density_from_mos(c: &DMatrix<f64>, n_occ: usize) -> Result<DMatrix<f64>> {
    if n_occ > c.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{n_occ} occupied orbitals requested from {} MOs",
            c.ncols()
        )));
    }
    let occ = c.columns(0, n_occ);
    Ok(occ * occ.transpose())
}

/// Orbital energies and coefficients solving `F C = S C e` through `X`.
fn roothaan(f: &DMatrix<f64>, x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let fp = x.transpose() * f * x;
    let (e, cp) = eigh(&fp);
    (e, x * cp)
}

struct Diis {
    depth: usize,
    focks: Vec<DMatrix<f64>>,
    errors: Vec<DMatrix<f64>>,
}

impl Diis {
    fn push(&mut self, f: DMatrix<f64>, err: DMatrix<f64>) {
        if self.focks.len() == self.depth {
            self.focks.remove(0);
            self.errors.remove(0);
        }
        self.focks.push(f);
        self.errors.push(err);
    }

    fn extrapolate(&mut self) -> Option<DMatrix<f64>> {
        while self.focks.len() >= 2 {
            let k = self.focks.len();
            let mut b = DMatrix::from_element(k + 1, k + 1, -1.0);
            b[(k, k)] = 0.0;
            for i in 0..k {
                for j in 0..k {
                    b[(i, j)] = self.errors[i].dot(&self.errors[j]);
                }
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs[k] = -1.0;
            if let Some(c) = b.lu().solve(&rhs).filter(|c| c.iter().all(|x| x.is_finite())) {
                let mut f = DMatrix::zeros(self.focks[0].nrows(), self.focks[0].ncols());
                for (ci, fi) in c.iter().zip(&self.focks) {
                    f += fi * *ci;
                }
                return Some(f);
            }
            self.focks.remove(0);
            self.errors.remove(0);
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub sample_blocks: usize,
    pub repeats: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            sample_blocks: 4,
            repeats: DEFAULT_REPEATS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScfOptions {
    /// Convergence threshold on the largest density change.
    pub conv: f64,
    pub max_iter: usize,
    /// Fraction of the previous density mixed into each new one.
    pub damping: Option<f64>,
    pub diis: bool,
    pub diis_depth: usize,
    pub threads: usize,
    pub mode: ReductionMode,
    pub blocks: BlockOptions,
    pub compiler: CompilerConfig,
    /// Tune granularity on the first iteration's density.
    pub tune: Option<TuneOptions>,
}

impl Default for ScfOptions {
    fn default() -> Self {
        ScfOptions {
            conv: 1e-6,
            max_iter: 99,
            damping: Some(0.3),
            diis: false,
            diis_depth: 6,
            threads: 1,
            mode: ReductionMode::Concurrent,
            blocks: BlockOptions::default(),
            compiler: CompilerConfig::default(),
            tune: None,
        }
    }
}

impl ScfOptions {
    fn validate(&self) -> Result<()> {
        if !(self.conv > 0.0 && self.conv.is_finite()) {
            return Err(Error::InvalidArgument(format!("convergence threshold {} must be positive", self.conv)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if let Some(d) = self.damping {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!("damping {d} outside [0, 1)")));
            }
        }
        if self.diis && self.diis_depth < 2 {
            return Err(Error::InvalidArgument("DIIS depth must be at least 2".into()));
        }
        Ok(())
    }
}

/// Snapshot after an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScfState {
    pub iteration: usize,
    pub energy: f64,
    pub density: DMatrix<f64>,
    /// Largest absolute density change in this iteration.
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScfTiming {
    pub total_s: f64,
    pub setup_s: f64,
    pub fock_s: f64,
    pub tune_s: f64,
}

#[derive(Debug, Clone)]
pub struct ScfResult {
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub per_iteration_energies: Vec<f64>,
    pub nuclear_repulsion: f64,
    pub energy_change: f64,
    pub orbital_energies: DVector<f64>,
    pub state: ScfState,
    pub overlap: DMatrix<f64>,
    pub timing: ScfTiming,
    pub tuning: Option<TuningState>,
    pub workload: Vec<(String, usize)>,
}

/// `sum_{mu nu} D (H + F)`.
pub fn electronic_energy(d: &DMatrix<f64>, h: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    d.component_mul(&(h + f)).sum()
}

pub fn scf_iterate(mol: &Molecule, options: &ScfOptions) -> Result<ScfResult> {
    options.validate()?;
    let start = Instant::now();
    let n_occ = mol.n_occupied()?;
    let ints = one_electron(mol);
    let h = ints.core_hamiltonian();
    let x = orthogonalizer(&ints.s)?;
    let mut engine = FockEngine::new(mol, options.blocks, &options.compiler)?;
    let executor = Executor::new(options.threads)?;
    let e_nuc = mol.nuclear_repulsion();
    let mut timing = ScfTiming {
        setup_s: start.elapsed().as_secs_f64(),
        ..Default::default()
    };

    let (mut eps, c) = roothaan(&h, &x);
    let mut d = density_from_mos(&c, n_occ)?;
    let mut diis = Diis {
        depth: options.diis_depth,
        focks: Vec::new(),
        errors: Vec::new(),
    };
    let mut energies = Vec::new();
    let mut tuning = None;
    let mut converged = false;
    let mut delta = f64::INFINITY;

    for iter in 1..=options.max_iter {
        if iter == 1 {
            if let Some(t) = options.tune {
                let t0 = Instant::now();
                let mut w = BlockSampleWorkload::new(&mut engine, &executor, &d, t.sample_blocks)?;
                w.mode = options.mode;
                let initial = w.engine.workload.clone();
                let out = tune(&mut w, initial, t.repeats)?;
                engine.workload = out.config;
                tuning = Some(out.state);
                timing.tune_s = t0.elapsed().as_secs_f64();
            }
        }
        let t0 = Instant::now();
        let g = executor.build_g(&engine, &d, options.mode)?;
        timing.fock_s += t0.elapsed().as_secs_f64();
        let f = &h + g;
        let energy = electronic_energy(&d, &h, &f) + e_nuc;
        if !energy.is_finite() {
            return Err(Error::Divergence(iter));
        }
        energies.push(energy);

        let f_solve = if options.diis {
            let fds = &f * &d * &ints.s;
            let err = x.transpose() * (&fds - fds.transpose()) * &x;
            diis.push(f.clone(), err);
            diis.extrapolate().unwrap_or(f)
        } else {
            f
        };
        let (e, c) = roothaan(&f_solve, &x);
        eps = e;
        let mut d_new = density_from_mos(&c, n_occ)?;
        if let (Some(a), false) = (options.damping, options.diis) {
            d_new = &d_new * (1.0 - a) + &d * a;
        }
        delta = (&d_new - &d).amax();
        d = d_new;
        if delta < options.conv {
            converged = true;
            break;
        }
    }

    let n = energies.len();
    let energy = energies[n - 1];
    timing.total_s = start.elapsed().as_secs_f64();
    Ok(ScfResult {
        energy,
        iterations: n,
        converged,
        energy_change: if n > 1 { energy - energies[n - 2] } else { f64::NAN },
        per_iteration_energies: energies,
        nuclear_repulsion: e_nuc,
        orbital_energies: eps,
        state: ScfState {
            iteration: n,
            energy,
            density: d,
            delta,
        },
        overlap: ints.s,
        timing,
        tuning,
        workload: engine.workload.iter().map(|(c, g)| (c.to_string(), g)).collect(),
    })
}
