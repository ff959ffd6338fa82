//! Plan evaluation over quadruple blocks and two-electron Fock accumulation.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::WorkloadConfig;
use crate::block::{BlockOptions, BlockSet, PrimitivePair, QuadBlock, ShellPair};
use crate::boys::boys_into;
use crate::compiler::{compile, compile_classes, CompilerConfig, EriClass, ExecutionPlan, Kind, PlanSet, N_KINDS};
use crate::error::{Error, Result};
use crate::input::{component_scales, Molecule, Shell};

/// Numeric values of every symbolic coefficient kind for one primitive quadruple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryBinding {
    pub values: [f64; N_KINDS],
    /// `2 pi^(5/2) / (p q sqrt(p+q)) K_ab K_cd`
    pub prefactor: f64,
    /// Boys argument `rho |P-Q|^2`.
    pub boys_t: f64,
}

impl GeometryBinding {
    pub fn new(bra: &ShellPair, pb: &PrimitivePair, ket: &ShellPair, pk: &PrimitivePair) -> Self {
        let (p, q) = (pb.p, pk.p);
        let pq = p + q;
        let w = (pb.center * p + pk.center * q) / pq;
        let rho = p * q / pq;
        let mut v = [0.0; N_KINDS];
        v[Kind::One.index()] = 1.0;
        for i in 0..3u8 {
            let k = i as usize;
            v[Kind::PA(i).index()] = pb.center[k] - bra.a[k];
            v[Kind::PB(i).index()] = pb.center[k] - bra.b[k];
            v[Kind::WP(i).index()] = w[k] - pb.center[k];
            v[Kind::WQ(i).index()] = w[k] - pk.center[k];
            v[Kind::QC(i).index()] = pk.center[k] - ket.a[k];
            v[Kind::QD(i).index()] = pk.center[k] - ket.b[k];
            v[Kind::AB(i).index()] = bra.a[k] - bra.b[k];
            v[Kind::CD(i).index()] = ket.a[k] - ket.b[k];
        }
        v[Kind::Inv2p.index()] = 0.5 / p;
        v[Kind::Inv2q.index()] = 0.5 / q;
        v[Kind::RhoOverP.index()] = q / pq;
        v[Kind::RhoOverQ.index()] = p / pq;
        v[Kind::Inv2pq.index()] = 0.5 / pq;
        GeometryBinding {
            values: v,
            prefactor: 2.0 * PI.powf(2.5) / (p * q * pq.sqrt()) * pb.kappa * pk.kappa,
            boys_t: rho * (pb.center - pk.center).norm_squared(),
        }
    }

    /// Contracted-level kinds (`AB`, `CD`) only.
    fn pair_values(bra: &ShellPair, ket: &ShellPair) -> [f64; N_KINDS] {
        let mut v = [0.0; N_KINDS];
        v[Kind::One.index()] = 1.0;
        for i in 0..3u8 {
            v[Kind::AB(i).index()] = bra.a[i as usize] - bra.b[i as usize];
            v[Kind::CD(i).index()] = ket.a[i as usize] - ket.b[i as usize];
        }
        v
    }
}

/// Per-worker registers.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    prim: Vec<f64>,
    cont: Vec<f64>,
    prim_coefs: Vec<f64>,
    cont_coefs: Vec<f64>,
    base: Vec<f64>,
    out: Vec<f64>,
}

impl Scratch {
    /// Components written by the last [`eval_quartet`].
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

/// Contracted `(ab|cd)` over the primitive tasks `tasks` of one quartet.
///
/// Tasks are numbered bra-primitive-major. Results land in `scratch.out`,
/// unnormalized, `a`-major Cartesian order.
pub fn eval_quartet(plan: &ExecutionPlan, bra: &ShellPair, ket: &ShellPair, tasks: Range<usize>, scratch: &mut Scratch) {
    scratch.prim.resize(plan.primitive_slots as usize, 0.0);
    scratch.cont.clear();
    scratch.cont.resize(plan.contracted_slots as usize, 0.0);
    scratch.base.resize(plan.max_m as usize + 1, 0.0);
    let nk = ket.prims.len();
    for t in tasks {
        let (pb, pk) = (&bra.prims[t / nk], &ket.prims[t % nk]);
        let bind = GeometryBinding::new(bra, pb, ket, pk);
        boys_into(bind.boys_t, &mut scratch.base);
        for b in &mut scratch.base {
            *b *= bind.prefactor;
        }
        ExecutionPlan::bind_coefs(&plan.primitive_coefs, &bind.values, &mut scratch.prim_coefs);
        plan.run_primitive(&scratch.prim_coefs, &scratch.base, &mut scratch.prim);
        plan.gather_into(pb.coef * pk.coef, &scratch.prim, &mut scratch.cont);
    }
    let pair_values = GeometryBinding::pair_values(bra, ket);
    ExecutionPlan::bind_coefs(&plan.contracted_coefs, &pair_values, &mut scratch.cont_coefs);
    plan.run_contracted(&scratch.cont_coefs, &mut scratch.cont);
    scratch.out.clear();
    scratch.out.extend(plan.outputs.iter().map(|&o| scratch.cont[o as usize]));
}

/// Contracted, normalized integrals for arbitrary shell quartets, compiling
/// each class on first use.
#[derive(Debug, Clone, Default)]
pub struct QuartetEvaluator {
    pub config: CompilerConfig,
    pub plans: PlanSet,
    scratch: Scratch,
}

impl QuartetEvaluator {
    pub fn new(config: CompilerConfig) -> Self {
        QuartetEvaluator {
            config,
            ..Default::default()
        }
    }

    /// Unnormalized components, `a`-major, without per-component scales.
    pub fn raw(&mut self, shells: [&Shell; 4]) -> &[f64] {
        let class = EriClass(shells.map(|s| s.l));
        let config = &self.config;
        let plan = self.plans.plans.entry(class).or_insert_with(|| compile(class, config));
        let bra = ShellPair::new(0, 1, shells[0], shells[1]);
        let ket = ShellPair::new(2, 3, shells[2], shells[3]);
        eval_quartet(plan, &bra, &ket, 0..bra.prims.len() * ket.prims.len(), &mut self.scratch);
        &self.scratch.out
    }

    /// Normalized components, `a`-major.
    pub fn eval(&mut self, shells: [&Shell; 4]) -> Vec<f64> {
        let scales = shells.map(|s| component_scales(s.l));
        let mut out = self.raw(shells).to_vec();
        let mut idx = 0;
        for sa in &scales[0] {
            for sb in &scales[1] {
                for sc in &scales[2] {
                    for sd in &scales[3] {
                        out[idx] *= sa * sb * sc * sd;
                        idx += 1;
                    }
                }
            }
        }
        out
    }
}

/// One-off [`QuartetEvaluator::eval`].
pub fn shell_quartet(shells: [&Shell; 4], config: &CompilerConfig) -> Vec<f64> {
    QuartetEvaluator::new(*config).eval(shells)
}

/// Target of symmetric two-electron contributions.
pub trait Accumulator {
    fn add(&mut self, i: usize, j: usize, v: f64);
}

impl Accumulator for DMatrix<f64> {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.nrows();
        self.as_mut_slice()[i + j * n] += v;
    }
}

/// Single shared matrix updated with compare-and-swap adds.
pub struct AtomicMatrix {
    n: usize,
    data: Vec<AtomicU64>,
}

impl AtomicMatrix {
    pub fn zeros(n: usize) -> Self {
        AtomicMatrix {
            n,
            data: (0..n * n).map(|_| AtomicU64::new(0f64.to_bits())).collect(),
        }
    }

    pub fn fetch_add(&self, i: usize, j: usize, v: f64) {
        let cell = &self.data[i * self.n + j];
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let new = (f64::from_bits(cur) + v).to_bits();
            match cell.compare_exchange_weak(cur, new, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => break,
                Err(x) => cur = x,
            }
        }
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        let n = self.n;
        let vals: Vec<f64> = self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        DMatrix::from_row_slice(n, n, &vals)
    }
}

impl Accumulator for &AtomicMatrix {
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.fetch_add(i, j, v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReductionMode {
    /// Per-worker private partial matrices merged at the end.
    #[default]
    Concurrent,
    /// One shared matrix updated atomically by every worker.
    Contended,
    /// Per-block partials merged sequentially in block order; bitwise reproducible.
    Deterministic,
}

/// Everything a Fock build needs besides the density: shells, blocks,
/// compiled plans and the per-class granularity.
#[derive(Debug, Clone)]
pub struct FockEngine {
    pub shells: Vec<Shell>,
    pub offsets: Vec<usize>,
    pub scales: Vec<f64>,
    pub blocks: BlockSet,
    pub block_list: Vec<QuadBlock>,
    pub plans: PlanSet,
    pub workload: WorkloadConfig,
}

impl FockEngine {
    pub fn new(mol: &Molecule, options: BlockOptions, config: &CompilerConfig) -> Result<Self> {
        let blocks = BlockSet::new(&mol.shells, options)?;
        let plans = compile_classes(blocks.classes(), config);
        Self::with_plans(mol, blocks, plans)
    }

    pub fn with_plans(mol: &Molecule, blocks: BlockSet, plans: PlanSet) -> Result<Self> {
        let block_list: Vec<QuadBlock> = blocks.blocks().collect();
        if let Some(b) = block_list.iter().find(|b| !plans.plans.contains_key(&b.class)) {
            return Err(Error::MissingPlan(b.class));
        }
        Ok(FockEngine {
            shells: mol.shells.clone(),
            offsets: mol.shell_offsets(),
            scales: mol.expand_functions().iter().map(|f| f.scale).collect(),
            blocks,
            block_list,
            plans,
            workload: WorkloadConfig::default(),
        })
    }

    pub fn n_functions(&self) -> usize {
        self.scales.len()
    }

    /// Primitive tasks in a block.
    pub fn block_tasks(&self, block: &QuadBlock) -> usize {
        let t = &self.blocks.tiles;
        let prims = |i: usize| self.blocks.pair(i).prims.len();
        block.quadruples(t).map(|(p, q)| prims(p) * prims(q)).sum()
    }

    /// Granularity used for `class`, clamped to the block.
    fn granularity(&self, class: EriClass, tasks: usize) -> usize {
        self.workload.get(class).clamp(1, tasks.max(1))
    }

    /// Evaluates one block and folds its contributions into `acc`.
    ///
    /// Contributions are the unsymmetrized `G` terms; callers symmetrize with
    /// `(G + G^T)/2` after all blocks are in.
    pub fn eval_block<A: Accumulator>(
        &self,
        block: &QuadBlock,
        plan: &ExecutionPlan,
        density: &DMatrix<f64>,
        acc: &mut A,
    ) -> Result<()> {
        if plan.class != block.class {
            return Err(Error::ClassMismatch {
                block: block.class,
                plan: plan.class,
            });
        }
        let layout = BlockLayout::new(self, block);
        let g = self.granularity(block.class, layout.total());
        let mut scratch = Scratch::default();
        for w in 0..layout.n_items(g) {
            self.eval_item(&layout, plan, w, g, density, acc, &mut scratch);
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_item<A: Accumulator>(
        &self,
        layout: &BlockLayout,
        plan: &ExecutionPlan,
        item: usize,
        g: usize,
        density: &DMatrix<f64>,
        acc: &mut A,
        scratch: &mut Scratch,
    ) {
        let start = item * g;
        let end = (start + g).min(layout.total());
        let mut t = start;
        let mut q = layout.prefix.partition_point(|&x| x <= t) - 1;
        while t < end {
            let (p1, p2) = layout.quads[q];
            let (lo, hi) = (layout.prefix[q], layout.prefix[q + 1]);
            let stop = end.min(hi);
            let (bra, ket) = (self.blocks.pair(p1), self.blocks.pair(p2));
            eval_quartet(plan, bra, ket, t - lo..stop - lo, scratch);
            self.digest(bra, ket, p1 == p2, &scratch.out, density, acc);
            t = stop;
            q += 1;
        }
    }

    /// Symmetry-weighted Coulomb/exchange contributions of one canonical quartet.
    fn digest<A: Accumulator>(
        &self,
        bra: &ShellPair,
        ket: &ShellPair,
        same_pair: bool,
        values: &[f64],
        d: &DMatrix<f64>,
        acc: &mut A,
    ) {
        let deg = (if bra.i == bra.j { 1.0 } else { 2.0 })
            * (if ket.i == ket.j { 1.0 } else { 2.0 })
            * (if same_pair { 1.0 } else { 2.0 });
        let n = [bra.i, bra.j, ket.i, ket.j].map(|s| self.shells[s].n_functions());
        let o = [bra.i, bra.j, ket.i, ket.j].map(|s| self.offsets[s]);
        let dim = d.nrows();
        let ds = d.as_slice();
        let dv = |i: usize, j: usize| ds[i + j * dim];
        let sc = &self.scales;
        let mut idx = 0;
        for a in o[0]..o[0] + n[0] {
            let wa = deg * sc[a];
            for b in o[1]..o[1] + n[1] {
                let wab = wa * sc[b];
                for c in o[2]..o[2] + n[2] {
                    let wabc = wab * sc[c];
                    for (e, &se) in sc.iter().enumerate().skip(o[3]).take(n[3]) {
                        let v = values[idx] * wabc * se;
                        idx += 1;
                        acc.add(a, b, dv(c, e) * v);
                        acc.add(c, e, dv(a, b) * v);
                        let x = 0.25 * v;
                        acc.add(a, c, -dv(b, e) * x);
                        acc.add(b, e, -dv(a, c) * x);
                        acc.add(a, e, -dv(b, c) * x);
                        acc.add(b, c, -dv(a, e) * x);
                    }
                }
            }
        }
    }
}

/// Quadruple list and cumulative task counts of one block, built on demand.
struct BlockLayout {
    quads: Vec<(usize, usize)>,
    prefix: Vec<usize>,
}

impl BlockLayout {
    fn new(engine: &FockEngine, block: &QuadBlock) -> Self {
        let quads: Vec<(usize, usize)> = block.quadruples(&engine.blocks.tiles).collect();
        let mut prefix = Vec::with_capacity(quads.len() + 1);
        prefix.push(0);
        let mut acc = 0;
        for &(p, q) in &quads {
            acc += engine.blocks.pair(p).prims.len() * engine.blocks.pair(q).prims.len();
            prefix.push(acc);
        }
        BlockLayout { quads, prefix }
    }

    fn total(&self) -> usize {
        *self.prefix.last().unwrap()
    }

    fn n_items(&self, g: usize) -> usize {
        self.total().div_ceil(g)
    }
}

fn symmetrize(g: DMatrix<f64>) -> DMatrix<f64> {
    (&g + g.transpose()) * 0.5
}

/// Worker pool evaluating Fock builds.
pub struct Executor {
    pool: rayon::ThreadPool,
    threads: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads).finish()
    }
}

const DETERMINISTIC_CHUNK: usize = 64;

impl Executor {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::InvalidArgument("thread count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Executor { pool, threads })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// `G = 2J - K` over every block of the engine.
    pub fn build_g(&self, engine: &FockEngine, density: &DMatrix<f64>, mode: ReductionMode) -> Result<DMatrix<f64>> {
        self.build_g_blocks(engine, &engine.block_list, density, mode)
    }

    /// Unsymmetrized contributions of a subset of blocks.
    pub fn build_g_blocks(
        &self,
        engine: &FockEngine,
        blocks: &[QuadBlock],
        density: &DMatrix<f64>,
        mode: ReductionMode,
    ) -> Result<DMatrix<f64>> {
        let n = engine.n_functions();
        if density.nrows() != n || density.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "density is {}x{}, basis has {n} functions",
                density.nrows(),
                density.ncols()
            )));
        }
        for b in blocks {
            engine.plans.get(b.class)?;
        }
        let g = self.pool.install(|| match mode {
            ReductionMode::Deterministic => {
                let mut g = DMatrix::zeros(n, n);
                for chunk in blocks.chunks(DETERMINISTIC_CHUNK) {
                    let partials: Vec<DMatrix<f64>> = chunk
                        .par_iter()
                        .map(|b| {
                            let mut part = DMatrix::zeros(n, n);
                            let plan = engine.plans.get(b.class).expect("checked above");
                            engine.eval_block(b, plan, density, &mut part).expect("plan matches");
                            part
                        })
                        .collect();
                    for p in partials {
                        g += p;
                    }
                }
                g
            }
            ReductionMode::Concurrent => work_items(engine, blocks)
                .fold(
                    || (DMatrix::zeros(n, n), Scratch::default()),
                    |(mut acc, mut scratch), (layout, plan, w, gran)| {
                        engine.eval_item(&layout, plan, w, gran, density, &mut acc, &mut scratch);
                        (acc, scratch)
                    },
                )
                .map(|(acc, _)| acc)
                .reduce(|| DMatrix::zeros(n, n), |a, b| a + b),
            ReductionMode::Contended => {
                let shared = AtomicMatrix::zeros(n);
                work_items(engine, blocks).for_each_init(Scratch::default, |scratch, (layout, plan, w, gran)| {
                    engine.eval_item(&layout, plan, w, gran, density, &mut &shared, scratch);
                });
                shared.into_matrix()
            }
        });
        Ok(symmetrize(g))
    }
}

fn work_items<'a>(
    engine: &'a FockEngine,
    blocks: &'a [QuadBlock],
) -> impl ParallelIterator<Item = (Arc<BlockLayout>, &'a ExecutionPlan, usize, usize)> + 'a {
    blocks.par_iter().flat_map(move |b| {
        let layout = Arc::new(BlockLayout::new(engine, b));
        let plan = engine.plans.get(b.class).expect("checked by caller");
        let g = engine.granularity(b.class, layout.total());
        let items = layout.n_items(g);
        (0..items).into_par_iter().map(move |w| (layout.clone(), plan, w, g))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::{parse_xyz, BasisSet, Vec3};

    #[test]
    fn ssss_at_one_center() {
        let s = Shell::new(Vec3::zeros(), 0, vec![1.0], vec![1.0]).unwrap();
        let v = shell_quartet([&s, &s, &s, &s], &CompilerConfig::default());
        assert!((v[0] - PI.powf(2.5) / 4.0).abs() < 1e-12);
        assert!((v[0] - 4.373354).abs() < 1e-6);
    }

    fn water_engine() -> (Molecule, FockEngine) {
        let mol = parse_xyz("3\n\nO 0 0 0.1173\nH 0 0.7572 -0.4692\nH 0 -0.7572 -0.4692")
            .unwrap()
            .attach_basis(&BasisSet::sto3g())
            .unwrap();
        let engine = FockEngine::new(&mol, BlockOptions { tile_size: 4, ..Default::default() }, &CompilerConfig::default()).unwrap();
        (mol, engine)
    }

    #[test]
    fn zero_density_leaves_accumulator_unchanged() {
        let (_, engine) = water_engine();
        let d = DMatrix::zeros(7, 7);
        let mut acc = DMatrix::from_element(7, 7, 0.5);
        let b = engine.block_list[0];
        engine.eval_block(&b, engine.plans.get(b.class).unwrap(), &d, &mut acc).unwrap();
        assert!(acc.iter().all(|&x| x == 0.5));
        let g = Executor::new(1).unwrap().build_g(&engine, &d, ReductionMode::Concurrent).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn class_mismatch_is_an_error() {
        let (_, engine) = water_engine();
        let d = DMatrix::zeros(7, 7);
        let b = engine.block_list[0];
        let wrong = compile(EriClass([2, 2, 2, 2]), &CompilerConfig::default());
        let err = engine.eval_block(&b, &wrong, &d, &mut DMatrix::zeros(7, 7)).unwrap_err();
        assert!(matches!(err, Error::ClassMismatch { .. }));
    }

    #[test]
    fn missing_plan_is_an_error() {
        let (mol, engine) = water_engine();
        let plans = compile_classes([EriClass([0, 0, 0, 0])], &CompilerConfig::default());
        assert!(matches!(
            FockEngine::with_plans(&mol, engine.blocks.clone(), plans),
            Err(Error::MissingPlan(_))
        ));
    }

    #[test]
    fn atomic_matrix_adds() {
        let m = AtomicMatrix::zeros(2);
        m.fetch_add(0, 1, 1.5);
        m.fetch_add(0, 1, 2.0);
        let d = m.into_matrix();
        assert_eq!(d[(0, 1)], 3.5);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(Executor::new(0).is_err());
    }
}
