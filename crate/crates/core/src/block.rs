//! Shell-pair store, class-homogeneous pair tiles and quadruple blocks.
//!
//! Only pairs are materialized. A [`QuadBlock`] names two tiles; its
//! quadruples are enumerated on demand, so memory stays quadratic in the
//! number of shells.

use std::ops::Range;

use crate::compiler::EriClass;
use crate::error::{Error, Result};
use crate::input::{Shell, Vec3};

pub const DEFAULT_TILE_SIZE: usize = 32;
pub const DEFAULT_SCREEN_THRESHOLD: f64 = 1e-14;

/// Data for one primitive pair `(alpha_k, beta_l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitivePair {
    pub alpha: f64,
    pub beta: f64,
    /// `alpha + beta`.
    pub p: f64,
    /// Gaussian product center.
    pub center: Vec3,
    /// `exp(-alpha beta |A-B|^2 / p)`.
    pub kappa: f64,
    /// Product of the two contraction coefficients.
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellPair {
    pub i: usize,
    pub j: usize,
    pub class: (u32, u32),
    pub a: Vec3,
    pub b: Vec3,
    pub prims: Vec<PrimitivePair>,
}

impl ShellPair {
    pub fn new(i: usize, j: usize, si: &Shell, sj: &Shell) -> Self {
        let (a, b) = (si.center, sj.center);
        let ab2 = (a - b).norm_squared();
        let mut prims = Vec::with_capacity(si.k() * sj.k());
        for (&alpha, &ci) in si.exponents.iter().zip(&si.coefficients) {
            for (&beta, &cj) in sj.exponents.iter().zip(&sj.coefficients) {
                let p = alpha + beta;
                prims.push(PrimitivePair {
                    alpha,
                    beta,
                    p,
                    center: (a * alpha + b * beta) / p,
                    kappa: (-alpha * beta * ab2 / p).exp(),
                    coef: ci * cj,
                });
            }
        }
        ShellPair {
            i,
            j,
            class: (si.l, sj.l),
            a,
            b,
            prims,
        }
    }

    fn sort_key(&self) -> (u32, u32, u32) {
        (self.class.0 + self.class.1, self.class.0, self.class.1)
    }

    fn heap_bytes(&self) -> usize {
        self.prims.capacity() * std::mem::size_of::<PrimitivePair>()
    }
}

/// Every canonical shell pair, sorted by class.
#[derive(Debug, Clone, Default)]
pub struct PairStore {
    pub pairs: Vec<ShellPair>,
}

impl PairStore {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Bytes held by the store, primitive data included.
    pub fn bytes(&self) -> usize {
        std::mem::size_of::<Self>()
            + self.pairs.capacity() * std::mem::size_of::<ShellPair>()
            + self.pairs.iter().map(ShellPair::heap_bytes).sum::<usize>()
    }
}

/// All `S(S+1)/2` pairs `i <= j`, sorted ascending by `(L_i+L_j, L_i, L_j)`.
pub fn build_pairs(shells: &[Shell]) -> PairStore {
    let mut pairs = Vec::with_capacity(shells.len() * (shells.len() + 1) / 2);
    for (i, si) in shells.iter().enumerate() {
        for (j, sj) in shells.iter().enumerate().skip(i) {
            pairs.push(ShellPair::new(i, j, si, sj));
        }
    }
    pairs.sort_by_key(ShellPair::sort_key);
    PairStore { pairs }
}

/// Drops primitive pairs with `|coef| * kappa < threshold`, then pairs left empty.
pub fn screen_pairs(store: &mut PairStore, threshold: f64) {
    for pair in &mut store.pairs {
        pair.prims.retain(|pp| pp.coef.abs() * pp.kappa >= threshold);
    }
    store.pairs.retain(|p| !p.prims.is_empty());
}

/// A run of consecutive same-class pairs in the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTile {
    pub class: (u32, u32),
    pub pairs: Range<usize>,
}

impl PairTile {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn tile_pairs(store: &PairStore, tile_size: usize) -> Result<Vec<PairTile>> {
    if tile_size < 1 {
        return Err(Error::InvalidArgument("tile size must be at least 1".into()));
    }
    let mut tiles = Vec::new();
    let mut start = 0;
    while start < store.pairs.len() {
        let class = store.pairs[start].class;
        let mut end = start + 1;
        while end < store.pairs.len() && end - start < tile_size && store.pairs[end].class == class {
            end += 1;
        }
        tiles.push(PairTile {
            class,
            pairs: start..end,
        });
        start = end;
    }
    Ok(tiles)
}

/// Two tiles permuted into a block of quadruples sharing one ERI class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadBlock {
    pub bra_tile: usize,
    pub ket_tile: usize,
    pub class: EriClass,
}

impl QuadBlock {
    /// Canonical `(bra pair, ket pair)` index pairs with `bra <= ket`.
    pub fn quadruples<'a>(&self, tiles: &'a [PairTile]) -> impl Iterator<Item = (usize, usize)> + 'a {
        let bra = tiles[self.bra_tile].pairs.clone();
        let ket = tiles[self.ket_tile].pairs.clone();
        let diagonal = self.bra_tile == self.ket_tile;
        bra.flat_map(move |p| {
            let ket = if diagonal { p..ket.end } else { ket.clone() };
            ket.map(move |q| (p, q))
        })
    }

    pub fn n_quadruples(&self, tiles: &[PairTile]) -> usize {
        let (m, n) = (tiles[self.bra_tile].len(), tiles[self.ket_tile].len());
        if self.bra_tile == self.ket_tile {
            m * (m + 1) / 2
        } else {
            m * n
        }
    }
}

/// Streams blocks for every tile pair `t_i <= t_j`.
pub fn make_blocks(tiles: &[PairTile]) -> impl Iterator<Item = QuadBlock> + '_ {
    (0..tiles.len()).flat_map(move |i| {
        (i..tiles.len()).map(move |j| {
            let (a, b) = tiles[i].class;
            let (c, d) = tiles[j].class;
            QuadBlock {
                bra_tile: i,
                ket_tile: j,
                class: EriClass([a, b, c, d]),
            }
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockOptions {
    pub tile_size: usize,
    /// `None` disables primitive-pair screening.
    pub screen_threshold: Option<f64>,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            tile_size: DEFAULT_TILE_SIZE,
            screen_threshold: None,
        }
    }
}

/// Pair store plus its tiling; the input to the executor.
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub store: PairStore,
    pub tiles: Vec<PairTile>,
}

impl BlockSet {
    pub fn new(shells: &[Shell], options: BlockOptions) -> Result<Self> {
        let mut store = build_pairs(shells);
        if let Some(t) = options.screen_threshold {
            screen_pairs(&mut store, t);
        }
        let tiles = tile_pairs(&store, options.tile_size)?;
        Ok(BlockSet { store, tiles })
    }

    pub fn blocks(&self) -> impl Iterator<Item = QuadBlock> + '_ {
        make_blocks(&self.tiles)
    }

    /// Distinct ERI classes in block order.
    pub fn classes(&self) -> Vec<EriClass> {
        let mut seen = std::collections::BTreeSet::new();
        self.blocks().map(|b| b.class).filter(|c| seen.insert(*c)).collect()
    }

    pub fn pair(&self, index: usize) -> &ShellPair {
        &self.store.pairs[index]
    }
}
