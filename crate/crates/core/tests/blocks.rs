mod common;

use std::collections::HashMap;

use eri_core::block::{BlockOptions, BlockSet};
use eri_core::compiler::EriClass;
use eri_core::input::{Molecule, Shell, Vec3};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_shells(n: usize, seed: u64) -> Vec<Shell> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let c = Vec3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
            Shell::normalized(c, rng.gen_range(0..=2), vec![rng.gen_range(0.2..5.0)], vec![1.0]).unwrap()
        })
        .collect()
}

/// Each canonical shell quartet, found by brute force over all pairs of pairs,
/// appears in exactly one block, and that block's class is the quartet's.
fn check_coverage(shells: &[Shell], tile: usize) {
    let set = BlockSet::new(shells, BlockOptions { tile_size: tile, ..Default::default() }).unwrap();
    let mut seen: HashMap<(usize, usize, usize, usize), usize> = HashMap::new();
    for block in set.blocks() {
        let bra = &set.tiles[block.bra_tile];
        let ket = &set.tiles[block.ket_tile];
        assert_eq!(EriClass([bra.class.0, bra.class.1, ket.class.0, ket.class.1]), block.class);
        for (p, q) in block.quadruples(&set.tiles) {
            let (a, b) = (set.pair(p), set.pair(q));
            assert_eq!(EriClass([shells[a.i].l, shells[a.j].l, shells[b.i].l, shells[b.j].l]), block.class);
            *seen.entry((a.i, a.j, b.i, b.j)).or_default() += 1;
        }
    }
    let s = shells.len();
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|i| (i..s).map(move |j| (i, j))).collect();
    let mut expected = 0;
    for (x, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[..=x] {
            // Either orientation of a pair of pairs is the same canonical quartet.
            let hits = seen.get(&(i, j, k, l)).copied().unwrap_or(0)
                + if (i, j) != (k, l) { seen.get(&(k, l, i, j)).copied().unwrap_or(0) } else { 0 };
            assert_eq!(hits, 1, "quartet ({i}{j}|{k}{l})");
            expected += 1;
        }
    }
    assert_eq!(seen.len(), expected);
}

#[test]
fn water_quartets_covered_once() {
    check_coverage(&common::water().shells, 2);
}

#[test]
fn random_systems_up_to_twelve_shells() {
    for s in 1..=12 {
        for tile in [1, 2, 3, 5, 32] {
            check_coverage(&random_shells(s, s as u64), tile);
        }
    }
}

#[test]
fn pair_store_grows_quadratically() {
    let sizes = [5usize, 10, 20, 40];
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&s| {
            let mut mol = Molecule::new(vec![]);
            mol.shells = random_shells(s, 7);
            let set = BlockSet::new(&mol.shells, BlockOptions::default()).unwrap();
            ((s as f64).ln(), (set.store.bytes() as f64).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 2.0).abs() <= 0.2, "fit exponent {slope}");
}

proptest! {
    #[test]
    fn coverage_property(s in 1usize..9, tile in 1usize..6, seed in any::<u64>()) {
        check_coverage(&random_shells(s, seed), tile);
    }
}
