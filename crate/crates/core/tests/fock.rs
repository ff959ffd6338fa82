mod common;

use eri_core::block::BlockOptions;
use eri_core::compiler::CompilerConfig;
use eri_core::executor::{shell_quartet, Executor, FockEngine, ReductionMode};
use eri_core::input::{Molecule, Shell, Vec3};
use eri_core::reference::{dense_g, eri_tensor};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn engine(mol: &Molecule, tile: usize) -> FockEngine {
    FockEngine::new(
        mol,
        BlockOptions {
            tile_size: tile,
            ..Default::default()
        },
        &CompilerConfig::default(),
    )
    .unwrap()
}

/// Small system with s, p and d shells on three centers.
fn spd_system() -> Molecule {
    let mut mol = Molecule::new(vec![]);
    mol.shells = vec![
        Shell::normalized(Vec3::new(0.0, 0.0, 0.0), 2, vec![1.3, 0.4], vec![0.6, 0.5]).unwrap(),
        Shell::normalized(Vec3::new(0.3, -0.8, 1.1), 1, vec![0.9], vec![1.0]).unwrap(),
        Shell::normalized(Vec3::new(-0.7, 0.5, 0.2), 0, vec![2.1, 0.5], vec![0.3, 0.8]).unwrap(),
    ];
    mol
}

#[test]
fn single_hydrogen_matches_closed_form() {
    let mol = common::molecule("1\n\nH 0 0 0");
    let eri = eri_tensor(&mol);
    let d = DMatrix::from_element(1, 1, 0.7);
    let g = Executor::new(1).unwrap().build_g(&engine(&mol, 4), &d, ReductionMode::Concurrent).unwrap();
    // 2J - K with a single function is (ss|ss) D.
    assert!((g[(0, 0)] - eri[0] * 0.7).abs() < 1e-12);
}

#[test]
fn water_matches_dense_reference() {
    let mol = common::water();
    let eri = eri_tensor(&mol);
    let exec = Executor::new(2).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    for tile in [1, 3, 32] {
        let e = engine(&mol, tile);
        let d = common::random_symmetric(7, &mut rng);
        let g = exec.build_g(&e, &d, ReductionMode::Concurrent).unwrap();
        let r = dense_g(&eri, &d);
        assert!((&g - &r).amax() < 1e-10, "tile {tile}: {}", (&g - &r).amax());
        assert!((&g - g.transpose()).amax() < 1e-10);
    }
}

#[test]
fn d_shells_match_dense_reference() {
    let mol = spd_system();
    let n = mol.n_functions();
    let eri = eri_tensor(&mol);
    let d = common::random_symmetric(n, &mut StdRng::seed_from_u64(5));
    let g = Executor::new(1).unwrap().build_g(&engine(&mol, 2), &d, ReductionMode::Deterministic).unwrap();
    assert!((&g - dense_g(&eri, &d)).amax() < 1e-10);
}

#[test]
fn granularity_does_not_change_results() {
    let mol = common::water();
    let d = common::random_symmetric(7, &mut StdRng::seed_from_u64(3));
    let exec = Executor::new(2).unwrap();
    let mut e = engine(&mol, 2);
    let base = exec.build_g(&e, &d, ReductionMode::Concurrent).unwrap();
    for g in [2, 7, 81, 4096] {
        for class in e.blocks.classes() {
            e.workload.set(class, g);
        }
        let out = exec.build_g(&e, &d, ReductionMode::Concurrent).unwrap();
        assert!((&out - &base).amax() < 1e-12, "g = {g}");
    }
}

#[test]
fn reduction_modes_agree_across_thread_counts() {
    let mol = common::water();
    let e = engine(&mol, 2);
    let d = common::random_symmetric(7, &mut StdRng::seed_from_u64(8));
    let reference = Executor::new(1).unwrap().build_g(&e, &d, ReductionMode::Deterministic).unwrap();
    for threads in [1, 2, 8] {
        let exec = Executor::new(threads).unwrap();
        for _ in 0..10 {
            for mode in [ReductionMode::Concurrent, ReductionMode::Contended, ReductionMode::Deterministic] {
                let g = exec.build_g(&e, &d, mode).unwrap();
                assert!((&g - &reference).amax() < 1e-10, "{threads} threads, {mode:?}");
            }
        }
    }
}

#[test]
fn deterministic_mode_is_bitwise_stable() {
    let mol = common::water();
    let e = engine(&mol, 1);
    let d = common::random_symmetric(7, &mut StdRng::seed_from_u64(9));
    let first = Executor::new(8).unwrap().build_g(&e, &d, ReductionMode::Deterministic).unwrap();
    for threads in [1, 2, 8] {
        let exec = Executor::new(threads).unwrap();
        for _ in 0..5 {
            let g = exec.build_g(&e, &d, ReductionMode::Deterministic).unwrap();
            assert!(g.iter().zip(first.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn fock_build_is_linear_in_density() {
    let mol = common::water();
    let e = engine(&mol, 4);
    let exec = Executor::new(2).unwrap();
    let mut rng = StdRng::seed_from_u64(21);
    let (d1, d2) = (common::random_symmetric(7, &mut rng), common::random_symmetric(7, &mut rng));
    let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let lhs = exec.build_g(&e, &(&d1 * a + &d2 * b), ReductionMode::Concurrent).unwrap();
    let rhs = exec.build_g(&e, &d1, ReductionMode::Concurrent).unwrap() * a
        + exec.build_g(&e, &d2, ReductionMode::Concurrent).unwrap() * b;
    assert!((lhs - rhs).amax() < 1e-9);
}

#[test]
fn canonical_blocks_equal_full_quartet_loop() {
    let mol = spd_system();
    let n = mol.n_functions();
    let offsets = mol.shell_offsets();
    let config = CompilerConfig::default();
    let mut eri = vec![0.0; n * n * n * n];
    for (i, si) in mol.shells.iter().enumerate() {
        for (j, sj) in mol.shells.iter().enumerate() {
            for (k, sk) in mol.shells.iter().enumerate() {
                for (l, sl) in mol.shells.iter().enumerate() {
                    let v = shell_quartet([si, sj, sk, sl], &config);
                    let mut idx = 0;
                    for a in offsets[i]..offsets[i] + si.n_functions() {
                        for b in offsets[j]..offsets[j] + sj.n_functions() {
                            for c in offsets[k]..offsets[k] + sk.n_functions() {
                                for d in offsets[l]..offsets[l] + sl.n_functions() {
                                    eri[((a * n + b) * n + c) * n + d] = v[idx];
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let d = common::random_symmetric(n, &mut StdRng::seed_from_u64(2));
    let full = dense_g(&eri, &d);
    let canonical = Executor::new(2).unwrap().build_g(&engine(&mol, 1), &d, ReductionMode::Concurrent).unwrap();
    assert!((full - canonical).amax() < 1e-10);
}
