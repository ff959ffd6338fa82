mod common;

use eri_core::executor::ReductionMode;
use eri_core::scf::{scf_iterate, ScfOptions, TuneOptions};
use nalgebra::{Rotation3, Unit, Vector3};

// Independent RHF/STO-3G totals for the bundled geometries, cartesian basis.
const H2_REFERENCE: f64 = -1.1167593102;
const WATER_REFERENCE: f64 = -74.9630231287;
const BENZENE_REFERENCE: f64 = -227.8906005826;

fn tight() -> ScfOptions {
    ScfOptions {
        conv: 1e-8,
        ..Default::default()
    }
}

#[test]
fn h2_and_water_totals() {
    for (mol, reference) in [(common::h2(), H2_REFERENCE), (common::water(), WATER_REFERENCE)] {
        let r = scf_iterate(&mol, &tight()).unwrap();
        assert!(r.converged);
        assert!((r.energy - reference).abs() < 1e-6, "{} vs {reference}", r.energy);
    }
}

#[test]
fn benzene_total_and_damped_descent() {
    let r = scf_iterate(&common::benzene(), &tight()).unwrap();
    assert!(r.converged);
    assert!((r.energy - BENZENE_REFERENCE).abs() < 1e-6, "{}", r.energy);
    for w in r.per_iteration_energies[2..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{:?}", r.per_iteration_energies);
    }
}

#[test]
fn water_density_is_idempotent_projector() {
    let r = scf_iterate(&common::water(), &ScfOptions::default()).unwrap();
    let d = &r.state.density;
    let s = &r.overlap;
    assert!((d * s * d - d).amax() < 1e-6);
    assert!(((d * s).trace() - 5.0).abs() < 1e-8);
    for w in r.per_iteration_energies[2..].windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
}

#[test]
fn energy_is_rotation_invariant() {
    let mol = common::water();
    let base = scf_iterate(&mol, &tight()).unwrap().energy;
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.6)), 1.234);
    let turned = scf_iterate(&mol.rotated(&rot), &tight()).unwrap().energy;
    assert!((base - turned).abs() < 1e-8, "{base} vs {turned}");
}

#[test]
fn diis_reaches_same_energy_faster() {
    let mol = common::water();
    let plain = scf_iterate(&mol, &tight()).unwrap();
    let diis = scf_iterate(
        &mol,
        &ScfOptions {
            diis: true,
            ..tight()
        },
    )
    .unwrap();
    assert!(diis.converged);
    assert!((plain.energy - diis.energy).abs() < 1e-7);
    assert!(diis.iterations < plain.iterations);
}

#[test]
fn reduction_modes_agree() {
    let mol = common::water();
    let energies: Vec<f64> = [ReductionMode::Concurrent, ReductionMode::Contended, ReductionMode::Deterministic]
        .into_iter()
        .map(|mode| {
            scf_iterate(
                &mol,
                &ScfOptions {
                    mode,
                    threads: 2,
                    ..tight()
                },
            )
            .unwrap()
            .energy
        })
        .collect();
    assert!(energies.iter().all(|e| (e - energies[0]).abs() < 1e-10), "{energies:?}");
}

#[test]
fn iteration_cap_reports_unconverged() {
    let r = scf_iterate(
        &common::water(),
        &ScfOptions {
            max_iter: 2,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 2);
    assert_eq!(r.per_iteration_energies.len(), 2);
}

#[test]
fn tuning_on_first_iteration_keeps_energy() {
    let mol = common::water();
    let r = scf_iterate(
        &mol,
        &ScfOptions {
            tune: Some(TuneOptions {
                sample_blocks: 2,
                repeats: 1,
            }),
            ..tight()
        },
    )
    .unwrap();
    assert!(r.tuning.is_some());
    assert!(r.workload.iter().all(|(_, g)| *g >= 1));
    assert!((r.energy - WATER_REFERENCE).abs() < 1e-6);
}
