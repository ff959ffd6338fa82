use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{Context, Result};
use eri_core::allocator::{tune, BlockSampleWorkload, WorkloadConfig};
use eri_core::block::{BlockOptions, QuadBlock};
use eri_core::compiler::{compile, plan_stats, CompilerConfig, EriClass};
use eri_core::executor::{Executor, FockEngine, ReductionMode};
use eri_core::input::{fixtures, parse_xyz, read_xyz, BasisSet, Molecule};
use eri_core::scf::{density_from_mos, eigh, one_electron, orthogonalizer, scf_iterate, ScfOptions, TuneOptions};
use eri_core::validation::{
    allocator_hardware, allocator_mock_cases, allocator_principle, energy_check, oracle_suite, symmetry_suite,
    ENERGY_TOLERANCE, REFERENCE_ENERGIES,
};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BenchArgs, BlockArgs, CompileArgs, MoleculeArgs, ScfArgs, Suite, Switch, TuneArgs, ValidateArgs};

/// What a subcommand hands back to `main`.
pub struct Report {
    pub passed: bool,
    pub summary: String,
    pub json: Value,
}

/// Shared settings resolved from the global flags.
pub struct RunConfig {
    pub threads: usize,
    pub mode: ReductionMode,
    pub seed: u64,
}

fn load(m: &MoleculeArgs) -> Result<Molecule> {
    let basis = BasisSet::load(&m.basis).with_context(|| format!("loading basis `{}`", m.basis))?;
    let mol = read_xyz(&m.xyz).with_context(|| format!("reading {}", m.xyz.display()))?;
    Ok(mol.attach_basis(&basis)?)
}

fn compiler_config(lambda: Option<f64>) -> Result<CompilerConfig> {
    Ok(match lambda {
        Some(l) => CompilerConfig::with_lambda(l)?,
        None => CompilerConfig::default(),
    })
}

fn block_options(b: &BlockArgs) -> BlockOptions {
    BlockOptions {
        tile_size: b.tile_size as usize,
        screen_threshold: b.screen_threshold.0,
    }
}

fn engine(mol: &Molecule, b: &BlockArgs) -> Result<FockEngine> {
    Ok(FockEngine::new(mol, block_options(b), &compiler_config(b.lambda)?)?)
}

/// Density of the core-Hamiltonian guess, the one the first SCF iteration sees.
fn guess_density(mol: &Molecule) -> Result<DMatrix<f64>> {
    let ints = one_electron(mol);
    let x = orthogonalizer(&ints.s)?;
    let (_, c) = eigh(&(x.transpose() * ints.core_hamiltonian() * &x));
    Ok(density_from_mos(&(&x * c), mol.n_occupied()?)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[derive(Serialize)]
struct CompileStats {
    class: String,
    lambda: f64,
    op_count: usize,
    slot_count: usize,
    node_count: usize,
    reuse_count: usize,
    compile_ms: f64,
}

pub fn compile_cmd(a: &CompileArgs) -> Result<Report> {
    let config = compiler_config(a.lambda)?;
    let classes = match a.class {
        Some(c) => vec![c],
        None => EriClass::all_up_to(a.l_max),
    };
    let mut stats = Vec::new();
    let mut summary = String::new();
    for class in classes {
        let start = Instant::now();
        let plan = compile(class, &config);
        let compile_ms = start.elapsed().as_secs_f64() * 1e3;
        let s = plan_stats(&plan);
        if a.emit_source {
            summary.push_str(&plan.emit_source());
            summary.push('\n');
        }
        summary.push_str(&format!(
            "{class}: {} ops, {} slots, {} nodes, {} reused, {compile_ms:.2} ms\n",
            s.op_count, s.slot_count, s.node_count, s.reuse_count
        ));
        stats.push(CompileStats {
            class: class.to_string(),
            lambda: config.lambda,
            op_count: s.op_count,
            slot_count: s.slot_count,
            node_count: s.node_count,
            reuse_count: s.reuse_count,
            compile_ms,
        });
    }
    let json = if a.class.is_some() {
        serde_json::to_value(&stats[0])?
    } else {
        serde_json::to_value(&stats)?
    };
    if let Some(path) = &a.stats_json {
        std::fs::write(path, serde_json::to_string_pretty(&json)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Report {
        passed: true,
        summary,
        json,
    })
}

pub fn scf_cmd(a: &ScfArgs, ctx: &RunConfig) -> Result<Report> {
    let options = ScfOptions {
        conv: a.conv,
        max_iter: a.max_iter as usize,
        damping: a.damping.0,
        diis: a.diis == Switch::On,
        threads: ctx.threads,
        mode: ctx.mode,
        blocks: block_options(&a.blocks),
        compiler: compiler_config(a.blocks.lambda)?,
        tune: a.tune.then_some(TuneOptions {
            sample_blocks: a.sample_blocks as usize,
            repeats: a.repeats as usize,
        }),
        ..Default::default()
    };
    let mol = load(&a.molecule)?;
    let r = scf_iterate(&mol, &options)?;
    let mut summary = String::new();
    for (i, e) in r.per_iteration_energies.iter().enumerate() {
        summary.push_str(&format!("iter {:3}  E = {e:.10}\n", i + 1));
    }
    summary.push_str(&format!(
        "{} after {} iterations: E = {:.10} Ha ({:.2} s, Fock builds {:.2} s)\n",
        if r.converged { "converged" } else { "NOT converged" },
        r.iterations,
        r.energy,
        r.timing.total_s,
        r.timing.fock_s
    ));
    let json = json!({
        "xyz": a.molecule.xyz,
        "basis": a.molecule.basis,
        "n_functions": mol.n_functions(),
        "energy_hartree": r.energy,
        "iterations": r.iterations,
        "converged": r.converged,
        "per_iteration_energies": r.per_iteration_energies,
        "nuclear_repulsion": r.nuclear_repulsion,
        "energy_change": if r.energy_change.is_finite() { json!(r.energy_change) } else { Value::Null },
        "density_change": r.state.delta,
        "orbital_energies": r.orbital_energies.as_slice(),
        "timing": r.timing,
        "tuning": r.tuning,
        "workload": r.workload.iter().map(|(c, g)| json!({"class": c, "g": g})).collect::<Vec<_>>(),
    });
    Ok(Report {
        passed: r.converged,
        summary,
        json,
    })
}

pub fn tune_cmd(a: &TuneArgs, ctx: &RunConfig) -> Result<Report> {
    let mol = load(&a.molecule)?;
    let mut engine = engine(&mol, &a.blocks)?;
    let exec = Executor::new(ctx.threads)?;
    let d = guess_density(&mol)?;
    let start = Instant::now();
    let mut w = BlockSampleWorkload::new(&mut engine, &exec, &d, a.sample_blocks as usize)?;
    w.mode = ctx.mode;
    let out = tune(&mut w, WorkloadConfig::default(), a.repeats as usize)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut summary = String::new();
    let classes: Vec<Value> = out
        .config
        .iter()
        .map(|(class, g)| {
            let history = &out.state.classes[&class.to_string()];
            let path: Vec<String> = history.steps.iter().filter(|s| s.accepted).map(|s| s.g.to_string()).collect();
            summary.push_str(&format!("{class}: g = {g} (accepted {})\n", path.join(" -> ")));
            json!({
                "class": class.to_string(),
                "g_final": g,
                "t_history": history.steps,
            })
        })
        .collect();
    summary.push_str(&format!(
        "{} sweeps, {} accepted steps, {seconds:.2} s\n",
        out.state.sweeps, out.state.accepted_steps
    ));
    Ok(Report {
        passed: true,
        summary,
        json: json!({
            "sample_blocks": a.sample_blocks,
            "repeats": a.repeats,
            "sweeps": out.state.sweeps,
            "accepted_steps": out.state.accepted_steps,
            "seconds": seconds,
            "classes": classes,
        }),
    })
}

pub fn validate_cmd(a: &ValidateArgs, ctx: &RunConfig) -> Result<Report> {
    let config = CompilerConfig::default();
    match a.suite {
        Suite::Energies => {
            let options = ScfOptions {
                threads: ctx.threads,
                mode: ctx.mode,
                ..Default::default()
            };
            let mut checks = Vec::new();
            if let (Some(path), Some(expected)) = (&a.xyz, a.expected) {
                let mol = read_xyz(path)?.attach_basis(&BasisSet::sto3g())?;
                let start = Instant::now();
                let r = scf_iterate(&mol, &options)?;
                checks.push(json!({
                    "system": path,
                    "expected": expected,
                    "computed": r.energy,
                    "error": r.energy - expected,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "seconds": start.elapsed().as_secs_f64(),
                    "passed": r.converged && (r.energy - expected).abs() < ENERGY_TOLERANCE,
                }));
            } else {
                let systems: Vec<String> = if a.system.is_empty() {
                    REFERENCE_ENERGIES.iter().map(|(n, _)| n.to_string()).collect()
                } else {
                    a.system.clone()
                };
                for s in &systems {
                    if !REFERENCE_ENERGIES.iter().any(|(n, _)| n == s) {
                        return Err(crate::UsageError(format!(
                            "no reference energy for `{s}`; known: {}",
                            REFERENCE_ENERGIES.map(|r| r.0).join(", ")
                        ))
                        .into());
                    }
                    checks.push(serde_json::to_value(energy_check(s, &options)?)?);
                }
            }
            let mut summary = String::new();
            for c in &checks {
                let pass = c["passed"].as_bool() == Some(true);
                let line = match c["computed"].as_f64() {
                    Some(e) => format!(
                        "{} {}: {e:.7} vs {:.7}, |dE| = {:.2e}\n",
                        if pass { "PASS" } else { "FAIL" },
                        c["system"].as_str().unwrap_or_default(),
                        c["expected"].as_f64().unwrap_or(f64::NAN),
                        c["error"].as_f64().unwrap_or(f64::NAN).abs()
                    ),
                    None => format!("FAIL {}: {}\n", c["system"].as_str().unwrap_or_default(), c["note"].as_str().unwrap_or_default()),
                };
                summary.push_str(&line);
            }
            let passed = checks.iter().all(|c| c["passed"].as_bool() == Some(true));
            Ok(Report {
                passed,
                summary,
                json: json!({"suite": "energies", "tolerance": ENERGY_TOLERANCE, "passed": passed, "checks": checks}),
            })
        }
        Suite::Oracle => {
            let r = oracle_suite(a.l_max, a.geometries as usize, ctx.seed, &config);
            Ok(Report {
                passed: r.passed,
                summary: format!(
                    "{} oracle: {} classes x {} geometries, max relative error {:.2e} in {} ({:.2} s)\n",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.classes,
                    r.geometries,
                    r.max_relative_error,
                    r.worst_class,
                    r.seconds
                ),
                json: json!({"suite": "oracle", "seed": ctx.seed, "report": r}),
            })
        }
        Suite::Symmetry => {
            let r = symmetry_suite(a.quadruples as usize, ctx.seed, &config);
            Ok(Report {
                passed: r.passed,
                summary: format!(
                    "{} symmetry: {} quadruples, {} identities, max error {:.2e}\n",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.quadruples,
                    r.identities,
                    r.max_abs_error
                ),
                json: json!({"suite": "symmetry", "seed": ctx.seed, "report": r}),
            })
        }
        Suite::Allocator => {
            let mocks = allocator_mock_cases()?;
            let principle = allocator_principle()?;
            let mol = match &a.xyz {
                Some(p) => read_xyz(p)?.attach_basis(&BasisSet::sto3g())?,
                None => parse_xyz(fixtures::WATER)?.attach_basis(&BasisSet::sto3g())?,
            };
            let hardware = allocator_hardware(&mol, ctx.threads, a.sample_blocks as usize)?;
            let mut summary = String::new();
            for m in &mocks {
                summary.push_str(&format!(
                    "{} mock {}: found {:?}\n",
                    if m.passed { "PASS" } else { "FAIL" },
                    m.name,
                    m.found
                ));
            }
            summary.push_str(&format!(
                "{} principle: memory-bound g = {}, compute-bound g = {}\n",
                if principle.passed { "PASS" } else { "FAIL" },
                principle.memory_bound_g,
                principle.compute_bound_g
            ));
            summary.push_str(&format!(
                "{} hardware: untuned {:.4} s, tuned {:.4} s, monotone {}\n",
                if hardware.passed { "PASS" } else { "FAIL" },
                hardware.untuned_s,
                hardware.tuned_s,
                hardware.monotone
            ));
            let passed = mocks.iter().all(|m| m.passed) && principle.passed && hardware.passed;
            Ok(Report {
                passed,
                summary,
                json: json!({
                    "suite": "allocator",
                    "passed": passed,
                    "mock_cases": mocks,
                    "principle": principle,
                    "hardware": hardware,
                }),
            })
        }
    }
}

#[derive(Serialize)]
struct ClassBench {
    class: String,
    blocks: usize,
    quartets: usize,
    primitive_tasks: usize,
    op_count: usize,
    untuned_s: f64,
    tuned_s: f64,
    g_tuned: usize,
    gflops_untuned: f64,
    gflops_tuned: f64,
}

fn timed(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut v = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        v.push(t.elapsed().as_secs_f64());
    }
    Ok(median(v))
}

pub fn bench_cmd(a: &BenchArgs, ctx: &RunConfig) -> Result<Report> {
    let mol = load(&a.molecule)?;
    let mut engine = engine(&mol, &a.blocks)?;
    let exec = Executor::new(ctx.threads)?;
    let d = guess_density(&mol)?;
    let repeats = a.repeats as usize;

    let outcome = {
        let mut w = BlockSampleWorkload::new(&mut engine, &exec, &d, a.sample_blocks as usize)?;
        w.mode = ctx.mode;
        tune(&mut w, WorkloadConfig::default(), repeats)?
    };
    let mut tuned = engine.clone();
    tuned.workload = outcome.config.clone();
    engine.workload = WorkloadConfig::default();

    let mut by_class: BTreeMap<EriClass, Vec<QuadBlock>> = BTreeMap::new();
    for b in &engine.block_list {
        by_class.entry(b.class).or_default().push(*b);
    }
    let mut classes = Vec::new();
    for (class, blocks) in &by_class {
        let plan = engine.plans.get(*class)?;
        let (prim_ops, ops) = (plan.primitive_op_count(), plan.op_count());
        let tasks: usize = blocks.iter().map(|b| engine.block_tasks(b)).sum();
        let quartets: usize = blocks.iter().map(|b| b.n_quadruples(&engine.blocks.tiles)).sum();
        let flops = 2.0 * (tasks * prim_ops + quartets * (ops - prim_ops)) as f64;
        let untuned_s = timed(repeats, || exec.build_g_blocks(&engine, blocks, &d, ctx.mode).map(drop).map_err(Into::into))?;
        let tuned_s = timed(repeats, || exec.build_g_blocks(&tuned, blocks, &d, ctx.mode).map(drop).map_err(Into::into))?;
        classes.push(ClassBench {
            class: class.to_string(),
            blocks: blocks.len(),
            quartets,
            primitive_tasks: tasks,
            op_count: ops,
            untuned_s,
            tuned_s,
            g_tuned: tuned.workload.get(*class),
            gflops_untuned: flops / untuned_s / 1e9,
            gflops_tuned: flops / tuned_s / 1e9,
        });
    }

    // Full builds, alternated so drift in machine speed affects both alike.
    exec.build_g(&engine, &d, ctx.mode)?;
    exec.build_g(&tuned, &d, ctx.mode)?;
    let (mut tu, mut tt) = (Vec::new(), Vec::new());
    for _ in 0..repeats {
        let t = Instant::now();
        exec.build_g(&engine, &d, ctx.mode)?;
        tu.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        exec.build_g(&tuned, &d, ctx.mode)?;
        tt.push(t.elapsed().as_secs_f64());
    }
    let (untuned_total, tuned_total) = (median(tu), median(tt));

    let mut scaling = Vec::new();
    for &n in &a.scaling {
        let e = Executor::new(n as usize)?;
        let s = timed(repeats, || e.build_g(&tuned, &d, ctx.mode).map(drop).map_err(Into::into))?;
        scaling.push(json!({"threads": n, "seconds": s}));
    }

    let mut summary = String::new();
    for c in &classes {
        summary.push_str(&format!(
            "{:<10} {:>5} blocks  untuned {:>9.5} s  tuned {:>9.5} s  g = {:<5} {:.3} GFLOP/s\n",
            c.class, c.blocks, c.untuned_s, c.tuned_s, c.g_tuned, c.gflops_tuned
        ));
    }
    summary.push_str(&format!("full build: untuned {untuned_total:.4} s, tuned {tuned_total:.4} s\n"));
    for s in &scaling {
        summary.push_str(&format!("threads {}: {:.4} s\n", s["threads"], s["seconds"].as_f64().unwrap_or(f64::NAN)));
    }
    Ok(Report {
        passed: true,
        summary,
        json: json!({
            "xyz": a.molecule.xyz,
            "n_functions": engine.n_functions(),
            "threads": ctx.threads,
            "repeats": repeats,
            "untuned_total_s": untuned_total,
            "tuned_total_s": tuned_total,
            "classes": classes,
            "scaling": scaling,
            "tuning": outcome.state,
        }),
    })
}
