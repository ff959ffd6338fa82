use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dag::{search_path, search_path_with, Candidate, RecurrenceDAG, SearchPath};
use super::{Coef, CompilerConfig, EriClass, IntegralNode, N_KINDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// `dst = [00|00]^(m)`
    Base { m: u8 },
    /// `dst = sum(coef * src)` over `terms[start..start+len]`.
    Sum { start: u32, len: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instr {
    pub dst: u32,
    pub op: Op,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    /// Index into the section's coefficient table.
    pub coef: u16,
    pub src: u32,
}

/// Straight-line program for one ERI class.
///
/// The primitive section runs once per primitive quadruple; `gather` adds
/// its results (scaled by the contraction coefficients) into contracted
/// registers; the contracted section then runs once per quartet and leaves
/// the target components in `outputs`, `a`-major Cartesian order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub class: EriClass,
    pub primitive: Vec<Instr>,
    pub primitive_terms: Vec<Term>,
    pub primitive_coefs: Vec<Coef>,
    pub primitive_nodes: Vec<IntegralNode>,
    /// `(primitive register, contracted register)`.
    pub gather: Vec<(u32, u32)>,
    pub contracted: Vec<Instr>,
    pub contracted_terms: Vec<Term>,
    pub contracted_coefs: Vec<Coef>,
    pub contracted_nodes: Vec<IntegralNode>,
    pub outputs: Vec<u32>,
    pub primitive_slots: u32,
    pub contracted_slots: u32,
    pub max_m: u8,
    pub node_count: usize,
    pub reuse_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub class: EriClass,
    pub op_count: usize,
    pub slot_count: usize,
    pub node_count: usize,
    pub reuse_count: usize,
}

impl ExecutionPlan {
    /// Multiply-adds per quartet evaluation: one per term, one per base evaluation.
    pub fn op_count(&self) -> usize {
        self.primitive
            .iter()
            .chain(&self.contracted)
            .map(|i| match i.op {
                Op::Base { .. } => 1,
                Op::Sum { len, .. } => len as usize,
            })
            .sum()
    }

    pub fn primitive_op_count(&self) -> usize {
        self.primitive
            .iter()
            .map(|i| match i.op {
                Op::Base { .. } => 1,
                Op::Sum { len, .. } => len as usize,
            })
            .sum()
    }

    pub fn slot_count(&self) -> usize {
        (self.primitive_slots + self.contracted_slots) as usize
    }

    pub fn instruction_count(&self) -> usize {
        self.primitive.len() + self.contracted.len()
    }

    /// Evaluates the coefficient table against bound kind values.
    pub fn bind_coefs(coefs: &[Coef], values: &[f64; N_KINDS], out: &mut Vec<f64>) {
        out.clear();
        out.extend(coefs.iter().map(|c| c.eval(values)));
    }

    #[inline]
    fn run(instrs: &[Instr], terms: &[Term], coefs: &[f64], base: &[f64], regs: &mut [f64]) {
        for ins in instrs {
            let v = match ins.op {
                Op::Base { m } => base[m as usize],
                Op::Sum { start, len } => {
                    let mut acc = 0.0;
                    for t in &terms[start as usize..(start + len) as usize] {
                        acc += coefs[t.coef as usize] * regs[t.src as usize];
                    }
                    acc
                }
            };
            regs[ins.dst as usize] = v;
        }
    }

    /// Primitive section; `base[m]` holds `[00|00]^(m)`.
    #[inline]
    pub fn run_primitive(&self, coefs: &[f64], base: &[f64], regs: &mut [f64]) {
        Self::run(&self.primitive, &self.primitive_terms, coefs, base, regs);
    }

    /// `contracted[dst] += scale * primitive[src]` for every gather entry.
    #[inline]
    pub fn gather_into(&self, scale: f64, primitive: &[f64], contracted: &mut [f64]) {
        for &(src, dst) in &self.gather {
            contracted[dst as usize] += scale * primitive[src as usize];
        }
    }

    #[inline]
    pub fn run_contracted(&self, coefs: &[f64], regs: &mut [f64]) {
        Self::run(&self.contracted, &self.contracted_terms, coefs, &[], regs);
    }

    /// Scalar source text equivalent to the plan, for inspection.
    pub fn emit_source(&self) -> String {
        let mut s = String::new();
        let [a, b, c, d] = self.class.0;
        let name = format!("eri_{a}{b}{c}{d}");
        let _ = writeln!(
            s,
            "// class {}: {} ops, {} primitive + {} contracted registers",
            self.class,
            self.op_count(),
            self.primitive_slots,
            self.contracted_slots
        );
        let _ = writeln!(s, "fn {name}_primitive(k: &Binding, base: &[f64], r: &mut [f64]) {{");
        emit_section(&mut s, &self.primitive, &self.primitive_terms, &self.primitive_coefs, &self.primitive_nodes, "r");
        let _ = writeln!(s, "}}\n");
        let _ = writeln!(s, "fn {name}_gather(scale: f64, r: &[f64], acc: &mut [f64]) {{");
        for &(src, dst) in &self.gather {
            let _ = writeln!(s, "    acc[{dst}] += scale * r[{src}];");
        }
        let _ = writeln!(s, "}}\n");
        let _ = writeln!(s, "fn {name}_contracted(k: &Binding, acc: &mut [f64], out: &mut [f64]) {{");
        emit_section(&mut s, &self.contracted, &self.contracted_terms, &self.contracted_coefs, &self.contracted_nodes, "acc");
        for (i, o) in self.outputs.iter().enumerate() {
            let _ = writeln!(s, "    out[{i}] = acc[{o}];");
        }
        let _ = writeln!(s, "}}");
        s
    }
}

fn emit_section(s: &mut String, instrs: &[Instr], terms: &[Term], coefs: &[Coef], nodes: &[IntegralNode], reg: &str) {
    for (ins, node) in instrs.iter().zip(nodes) {
        let rhs = match ins.op {
            Op::Base { m } => format!("base[{m}]"),
            Op::Sum { start, len } => terms[start as usize..(start + len) as usize]
                .iter()
                .map(|t| {
                    let c = coefs[t.coef as usize];
                    if c == Coef::ONE {
                        format!("{reg}[{}]", t.src)
                    } else {
                        let c = c.to_string().split(" * ").map(|p| {
                            if p.parse::<f64>().is_ok() { p.to_string() } else { format!("k.{p}") }
                        }).collect::<Vec<_>>().join(" * ");
                        format!("{c} * {reg}[{}]", t.src)
                    }
                })
                .collect::<Vec<_>>()
                .join(" + "),
        };
        let _ = writeln!(s, "    {reg}[{}] = {rhs}; // {node}", ins.dst);
    }
}

/// Linear-scan register assignment over `(dst, sources)`; `live_out` values
/// are never released.
fn allocate(seq: &[(usize, Vec<usize>)], live_out: &HashSet<usize>) -> (HashMap<usize, u32>, u32) {
    let mut last_use: HashMap<usize, usize> = HashMap::new();
    for (pos, (_, srcs)) in seq.iter().enumerate() {
        for &s in srcs {
            last_use.insert(s, pos);
        }
    }
    let mut map = HashMap::with_capacity(seq.len());
    let mut free: Vec<u32> = Vec::new();
    let mut next = 0u32;
    for (pos, (dst, srcs)) in seq.iter().enumerate() {
        let mut released: Vec<usize> = srcs
            .iter()
            .copied()
            .filter(|s| last_use[s] == pos && !live_out.contains(s))
            .collect();
        released.sort_unstable();
        released.dedup();
        for s in released {
            free.push(map[&s]);
        }
        free.sort_unstable_by(|a, b| b.cmp(a));
        let r = free.pop().unwrap_or_else(|| {
            next += 1;
            next - 1
        });
        map.insert(*dst, r);
    }
    (map, next)
}

#[derive(Default)]
struct CoefTable {
    coefs: Vec<Coef>,
    index: HashMap<Coef, u16>,
}

impl CoefTable {
    fn intern(&mut self, c: Coef) -> u16 {
        *self.index.entry(c).or_insert_with(|| {
            self.coefs.push(c);
            (self.coefs.len() - 1) as u16
        })
    }
}

/// Emits the plan bottom-up by reversing the derivation path.
pub fn generate_plan(dag: &RecurrenceDAG, path: &SearchPath) -> Result<ExecutionPlan> {
    let mut order = Vec::with_capacity(path.steps.len());
    for step in path.steps.iter().rev() {
        let idx = dag
            .node_index(&step.node)
            .ok_or_else(|| Error::UnknownNode(step.node.to_string()))?;
        order.push(idx);
    }

    // primitive-level m=0 values needed after contraction
    let mut boundary: HashSet<usize> = HashSet::new();
    for &t in &dag.targets {
        if dag.nodes[t].is_primitive_level() {
            boundary.insert(t);
        }
    }
    for (i, d) in dag.derivations.iter().enumerate() {
        if let (false, Some(d)) = (dag.nodes[i].is_primitive_level(), d) {
            for &(_, p) in &d.terms {
                if dag.nodes[p].is_primitive_level() {
                    boundary.insert(p);
                }
            }
        }
    }

    let sources = |i: usize| -> Vec<usize> {
        dag.derivations[i]
            .as_ref()
            .map(|d| d.terms.iter().map(|&(_, p)| p).collect())
            .unwrap_or_default()
    };
    let prim_order: Vec<usize> = order.iter().copied().filter(|&i| dag.nodes[i].is_primitive_level()).collect();
    let cont_order: Vec<usize> = order.iter().copied().filter(|&i| !dag.nodes[i].is_primitive_level()).collect();

    // primitive section
    let prim_seq: Vec<(usize, Vec<usize>)> = prim_order.iter().map(|&i| (i, sources(i))).collect();
    let (prim_reg, prim_slots) = allocate(&prim_seq, &boundary);

    // contracted section: gathered values are defined first, in node order
    let mut gathered: Vec<usize> = boundary.iter().copied().collect();
    gathered.sort_unstable_by_key(|&i| order.iter().position(|&o| o == i));
    let mut cont_seq: Vec<(usize, Vec<usize>)> = gathered.iter().map(|&i| (i, Vec::new())).collect();
    cont_seq.extend(cont_order.iter().map(|&i| (i, sources(i))));
    let targets: HashSet<usize> = dag.targets.iter().copied().collect();
    let (cont_reg, cont_slots) = allocate(&cont_seq, &targets);

    let mut prim_coefs = CoefTable::default();
    let mut primitive = Vec::with_capacity(prim_order.len());
    let mut primitive_terms = Vec::new();
    for &i in &prim_order {
        let op = match &dag.derivations[i] {
            None => Op::Base { m: dag.nodes[i].m },
            Some(d) => {
                let start = primitive_terms.len() as u32;
                for &(c, p) in &d.terms {
                    primitive_terms.push(Term {
                        coef: prim_coefs.intern(c),
                        src: prim_reg[&p],
                    });
                }
                Op::Sum { start, len: d.terms.len() as u32 }
            }
        };
        primitive.push(Instr { dst: prim_reg[&i], op });
    }

    let gather = gathered.iter().map(|&i| (prim_reg[&i], cont_reg[&i])).collect();

    let mut cont_coefs = CoefTable::default();
    let mut contracted = Vec::with_capacity(cont_order.len());
    let mut contracted_terms = Vec::new();
    for &i in &cont_order {
        let d = dag.derivations[i].as_ref().expect("contracted nodes are never base cases");
        let start = contracted_terms.len() as u32;
        for &(c, p) in &d.terms {
            contracted_terms.push(Term {
                coef: cont_coefs.intern(c),
                src: cont_reg[&p],
            });
        }
        contracted.push(Instr {
            dst: cont_reg[&i],
            op: Op::Sum { start, len: d.terms.len() as u32 },
        });
    }

    Ok(ExecutionPlan {
        class: dag.class,
        primitive,
        primitive_terms,
        primitive_coefs: prim_coefs.coefs,
        primitive_nodes: prim_order.iter().map(|&i| dag.nodes[i]).collect(),
        gather,
        contracted,
        contracted_terms,
        contracted_coefs: cont_coefs.coefs,
        contracted_nodes: cont_order.iter().map(|&i| dag.nodes[i]).collect(),
        outputs: dag.targets.iter().map(|t| cont_reg[t]).collect(),
        primitive_slots: prim_slots,
        contracted_slots: cont_slots,
        max_m: dag.max_m(),
        node_count: dag.len(),
        reuse_count: path.reuse_count,
    })
}

pub fn plan_stats(plan: &ExecutionPlan) -> PlanStats {
    PlanStats {
        class: plan.class,
        op_count: plan.op_count(),
        slot_count: plan.slot_count(),
        node_count: plan.node_count,
        reuse_count: plan.reuse_count,
    }
}

/// Greedy search, DAG construction and code generation for one class.
pub fn compile(class: EriClass, config: &CompilerConfig) -> ExecutionPlan {
    let path = search_path(class, config);
    let dag = RecurrenceDAG::from_path(&path).expect("search paths are closed");
    generate_plan(&dag, &path).expect("path nodes are in the DAG")
}

/// Like [`compile`] with a caller-supplied position choice.
pub fn compile_with<F>(class: EriClass, choose: F) -> ExecutionPlan
where
    F: FnMut(&IntegralNode, &[Candidate]) -> usize,
{
    let path = search_path_with(class, choose);
    let dag = RecurrenceDAG::from_path(&path).expect("search paths are closed");
    generate_plan(&dag, &path).expect("path nodes are in the DAG")
}

/// A valid plan whose position at every node is drawn uniformly from `rng`.
pub fn compile_random<R: rand::Rng + ?Sized>(class: EriClass, rng: &mut R) -> ExecutionPlan {
    compile_with(class, |_, cands| rng.gen_range(0..cands.len()))
}

/// Plans for a set of classes, shared read-only by all workers.
#[derive(Debug, Clone, Default)]
pub struct PlanSet {
    pub plans: BTreeMap<EriClass, ExecutionPlan>,
}

impl PlanSet {
    pub fn get(&self, class: EriClass) -> Result<&ExecutionPlan> {
        self.plans.get(&class).ok_or(Error::MissingPlan(class))
    }

    pub fn insert(&mut self, plan: ExecutionPlan) {
        self.plans.insert(plan.class, plan);
    }
}

pub fn compile_classes(classes: impl IntoIterator<Item = EriClass>, config: &CompilerConfig) -> PlanSet {
    let mut set = PlanSet::default();
    for class in classes {
        set.plans.entry(class).or_insert_with(|| compile(class, config));
    }
    set
}
