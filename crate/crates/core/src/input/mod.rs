//! Molecular geometry and Gaussian basis-set input.
//!
//! Coordinates are held in Bohr throughout. Contraction coefficients stored on
//! a [`Shell`] already include primitive normalization, so a contracted
//! function is simply `sum_k coefficients[k] * x^ax y^ay z^az exp(-exponents[k] r^2)`.

mod basis;
pub mod elements;
mod xyz;

use nalgebra::Vector3;

pub use basis::{BasisSet, ShellTemplate};
pub use xyz::{parse_xyz, read_xyz, BOHR_PER_ANGSTROM};

/// Geometries bundled with the crate (XYZ text, Angstrom).
pub mod fixtures {
    pub const H2: &str = include_str!("../../data/h2.xyz");
    pub const WATER: &str = include_str!("../../data/water.xyz");
    pub const BENZENE: &str = include_str!("../../data/benzene.xyz");

    /// Looks a fixture up by name.
    pub fn get(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "h2" => Some(H2),
            "water" => Some(WATER),
            "benzene" => Some(BENZENE),
            _ => None,
        }
    }
}

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: String,
    pub atomic_number: u32,
    /// Bohr.
    pub position: Vec3,
}

/// Cartesian angular-momentum exponents `(a_x, a_y, a_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Momentum(pub [u8; 3]);

impl Momentum {
    pub const ZERO: Momentum = Momentum([0, 0, 0]);

    pub fn total(self) -> u32 {
        self.0.iter().map(|&x| x as u32).sum()
    }

    pub fn is_zero(self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn get(self, axis: usize) -> u8 {
        self.0[axis]
    }

    pub fn raised(self, axis: usize) -> Momentum {
        let mut v = self.0;
        v[axis] += 1;
        Momentum(v)
    }

    /// `None` when the component along `axis` is already zero.
    pub fn lowered(self, axis: usize) -> Option<Momentum> {
        let mut v = self.0;
        v[axis] = v[axis].checked_sub(1)?;
        Some(Momentum(v))
    }
}

impl std::fmt::Display for Momentum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [x, y, z] = self.0;
        write!(f, "{x}{y}{z}")
    }
}

/// Cartesian components of total momentum `l`, descending on `a_x` then `a_y`.
pub fn cartesian_components(l: u32) -> Vec<Momentum> {
    let l = l as u8;
    let mut out = Vec::with_capacity(n_cartesian(l as u32));
    for ax in (0..=l).rev() {
        for ay in (0..=l - ax).rev() {
            out.push(Momentum([ax, ay, l - ax - ay]));
        }
    }
    out
}

/// Per-component factors turning an `(l,0,0)`-normalized shell into
/// unit-normalized Cartesian functions, in [`cartesian_components`] order.
pub fn component_scales(l: u32) -> Vec<f64> {
    let dl = double_factorial(2 * l as i32 - 1);
    cartesian_components(l)
        .iter()
        .map(|m| {
            let dm: f64 = m.0.iter().map(|&c| double_factorial(2 * c as i32 - 1)).product();
            (dl / dm).sqrt()
        })
        .collect()
}

pub fn n_cartesian(l: u32) -> usize {
    ((l + 1) * (l + 2) / 2) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shell {
    pub center: Vec3,
    pub l: u32,
    pub exponents: Vec<f64>,
    /// Contraction coefficients with normalization folded in.
    pub coefficients: Vec<f64>,
    /// Index of the owning atom, if any.
    pub atom: Option<usize>,
}

impl Shell {
    /// A shell whose coefficients are used exactly as given.
    pub fn new(center: Vec3, l: u32, exponents: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::InvalidArgument("shell needs at least one primitive".into()));
        }
        if exponents.len() != coefficients.len() {
            return Err(Error::InvalidArgument(format!(
                "{} exponents but {} coefficients",
                exponents.len(),
                coefficients.len()
            )));
        }
        if let Some(bad) = exponents.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument(format!("non-positive exponent {bad}")));
        }
        Ok(Shell {
            center,
            l,
            exponents,
            coefficients,
            atom: None,
        })
    }

    /// Builds a shell from coefficients that refer to normalized primitives,
    /// folding the primitive norms in and rescaling so the contracted
    /// `(l,0,0)` component has unit self-overlap.
    pub fn normalized(center: Vec3, l: u32, exponents: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        let mut shell = Shell::new(center, l, exponents, coefficients)?;
        for (d, &a) in shell.coefficients.iter_mut().zip(&shell.exponents) {
            *d *= primitive_norm(a, l);
        }
        let s = shell.self_overlap();
        let scale = 1.0 / s.sqrt();
        shell.coefficients.iter_mut().for_each(|d| *d *= scale);
        Ok(shell)
    }

    /// Degree of contraction.
    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    pub fn n_functions(&self) -> usize {
        n_cartesian(self.l)
    }

    /// Self-overlap of the contracted `(l,0,0)` component.
    pub fn self_overlap(&self) -> f64 {
        let l = self.l as i32;
        let dfact = double_factorial(2 * l - 1);
        let mut s = 0.0;
        for (&ai, &di) in self.exponents.iter().zip(&self.coefficients) {
            for (&aj, &dj) in self.exponents.iter().zip(&self.coefficients) {
                let p = ai + aj;
                s += di * dj * (std::f64::consts::PI / p).powf(1.5) * dfact / (2.0 * p).powi(l);
            }
        }
        s
    }
}

/// Normalization of the primitive `x^l exp(-a r^2)`.
pub fn primitive_norm(alpha: f64, l: u32) -> f64 {
    let l = l as i32;
    (2.0 * alpha / std::f64::consts::PI).powf(0.75) * (4.0 * alpha).powf(l as f64 / 2.0)
        / double_factorial(2 * l - 1).sqrt()
}

/// `n!!` with `(-1)!! = 0!! = 1`.
pub fn double_factorial(n: i32) -> f64 {
    let mut r = 1.0;
    let mut k = n;
    while k > 1 {
        r *= k as f64;
        k -= 2;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFunction {
    pub shell: usize,
    pub momentum: Momentum,
    /// Extra factor making this Cartesian component unit-normalized; 1 for `l <= 1`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub shells: Vec<Shell>,
    pub charge: i32,
    pub multiplicity: u32,
}

impl Molecule {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Molecule {
            atoms,
            shells: Vec::new(),
            charge: 0,
            multiplicity: 1,
        }
    }

    pub fn n_electrons(&self) -> i64 {
        self.atoms.iter().map(|a| a.atomic_number as i64).sum::<i64>() - self.charge as i64
    }

    /// Number of doubly occupied orbitals for a closed-shell state.
    pub fn n_occupied(&self) -> Result<usize> {
        let n = self.n_electrons();
        if n < 0 || n % 2 != 0 || self.multiplicity != 1 {
            return Err(Error::InvalidArgument(format!(
                "restricted closed-shell needs an even electron count and singlet multiplicity (electrons {n}, multiplicity {})",
                self.multiplicity
            )));
        }
        Ok((n / 2) as usize)
    }

    pub fn nuclear_repulsion(&self) -> f64 {
        let mut e = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[..i] {
                e += (a.atomic_number * b.atomic_number) as f64 / (a.position - b.position).norm();
            }
        }
        e
    }

    /// Replaces any existing shells with those from `basis`, one set per atom.
    pub fn attach_basis(mut self, basis: &BasisSet) -> Result<Molecule> {
        let mut shells = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            let templates = basis
                .shells_for(&atom.element)
                .ok_or_else(|| Error::MissingElement(atom.element.clone()))?;
            for t in templates {
                let mut shell =
                    Shell::normalized(atom.position, t.l, t.exponents.clone(), t.coefficients.clone())?;
                shell.atom = Some(i);
                shells.push(shell);
            }
        }
        self.shells = shells;
        Ok(self)
    }

    pub fn n_functions(&self) -> usize {
        self.shells.iter().map(Shell::n_functions).sum()
    }

    /// Offset of each shell's first function in [`Molecule::expand_functions`] order.
    pub fn shell_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.shells
            .iter()
            .map(|s| {
                let o = off;
                off += s.n_functions();
                o
            })
            .collect()
    }

    pub fn expand_functions(&self) -> Vec<BasisFunction> {
        let mut out = Vec::with_capacity(self.n_functions());
        for (i, shell) in self.shells.iter().enumerate() {
            for (m, scale) in cartesian_components(shell.l).into_iter().zip(component_scales(shell.l)) {
                out.push(BasisFunction {
                    shell: i,
                    momentum: m,
                    scale,
                });
            }
        }
        out
    }

    /// XYZ text in Angstrom, readable by [`parse_xyz`].
    pub fn to_xyz(&self, comment: &str) -> String {
        let mut s = format!("{}\n{}\n", self.atoms.len(), comment.replace('\n', " "));
        for a in &self.atoms {
            let p = a.position / BOHR_PER_ANGSTROM;
            s.push_str(&format!("{} {:?} {:?} {:?}\n", a.element, p.x, p.y, p.z));
        }
        s
    }

    /// Applies a rigid rotation to every atom and shell center.
    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> Molecule {
        let mut m = self.clone();
        for a in &mut m.atoms {
            a.position = rotation * a.position;
        }
        for s in &mut m.shells {
            s.center = rotation * s.center;
        }
        m
    }
}
