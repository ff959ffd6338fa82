use super::{elements, Atom, Molecule, Vec3};
use crate::error::{Error, Result};

pub const BOHR_PER_ANGSTROM: f64 = 1.8897259886;

pub fn read_xyz(path: impl AsRef<std::path::Path>) -> Result<Molecule> {
    parse_xyz(&std::fs::read_to_string(path)?)
}

/// Parses standard XYZ text (Angstrom) into a molecule without shells.
pub fn parse_xyz(text: &str) -> Result<Molecule> {
    let mut lines = text.lines().enumerate();
    let (_, count_line) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let declared: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(1, format!("expected atom count, found `{}`", count_line.trim())))?;
    // comment line
    lines.next();

    let mut atoms = Vec::with_capacity(declared);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if atoms.len() == declared {
            return Err(Error::parse(
                lineno,
                format!("declared {declared} atoms, found more"),
            ));
        }
        let mut fields = line.split_whitespace();
        let symbol = fields.next().unwrap_or_default();
        let z = elements::atomic_number(symbol)
            .ok_or_else(|| Error::parse(lineno, format!("unknown element symbol `{symbol}`")))?;
        let mut xyz = [0.0; 3];
        for c in &mut xyz {
            let field = fields
                .next()
                .ok_or_else(|| Error::parse(lineno, "expected three coordinates"))?;
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(lineno, format!("malformed number `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite coordinate `{field}`")));
            }
            *c = v * BOHR_PER_ANGSTROM;
        }
        atoms.push(Atom {
            element: elements::symbol(z).unwrap().to_string(),
            atomic_number: z,
            position: Vec3::from(xyz),
        });
    }
    if atoms.len() != declared {
        return Err(Error::parse(
            text.lines().count().max(1),
            format!("declared {declared} atoms, found {}", atoms.len()),
        ));
    }
    Ok(Molecule::new(atoms))
}
