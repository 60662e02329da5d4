//! CSV dump of an instance: a header line `m,n,family,seed`, its values, then
//! `m` rows of `A`, then one row holding `y`. Floats use shortest
//! round-trip formatting so a dump reloads bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::ensemble::{EnsembleSpec, Family, ProblemInstance};
use crate::error::{Error, Result};

pub fn to_csv(inst: &ProblemInstance) -> String {
    let (m, n) = inst.a.dim();
    let (family, seed) = match inst.spec {
        Some(s) => (s.family.name().to_string(), s.seed.to_string()),
        None => ("custom".to_string(), "-".to_string()),
    };
    let mut out = String::with_capacity(24 * (m + 1) * n);
    let _ = writeln!(out, "m,n,family,seed");
    let _ = writeln!(out, "{m},{n},{family},{seed}");
    for row in inst.a.rows() {
        push_row(&mut out, row.iter());
    }
    push_row(&mut out, inst.y.iter());
    out
}

fn push_row<'a>(out: &mut String, vals: impl Iterator<Item = &'a f64>) {
    for (k, v) in vals.enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn from_csv(text: &str) -> Result<ProblemInstance> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty instance file".into()))?;
    if header.trim() != "m,n,family,seed" {
        return Err(Error::Parse(format!("unexpected header '{header}'")));
    }
    let meta: Vec<&str> =
        lines.next().ok_or_else(|| Error::Parse("missing metadata line".into()))?.split(',').map(str::trim).collect();
    if meta.len() != 4 {
        return Err(Error::Parse("metadata line needs 4 fields".into()));
    }
    let m: usize = meta[0].parse().map_err(|e| Error::Parse(format!("m: {e}")))?;
    let n: usize = meta[1].parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
    let parse_row = |line: Option<&str>, len: usize, what: &str| -> Result<Vec<f64>> {
        let line = line.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{what}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != len {
            return Err(Error::Parse(format!("{what} has {} values, expected {len}", vals.len())));
        }
        Ok(vals)
    };
    let mut flat = Vec::with_capacity(m * n);
    for r in 0..m {
        flat.extend(parse_row(lines.next(), n, &format!("row {r} of A"))?);
    }
    let y = parse_row(lines.next(), m, "y")?;
    let a = Array2::from_shape_vec((m, n), flat).map_err(|e| Error::Parse(e.to_string()))?;
    let mut inst = ProblemInstance::from_parts(a, Array1::from(y))?;
    if meta[2] != "custom" {
        let family: Family = meta[2].parse()?;
        let seed: u64 = meta[3].parse().map_err(|e| Error::Parse(format!("seed: {e}")))?;
        inst.spec = Some(EnsembleSpec::new(family, m, n, seed)?);
    }
    Ok(inst)
}

pub fn write(inst: &ProblemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(inst))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ProblemInstance> {
    from_csv(&std::fs::read_to_string(path)?)
}

/// SHA-256 over `"instance <len>\0"` followed by the CSV dump, in the style
/// of a git blob id.
pub fn content_hash(inst: &ProblemInstance) -> String {
    let body = to_csv(inst);
    let mut h = Sha256::new();
    h.update(format!("instance {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::OutcomeMode;

    #[test]
    fn reload_is_bit_exact() {
        let spec = EnsembleSpec::new(Family::Gaussian, 7, 13, 5).unwrap();
        let inst = ProblemInstance::generate(spec, OutcomeMode::Planted).unwrap();
        let back = from_csv(&to_csv(&inst)).unwrap();
        assert_eq!(inst, back);
        assert_eq!(content_hash(&inst), content_hash(&back));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ProblemInstance::generate(EnsembleSpec::new(Family::Uniform, 3, 6, 1).unwrap(), OutcomeMode::UniformBox).unwrap();
        let b = ProblemInstance::generate(EnsembleSpec::new(Family::Uniform, 3, 6, 2).unwrap(), OutcomeMode::UniformBox).unwrap();
        assert_ne!(content_hash(&a), content_hash(&b));
        assert_eq!(content_hash(&a).len(), 64);
    }

    #[test]
    fn truncated_file_is_an_error() {
        let inst =
            ProblemInstance::generate(EnsembleSpec::new(Family::Gaussian, 2, 4, 0).unwrap(), OutcomeMode::UniformBox).unwrap();
        let text = to_csv(&inst);
        let cut: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(from_csv(&cut).is_err());
    }
}
