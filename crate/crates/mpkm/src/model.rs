//! Versioned text model format. All parameters are stored as raw fixed-point
//! integers so a save/load round trip is bit-exact. The stored vectors ride
//! along so a saved model is usable for prediction on its own.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::algebra::DifferentialVector;
use crate::fxp::{FxFormat, FxWord};
use crate::kernel::{ModelParams, StoredVectors};

const MAGIC: &str = "mpkm-model v1";

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub fmt: FxFormat,
    pub gamma2: FxWord,
    pub params: ModelParams<FxWord>,
    pub stored: StoredVectors<FxWord>,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad model file: {0}")]
    Parse(String),
    #[error("model/dataset dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

impl ModelFile {
    pub fn dims(&self) -> usize {
        self.stored.dims()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "dims {}", self.dims())?;
        writeln!(out, "count {}", self.params.count())?;
        writeln!(out, "total_bits {}", self.fmt.total_bits)?;
        writeln!(out, "frac_bits {}", self.fmt.frac_bits)?;
        writeln!(out, "gamma1 {}", self.params.gamma1.raw())?;
        writeln!(out, "gamma2 {}", self.gamma2.raw())?;
        writeln!(out, "b_plus {}", self.params.b_plus.raw())?;
        writeln!(out, "b_minus {}", self.params.b_minus.raw())?;
        write_raw_line(&mut out, "w_plus", &self.params.w_plus)?;
        write_raw_line(&mut out, "w_minus", &self.params.w_minus)?;
        for row in &self.stored.rows {
            let mut words: Vec<FxWord> = row.plus.clone();
            words.extend_from_slice(&row.minus);
            write_raw_line(&mut out, "sv", &words)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelFile, ModelError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = || -> Result<String, ModelError> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| ModelError::Parse("unexpected end of file".into()))
        };
        let header = next_line()?;
        if header.trim() != MAGIC {
            return Err(ModelError::Parse(format!("bad magic {header:?}")));
        }
        let dims = parse_kv(&next_line()?, "dims")? as usize;
        let count = parse_kv(&next_line()?, "count")? as usize;
        let total_bits = parse_kv(&next_line()?, "total_bits")? as u32;
        let frac_bits = parse_kv(&next_line()?, "frac_bits")? as u32;
        let fmt = FxFormat::new(total_bits, frac_bits)
            .map_err(|e| ModelError::Parse(e.to_string()))?;
        let word = |raw: i64| FxWord::from_raw(raw, fmt);
        let gamma1 = word(parse_kv(&next_line()?, "gamma1")?);
        let gamma2 = word(parse_kv(&next_line()?, "gamma2")?);
        let b_plus = word(parse_kv(&next_line()?, "b_plus")?);
        let b_minus = word(parse_kv(&next_line()?, "b_minus")?);
        let w_plus = parse_raw_line(&next_line()?, "w_plus", count, fmt)?;
        let w_minus = parse_raw_line(&next_line()?, "w_minus", count, fmt)?;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let words = parse_raw_line(&next_line()?, "sv", 2 * dims, fmt)?;
            rows.push(DifferentialVector {
                plus: words[..dims].to_vec(),
                minus: words[dims..].to_vec(),
            });
        }
        Ok(ModelFile {
            fmt,
            gamma2,
            params: ModelParams { w_plus, w_minus, b_plus, b_minus, gamma1 },
            stored: StoredVectors { rows },
        })
    }
}

fn write_raw_line(out: &mut impl Write, tag: &str, words: &[FxWord]) -> std::io::Result<()> {
    write!(out, "{tag}")?;
    for w in words {
        write!(out, " {}", w.raw())?;
    }
    writeln!(out)
}

fn parse_kv(line: &str, key: &str) -> Result<i64, ModelError> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some(k), Some(v)) if k == key => v
            .parse()
            .map_err(|_| ModelError::Parse(format!("bad value for {key}: {v:?}"))),
        _ => Err(ModelError::Parse(format!("expected `{key} <value>`, got {line:?}"))),
    }
}

fn parse_raw_line(
    line: &str,
    tag: &str,
    expected: usize,
    fmt: FxFormat,
) -> Result<Vec<FxWord>, ModelError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(ModelError::Parse(format!("expected `{tag}` line, got {line:?}")));
    }
    let words: Result<Vec<FxWord>, ModelError> = parts
        .map(|v| {
            v.parse::<i64>()
                .map(|raw| FxWord::from_raw(raw, fmt))
                .map_err(|_| ModelError::Parse(format!("bad raw value {v:?} in {tag}")))
        })
        .collect();
    let words = words?;
    if words.len() != expected {
        return Err(ModelError::Parse(format!(
            "{tag}: expected {expected} values, got {}",
            words.len()
        )));
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::encode_differential;
    use crate::fxp::quantize;

    fn sample_model() -> ModelFile {
        let fmt = FxFormat::DATAPATH;
        let proto = FxWord::zero(fmt);
        let rows = vec![
            encode_differential(&[0.25, -0.5], proto).unwrap(),
            encode_differential(&[-1.0, 0.125], proto).unwrap(),
        ];
        ModelFile {
            fmt,
            gamma2: quantize(2.0, fmt),
            params: ModelParams {
                w_plus: vec![quantize(0.3, fmt), quantize(-0.7, fmt)],
                w_minus: vec![quantize(0.1, fmt), quantize(7.9, fmt)],
                b_plus: quantize(-0.05, fmt),
                b_minus: quantize(0.02, fmt),
                gamma1: quantize(3.25, fmt),
            },
            stored: StoredVectors { rows },
        }
    }

    #[test]
    fn bit_exact_roundtrip() {
        let model = sample_model();
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path()).unwrap();
        let loaded = ModelFile::load(f.path()).unwrap();
        assert_eq!(loaded.fmt, model.fmt);
        assert_eq!(loaded.gamma2.raw(), model.gamma2.raw());
        assert_eq!(loaded.params.gamma1.raw(), model.params.gamma1.raw());
        assert_eq!(loaded.params.b_plus.raw(), model.params.b_plus.raw());
        for (a, b) in loaded.params.w_plus.iter().zip(&model.params.w_plus) {
            assert_eq!(a.raw(), b.raw());
        }
        for (a, b) in loaded.stored.rows.iter().zip(&model.stored.rows) {
            for (x, y) in a.plus.iter().zip(&b.plus) {
                assert_eq!(x.raw(), y.raw());
            }
            for (x, y) in a.minus.iter().zip(&b.minus) {
                assert_eq!(x.raw(), y.raw());
            }
        }
        // byte-identical after a second save
        let f2 = tempfile::NamedTempFile::new().unwrap();
        loaded.save(f2.path()).unwrap();
        assert_eq!(
            std::fs::read(f.path()).unwrap(),
            std::fs::read(f2.path()).unwrap()
        );
    }

    #[test]
    fn rejects_corrupt_files() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "not a model\n").unwrap();
        assert!(matches!(ModelFile::load(f.path()), Err(ModelError::Parse(_))));
    }
}
