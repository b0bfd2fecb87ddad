use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Instance;
use crate::error::{Error, Result};

/// Writes one JSON instance per line.
pub fn write_instances<W: Write>(mut out: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_instances<R: Read>(input: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut inst: Instance = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("corpus line {}: {e}", lineno + 1)))?;
        inst.sort_documents();
        out.push(inst);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, instances: &[Instance]) -> Result<()> {
    write_instances(BufWriter::new(File::create(path)?), instances)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Instance>> {
    read_instances(File::open(path)?)
}
