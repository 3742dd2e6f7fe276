//! Binary model checkpoints.
//!
//! ```text
//! TFUSE01\n
//! <mode>,<layer_count>\n
//! lstm,<input>,<hidden>,<activation>,<seq|last>,<cells>\n  then per cell: w, u, b
//! dense,<input>,<output>,<activation>\n                    then w, b
//! ```
//!
//! Parameter blocks are little-endian `f64`, row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::{CellActivation, DenseActivation, DenseLayer, LstmLayer, LstmParams};
use super::{FusionModel, Layer, ModelMode};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "TFUSE01";

fn put(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint(model: &FusionModel, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "{},{}", model.mode.as_str(), model.layers.len())?;
    for layer in &model.layers {
        match layer {
            Layer::Lstm(l) => {
                writeln!(
                    out,
                    "lstm,{},{},{},{},{}",
                    l.input(),
                    l.hidden(),
                    l.activation.as_str(),
                    if l.return_sequences { "seq" } else { "last" },
                    l.cells.len()
                )?;
                for c in &l.cells {
                    put(&mut out, &c.w)?;
                    put(&mut out, &c.u)?;
                    put(&mut out, &c.b)?;
                }
            }
            Layer::Dense(d) => {
                writeln!(
                    out,
                    "dense,{},{},{}",
                    d.input,
                    d.output,
                    d.activation.as_str()
                )?;
                put(&mut out, &d.w)?;
                put(&mut out, &d.b)?;
            }
        }
    }
    Ok(())
}

pub fn save_checkpoint(model: &FusionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_checkpoint(model, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

fn line(input: &mut impl BufRead) -> Result<String> {
    let mut s = String::new();
    input.read_line(&mut s).map_err(|e| bad(e.to_string()))?;
    if s.is_empty() {
        return Err(bad("unexpected end of file"));
    }
    Ok(s.trim_end_matches('\n').to_string())
}

fn block(input: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|_| bad("truncated parameter block"))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn num(s: &str) -> Result<usize> {
    s.parse().map_err(|_| bad(format!("bad number {s:?}")))
}

pub fn read_checkpoint(mut input: impl BufRead) -> Result<FusionModel> {
    if line(&mut input)? != CHECKPOINT_MAGIC {
        return Err(bad("missing TFUSE01 magic"));
    }
    let head = line(&mut input)?;
    let (mode, count) = head.split_once(',').ok_or_else(|| bad("bad header"))?;
    let mode = ModelMode::parse(mode)?;
    let count = num(count)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = line(&mut input)?;
        let f: Vec<&str> = spec.split(',').collect();
        match f.as_slice() {
            ["lstm", input_size, hidden, act, kind, cells] => {
                let (i, h) = (num(input_size)?, num(hidden)?);
                let cells = (0..num(cells)?)
                    .map(|_| {
                        Ok(LstmParams {
                            input: i,
                            hidden: h,
                            w: block(&mut input, 4 * h * i)?,
                            u: block(&mut input, 4 * h * h)?,
                            b: block(&mut input, 4 * h)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if cells.is_empty() {
                    return Err(bad("lstm layer without cells"));
                }
                layers.push(Layer::Lstm(LstmLayer {
                    cells,
                    activation: CellActivation::parse(act)?,
                    return_sequences: match *kind {
                        "seq" => true,
                        "last" => false,
                        other => return Err(bad(format!("bad lstm output kind {other:?}"))),
                    },
                }));
            }
            ["dense", input_size, output, act] => {
                let (i, o) = (num(input_size)?, num(output)?);
                layers.push(Layer::Dense(DenseLayer {
                    input: i,
                    output: o,
                    w: block(&mut input, o * i)?,
                    b: block(&mut input, o)?,
                    activation: DenseActivation::parse(act)?,
                }));
            }
            _ => return Err(bad(format!("bad layer header {spec:?}"))),
        }
    }
    let mut rest = Vec::new();
    input
        .read_to_end(&mut rest)
        .map_err(|e| bad(e.to_string()))?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(FusionModel { mode, layers })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FusionModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Architecture;

    #[test]
    fn roundtrip_is_exact() {
        for (mode, unshared) in [(ModelMode::Glcm2d, Some(8)), (ModelMode::Glcm3d, None)] {
            let arch = Architecture {
                hidden: 5,
                dense_hidden: 4,
                unshared_timesteps: unshared,
                activation: CellActivation::Tanh,
                ..Architecture::default()
            };
            let m = FusionModel::new(mode, 7, &arch).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            assert!(buf.starts_with(b"TFUSE01\n"));
            assert_eq!(read_checkpoint(&buf[..]).unwrap(), m);
            assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
            let mut extra = buf.clone();
            extra.push(0);
            assert!(read_checkpoint(&extra[..]).is_err());
        }
        assert!(read_checkpoint(&b"TFUSE02\nglcm3d,0\n"[..]).is_err());
    }
}
