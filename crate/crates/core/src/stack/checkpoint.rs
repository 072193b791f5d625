//! Line-oriented text checkpoints.
//!
//! ```text
//! cfnlab-ckpt v1 <kind> <depth> <hidden> <vocab>
//! tensor <name> <rows> <cols>
//! <rows lines of <cols> space-separated floats, 17 significant digits>
//! ...
//! ```
//!
//! Seventeen significant digits round-trip every `f64` exactly.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CellKind, ModelStack, StackParams};
use crate::cells::Params;
use crate::error::{Error, Result};

const MAGIC: &str = "cfnlab-ckpt";
const VERSION: &str = "v1";

pub fn write_checkpoint<W: Write>(m: &ModelStack, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(
        w,
        "{MAGIC} {VERSION} {} {} {} {}",
        m.kind,
        m.depth(),
        m.hidden(),
        m.vocab_size()
    )?;
    let mut res = Ok(());
    m.params.visit(&mut |name, rows, cols, data| {
        if res.is_err() {
            return;
        }
        res = write_tensor(&mut w, name, rows, cols, data);
    });
    res?;
    w.flush()?;
    Ok(())
}

fn write_tensor<W: Write>(w: &mut W, name: &str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    writeln!(w, "tensor {name} {rows} {cols}")?;
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let mut first = true;
        for x in row {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            write!(w, "{x:.16e}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<ModelStack> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, l)) => Ok(Some((i + 1, l?))),
            None => Ok(None),
        }
    };
    let (_, header) = next()?.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty checkpoint".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad header `{header}`"),
        });
    }
    let kind: CellKind = fields[2].parse()?;
    let dims: Vec<usize> = fields[3..]
        .iter()
        .map(|f| {
            f.parse().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("bad dimension `{f}`"),
            })
        })
        .collect::<Result<_>>()?;
    let (depth, hidden, vocab) = (dims[0], dims[1], dims[2]);
    if depth == 0 || hidden == 0 || vocab == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "dimensions must be positive".into(),
        });
    }

    let mut tensors: HashMap<String, (usize, usize, Vec<f64>)> = HashMap::new();
    while let Some((ln, line)) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "tensor" {
            return Err(Error::Parse {
                line: ln,
                msg: format!("expected `tensor <name> <rows> <cols>`, got `{line}`"),
            });
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: ln,
                msg: format!("bad dimension `{s}`"),
            })
        };
        let (rows, cols) = (parse_dim(f[2])?, parse_dim(f[3])?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rl, row) = next()?.ok_or_else(|| Error::Parse {
                line: ln,
                msg: format!("tensor {} truncated", f[1]),
            })?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: rl,
                    msg: format!("bad number `{tok}`"),
                })?);
            }
            if data.len() - before != cols {
                return Err(Error::Parse {
                    line: rl,
                    msg: format!("expected {cols} values, found {}", data.len() - before),
                });
            }
        }
        tensors.insert(f[1].to_string(), (rows, cols, data));
    }

    let mut params = StackParams::zeros(kind, depth, hidden, vocab);
    let mut shapes = HashMap::new();
    params.visit(&mut |name, r, c, _| {
        shapes.insert(name.to_string(), (r, c));
    });
    let mut err = None;
    params.visit_mut(&mut |name, dst| {
        if err.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some((r, c, data)) if (r, c) == shapes[name] => dst.copy_from_slice(&data),
            Some((r, c, _)) => {
                err = Some(Error::shape(
                    "checkpoint tensor",
                    format!("{name} {r}x{c}"),
                    format!("expected {}x{}", shapes[name].0, shapes[name].1),
                ))
            }
            None => {
                err = Some(Error::Parse {
                    line: 0,
                    msg: format!("missing tensor {name}"),
                })
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Parse {
            line: 0,
            msg: format!("unexpected tensor {extra}"),
        });
    }
    ModelStack::new(params, 0.0, 0.0)
}

pub fn save(m: &ModelStack, path: &Path) -> Result<()> {
    write_checkpoint(m, fs::File::create(path)?)
}

pub fn load(path: &Path) -> Result<ModelStack> {
    read_checkpoint(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use crate::stack::init_stack;

    #[test]
    fn round_trip_is_exact() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let mut m = init_stack(kind, 2, 3, 7, &mut Rng::new(1)).unwrap();
            m.params.out_b[0] = 1.0 / 3.0;
            m.params.out_b[1] = -1e-300;
            m.params.out_b[2] = 123456.789e10;
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            let back = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(back.params, m.params);
            let text = String::from_utf8(buf).unwrap();
            assert!(text.starts_with(&format!("cfnlab-ckpt v1 {kind} 2 3 7\ntensor embed 7 3\n")));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_checkpoint(&b"nonsense"[..]).is_err());
        assert!(read_checkpoint(&b"cfnlab-ckpt v1 cfn 1 2 3\ntensor embed 3 2\n1 2\n"[..]).is_err());
        let m = init_stack(CellKind::Cfn, 1, 2, 3, &mut Rng::new(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("tensor out.b 1 3", "tensor out.b 3 1");
        assert!(read_checkpoint(text.as_bytes()).is_err());
    }
}
