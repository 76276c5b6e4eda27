//! Plain-text parameter checkpoints.
//!
//! ```text
//! pathnet-checkpoint 1
//! kind dlgn
//! input_dim 2
//! hidden_width 16
//! num_layers 6
//! output_dim 1
//! use_bias true
//! freeze none
//! matrix W 1 16 2
//! <16 lines of 2 space-separated floats>
//! bias W 1 16
//! <one line of 16 floats>
//! ...
//! matrix U 1 16 2
//! ...
//! end
//! ```
//!
//! Matrices appear in layer order `W_1..W_L`, then `U_1..U_L` for the DLGN
//! variants; each is followed by its bias line when `use_bias` is true.
//! Layer indices are 1-based. Floats use Rust's shortest round-trip
//! formatting, so a load after a save is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;

use super::{ArchKind, Architecture, Freeze, Layer, ModelParams};

const MAGIC: &str = "pathnet-checkpoint 1";

pub fn to_string(params: &ModelParams) -> String {
    let a = params.arch();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "kind {}", a.kind);
    let _ = writeln!(s, "input_dim {}", a.input_dim);
    let _ = writeln!(s, "hidden_width {}", a.hidden_width);
    let _ = writeln!(s, "num_layers {}", a.num_layers);
    let _ = writeln!(s, "output_dim {}", a.output_dim);
    let _ = writeln!(s, "use_bias {}", a.use_bias);
    let _ = writeln!(s, "freeze {}", params.freeze);
    let mut stacks = vec![("W", &params.weights)];
    if let Some(u) = &params.value_weights {
        stacks.push(("U", u));
    }
    for (name, stack) in stacks {
        for (l, layer) in stack.iter().enumerate() {
            let w = &layer.weight;
            let _ = writeln!(s, "matrix {name} {} {} {}", l + 1, w.rows(), w.cols());
            for row in w.row_iter() {
                push_floats(&mut s, row);
            }
            if let Some(b) = &layer.bias {
                let _ = writeln!(s, "bias {name} {} {}", l + 1, b.len());
                push_floats(&mut s, b);
            }
        }
    }
    s.push_str("end\n");
    s
}

fn push_floats(s: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:?}");
    }
    s.push('\n');
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn from_str(text: &str) -> std::result::Result<ModelParams, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| -> std::result::Result<(usize, Vec<&str>), String> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
            .ok_or_else(|| format!("unexpected end of file, expected {what}"))
    };

    let (_, magic) = next("header")?;
    if magic.join(" ") != MAGIC {
        return Err(format!("not a checkpoint (header `{}`)", magic.join(" ")));
    }
    let mut header = |key: &str| -> std::result::Result<String, String> {
        let (line, parts) = next(key)?;
        match parts.as_slice() {
            [k, v] if *k == key => Ok(v.to_string()),
            _ => Err(format!("line {line}: expected `{key} <value>`")),
        }
    };
    let kind: ArchKind = header("kind")?.parse().map_err(|e: Error| e.to_string())?;
    let num = |v: String| v.parse::<usize>().map_err(|e| e.to_string());
    let input_dim = num(header("input_dim")?)?;
    let hidden_width = num(header("hidden_width")?)?;
    let num_layers = num(header("num_layers")?)?;
    let output_dim = num(header("output_dim")?)?;
    let use_bias = header("use_bias")?.parse::<bool>().map_err(|e| e.to_string())?;
    let freeze: Freeze = header("freeze")?.parse().map_err(|e: Error| e.to_string())?;
    let arch = Architecture::new(kind, input_dim, hidden_width, num_layers, output_dim, use_bias)
        .map_err(|e| e.to_string())?;

    let floats = |line: usize, parts: &[&str], expect: usize| -> std::result::Result<Vec<f64>, String> {
        if parts.len() != expect {
            return Err(format!("line {line}: expected {expect} values, found {}", parts.len()));
        }
        parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| format!("line {line}: {e}")))
            .collect()
    };

    let mut read_stack = |name: &str| -> std::result::Result<Vec<Layer>, String> {
        let mut stack = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let (rows, cols) = arch.layer_shape(l);
            let (line, parts) = next("matrix header")?;
            let want = [
                "matrix".to_string(),
                name.to_string(),
                (l + 1).to_string(),
                rows.to_string(),
                cols.to_string(),
            ];
            if parts != want.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(format!("line {line}: expected `{}`", want.join(" ")));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (line, parts) = next("matrix row")?;
                data.extend(floats(line, &parts, cols)?);
            }
            let bias = if use_bias {
                let (line, parts) = next("bias header")?;
                let want = format!("bias {name} {} {rows}", l + 1);
                if parts.join(" ") != want {
                    return Err(format!("line {line}: expected `{want}`"));
                }
                let (line, parts) = next("bias values")?;
                Some(floats(line, &parts, rows)?)
            } else {
                None
            };
            stack.push(Layer {
                weight: Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())?,
                bias,
            });
        }
        Ok(stack)
    };

    let weights = read_stack("W")?;
    let value_weights = if kind.is_linearly_gated() {
        Some(read_stack("U")?)
    } else {
        None
    };
    let (line, end) = next("end")?;
    if end != ["end"] {
        return Err(format!("line {line}: expected `end`"));
    }
    let mut params = ModelParams::zeros(arch).map_err(|e| e.to_string())?;
    params.weights = weights;
    params.value_weights = value_weights;
    params.freeze = freeze;
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    #[test]
    fn save_then_load_is_bit_exact() {
        for kind in ArchKind::ALL {
            for bias in [false, true] {
                let arch = Architecture::new(kind, 3, 4, 3, 2, bias).unwrap();
                let mut p = ModelParams::init(arch, &mut Rng::new(9)).unwrap();
                p.freeze = Freeze {
                    gates: true,
                    values: false,
                };
                let q = from_str(&to_string(&p)).unwrap();
                assert_eq!(
                    p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    q.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
                assert_eq!(p, q);
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_str("hello").is_err());
        let arch = Architecture::new(ArchKind::Relu, 2, 2, 2, 1, true).unwrap();
        let text = to_string(&ModelParams::init(arch, &mut Rng::new(1)).unwrap());
        assert!(from_str(&text.replace("end\n", "")).is_err());
        assert!(from_str(&text.replace("matrix W 2 1 2", "matrix W 2 2 2")).is_err());
    }
}
