//! Brute-force path enumeration.
//!
//! Everything here works one input and one path at a time, with plain loops
//! over the raw weights. None of it shares code with the batched forward
//! pass, so the two can check each other: the network output must equal the
//! sum over paths of `gate(path) * value(path)`, and the overlap kernel must
//! equal the number of paths active at both inputs.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::{ArchKind, ModelParams};

pub const DEFAULT_PATH_CAP: u64 = 1_000_000;

/// One hidden node per hidden layer, 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(pub Vec<usize>);

impl Path {
    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    /// Position in lexicographic order among all `m^(L-1)` paths.
    pub fn index(&self, width: usize) -> usize {
        self.0.iter().fold(0, |acc, &i| acc * width + i)
    }
}

impl fmt::Display for Path {
    /// 1-based, e.g. `(1,2)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn check_cap(width: usize, hidden_layers: usize, cap: u64) -> Result<usize> {
    let count = (width as u128).saturating_pow(hidden_layers as u32);
    if count > cap as u128 {
        return Err(Error::PathCapExceeded { count, cap });
    }
    Ok(count as usize)
}

/// All `m^(L-1)` paths in lexicographic order.
pub fn enumerate_paths(width: usize, num_layers: usize, cap: u64) -> Result<Vec<Path>> {
    if width == 0 || num_layers < 2 {
        return Err(Error::InvalidArgument(format!(
            "need m >= 1 and L >= 2, got m={width}, L={num_layers}"
        )));
    }
    let count = check_cap(width, num_layers - 1, cap)?;
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; num_layers - 1];
    for _ in 0..count {
        out.push(Path(current.clone()));
        // odometer increment, last layer fastest
        for slot in current.iter_mut().rev() {
            *slot += 1;
            if *slot < width {
                break;
            }
            *slot = 0;
        }
    }
    Ok(out)
}

/// Set of active paths of one input, as a bitset over lexicographic indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    words: Vec<u64>,
    len: usize,
}

impl ActiveSet {
    fn empty(len: usize) -> Self {
        ActiveSet {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    fn insert(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    pub fn contains(&self, idx: usize) -> bool {
        idx < self.len && self.words[idx / 64] & (1 << (idx % 64)) != 0
    }

    /// Total number of paths the set ranges over.
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn intersection_count(&self, other: &ActiveSet) -> u64 {
        assert_eq!(self.len, other.len, "active sets over different path universes");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a & b).count_ones()))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }
}

/// Path-level queries against one network.
pub struct PathOracle<'a> {
    params: &'a ModelParams,
    cap: u64,
}

impl<'a> PathOracle<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        PathOracle {
            params,
            cap: DEFAULT_PATH_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    fn width(&self) -> usize {
        self.params.arch().hidden_width
    }

    fn hidden_layers(&self) -> usize {
        self.params.arch().hidden_layers()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        let d = self.params.arch().input_dim;
        if x.len() != d {
            return Err(Error::ShapeMismatch {
                context: "path oracle input",
                expected: d.to_string(),
                found: x.len().to_string(),
            });
        }
        Ok(())
    }

    fn check_path(&self, path: &Path) -> Result<()> {
        if path.0.len() != self.hidden_layers() || path.0.iter().any(|&i| i >= self.width()) {
            return Err(Error::InvalidArgument(format!(
                "path {path} is not a sequence of {} nodes in 1..={}",
                self.hidden_layers(),
                self.width()
            )));
        }
        Ok(())
    }

    /// Hard gate bits per hidden layer, from a scalar re-derivation of the
    /// gating recursion.
    pub fn gate_bits(&self, x: &[f64]) -> Result<Vec<Vec<bool>>> {
        self.check_input(x)?;
        let arch = self.params.arch();
        let m = arch.hidden_width;
        let affine = |layer: usize, input: &[f64]| -> Vec<f64> {
            let l = &self.params.weights[layer];
            (0..m)
                .map(|i| {
                    let mut s = l.bias.as_ref().map_or(0.0, |b| b[i]);
                    for (j, v) in input.iter().enumerate() {
                        s += l.weight[(i, j)] * v;
                    }
                    s
                })
                .collect()
        };
        let mut bits = Vec::with_capacity(arch.hidden_layers());
        let mut state = x.to_vec();
        for layer in 0..arch.hidden_layers() {
            let pre = affine(layer, &state);
            let on: Vec<bool> = pre.iter().map(|&z| z >= 0.0).collect();
            state = match arch.kind {
                // gating network is purely linear
                ArchKind::Dlgn | ArchKind::DlgnPwc | ArchKind::Dln => pre,
                ArchKind::Relu => pre.iter().map(|&z| if z >= 0.0 { z } else { 0.0 }).collect(),
            };
            bits.push(if arch.kind == ArchKind::Dln { vec![true; m] } else { on });
        }
        Ok(bits)
    }

    /// `f_π(x)`: 1 when every neuron on the path is active. Always 1 for DLN.
    pub fn path_gate(&self, x: &[f64], path: &Path) -> Result<bool> {
        self.check_path(path)?;
        let bits = self.gate_bits(x)?;
        Ok(path.0.iter().enumerate().all(|(l, &i)| bits[l][i]))
    }

    /// `g_π(x)`, one value per output unit: the product of value-network
    /// edge weights along the path times the first-layer inner product with
    /// `x` (with the all-ones vector for DLGN-PWC).
    pub fn path_value(&self, x: &[f64], path: &Path) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_path(path)?;
        let arch = self.params.arch();
        if arch.use_bias {
            return Err(Error::InvalidArgument(
                "path values are defined for bias-free networks only".into(),
            ));
        }
        let stack = match arch.kind {
            ArchKind::Dlgn | ArchKind::DlgnPwc => self.params.value_weights.as_ref().expect("DLGN params"),
            ArchKind::Relu | ArchKind::Dln => &self.params.weights,
        };
        let first = path.0[0];
        let mut inner = 0.0;
        for (j, &xv) in x.iter().enumerate() {
            let xj = if arch.kind == ArchKind::DlgnPwc { 1.0 } else { xv };
            inner += stack[0].weight[(first, j)] * xj;
        }
        let mut product = inner;
        for (l, pair) in path.0.windows(2).enumerate() {
            product *= stack[l + 1].weight[(pair[1], pair[0])];
        }
        let last = *path.0.last().expect("L >= 2");
        Ok((0..arch.output_dim)
            .map(|k| stack[arch.num_layers - 1].weight[(k, last)] * product)
            .collect())
    }

    /// `Σ_π f_π(x) g_π(x)` per output unit.
    pub fn moe_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        let arch = self.params.arch();
        let paths = enumerate_paths(arch.hidden_width, arch.num_layers, self.cap)?;
        let bits = self.gate_bits(x)?;
        let mut total = vec![0.0; arch.output_dim];
        for path in &paths {
            if path.0.iter().enumerate().all(|(l, &i)| bits[l][i]) {
                for (t, v) in total.iter_mut().zip(self.path_value(x, path)?) {
                    *t += v;
                }
            }
        }
        Ok(total)
    }

    /// `A(x)`, by testing every path.
    pub fn active_set(&self, x: &[f64]) -> Result<ActiveSet> {
        let arch = self.params.arch();
        let paths = enumerate_paths(arch.hidden_width, arch.num_layers, self.cap)?;
        let bits = self.gate_bits(x)?;
        let mut set = ActiveSet::empty(paths.len());
        for (idx, path) in paths.iter().enumerate() {
            if path.0.iter().enumerate().all(|(l, &i)| bits[l][i]) {
                set.insert(idx);
            }
        }
        Ok(set)
    }

    /// `|A(x) ∩ A(x')|`.
    pub fn overlap_bruteforce(&self, x: &[f64], x2: &[f64]) -> Result<u64> {
        Ok(self.active_set(x)?.intersection_count(&self.active_set(x2)?))
    }

    /// Concatenated hard gate bits, length `(L-1)·m`.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self.gate_bits(x)?.into_iter().flatten().collect())
    }

    /// Number of distinct activation patterns over the rows of `inputs`.
    pub fn count_distinct_patterns(&self, inputs: &Matrix) -> Result<usize> {
        let mut seen = HashSet::new();
        for row in inputs.row_iter() {
            seen.insert(self.activation_pattern(row)?);
        }
        Ok(seen.len())
    }
}
