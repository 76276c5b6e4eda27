//! Gate kernels, the overlap kernel and the empirical tangent kernel.
//!
//! The overlap kernel `Λ(x, x')` counts paths active at both inputs. Because
//! the path set is a Cartesian product of per-layer node sets, it factorizes
//! into the entrywise product of per-layer kernels `K_ℓ(x, x') = ⟨G_ℓ(x),
//! G_ℓ(x')⟩`, each counting neurons active at both inputs.

mod ntk;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::data::Region;
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::GateTensor;

pub use ntk::{empirical_ntk, ntk_diagonal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Per-layer gate kernel of hidden layer `ℓ` (0-based).
    Layer(usize),
    Overlap,
    Ntk,
}

impl KernelKind {
    pub fn label(self) -> String {
        match self {
            KernelKind::Layer(l) => format!("layer{}", l + 1),
            KernelKind::Overlap => "overlap".into(),
            KernelKind::Ntk => "ntk".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub kind: KernelKind,
    pub normalized: bool,
    pub matrix: Matrix,
}

impl KernelMatrix {
    pub fn new(kind: KernelKind, matrix: Matrix) -> Self {
        KernelMatrix {
            kind,
            normalized: false,
            matrix,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[(a, b)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.matrix[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Symmetry and positive-semidefiniteness diagnostics.
    pub fn psd_report(&self) -> PsdReport {
        let n = self.n();
        let mut max_asymmetry: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let (x, y) = (self.matrix[(a, b)], self.matrix[(b, a)]);
                max_asymmetry = max_asymmetry.max((x - y).abs() / 1f64.max(x.abs()));
            }
        }
        let min_eigenvalue = if n == 0 {
            0.0
        } else {
            let dense = DMatrix::from_row_slice(n, n, self.matrix.as_slice());
            let sym = (&dense + dense.transpose()) * 0.5;
            SymmetricEigen::new(sym).eigenvalues.min()
        };
        let eigen_floor = if n == 0 {
            0.0
        } else {
            -1e-6 * self.trace().abs() / n as f64
        };
        PsdReport {
            max_asymmetry,
            min_eigenvalue,
            eigen_floor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    /// `max |K[a][b] - K[b][a]| / max(1, |K[a][b]|)`.
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// `-1e-6 · trace / n`.
    pub eigen_floor: f64,
}

impl PsdReport {
    pub fn symmetric(&self) -> bool {
        self.max_asymmetry <= 1e-9
    }

    pub fn psd(&self) -> bool {
        self.min_eigenvalue >= self.eigen_floor
    }

    pub fn passes(&self) -> bool {
        self.symmetric() && self.psd()
    }
}

/// Gate bits of one layer packed per input, for popcount inner products.
fn pack_layer(gates: &Matrix) -> Vec<Vec<u64>> {
    gates
        .row_iter()
        .map(|row| {
            let mut words = vec![0u64; row.len().div_ceil(64)];
            for (i, &g) in row.iter().enumerate() {
                if g >= 0.5 {
                    words[i / 64] |= 1 << (i % 64);
                }
            }
            words
        })
        .collect()
}

fn shared_counts(gates: &Matrix) -> Vec<u64> {
    let packed = pack_layer(gates);
    let n = packed.len();
    let mut out = vec![0u64; n * n];
    for a in 0..n {
        for b in a..n {
            let c: u64 = packed[a]
                .iter()
                .zip(&packed[b])
                .map(|(x, y)| u64::from((x & y).count_ones()))
                .sum();
            out[a * n + b] = c;
            out[b * n + a] = c;
        }
    }
    out
}

fn require_hard(gates: &GateTensor) -> Result<()> {
    if !gates.is_binary() {
        return Err(Error::InvalidArgument("gate kernels need hard (binary) gates".into()));
    }
    Ok(())
}

/// `K_ℓ[a][b]` = number of layer-`ℓ` neurons active at both inputs.
pub fn layer_kernel(gates: &GateTensor, layer: usize) -> Result<KernelMatrix> {
    require_hard(gates)?;
    let g = gates
        .layers
        .get(layer)
        .ok_or_else(|| Error::InvalidArgument(format!("no hidden layer {layer}")))?;
    let n = g.rows();
    let data = shared_counts(g).into_iter().map(|c| c as f64).collect();
    Ok(KernelMatrix::new(
        KernelKind::Layer(layer),
        Matrix::from_vec(n, n, data)?,
    ))
}

/// Exact integer overlap counts `Λ[a][b] = Π_ℓ K_ℓ[a][b]`, row-major.
pub fn overlap_counts(gates: &GateTensor) -> Result<Vec<u64>> {
    require_hard(gates)?;
    let n = gates.num_inputs();
    let mut acc = vec![1u64; n * n];
    for g in &gates.layers {
        for (a, c) in acc.iter_mut().zip(shared_counts(g)) {
            *a *= c;
        }
    }
    Ok(acc)
}

/// Overlap kernel as a float matrix. Entries are exact integers for any
/// network with fewer than 2^53 paths.
pub fn overlap_kernel(gates: &GateTensor) -> Result<KernelMatrix> {
    let n = gates.num_inputs();
    let data = overlap_counts(gates)?.into_iter().map(|c| c as f64).collect();
    Ok(KernelMatrix::new(KernelKind::Overlap, Matrix::from_vec(n, n, data)?))
}

/// Scales `K` so that its diagonal averages one: `K · n / trace(K)`.
pub fn trace_normalize(k: &KernelMatrix) -> Result<KernelMatrix> {
    let trace = k.trace();
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::NonPositiveTrace(trace));
    }
    let mut out = k.clone();
    out.matrix.scale(k.n() as f64 / trace);
    out.normalized = true;
    Ok(out)
}

/// Diagonal and block means of a kernel split into two regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionStats {
    pub mean_diag_simple: f64,
    pub mean_diag_complex: f64,
    pub mean_block_ss: f64,
    pub mean_block_cc: f64,
    pub mean_block_sc: f64,
}

pub fn region_stats(k: &KernelMatrix, regions: &[Region]) -> Result<RegionStats> {
    let n = k.n();
    if regions.len() != n {
        return Err(Error::ShapeMismatch {
            context: "region_stats",
            expected: format!("{n} region tags"),
            found: regions.len().to_string(),
        });
    }
    let simple: Vec<usize> = (0..n).filter(|&i| regions[i] == Region::Simple).collect();
    let complex: Vec<usize> = (0..n).filter(|&i| regions[i] == Region::Complex).collect();
    if simple.is_empty() {
        return Err(Error::EmptyRegion("simple"));
    }
    if complex.is_empty() {
        return Err(Error::EmptyRegion("complex"));
    }
    let mean_diag = |idx: &[usize]| idx.iter().map(|&i| k.get(i, i)).sum::<f64>() / idx.len() as f64;
    let mean_block = |rows: &[usize], cols: &[usize]| {
        let mut s = 0.0;
        for &a in rows {
            for &b in cols {
                s += k.get(a, b);
            }
        }
        s / (rows.len() * cols.len()) as f64
    };
    Ok(RegionStats {
        mean_diag_simple: mean_diag(&simple),
        mean_diag_complex: mean_diag(&complex),
        mean_block_ss: mean_block(&simple, &simple),
        mean_block_cc: mean_block(&complex, &complex),
        mean_block_sc: mean_block(&simple, &complex),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gates(layers: Vec<Vec<Vec<f64>>>) -> GateTensor {
        GateTensor {
            layers: layers.iter().map(|l| Matrix::from_rows(l).unwrap()).collect(),
        }
    }

    #[test]
    fn all_active_layer_is_constant_width() {
        let g = gates(vec![vec![vec![1.0; 5]; 4]]);
        let k = layer_kernel(&g, 0).unwrap();
        assert!(k.matrix.as_slice().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn layer_diagonal_counts_active() {
        let g = gates(vec![vec![vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0; 3]]]);
        let k = layer_kernel(&g, 0).unwrap();
        assert_eq!(k.diagonal(), vec![2.0, 1.0, 0.0]);
        assert_eq!(k.get(0, 1), 1.0);
    }

    #[test]
    fn dead_layer_zeroes_overlap() {
        let g = gates(vec![
            vec![vec![1.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 1.0], vec![0.0, 0.0]],
        ]);
        let k = overlap_kernel(&g).unwrap();
        assert_eq!(k.get(0, 0), 4.0);
        assert_eq!(k.get(0, 1), 0.0);
        assert_eq!(k.get(1, 1), 0.0);
    }

    #[test]
    fn soft_gates_are_rejected() {
        let g = gates(vec![vec![vec![0.3, 1.0]]]);
        assert!(overlap_kernel(&g).is_err());
    }

    #[test]
    fn normalization() {
        let id = KernelMatrix::new(KernelKind::Ntk, Matrix::identity(5));
        assert_eq!(trace_normalize(&id).unwrap().matrix, id.matrix);
        let mut m = Matrix::filled(3, 3, 0.5);
        for i in 0..3 {
            m[(i, i)] = 4.0;
        }
        let k = trace_normalize(&KernelMatrix::new(KernelKind::Overlap, m)).unwrap();
        assert_eq!(k.diagonal(), vec![1.0; 3]);
        assert!(k.normalized);
        let zero = KernelMatrix::new(KernelKind::Ntk, Matrix::zeros(2, 2));
        assert!(matches!(trace_normalize(&zero), Err(Error::NonPositiveTrace(_))));
    }

    #[test]
    fn region_blocks() {
        let c = KernelMatrix::new(KernelKind::Ntk, Matrix::filled(4, 4, 2.5));
        let tags = [Region::Simple, Region::Complex, Region::Simple, Region::Complex];
        let s = region_stats(&c, &tags).unwrap();
        for v in [
            s.mean_diag_simple,
            s.mean_diag_complex,
            s.mean_block_ss,
            s.mean_block_cc,
            s.mean_block_sc,
        ] {
            assert_eq!(v, 2.5);
        }

        let mut m = Matrix::zeros(4, 4);
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] = 2.0;
                m[(a + 2, b + 2)] = 3.0;
            }
        }
        let tags = [Region::Simple, Region::Simple, Region::Complex, Region::Complex];
        let s = region_stats(&KernelMatrix::new(KernelKind::Overlap, m), &tags).unwrap();
        assert_eq!((s.mean_block_ss, s.mean_block_cc, s.mean_block_sc), (2.0, 3.0, 0.0));
        assert!(matches!(
            region_stats(&c, &[Region::Simple; 4]),
            Err(Error::EmptyRegion("complex"))
        ));
    }

    #[test]
    fn psd_report_flags_indefinite() {
        let good = KernelMatrix::new(KernelKind::Ntk, Matrix::identity(3));
        assert!(good.psd_report().passes());
        let bad = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let r = KernelMatrix::new(KernelKind::Ntk, bad).psd_report();
        assert!(r.symmetric() && !r.psd());
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(!KernelMatrix::new(KernelKind::Ntk, asym).psd_report().symmetric());
    }
}
