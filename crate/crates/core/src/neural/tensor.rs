//! Dense row-major tensor. Values are f64 throughout; reduced-precision
//! training is realized by quantizing parameter state after optimizer steps
//! (see [`crate::neural::Precision`]), which keeps a single arithmetic path.

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.debug_assert_finite();
        t
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a 2-D tensor (or 1 for 1-D).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            n => panic!("rows() on {n}-d tensor"),
        }
    }

    /// Columns of a 2-D tensor (or its length for 1-D).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            n => panic!("cols() on {n}-d tensor"),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    /// `self [m,k] x other [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul {:?} x {:?}", self.shape, other.shape);
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (l, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b = other.row(l);
                for j in 0..n {
                    o[j] += av * b[j];
                }
            }
        }
        out
    }

    /// `self^T [k,m] x other [k,n] -> [m,n]` without materializing the
    /// transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        let (k, m) = (self.rows(), self.cols());
        assert_eq!(k, other.rows(), "matmul_tn {:?} x {:?}", self.shape, other.shape);
        let n = other.cols();
        let mut out = Tensor::zeros(&[m, n]);
        for l in 0..k {
            let a = self.row(l);
            let b = other.row(l);
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let o = out.row_mut(i);
                for j in 0..n {
                    o[j] += av * b[j];
                }
            }
        }
        out
    }

    /// `self [m,k] x other^T [n,k] -> [m,n]` without materializing the
    /// transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.rows(), self.cols());
        assert_eq!(k, other.cols(), "matmul_nt {:?} x {:?}", self.shape, other.shape);
        let n = other.rows();
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (j, slot) in o.iter_mut().enumerate().take(n) {
                let b = other.row(j);
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[l] * b[l];
                }
                *slot = acc;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Stack rows of `parts` vertically. All parts must share a column count.
    pub fn vcat(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let cols = parts[0].cols();
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut out = Tensor::zeros(&[rows, cols]);
        let mut at = 0;
        for p in parts {
            assert_eq!(p.cols(), cols, "vcat column mismatch");
            for i in 0..p.rows() {
                out.row_mut(at).copy_from_slice(p.row(i));
                at += 1;
            }
        }
        out
    }

    /// NaN/Inf detection, active in debug and test builds only.
    pub fn debug_assert_finite(&self) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "tensor {:?} contains non-finite values",
            self.shape
        );
    }

    pub fn validate_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PipelineError::Numerical(format!(
                "tensor {:?} contains non-finite values",
                self.shape
            )))
        }
    }
}
