//! One SKAN layer: an `n_out × n_in` grid of edge functions, each with a
//! single learnable scalar, followed by node-wise summation.
//!
//! ```text
//! out[b, i] = Σ_j φ(X[b, j]; K[i, j])
//! ```
//!
//! A training forward pass records `base′(k·x)` per edge in a [`LayerTape`]
//! so backward needs no further basis evaluations. All sums run in ascending index
//! order (over `j` for outputs, over `b` for `dK`, over `i` for `dX`), and the
//! parallel path partitions work so that each element keeps that order. The
//! two execution modes therefore produce bitwise-identical results.
//!
//! Inputs that are exactly zero (most MNIST pixels) are special-cased:
//! `φ(0; k) = base(0)` and `∂φ/∂k = 0` there, so when `base(0) = 0` those
//! edges are skipped without changing any result.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::basis::BasisId;
use crate::error::{Result, SkanError};
use crate::rng::SkanRng;
use crate::tensor::{Matrix, Real};

/// How batched kernels are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Single thread, fixed loop order.
    #[default]
    Deterministic,
    /// Rows are distributed over the rayon pool.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkanLayer<T: Real = f64> {
    n_in: usize,
    n_out: usize,
    basis: BasisId,
    k: Matrix<T>,
}

/// What a training forward pass keeps for backward: the nonzero inputs of
/// each row and `base′(k·x)` on the edges they feed.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTape<T: Real = f64> {
    nz: Vec<Vec<(usize, T)>>,
    /// Row `b` occupies `offsets[b]..offsets[b + 1]` of `deriv`, laid out
    /// `[output][nonzero input]`.
    offsets: Vec<usize>,
    deriv: Vec<T>,
}

impl<T: Real> LayerTape<T> {
    fn deriv(&self, b: usize, i: usize) -> &[T] {
        let n = self.nz[b].len();
        let start = self.offsets[b] + i * n;
        &self.deriv[start..start + n]
    }
}

/// Gradients of a scalar loss with respect to a layer's parameters and input.
/// `dk` is always accumulated in 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T: Real = f64> {
    pub dk: Matrix<f64>,
    pub dx: Matrix<T>,
}

impl<T: Real> SkanLayer<T> {
    pub fn new(basis: BasisId, k: Matrix<T>) -> Result<Self> {
        if !k.all_finite() {
            return Err(SkanError::Contract {
                op: "SkanLayer::new",
                detail: "parameter grid contains non-finite values".into(),
            });
        }
        Ok(Self {
            n_in: k.cols(),
            n_out: k.rows(),
            basis,
            k,
        })
    }

    pub fn zeros(n_in: usize, n_out: usize, basis: BasisId) -> Self {
        Self {
            n_in,
            n_out,
            basis,
            k: Matrix::zeros(n_out, n_in),
        }
    }

    /// Parameters drawn uniformly from `[−1/√n_in, 1/√n_in]`, row-major.
    pub fn init_uniform(n_in: usize, n_out: usize, basis: BasisId, rng: &mut SkanRng) -> Self {
        let bound = 1.0 / (n_in.max(1) as f64).sqrt();
        let k = Matrix::from_fn(n_out, n_in, |_, _| T::from_f64(rng.uniform(-bound, bound)));
        Self {
            n_in,
            n_out,
            basis,
            k,
        }
    }

    #[inline]
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    #[inline]
    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn basis(&self) -> BasisId {
        self.basis
    }

    #[inline]
    pub fn params(&self) -> &Matrix<T> {
        &self.k
    }

    #[inline]
    pub fn params_mut(&mut self) -> &mut Matrix<T> {
        &mut self.k
    }

    /// One scalar per edge.
    pub fn param_count(&self) -> usize {
        self.n_in * self.n_out
    }

    fn check_input(&self, op: &'static str, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.n_in {
            return Err(SkanError::shape(
                op,
                format!("input with {} columns", self.n_in),
                format!("{} columns", x.cols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.forward_exec(x, Exec::Deterministic)
    }

    pub fn forward_exec(&self, x: &Matrix<T>, exec: Exec) -> Result<Matrix<T>> {
        self.check_input("SkanLayer::forward", x)?;
        let mut out = Matrix::zeros(x.rows(), self.n_out);
        if self.n_out == 0 {
            return Ok(out);
        }
        let run = |(b, out_row): (usize, &mut [T])| {
            let xb = x.row(b);
            self.forward_row(xb, &nonzero_entries(xb), out_row, None)
        };
        match exec {
            Exec::Deterministic => out
                .as_mut_slice()
                .chunks_mut(self.n_out)
                .enumerate()
                .for_each(run),
            Exec::Parallel => out
                .as_mut_slice()
                .par_chunks_mut(self.n_out)
                .enumerate()
                .for_each(run),
        }
        Ok(out)
    }

    /// Forward pass that also records `base′(k·x)` on every edge with a
    /// nonzero input, for [`backward_taped`](Self::backward_taped). The
    /// output is bitwise equal to [`forward_exec`](Self::forward_exec).
    pub fn forward_taped(&self, x: &Matrix<T>, exec: Exec) -> Result<(Matrix<T>, LayerTape<T>)> {
        self.check_input("SkanLayer::forward_taped", x)?;
        let nz: Vec<Vec<(usize, T)>> = x.iter_rows().map(nonzero_entries).collect();
        let mut offsets = Vec::with_capacity(nz.len() + 1);
        offsets.push(0);
        for row in &nz {
            offsets.push(offsets[offsets.len() - 1] + row.len() * self.n_out);
        }
        let mut deriv = vec![T::zero(); offsets[nz.len()]];
        let mut out = Matrix::zeros(x.rows(), self.n_out);
        if self.n_out > 0 {
            let mut slices = Vec::with_capacity(nz.len());
            let mut rest = deriv.as_mut_slice();
            for row in &nz {
                let (head, tail) = rest.split_at_mut(row.len() * self.n_out);
                slices.push(head);
                rest = tail;
            }
            let run = |((b, out_row), d): ((usize, &mut [T]), &mut [T])| {
                self.forward_row(x.row(b), &nz[b], out_row, Some(d))
            };
            match exec {
                Exec::Deterministic => out
                    .as_mut_slice()
                    .chunks_mut(self.n_out)
                    .enumerate()
                    .zip(slices)
                    .for_each(run),
                Exec::Parallel => out
                    .as_mut_slice()
                    .par_chunks_mut(self.n_out)
                    .enumerate()
                    .zip(slices)
                    .for_each(run),
            }
        }
        Ok((out, LayerTape { nz, offsets, deriv }))
    }

    fn forward_row(&self, x: &[T], nz: &[(usize, T)], out: &mut [T], mut deriv: Option<&mut [T]>) {
        let basis = self.basis;
        let zero_value: T = basis.base(T::zero());
        let n = nz.len();
        for (i, o) in out.iter_mut().enumerate() {
            let k = self.k.row(i);
            let mut d = deriv.as_deref_mut().map(|d| &mut d[i * n..(i + 1) * n]);
            let mut acc = T::zero();
            if zero_value == T::zero() {
                for (s, &(j, xj)) in nz.iter().enumerate() {
                    acc = acc + edge(basis, k[j] * xj, &mut d, s);
                }
            } else {
                let mut s = 0;
                for (&kij, &xj) in k.iter().zip(x) {
                    if xj == T::zero() {
                        acc = acc + zero_value;
                    } else {
                        acc = acc + edge(basis, kij * xj, &mut d, s);
                        s += 1;
                    }
                }
            }
            *o = acc;
        }
    }

    /// Parameter and input gradients for cotangent `d_out`.
    pub fn backward(&self, x: &Matrix<T>, d_out: &Matrix<T>) -> Result<LayerGradients<T>> {
        let (dk, dx) = self.backward_exec(x, d_out, true, Exec::Deterministic)?;
        Ok(LayerGradients {
            dk,
            dx: dx.expect("input gradient requested"),
        })
    }

    /// Backward pass; the input gradient is skipped unless `want_dx`, which
    /// is what the first layer of a network needs.
    pub fn backward_exec(
        &self,
        x: &Matrix<T>,
        d_out: &Matrix<T>,
        want_dx: bool,
        exec: Exec,
    ) -> Result<(Matrix<f64>, Option<Matrix<T>>)> {
        let (_, tape) = self.forward_taped(x, exec)?;
        self.backward_taped(x, &tape, d_out, want_dx, exec)
    }

    /// Backward pass reusing the partials recorded by
    /// [`forward_taped`](Self::forward_taped) on the same `x`.
    pub fn backward_taped(
        &self,
        x: &Matrix<T>,
        tape: &LayerTape<T>,
        d_out: &Matrix<T>,
        want_dx: bool,
        exec: Exec,
    ) -> Result<(Matrix<f64>, Option<Matrix<T>>)> {
        self.check_input("SkanLayer::backward", x)?;
        if d_out.shape() != (x.rows(), self.n_out) {
            return Err(SkanError::shape(
                "SkanLayer::backward",
                format!("cotangent {}x{}", x.rows(), self.n_out),
                format!("{}x{}", d_out.rows(), d_out.cols()),
            ));
        }
        if tape.nz.len() != x.rows() || tape.deriv.len() != tape.offsets[tape.nz.len()] {
            return Err(SkanError::Contract {
                op: "SkanLayer::backward",
                detail: format!("tape covers {} rows, input has {}", tape.nz.len(), x.rows()),
            });
        }
        let batch = x.rows();

        let mut dk = Matrix::<f64>::zeros(self.n_out, self.n_in);
        if self.n_in > 0 {
            let rows = |(i, dk_row): (usize, &mut [f64])| {
                for (b, nz_b) in tape.nz.iter().enumerate() {
                    let g = d_out[(b, i)];
                    if g == T::zero() {
                        continue;
                    }
                    for (&(j, xj), &d) in nz_b.iter().zip(tape.deriv(b, i)) {
                        dk_row[j] += (g * xj * d).as_f64();
                    }
                }
            };
            match exec {
                Exec::Deterministic => dk
                    .as_mut_slice()
                    .chunks_mut(self.n_in)
                    .enumerate()
                    .for_each(rows),
                Exec::Parallel => dk
                    .as_mut_slice()
                    .par_chunks_mut(self.n_in)
                    .enumerate()
                    .for_each(rows),
            }
        }

        if !want_dx {
            return Ok((dk, None));
        }
        let deriv_at_zero: T = self.basis.base_deriv(T::zero());
        let mut dx = Matrix::<T>::zeros(batch, self.n_in);
        if self.n_in > 0 {
            let rows = |(b, dx_row): (usize, &mut [T])| {
                let nz_b = &tape.nz[b];
                for (i, &g) in d_out.row(b).iter().enumerate() {
                    let k = self.k.row(i);
                    let d = tape.deriv(b, i);
                    let mut s = 0;
                    for (j, (acc, &kij)) in dx_row.iter_mut().zip(k).enumerate() {
                        let dv = if s < nz_b.len() && nz_b[s].0 == j {
                            s += 1;
                            d[s - 1]
                        } else {
                            deriv_at_zero
                        };
                        *acc = *acc + g * kij * dv;
                    }
                }
            };
            match exec {
                Exec::Deterministic => dx
                    .as_mut_slice()
                    .chunks_mut(self.n_in)
                    .enumerate()
                    .for_each(rows),
                Exec::Parallel => dx
                    .as_mut_slice()
                    .par_chunks_mut(self.n_in)
                    .enumerate()
                    .for_each(rows),
            }
        }
        Ok((dk, Some(dx)))
    }
}

/// Value of one edge; also stores its partial in `d[s]` when recording.
#[inline(always)]
fn edge<T: Real>(basis: BasisId, z: T, d: &mut Option<&mut [T]>, s: usize) -> T {
    match d {
        Some(d) => {
            let (v, g) = basis.base_and_deriv(z);
            d[s] = g;
            v
        }
        None => basis.base(z),
    }
}

fn nonzero_entries<T: Real>(x: &[T]) -> Vec<(usize, T)> {
    x.iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v != T::zero())
        .collect()
}

/// Header line of a serialized layer.
pub(crate) fn layer_header(basis: BasisId, n_in: usize, n_out: usize) -> String {
    format!("skan-layer v1 {} {} {}", basis.cli_name(), n_in, n_out)
}

impl<T: Real> SkanLayer<T> {
    /// Writes the header line followed by `K` as row-major little-endian f64.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{}", layer_header(self.basis, self.n_in, self.n_out))?;
        for v in self.k.as_slice() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| SkanError::Checkpoint(format!("reading layer header: {e}")))?;
        let fields: Vec<&str> = line.trim_end_matches('\n').split(' ').collect();
        let [magic, version, basis, n_in, n_out] = fields.as_slice() else {
            return Err(SkanError::Checkpoint(format!(
                "malformed layer header `{}`",
                line.trim_end()
            )));
        };
        if *magic != "skan-layer" || *version != "v1" {
            return Err(SkanError::Checkpoint(format!(
                "expected `skan-layer v1`, found `{magic} {version}`"
            )));
        }
        let basis: BasisId = basis.parse()?;
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| SkanError::Checkpoint(format!("bad {what} `{s}` in layer header")))
        };
        let (n_in, n_out) = (parse(n_in, "n_in")?, parse(n_out, "n_out")?);
        let mut buf = vec![0u8; n_in * n_out * 8];
        r.read_exact(&mut buf).map_err(|e| {
            SkanError::Checkpoint(format!(
                "layer payload truncated (expected {} values): {e}",
                n_in * n_out
            ))
        })?;
        let data = buf
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        SkanLayer::new(basis, Matrix::from_vec(n_out, n_in, data)?)
    }
}
