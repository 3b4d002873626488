//! Finite-difference verification of network gradients.
//!
//! The scalar checked is the mean softmax cross-entropy of a small random
//! batch. Each parameter's analytic derivative is compared with a central
//! difference; a parameter is skipped when an edge argument `z = k·x` that
//! moves under the probe lies within [`KINK_BAND`] of a kink of the basis.

use crate::basis::BasisId;
use crate::error::{Result, SkanError};
use crate::layer::Exec;
use crate::metrics::softmax_xent;
use crate::network::SkanNetwork;
use crate::rng::SkanRng;
use crate::tensor::Matrix;

pub const STEP: f64 = 1e-5;
pub const KINK_BAND: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-6;
/// Largest layer width accepted.
pub const MAX_WIDTH: usize = 32;
const BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub basis: BasisId,
    pub dims: Vec<usize>,
    pub checked: usize,
    pub skipped: usize,
    /// `|analytic − numeric| / max(1, |analytic|)`, worst over checked
    /// parameters.
    pub max_rel_err: f64,
    /// `(layer, row, col)` of the worst parameter.
    pub worst: Option<(usize, usize, usize)>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

fn loss(net: &SkanNetwork, x: &Matrix, labels: &[u8]) -> Result<f64> {
    let logits = net.forward(x)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

/// Every edge argument `z = k·x` in the network, in a fixed order.
fn edge_args(net: &SkanNetwork, x: &Matrix) -> Result<Vec<f64>> {
    let cache = net.forward_cached(x, Exec::Deterministic)?;
    let mut zs = Vec::new();
    for (layer, input) in net.layers().iter().zip(&cache.inputs) {
        for row in input.iter_rows() {
            for krow in layer.params().iter_rows() {
                zs.extend(krow.iter().zip(row).map(|(&k, &xj)| k * xj));
            }
        }
    }
    Ok(zs)
}

/// Whether some edge comes within [`KINK_BAND`] of a kink at the base point
/// or a probe. Edges whose argument is identical at all three points cannot
/// cross a kink and are ignored (dead units sit exactly on one).
fn straddles_kink(basis: BasisId, base: &[f64], plus: &[f64], minus: &[f64]) -> bool {
    base.iter().zip(plus).zip(minus).any(|((&z0, &zp), &zm)| {
        !(z0 == zp && z0 == zm)
            && [z0, zp, zm]
                .iter()
                .any(|&z| basis.kink_distance(z) < KINK_BAND)
    })
}

/// Checks every parameter of a freshly initialized `dims` network.
pub fn gradcheck(basis: BasisId, dims: &[usize], seed: u64) -> Result<GradcheckReport> {
    if dims.len() < 2 {
        return Err(SkanError::Config(
            "gradcheck needs at least one layer".into(),
        ));
    }
    if let Some(&w) = dims.iter().find(|&&d| d > MAX_WIDTH || d == 0) {
        return Err(SkanError::Config(format!(
            "layer width {w} is outside 1..={MAX_WIDTH}; finite differencing is limited to small networks"
        )));
    }
    let net = SkanNetwork::<f64>::init(dims, basis, seed);
    let mut rng = SkanRng::for_shuffle(seed);
    let x = Matrix::from_fn(BATCH, dims[0], |_, _| rng.uniform(-1.0, 1.0));
    let classes = *dims.last().unwrap();
    let labels: Vec<u8> = (0..BATCH).map(|_| rng.below(classes) as u8).collect();
    gradcheck_network(&net, &x, &labels)
}

/// Checks every parameter of `net` at input `x`.
pub fn gradcheck_network(net: &SkanNetwork, x: &Matrix, labels: &[u8]) -> Result<GradcheckReport> {
    let cache = net.forward_cached(x, Exec::Deterministic)?;
    let (_, d_logits) = softmax_xent(&cache.output, labels)?;
    let analytic = net.backward(&cache, &d_logits, false, Exec::Deterministic)?;
    let basis = net
        .basis()
        .ok_or_else(|| SkanError::Config("network has no layers".into()))?;
    let has_kinks = !basis.kinks().is_empty();

    let mut report = GradcheckReport {
        basis,
        dims: net.dims().to_vec(),
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    let base_args = if has_kinks {
        edge_args(net, x)?
    } else {
        Vec::new()
    };
    let mut probe = net.clone();
    for (l, grads) in analytic.dk.iter().enumerate() {
        let cols = grads.cols();
        for idx in 0..grads.len() {
            let (i, j) = (idx / cols, idx % cols);
            let original = probe.layers()[l].params()[(i, j)];
            let mut eval_at = |delta: f64| -> Result<(f64, Vec<f64>)> {
                probe.layers_mut()[l].params_mut()[(i, j)] = original + delta;
                let f = loss(&probe, x, labels)?;
                let zs = if has_kinks {
                    edge_args(&probe, x)?
                } else {
                    Vec::new()
                };
                Ok((f, zs))
            };
            let (plus, z_plus) = eval_at(STEP)?;
            let (minus, z_minus) = eval_at(-STEP)?;
            probe.layers_mut()[l].params_mut()[(i, j)] = original;

            if straddles_kink(basis, &base_args, &z_plus, &z_minus) {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = grads[(i, j)];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((l, i, j));
            }
        }
    }
    Ok(report)
}
