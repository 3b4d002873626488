//! A SKAN network: layers composed left to right, final outputs read as
//! class logits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::basis::BasisId;
use crate::error::{Result, SkanError};
use crate::layer::{Exec, LayerTape, SkanLayer};
use crate::rng::SkanRng;
use crate::tensor::{Matrix, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct SkanNetwork<T: Real = f64> {
    layers: Vec<SkanLayer<T>>,
    dims: Vec<usize>,
}

/// Layer inputs and partials recorded during a forward pass, plus the output.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real = f64> {
    pub inputs: Vec<Matrix<T>>,
    pub tapes: Vec<LayerTape<T>>,
    pub output: Matrix<T>,
}

/// Per-layer parameter gradients, and the gradient with respect to the
/// network input when it was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients<T: Real = f64> {
    pub dk: Vec<Matrix<f64>>,
    pub d_input: Option<Matrix<T>>,
}

/// `Σ_l dims[l]·dims[l+1]`.
pub fn total_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1]).sum()
}

/// Renders dims as `784x100x10`.
pub fn format_dims(dims: &[usize]) -> String {
    dims.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

/// Parses `784,100,10` (or `784x100x10`).
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims = s
        .split([',', 'x'])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| SkanError::Config(format!("bad layer size `{p}` in dims `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(SkanError::Config(format!(
            "dims `{s}` must be a non-empty list of positive sizes"
        )));
    }
    Ok(dims)
}

impl<T: Real> SkanNetwork<T> {
    /// Fresh network with every layer initialized from one seeded stream,
    /// first layer first.
    pub fn init(dims: &[usize], basis: BasisId, seed: u64) -> Self {
        let mut rng = SkanRng::for_init(seed);
        let layers = dims
            .windows(2)
            .map(|w| SkanLayer::init_uniform(w[0], w[1], basis, &mut rng))
            .collect();
        Self {
            layers,
            dims: dims.to_vec(),
        }
    }

    pub fn zeros(dims: &[usize], basis: BasisId) -> Self {
        Self {
            layers: dims
                .windows(2)
                .map(|w| SkanLayer::zeros(w[0], w[1], basis))
                .collect(),
            dims: dims.to_vec(),
        }
    }

    /// Assembles layers whose widths chain.
    pub fn from_layers(layers: Vec<SkanLayer<T>>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(SkanError::Contract {
                op: "SkanNetwork::from_layers",
                detail: "at least one layer is required".into(),
            });
        };
        let mut dims = vec![first.n_in()];
        for (l, layer) in layers.iter().enumerate() {
            if layer.n_in() != *dims.last().unwrap() {
                return Err(SkanError::shape(
                    "SkanNetwork::from_layers",
                    format!("layer {l} with {} inputs", dims.last().unwrap()),
                    format!("{} inputs", layer.n_in()),
                ));
            }
            if layer.basis() != first.basis() {
                return Err(SkanError::Contract {
                    op: "SkanNetwork::from_layers",
                    detail: format!(
                        "layer {l} uses {} but layer 0 uses {}",
                        layer.basis(),
                        first.basis()
                    ),
                });
            }
            dims.push(layer.n_out());
        }
        Ok(Self { layers, dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[SkanLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SkanLayer<T>] {
        &mut self.layers
    }

    /// `None` for a network with no layers.
    pub fn basis(&self) -> Option<BasisId> {
        self.layers.first().map(SkanLayer::basis)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(SkanLayer::param_count).sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| l.params().all_finite())
    }

    fn check_input(&self, op: &'static str, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.dims[0] {
            return Err(SkanError::shape(
                op,
                format!("input with {} columns", self.dims[0]),
                format!("{} columns", x.cols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.forward_exec(x, Exec::Deterministic)
    }

    pub fn forward_exec(&self, x: &Matrix<T>, exec: Exec) -> Result<Matrix<T>> {
        self.check_input("SkanNetwork::forward", x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_exec(&h, exec)?;
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer input for [`Self::backward`].
    pub fn forward_cached(&self, x: &Matrix<T>, exec: Exec) -> Result<ForwardCache<T>> {
        self.check_input("SkanNetwork::forward_cached", x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut tapes = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (next, tape) = layer.forward_taped(&h, exec)?;
            inputs.push(h);
            tapes.push(tape);
            h = next;
        }
        Ok(ForwardCache {
            inputs,
            tapes,
            output: h,
        })
    }

    /// Chains layer backward passes from the logits cotangent down to the
    /// first layer. The first layer's input gradient is only computed when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_logits: &Matrix<T>,
        want_input_grad: bool,
        exec: Exec,
    ) -> Result<NetGradients<T>> {
        if cache.inputs.len() != self.layers.len() || cache.tapes.len() != self.layers.len() {
            return Err(SkanError::Contract {
                op: "SkanNetwork::backward",
                detail: format!(
                    "cache holds {} layer inputs, network has {} layers",
                    cache.inputs.len(),
                    self.layers.len()
                ),
            });
        }
        if d_logits.shape() != cache.output.shape() {
            return Err(SkanError::shape(
                "SkanNetwork::backward",
                format!("{}x{}", cache.output.rows(), cache.output.cols()),
                format!("{}x{}", d_logits.rows(), d_logits.cols()),
            ));
        }
        let mut dk = vec![Matrix::zeros(0, 0); self.layers.len()];
        let mut upstream = d_logits.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let want_dx = l > 0 || want_input_grad;
            let (g, dx) = layer.backward_taped(
                &cache.inputs[l],
                &cache.tapes[l],
                &upstream,
                want_dx,
                exec,
            )?;
            dk[l] = g;
            match dx {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        Ok(NetGradients {
            dk,
            d_input: want_input_grad.then_some(upstream),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let basis = self.basis().map_or("none", BasisId::cli_name);
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        writeln!(w, "skan-net v1 {basis} {}", dims.join(","))?;
        for layer in &self.layers {
            layer.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| SkanError::Checkpoint(format!("reading network header: {e}")))?;
        let fields: Vec<&str> = line.trim_end_matches('\n').split(' ').collect();
        let [magic, version, basis, dims] = fields.as_slice() else {
            return Err(SkanError::Checkpoint(format!(
                "malformed network header `{}`",
                line.trim_end()
            )));
        };
        if *magic != "skan-net" || *version != "v1" {
            return Err(SkanError::Checkpoint(format!(
                "expected `skan-net v1`, found `{magic} {version}`"
            )));
        }
        let basis: BasisId = basis.parse()?;
        let dims = parse_dims(dims)?;
        let layers = (0..dims.len() - 1)
            .map(|_| SkanLayer::read_from(r))
            .collect::<Result<Vec<_>>>()?;
        let net = Self::from_layers(layers)?;
        if net.dims != dims || net.basis() != Some(basis) {
            return Err(SkanError::Checkpoint(format!(
                "header says {} {}, layers say {} {}",
                basis,
                format_dims(&dims),
                net.basis().map_or("none", BasisId::cli_name),
                format_dims(&net.dims)
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| SkanError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| SkanError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| SkanError::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}
