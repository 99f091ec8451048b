use super::time::DEFAULT_TIME_UNIT;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Width of the relative state fed to the token MLP: (dx, dy, cos da, sin da).
pub const TOKEN_INPUT: usize = 4;
/// Width of the output head: (dx, dy, da).
pub const HEAD_OUTPUT: usize = 3;

const MAGIC: &[u8; 4] = b"BFEP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorDims {
    /// Model width, also the time-code dimension.
    pub d: usize,
    pub n_heads: usize,
    /// Hidden width of the token MLP.
    pub hidden: usize,
}

impl Default for EstimatorDims {
    fn default() -> Self {
        Self { d: 16, n_heads: 4, hidden: 32 }
    }
}

impl EstimatorDims {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return Err(Error::invalid(format!("model width must be even and positive, got {}", self.d)));
        }
        if self.n_heads == 0 || !self.d.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!("{} heads do not divide model width {}", self.n_heads, self.d)));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(*self)
    }

    /// Total number of parameters.
    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    /// Index range of the attention block (query, key, value and output
    /// projections) inside the flat parameter vector.
    pub fn attention_params(&self) -> std::ops::Range<usize> {
        self.layout().attention_range()
    }
}

/// A dense layer `out × inp` stored row-major, followed by its bias.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub out: usize,
    pub inp: usize,
}

impl Dense {
    pub fn apply(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &p[self.w..self.w + self.out * self.inp];
        let b = &p[self.b..self.b + self.out];
        for o in 0..self.out {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            y[o] = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for upstream `gy` at input `x` and
    /// adds `Wᵀ gy` into `gx` when given.
    pub fn backward(&self, p: &[f64], x: &[f64], gy: &[f64], grad: &mut [f64], gx: Option<&mut [f64]>) {
        for o in 0..self.out {
            let g = gy[o];
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let row = &mut grad[self.w + o * self.inp..self.w + (o + 1) * self.inp];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
        }
        if let Some(gx) = gx {
            for o in 0..self.out {
                let g = gy[o];
                if g == 0.0 {
                    continue;
                }
                let row = &p[self.w + o * self.inp..self.w + (o + 1) * self.inp];
                for (gi, wi) in gx.iter_mut().zip(row) {
                    *gi += g * wi;
                }
            }
        }
    }
}

/// Offsets of every layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub mlp_in: Dense,
    pub mlp_out: Dense,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub proj: Dense,
    pub head: Dense,
    pub total: usize,
}

impl Layout {
    fn new(dims: EstimatorDims) -> Self {
        let mut at = 0;
        let mut dense = |out: usize, inp: usize| {
            let l = Dense { w: at, b: at + out * inp, out, inp };
            at += out * inp + out;
            l
        };
        let d = dims.d;
        let mlp_in = dense(dims.hidden, TOKEN_INPUT);
        let mlp_out = dense(d, dims.hidden);
        let query = dense(d, d);
        let key = dense(d, d);
        let value = dense(d, d);
        let proj = dense(d, d);
        let head = dense(HEAD_OUTPUT, d);
        Self { mlp_in, mlp_out, query, key, value, proj, head, total: at }
    }

    /// The attention block's parameter range.
    pub fn attention_range(&self) -> std::ops::Range<usize> {
        self.query.w..self.proj.b + self.proj.out
    }
}

/// Weights of the time-encoded attention motion estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub dims: EstimatorDims,
    /// Seconds per unit of the time-code argument.
    pub time_unit: f64,
    /// Meters per unit of the token position inputs and position outputs.
    pub pos_scale: f64,
    /// When false, tokens carry no time code and the query is empty.
    pub time_encoding: bool,
    pub values: Vec<f64>,
}

impl EstimatorParams {
    /// Seeded initialization: normal weights scaled by `1/sqrt(fan_in)`,
    /// zero biases and a small output head.
    pub fn init(dims: EstimatorDims, time_encoding: bool, seed: u64) -> Result<Self> {
        dims.validate()?;
        let layout = dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; layout.total];
        for (layer, gain) in [
            (layout.mlp_in, 1.0),
            (layout.mlp_out, 1.0),
            (layout.query, 1.0),
            (layout.key, 1.0),
            (layout.value, 1.0),
            (layout.proj, 1.0),
            (layout.head, 0.1),
        ] {
            let scale = gain / (layer.inp as f64).sqrt();
            for v in &mut values[layer.w..layer.w + layer.out * layer.inp] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z * scale;
            }
        }
        Ok(Self { dims, time_unit: DEFAULT_TIME_UNIT, pos_scale: 4.0, time_encoding, values })
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let expected = self.dims.layout().total;
        if self.values.len() != expected {
            return Err(Error::Format(format!(
                "parameter count {} does not match dims ({expected})",
                self.values.len()
            )));
        }
        if !(self.time_unit > 0.0) || !(self.pos_scale > 0.0) {
            return Err(Error::Format("time unit and position scale must be positive".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite parameter value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Little-endian layout: magic, version, d, n_heads, hidden, input width,
    /// output width, time-encoding flag (u32 each), time unit and position
    /// scale (f64), value count (u64), then the values (f64).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        self.validate()?;
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        buf.extend_from_slice(MAGIC);
        for v in [
            FORMAT_VERSION,
            self.dims.d as u32,
            self.dims.n_heads as u32,
            self.dims.hidden as u32,
            TOKEN_INPUT as u32,
            HEAD_OUTPUT as u32,
            self.time_encoding as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.time_unit.to_le_bytes());
        buf.extend_from_slice(&self.pos_scale.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + n).ok_or_else(|| Error::Format("estimator file truncated".into()))?;
            at += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Format("not an estimator parameter file".into()));
        }
        let mut header = [0u32; 7];
        for h in &mut header {
            *h = u32::from_le_bytes(take(4)?.try_into().unwrap());
        }
        let [version, d, n_heads, hidden, inp, out, te] = header;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported estimator format version {version}")));
        }
        if inp as usize != TOKEN_INPUT || out as usize != HEAD_OUTPUT {
            return Err(Error::Format(format!("unexpected layer widths {inp}/{out}")));
        }
        let time_unit = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let pos_scale = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let raw = take(count.checked_mul(8).ok_or_else(|| Error::Format("bad value count".into()))?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if at != bytes.len() {
            return Err(Error::Format("trailing bytes after estimator parameters".into()));
        }
        let params = Self {
            dims: EstimatorDims { d: d as usize, n_heads: n_heads as usize, hidden: hidden as usize },
            time_unit,
            pos_scale,
            time_encoding: te != 0,
            values,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| e.context(format!("writing {}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f)).map_err(|e| e.context(format!("reading {}", path.display())))
    }
}
