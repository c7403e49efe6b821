use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{freq_dw_spec, pointwise_spec, time_dw_spec, Block, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"HMDL";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Kernel { fan_in: usize },
    Bias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }
}

/// Declared tensors of a configuration, in construction order.
pub fn param_table(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>, ParamRole)>> {
    let blocks = config.blocks()?;
    let groups = config.ssn_groups;
    let mut table = Vec::new();
    let mut norm = |table: &mut Vec<_>, prefix: String, len: usize| {
        table.push((format!("{prefix}.scale"), vec![len], ParamRole::NormScale));
        table.push((format!("{prefix}.shift"), vec![len], ParamRole::NormShift));
        table.push((format!("{prefix}.running_mean"), vec![len], ParamRole::RunningMean));
        table.push((format!("{prefix}.running_var"), vec![len], ParamRole::RunningVar));
    };
    let kernel = |name: String, dims: [usize; 4]| {
        let fan_in = dims[1] * dims[2] * dims[3];
        (name, dims.to_vec(), ParamRole::Kernel { fan_in })
    };
    for block in &blocks {
        match block {
            Block::Conv {
                name,
                in_ch,
                out_ch,
                spec,
                ..
            } => {
                table.push(kernel(
                    format!("{name}.weight"),
                    [*out_ch, *in_ch, spec.kernel.0, spec.kernel.1],
                ));
                table.push((format!("{name}.bias"), vec![*out_ch], ParamRole::Bias));
            }
            Block::Transition {
                name,
                in_ch,
                out_ch,
                ..
            } => {
                let c = *out_ch;
                let pw = pointwise_spec();
                table.push(kernel(format!("{name}.pw.weight"), [c, *in_ch, pw.kernel.0, pw.kernel.1]));
                norm(&mut table, format!("{name}.pw_bn"), c);
                block_tail(&mut table, &mut norm, name, c, groups, &kernel);
            }
            Block::Broadcast { name, channels, .. } => {
                block_tail(&mut table, &mut norm, name, *channels, groups, &kernel);
            }
            Block::Head { name, in_ch, spec } => {
                for head in ["det", "off"] {
                    table.push(kernel(
                        format!("{name}.{head}.weight"),
                        [1, *in_ch, spec.kernel.0, spec.kernel.1],
                    ));
                    table.push((format!("{name}.{head}.bias"), vec![1], ParamRole::Bias));
                }
            }
        }
    }
    Ok(table)
}

type Entry = (String, Vec<usize>, ParamRole);

fn block_tail(
    table: &mut Vec<Entry>,
    norm: &mut impl FnMut(&mut Vec<Entry>, String, usize),
    name: &str,
    c: usize,
    groups: usize,
    kernel: &impl Fn(String, [usize; 4]) -> Entry,
) {
    let fdw = freq_dw_spec(c, 1);
    table.push(kernel(format!("{name}.freq_dw.weight"), [c, 1, fdw.kernel.0, fdw.kernel.1]));
    norm(table, format!("{name}.ssn"), c * groups);
    let tdw = time_dw_spec(c, 1);
    table.push(kernel(format!("{name}.time_dw.weight"), [c, 1, tdw.kernel.0, tdw.kernel.1]));
    norm(table, format!("{name}.time_bn"), c);
    table.push(kernel(format!("{name}.mix.weight"), [c, c, 1, 1]));
}

/// Trainable parameter count; running statistics excluded.
pub fn parameter_count(config: &ModelConfig) -> Result<usize> {
    Ok(param_table(config)?
        .iter()
        .filter(|(_, _, role)| role.trainable())
        .map(|(_, dims, _)| dims.iter().product::<usize>())
        .sum())
}

/// Initial detection bias: the logit of 1/21, the positive share of a mined
/// batch. Starting at the class prior keeps the focal loss from spending the
/// early epochs on easy negatives.
pub const DETECTION_PRIOR_LOGIT: f64 = -2.995_732_273_553_991;

/// Named tensors: kernels, biases, norm affine parameters and running stats.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
    generation: u64,
}

impl<T: Real> Default for WeightStore<T> {
    fn default() -> Self {
        WeightStore {
            tensors: BTreeMap::new(),
            generation: 0,
        }
    }
}

impl<T: Real> WeightStore<T> {
    /// Kaiming-uniform kernels, zero biases (except the detection bias, see
    /// [`DETECTION_PRIOR_LOGIT`]), unit scales, zero shifts and
    /// `(0, 1)` running statistics, deterministic per seed.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::default();
        for (name, dims, role) in param_table(config)? {
            let n: usize = dims.iter().product();
            let data: Vec<T> = match role {
                ParamRole::Kernel { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..n)
                        .map(|_| T::from_f64c(rng.gen_range(-bound..bound)))
                        .collect()
                }
                ParamRole::Bias if name.ends_with(".det.bias") => vec![T::from_f64c(DETECTION_PRIOR_LOGIT); n],
                ParamRole::Bias | ParamRole::NormShift | ParamRole::RunningMean => vec![T::zero(); n],
                ParamRole::NormScale | ParamRole::RunningVar => vec![T::one(); n],
            };
            store.insert(name, Tensor::from_vec(&dims, data)?);
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: String, tensor: Tensor<T>) {
        self.generation += 1;
        self.tensors.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing tensor '{name}'")))
    }

    /// Mutable access; bumps the generation so stale caches are detected.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.generation += 1;
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing tensor '{name}'")))
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn cast<U: Real>(&self) -> WeightStore<U> {
        WeightStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            generation: 0,
        }
    }

    /// Adds `other` into `self` tensor-wise (used to accumulate gradients).
    pub fn accumulate(&mut self, name: &str, grad: Tensor<T>) -> Result<()> {
        match self.tensors.get_mut(name) {
            Some(t) => t.add_assign(&grad),
            None => {
                self.tensors.insert(name.to_string(), grad);
                Ok(())
            }
        }
    }

    /// Checks names and shapes against a configuration.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let table = param_table(config)?;
        if table.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "weights hold {} tensors, config declares {}",
                self.tensors.len(),
                table.len()
            )));
        }
        for (name, dims, _) in table {
            let t = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Format(format!("weights lack tensor '{name}'")))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Format(format!(
                    "tensor '{name}' has shape {:?}, config expects {:?}",
                    t.dims(),
                    dims
                )));
            }
        }
        Ok(())
    }
}

impl WeightStore<f32> {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&[t.dims().len() as u8])?;
            for &d in t.dims() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format(format!("bad weights magic {magic:?}")));
        }
        let version = read_u32(&mut r, "version")?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!(
                "weights file version {version} unsupported (expected {WEIGHTS_VERSION})"
            )));
        }
        let count = read_u32(&mut r, "tensor count")?;
        let mut store = WeightStore::default();
        for i in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, "name length")?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut name, "name")?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format(format!("tensor {i}: name is not UTF-8")))?;
            let mut ndim = [0u8; 1];
            read_exact(&mut r, &mut ndim, "ndim")?;
            let dims = (0..ndim[0])
                .map(|_| read_u32(&mut r, "dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let mut raw = vec![0u8; n * 4];
            read_exact(&mut r, &mut raw, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.tensors.contains_key(&name) {
                return Err(Error::Format(format!("duplicate tensor '{name}'")));
            }
            store.insert(name, Tensor::from_vec(&dims, data)?);
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated weights file while reading {what}")))
}

fn read_u32(r: &mut &[u8], what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
