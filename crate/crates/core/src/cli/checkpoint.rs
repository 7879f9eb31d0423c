//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `magic[8] | format_version u32 | entry count u32 | entries…`, where each
//! entry is `name_len u32 | name | kind u8 | payload`. Kinds: `0` f64 array
//! (`ndim u32 | dims u64… | values f64…`), `1` u64 array (`len u64 |
//! values…`), `2` UTF-8 text (`len u64 | bytes`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3, Array4};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::forecast::{ForecastModel, Standardizer};
use crate::randfourier::{RandomBasis, SHAPE_AUGMENTATION};
use crate::vargp::{Block, Dims, VariationalState};

pub const MAGIC: &[u8; 8] = b"SIGFCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    U64(Vec<u64>),
    Text(String),
}

/// Named entries, written in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub entries: BTreeMap<String, Entry>,
}

impl Container {
    pub fn put_f64(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.insert(
            name.into(),
            Entry::F64 {
                shape: shape.to_vec(),
                data: data.to_vec(),
            },
        );
    }

    pub fn put_u64(&mut self, name: &str, data: &[u64]) {
        self.entries.insert(name.into(), Entry::U64(data.to_vec()));
    }

    pub fn put_text(&mut self, name: &str, text: &str) {
        self.entries.insert(name.into(), Entry::Text(text.into()));
    }

    fn missing(name: &str) -> Error {
        Error::Incompatible(format!("missing or mistyped entry '{name}'"))
    }

    pub fn f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.entries.get(name) {
            Some(Entry::F64 { shape, data }) => Ok((shape, data)),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        match self.entries.get(name) {
            Some(Entry::U64(v)) => Ok(v),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.entries.get(name) {
            Some(Entry::Text(s)) => Ok(s),
            _ => Err(Self::missing(name)),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u32::<LE>(self.entries.len() as u32)?;
        for (name, entry) in &self.entries {
            w.write_u32::<LE>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            match entry {
                Entry::F64 { shape, data } => {
                    w.write_u8(0)?;
                    w.write_u32::<LE>(shape.len() as u32)?;
                    for &d in shape {
                        w.write_u64::<LE>(d as u64)?;
                    }
                    for &v in data {
                        w.write_f64::<LE>(v)?;
                    }
                }
                Entry::U64(v) => {
                    w.write_u8(1)?;
                    w.write_u64::<LE>(v.len() as u64)?;
                    for &x in v {
                        w.write_u64::<LE>(x)?;
                    }
                }
                Entry::Text(s) => {
                    w.write_u8(2)?;
                    w.write_u64::<LE>(s.len() as u64)?;
                    w.write_all(s.as_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Incompatible(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short for a checkpoint header"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let count = r.read_u32::<LE>()?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = r.read_u32::<LE>()? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("entry name is not UTF-8"))?;
            let entry = match r.read_u8()? {
                0 => {
                    let ndim = r.read_u32::<LE>()? as usize;
                    let shape: Vec<usize> = (0..ndim).map(|_| r.read_u64::<LE>().map(|d| d as usize)).collect::<std::io::Result<_>>()?;
                    let n: usize = shape.iter().product();
                    let mut data = vec![0.0; n];
                    r.read_f64_into::<LE>(&mut data)?;
                    Entry::F64 { shape, data }
                }
                1 => {
                    let n = r.read_u64::<LE>()? as usize;
                    let mut data = vec![0u64; n];
                    r.read_u64_into::<LE>(&mut data)?;
                    Entry::U64(data)
                }
                2 => {
                    let n = r.read_u64::<LE>()? as usize;
                    let mut bytes = vec![0u8; n];
                    r.read_exact(&mut bytes)?;
                    Entry::Text(String::from_utf8(bytes).map_err(|_| bad("text entry is not UTF-8"))?)
                }
                k => return Err(Error::Incompatible(format!("unknown entry kind {k} for '{name}'"))),
            };
            entries.insert(name, entry);
        }
        Ok(Self { entries })
    }
}

/// Per-training-series record kept alongside the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInfo {
    pub item_id: String,
    pub stats: Standardizer,
    pub beta: Option<f64>,
}

/// Everything `predict` and `evaluate` need.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ForecastModel,
    pub config: RunConfig,
    pub series: Vec<SeriesInfo>,
}

impl Checkpoint {
    pub fn beta_for(&self, item_id: &str) -> Option<f64> {
        self.series.iter().find(|s| s.item_id == item_id).and_then(|s| s.beta)
    }

    pub fn to_container(&self) -> Container {
        let m = &self.model;
        let dims = m.state.dims();
        let mut c = Container::default();
        c.put_u64("seed", &[m.train.seed]);
        c.put_u64(
            "dims",
            &[
                dims.levels as u64,
                dims.features as u64,
                dims.input_dim as u64,
                dims.heads as u64,
                m.train.window as u64,
            ],
        );
        c.put_u64("lags", &[m.lags as u64]);
        c.put_text("config", &self.config.to_text());
        for b in Block::ALL {
            c.put_f64(&format!("param.{}", b.name()), &m.state.block_shape(b), m.state.block(b));
        }
        let basis = &m.basis;
        c.put_u64("basis.seed", &[basis.seed()]);
        let put3 = |c: &mut Container, name: &str, a: &Array3<f64>| {
            c.put_f64(name, a.shape(), a.as_standard_layout().as_slice().unwrap())
        };
        put3(&mut c, "basis.normals", basis.normals());
        put3(&mut c, "basis.gamma_normals", basis.gamma_normals());
        let pu = basis.phase_uniforms();
        c.put_f64("basis.phase_uniforms", pu.shape(), pu.as_standard_layout().as_slice().unwrap());
        let gu = basis.gamma_uniforms();
        c.put_f64("basis.gamma_uniforms", gu.shape(), gu.as_standard_layout().as_slice().unwrap());
        let ids: Vec<&str> = self.series.iter().map(|s| s.item_id.as_str()).collect();
        c.put_text("series.item_ids", &ids.join("\n"));
        let n = self.series.len();
        c.put_f64("series.mean", &[n], &self.series.iter().map(|s| s.stats.mean).collect::<Vec<_>>());
        c.put_f64("series.std", &[n], &self.series.iter().map(|s| s.stats.std).collect::<Vec<_>>());
        c.put_f64(
            "series.beta",
            &[n],
            &self.series.iter().map(|s| s.beta.unwrap_or(f64::NAN)).collect::<Vec<_>>(),
        );
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let inc = |m: String| Error::Incompatible(m);
        let dims_raw = c.u64("dims")?;
        if dims_raw.len() != 5 {
            return Err(inc("dims entry must hold M, D, d, H, W".into()));
        }
        let dims = Dims {
            levels: dims_raw[0] as usize,
            features: dims_raw[1] as usize,
            input_dim: dims_raw[2] as usize,
            heads: dims_raw[3] as usize,
        };
        let window = dims_raw[4] as usize;
        let lags = c.u64("lags")?.first().copied().ok_or_else(|| inc("empty lags".into()))? as usize;
        let config = RunConfig::parse(c.text("config")?).map_err(|e| inc(format!("stored config: {e}")))?;
        let mut state = VariationalState::zeros(dims).map_err(|e| inc(e.to_string()))?;
        for b in Block::ALL {
            let name = format!("param.{}", b.name());
            let (shape, data) = c.f64(&name)?;
            if shape != state.block_shape(b).as_slice() {
                return Err(inc(format!("{name} has shape {shape:?}")));
            }
            state.set_block(b, data)?;
        }
        let arr = |name: &str, want: &[usize]| -> Result<Vec<f64>> {
            let (shape, data) = c.f64(name)?;
            if shape != want {
                return Err(inc(format!("{name} has shape {shape:?}, expected {want:?}")));
            }
            Ok(data.to_vec())
        };
        let (m, d, dd) = (dims.levels, dims.input_dim, dims.features);
        let basis_seed = c.u64("basis.seed")?.first().copied().unwrap_or(0);
        let basis = RandomBasis::from_raw(
            basis_seed,
            Array3::from_shape_vec((m, d, dd), arr("basis.normals", &[m, d, dd])?).unwrap(),
            Array2::from_shape_vec((m, dd), arr("basis.phase_uniforms", &[m, dd])?).unwrap(),
            Array3::from_shape_vec((m, dd, 2), arr("basis.gamma_normals", &[m, dd, 2])?).unwrap(),
            Array4::from_shape_vec(
                (m, dd, 2, SHAPE_AUGMENTATION),
                arr("basis.gamma_uniforms", &[m, dd, 2, SHAPE_AUGMENTATION])?,
            )
            .unwrap(),
        )
        .map_err(|e| inc(e.to_string()))?;
        let ids_text = c.text("series.item_ids")?;
        let ids: Vec<&str> = if ids_text.is_empty() { Vec::new() } else { ids_text.split('\n').collect() };
        let n = ids.len();
        let means = arr("series.mean", &[n])?;
        let stds = arr("series.std", &[n])?;
        let betas = arr("series.beta", &[n])?;
        let series = (0..n)
            .map(|i| SeriesInfo {
                item_id: ids[i].to_string(),
                stats: Standardizer {
                    mean: means[i],
                    std: stds[i],
                },
                beta: (!betas[i].is_nan()).then_some(betas[i]),
            })
            .collect();
        let mut train = config.train.clone();
        train.window = window;
        train.seed = c.u64("seed")?.first().copied().unwrap_or(0);
        Ok(Self {
            model: ForecastModel {
                horizon: dims.heads,
                lags,
                train,
                basis,
                state,
            },
            config,
            series,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.to_container().write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_container(&Container::read_from(bytes.as_slice())?)
    }
}
