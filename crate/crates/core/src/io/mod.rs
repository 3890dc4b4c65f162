//! Persistence: binary containers for datasets, digital twins and model
//! checkpoints, CSV position tables and SVG chart plots.

pub mod container;
mod svg;

use std::path::Path;

use nalgebra::{Point2, Point3};
use ndarray::{Array1, Array2};

pub use container::{ArrayData, Container, ContainerError, NamedArray};
pub use svg::{PlotSpec, Series};

use crate::error::{Error, Result};
use crate::experiments::SimulatedData;
use crate::features::{CMatrix, CsiTensor, FeatureKind};
use crate::model::{ChartModel, Dense, DtDatabase};

fn scalar_f64(c: &Container, name: &str) -> Result<f64> {
    match c.f64(name)? {
        (_, [v]) => Ok(*v),
        _ => Err(ContainerError::WrongType {
            array: name.into(),
            msg: "expected one element".into(),
        }
        .into()),
    }
}

fn scalar_i64(c: &Container, name: &str) -> Result<i64> {
    match c.i64(name)? {
        (_, [v]) => Ok(*v),
        _ => Err(ContainerError::WrongType {
            array: name.into(),
            msg: "expected one element".into(),
        }
        .into()),
    }
}

fn shape_error(name: &str, msg: impl Into<String>) -> Error {
    ContainerError::WrongType {
        array: name.into(),
        msg: msg.into(),
    }
    .into()
}

fn to_usize(name: &str, v: i64) -> Result<usize> {
    usize::try_from(v).map_err(|_| shape_error(name, format!("negative value {v}")))
}

fn push_points3(c: &mut Container, name: &str, pts: &[Point3<f64>]) -> Result<()> {
    let data = pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    Ok(c.push_f64(name, &[pts.len() as u64, 3], data)?)
}

fn read_points3(c: &Container, name: &str) -> Result<Vec<Point3<f64>>> {
    let (dims, v) = c.f64(name)?;
    if dims.len() != 2 || dims[1] != 3 {
        return Err(shape_error(name, format!("expected N x 3, got {dims:?}")));
    }
    Ok(v.chunks_exact(3).map(|p| Point3::new(p[0], p[1], p[2])).collect())
}

fn push_csi(c: &mut Container, prefix: &str, csi: &[CsiTensor]) -> Result<()> {
    let (a, k, s) = csi
        .first()
        .map_or((0, 0, 0), |t| (t.num_aps(), t.antennas(), t.subcarriers()));
    let mut data = Vec::with_capacity(csi.len() * a * k * s);
    for t in csi {
        if t.num_aps() != a || t.antennas() != k || t.subcarriers() != s {
            return Err(Error::Dimension("CSI tensors of differing shapes cannot share a container".into()));
        }
        for block in &t.per_ap {
            data.extend(block.iter().copied());
        }
    }
    c.push_c64(&format!("{prefix}.csi"), &[csi.len() as u64, a as u64, k as u64, s as u64], data)?;
    c.push_f64(
        &format!("{prefix}.timestamps"),
        &[csi.len() as u64],
        csi.iter().map(|t| t.timestamp).collect(),
    )?;
    Ok(())
}

fn read_csi(c: &Container, prefix: &str) -> Result<Vec<CsiTensor>> {
    let name = format!("{prefix}.csi");
    let (dims, data) = c.c64(&name)?;
    let &[n, a, k, s] = dims else {
        return Err(shape_error(&name, format!("expected rank 4, got {dims:?}")));
    };
    let (_, ts) = c.f64(&format!("{prefix}.timestamps"))?;
    if ts.len() as u64 != n {
        return Err(shape_error(&name, "timestamp count differs from sample count"));
    }
    let (a, k, s) = (a as usize, k as usize, s as usize);
    let block = k * s;
    (0..n as usize)
        .map(|i| {
            let per_ap = (0..a)
                .map(|j| {
                    let off = (i * a + j) * block;
                    CMatrix::from_shape_vec((k, s), data[off..off + block].to_vec()).expect("shape checked by the reader")
                })
                .collect();
            CsiTensor::new(per_ap, ts[i])
        })
        .collect()
}

fn push_indices(c: &mut Container, name: &str, idx: &[usize]) -> Result<()> {
    Ok(c.push_i64(name, &[idx.len() as u64], idx.iter().map(|&i| i as i64).collect())?)
}

fn read_indices(c: &Container, name: &str) -> Result<Vec<usize>> {
    c.i64(name)?.1.iter().map(|&i| to_usize(name, i)).collect()
}

pub fn dataset_to_container(sim: &SimulatedData) -> Result<Container> {
    let mut c = Container::new();
    push_indices(&mut c, "train.idx", &sim.train_idx)?;
    push_points3(&mut c, "train.positions", &sim.train_positions)?;
    push_csi(&mut c, "train", &sim.train_csi)?;
    push_indices(&mut c, "test.idx", &sim.test_idx)?;
    push_points3(&mut c, "test.positions", &sim.test_positions)?;
    push_csi(&mut c, "test", &sim.test_csi)?;
    c.push_f64("noise_variance", &[1], vec![sim.noise_variance])?;
    Ok(c)
}

pub fn dataset_from_container(c: &Container) -> Result<SimulatedData> {
    let sim = SimulatedData {
        train_idx: read_indices(c, "train.idx")?,
        test_idx: read_indices(c, "test.idx")?,
        train_positions: read_points3(c, "train.positions")?,
        train_csi: read_csi(c, "train")?,
        test_positions: read_points3(c, "test.positions")?,
        test_csi: read_csi(c, "test")?,
        noise_variance: scalar_f64(c, "noise_variance")?,
    };
    for (label, idx, pos, csi) in [
        ("train", &sim.train_idx, &sim.train_positions, &sim.train_csi),
        ("test", &sim.test_idx, &sim.test_positions, &sim.test_csi),
    ] {
        if idx.len() != pos.len() || idx.len() != csi.len() {
            return Err(shape_error(&format!("{label}.idx"), "indices, positions and CSI differ in length"));
        }
    }
    Ok(sim)
}

pub fn dt_to_container(dt: &DtDatabase) -> Result<Container> {
    let mut c = Container::new();
    c.push_f64(
        "dt.positions",
        &[dt.len() as u64, 2],
        dt.positions.iter().flat_map(|p| [p.x, p.y]).collect(),
    )?;
    let (rows, cols) = dt.features.dim();
    c.push_f64("dt.features", &[rows as u64, cols as u64], dt.features.iter().copied().collect())?;
    c.push_f64("dt.height", &[1], vec![dt.height])?;
    c.push_i64("dt.kind", &[1], vec![dt.kind.tag()])?;
    c.push_i64("dt.taps", &[1], vec![dt.taps as i64])?;
    Ok(c)
}

pub fn dt_from_container(c: &Container) -> Result<DtDatabase> {
    let (pd, pv) = c.f64("dt.positions")?;
    if pd.len() != 2 || pd[1] != 2 {
        return Err(shape_error("dt.positions", format!("expected P x 2, got {pd:?}")));
    }
    let positions = pv.chunks_exact(2).map(|p| Point2::new(p[0], p[1])).collect();
    let (fd, fv) = c.f64("dt.features")?;
    let &[rows, cols] = fd else {
        return Err(shape_error("dt.features", format!("expected rank 2, got {fd:?}")));
    };
    let features = Array2::from_shape_vec((rows as usize, cols as usize), fv.to_vec())
        .map_err(|e| shape_error("dt.features", e.to_string()))?;
    let tag = scalar_i64(c, "dt.kind")?;
    let kind = FeatureKind::from_tag(tag).ok_or_else(|| shape_error("dt.kind", format!("unknown feature tag {tag}")))?;
    let taps = to_usize("dt.taps", scalar_i64(c, "dt.taps")?)?;
    let mut dt = DtDatabase::from_parts(positions, features, kind, taps)?;
    dt.height = scalar_f64(c, "dt.height")?;
    Ok(dt)
}

/// A trained model with the seed and iteration count that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ChartModel,
    pub seed: u64,
    pub iterations: usize,
}

pub fn checkpoint_to_container(ck: &Checkpoint) -> Result<Container> {
    let mut c = Container::new();
    let layers = ck.model.layers();
    c.push_i64("model.layers", &[1], vec![layers.len() as i64])?;
    c.push_f64("model.dropout", &[1], vec![ck.model.dropout()])?;
    for (i, l) in layers.iter().enumerate() {
        let (r, k) = l.weight.dim();
        c.push_f64(&format!("layer{i}.weight"), &[r as u64, k as u64], l.weight.iter().copied().collect())?;
        c.push_f64(&format!("layer{i}.bias"), &[k as u64], l.bias.to_vec())?;
    }
    c.push_i64("rng.seed", &[1], vec![ck.seed as i64])?;
    c.push_i64("train.iterations", &[1], vec![ck.iterations as i64])?;
    Ok(c)
}

pub fn checkpoint_from_container(c: &Container) -> Result<Checkpoint> {
    let count = to_usize("model.layers", scalar_i64(c, "model.layers")?)?;
    let dropout = scalar_f64(c, "model.dropout")?;
    let layers = (0..count)
        .map(|i| {
            let wn = format!("layer{i}.weight");
            let (wd, wv) = c.f64(&wn)?;
            let &[r, k] = wd else {
                return Err(shape_error(&wn, format!("expected rank 2, got {wd:?}")));
            };
            let weight = Array2::from_shape_vec((r as usize, k as usize), wv.to_vec()).map_err(|e| shape_error(&wn, e.to_string()))?;
            let (_, bv) = c.f64(&format!("layer{i}.bias"))?;
            Ok(Dense {
                weight,
                bias: Array1::from(bv.to_vec()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint {
        model: ChartModel::from_layers(layers, dropout)?,
        seed: scalar_i64(c, "rng.seed")? as u64,
        iterations: to_usize("train.iterations", scalar_i64(c, "train.iterations")?)?,
    })
}

pub fn save_dataset(path: &Path, sim: &SimulatedData) -> Result<()> {
    Ok(dataset_to_container(sim)?.save(path)?)
}

pub fn load_dataset(path: &Path) -> Result<SimulatedData> {
    dataset_from_container(&Container::load(path)?)
}

pub fn save_dt(path: &Path, dt: &DtDatabase) -> Result<()> {
    Ok(dt_to_container(dt)?.save(path)?)
}

pub fn load_dt(path: &Path) -> Result<DtDatabase> {
    dt_from_container(&Container::load(path)?)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    Ok(checkpoint_to_container(ck)?.save(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_container(&Container::load(path)?)
}

/// Ground-truth and estimated positions, one row per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionTable {
    pub truth: Vec<Point2<f64>>,
    pub estimate: Vec<Point2<f64>>,
}

impl PositionTable {
    pub const HEADER: [&'static str; 4] = ["true_x", "true_y", "est_x", "est_y"];

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.truth.len() != self.estimate.len() {
            return Err(Error::Dimension("truth and estimate differ in length".into()));
        }
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(Self::HEADER).map_err(csv_error)?;
        for (t, e) in self.truth.iter().zip(&self.estimate) {
            w.write_record([t.x, t.y, e.x, e.y].map(|v| v.to_string())).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let headers = r.headers().map_err(csv_error)?.clone();
        if headers.iter().ne(Self::HEADER) {
            return Err(Error::Config {
                line: 1,
                msg: format!("expected header {}", Self::HEADER.join(",")),
            });
        }
        let mut out = Self::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_error)?;
            let v = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config {
                    line: i + 2,
                    msg: e.to_string(),
                })?;
            out.truth.push(Point2::new(v[0], v[1]));
            out.estimate.push(Point2::new(v[2], v[3]));
        }
        Ok(out)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config {
            line,
            msg: format!("{other:?}"),
        },
    }
}
