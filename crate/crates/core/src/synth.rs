//! Synthetic mission benchmark with geographic structure and domain shift.
//!
//! Each cell gets a base appearance vector, smoothed with its 4-neighbors so
//! adjacent cells look alike. A mission flies a random walk over a contiguous
//! set of cells and observes `Q·μ_y + t + ε` through its own orthogonal domain
//! transform. Infrared missions share one strong transform. Missions over the
//! unvisited partition never touch a cell used by the learning sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coordinate, GridMap};
use crate::sample::{Sample, Split, SATELLITE_MISSION};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "SAT")]
    Satellite,
    #[serde(rename = "VIS")]
    Visible,
    #[serde(rename = "IR")]
    Infrared,
}

impl Modality {
    pub fn tag(&self) -> &'static str {
        match self {
            Modality::Satellite => "SAT",
            Modality::Visible => "VIS",
            Modality::Infrared => "IR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissionRole {
    /// Part of the learning sequence.
    Cl,
    /// Held out over disjoint cells for spatial generalization.
    Unvisited,
}

/// Generator settings. Every field has a default; a JSON config file may set
/// any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub input_dim: usize,
    pub cl_missions: usize,
    pub unvisited_missions: usize,
    /// Cells reserved for unvisited missions.
    pub unvisited_cells: usize,
    /// Distinct cells on each mission's trajectory.
    pub cells_per_mission: usize,
    /// Samples per mission (train + test for learning missions).
    pub samples_per_mission: usize,
    /// Optional per-mission override of `samples_per_mission` for the
    /// learning missions, in id order.
    pub mission_sizes: Option<Vec<usize>>,
    /// 1-based positions of infrared missions among the learning missions.
    pub ir_missions: Vec<usize>,
    /// 1-based positions of infrared missions among the unvisited missions.
    pub unvisited_ir_missions: Vec<usize>,
    /// Inclusive range of satellite samples per cell.
    pub satellite_per_class: [usize; 2],
    pub satellite_noise: f64,
    pub visible_noise: f64,
    pub infrared_noise: f64,
    /// Strength of the Gaussian perturbation orthogonalized into each
    /// visible-light transform; 0 gives the identity.
    pub visible_rotation: f64,
    pub visible_bias: f64,
    pub infrared_rotation: f64,
    pub infrared_bias: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            cell_size: 200.0,
            origin: [0.0, 0.0],
            input_dim: 16,
            cl_missions: 10,
            unvisited_missions: 4,
            unvisited_cells: 16,
            cells_per_mission: 18,
            samples_per_mission: 90,
            // deliberately uneven, 21 to 167 samples, about 900 in total
            mission_sizes: Some(vec![116, 95, 94, 79, 63, 86, 92, 21, 86, 167]),
            ir_missions: vec![9, 10],
            unvisited_ir_missions: vec![4],
            satellite_per_class: [8, 16],
            satellite_noise: 0.15,
            visible_noise: 0.1,
            infrared_noise: 0.3,
            visible_rotation: 0.1,
            visible_bias: 0.0,
            infrared_rotation: 1.0,
            infrared_bias: 0.2,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        let cells = self.rows * self.cols;
        if cells == 0 || self.input_dim == 0 {
            return err("grid and input dimension must be non-empty".into());
        }
        if self.cl_missions == 0 {
            return err("at least one learning mission is required".into());
        }
        if self.unvisited_missions > 0 && self.unvisited_cells == 0 {
            return err("unvisited missions need unvisited cells".into());
        }
        if self.unvisited_cells >= cells {
            return err(format!("{} unvisited cells leave no cells for the {} learning missions", self.unvisited_cells, self.cl_missions));
        }
        if self.cells_per_mission == 0 || self.cells_per_mission > cells - self.unvisited_cells {
            return err(format!(
                "cells_per_mission {} must be in 1..={}",
                self.cells_per_mission,
                cells - self.unvisited_cells
            ));
        }
        let sizes = self.mission_sizes.clone().unwrap_or_else(|| vec![self.samples_per_mission; self.cl_missions]);
        if sizes.len() != self.cl_missions {
            return err(format!("mission_sizes has {} entries for {} missions", sizes.len(), self.cl_missions));
        }
        if sizes.iter().any(|&n| n < 2) || (self.unvisited_missions > 0 && self.samples_per_mission == 0) {
            return err("every learning mission needs at least two samples".into());
        }
        if self.ir_missions.iter().any(|&p| p == 0 || p > self.cl_missions) {
            return err("ir_missions positions out of range".into());
        }
        if self.unvisited_ir_missions.iter().any(|&p| p == 0 || p > self.unvisited_missions) {
            return err("unvisited_ir_missions positions out of range".into());
        }
        let [lo, hi] = self.satellite_per_class;
        if lo == 0 || lo > hi {
            return err("satellite_per_class must be a non-empty range starting at 1 or more".into());
        }
        let scales = [
            self.satellite_noise,
            self.visible_noise,
            self.infrared_noise,
            self.visible_rotation,
            self.visible_bias,
            self.infrared_rotation,
            self.infrared_bias,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || self.cell_size.is_nan() || self.cell_size <= 0.0 {
            return err("noise, shift and cell sizes must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Appearance shift of one mission: `x ↦ Q·x + t + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTransform {
    pub mission: u32,
    pub modality: Modality,
    /// Orthogonal matrix, row-major.
    pub q: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    pub noise_sigma: f64,
}

impl DomainTransform {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.q.len();
        DMatrix::from_fn(n, n, |r, c| self.q[r][c])
    }

    fn from_parts(mission: u32, modality: Modality, q: &DMatrix<f64>, t: &DVector<f64>, noise_sigma: f64) -> Self {
        Self {
            mission,
            modality,
            q: (0..q.nrows()).map(|r| q.row(r).iter().copied().collect()).collect(),
            t: t.iter().copied().collect(),
            noise_sigma,
        }
    }

    fn apply<R: Rng + ?Sized>(&self, mu: &[f64], rng: &mut R) -> Vec<f64> {
        (0..self.q.len())
            .map(|r| {
                let clean: f64 = self.q[r].iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() + self.t[r];
                let eps: f64 = StandardNormal.sample(rng);
                clean + self.noise_sigma * eps
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionInfo {
    pub id: u32,
    pub role: MissionRole,
    pub modality: Modality,
    /// Distinct cells in trajectory order.
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Forward,
    Backward,
    Pressure,
    Robust,
}

impl OrderKind {
    pub const ALL: [OrderKind; 4] = [OrderKind::Forward, OrderKind::Backward, OrderKind::Pressure, OrderKind::Robust];

    pub fn name(&self) -> &'static str {
        match self {
            OrderKind::Forward => "forward",
            OrderKind::Backward => "backward",
            OrderKind::Pressure => "pressure",
            OrderKind::Robust => "robust",
        }
    }
}

impl std::str::FromStr for OrderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        OrderKind::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown order '{s}' (expected forward, backward, pressure or robust)"))
    }
}

/// File header: everything except the sample records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchHeader {
    pub version: u32,
    pub seed: u64,
    pub grid: GridMap,
    pub input_dim: usize,
    /// Base appearance `μ_y` of every cell.
    pub centroids: Vec<Vec<f64>>,
    pub domains: Vec<DomainTransform>,
    pub missions: Vec<MissionInfo>,
    pub orders: BTreeMap<OrderKind, Vec<u32>>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub header: BenchHeader,
    pub satellite: Vec<Sample>,
    pub train: BTreeMap<u32, Vec<Sample>>,
    pub test: BTreeMap<u32, Vec<Sample>>,
    /// Pooled samples of all unvisited missions.
    pub unvisited: Vec<Sample>,
}

impl Benchmark {
    pub fn map(&self) -> &GridMap {
        &self.header.grid
    }

    pub fn num_classes(&self) -> usize {
        self.header.grid.num_classes()
    }

    pub fn input_dim(&self) -> usize {
        self.header.input_dim
    }

    pub fn cl_missions(&self) -> impl Iterator<Item = &MissionInfo> {
        self.header.missions.iter().filter(|m| m.role == MissionRole::Cl)
    }

    pub fn unvisited_missions(&self) -> impl Iterator<Item = &MissionInfo> {
        self.header.missions.iter().filter(|m| m.role == MissionRole::Unvisited)
    }

    pub fn mission(&self, id: u32) -> Option<&MissionInfo> {
        self.header.missions.iter().find(|m| m.id == id)
    }

    pub fn order(&self, kind: OrderKind) -> &[u32] {
        &self.header.orders[&kind]
    }

    pub fn sample_count(&self) -> usize {
        self.satellite.len()
            + self.train.values().map(Vec::len).sum::<usize>()
            + self.test.values().map(Vec::len).sum::<usize>()
            + self.unvisited.len()
    }

    fn samples_in_file_order(&self) -> impl Iterator<Item = &Sample> {
        let missions = self.cl_missions().map(|m| m.id).collect::<Vec<_>>();
        self.satellite
            .iter()
            .chain(missions.into_iter().flat_map(move |id| {
                self.train.get(&id).into_iter().flatten().chain(self.test.get(&id).into_iter().flatten())
            }))
            .chain(&self.unvisited)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let to_io = |e: serde_json::Error| Error::Io(e.into());
        serde_json::to_writer(&mut *out, &self.header).map_err(to_io)?;
        out.write_all(b"\n")?;
        for s in self.samples_in_file_order() {
            serde_json::to_writer(&mut *out, s).map_err(to_io)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let first = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(Error::Parse { line: 1, message: "empty file".into() }),
        };
        let probe: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Version { found: v as u32, expected: FORMAT_VERSION }),
            None => return Err(Error::Parse { line: 1, message: "header has no version".into() }),
        }
        let header: BenchHeader =
            serde_json::from_value(probe).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;

        let mut bench = Benchmark {
            header,
            satellite: Vec::new(),
            train: BTreeMap::new(),
            test: BTreeMap::new(),
            unvisited: Vec::new(),
        };
        let mut read = 0;
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if s.raw.len() != bench.header.input_dim {
                return Err(Error::Parse { line: lineno, message: format!("raw vector has {} values", s.raw.len()) });
            }
            if s.label >= bench.num_classes() {
                return Err(Error::Parse { line: lineno, message: format!("label {} out of range", s.label) });
            }
            match s.split {
                Split::Anchor => bench.satellite.push(s),
                Split::Train => bench.train.entry(s.mission).or_default().push(s),
                Split::Test => bench.test.entry(s.mission).or_default().push(s),
                Split::Unvisited => bench.unvisited.push(s),
            }
            read += 1;
        }
        if read != bench.header.sample_count {
            return Err(Error::Parse {
                line: read + 2,
                message: format!("expected {} samples, found {read} (truncated file?)", bench.header.sample_count),
            });
        }
        Ok(bench)
    }
}

/// Orthogonal factor of `I + strength·G`, signs fixed so that strength 0
/// yields the identity.
fn orthogonal_near_identity<R: Rng + ?Sized>(dim: usize, strength: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let m = DMatrix::identity(dim, dim) + g * strength;
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| {
        let e: f64 = StandardNormal.sample(rng);
        scale * e
    })
}

fn smoothed_centroids<R: Rng + ?Sized>(map: &GridMap, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let raw: Vec<DVector<f64>> = (0..map.num_classes()).map(|_| gaussian_vec(dim, 1.0, rng)).collect();
    (0..map.num_classes())
        .map(|y| {
            let nbrs = map.neighbors(y);
            let mut m = raw[y].clone();
            for n in &nbrs {
                m += &raw[*n];
            }
            m /= (nbrs.len() + 1) as f64;
            let norm = m.norm();
            m.iter().map(|v| v / norm).collect()
        })
        .collect()
}

/// Random connected region of `size` cells grown from a random seed cell.
fn grow_region<R: Rng + ?Sized>(map: &GridMap, size: usize, rng: &mut R) -> BTreeSet<usize> {
    let mut region = BTreeSet::new();
    if size == 0 {
        return region;
    }
    region.insert(rng.random_range(0..map.num_classes()));
    while region.len() < size {
        let frontier: Vec<usize> = region
            .iter()
            .flat_map(|&c| map.neighbors(c))
            .filter(|n| !region.contains(n))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        region.insert(frontier[rng.random_range(0..frontier.len())]);
    }
    region
}

/// Random walk restricted to `allowed`, returning up to `want` distinct cells
/// in first-visit order.
fn trajectory<R: Rng + ?Sized>(map: &GridMap, allowed: &BTreeSet<usize>, want: usize, rng: &mut R) -> Vec<usize> {
    let cells: Vec<usize> = allowed.iter().copied().collect();
    let mut at = cells[rng.random_range(0..cells.len())];
    let mut visited = vec![at];
    let mut steps = 0;
    while visited.len() < want && steps < 100 * want {
        let nbrs: Vec<usize> = map.neighbors(at).into_iter().filter(|n| allowed.contains(n)).collect();
        if nbrs.is_empty() {
            break;
        }
        at = nbrs[rng.random_range(0..nbrs.len())];
        if !visited.contains(&at) {
            visited.push(at);
        }
        steps += 1;
    }
    visited
}

fn point_in_cell<R: Rng + ?Sized>(map: &GridMap, label: usize, rng: &mut R) -> Coordinate {
    let (row, col) = (label / map.cols, label % map.cols);
    Coordinate::new(
        map.origin.x + (col as f64 + rng.random_range(0.0..1.0)) * map.cell_size,
        map.origin.y + (row as f64 + rng.random_range(0.0..1.0)) * map.cell_size,
    )
}

/// Learning-mission permutation for a curriculum.
///
/// Forward runs visible missions before infrared ones; Backward reverses it;
/// Pressure moves the last (hardest) infrared mission of Forward to the front;
/// Robust shuffles Forward with `robust_seed`.
pub fn curriculum(missions: &[MissionInfo], kind: OrderKind, robust_seed: u64) -> Vec<u32> {
    let cl: Vec<&MissionInfo> = missions.iter().filter(|m| m.role == MissionRole::Cl).collect();
    let mut forward: Vec<u32> = cl.iter().filter(|m| m.modality != Modality::Infrared).map(|m| m.id).collect();
    forward.extend(cl.iter().filter(|m| m.modality == Modality::Infrared).map(|m| m.id));
    match kind {
        OrderKind::Forward => forward,
        OrderKind::Backward => forward.into_iter().rev().collect(),
        OrderKind::Pressure => {
            let hardest = cl.iter().filter(|m| m.modality == Modality::Infrared).map(|m| m.id).next_back();
            match hardest {
                Some(h) => std::iter::once(h).chain(forward.into_iter().filter(|&id| id != h)).collect(),
                None => forward,
            }
        }
        OrderKind::Robust => {
            let mut rng = ChaCha8Rng::seed_from_u64(robust_seed);
            forward.shuffle(&mut rng);
            forward
        }
    }
}

/// Seed of the Robust shuffle stored with a benchmark generated from `seed`.
pub fn robust_seed(seed: u64) -> u64 {
    seed ^ 0x5E_ED0F_0DE2u64
}

pub fn generate(config: &BenchConfig, seed: u64) -> Result<Benchmark> {
    config.validate()?;
    let map = GridMap::new(Coordinate::new(config.origin[0], config.origin[1]), config.cell_size, config.rows, config.cols)?;
    let dim = config.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let centroids = smoothed_centroids(&map, dim, &mut rng);
    let unvisited_cells = grow_region(&map, config.unvisited_cells, &mut rng);
    let cl_cells: BTreeSet<usize> = (0..map.num_classes()).filter(|c| !unvisited_cells.contains(c)).collect();

    let q_ir = orthogonal_near_identity(dim, config.infrared_rotation, &mut rng);
    let t_ir = gaussian_vec(dim, config.infrared_bias, &mut rng);

    let mut domains = vec![DomainTransform::from_parts(
        SATELLITE_MISSION,
        Modality::Satellite,
        &DMatrix::identity(dim, dim),
        &DVector::zeros(dim),
        config.satellite_noise,
    )];
    let mut missions = Vec::new();
    let total = config.cl_missions + config.unvisited_missions;
    for k in 0..total {
        let id = (k + 1) as u32;
        let (role, ir, allowed, want) = if k < config.cl_missions {
            (MissionRole::Cl, config.ir_missions.contains(&(k + 1)), &cl_cells, config.cells_per_mission)
        } else {
            let pos = k - config.cl_missions + 1;
            let want = config.cells_per_mission.min(unvisited_cells.len());
            (MissionRole::Unvisited, config.unvisited_ir_missions.contains(&pos), &unvisited_cells, want)
        };
        let cells = trajectory(&map, allowed, want, &mut rng);
        let domain = if ir {
            DomainTransform::from_parts(id, Modality::Infrared, &q_ir, &t_ir, config.infrared_noise)
        } else {
            let q = orthogonal_near_identity(dim, config.visible_rotation, &mut rng);
            let t = gaussian_vec(dim, config.visible_bias, &mut rng);
            DomainTransform::from_parts(id, Modality::Visible, &q, &t, config.visible_noise)
        };
        missions.push(MissionInfo { id, role, modality: domain.modality, cells });
        domains.push(domain);
    }

    let mut next_id = 0u64;
    let mut make = |label: usize, mission: u32, split: Split, domain: &DomainTransform, rng: &mut ChaCha8Rng| {
        let gt = point_in_cell(&map, label, rng);
        let raw = domain.apply(&centroids[label], rng);
        let s = Sample { id: next_id, mission, split, label, gt, domain_tag: domain.modality.tag().into(), raw };
        next_id += 1;
        s
    };

    let mut satellite = Vec::new();
    let [lo, hi] = config.satellite_per_class;
    for label in 0..map.num_classes() {
        let n = rng.random_range(lo..=hi);
        for _ in 0..n {
            satellite.push(make(label, SATELLITE_MISSION, Split::Anchor, &domains[0], &mut rng));
        }
    }

    let sizes = config.mission_sizes.clone().unwrap_or_else(|| vec![config.samples_per_mission; config.cl_missions]);
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    let mut unvisited = Vec::new();
    for (k, info) in missions.iter().enumerate() {
        let domain = &domains[k + 1];
        let n = if info.role == MissionRole::Cl { sizes[k] } else { config.samples_per_mission };
        let cells = &info.cells;
        for j in 0..n {
            let label = cells[j * cells.len() / n];
            let split = match (info.role, j % 2) {
                (MissionRole::Unvisited, _) => Split::Unvisited,
                (MissionRole::Cl, 0) => Split::Train,
                (MissionRole::Cl, _) => Split::Test,
            };
            let s = make(label, info.id, split, domain, &mut rng);
            match split {
                Split::Train => train.entry(info.id).or_insert_with(Vec::new).push(s),
                Split::Test => test.entry(info.id).or_insert_with(Vec::new).push(s),
                _ => unvisited.push(s),
            }
        }
    }

    let orders = OrderKind::ALL
        .into_iter()
        .map(|kind| (kind, curriculum(&missions, kind, robust_seed(seed))))
        .collect();
    let mut bench = Benchmark {
        header: BenchHeader {
            version: FORMAT_VERSION,
            seed,
            grid: map,
            input_dim: dim,
            centroids,
            domains,
            missions,
            orders,
            sample_count: 0,
        },
        satellite,
        train,
        test,
        unvisited,
    };
    bench.header.sample_count = bench.sample_count();
    Ok(bench)
}
