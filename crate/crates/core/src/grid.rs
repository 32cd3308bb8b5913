//! Discretization of the operational area into grid-cell labels.
//!
//! Cells are half-open `[low, high)` along each axis, except the last row and
//! column which are closed so the far edge of the area still maps to a cell.
//! Labels are row-major: `label = row * cols + col`, with rows along `y`.

use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

/// Planar position in meters (UTM-like easting/northing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
}

impl Coordinate {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Coordinate) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    /// South-west corner of the area.
    pub origin: Coordinate,
    /// Side length of a square cell, in meters.
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridMap {
    pub fn new(origin: Coordinate, cell_size: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("grid must have at least one cell, got {rows}x{cols}")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(Self { origin, cell_size, rows, cols })
    }

    /// Number of classes `C`.
    pub fn num_classes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn row_col(&self, label: usize) -> Result<(usize, usize)> {
        self.check_label(label)?;
        Ok((label / self.cols, label % self.cols))
    }

    pub fn label_at(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn check_label(&self, label: usize) -> Result<()> {
        if label < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidLabel { label, classes: self.num_classes() })
        }
    }

    fn axis_index(&self, value: f64, low: f64, count: usize, axis: Axis) -> Result<usize> {
        let high = low + self.cell_size * count as f64;
        if !value.is_finite() || value < low || value > high {
            return Err(Error::OutOfArea { axis, value });
        }
        let idx = ((value - low) / self.cell_size).floor() as usize;
        Ok(idx.min(count - 1))
    }

    /// Label of the cell containing `p`.
    pub fn cell_of(&self, p: Coordinate) -> Result<usize> {
        let col = self.axis_index(p.x, self.origin.x, self.cols, Axis::X)?;
        let row = self.axis_index(p.y, self.origin.y, self.rows, Axis::Y)?;
        Ok(self.label_at(row, col))
    }

    /// Geometric center of the cell.
    pub fn center_of(&self, label: usize) -> Result<Coordinate> {
        let (row, col) = self.row_col(label)?;
        Ok(Coordinate {
            x: self.origin.x + (col as f64 + 0.5) * self.cell_size,
            y: self.origin.y + (row as f64 + 0.5) * self.cell_size,
        })
    }

    /// Whether a prediction counts as a correct localization.
    ///
    /// The comparison is strict: a centroid at exactly `tau` meters from the
    /// ground truth is counted as incorrect.
    pub fn within_tolerance(&self, predicted: usize, gt: Coordinate, tau: f64) -> Result<bool> {
        Ok(self.center_of(predicted)?.distance(&gt) < tau)
    }

    /// 4-neighborhood of a cell, in ascending label order.
    pub fn neighbors(&self, label: usize) -> Vec<usize> {
        let (row, col) = (label / self.cols, label % self.cols);
        let mut out = Vec::with_capacity(4);
        if row > 0 {
            out.push(self.label_at(row - 1, col));
        }
        if col > 0 {
            out.push(self.label_at(row, col - 1));
        }
        if col + 1 < self.cols {
            out.push(self.label_at(row, col + 1));
        }
        if row + 1 < self.rows {
            out.push(self.label_at(row + 1, col));
        }
        out
    }
}
