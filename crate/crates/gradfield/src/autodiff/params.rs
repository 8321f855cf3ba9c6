//! Flat parameter storage with a structured (layer, row, col) layout.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Shapes of the per-layer weight matrices, with precomputed flat offsets.
///
/// The layout is a bijection between (layer, row, col) triples and `[0, p)`:
/// layer `l` occupies `offset(l) .. offset(l) + rows·cols` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for &(r, c) in shapes {
            offsets.push(total);
            total += r * c;
        }
        ParamLayout {
            shapes: shapes.to_vec(),
            offsets,
            total,
        }
    }

    pub fn empty() -> Self {
        ParamLayout::new(&[])
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn shape(&self, layer: usize) -> (usize, usize) {
        self.shapes[layer]
    }

    pub fn offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    /// Total number of scalar parameters p.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Flat index of entry (layer, row, col).
    pub fn index(&self, layer: usize, row: usize, col: usize) -> usize {
        let (r, c) = self.shapes[layer];
        assert!(row < r && col < c, "index ({row},{col}) out of {r}x{c}");
        self.offsets[layer] + row * c + col
    }
}

/// Flat vector of all network parameters, θ ∈ ℝᵖ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.len();
        ParamVector {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), layout.len(), "value count != layout size");
        ParamVector { layout, values }
    }

    pub fn from_matrices(mats: &[Matrix]) -> Self {
        let shapes: Vec<(usize, usize)> = mats.iter().map(|m| (m.rows, m.cols)).collect();
        let layout = ParamLayout::new(&shapes);
        let mut values = Vec::with_capacity(layout.len());
        for m in mats {
            values.extend_from_slice(&m.data);
        }
        ParamVector { layout, values }
    }

    pub fn to_matrices(&self) -> Vec<Matrix> {
        (0..self.layout.num_layers())
            .map(|l| {
                let (r, c) = self.layout.shape(l);
                Matrix {
                    rows: r,
                    cols: c,
                    data: self.layer(l).to_vec(),
                }
            })
            .collect()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major slice of one layer's weights.
    pub fn layer(&self, l: usize) -> &[f64] {
        let (r, c) = self.layout.shape(l);
        let o = self.layout.offset(l);
        &self.values[o..o + r * c]
    }

    pub fn get(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.values[self.layout.index(layer, row, col)]
    }

    pub fn set(&mut self, layer: usize, row: usize, col: usize, v: f64) {
        let i = self.layout.index(layer, row, col);
        self.values[i] = v;
    }
}
