use super::{check_layout, check_len, BlockRoles, Fidelity};
use crate::block::{BlockLayout, BlockVector};
use crate::error::{Error, Result};

/// `g(x) = ½‖y - A x‖²` for a fixed dense `m × n` matrix, with `x` split into
/// arbitrary blocks. Block 1 is reported as the image block.
#[derive(Debug, Clone)]
pub struct LinearModel {
    rows: usize,
    cols: usize,
    matrix: Vec<f64>,
    y: Vec<f64>,
    layout: BlockLayout,
}

impl LinearModel {
    /// `matrix` is row-major `rows × layout.total()`.
    pub fn new(matrix: Vec<f64>, rows: usize, layout: BlockLayout, y: Vec<f64>) -> Result<Self> {
        let cols = layout.total();
        if rows == 0 {
            return Err(Error::Shape("linear model needs at least one row".into()));
        }
        check_len(rows * cols, matrix.len())?;
        check_len(rows, y.len())?;
        Ok(Self {
            rows,
            cols,
            matrix,
            y,
            layout,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    fn apply_columns(&self, range: std::ops::Range<usize>, d: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.matrix[r * self.cols..(r + 1) * self.cols];
                row[range.clone()].iter().zip(d).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

impl Fidelity for LinearModel {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn roles(&self) -> BlockRoles {
        BlockRoles {
            image: 1,
            operator: None,
        }
    }

    fn measurement(&self) -> &[f64] {
        &self.y
    }

    fn set_measurement(&mut self, y: Vec<f64>) -> Result<()> {
        check_len(self.rows, y.len())?;
        self.y = y;
        Ok(())
    }

    fn predict(&self, x: &BlockVector) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        Ok(self.apply_columns(0..self.cols, x.data()))
    }

    fn block_apply(&self, x: &BlockVector, block: usize, d: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        let range = self.layout.range(block)?;
        check_len(range.len(), d.len())?;
        Ok(self.apply_columns(range, d))
    }

    fn block_adjoint(&self, x: &BlockVector, block: usize, r: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        check_len(self.rows, r.len())?;
        let range = self.layout.range(block)?;
        let mut out = vec![0.0; range.len()];
        for (row_idx, ri) in r.iter().enumerate() {
            let row = &self.matrix[row_idx * self.cols..(row_idx + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(&row[range.clone()]) {
                *o += a * ri;
            }
        }
        Ok(out)
    }

    fn block_dependencies(&self, _block: usize) -> Vec<usize> {
        vec![]
    }
}
