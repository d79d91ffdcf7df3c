use num_complex::Complex64;

use super::fft::{from_pairs, to_pairs, Fft2};
use super::{check_layout, check_len, BlockRoles, Fidelity};
use crate::block::{BlockLayout, BlockVector};
use crate::error::{Error, Result};

/// Parallel MRI model `A_i(θ_i) = P F diag(θ_i)` for `c` coils, with `F` the
/// unitary 2-D DFT and `P` a binary frequency mask.
///
/// Blocks: image `v` (`H·W` complex, block 1) and coil maps `θ` (`c·H·W`
/// complex, coil-major, block 2), both as interleaved `(re, im)` pairs.
/// Measurements are `c·m` complex values, coil-major, with the `m` sampled
/// frequencies of each coil in row-major order.
#[derive(Debug, Clone)]
pub struct MultiCoil {
    height: usize,
    width: usize,
    coils: usize,
    sampled: Vec<usize>,
    fft: Fft2,
    y: Vec<f64>,
    layout: BlockLayout,
}

impl MultiCoil {
    pub fn new(image: (usize, usize), coils: usize, mask: &[bool], y: Vec<f64>) -> Result<Self> {
        let (height, width) = image;
        let n = height * width;
        if n == 0 || coils == 0 {
            return Err(Error::Shape("multi-coil model needs a non-empty grid and >= 1 coil".into()));
        }
        check_len(n, mask.len())?;
        let sampled: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if sampled.is_empty() {
            return Err(Error::Shape("sampling mask selects no frequencies".into()));
        }
        check_len(2 * coils * sampled.len(), y.len())?;
        let layout = BlockLayout::new(vec![2 * n, 2 * coils * n])?;
        Ok(Self {
            height,
            width,
            coils,
            sampled,
            fft: Fft2::new(height, width),
            y,
            layout,
        })
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn sampled(&self) -> usize {
        self.sampled.len()
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// `P F w`.
    fn sample(&self, mut w: Vec<Complex64>) -> Vec<Complex64> {
        self.fft.forward_unitary(&mut w);
        self.sampled.iter().map(|&i| w[i]).collect()
    }

    /// `Fᴴ Pᵀ r`.
    fn unsample(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut full = vec![Complex64::new(0.0, 0.0); self.pixels()];
        for (&i, v) in self.sampled.iter().zip(r) {
            full[i] = *v;
        }
        self.fft.inverse_unitary(&mut full);
        full
    }

    /// Concatenation over coils of `P F (θ_i ⊙ v)`, as real pairs.
    pub fn forward(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len(2 * self.coils * self.pixels(), theta.len())?;
        check_len(2 * self.pixels(), v.len())?;
        let v = from_pairs(v);
        let theta = from_pairs(theta);
        let mut out = Vec::with_capacity(self.coils * self.sampled.len());
        for map in theta.chunks_exact(self.pixels()) {
            let w: Vec<Complex64> = map.iter().zip(&v).map(|(a, b)| a * b).collect();
            out.extend(self.sample(w));
        }
        Ok(to_pairs(&out))
    }

    pub fn pack(&self, v: &[f64], theta: &[f64]) -> Result<BlockVector> {
        BlockVector::new(self.layout.clone(), [v, theta].concat())
    }

    pub fn grad_v(&self, v: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.block_gradient(&self.pack(v, theta)?, 1)
    }

    pub fn grad_theta(&self, v: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.block_gradient(&self.pack(v, theta)?, 2)
    }
}

impl Fidelity for MultiCoil {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn roles(&self) -> BlockRoles {
        BlockRoles {
            image: 1,
            operator: Some(2),
        }
    }

    fn measurement(&self) -> &[f64] {
        &self.y
    }

    fn set_measurement(&mut self, y: Vec<f64>) -> Result<()> {
        check_len(2 * self.coils * self.sampled.len(), y.len())?;
        self.y = y;
        Ok(())
    }

    fn predict(&self, x: &BlockVector) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        self.forward(x.block(2)?, x.block(1)?)
    }

    fn block_apply(&self, x: &BlockVector, block: usize, d: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        match block {
            1 => self.forward(x.block(2)?, d),
            2 => self.forward(d, x.block(1)?),
            _ => Err(Error::BlockIndex { index: block, blocks: 2 }),
        }
    }

    fn block_adjoint(&self, x: &BlockVector, block: usize, r: &[f64]) -> Result<Vec<f64>> {
        check_layout(&self.layout, x)?;
        check_len(2 * self.coils * self.sampled.len(), r.len())?;
        let r = from_pairs(r);
        let n = self.pixels();
        let back: Vec<Vec<Complex64>> = r
            .chunks_exact(self.sampled.len())
            .map(|ri| self.unsample(ri))
            .collect();
        match block {
            1 => {
                let theta = from_pairs(x.block(2)?);
                let mut acc = vec![Complex64::new(0.0, 0.0); n];
                for (map, b) in theta.chunks_exact(n).zip(&back) {
                    for ((a, t), bi) in acc.iter_mut().zip(map).zip(b) {
                        *a += t.conj() * bi;
                    }
                }
                Ok(to_pairs(&acc))
            }
            2 => {
                let v = from_pairs(x.block(1)?);
                let out: Vec<Complex64> = back
                    .iter()
                    .flat_map(|b| b.iter().zip(&v).map(|(bi, vi)| vi.conj() * bi))
                    .collect();
                Ok(to_pairs(&out))
            }
            _ => Err(Error::BlockIndex { index: block, blocks: 2 }),
        }
    }

    fn block_dependencies(&self, block: usize) -> Vec<usize> {
        match block {
            1 => vec![2],
            2 => vec![1],
            _ => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::norm;

    #[test]
    fn single_coil_full_mask_is_unitary() {
        let (h, w) = (4, 6);
        let mask = vec![true; h * w];
        let model = MultiCoil::new((h, w), 1, &mask, vec![0.0; 2 * h * w]).unwrap();
        let ones: Vec<f64> = (0..h * w).flat_map(|_| [1.0, 0.0]).collect();
        let v: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.7).cos()).collect();
        let y = model.forward(&ones, &v).unwrap();
        assert!((norm(&y) - norm(&v)).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(MultiCoil::new((2, 2), 1, &[false; 4], vec![]).is_err());
    }
}
