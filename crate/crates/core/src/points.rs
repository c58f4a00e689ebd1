/// `N` points in `R^d`, stored coordinate-major so that one coordinate of
/// every point is a contiguous slice.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    len: usize,
    coords: Vec<f64>,
}

impl PointSet {
    /// Builds from `len` points laid out one after another.
    pub fn from_row_major(dim: usize, rows: &[f64]) -> Self {
        assert!(dim > 0 && rows.len().is_multiple_of(dim), "row data does not match dimension");
        let len = rows.len() / dim;
        let mut coords = vec![0.0; rows.len()];
        for i in 0..len {
            for k in 0..dim {
                coords[k * len + i] = rows[i * dim + k];
            }
        }
        Self { dim, len, coords }
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Self {
        let flat: Vec<f64> = points
            .iter()
            .inspect(|p| assert_eq!(p.len(), dim, "point dimension mismatch"))
            .flatten()
            .copied()
            .collect();
        Self::from_row_major(dim, &flat)
    }

    /// Univariate points.
    pub fn from_scalars(values: Vec<f64>) -> Self {
        Self { dim: 1, len: values.len(), coords: values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coordinate `k` of every point.
    pub fn coord(&self, k: usize) -> &[f64] {
        &self.coords[k * self.len..(k + 1) * self.len]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.coords[k * self.len + i]
    }

    /// Copies point `i` into `buf` (length `dim`).
    pub fn point_into(&self, i: usize, buf: &mut [f64]) {
        for (k, b) in buf.iter_mut().enumerate().take(self.dim) {
            *b = self.coords[k * self.len + i];
        }
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        self.point_into(i, &mut p);
        p
    }

    /// Heap bytes held by the coordinates.
    pub fn heap_bytes(&self) -> usize {
        self.coords.capacity() * std::mem::size_of::<f64>()
    }
}

// points generated per parallel wave before scattering to coordinate-major
const WAVE: usize = 1 << 16;

impl PointSet {
    pub fn from_coord_major(dim: usize, len: usize, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), dim * len);
        Self { dim, len, coords }
    }

    /// Generates `len` points in parallel. `gen(i, point)` writes point `i`
    /// and returns a per-point scalar (e.g. a weight). The output depends on
    /// `gen` only, never on thread scheduling.
    pub fn generate<S, I, G>(
        dim: usize,
        len: usize,
        init: I,
        gen: G,
    ) -> Result<(PointSet, Vec<f64>), crate::Error>
    where
        I: Fn() -> S + Sync + Send,
        G: Fn(&mut S, usize, &mut [f64]) -> Result<f64, crate::Error> + Sync + Send,
    {
        use rayon::prelude::*;
        let mut coords = vec![0.0; dim * len];
        let mut scalars = vec![0.0; len];
        let mut rows = vec![0.0; dim * WAVE.min(len.max(1))];
        let mut start = 0;
        while start < len {
            let count = WAVE.min(len - start);
            rows[..count * dim]
                .par_chunks_mut(dim)
                .zip(scalars[start..start + count].par_iter_mut())
                .enumerate()
                .try_for_each_init(&init, |state, (off, (row, s))| {
                    *s = gen(state, start + off, row)?;
                    Ok::<(), crate::Error>(())
                })?;
            for off in 0..count {
                for k in 0..dim {
                    coords[k * len + start + off] = rows[off * dim + k];
                }
            }
            start += count;
        }
        Ok((PointSet { dim, len, coords }, scalars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_round_trip() {
        let ps = PointSet::from_row_major(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.coord(1), &[2.0, 5.0]);
        assert_eq!(ps.point(1), vec![4.0, 5.0, 6.0]);
    }
}
