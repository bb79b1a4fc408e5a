//! Image container and block geometry.
//!
//! Every selection or projection that the block sampler needs is an index
//! map into a column-major buffer. Nothing here builds a dense matrix.

use crate::error::{check_len, Error, Result};

/// Square grayscale image, column-major (`data[col * n + row]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    n: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "image side must be positive"));
        }
        check_len(n * n, data.len())?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel {pos} of input image")));
        }
        Ok(Self { n, data })
    }

    pub(crate) fn from_parts(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    /// Builds an image from a closure over `(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for col in 0..n {
            for row in 0..n {
                data.push(f(row, col));
            }
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        col * self.n + row
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.index(row, col)]
    }

    /// Square sub-image with top-left corner `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, size: usize) -> Result<Image> {
        if row0 + size > self.n || col0 + size > self.n || size == 0 {
            return Err(Error::param(
                "crop",
                format!(
                    "{size}×{size} window at ({row0}, {col0}) does not fit a {n}×{n} image",
                    n = self.n
                ),
            ));
        }
        Ok(Image::from_fn(size, |r, c| self.get(row0 + r, col0 + c)))
    }
}

/// Half-open pixel rectangle `[row0, row1) × [col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Rect {
    pub fn square(n: usize) -> Self {
        Self {
            row0: 0,
            row1: n,
            col0: 0,
            col1: n,
        }
    }

    pub fn rows(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn cols(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }

    /// Position of `(row, col)` in the rectangle's own column-major buffer.
    pub fn local_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.contains(row, col));
        (col - self.col0) * self.rows() + (row - self.row0)
    }

    /// Grows the rectangle by `width` on every side and clips it to an
    /// `n × n` image.
    pub fn grow_clipped(&self, width: usize, n: usize) -> Rect {
        Rect {
            row0: self.row0.saturating_sub(width),
            row1: (self.row1 + width).min(n),
            col0: self.col0.saturating_sub(width),
            col1: (self.col1 + width).min(n),
        }
    }

    /// Global column-major indices of the covered pixels, in local order.
    pub fn global_indices(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for col in self.col0..self.col1 {
            for row in self.row0..self.row1 {
                out.push(col * n + row);
            }
        }
        out
    }

    /// Copies the covered pixels of a full `n × n` buffer.
    pub fn extract(&self, full: &[f64], n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for col in self.col0..self.col1 {
            let start = col * n + self.row0;
            out.extend_from_slice(&full[start..start + self.rows()]);
        }
        out
    }

    /// Writes a local buffer back into a full `n × n` buffer.
    pub fn insert(&self, local: &[f64], full: &mut [f64], n: usize) {
        debug_assert_eq!(local.len(), self.len());
        let rows = self.rows();
        for (k, col) in (self.col0..self.col1).enumerate() {
            let start = col * n + self.row0;
            full[start..start + rows].copy_from_slice(&local[k * rows..(k + 1) * rows]);
        }
    }
}

/// Which frame surrounds a block: one pixel, the PSF radius `r`, or `2r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    One,
    Radius,
    DoubleRadius,
}

impl FrameKind {
    pub fn width(self, r: usize) -> usize {
        match self {
            FrameKind::One => 1,
            FrameKind::Radius => r,
            FrameKind::DoubleRadius => 2 * r,
        }
    }
}

/// Tiling of an `n × n` image into `(n/m)²` square blocks of side `m`.
///
/// Blocks are numbered column-major over the block grid, so block `i` sits at
/// block-row `i % (n/m)` and block-column `i / (n/m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    m: usize,
    r: usize,
}

impl BlockPartition {
    pub fn new(n: usize, m: usize, r: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidPartition(
                "image and block sides must be positive".into(),
            ));
        }
        if !n.is_multiple_of(m) {
            return Err(Error::InvalidPartition(format!(
                "block side {m} does not divide image side {n}"
            )));
        }
        if m <= 2 * r {
            return Err(Error::InvalidPartition(format!(
                "block side {m} must exceed twice the PSF radius {r}"
            )));
        }
        Ok(Self { n, m, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn radius(&self) -> usize {
        self.r
    }

    pub fn blocks_per_side(&self) -> usize {
        self.n / self.m
    }

    pub fn block_count(&self) -> usize {
        self.blocks_per_side().pow(2)
    }

    pub fn block_size(&self) -> usize {
        self.m * self.m
    }

    pub fn pixel_count(&self) -> usize {
        self.n * self.n
    }

    fn check_block(&self, id: usize) -> Result<()> {
        if id < self.block_count() {
            Ok(())
        } else {
            Err(Error::BlockOutOfRange {
                id,
                count: self.block_count(),
            })
        }
    }

    /// `(block_row, block_col)` of a block id.
    pub fn block_coords(&self, id: usize) -> (usize, usize) {
        let per_side = self.blocks_per_side();
        (id % per_side, id / per_side)
    }

    pub fn block_id(&self, block_row: usize, block_col: usize) -> usize {
        block_col * self.blocks_per_side() + block_row
    }

    pub fn block_rect(&self, id: usize) -> Result<Rect> {
        self.check_block(id)?;
        let (br, bc) = self.block_coords(id);
        Ok(Rect {
            row0: br * self.m,
            row1: (br + 1) * self.m,
            col0: bc * self.m,
            col1: (bc + 1) * self.m,
        })
    }

    pub fn core_indices(&self, id: usize) -> Result<Vec<usize>> {
        Ok(self.block_rect(id)?.global_indices(self.n))
    }

    pub fn extended_block(&self, id: usize, kind: FrameKind) -> Result<ExtendedBlock> {
        let core = self.block_rect(id)?;
        let rect = core.grow_clipped(kind.width(self.r), self.n);
        let pixel_indices = rect.global_indices(self.n);
        let mut interior_offsets = Vec::with_capacity(core.len());
        for col in core.col0..core.col1 {
            for row in core.row0..core.row1 {
                interior_offsets.push(rect.local_index(row, col));
            }
        }
        Ok(ExtendedBlock {
            block_id: id,
            kind,
            rect,
            core,
            pixel_indices,
            interior_offsets,
        })
    }

    /// Chebyshev distance between two blocks on the block grid.
    pub fn block_distance(&self, a: usize, b: usize) -> usize {
        let (ar, ac) = self.block_coords(a);
        let (br, bc) = self.block_coords(b);
        ar.abs_diff(br).max(ac.abs_diff(bc))
    }
}

/// A block together with a clipped frame around it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedBlock {
    pub block_id: usize,
    pub kind: FrameKind,
    /// Clipped rectangle covered by block plus frame.
    pub rect: Rect,
    /// The block itself.
    pub core: Rect,
    /// Global pixel indices, column-major within `rect`.
    pub pixel_indices: Vec<usize>,
    /// Positions in `pixel_indices` of the core pixels, in core column-major
    /// order.
    pub interior_offsets: Vec<usize>,
}

impl ExtendedBlock {
    pub fn len(&self) -> usize {
        self.pixel_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_indices.is_empty()
    }

    pub fn gather(&self, image: &Image) -> Vec<f64> {
        gather(image.data(), &self.pixel_indices)
    }

    /// Selection of the core block out of this extended block.
    pub fn core_selection(&self) -> SelectionMap {
        SelectionMap {
            source_size: self.len(),
            index_table: self.interior_offsets.clone(),
        }
    }

    /// Selection of a smaller extended block (same block id) out of this one.
    pub fn selection_of(&self, inner: &ExtendedBlock) -> Result<SelectionMap> {
        let r = &inner.rect;
        let o = &self.rect;
        if inner.block_id != self.block_id
            || r.row0 < o.row0
            || r.row1 > o.row1
            || r.col0 < o.col0
            || r.col1 > o.col1
        {
            return Err(Error::param(
                "inner",
                "extended block is not contained in the outer one",
            ));
        }
        let mut index_table = Vec::with_capacity(r.len());
        for col in r.col0..r.col1 {
            for row in r.row0..r.row1 {
                index_table.push(o.local_index(row, col));
            }
        }
        SelectionMap::new(self.len(), index_table)
    }
}

/// Injective map picking `index_table.len()` entries out of a source vector.
///
/// `apply` realises `Uᵀ v`; `embed` realises `U v`; the complement indices
/// are the entries kept by the projector `I − U Uᵀ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMap {
    source_size: usize,
    index_table: Vec<usize>,
}

impl SelectionMap {
    pub fn new(source_size: usize, index_table: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; source_size];
        for &k in &index_table {
            if k >= source_size {
                return Err(Error::param(
                    "index_table",
                    format!("index {k} outside source of size {source_size}"),
                ));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::param(
                    "index_table",
                    format!("source position {k} selected twice"),
                ));
            }
        }
        Ok(Self {
            source_size,
            index_table,
        })
    }

    pub fn identity(size: usize) -> Self {
        Self {
            source_size: size,
            index_table: (0..size).collect(),
        }
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn target_size(&self) -> usize {
        self.index_table.len()
    }

    pub fn index_table(&self) -> &[usize] {
        &self.index_table
    }

    pub fn apply(&self, source: &[f64]) -> Result<Vec<f64>> {
        check_len(self.source_size, source.len())?;
        Ok(gather(source, &self.index_table))
    }

    /// Writes `values` into the selected positions of `target`.
    pub fn embed(&self, values: &[f64], target: &mut [f64]) -> Result<()> {
        check_len(self.target_size(), values.len())?;
        check_len(self.source_size, target.len())?;
        scatter(values, &self.index_table, target);
        Ok(())
    }

    /// Source positions not selected by the map.
    pub fn complement(&self) -> Vec<usize> {
        let mut selected = vec![false; self.source_size];
        for &k in &self.index_table {
            selected[k] = true;
        }
        (0..self.source_size).filter(|&k| !selected[k]).collect()
    }

    /// `(I − U Uᵀ) v`: zeroes the selected entries.
    pub fn project_out(&self, source: &[f64]) -> Result<Vec<f64>> {
        check_len(self.source_size, source.len())?;
        let mut out = source.to_vec();
        for &k in &self.index_table {
            out[k] = 0.0;
        }
        Ok(out)
    }
}

/// `out[k] = source[indices[k]]`.
pub fn gather(source: &[f64], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&k| source[k]).collect()
}

/// `target[indices[k]] = values[k]`.
pub fn scatter(values: &[f64], indices: &[usize], target: &mut [f64]) {
    for (&k, &v) in indices.iter().zip(values) {
        target[k] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_tiling() {
        let p = BlockPartition::new(4, 2, 0).unwrap();
        assert_eq!(p.block_count(), 4);
        assert_eq!(p.block_size(), 4);
    }

    #[test]
    fn desk_and_full_scale_tilings() {
        let p = BlockPartition::new(512, 64, 8).unwrap();
        assert_eq!((p.block_count(), p.block_size()), (64, 4096));
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(matches!(
            BlockPartition::new(6, 2, 1),
            Err(Error::InvalidPartition(_))
        ));
        assert!(matches!(
            BlockPartition::new(10, 4, 1),
            Err(Error::InvalidPartition(_))
        ));
        assert!(BlockPartition::new(0, 2, 0).is_err());
    }

    #[test]
    fn block_order_is_column_major() {
        let p = BlockPartition::new(8, 4, 1).unwrap();
        assert_eq!(p.block_coords(1), (1, 0));
        assert_eq!(p.block_coords(2), (0, 1));
        let rect = p.block_rect(1).unwrap();
        assert_eq!((rect.row0, rect.col0), (4, 0));
        assert!(matches!(
            p.block_rect(4),
            Err(Error::BlockOutOfRange { id: 4, count: 4 })
        ));
    }

    #[test]
    fn extended_block_sizes_full_scale() {
        let p = BlockPartition::new(512, 64, 8).unwrap();
        let interior = p.block_id(3, 3);
        assert_eq!(
            p.extended_block(interior, FrameKind::DoubleRadius).unwrap().len(),
            9216
        );
        assert_eq!(
            p.extended_block(0, FrameKind::DoubleRadius).unwrap().len(),
            6400
        );
        let edge = p.block_id(0, 3);
        assert_eq!(
            p.extended_block(edge, FrameKind::DoubleRadius).unwrap().len(),
            (64 + 32) * (64 + 16)
        );
    }

    #[test]
    fn zero_radius_frame_is_the_block() {
        let p = BlockPartition::new(8, 4, 0).unwrap();
        for id in 0..p.block_count() {
            let e = p.extended_block(id, FrameKind::DoubleRadius).unwrap();
            assert_eq!(e.len(), 16);
            assert_eq!(e.interior_offsets, (0..16).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gather_interior_one_frame_of_four_by_four() {
        // n = 4, m = 2: block 0 (top-left) +1 frame covers rows 0..3, cols 0..3.
        let p = BlockPartition::new(4, 2, 0).unwrap();
        let image = Image::from_fn(4, |r, c| (c * 4 + r) as f64);
        let e = p.extended_block(0, FrameKind::One).unwrap();
        assert_eq!(
            e.gather(&image),
            vec![0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 8.0, 9.0, 10.0]
        );
        assert_eq!(e.interior_offsets, vec![0, 1, 3, 4]);
        // Every block of a 4×4 image touches the border; a 6×6 image with m = 2
        // has an interior block whose +1 frame holds 16 pixels.
        let p6 = BlockPartition::new(6, 2, 0).unwrap();
        let image6 = Image::from_fn(6, |r, c| (c * 6 + r) as f64);
        let centre = p6.block_id(1, 1);
        let e6 = p6.extended_block(centre, FrameKind::One).unwrap();
        assert_eq!(e6.len(), 16);
        assert_eq!(
            e6.gather(&image6),
            vec![
                7.0, 8.0, 9.0, 10.0, 13.0, 14.0, 15.0, 16.0, 19.0, 20.0, 21.0, 22.0, 25.0,
                26.0, 27.0, 28.0
            ]
        );
        assert_eq!(e6.interior_offsets, vec![5, 6, 9, 10]);
    }

    #[test]
    fn selection_map_rejects_duplicates_and_out_of_range() {
        assert!(SelectionMap::new(3, vec![0, 0]).is_err());
        assert!(SelectionMap::new(3, vec![3]).is_err());
        let s = SelectionMap::new(5, vec![4, 1]).unwrap();
        assert_eq!(s.complement(), vec![0, 2, 3]);
        assert_eq!(
            s.project_out(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vec![1.0, 0.0, 3.0, 4.0, 0.0]
        );
    }

    #[test]
    fn identity_gather_is_the_image() {
        let image = Image::from_fn(3, |r, c| (r * 10 + c) as f64);
        let id = SelectionMap::identity(9);
        assert_eq!(id.apply(image.data()).unwrap(), image.data());
    }

    #[test]
    fn rect_extract_insert_round_trip() {
        let image = Image::from_fn(6, |r, c| (r + 7 * c) as f64);
        let rect = Rect {
            row0: 1,
            row1: 4,
            col0: 2,
            col1: 5,
        };
        let local = rect.extract(image.data(), 6);
        assert_eq!(local, gather(image.data(), &rect.global_indices(6)));
        let mut blank = vec![0.0; 36];
        rect.insert(&local, &mut blank, 6);
        for k in rect.global_indices(6) {
            assert_eq!(blank[k], image.data()[k]);
        }
    }

    #[test]
    fn image_rejects_non_finite() {
        assert!(Image::new(1, vec![f64::NAN]).is_err());
        assert!(Image::new(2, vec![0.0; 3]).is_err());
        // Values outside [0, 1] are allowed.
        assert!(Image::new(1, vec![-3.0]).is_ok());
    }
}
