use crate::grid::BlockPartition;

/// Four-colouring of the block grid by `(block_row mod 2, block_col mod 2)`.
///
/// Blocks of one colour are at least one block apart, and since `m > 2r` the
/// `2r` frame of a block never reaches another block of the same colour, so
/// each class can be updated concurrently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorSchedule {
    classes: [Vec<usize>; 4],
}

impl ColorSchedule {
    pub fn new(partition: &BlockPartition) -> Self {
        let mut classes: [Vec<usize>; 4] = Default::default();
        for id in 0..partition.block_count() {
            let (br, bc) = partition.block_coords(id);
            classes[(br % 2) + 2 * (bc % 2)].push(id);
        }
        Self { classes }
    }

    pub fn classes(&self) -> &[Vec<usize>; 4] {
        &self.classes
    }

    pub fn class(&self, l: usize) -> &[usize] {
        &self.classes[l]
    }
}
