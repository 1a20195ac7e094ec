//! Rotating-parity read striping.
//!
//! Left-symmetric layout: the parity strip walks backwards one drive per
//! stripe and data strips follow it round-robin. Reads never touch parity,
//! and over any full rotation of stripes every drive holds exactly the same
//! number of data strips, so arrivals stay uniform no matter how blocks skew.

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Striping {
    drives: usize,
    blocks_per_strip: u64,
    total_blocks: u64,
}

impl Striping {
    pub fn new(
        drives: usize,
        stripe_unit: u64,
        block_size: u64,
        io_range: u64,
    ) -> Result<Self, SimError> {
        if drives < 2 {
            return Err(SimError::BadConfig(format!(
                "striping needs at least 2 drives, got {drives}"
            )));
        }
        if block_size == 0 || stripe_unit % block_size != 0 {
            return Err(SimError::BadConfig(format!(
                "block size {block_size} must divide stripe unit {stripe_unit}"
            )));
        }
        if io_range % block_size != 0 {
            return Err(SimError::BadConfig(format!(
                "block size {block_size} must divide io range {io_range}"
            )));
        }
        Ok(Self {
            drives,
            blocks_per_strip: stripe_unit / block_size,
            total_blocks: io_range / block_size,
        })
    }

    pub fn drives(&self) -> usize {
        self.drives
    }

    pub fn total_blocks(&self) -> u64 {
        self.total_blocks
    }

    /// Backend drive holding `block`. Fails for blocks outside the io range.
    pub fn drive_of(&self, block: u64) -> Result<usize, SimError> {
        if block >= self.total_blocks {
            return Err(SimError::BlockOutOfRange {
                block,
                total: self.total_blocks,
            });
        }
        Ok(map_block_to_drive(block, self.drives, self.blocks_per_strip))
    }
}

/// Raw layout arithmetic: which drive holds the data strip containing
/// `block`, for an array of `drives` members with `blocks_per_strip` blocks
/// per strip.
pub fn map_block_to_drive(block: u64, drives: usize, blocks_per_strip: u64) -> usize {
    let n = drives as u64;
    let data_strips = n - 1;
    let strip = block / blocks_per_strip;
    let stripe = strip / data_strips;
    let slot = strip % data_strips;
    let parity = (n - 1) - (stripe % n);
    ((parity + 1 + slot) % n) as usize
}
