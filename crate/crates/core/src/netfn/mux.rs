use std::collections::BTreeMap;
use std::ops::Range;

use super::Block;

/// In-order recombination of a split stream. Out-of-order blocks wait up to
/// `hold_limit` slots for the missing ones; after that the mux skips ahead
/// and the skipped ids become permanent gaps.
#[derive(Clone, Debug)]
pub struct MuxState {
    next_expected: u64,
    held: BTreeMap<u64, (Block, u64)>,
    hold_limit: u64,
    gap_blocks: u64,
    duplicates: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MuxRelease {
    pub blocks: Vec<Block>,
    /// Ids given up on, in ascending order.
    pub gaps: Vec<Range<u64>>,
}

impl MuxState {
    pub fn new(hold_limit: u64) -> Self {
        Self {
            next_expected: 1,
            held: BTreeMap::new(),
            hold_limit,
            gap_blocks: 0,
            duplicates: 0,
        }
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn hold_limit(&self) -> u64 {
        self.hold_limit
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }

    /// `(block_id, arrival_slot)` of every held block.
    pub fn held(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.held.iter().map(|(&id, &(_, at))| (id, at))
    }

    pub fn gap_blocks(&self) -> u64 {
        self.gap_blocks
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    fn release_run(&mut self, out: &mut Vec<Block>) {
        while let Some((block, _)) = self.held.remove(&self.next_expected) {
            out.push(block);
            self.next_expected += 1;
        }
    }

    pub fn ingest(&mut self, block: Block, now: u64) -> Vec<Block> {
        let id = block.block_id;
        if id < self.next_expected || self.held.contains_key(&id) {
            self.duplicates += 1;
            return Vec::new();
        }
        if id == self.next_expected {
            let mut out = vec![block];
            self.next_expected += 1;
            self.release_run(&mut out);
            out
        } else {
            self.held.insert(id, (block, now));
            Vec::new()
        }
    }

    /// Releases held blocks once the oldest has waited more than the hold
    /// limit, skipping the missing ids in front of it.
    pub fn tick(&mut self, now: u64) -> MuxRelease {
        let mut release = MuxRelease::default();
        while let Some(oldest) = self.held.values().map(|&(_, at)| at).min() {
            if now.saturating_sub(oldest) <= self.hold_limit {
                break;
            }
            let &lowest = self.held.keys().next().expect("held is non-empty");
            if lowest > self.next_expected {
                release.gaps.push(self.next_expected..lowest);
                self.gap_blocks += lowest - self.next_expected;
                self.next_expected = lowest;
            }
            self.release_run(&mut release.blocks);
        }
        release
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netfn::BLOCK_BITS;

    fn blk(id: u64) -> Block {
        Block::new(0, id, BLOCK_BITS, 0)
    }

    fn ids(v: &[Block]) -> Vec<u64> {
        v.iter().map(|b| b.block_id).collect()
    }

    #[test]
    fn in_order_block_released_immediately() {
        let mut m = MuxState::new(100);
        assert_eq!(ids(&m.ingest(blk(1), 0)), [1]);
        assert_eq!(m.next_expected(), 2);
    }

    #[test]
    fn contiguous_run_released_when_hole_fills() {
        let mut m = MuxState::new(100);
        assert!(m.ingest(blk(3), 0).is_empty());
        assert!(m.ingest(blk(2), 0).is_empty());
        assert_eq!(ids(&m.ingest(blk(1), 0)), [1, 2, 3]);
        assert_eq!(m.next_expected(), 4);
    }

    #[test]
    fn duplicates_discarded() {
        let mut m = MuxState::new(100);
        m.ingest(blk(1), 0);
        assert!(m.ingest(blk(1), 1).is_empty());
        m.ingest(blk(5), 1);
        assert!(m.ingest(blk(5), 2).is_empty());
        assert_eq!(m.duplicates(), 2);
    }

    #[test]
    fn timeout_skips_gap() {
        let mut m = MuxState::new(100);
        m.ingest(blk(2), 0);
        assert!(m.tick(100).blocks.is_empty());
        let r = m.tick(101);
        assert_eq!(ids(&r.blocks), [2]);
        assert_eq!(r.gaps, vec![1..2]);
        assert_eq!(m.next_expected(), 3);
    }

    #[test]
    fn timeout_releases_following_run() {
        let mut m = MuxState::new(100);
        m.ingest(blk(2), 0);
        m.ingest(blk(3), 0);
        let r = m.tick(101);
        assert_eq!(ids(&r.blocks), [2, 3]);
        assert_eq!(m.next_expected(), 4);
    }

    #[test]
    fn empty_tick_releases_nothing() {
        let mut m = MuxState::new(5);
        assert_eq!(m.tick(1000), MuxRelease::default());
    }

    #[test]
    fn younger_lower_ids_released_before_older_block() {
        let mut m = MuxState::new(10);
        m.ingest(blk(6), 0);
        m.ingest(blk(3), 5);
        let r = m.tick(11);
        assert_eq!(ids(&r.blocks), [3, 6]);
        assert_eq!(r.gaps, vec![1..3, 4..6]);
        assert_eq!(m.held_len(), 0);
    }
}
