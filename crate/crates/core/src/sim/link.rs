use std::collections::VecDeque;

use crate::netfn::Block;

/// A FIFO queue in front of a fixed-rate, fixed-delay pipe.
#[derive(Clone, Debug)]
pub struct Link {
    capacity_bits: u64,
    delay_slots: u64,
    queue: VecDeque<Block>,
    credit: u64,
    pipe: VecDeque<(u64, Block)>,
    carried_bits: u64,
    peak_slot_bits: u64,
}

impl Link {
    pub fn new(capacity_bits: u64, delay_slots: u64) -> Self {
        Self {
            capacity_bits,
            delay_slots,
            queue: VecDeque::new(),
            credit: 0,
            pipe: VecDeque::new(),
            carried_bits: 0,
            peak_slot_bits: 0,
        }
    }

    pub fn capacity_bits(&self) -> u64 {
        self.capacity_bits
    }

    pub fn push(&mut self, block: Block) {
        self.queue.push_back(block);
    }

    /// Moves queued blocks onto the pipe, at most `capacity_bits` per slot.
    /// Capacities below one block accumulate over slots.
    pub fn transmit(&mut self, now: u64) {
        let Some(head) = self.queue.front() else {
            self.credit = 0;
            return;
        };
        let cap = self.capacity_bits.max(u64::from(head.size));
        self.credit = (self.credit + self.capacity_bits).min(cap);
        let mut sent = 0;
        while let Some(head) = self.queue.front() {
            let size = u64::from(head.size);
            if size > self.credit {
                break;
            }
            self.credit -= size;
            sent += size;
            let block = self.queue.pop_front().expect("head exists");
            self.pipe.push_back((now + self.delay_slots, block));
        }
        if self.queue.is_empty() {
            self.credit = 0;
        }
        self.carried_bits += sent;
        self.peak_slot_bits = self.peak_slot_bits.max(sent);
    }

    /// Blocks whose propagation completes by `now`, in send order.
    pub fn arrivals(&mut self, now: u64) -> impl Iterator<Item = Block> + '_ {
        let n = self.pipe.iter().take_while(|(due, _)| *due <= now).count();
        self.pipe.drain(..n).map(|(_, b)| b)
    }

    pub fn carried_bits(&self) -> u64 {
        self.carried_bits
    }

    /// Largest number of bits sent in any one slot.
    pub fn peak_slot_bits(&self) -> u64 {
        self.peak_slot_bits
    }

    /// Blocks queued or propagating.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.queue.iter().chain(self.pipe.iter().map(|(_, b)| b))
    }
}
