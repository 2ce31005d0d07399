//! Cross-batch memory: a fixed-capacity FIFO ring of detached descriptors.

use crate::embedding::Descriptor;

/// Identity label shared by all views of one source item.
pub type Label = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    capacity: usize,
    slots: Vec<(Vec<f64>, Label)>,
    cursor: usize,
}

impl MemoryBank {
    pub fn new(capacity: usize) -> Self {
        MemoryBank {
            capacity,
            slots: Vec::with_capacity(capacity),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Appends one snapshot, evicting the oldest entry when full.
    pub fn push(&mut self, descriptor: &Descriptor, label: Label) {
        if self.capacity == 0 {
            return;
        }
        let entry = (descriptor.as_slice().to_vec(), label);
        if self.slots.len() < self.capacity {
            self.slots.push(entry);
        } else {
            self.slots[self.cursor] = entry;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Appends a batch in order.
    pub fn push_batch<'a>(&mut self, batch: impl IntoIterator<Item = (&'a Descriptor, Label)>) {
        for (d, l) in batch {
            self.push(d, l);
        }
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        let start = if self.slots.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        let n = self.slots.len();
        (0..n).map(move |i| {
            let (v, l) = &self.slots[(start + i) % n.max(1)];
            (v.as_slice(), *l)
        })
    }

    pub fn labels(&self) -> Vec<Label> {
        self.iter().map(|(_, l)| l).collect()
    }

    pub fn clear(&mut self) {
        self.slots.clear();
        self.cursor = 0;
    }
}
