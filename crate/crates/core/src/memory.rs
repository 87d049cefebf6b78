/// Bytes held by live chunk buffers, with a high-water mark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoryAccount {
    current: u64,
    peak: u64,
}

impl MemoryAccount {
    pub fn alloc(&mut self, bytes: usize) {
        self.current += bytes as u64;
        self.peak = self.peak.max(self.current);
    }

    pub fn free(&mut self, bytes: usize) {
        debug_assert!(self.current >= bytes as u64, "freeing more than allocated");
        self.current = self.current.saturating_sub(bytes as u64);
    }

    pub fn current_bytes(&self) -> u64 {
        self.current
    }

    pub fn peak_bytes(&self) -> u64 {
        self.peak
    }
}
