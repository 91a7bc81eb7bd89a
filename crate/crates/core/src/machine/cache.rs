use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub size_bytes: usize,
    pub ways: usize,
    pub line_bytes: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { size_bytes: 8192, ways: 2, line_bytes: 32 }
    }
}

impl CacheConfig {
    pub fn sets(&self) -> usize {
        self.size_bytes / (self.ways * self.line_bytes)
    }

    pub fn check(&self) -> Result<(), String> {
        let ok = self.ways > 0
            && self.line_bytes >= 8
            && self.line_bytes.is_power_of_two()
            && self.size_bytes.is_multiple_of(self.ways * self.line_bytes)
            && self.sets() > 0
            && self.ways <= 255;
        if ok {
            Ok(())
        } else {
            Err(format!("bad cache geometry {self:?}"))
        }
    }
}

/// A line pushed out of the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evicted {
    pub line_addr: u64,
    pub data: Vec<u8>,
    pub dirty: bool,
}

/// Set-associative cache with true LRU replacement. Rank 0 is the most
/// recently used way of a set.
#[derive(Debug, Clone)]
pub struct Cache {
    cfg: CacheConfig,
    sets: usize,
    tags: Vec<u64>,
    valid: Vec<bool>,
    dirty: Vec<bool>,
    lru: Vec<u8>,
    data: Vec<u8>,
}

impl Cache {
    pub fn new(cfg: CacheConfig) -> Self {
        let sets = cfg.sets();
        let n = sets * cfg.ways;
        Cache {
            cfg,
            sets,
            tags: vec![0; n],
            valid: vec![false; n],
            dirty: vec![false; n],
            lru: (0..n).map(|i| (i % cfg.ways) as u8).collect(),
            data: vec![0; n * cfg.line_bytes],
        }
    }

    pub fn config(&self) -> CacheConfig {
        self.cfg
    }

    pub fn line_addr(&self, addr: u64) -> u64 {
        addr & !(self.cfg.line_bytes as u64 - 1)
    }

    fn set_of(&self, line: u64) -> usize {
        ((line / self.cfg.line_bytes as u64) % self.sets as u64) as usize
    }

    fn ways_of(&self, set: usize) -> std::ops::Range<usize> {
        set * self.cfg.ways..(set + 1) * self.cfg.ways
    }

    /// Slot holding `line`, if present.
    pub fn find(&self, line: u64) -> Option<usize> {
        self.ways_of(self.set_of(line)).find(|&s| self.valid[s] && self.tags[s] == line)
    }

    pub fn touch(&mut self, slot: usize) {
        let set = slot / self.cfg.ways;
        let r = self.lru[slot];
        for s in self.ways_of(set) {
            if self.lru[s] < r {
                self.lru[s] += 1;
            }
        }
        self.lru[slot] = 0;
    }

    /// Installs `line` with `data`, evicting the LRU way (invalid ways first).
    pub fn install(&mut self, line: u64, data: &[u8]) -> (usize, Option<Evicted>) {
        let set = self.set_of(line);
        let slot = self
            .ways_of(set)
            .find(|&s| !self.valid[s])
            .unwrap_or_else(|| self.ways_of(set).max_by_key(|&s| self.lru[s]).unwrap());
        let evicted = self.valid[slot].then(|| Evicted {
            line_addr: self.tags[slot],
            data: self.line_data(slot).to_vec(),
            dirty: self.dirty[slot],
        });
        self.tags[slot] = line;
        self.valid[slot] = true;
        self.dirty[slot] = false;
        let lb = self.cfg.line_bytes;
        self.data[slot * lb..(slot + 1) * lb].copy_from_slice(data);
        self.touch(slot);
        (slot, evicted)
    }

    pub fn line_data(&self, slot: usize) -> &[u8] {
        let lb = self.cfg.line_bytes;
        &self.data[slot * lb..(slot + 1) * lb]
    }

    pub fn read_word(&self, slot: usize, addr: u64) -> u64 {
        let off = (addr as usize) & (self.cfg.line_bytes - 1);
        let d = &self.line_data(slot)[off..off + 8];
        u64::from_le_bytes(d.try_into().unwrap())
    }

    pub fn write_word(&mut self, slot: usize, addr: u64, value: u64, mark_dirty: bool) {
        let lb = self.cfg.line_bytes;
        let off = slot * lb + ((addr as usize) & (lb - 1));
        self.data[off..off + 8].copy_from_slice(&value.to_le_bytes());
        if mark_dirty {
            self.dirty[slot] = true;
        }
    }

    pub fn is_dirty(&self, slot: usize) -> bool {
        self.dirty[slot]
    }

    pub fn clean(&mut self, slot: usize) {
        self.dirty[slot] = false;
    }

    pub fn invalidate_all(&mut self) {
        self.valid.iter_mut().for_each(|v| *v = false);
        self.dirty.iter_mut().for_each(|d| *d = false);
    }

    pub fn valid_lines(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Dirty lines as `(line address, data)`.
    pub fn dirty_lines(&self) -> impl Iterator<Item = (u64, &[u8])> + '_ {
        (0..self.tags.len()).filter(|&s| self.valid[s] && self.dirty[s]).map(|s| (self.tags[s], self.line_data(s)))
    }

    /// LRU ranks of one set, for invariant checks.
    pub fn set_ranks(&self, set: usize) -> Vec<u8> {
        self.ways_of(set).map(|s| self.lru[s]).collect()
    }

    pub fn sets(&self) -> usize {
        self.sets
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = Cache::new(CacheConfig { size_bytes: 128, ways: 2, line_bytes: 32 });
        assert_eq!(c.sets(), 2);
        let z = [0u8; 32];
        // Lines 0, 64, 128 all map to set 0.
        c.install(0, &z);
        c.install(64, &z);
        let s0 = c.find(0).unwrap();
        c.touch(s0);
        let (_, ev) = c.install(128, &z);
        assert_eq!(ev.unwrap().line_addr, 64);
        assert!(c.find(0).is_some() && c.find(64).is_none());
        let mut r = c.set_ranks(0);
        r.sort();
        assert_eq!(r, [0, 1]);
    }

    #[test]
    fn words_and_dirty_bits() {
        let mut c = Cache::new(CacheConfig::default());
        let (s, _) = c.install(96, &[0u8; 32]);
        c.write_word(s, 104, 77, true);
        assert_eq!(c.read_word(s, 104), 77);
        assert_eq!(c.dirty_lines().count(), 1);
        c.clean(s);
        assert_eq!(c.dirty_lines().count(), 0);
    }
}
