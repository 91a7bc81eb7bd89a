use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::memory::{checkpoint_words, pc_slot, region_slot, MEM_BYTES, NVFF_BASE, STACK_TOP};
use crate::memory::CheckpointKind;
use crate::recovery::lookup_recovery;

use super::cache::Cache;
use super::exec::{Executable, Op};
use super::{Design, MachineConfig, MachineError};

/// Region register value before the first boundary retires.
const NO_REGION: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Retired(u64),
    /// A cycle spent waiting for persists.
    Stalled,
    Halted,
    /// The next instruction would not complete before the outage deadline.
    OutagePending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Recovery,
    Off,
    Halted,
}

#[derive(Debug, Clone)]
struct Persist {
    line_addr: u64,
    data: Vec<u8>,
    completes_at: u64,
}

/// Boundary stall attributed to one store: how long after the region end its
/// persist completed, capped at the persist latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StoreStall {
    pub region_start: u64,
    pub pc: u64,
    pub stall: u64,
}

/// A store retired in normal execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StoreRecord {
    pub pc: u64,
    pub address: u64,
    pub value: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    pub instructions: u64,
    pub active_cycles: u64,
    pub hits: u64,
    pub misses: u64,
    pub cache_accesses: u64,
    pub nvm_reads: u64,
    pub nvm_writes: u64,
    pub boundary_stall_cycles: u64,
    pub store_stalls: Vec<StoreStall>,
    pub max_pending: usize,
    pub outages: u64,
    pub recoveries: u64,
    pub replayed_stores: u64,
    pub uncheckpointed: u64,
    pub persistence_violations: u64,
    pub replay_mismatches: u64,
    pub checkpoint_cycles: u64,
    pub restore_cycles: u64,
    pub recovery_cycles: u64,
}

/// Complete simulator state. Cloning forks an independent simulation.
#[derive(Debug, Clone)]
pub struct Machine {
    exe: Arc<Executable>,
    cfg: Arc<MachineConfig>,
    design: Design,
    read_lat: u64,
    persist_lat: u64,
    regs: Vec<u64>,
    pc: u64,
    region: u64,
    cycle: u64,
    mode: Mode,
    queue: VecDeque<Persist>,
    cache: Option<Cache>,
    nvm: Vec<u8>,
    stats: Stats,
    deadline: Option<u64>,
    /// Stores retired in the current region, as `(address, value)`.
    region_log: Vec<(u64, u64)>,
    /// Persists started by the current region's stores: `(store pc, completes_at)`.
    region_persists: Vec<(u64, u64)>,
    boundary_arrival: Option<u64>,
    checkpoint_valid: bool,
    saved_log: Vec<(u64, u64)>,
    replay_index: usize,
    store_trace: Option<Vec<StoreRecord>>,
}

impl Machine {
    pub fn new(exe: Arc<Executable>, cfg: Arc<MachineConfig>, design: Design) -> Result<Self, MachineError> {
        if design == Design::ReplayCache && exe.metadata.is_none() {
            return Err(MachineError::MissingMetadata);
        }
        if exe.k != cfg.k {
            return Err(MachineError::Load(format!("program built for K={}, machine has K={}", exe.k, cfg.k)));
        }
        cfg.cache.check().map_err(MachineError::Load)?;
        let mut nvm = vec![0u8; MEM_BYTES as usize];
        for (&addr, &v) in &exe.data {
            if addr % 8 != 0 || addr + 8 > STACK_TOP {
                return Err(MachineError::InvalidMemoryAccess(addr));
            }
            nvm[addr as usize..addr as usize + 8].copy_from_slice(&v.to_le_bytes());
        }
        let cache = design.has_cache().then(|| Cache::new(cfg.cache));
        let mut m = Machine {
            read_lat: cfg.read_cycles(),
            persist_lat: cfg.write_persist_cycles(),
            regs: vec![0; cfg.k as usize],
            pc: exe.entry_pc,
            region: NO_REGION,
            cycle: 0,
            mode: Mode::Normal,
            queue: VecDeque::new(),
            cache,
            nvm,
            stats: Stats::default(),
            deadline: None,
            region_log: Vec::new(),
            region_persists: Vec::new(),
            boundary_arrival: None,
            checkpoint_valid: false,
            saved_log: Vec::new(),
            replay_index: 0,
            store_trace: None,
            exe,
            cfg,
            design,
        };
        m.cold_boot();
        Ok(m)
    }

    fn cold_boot(&mut self) {
        self.regs.iter_mut().for_each(|r| *r = 0);
        let k = self.cfg.k as usize;
        self.regs[k - 3] = STACK_TOP;
        self.pc = self.exe.entry_pc;
        self.region = NO_REGION;
        self.region_log.clear();
        self.region_persists.clear();
        self.boundary_arrival = None;
        self.mode = Mode::Normal;
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn executable(&self) -> &Executable {
        &self.exe
    }

    pub fn regs(&self) -> &[u64] {
        &self.regs
    }

    pub fn pc(&self) -> u64 {
        self.pc
    }

    pub fn region_register(&self) -> Option<u64> {
        (self.region != NO_REGION).then_some(self.region)
    }

    /// Wall-clock cycle, including time spent powered off.
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pending_persists(&self) -> usize {
        self.queue.len()
    }

    pub fn nvm(&self) -> &[u8] {
        &self.nvm
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// Starts recording every retired store.
    pub fn record_stores(&mut self) {
        self.store_trace.get_or_insert_with(Vec::new);
    }

    pub fn store_trace(&self) -> &[StoreRecord] {
        self.store_trace.as_deref().unwrap_or(&[])
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    pub fn nvm_word(&self, addr: u64) -> u64 {
        let a = addr as usize;
        u64::from_le_bytes(self.nvm[a..a + 8].try_into().unwrap())
    }

    fn set_nvm_word(&mut self, addr: u64, v: u64) {
        let a = addr as usize;
        self.nvm[a..a + 8].copy_from_slice(&v.to_le_bytes());
    }

    /// Outages are taken before any instruction that would finish after
    /// this wall cycle. Ignored during recovery.
    pub fn set_deadline(&mut self, deadline: Option<u64>) {
        self.deadline = deadline;
    }

    fn drain(&mut self, now: u64) {
        while self.queue.front().is_some_and(|p| p.completes_at <= now) {
            let p = self.queue.pop_front().unwrap();
            let a = p.line_addr as usize;
            self.nvm[a..a + p.data.len()].copy_from_slice(&p.data);
        }
    }

    fn enqueue(&mut self, line_addr: u64, data: Vec<u8>) -> u64 {
        let completes_at = self.cycle + self.persist_lat;
        self.queue.push_back(Persist { line_addr, data, completes_at });
        self.stats.nvm_writes += 1;
        self.stats.max_pending = self.stats.max_pending.max(self.queue.len());
        completes_at
    }

    fn line_bytes(&self) -> usize {
        self.cfg.cache.line_bytes
    }

    /// Line contents as seen by the memory system: NVM overlaid with any
    /// persists still in flight.
    fn fetch_line(&mut self, line: u64) -> Vec<u8> {
        let lb = self.line_bytes();
        let mut data = self.nvm[line as usize..line as usize + lb].to_vec();
        for p in self.queue.iter().filter(|p| p.line_addr == line) {
            data.copy_from_slice(&p.data);
        }
        self.stats.nvm_reads += 1;
        data
    }

    fn write_back_evicted(&mut self, line: u64, data: Vec<u8>) {
        match self.design {
            Design::ReplayCache | Design::WriteBackUnsafe => {
                let covered = self.queue.iter().rev().find(|p| p.line_addr == line).is_some_and(|p| p.data == data);
                if !covered {
                    self.enqueue(line, data);
                }
            }
            _ => {
                let a = line as usize;
                self.nvm[a..a + data.len()].copy_from_slice(&data);
                self.stats.nvm_writes += 1;
            }
        }
    }

    /// Looks `addr` up, filling on a miss when `allocate` is set.
    fn cache_slot(&mut self, addr: u64, allocate: bool) -> Option<usize> {
        self.stats.cache_accesses += 1;
        let c = self.cache.as_mut().unwrap();
        let line = c.line_addr(addr);
        if let Some(s) = c.find(line) {
            c.touch(s);
            self.stats.hits += 1;
            return Some(s);
        }
        self.stats.misses += 1;
        if !allocate {
            return None;
        }
        let data = self.fetch_line(line);
        let (s, ev) = self.cache.as_mut().unwrap().install(line, &data);
        if let Some(ev) = ev.filter(|e| e.dirty) {
            self.write_back_evicted(ev.line_addr, ev.data);
        }
        Some(s)
    }

    fn hit(&self, addr: u64) -> bool {
        self.cache.as_ref().is_some_and(|c| c.find(c.line_addr(addr)).is_some())
    }

    fn in_nvff(&self, addr: u64) -> bool {
        self.cfg.checkpoint == CheckpointKind::Nvp
            && (NVFF_BASE..NVFF_BASE + 8 * checkpoint_words(self.cfg.k)).contains(&addr)
    }

    fn load_latency(&self, addr: u64) -> u64 {
        if self.mode == Mode::Recovery {
            return if self.in_nvff(addr) { 1 } else { self.read_lat };
        }
        let hit = self.hit(addr);
        match self.design {
            Design::NoCache => self.read_lat,
            Design::NvCache => self.cfg.nvcache_read_cycles + if hit { 0 } else { self.read_lat },
            _ => 1 + if hit { 0 } else { self.read_lat },
        }
    }

    fn store_latency(&self, addr: u64) -> u64 {
        if self.mode == Mode::Recovery {
            return self.persist_lat;
        }
        let hit = self.hit(addr);
        match self.design {
            Design::NoCache | Design::WriteThrough => self.persist_lat,
            Design::NvCache => self.cfg.nvcache_write_cycles + if hit { 0 } else { self.read_lat },
            _ => 1 + if hit { 0 } else { self.read_lat },
        }
    }

    fn address(&self, base: u8, off: i64) -> Result<u64, MachineError> {
        let addr = self.regs[base as usize].wrapping_add(off as u64);
        if !addr.is_multiple_of(8) {
            return Err(MachineError::UnalignedAccess(addr));
        }
        let limit = if self.mode == Mode::Recovery { MEM_BYTES } else { STACK_TOP };
        if addr.checked_add(8).is_none_or(|e| e > limit) {
            return Err(MachineError::InvalidMemoryAccess(addr));
        }
        Ok(addr)
    }

    fn persists_in_use(&self) -> bool {
        self.design == Design::ReplayCache
    }

    /// Executes one instruction, or one stall cycle.
    pub fn step(&mut self) -> Result<Event, MachineError> {
        match self.mode {
            Mode::Off => return Err(MachineError::PoweredOff),
            Mode::Halted => return Ok(Event::Halted),
            _ => {}
        }
        if self.stats.active_cycles >= self.cfg.max_cycles {
            return Err(MachineError::NonTerminating(self.cfg.max_cycles));
        }
        self.drain(self.cycle);
        let deadline = if self.mode == Mode::Normal { self.deadline } else { None };
        if deadline.is_some_and(|d| self.cycle >= d) {
            return Ok(Event::OutagePending);
        }
        let pc = self.pc;
        let op = self.exe.op_at(pc).ok_or(MachineError::BadPc(pc))?;
        let recovering = self.mode == Mode::Recovery;

        // Stalls first: they take a cycle but retire nothing.
        let waits = match op {
            Op::Boundary => self.persists_in_use() && !recovering,
            Op::Halt => !recovering,
            _ => false,
        };
        if waits && !self.queue.is_empty() {
            if deadline.is_some_and(|d| self.cycle + 1 > d) {
                return Ok(Event::OutagePending);
            }
            if op == Op::Boundary || self.persists_in_use() {
                self.boundary_arrival.get_or_insert(self.cycle);
            }
            if op == Op::Boundary {
                self.stats.boundary_stall_cycles += 1;
            }
            self.advance(1);
            return Ok(Event::Stalled);
        }

        let lat = match op {
            Op::Ld { base, off, .. } => self.load_latency(self.address(base, off)?),
            Op::St { base, off, .. } => self.store_latency(self.address(base, off)?),
            Op::Clwb { .. } | Op::Boundary => u64::from(self.persists_in_use()),
            Op::Halt => 0,
            _ => 1,
        };
        if deadline.is_some_and(|d| self.cycle + lat > d) {
            return Ok(Event::OutagePending);
        }

        let mut next = self.exe.next_pc(pc);
        match op {
            Op::Li { rd, imm } => self.regs[rd as usize] = imm,
            Op::Mov { rd, rs } => self.regs[rd as usize] = self.regs[rs as usize],
            Op::Alu { op, rd, ra, rb } => {
                self.regs[rd as usize] = op.apply(self.regs[ra as usize], self.regs[rb as usize])
            }
            Op::Ld { rd, base, off } => {
                let addr = self.address(base, off)?;
                self.regs[rd as usize] = self.load(addr);
            }
            Op::St { rv, base, off } => {
                let addr = self.address(base, off)?;
                let v = self.regs[rv as usize];
                if !recovering {
                    if let Some(t) = &mut self.store_trace {
                        t.push(StoreRecord { pc, address: addr, value: v });
                    }
                }
                self.store(addr, v);
            }
            Op::Clwb { base, off } => {
                if self.persists_in_use() && !recovering {
                    let addr = self.address(base, off)?;
                    self.clwb(addr, pc);
                }
            }
            Op::Br { cond, ra, rb, target, fall } => {
                next = if cond.holds(self.regs[ra as usize], self.regs[rb as usize]) { target } else { fall };
            }
            Op::Jmp { target } => next = target,
            Op::Call { target, ret_to } => {
                let lr = self.cfg.k as usize - 2;
                self.regs[lr] = ret_to;
                next = target;
            }
            Op::Ret => next = self.regs[self.cfg.k as usize - 2],
            Op::Boundary => {
                if self.persists_in_use() && !recovering {
                    self.end_region();
                    self.region = pc;
                    let k = self.cfg.k as usize;
                    self.regs[k - 1] = pc;
                }
            }
            Op::Halt => {
                self.stats.instructions += 1;
                if recovering {
                    self.finish_recovery()?;
                    return Ok(Event::Retired(pc));
                }
                if self.persists_in_use() {
                    self.end_region();
                }
                self.flush_cache();
                self.mode = Mode::Halted;
                return Ok(Event::Halted);
            }
        }
        self.stats.instructions += 1;
        self.advance(lat);
        self.pc = next;
        Ok(Event::Retired(pc))
    }

    fn advance(&mut self, cycles: u64) {
        self.cycle += cycles;
        self.stats.active_cycles += cycles;
        if self.mode == Mode::Recovery {
            self.stats.recovery_cycles += cycles;
        }
    }

    fn load(&mut self, addr: u64) -> u64 {
        if self.mode == Mode::Recovery || self.design == Design::NoCache {
            if !self.in_nvff(addr) {
                self.stats.nvm_reads += 1;
            }
            return self.nvm_word(addr);
        }
        let s = self.cache_slot(addr, true).unwrap();
        self.cache.as_ref().unwrap().read_word(s, addr)
    }

    fn store(&mut self, addr: u64, v: u64) {
        if self.mode == Mode::Recovery {
            self.stats.replayed_stores += 1;
            if self.saved_log.get(self.replay_index) != Some(&(addr, v)) {
                self.stats.replay_mismatches += 1;
            }
            self.replay_index += 1;
            self.set_nvm_word(addr, v);
            self.stats.nvm_writes += 1;
            return;
        }
        self.region_log.push((addr, v));
        match self.design {
            Design::NoCache => {
                self.set_nvm_word(addr, v);
                self.stats.nvm_writes += 1;
            }
            Design::WriteThrough => {
                if let Some(s) = self.cache_slot(addr, false) {
                    self.cache.as_mut().unwrap().write_word(s, addr, v, false);
                }
                self.set_nvm_word(addr, v);
                self.stats.nvm_writes += 1;
            }
            _ => {
                let s = self.cache_slot(addr, true).unwrap();
                self.cache.as_mut().unwrap().write_word(s, addr, v, true);
            }
        }
    }

    fn clwb(&mut self, addr: u64, pc: u64) {
        let c = self.cache.as_mut().unwrap();
        let line = c.line_addr(addr);
        let Some(s) = c.find(line) else { return };
        let data = c.line_data(s).to_vec();
        c.clean(s);
        let done = self.enqueue(line, data);
        self.region_persists.push((pc.saturating_sub(4), done));
    }

    /// Region bookkeeping at a boundary or halt: per-store stalls and the
    /// region-level persistence check.
    fn end_region(&mut self) {
        let arrival = self.boundary_arrival.take().unwrap_or(self.cycle);
        let region_start = self.region;
        for &(pc, done) in &self.region_persists {
            let stall = done.saturating_sub(arrival).min(self.persist_lat);
            self.stats.store_stalls.push(StoreStall { region_start, pc, stall });
        }
        self.region_persists.clear();
        if self.cfg.check_persistence {
            let mut last: BTreeMap<u64, u64> = BTreeMap::new();
            for &(a, v) in &self.region_log {
                last.insert(a, v);
            }
            let bad = last.iter().filter(|&(&a, &v)| self.nvm_word(a) != v).count();
            self.stats.persistence_violations += bad as u64;
            debug_assert!(
                bad == 0 || self.design != Design::ReplayCache,
                "boundary at {:#x} retired with {bad} of the region's stores not in NVM",
                self.pc
            );
        }
        self.region_log.clear();
    }

    fn flush_cache(&mut self) {
        if let Some(c) = &mut self.cache {
            let lines: Vec<(u64, Vec<u8>)> = c.dirty_lines().map(|(a, d)| (a, d.to_vec())).collect();
            for (a, d) in lines {
                self.nvm[a as usize..a as usize + d.len()].copy_from_slice(&d);
            }
        }
    }

    fn ckpt_addr(&self, slot: u64) -> u64 {
        self.cfg.checkpoint.base() + 8 * slot
    }

    /// Cycles the next checkpoint would take. NVSRAM also backs up every
    /// dirty line.
    pub fn checkpoint_cost(&self) -> u64 {
        let mut cost = self.cfg.checkpoint_cycles();
        if self.design == Design::NvSram {
            let dirty = self.cache.as_ref().map_or(0, |c| c.dirty_lines().count()) as u64;
            cost += dirty * self.persist_lat.div_ceil(3);
        }
        cost
    }

    /// Records an outage whose checkpoint could not complete.
    pub fn skip_checkpoint(&mut self) {
        self.checkpoint_valid = false;
        self.stats.uncheckpointed += 1;
    }

    /// Saves registers, PC and region register. Returns the cycles spent.
    pub fn checkpoint(&mut self) -> u64 {
        let k = self.cfg.k;
        for i in 0..k as u64 {
            self.set_nvm_word(self.ckpt_addr(i), self.regs[i as usize]);
        }
        self.set_nvm_word(self.ckpt_addr(pc_slot(k)), self.pc);
        self.set_nvm_word(self.ckpt_addr(region_slot(k)), self.region);
        if self.cfg.checkpoint == CheckpointKind::QuickRecall {
            self.stats.nvm_writes += checkpoint_words(k);
        }
        let cost = self.checkpoint_cost();
        self.checkpoint_valid = true;
        self.saved_log = self.region_log.clone();
        self.stats.checkpoint_cycles += cost;
        self.advance(cost);
        cost
    }

    /// Reloads registers, PC and region register from the checkpoint.
    pub fn restore(&mut self) {
        let k = self.cfg.k;
        for i in 0..k as u64 {
            self.regs[i as usize] = self.nvm_word(self.ckpt_addr(i));
        }
        self.pc = self.nvm_word(self.ckpt_addr(pc_slot(k)));
        self.region = self.nvm_word(self.ckpt_addr(region_slot(k)));
    }

    /// Cuts power at wall cycle `at`. Persists completing later are lost, as
    /// is every volatile cache line.
    pub fn power_off(&mut self, at: u64) {
        self.drain(at);
        self.queue.clear();
        self.region_persists.clear();
        self.boundary_arrival = None;
        if !self.design.retains_cache() {
            if let Some(c) = &mut self.cache {
                c.invalidate_all();
            }
        }
        self.cycle = self.cycle.max(at);
        self.mode = Mode::Off;
        self.stats.outages += 1;
    }

    /// Powers up at wall cycle `at`: restores the checkpoint (or cold-boots
    /// without one) and, for the replay design, runs recovery.
    pub fn power_on(&mut self, at: u64) -> Result<(), MachineError> {
        self.cycle = self.cycle.max(at);
        if !self.checkpoint_valid {
            self.cold_boot();
            return Ok(());
        }
        self.checkpoint_valid = false;
        let mut cost = self.cfg.restore_cycles();
        if self.design == Design::NvSram {
            let valid = self.cache.as_ref().map_or(0, |c| c.valid_lines()) as u64;
            cost += valid * self.read_lat.div_ceil(2);
        }
        if self.cfg.checkpoint == CheckpointKind::QuickRecall {
            self.stats.nvm_reads += checkpoint_words(self.cfg.k);
        }
        self.mode = Mode::Normal;
        self.stats.restore_cycles += cost;
        self.advance(cost);
        self.restore();
        self.region_log = std::mem::take(&mut self.saved_log);
        if self.design == Design::ReplayCache && self.region != NO_REGION {
            self.enter_recovery()?;
        }
        Ok(())
    }

    /// Starts the recovery block for the checkpointed region, if any store
    /// needs replaying.
    fn enter_recovery(&mut self) -> Result<(), MachineError> {
        let meta = self.exe.metadata.as_ref().ok_or(MachineError::MissingMetadata)?;
        let look = lookup_recovery(meta, self.region, self.pc).map_err(|e| MachineError::Recovery(e.to_string()))?;
        if look.replay_count == 0 {
            return Ok(());
        }
        self.stats.recoveries += 1;
        self.saved_log = self.region_log.clone();
        self.replay_index = 0;
        let k = self.cfg.k as usize;
        self.regs[k - 1] = look.replay_count as u64;
        self.pc = look.block_address;
        self.mode = Mode::Recovery;
        Ok(())
    }

    fn finish_recovery(&mut self) -> Result<(), MachineError> {
        if self.replay_index != self.saved_log.len() {
            self.stats.replay_mismatches += 1;
        }
        self.saved_log.clear();
        self.restore();
        self.mode = Mode::Normal;
        Ok(())
    }

    /// Steps until halt or a pending outage.
    pub fn run(&mut self) -> Result<Event, MachineError> {
        loop {
            if let e @ (Event::Halted | Event::OutagePending) = self.step()? { return Ok(e) }
        }
    }
}
