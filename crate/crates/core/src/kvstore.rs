//! Open-addressing hash table with linear probing.
//!
//! The table is the memory image the accelerator walks: a dense array of
//! 16-byte entries starting at `base_address`, capacity a power of two.

use std::collections::HashSet;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Bytes per serialized entry: 8 B key, 4 B value, 4 B flags.
pub const ENTRY_BYTES: u64 = 16;
/// Reserved key; never stored.
pub const SENTINEL_KEY: u64 = u64::MAX;
/// Value emitted for a key that is not in the table.
pub const NOT_FOUND: u32 = 0xFFFF_FFFF;
/// Occupancy ceiling enforced by `insert` and `build_table`.
pub const MAX_LOAD_FACTOR: f64 = 0.95;

const FLAG_OCCUPIED: u32 = 1;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table is full: {occupied} of {capacity} slots occupied (limit {limit})")]
    TableFull { occupied: u64, capacity: u64, limit: u64 },
    #[error("load factor {0} outside [0, 0.95]")]
    LoadFactor(f64),
    #[error("capacity {0} is not a non-zero power of two")]
    Capacity(u64),
    #[error("key {0:#x} is reserved")]
    ReservedKey(u64),
    #[error("value {0:#x} is reserved for not-found")]
    ReservedValue(u32),
    #[error("table image has {got} bytes, expected a non-zero multiple of 16")]
    BadImage { got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TableEntry {
    pub key: u64,
    pub value: u32,
    pub flags: u32,
}

impl TableEntry {
    pub fn occupied(key: u64, value: u32) -> Self {
        TableEntry { key, value, flags: FLAG_OCCUPIED }
    }

    pub fn is_occupied(&self) -> bool {
        self.flags & FLAG_OCCUPIED != 0
    }

    pub fn to_bytes(&self) -> [u8; ENTRY_BYTES as usize] {
        let mut out = [0u8; ENTRY_BYTES as usize];
        out[..8].copy_from_slice(&self.key.to_le_bytes());
        out[8..12].copy_from_slice(&self.value.to_le_bytes());
        out[12..].copy_from_slice(&self.flags.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; ENTRY_BYTES as usize]) -> Self {
        TableEntry {
            key: u64::from_le_bytes(b[..8].try_into().unwrap()),
            value: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            flags: u32::from_le_bytes(b[12..].try_into().unwrap()),
        }
    }
}

/// 64-bit finalizer (the splitmix64 output stage). Bijective, so distinct
/// keys never collide before the modulo.
pub fn mix64(key: u64) -> u64 {
    let mut z = key.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Home slot of `key` in a table of `capacity` entries (a power of two).
pub fn hash_key(key: u64, capacity: u64) -> u64 {
    debug_assert!(capacity.is_power_of_two());
    mix64(key) & (capacity - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lookup {
    pub value: Option<u32>,
    pub probes: u32,
}

#[derive(Clone, Debug)]
pub struct HashTable {
    capacity: u64,
    base_address: u64,
    entries: Vec<TableEntry>,
    occupied: u64,
    max_probe_len: u32,
}

impl HashTable {
    pub fn new(capacity: u64, base_address: u64) -> Result<Self, TableError> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(TableError::Capacity(capacity));
        }
        Ok(HashTable {
            capacity,
            base_address,
            entries: vec![TableEntry::default(); capacity as usize],
            occupied: 0,
            max_probe_len: 0,
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn base_address(&self) -> u64 {
        self.base_address
    }

    pub fn occupied(&self) -> u64 {
        self.occupied
    }

    pub fn max_probe_len(&self) -> u32 {
        self.max_probe_len
    }

    pub fn load_factor(&self) -> f64 {
        self.occupied as f64 / self.capacity as f64
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn entry(&self, index: u64) -> &TableEntry {
        &self.entries[(index & (self.capacity - 1)) as usize]
    }

    pub fn home_slot(&self, key: u64) -> u64 {
        hash_key(key, self.capacity)
    }

    /// Byte address of slot `index`.
    pub fn address_of(&self, index: u64) -> u64 {
        self.base_address + ENTRY_BYTES * index
    }

    pub fn size_bytes(&self) -> u64 {
        self.capacity * ENTRY_BYTES
    }

    /// Largest occupancy `insert` accepts.
    pub fn occupancy_limit(&self) -> u64 {
        (self.capacity as f64 * MAX_LOAD_FACTOR).floor() as u64
    }

    /// Probes needed to reach the occupied entry at `slot` from its home.
    pub fn probe_distance(&self, slot: u64) -> u32 {
        let e = self.entry(slot);
        let home = self.home_slot(e.key);
        (((slot + self.capacity - home) & (self.capacity - 1)) + 1) as u32
    }

    /// Occupied `(slot, entry)` pairs in slot order.
    pub fn iter_occupied(&self) -> impl Iterator<Item = (u64, &TableEntry)> + '_ {
        self.entries.iter().enumerate().filter(|(_, e)| e.is_occupied()).map(|(i, e)| (i as u64, e))
    }

    pub fn insert(&mut self, key: u64, value: u32) -> Result<u32, TableError> {
        if key == SENTINEL_KEY {
            return Err(TableError::ReservedKey(key));
        }
        if value == NOT_FOUND {
            return Err(TableError::ReservedValue(value));
        }
        let mask = self.capacity - 1;
        let home = self.home_slot(key);
        let mut probes = 0u32;
        let mut first_free = None;
        // No deletions, so the first empty slot ends the cluster.
        for step in 0..self.capacity {
            let slot = (home + step) & mask;
            let e = &self.entries[slot as usize];
            probes += 1;
            if !e.is_occupied() {
                first_free = Some(slot);
                break;
            }
            if e.key == key {
                self.entries[slot as usize].value = value;
                return Ok(probes);
            }
        }
        let slot = match first_free {
            Some(s) if self.occupied < self.occupancy_limit() => s,
            _ => {
                return Err(TableError::TableFull {
                    occupied: self.occupied,
                    capacity: self.capacity,
                    limit: self.occupancy_limit(),
                })
            }
        };
        self.entries[slot as usize] = TableEntry::occupied(key, value);
        self.occupied += 1;
        self.max_probe_len = self.max_probe_len.max(probes);
        Ok(probes)
    }

    /// Scans from the home slot, stopping at the first match. A miss examines
    /// exactly `max_probe_len` slots.
    pub fn lookup_software(&self, key: u64) -> Lookup {
        let mask = self.capacity - 1;
        let home = self.home_slot(key);
        for step in 0..self.max_probe_len as u64 {
            let e = &self.entries[((home + step) & mask) as usize];
            if e.is_occupied() && e.key == key {
                return Lookup { value: Some(e.value), probes: step as u32 + 1 };
            }
        }
        Lookup { value: None, probes: self.max_probe_len }
    }

    /// Membership test that stops at the first empty slot.
    pub fn contains(&self, key: u64) -> bool {
        let mask = self.capacity - 1;
        let home = self.home_slot(key);
        for step in 0..self.capacity {
            let e = &self.entries[((home + step) & mask) as usize];
            if !e.is_occupied() {
                return false;
            }
            if e.key == key {
                return true;
            }
        }
        false
    }

    pub fn write_image<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            w.write_all(&e.to_bytes())?;
        }
        Ok(())
    }

    /// Flat little-endian image, `capacity * 16` bytes.
    pub fn to_image(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size_bytes() as usize);
        self.write_image(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_image(bytes: &[u8], base_address: u64) -> Result<Self, TableError> {
        if bytes.is_empty() || !bytes.len().is_multiple_of(ENTRY_BYTES as usize) {
            return Err(TableError::BadImage { got: bytes.len() });
        }
        let capacity = (bytes.len() / ENTRY_BYTES as usize) as u64;
        let mut table = HashTable::new(capacity, base_address)?;
        for (i, chunk) in bytes.chunks_exact(ENTRY_BYTES as usize).enumerate() {
            table.entries[i] = TableEntry::from_bytes(chunk.try_into().unwrap());
        }
        table.occupied = table.entries.iter().filter(|e| e.is_occupied()).count() as u64;
        table.max_probe_len = (0..capacity)
            .filter(|&s| table.entries[s as usize].is_occupied())
            .map(|s| table.probe_distance(s))
            .max()
            .unwrap_or(0);
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        let f = std::fs::File::create(path)?;
        self.write_image(io::BufWriter::new(f))?;
        Ok(())
    }

    pub fn load(path: &Path, base_address: u64) -> Result<Self, TableError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_image(&bytes, base_address)
    }
}

/// Fills a fresh table with `floor(load_factor * capacity)` distinct random
/// keys. Values are the insertion ordinal.
pub fn build_table(capacity: u64, load_factor: f64, seed: u64, base_address: u64) -> Result<HashTable, TableError> {
    if !(0.0..=MAX_LOAD_FACTOR).contains(&load_factor) || load_factor.is_nan() {
        return Err(TableError::LoadFactor(load_factor));
    }
    let mut table = HashTable::new(capacity, base_address)?;
    let target = (load_factor * capacity as f64).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(target as usize);
    while table.occupied < target {
        let key: u64 = rng.gen();
        if key == SENTINEL_KEY || !seen.insert(key) {
            continue;
        }
        table.insert(key, table.occupied as u32)?;
    }
    Ok(table)
}
