//! The 64-bit metadata word carried by every fat pointer: a key in the high
//! bits and the byte offset from the referent's payload start in the low bits.

use serde::Serialize;
use thiserror::Error;

pub const INVALID_KEY: u64 = 0;
pub const GLOBAL_KEY: u64 = 1;
pub const DEFAULT_KEY_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("key width {0} outside 2..=48")]
    BadKeyBits(u32),
    #[error("key {key:#x} does not fit in {bits} bits")]
    KeyTooWide { key: u64, bits: u32 },
    #[error("offset {offset:#x} exceeds maximum {max:#x}")]
    OffsetOverflow { offset: u64, max: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MetaWord(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetaLayout {
    key_bits: u32,
}

impl Default for MetaLayout {
    fn default() -> Self {
        MetaLayout { key_bits: DEFAULT_KEY_BITS }
    }
}

impl MetaLayout {
    pub fn new(key_bits: u32) -> Result<Self, MetaError> {
        if !(2..=48).contains(&key_bits) {
            return Err(MetaError::BadKeyBits(key_bits));
        }
        Ok(MetaLayout { key_bits })
    }

    pub fn key_bits(self) -> u32 {
        self.key_bits
    }

    pub fn offset_bits(self) -> u32 {
        64 - self.key_bits
    }

    pub fn max_offset(self) -> u64 {
        (1u64 << self.offset_bits()) - 1
    }

    /// Largest representable key; keys wrap back to 2 after it.
    pub fn max_key(self) -> u64 {
        (1u64 << self.key_bits) - 1
    }

    pub fn pack(self, key: u64, offset: u64) -> Result<MetaWord, MetaError> {
        if key > self.max_key() {
            return Err(MetaError::KeyTooWide { key, bits: self.key_bits });
        }
        if offset > self.max_offset() {
            return Err(MetaError::OffsetOverflow { offset, max: self.max_offset() });
        }
        Ok(MetaWord((key << self.offset_bits()) | offset))
    }

    pub fn unpack(self, m: MetaWord) -> (u64, u64) {
        (self.key(m), self.offset(m))
    }

    pub fn key(self, m: MetaWord) -> u64 {
        m.0 >> self.offset_bits()
    }

    pub fn offset(self, m: MetaWord) -> u64 {
        m.0 & self.max_offset()
    }

    /// Shift the offset by `delta` bytes, keeping the key.
    pub fn add_offset(self, m: MetaWord, delta: i64) -> Result<MetaWord, MetaError> {
        let (key, off) = self.unpack(m);
        let new = off as i128 + delta as i128;
        if new < 0 || new > self.max_offset() as i128 {
            return Err(MetaError::OffsetOverflow { offset: new as u64, max: self.max_offset() });
        }
        self.pack(key, new as u64)
    }
}
