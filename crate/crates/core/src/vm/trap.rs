use std::fmt;

use serde::Serialize;

pub use crate::runtime::TrapCode;

/// Guest source location of the instruction that trapped.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Site {
    pub func: String,
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} in {}", self.line, self.col, self.func)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trap {
    pub code: TrapCode,
    pub site: Site,
    pub detail: String,
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trap {} ({}) at {}", self.code.code(), self.code, self.site)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}
