//! Symbol mapping, eigenwave multiplexing and power allocation.

mod constellation;
mod mem;
mod power;

pub use constellation::{Constellation, ConstellationMap};
pub use mem::{mem_demodulate, mem_modulate, zp_select, MemEstimates, MemFrame};
pub use power::{waterfill, PowerAllocation};
