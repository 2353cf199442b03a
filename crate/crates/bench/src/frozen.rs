//! Constants fitted once on the reference configuration of each experiment
//! and frozen. Runs at the reference configuration must stay within
//! `HEADROOM` times these values. Measured with seed `0x5eed`.

pub const HEADROOM: f64 = 1.25;

pub const LAYOUT_C: f64 = 4.875;
pub const FOOTPRINT_C: f64 = 2.156;
pub const PSCAN_C: f64 = 0.808;
pub const WRITE_C: f64 = 4.864;
pub const WRITE_C0: f64 = 0.0;
pub const SPACE_C1: f64 = 1.762;
pub const SPACE_C2: f64 = 7.856;
pub const ROLL_C: f64 = 3.088;
