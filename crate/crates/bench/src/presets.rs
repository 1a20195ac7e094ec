//! Device profiles measured on the evaluation drives, and the named array
//! presets built from them.
//!
//! Model A is the slow drive, model B the fast drive, and model C fronts the
//! array as the cache device. Peaks are profiled at 4 KiB and 128 KiB only;
//! other block sizes are rejected rather than interpolated, because bandwidth
//! does not scale uniformly with granularity across models.

use hacache_core::model::DeviceProfile;

pub const PRESET_NAMES: [&str; 5] = ["4A", "3A-1B", "2A-2B", "1A-3B", "4B"];

pub const BLOCK_4K: u64 = 4096;
pub const BLOCK_128K: u64 = 131072;

pub fn ssd_a() -> DeviceProfile {
    DeviceProfile::new("A", [(BLOCK_4K, 1800.0), (BLOCK_128K, 3500.0)]).unwrap()
}

pub fn ssd_b() -> DeviceProfile {
    DeviceProfile::new("B", [(BLOCK_4K, 6350.0), (BLOCK_128K, 7100.0)]).unwrap()
}

pub fn ssd_c() -> DeviceProfile {
    DeviceProfile::new("C", [(BLOCK_4K, 7000.0), (BLOCK_128K, 7100.0)]).unwrap()
}

/// Backend drives for a named preset, slow drives first.
pub fn preset_backends(name: &str) -> Option<Vec<DeviceProfile>> {
    let (slow, fast) = match name {
        "4A" => (4, 0),
        "3A-1B" => (3, 1),
        "2A-2B" => (2, 2),
        "1A-3B" => (1, 3),
        "4B" => (0, 4),
        _ => return None,
    };
    let mut drives = Vec::with_capacity(4);
    for _ in 0..slow {
        drives.push(ssd_a());
    }
    for _ in 0..fast {
        drives.push(ssd_b());
    }
    Some(drives)
}
