//! The config parser is the one place the tool consumes untrusted bytes.
//! Any input, however mangled, must come back as `Ok` or a config error;
//! a panic here is a bug.

#![no_main]

use libfuzzer_sys::fuzz_target;
use nv_qoc_cli::config::{parse_config, Command};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = parse_config(text) else { return };
    // Parsed configs feed the block matrix next; that must not panic either.
    for cmd in [Command::Simulate, Command::Optimize, Command::Sense, Command::Limits] {
        let _ = cfg.validate_blocks(cmd);
        let _ = cfg.effective_seed();
    }
});
