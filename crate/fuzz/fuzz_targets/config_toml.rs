#![no_main]

use libfuzzer_sys::fuzz_target;

// Full untrusted-config path: TOML parse, schema validation, and plan
// construction (models, grids, curvature specs). Must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = curvflow::config::ExperimentConfig::parse_str(text) {
        let _ = curvflow::config::build_plan(&cfg, None);
        let _ = curvflow::config::build_plan(&cfg, Some(16));
    }
});
