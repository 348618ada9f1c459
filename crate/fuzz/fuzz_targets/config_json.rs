#![no_main]

use libfuzzer_sys::fuzz_target;

// JSON flavor of the config surface (parse_str dispatches on a leading '{').
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut owned = String::with_capacity(text.len() + 1);
    if !text.trim_start().starts_with('{') {
        owned.push('{');
    }
    owned.push_str(text);
    if let Ok(cfg) = curvflow::config::ExperimentConfig::parse_str(&owned) {
        let _ = curvflow::config::build_plan(&cfg, None);
    }
});
