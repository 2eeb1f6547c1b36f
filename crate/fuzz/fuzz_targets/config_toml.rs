#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use measex::config::Config;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let _ = Config::from_toml(&text, Path::new("."));
});
