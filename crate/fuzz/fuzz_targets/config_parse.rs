#![no_main]

use gcnn_vmc::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_toml_str(text) {
        let again = RunConfig::from_toml_str(&c.to_toml_string()).expect("snapshot reparses");
        assert_eq!(again, c);
    }
});
