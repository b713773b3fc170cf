#![no_main]

use gcnn_vmc::ed::{decode_eigenvector, encode_eigenvector};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((n, v)) = decode_eigenvector(data) {
        assert_eq!(encode_eigenvector(n, &v), data);
    }
});
