#![no_main]

use libfuzzer_sys::fuzz_target;
use tailconc::cli::parse_model_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // file references would touch the filesystem
    if text.trim_start().starts_with('@') {
        return;
    }
    if let Ok(model) = parse_model_spec(text) {
        let again = parse_model_spec(&model.to_json()).expect("serialised model parses");
        assert_eq!(again, model);
        let _ = model.second_order_info();
    }
});
