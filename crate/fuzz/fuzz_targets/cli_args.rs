#![no_main]

use libfuzzer_sys::fuzz_target;

// Only `info` is reachable: it is cheap and never writes files.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut argv = vec!["tailconc", "info"];
    argv.extend(text.split('\0').filter(|a| !a.starts_with("--out") && !a.starts_with('@')));
    if argv.iter().any(|a| a.contains('@') || *a == "--threads") {
        return;
    }
    let code = tailconc::cli::run(argv);
    assert!((0..=3).contains(&code));
});
