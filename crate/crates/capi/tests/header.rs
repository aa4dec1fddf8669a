//! The generated C header must exist after a build and expose the public
//! surface.

#[test]
fn generated_header_contains_the_api() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("dicap.h");
    let text = std::fs::read_to_string(&header)
        .unwrap_or_else(|e| panic!("missing generated header {header:?}: {e}"));
    for symbol in [
        "DicapStatus",
        "DicapChannel",
        "DicapQGraph",
        "dicap_channel_ising",
        "dicap_channel_free",
        "dicap_qgraph_ising_q1",
        "dicap_value_iteration",
        "dicap_qbound",
        "dicap_duality_optimize",
        "dicap_ba_bounds",
        "dicap_ctw_di",
        "dicap_last_error_message",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}
