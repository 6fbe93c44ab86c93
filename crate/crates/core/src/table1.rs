//! Published optimized LT output-degree distributions for Gray 16-QAM with a
//! (3,60)-regular precode, one file per design SNR.

use crate::io::{parse_components, ComponentFile};

/// Raw component files, keyed by design SNR in dB.
pub const FILES: [(f64, &str); 4] = [
    (4.0, include_str!("../data/table1_04db.txt")),
    (6.0, include_str!("../data/table1_06db.txt")),
    (8.0, include_str!("../data/table1_08db.txt")),
    (10.0, include_str!("../data/table1_10db.txt")),
];

/// Reported rate efficiencies at the design SNRs.
pub const RATE_EFFICIENCY: [(f64, f64); 4] =
    [(4.0, 0.9345), (6.0, 0.9519), (8.0, 0.9759), (10.0, 0.9646)];

/// All four designs, parsed.
pub fn designs() -> Vec<ComponentFile> {
    FILES
        .iter()
        .map(|(_, text)| parse_components(text).expect("bundled design parses"))
        .collect()
}

/// The design for a given SNR, if one was published.
pub fn design(snr_db: f64) -> Option<ComponentFile> {
    FILES
        .iter()
        .find(|(s, _)| (s - snr_db).abs() < 1e-9)
        .map(|(_, text)| parse_components(text).expect("bundled design parses"))
}
