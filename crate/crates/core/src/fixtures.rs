//! Published trend-test results for the twenty fastest-growing topics in a
//! cloud-computing corpus (2004-2021, 18 annual counts per topic).
//!
//! Only topic, p, z and slope were published. [`published_top_topics`]
//! fills in the remaining fields assuming an untied series of length 18
//! with no autocorrelation correction, which is enough to replay ranking.

use crate::trend::{MannKendallResult, TrendClass};

/// `(topic, p, z, slope)` rows as printed, in printed order.
pub const TOP_TOPICS: [(&str, f64, f64, f64); 20] = [
    ("Internet of Things", 0.00003, 5.143, 174.00),
    ("Mathematical optimization", 0.00001, 5.336, 136.42),
    ("Virtual machine", 0.0001, 3.887, 93.66),
    ("Computer network", 0.00001, 4.878, 87.14),
    ("Encryption", 0.00004, 4.600, 82.90),
    ("Big data", 0.00005, 4.063, 75.84),
    ("Distributed computing", 0.0001, 4.040, 53.50),
    ("Load balancing (computing)", 0.0001, 4.573, 34.08),
    ("Real-time computing", 0.0001, 4.955, 32.66),
    ("Sensor", 0.0001, 4.563, 31.33),
    ("Cryptography", 0.00004, 5.060, 29.22),
    ("Parallel computing", 0.00002, 3.699, 26.53),
    ("Machine learning", 0.00002, 5.214, 26.50),
    ("Mobile cloud computing", 0.0005, 3.450, 23.45),
    ("Fog computing", 0.000007, 3.972, 21.00),
    ("Artificial intelligence", 0.00009, 5.333, 20.40),
    ("Computer architecture", 0.0001, 3.811, 20.00),
    ("Smart city", 0.00003, 4.677, 15.16),
    ("Computer cluster", 0.00007, 3.354, 15.08),
    ("Particle swarm optimization", 0.00001, 4.953, 14.38),
];

/// Mean slope of the twenty topics as stated alongside the table.
pub const STATED_MEAN_SLOPE: f64 = 50.54;

/// Series length behind the published rows.
pub const SERIES_LEN: usize = 18;

/// The published rows as trend-test results.
pub fn published_top_topics() -> Vec<(String, MannKendallResult)> {
    let n = SERIES_LEN as f64;
    let var_s = n * (n - 1.0) * (2.0 * n + 5.0) / 18.0;
    TOP_TOPICS
        .iter()
        .map(|&(topic, p, z, slope)| {
            let s = (z * var_s.sqrt() + z.signum()).round() as i64;
            (
                topic.to_string(),
                MannKendallResult {
                    n: SERIES_LEN,
                    s,
                    var_s,
                    correction_factor: 1.0,
                    z,
                    p,
                    slope,
                    trend_class: TrendClass::classify(z, p, 0.05),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstruction() {
        let rows = published_top_topics();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].1.var_s, 697.0);
        assert_eq!(rows[0].1.s, 137);
        assert!(rows.iter().all(|(_, r)| r.trend_class == TrendClass::Increasing));
    }
}
