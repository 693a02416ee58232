use crate::error::{Error, Result};

/// Number of CQI levels in the 4-bit LTE CQI table.
pub const CQI_LEVELS: usize = 15;

/// Highest CQI belonging to the Bad half of the table.
pub const BAD_MAX_CQI: u8 = 7;

/// Per-slot peak rate: 75 Mbps over a 1 ms slot.
pub const PEAK_BITS_PER_SLOT: u32 = 75_000;

/// Spectral efficiency (bits/symbol) of each CQI, 3GPP TS 36.213 Table 7.2.3-1.
pub const CQI_EFFICIENCY: [f64; CQI_LEVELS] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

/// Achievable bits per 1 ms slot for CQI 1..=15.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateTable {
    entries: [u32; CQI_LEVELS],
}

impl RateTable {
    pub fn new(entries: [u32; CQI_LEVELS]) -> Result<Self> {
        if entries[0] == 0 {
            return Err(Error::Domain {
                what: "rate table",
                detail: "CQI 1 rate must be positive".into(),
            });
        }
        if let Some(i) = entries.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Domain {
                what: "rate table",
                detail: format!("rates must strictly increase (CQI {} -> {})", i + 1, i + 2),
            });
        }
        Ok(Self { entries })
    }

    /// The efficiency ladder scaled so that CQI 15 carries the 75 Mbps peak.
    pub fn lte() -> Self {
        let top = CQI_EFFICIENCY[CQI_LEVELS - 1];
        let entries = CQI_EFFICIENCY
            .map(|eff| (f64::from(PEAK_BITS_PER_SLOT) * eff / top).round() as u32);
        Self::new(entries).expect("efficiency ladder is strictly increasing")
    }

    pub fn entries(&self) -> &[u32; CQI_LEVELS] {
        &self.entries
    }

    /// Rates of the Good half, CQI 8..=15.
    pub fn good_rates(&self) -> &[u32] {
        &self.entries[BAD_MAX_CQI as usize..]
    }

    /// Rates of the Bad half, CQI 1..=7.
    pub fn bad_rates(&self) -> &[u32] {
        &self.entries[..BAD_MAX_CQI as usize]
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&r| f64::from(r)).sum::<f64>() / CQI_LEVELS as f64
    }

    pub fn peak(&self) -> u32 {
        self.entries[CQI_LEVELS - 1]
    }

    pub fn rate(&self, cqi: u8) -> Result<u32> {
        rate_from_cqi(cqi, self)
    }
}

impl Default for RateTable {
    fn default() -> Self {
        Self::lte()
    }
}

pub fn rate_from_cqi(cqi: u8, table: &RateTable) -> Result<u32> {
    if !(1..=CQI_LEVELS as u8).contains(&cqi) {
        return Err(Error::Domain {
            what: "CQI",
            detail: format!("{cqi} is not in 1..=15"),
        });
    }
    Ok(table.entries[cqi as usize - 1])
}

/// Lowest SIR threshold (CQI 1) and spacing of the uniform dB ladder; CQI 15
/// starts at +22 dB.
pub const SIR_FLOOR_DB: f64 = -6.0;
pub const SIR_STEP_DB: f64 = 2.0;

/// Maps a signal-to-interference ratio onto a CQI with uniform 2 dB steps.
/// Values below the ladder clamp to 1, above it to 15.
pub fn cqi_from_sir(sir_db: f64) -> u8 {
    if sir_db.is_nan() {
        return 1;
    }
    let steps = ((sir_db - SIR_FLOOR_DB) / SIR_STEP_DB).floor();
    (steps + 1.0).clamp(1.0, CQI_LEVELS as f64) as u8
}
