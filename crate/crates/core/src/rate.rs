//! Closed-form rate calculators: split-7.2 uplink fronthaul rate, maximum
//! cell throughput, DU output payload per slot and PON traffic intensity.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::ran::Numerology;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RateError {
    #[error("{data_prbs} data PRBs outside 0..={max_prbs}")]
    PrbsOutOfRange { data_prbs: u32, max_prbs: u32 },
    #[error("{users} users x {prbs_per_user} PRBs exceeds {max_prbs} PRBs")]
    TooManyUsers {
        users: u32,
        prbs_per_user: u32,
        max_prbs: u32,
    },
    #[error("capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PucchParams {
    pub n_reg: u32,
    pub n_re: u32,
    pub n_res: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrachParams {
    pub n_bins: u32,
    pub n_res: u32,
    pub period_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrsParams {
    pub n_re: u32,
    pub n_res: u32,
    pub period_s: f64,
}

/// Inputs of the split-7.2 uplink rate equation, except the per-PRB data
/// flags which come from the slot occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split72Params {
    pub n_ant: u32,
    pub n_re_per_prb: u32,
    /// IQ resolution per component; the leading factor 2 covers I and Q.
    pub n_res_bits: u32,
    pub pucch: PucchParams,
    pub prach: PrachParams,
    pub srs: SrsParams,
    pub max_prbs: u32,
    pub slot_time_s: f64,
}

impl Split72Params {
    pub fn for_numerology(num: &Numerology) -> Self {
        Split72Params {
            n_ant: 4,
            n_re_per_prb: 156,
            n_res_bits: 8,
            pucch: PucchParams {
                n_reg: 1,
                n_re: 156,
                n_res: 8,
            },
            prach: PrachParams {
                n_bins: 839,
                n_res: 10,
                period_s: 10e-3,
            },
            srs: SrsParams {
                n_re: 12,
                n_res: 8,
                period_s: 1e-3,
            },
            max_prbs: num.max_prbs(),
            slot_time_s: num.slot_time_s(),
        }
    }

    /// SRS subcarrier count: every PRB except the PUCCH region.
    pub fn srs_subcarriers(&self) -> u32 {
        (self.max_prbs - self.pucch.n_reg) * self.srs.n_re
    }

    /// Rate contributed by one data-carrying PRB, in bit/s.
    pub fn per_prb_rate(&self) -> f64 {
        2.0 * f64::from(self.n_ant) * f64::from(self.n_res_bits) * f64::from(self.n_re_per_prb)
            / self.slot_time_s
    }

    /// PUCCH + PRACH + SRS rate, present even in an empty slot, in bit/s.
    pub fn control_floor_rate(&self) -> f64 {
        let pucch = f64::from(self.pucch.n_reg)
            * f64::from(self.pucch.n_re)
            * f64::from(self.pucch.n_res)
            / self.slot_time_s;
        let prach = f64::from(self.prach.n_bins) * f64::from(self.prach.n_res) / self.prach.period_s;
        let srs = f64::from(self.srs_subcarriers()) * f64::from(self.srs.n_res) / self.srs.period_s;
        2.0 * f64::from(self.n_ant) * (pucch + prach + srs)
    }
}

/// Split-7.2 uplink fronthaul rate in bit/s for a slot with `data_prbs`
/// data-carrying PRBs.
pub fn split72_rate(params: &Split72Params, data_prbs: u32) -> Result<f64, RateError> {
    if data_prbs > params.max_prbs {
        return Err(RateError::PrbsOutOfRange {
            data_prbs,
            max_prbs: params.max_prbs,
        });
    }
    Ok(f64::from(data_prbs) * params.per_prb_rate() + params.control_floor_rate())
}

/// Fronthaul bytes emitted by an RU for one slot, rounded up to whole bytes.
pub fn split72_slot_bytes(params: &Split72Params, data_prbs: u32) -> Result<u64, RateError> {
    let bits = split72_rate(params, data_prbs)? * params.slot_time_s;
    Ok((bits / 8.0).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierParams {
    pub layers: u32,
    /// Bits per modulation symbol (8 for 256-QAM).
    pub q_m: u32,
    pub scaling: f64,
    pub r_max: f64,
    pub max_prbs: u32,
    pub symbol_time_s: f64,
    pub overhead: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellThroughputParams {
    pub carriers: Vec<CarrierParams>,
}

impl CellThroughputParams {
    /// Single 100 MHz carrier, 4 layers, 256-QAM, FR1 uplink overhead.
    pub fn for_numerology(num: &Numerology) -> Self {
        CellThroughputParams {
            carriers: vec![CarrierParams {
                layers: 4,
                q_m: 8,
                scaling: 1.0,
                r_max: 948.0 / 1024.0,
                max_prbs: num.max_prbs(),
                symbol_time_s: num.symbol_time_s(),
                overhead: 0.1,
            }],
        }
    }
}

/// Maximum cell throughput in Mbit/s.
pub fn cell_throughput(params: &CellThroughputParams) -> f64 {
    1e-6 * params
        .carriers
        .iter()
        .map(|c| {
            f64::from(c.layers)
                * f64::from(c.q_m)
                * c.scaling
                * c.r_max
                * (f64::from(c.max_prbs) * 12.0 / c.symbol_time_s)
                * (1.0 - c.overhead)
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuPayloadParams {
    pub r_cell_mbps: f64,
    pub max_prbs: u32,
    pub prbs_per_user: u32,
    pub slot_time_s: f64,
}

impl DuPayloadParams {
    pub fn for_numerology(num: &Numerology) -> Self {
        DuPayloadParams {
            r_cell_mbps: cell_throughput(&CellThroughputParams::for_numerology(num)),
            max_prbs: num.max_prbs(),
            prbs_per_user: crate::ran::PRBS_PER_USER,
            slot_time_s: num.slot_time_s(),
        }
    }
}

/// Data (in megabits) the DU hands to the application for one slot.
pub fn du_payload_per_slot(params: &DuPayloadParams, active_users: u32) -> Result<f64, RateError> {
    if active_users * params.prbs_per_user > params.max_prbs {
        return Err(RateError::TooManyUsers {
            users: active_users,
            prbs_per_user: params.prbs_per_user,
            max_prbs: params.max_prbs,
        });
    }
    Ok(params.r_cell_mbps / f64::from(params.max_prbs)
        * f64::from(params.prbs_per_user)
        * f64::from(active_users)
        * params.slot_time_s)
}

/// PON traffic intensity in percent of `capacity_bps`.
pub fn traffic_intensity(ru_rates_bps: &[f64], capacity_bps: f64) -> Result<f64, RateError> {
    if capacity_bps <= 0.0 {
        return Err(RateError::ZeroCapacity);
    }
    Ok(100.0 * ru_rates_bps.iter().sum::<f64>() / capacity_bps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mu1() -> Numerology {
        Numerology::new(1).unwrap()
    }
    fn mu2() -> Numerology {
        Numerology::new(2).unwrap()
    }

    // Hand-evaluated: 2*4*(156*8/0.5e-3 + 839*10/10e-3 + 269*12*8/1e-3)
    //               = 8*(2.496e6 + 0.839e6 + 25.824e6)
    const FLOOR_MU1: f64 = 233.272e6;
    // 8*(270*156*8/0.5e-3 + 29.159e6) = 8*(673.92e6 + 29.159e6)
    const FULL_MU1: f64 = 5_624.632e6;

    #[test]
    fn split72_floor_mu1() {
        let p = Split72Params::for_numerology(&mu1());
        assert_relative_eq!(split72_rate(&p, 0).unwrap(), FLOOR_MU1, max_relative = 1e-12);
    }

    #[test]
    fn split72_full_mu1() {
        let p = Split72Params::for_numerology(&mu1());
        assert_relative_eq!(split72_rate(&p, 270).unwrap(), FULL_MU1, max_relative = 1e-12);
    }

    #[test]
    fn split72_half_mu1() {
        let p = Split72Params::for_numerology(&mu1());
        let expected = FLOOR_MU1 + 135.0 * (156.0 * 8.0 * 8.0 / 0.5e-3);
        assert_relative_eq!(split72_rate(&p, 135).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 2_928.952e6, max_relative = 1e-12);
    }

    #[test]
    fn split72_out_of_range() {
        let p = Split72Params::for_numerology(&mu1());
        assert!(matches!(split72_rate(&p, 271), Err(RateError::PrbsOutOfRange { .. })));
    }

    #[test]
    fn split72_mu2_floor() {
        // 8*(156*8/0.25e-3 + 839 + 134*12*8/1e-3) = 8*(4.992e6 + 0.839e6 + 12.864e6)
        let p = Split72Params::for_numerology(&mu2());
        assert_relative_eq!(split72_rate(&p, 0).unwrap(), 149.56e6, max_relative = 1e-12);
    }

    // 1e-6 * 4*8*1*(948/1024)*(270*12*28000)*0.9; 2_903_040_000/1024 is exact.
    const R_CELL_MBPS: f64 = 2_418.822;

    #[test]
    fn cell_throughput_both_configs() {
        let c1 = cell_throughput(&CellThroughputParams::for_numerology(&mu1()));
        let c2 = cell_throughput(&CellThroughputParams::for_numerology(&mu2()));
        assert_relative_eq!(c1, R_CELL_MBPS, max_relative = 1e-9);
        assert_relative_eq!(c2, R_CELL_MBPS, max_relative = 1e-9);
    }

    #[test]
    fn cell_throughput_full_overhead_is_zero() {
        let mut p = CellThroughputParams::for_numerology(&mu1());
        p.carriers[0].overhead = 1.0;
        assert_eq!(cell_throughput(&p), 0.0);
    }

    #[test]
    fn du_payload_examples() {
        let p = DuPayloadParams::for_numerology(&mu1());
        assert_eq!(du_payload_per_slot(&p, 0).unwrap(), 0.0);
        assert_relative_eq!(
            du_payload_per_slot(&p, 1).unwrap(),
            R_CELL_MBPS / 270.0 * 5.0 * 0.5e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(du_payload_per_slot(&p, 1).unwrap(), 0.022397, max_relative = 1e-4);
        let full = du_payload_per_slot(&p, 54).unwrap();
        assert_relative_eq!(full / 0.5e-3, R_CELL_MBPS, max_relative = 1e-9);
        assert!(du_payload_per_slot(&p, 55).is_err());
    }

    #[test]
    fn traffic_intensity_examples() {
        assert_relative_eq!(
            traffic_intensity(&[FLOOR_MU1], 50e9).unwrap(),
            0.466544,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            traffic_intensity(&[FULL_MU1; 8], 50e9).unwrap(),
            89.994112,
            max_relative = 1e-9
        );
        assert_eq!(traffic_intensity(&[], 50e9).unwrap(), 0.0);
        assert!(traffic_intensity(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn split72_is_affine(prbs in 0u32..=270) {
            let p = Split72Params::for_numerology(&mu1());
            let slope = 2.0 * 4.0 * 156.0 * 8.0 / 0.5e-3;
            let r = split72_rate(&p, prbs).unwrap();
            prop_assert!((r - (FLOOR_MU1 + slope * f64::from(prbs))).abs() / r < 1e-12);
            if prbs > 0 {
                prop_assert!(r > split72_rate(&p, prbs - 1).unwrap());
            }
        }

        #[test]
        fn du_payload_linear(users in 0u32..=27) {
            let p = DuPayloadParams::for_numerology(&mu2());
            let one = du_payload_per_slot(&p, 1).unwrap();
            let d = du_payload_per_slot(&p, users).unwrap();
            prop_assert!((d - one * f64::from(users)).abs() <= 1e-12 * (1.0 + d));
        }
    }
}
