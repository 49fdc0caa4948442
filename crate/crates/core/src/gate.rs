//! Gating Bob's record with a recovered offset: for each of Alice's
//! communication bins, the detector outcomes in the two bins its wavepacket
//! can occupy.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::model::AliceSymbol;
use crate::session::{AliceString, BobRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GatedBin {
    pub comm_bin: usize,
    pub symbol: AliceSymbol,
    /// Outcome byte of the bin aligned with the start of the wavepacket.
    pub leading: u8,
    /// Outcome byte of the following bin.
    pub trailing: u8,
}

impl GatedBin {
    pub fn outcome(&self) -> u8 {
        self.leading | self.trailing
    }

    /// Exactly one detector fired across both bins.
    pub fn is_single_click(&self) -> bool {
        self.outcome().count_ones() == 1
    }
}

/// Gates the communication bins in `comm_bins`, with Alice's slot 0 aligned to
/// Bob's record index `offset`.
pub fn gate(
    alice: &AliceString,
    bob: &BobRecord,
    offset: usize,
    comm_bins: Range<usize>,
) -> Result<Vec<GatedBin>> {
    if comm_bins.end > alice.comm_bins() {
        return Err(Error::domain(format!(
            "Alice sent {} communication bins, asked for up to {}",
            alice.comm_bins(),
            comm_bins.end
        )));
    }
    let period = alice.period();
    let outcomes = bob.outcomes();
    let mut out = Vec::with_capacity(comm_bins.len());
    for c in comm_bins {
        let lead = offset + c * period;
        if lead + 1 >= outcomes.len() {
            return Err(Error::domain(format!(
                "communication bin {c} gates record bin {lead}, past the record end {}",
                outcomes.len()
            )));
        }
        out.push(GatedBin {
            comm_bin: c,
            symbol: alice.symbol_at(c),
            leading: outcomes[lead],
            trailing: outcomes[lead + 1],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Offset, ProtocolConfig};
    use crate::session::Session;

    #[test]
    fn gated_clicks_follow_the_basis() {
        // no dark counts, so forbidden detectors stay silent
        let mut cfg = ProtocolConfig::with_received(1.0, 0.0);
        cfg.initial_offset = Offset { bins: 123, alpha: 0.5 };
        let s = Session::simulate(&cfg, 4_000, 10, 3).unwrap();
        let g = gate(&s.alice, &s.bob, 123, 0..4_000).unwrap();
        assert_eq!(g.len(), 4_000);
        // an H photon can never reach V
        for b in g.iter().filter(|b| b.symbol == AliceSymbol::H) {
            assert_eq!(b.outcome() & 0b0010, 0, "{b:?}");
        }
        for b in g.iter().filter(|b| b.symbol == AliceSymbol::L) {
            assert_eq!(b.outcome() & 0b1000, 0, "{b:?}");
        }
        let singles = g.iter().filter(|b| b.symbol != AliceSymbol::Vacuum && b.is_single_click());
        assert!(singles.count() > 1_000);
    }

    #[test]
    fn range_is_checked() {
        let cfg = ProtocolConfig::with_received(1.0, 8e-4);
        let s = Session::simulate(&cfg, 10, 0, 3).unwrap();
        assert!(gate(&s.alice, &s.bob, 0, 0..11).is_err());
        assert!(gate(&s.alice, &s.bob, 8, 0..10).is_err());
        assert!(gate(&s.alice, &s.bob, 0, 0..10).is_ok());
    }
}
