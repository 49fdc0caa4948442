//! Windowed log-likelihood and posterior over candidate offsets.
//!
//! For candidate `j`, Bob's bins `[j, j + N)` are explained by Alice's
//! published segment and every other bin by an unknown string with the same
//! phase. Writing the whole-record log probability under the unknown string
//! as a per-phase baseline `B(j mod n)`, the log numerator is the baseline
//! plus, for every bin inside the window, `ln p(bin | S) - ln p(bin | S̄)`.
//! Idle bins inside the window contribute nothing because both hypotheses
//! give them the dark-count probability, so only the leading and trailing
//! bin of each wavepacket enter, and those are read off the pair counts at
//! lags `j` and `j + 1`.

use alloc::format;
use alloc::vec::Vec;

use crate::counts::PairCounts;
use crate::error::{Error, Result};
use crate::model::AliceSymbol;
use crate::table::{DetectionTable, Role};

/// Log numerator of the offset posterior for every candidate lag `0..M`.
pub fn log_likelihood_window(counts: &PairCounts, table: &DetectionTable) -> Result<Vec<f64>> {
    let period = counts.period();
    if table.period() != period {
        return Err(Error::domain(format!(
            "table has {} phase classes but the counts were taken with period {period}",
            table.period()
        )));
    }
    if !counts.is_periodic() {
        return Err(Error::domain(
            "Alice's segment must start on a period boundary with one symbol per period",
        ));
    }

    // Per-phase baseline: every bin of Bob's segment under the uninformed hypothesis.
    let baseline: Vec<f64> = (0..period)
        .map(|shift| {
            let mut acc = 0.0;
            for r in 0..period {
                let bins = counts.phase_bins(r) as f64;
                let clicks = counts.phase_clicks(r);
                let phase = (r + period - shift) % period;
                for (det, &k) in clicks.iter().enumerate() {
                    let e = table.uninformed(phase, det);
                    acc += k as f64 * e.ln_p + (bins - k as f64) * e.ln_q;
                }
            }
            acc
        })
        .collect();

    // Log-ratio weights per (role, symbol, detector): clicked and not clicked.
    let mut click_w = [[[0.0; 4]; 4]; 2];
    let mut quiet_w = [[[0.0; 4]; 4]; 2];
    for role in Role::BOTH {
        let r = role as usize;
        for (s, &sym) in AliceSymbol::SIGNAL.iter().enumerate() {
            for det in 0..4 {
                let sig = table.signal(sym, role, det);
                let unf = table.uninformed(r, det);
                click_w[r][s][det] = sig.ln_p - unf.ln_p;
                quiet_w[r][s][det] = sig.ln_q - unf.ln_q;
            }
        }
    }

    // Bins paired with each symbol; the last symbol has no trailing bin inside
    // the window.
    let last = counts.last_symbol().signal_index();
    let mut lead_tot = [0.0; 4];
    let mut trail_tot = [0.0; 4];
    for (s, &sym) in AliceSymbol::SIGNAL.iter().enumerate() {
        let t = counts.total(0, sym) as f64;
        lead_tot[s] = t;
        trail_tot[s] = if last == Some(s) { t - 1.0 } else { t };
    }
    let mut constant = 0.0;
    for s in 0..4 {
        for det in 0..4 {
            constant += lead_tot[s] * quiet_w[0][s][det] + trail_tot[s] * quiet_w[1][s][det];
        }
    }

    let window = counts.window();
    let mut out = Vec::with_capacity(window);
    for lag in 0..window {
        let mut acc = baseline[lag % period] + constant;
        for (s, &sym) in AliceSymbol::SIGNAL.iter().enumerate() {
            for det in 0..4 {
                let lead = counts.count(lag, sym, det) as f64;
                let mut trail = counts.count(lag + 1, sym, det) as f64;
                if last == Some(s) {
                    trail -= (counts.boundary_outcome(lag) >> det & 1) as f64;
                }
                acc += lead * (click_w[0][s][det] - quiet_w[0][s][det])
                    + trail * (click_w[1][s][det] - quiet_w[1][s][det]);
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Normalized posterior from per-candidate log numerators under a uniform prior.
pub fn posterior(log_numerators: &[f64]) -> Result<Vec<f64>> {
    if log_numerators.is_empty() {
        return Err(Error::domain("posterior needs at least one candidate"));
    }
    if let Some(i) = log_numerators.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "log numerator {} at candidate {i} is not finite",
            log_numerators[i]
        )));
    }
    let max = log_numerators.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = log_numerators.iter().map(|v| libm::exp(v - max)).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    Ok(out)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Offset, ProtocolConfig};
    use crate::counts::count_pairings;
    use crate::session::{generate_alice, Session};
    use alloc::vec;
    use proptest::prelude::*;

    /// Literal product over every bin of Bob's segment, hypothesis by hypothesis.
    pub(crate) fn literal_log_numerator(
        alice: &[AliceSymbol],
        bob: &[u8],
        table: &DetectionTable,
        lag: usize,
    ) -> f64 {
        let n = alice.len();
        let period = table.period();
        let mut acc = 0.0;
        for (b, &outcome) in bob.iter().enumerate() {
            for det in 0..4 {
                let e = if b >= lag && b < lag + n {
                    let k = b - lag;
                    if !alice[k].is_idle() {
                        table.signal(alice[k], Role::Leading, det)
                    } else if k >= 1 && !alice[k - 1].is_idle() {
                        table.signal(alice[k - 1], Role::Trailing, det)
                    } else {
                        table.idle(det)
                    }
                } else {
                    let phase = (b + period * (lag / period + 1) - lag) % period;
                    table.uninformed(phase, det)
                };
                acc += if outcome >> det & 1 == 1 { e.ln_p } else { e.ln_q };
            }
        }
        acc
    }

    #[test]
    fn counts_path_matches_literal_product() {
        let mut cfg = ProtocolConfig::with_received(0.6, 8e-4);
        cfg.initial_offset = Offset { bins: 37, alpha: 0.3 };
        let s = Session::simulate(&cfg, 90, 40, 5).unwrap();
        let table = DetectionTable::new(&cfg, 0.5).unwrap();
        // N = 500 is not a multiple of the period: exercises the boundary term
        let alice = &s.alice.symbols()[..500];
        let bob = &s.bob.outcomes()[..564];
        let pc = count_pairings(alice, bob, 8).unwrap();
        let ll = log_likelihood_window(&pc, &table).unwrap();
        assert_eq!(ll.len(), 64);
        for (lag, v) in ll.iter().enumerate() {
            let lit = literal_log_numerator(alice, bob, &table, lag);
            assert!((v - lit).abs() <= 1e-9 * lit.abs(), "lag {lag}: {v} vs {lit}");
        }
    }

    #[test]
    fn zero_information_table_gives_flat_likelihood() {
        let cfg = ProtocolConfig::with_received(0.0, 8e-4);
        let table = DetectionTable::new(&cfg, 0.5).unwrap();
        let alice = generate_alice(&cfg, 50, 1).unwrap();
        let mut bob = vec![0u8; 480];
        for i in (0..480).step_by(13) {
            bob[i] = 0b1001;
        }
        let pc = count_pairings(alice.symbols(), &bob, 8).unwrap();
        let ll = log_likelihood_window(&pc, &table).unwrap();
        let first = ll[0];
        assert!(ll.iter().all(|&v| (v - first).abs() < 1e-9));
    }

    #[test]
    fn phase_mismatch_is_rejected() {
        let cfg = ProtocolConfig::default();
        let alice = generate_alice(&cfg, 4, 1).unwrap();
        let pc = count_pairings(alice.symbols(), &[0u8; 40], 4).unwrap();
        let table = DetectionTable::new(&cfg, 0.5).unwrap();
        assert!(log_likelihood_window(&pc, &table).is_err());
        // misaligned segment
        let pc = count_pairings(&alice.symbols()[8..24], &[0u8; 40], 8).unwrap();
        assert!(log_likelihood_window(&pc, &table).is_ok());
        let pc = count_pairings(&alice.symbols()[1..25], &[0u8; 40], 8).unwrap();
        assert!(log_likelihood_window(&pc, &table).is_err());
    }

    #[test]
    fn posterior_edge_cases() {
        let flat = posterior(&[3.5; 7]).unwrap();
        assert!(flat.iter().all(|&p| p == 1.0 / 7.0));
        let dom = posterior(&[0.0, -1e6]).unwrap();
        assert_eq!(dom, vec![1.0, 0.0]);
        assert!(posterior(&[]).is_err());
        assert!(matches!(
            posterior(&[0.0, f64::NEG_INFINITY]),
            Err(Error::Numerical(_))
        ));
        assert!(posterior(&[f64::NAN]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[0.25; 4]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    proptest! {
        #[test]
        fn posterior_is_normalized_and_shift_invariant(
            xs in prop::collection::vec(-500.0f64..500.0, 1..200),
            c in -1e4f64..1e4,
        ) {
            let p = posterior(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let q = posterior(&shifted).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_survives_monotone_transforms(
            xs in prop::collection::vec(-50.0f64..50.0, 1..100),
            scale in 0.01f64..10.0,
        ) {
            let p = posterior(&xs).unwrap();
            let transformed: Vec<f64> = xs.iter().map(|x| scale * x + libm::atan(*x)).collect();
            let q = posterior(&transformed).unwrap();
            prop_assert_eq!(argmax(&p), argmax(&xs));
            prop_assert_eq!(argmax(&q), argmax(&transformed));
            prop_assert_eq!(argmax(&xs), argmax(&transformed));
        }
    }
}
