use jjswitch::analysis::{self, BranchLabel};
use jjswitch::config::{parse_config, RunConfig};
use jjswitch::engine::{evolve_step, QuantumState};
use jjswitch::hamiltonian::{effective_hamiltonian, hamiltonian_2, hamiltonian_4, Frame, TlsParams};
use jjswitch::matrix::ComplexMatrix;
use jjswitch::oracle::{escape_flux, lindblad_rhs, trace_real};
use jjswitch::physics::{rate_set, Branch, TunnelingMode};
use num_complex::Complex64;
use proptest::prelude::*;

/// Exactly representable current step (≈ 0.9 pA), so shifts are exact.
const UNIT: f64 = 1.0 / (1u64 << 40) as f64;

fn defaults() -> RunConfig {
    RunConfig::defaults()
}

/// Cluster separation in `UNIT`s (≈ 36 bins of 0.005 μA).
const GAP: f64 = 200_000.0;

/// Two clusters with a random branch pattern, each spread over ~2 bins.
fn two_cluster_currents() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((any::<bool>(), 0u32..12), 200..400).prop_map(|v| {
        let base = (35.5e-6 / UNIT).round() * UNIT;
        let at = |up: bool, j: u32| base + UNIT * (j as f64 * 900.0 + if up { GAP } else { 0.0 });
        let mut out: Vec<f64> = v.iter().map(|&(up, j)| at(up, j)).collect();
        // Both clusters well populated.
        out.extend((0..120).map(|k| at(k % 2 == 0, (k / 2) as u32 % 12)));
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_conserves_counts(values in prop::collection::vec(30e-6f64..36e-6, 1..500), width in 1e-9f64..1e-7) {
        let h = analysis::histogram_values(&values, width).unwrap();
        prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, values.len());
        prop_assert_eq!(h.n_total as usize, values.len());
        prop_assert_eq!(h.bin_edges.len(), h.counts.len() + 1);
        prop_assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
        let max = values.iter().copied().fold(f64::MIN, f64::max);
        prop_assert!(h.bin_edges[0] <= values.iter().copied().fold(f64::MAX, f64::min));
        prop_assert!(*h.bin_edges.last().unwrap() >= max);
    }

    #[test]
    fn classification_is_shift_invariant(currents in two_cluster_currents(), shift in -5000i64..5000) {
        let d = shift as f64 * UNIT;
        let shifted: Vec<f64> = currents.iter().map(|&x| x + d).collect();
        let a = analysis::classify_currents(&currents).unwrap();
        let b = analysis::classify_currents(&shifted).unwrap();
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert!((b.threshold - a.threshold - d).abs() < 1e-18);
        prop_assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn dwell_bookkeeping_identity(currents in two_cluster_currents()) {
        let s = analysis::classify_currents(&currents).unwrap();
        let runs = 1 + s.labels.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(s.jumps, runs - 1);
        prop_assert_eq!(s.dwell_upper.len() + s.dwell_lower.len(), runs);
        prop_assert_eq!(s.dwell_lengths().iter().sum::<usize>(), currents.len());
        prop_assert!(s.mean_is_upper > s.mean_is_lower);
        for (x, l) in currents.iter().zip(&s.labels) {
            prop_assert_eq!(*l == BranchLabel::Upper, *x > s.threshold);
        }
    }

    #[test]
    fn hamiltonians_are_hermitian(i_ua in 34.0f64..35.85, t in 0.0f64..1e-6, coupling_mhz in 0.0f64..300.0, lab in any::<bool>()) {
        let cfg = defaults();
        let p = cfg.junction_params();
        let d = cfg.bias_drive();
        let frame = if lab { Frame::Lab } else { Frame::Rwa };
        let tls = TlsParams { coupling: 2.0 * std::f64::consts::PI * coupling_mhz * 1e6, ..cfg.tls_params() };
        let h4 = hamiltonian_4(&p, &tls, &d, i_ua * 1e-6, t, frame).unwrap();
        prop_assert!(h4.is_hermitian(1e-14));
        let h2 = hamiltonian_2(&p, &d, i_ua * 1e-6, t, frame).unwrap();
        prop_assert!(h2.is_hermitian(1e-14));
        // The non-Hermitian part of H_eff is −(i/2)·diag(decay), decay >= 0.
        let r = rate_set(&p, i_ua * 1e-6, TunnelingMode::Analytic).unwrap();
        let ah = effective_hamiltonian(&h4, &r).anti_hermitian_part();
        for k in 0..4 {
            prop_assert!(ah[(k, k)].im <= 0.0);
        }
    }

    #[test]
    fn no_jump_evolution_never_grows_norm(re in prop::array::uniform4(-1.0f64..1.0), im in prop::array::uniform4(-1.0f64..1.0), i_ua in 35.0f64..35.8, frac in 0.01f64..1.0) {
        let cfg = defaults();
        let m = cfg.model().unwrap();
        let p = m.junction;
        let tls = m.tls.unwrap();
        let h = hamiltonian_4(&p, &tls, &m.drive, i_ua * 1e-6, 0.0, Frame::Rwa).unwrap();
        let r = rate_set(&p, i_ua * 1e-6, TunnelingMode::Analytic).unwrap();
        let mut s = QuantumState::<4>::ground(Branch::Ground, i_ua * 1e-6).unwrap();
        for k in 0..4 {
            s.amplitudes[k] = Complex64::new(re[k], im[k]);
        }
        prop_assume!(s.norm_sqr() > 1e-6);
        let before = s.norm_sqr();
        // Within the RK4 phase bound the engine enforces.
        let h_eff = effective_hamiltonian(&h, &r);
        let dt = frac * 0.25 / h_eff.one_norm_bound();
        let after = evolve_step(&s, &h_eff, dt).unwrap().norm_sqr();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }

    #[test]
    fn lindblad_trace_loss_is_escape_flux(re in prop::array::uniform4(-1.0f64..1.0), im in prop::array::uniform4(-1.0f64..1.0), i_ua in 35.0f64..35.8) {
        let cfg = defaults();
        let m = cfg.model().unwrap();
        let h = hamiltonian_4(&m.junction, &m.tls.unwrap(), &m.drive, i_ua * 1e-6, 0.0, Frame::Rwa).unwrap();
        let r = rate_set(&m.junction, i_ua * 1e-6, TunnelingMode::Analytic).unwrap();
        let v = [0, 1, 2, 3].map(|k| Complex64::new(re[k], im[k]));
        let rho = ComplexMatrix::<4>::outer(&v, &v);
        let drho = lindblad_rhs(&rho, &h, &r);
        let flux = escape_flux(&rho, &r);
        prop_assert!((trace_real(&drho) + flux).abs() <= 1e-12 * flux.max(r.relaxation * trace_real(&rho)));
        prop_assert!(drho.is_hermitian(1e-12));
    }

    #[test]
    fn lab_units_round_trip(i0 in 30.0f64..40.0, c in 1.0f64..10.0, f in 7.0f64..11.0, rate in 1e3f64..1e4, rabi in 1.0f64..50.0, eta in 0.0f64..0.05) {
        let text = format!(
            "[junction]\nI0_uA = {i0}\nC_pF = {c}\neta = {eta}\n[drive]\nf_drive_GHz = {f}\nramp_rate_uA_per_s = {rate}\nrabi_MHz = {rabi}\ndc_start_uA = 25.0\n"
        );
        let cfg = parse_config(&text, &[]).unwrap();
        let p = cfg.junction_params();
        let d = cfg.bias_drive();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        prop_assert!(rel(p.critical_current * 1e6, i0) < 1e-12);
        prop_assert!(rel(p.capacitance * 1e12, c) < 1e-12);
        prop_assert!(rel(d.microwave_frequency / (2.0 * std::f64::consts::PI) * 1e-9, f) < 1e-12);
        prop_assert!(rel(d.ramp_rate * 1e6, rate) < 1e-12);
        let again = parse_config(&cfg.to_toml(), &[]).unwrap();
        prop_assert_eq!(again.to_toml(), cfg.to_toml());
    }
}
