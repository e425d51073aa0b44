use approx::assert_relative_eq;
use nalgebra::DMatrix;

use icgt::channel::{empirical_moments, quantize, ChannelKind, ChannelModel};
use icgt::graph::{build_topology, metropolis_weights, spectrum, MixingMatrix, TopologyKind};
use icgt::rng::{substream, StreamTag};
use icgt::Error;

#[test]
fn star_three_spectrum() {
    let w = metropolis_weights(&build_topology(TopologyKind::Star, 3, None, 0).unwrap()).unwrap();
    let s = w.spectrum();
    assert_relative_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-12);
    assert_relative_eq!(w.lambda2(), 2.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(w.lambda_n(), 0.0, epsilon = 1e-12);
    assert_relative_eq!(w.spectral_gap(), 1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn averaging_matrix_spectrum() {
    let s = spectrum(&DMatrix::from_element(3, 3, 1.0 / 3.0)).unwrap();
    assert_relative_eq!(s.lambda2, 0.0, epsilon = 1e-12);
    assert_relative_eq!(s.spectral_gap, 1.0, epsilon = 1e-12);
}

#[test]
fn identity_is_rejected_as_disconnected() {
    let w = MixingMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
    assert_eq!(w.spectral_gap(), 0.0);
    assert!(w.require_valid().is_err());
}

#[test]
fn erdos_renyi_is_reproducible_and_connected() {
    for seed in 0..20 {
        let a = build_topology(TopologyKind::ErdosRenyi, 12, Some(0.3), seed).unwrap();
        let b = build_topology(TopologyKind::ErdosRenyi, 12, Some(0.3), seed).unwrap();
        assert!(a.is_connected());
        assert_eq!(a.neighbors(), b.neighbors());
    }
}

#[test]
fn ring_and_star_degrees() {
    let ring = build_topology(TopologyKind::Ring, 6, None, 0).unwrap();
    assert!(ring.degrees().iter().all(|&d| d == 2));
    let star = build_topology(TopologyKind::Star, 6, None, 0).unwrap();
    let mut deg = star.degrees();
    deg.sort_unstable();
    assert_eq!(deg, vec![1, 1, 1, 1, 1, 5]);
}

#[test]
fn tiny_graphs_are_rejected() {
    assert!(matches!(
        build_topology(TopologyKind::Ring, 1, None, 0),
        Err(Error::InvalidSize(_))
    ));
}

#[test]
fn quantizer_is_unbiased_and_on_grid() {
    let x = 0.337;
    let mut sum = 0.0;
    let trials = 200_000;
    let mut rng = substream(1, StreamTag::MonteCarlo, &[0]);
    for _ in 0..trials {
        let q = quantize(x, 10, rand::Rng::random::<f64>(&mut rng));
        assert!(q == 0.3 || (q - 0.4).abs() < 1e-12, "{q}");
        sum += q;
    }
    assert_relative_eq!(sum / trials as f64, x, epsilon = 2e-3);
    assert_eq!(quantize(0.5, 2, 0.99), 0.5);
}

#[test]
fn awgn_moments_match_their_bound() {
    let ch = ChannelModel::awgn(0.2, 2.0).unwrap();
    let mut rng = substream(2, StreamTag::MonteCarlo, &[0]);
    let m = empirical_moments(&ch, &[1.0, -3.0], 50_000, &mut rng).unwrap();
    for c in 0..2 {
        assert_relative_eq!(m.per_coord_variance[c], ch.variance_bound(), max_relative = 0.05);
        assert!(m.mean_error[c].abs() < 4.0 * m.std_dev()[c] / (50_000f64).sqrt());
    }
}

#[test]
fn moment_estimation_needs_enough_trials() {
    let ch = ChannelModel::exact();
    let mut rng = substream(2, StreamTag::MonteCarlo, &[0]);
    assert!(matches!(
        empirical_moments(&ch, &[1.0], 10, &mut rng),
        Err(Error::InsufficientSamples { got: 10, .. })
    ));
}

#[test]
fn sender_streams_are_deterministic_and_distinct() {
    let ch = ChannelModel::new(ChannelKind::Awgn { sigma_c: 1.0, h: 1.0 })
        .unwrap()
        .with_stream(9, StreamTag::ChannelX);
    let x = [0.0; 4];
    let a = ch.transmit_from(&x, 3, 17, 0).unwrap();
    let b = ch.transmit_from(&x, 3, 17, 0).unwrap();
    let c = ch.transmit_from(&x, 4, 17, 0).unwrap();
    let d = ch.transmit_from(&x, 3, 17, 1).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.noise, c.noise);
    assert_ne!(a.noise, d.noise);
}

#[test]
fn exact_channel_is_lossless_and_rejects_nan() {
    let ch = ChannelModel::exact();
    let mut rng = substream(0, StreamTag::MonteCarlo, &[]);
    let t = ch.transmit(&[1.5, -2.0], &mut rng).unwrap();
    assert_eq!(t.received, vec![1.5, -2.0]);
    assert!(ch.transmit(&[f64::NAN], &mut rng).is_err());
}
