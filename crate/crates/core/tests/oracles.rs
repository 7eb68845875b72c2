//! Closed-form and brute-force references for the building blocks.

use approx::assert_relative_eq;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vmpsp::channel::{complex_gaussian, etu_profile, freq_response, prior_covariance, Observation};
use vmpsp::config::build_default_config;
use vmpsp::fec::{bcjr_decode, conv_encode, Bit, ConvCodeSpec};
use vmpsp::modem::{Constellation, Modulation, SymbolBeliefGrid};
use vmpsp::numerics::{gaussian_product, ComplexMatrix, ComplexVector, GaussianDensity, HermitianPsd};
use vmpsp::oracle::{bcjr_enumeration, dft_response, shift_register_encode, vmp_monte_carlo_oracle};
use vmpsp::receivers::{lmmse_channel_estimate, mld_re, pilot_symbol_grid, ReceiverSetup};
use vmpsp::vmp::{disjoint_channel_update, joint_channel_update, replace_antenna, ChannelBelief, ChannelModel, ChannelPrior};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn bcjr_matches_enumeration_on_short_blocks() {
    let spec = ConvCodeSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for u in 6..=8 {
        for _ in 0..5 {
            let priors: Vec<f64> = (0..spec.coded_len(u)).map(|_| rng.random_range(-6.0..6.0)).collect();
            let out = bcjr_decode(&priors, &spec).unwrap();
            let (info, coded) = bcjr_enumeration(&priors, &spec, u);
            for (a, b) in out.app_info.iter().zip(&info) {
                assert!((a - b).abs() < 1e-9, "info {a} vs {b}");
            }
            for (a, b) in out.app_coded.iter().zip(&coded) {
                assert!((a - b).abs() < 1e-9, "coded {a} vs {b}");
            }
        }
    }
}

#[test]
fn encoder_matches_register_model() {
    let spec = ConvCodeSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for len in [1, 7, 64, 335] {
        let u: Vec<Bit> = (0..len).map(|_| rng.random_range(0..2u8)).collect();
        assert_eq!(conv_encode(&u, &spec), shift_register_encode(&u, &spec));
    }
}

#[test]
fn gaussian_product_matches_quadrature() {
    // CN(1, 2) × CN(3, 4), normalized: mean 5/3, variance 4/3.
    let a = GaussianDensity::new(ComplexVector::from_element(1, c(1.0, 0.0)), HermitianPsd::from_diagonal(&[2.0]).unwrap()).unwrap();
    let b = GaussianDensity::new(ComplexVector::from_element(1, c(3.0, 0.0)), HermitianPsd::from_diagonal(&[4.0]).unwrap()).unwrap();
    let p = gaussian_product(&a, &b).unwrap();

    let pdf = |z: Complex64, mu: f64, v: f64| (-(z - mu).norm_sqr() / v).exp() / (std::f64::consts::PI * v);
    let (h, lim) = (0.02, 12.0);
    let n = (2.0 * lim / h) as i64;
    let (mut w, mut m1, mut m2) = (0.0, c(0.0, 0.0), 0.0);
    for i in 0..=n {
        for j in 0..=n {
            let z = c(-lim + 2.0 + i as f64 * h, -lim + j as f64 * h);
            let f = pdf(z, 1.0, 2.0) * pdf(z, 3.0, 4.0);
            w += f;
            m1 += z * f;
            m2 += z.norm_sqr() * f;
        }
    }
    let mean = m1 / w;
    let var = m2 / w - mean.norm_sqr();
    assert_relative_eq!(mean.re, 5.0 / 3.0, epsilon = 1e-6);
    assert_relative_eq!(p.mean[0].re, 5.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(var, 4.0 / 3.0, epsilon = 1e-6);
    assert_relative_eq!(p.cov.matrix()[(0, 0)].re, 4.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn frequency_response_matches_dft() {
    let p = etu_profile();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..20 {
        let g: Vec<Complex64> = p.powers.iter().map(|&w| complex_gaussian(&mut rng, w)).collect();
        let a = freq_response(&g, &p.delays_s, 75, 15e3);
        let b = dft_response(&g, &p.delays_s, 75, 15e3, 20_000).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}

#[test]
fn prior_covariance_matches_sample_covariance() {
    let p = etu_profile();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let n = 40_000;
    let mut acc = ComplexMatrix::zeros(4, 4);
    for _ in 0..n {
        let g: Vec<Complex64> = p.powers.iter().map(|&w| complex_gaussian(&mut rng, w)).collect();
        let h = ComplexVector::from_vec(freq_response(&g, &p.delays_s, 4, 15e3));
        acc += &h * h.adjoint();
    }
    acc /= c(n as f64, 0.0);
    let exact = prior_covariance(&p, 4, 15e3);
    assert!((acc - &exact).norm() / exact.norm() < 0.03);
}

#[test]
fn vmp_messages_match_sampling() {
    for seed in [200, 201] {
        let r = vmp_monte_carlo_oracle(seed, 300_000).unwrap();
        assert!(r.max_err() < 0.02, "{r:?}");
    }
}

#[test]
fn mld_matches_hand_enumeration() {
    // M = N = 2, QPSK, one element: 16 joint hypotheses.
    let q = Constellation::new(Modulation::Qpsk);
    let h = [c(0.8, -0.3), c(0.2, 0.5), c(-0.4, 0.9), c(1.1, 0.1)];
    let y = [c(0.5, 0.7), c(-0.2, 1.3)];
    let lambda = 1.7;
    let (llrs, pmfs) = mld_re(&y, &h, 2, lambda, &q);
    let mut post = [[0.0; 4]; 4];
    let mut total = 0.0;
    for (a, pa) in q.points().iter().enumerate() {
        for (b, pb) in q.points().iter().enumerate() {
            let mut d = 0.0;
            for n in 0..2 {
                d += (y[n] - h[n * 2] * pa - h[n * 2 + 1] * pb).norm_sqr();
            }
            post[a][b] = (-lambda * d).exp();
            total += post[a][b];
        }
    }
    for a in 0..4 {
        let marg: f64 = post[a].iter().sum::<f64>() / total;
        assert_relative_eq!(pmfs[0].probs()[a], marg, epsilon = 1e-12);
    }
    for j in 0..2 {
        let (mut p0, mut p1) = (0.0, 0.0);
        for a in 0..4 {
            for b in 0..4 {
                if q.label_bit(b, j) == 0 {
                    p0 += post[a][b];
                } else {
                    p1 += post[a][b];
                }
            }
        }
        assert_relative_eq!(llrs[1][j], (p0 / p1).ln(), epsilon = 1e-10);
    }
}

fn frame_with_pilots(seed: u64) -> (ReceiverSetup, Observation, Vec<Vec<Complex64>>, f64) {
    let cfg = build_default_config();
    let setup = ReceiverSetup::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pilots = cfg.with_pilots_from(&mut rng).pilots.values;
    let noise_var = 0.3;
    let n_re = cfg.n_re();
    let y = (0..cfg.rx * n_re).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    (
        setup,
        Observation {
            y,
            rx: cfg.rx,
            n_re,
            noise_var,
        },
        pilots,
        noise_var,
    )
}

#[test]
fn lmmse_equals_joint_update_with_pilot_beliefs() {
    let (setup, obs, pilots, noise_var) = frame_with_pilots(104);
    let lmmse = lmmse_channel_estimate(&obs, setup.grid.pilot_res(), &pilots, setup.prior.cov.matrix(), noise_var).unwrap();
    let sym = pilot_symbol_grid(&setup, &pilots).unwrap();
    let joint = joint_channel_update(&obs, 1.0 / noise_var, &sym, &setup.prior).unwrap();
    let jm = joint.link_means();
    let scale: f64 = lmmse.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff: f64 = lmmse
        .iter()
        .flatten()
        .zip(jm.iter().flatten())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(diff / scale < 1e-5, "relative difference {}", diff / scale);
}

#[test]
fn sequential_pilot_updates_converge_to_joint_estimate() {
    let (setup, obs, pilots, noise_var) = frame_with_pilots(105);
    let lambda = 1.0 / noise_var;
    let sym = pilot_symbol_grid(&setup, &pilots).unwrap();
    let joint = joint_channel_update(&obs, lambda, &sym, &setup.prior).unwrap().link_means();
    let cfg = &setup.cfg;
    let mut ch = ChannelBelief::zeros(ChannelModel::Disjoint, cfg.tx, cfg.rx, cfg.subcarriers);
    for _ in 0..300 {
        for m in 0..cfg.tx {
            let b = disjoint_channel_update(m, &obs, lambda, &sym, &ch, &setup.prior).unwrap();
            replace_antenna(&mut ch, m, b);
        }
    }
    let seq = ch.link_means();
    let scale: f64 = joint.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff: f64 = joint
        .iter()
        .flatten()
        .zip(seq.iter().flatten())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    assert!(diff / scale < 1e-4, "relative difference {}", diff / scale);
}

#[test]
fn single_antenna_disjoint_update_is_lmmse() {
    // M = 1: one sequential update at the true precision is the LMMSE solution.
    let prior_cov = prior_covariance(&etu_profile(), 75, 15e3);
    let prior = ChannelPrior::new(prior_cov.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let pres: Vec<usize> = (0..75).step_by(12).chain((81..150).step_by(12)).collect();
    let pilots = vec![pres.iter().map(|_| c(1.0, 1.0) / 2f64.sqrt()).collect::<Vec<_>>()];
    let n_re = 150;
    let obs = Observation {
        y: (0..n_re).map(|_| complex_gaussian(&mut rng, 1.0)).collect(),
        rx: 1,
        n_re,
        noise_var: 0.2,
    };
    let mut sym = SymbolBeliefGrid::zeros(1, n_re);
    for (&re, &p) in pres.iter().zip(&pilots[0]) {
        sym.set(0, re, p, 0.0);
    }
    let lmmse = lmmse_channel_estimate(&obs, &pres, &pilots, &prior_cov, 0.2).unwrap();
    let ch = ChannelBelief::zeros(ChannelModel::Disjoint, 1, 1, 75);
    let upd = disjoint_channel_update(0, &obs, 5.0, &sym, &ch, &prior).unwrap();
    for (a, b) in lmmse[0].iter().zip(upd[0].mean.iter()) {
        assert!((a - b).norm() < 1e-5);
    }
}

#[test]
fn lmmse_recovers_noiseless_channel_in_prior_span() {
    // Flat profile: every link is a constant across subcarriers.
    let prior_cov = ComplexMatrix::from_element(6, 6, c(1.0, 0.0));
    let h = c(0.7, -0.4);
    let pres = [0usize, 3];
    let pilots = vec![vec![c(1.0, 0.0), c(0.0, 1.0)]];
    let y: Vec<Complex64> = (0..6)
        .map(|re| match pres.iter().position(|&p| p == re) {
            Some(i) => h * pilots[0][i],
            None => c(0.0, 0.0),
        })
        .collect();
    let obs = Observation {
        y,
        rx: 1,
        n_re: 6,
        noise_var: 0.0,
    };
    let est = lmmse_channel_estimate(&obs, &pres, &pilots, &prior_cov, 1e-8).unwrap();
    for z in &est[0] {
        assert!((z - h).norm() < 1e-6);
    }
}
