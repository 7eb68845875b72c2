//! Invariant checks shared by the property suite and the acceptance run.
//! Each check draws its inputs from `seed` and reports the first violation.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vmpsp::channel::{complex_gaussian, Observation};
use vmpsp::config::{pilot_positions, FrameConfig, ResourceGrid};
use vmpsp::harness::{run_monte_carlo, Scenario};
use vmpsp::modem::{demap_extrinsic, Constellation, Modulation, SymbolBeliefGrid};
use vmpsp::numerics::{gaussian_product, hpd_inverse, ComplexMatrix, ComplexVector, GaussianDensity, HermitianPsd};
use vmpsp::receivers::ReceiverKind;
use vmpsp::vmp::{
    build_observation_stats, disjoint_channel_update, joint_channel_update, residual_energy, vmp_symbol_update,
    ChannelBelief, ChannelModel, ChannelPrior,
};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_hpd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> HermitianPsd {
    let a = ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    HermitianPsd::new(&a * a.adjoint() * Complex64::new(0.5, 0.0) + ComplexMatrix::identity(n, n) * Complex64::new(shift, 0.0))
        .unwrap()
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> GaussianDensity {
    let mean = ComplexVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0));
    GaussianDensity::new(mean, random_hpd(rng, n, 0.2)).unwrap()
}

fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Small random system: observation, soft symbols and a joint channel
/// belief with cross-antenna and cross-subcarrier covariance.
pub struct Toy {
    pub obs: Observation,
    pub sym: SymbolBeliefGrid,
    pub ch: ChannelBelief,
    pub prior: ChannelPrior,
}

pub fn toy(seed: u64, tx: usize, rx: usize, kk: usize, l: usize) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_re = kk * l;
    let y = (0..rx * n_re).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    let mut sym = SymbolBeliefGrid::zeros(tx, n_re);
    for m in 0..tx {
        for re in 0..n_re {
            let v = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
            sym.set(m, re, complex_gaussian(&mut rng, 1.0), v);
        }
    }
    let ch = ChannelBelief {
        model: ChannelModel::Joint,
        tx,
        rx,
        subcarriers: kk,
        blocks: (0..rx).map(|_| random_density(&mut rng, tx * kk)).collect(),
    };
    let prior = ChannelPrior::new(random_hpd(&mut rng, kk, 0.3).into_matrix()).unwrap();
    Toy {
        obs: Observation {
            y,
            rx,
            n_re,
            noise_var: 0.0,
        },
        sym,
        ch,
        prior,
    }
}

/// Product commutes, precisions add and the mean is precision-weighted.
pub fn gaussian_algebra(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_density(&mut rng, n);
    let b = random_density(&mut rng, n);
    let ab = gaussian_product(&a, &b).map_err(|e| e.to_string())?;
    let ba = gaussian_product(&b, &a).map_err(|e| e.to_string())?;
    ensure(max_abs_diff(ab.cov.matrix(), ba.cov.matrix()) < 1e-10, || "product covariance not symmetric in its factors".into())?;
    ensure((&ab.mean - &ba.mean).norm() < 1e-10, || "product mean not symmetric in its factors".into())?;

    let pa = hpd_inverse(&a.cov).map_err(|e| e.to_string())?;
    let pb = hpd_inverse(&b.cov).map_err(|e| e.to_string())?;
    let p = hpd_inverse(&ab.cov).map_err(|e| e.to_string())?;
    let sum = pa.matrix() + pb.matrix();
    let err = max_abs_diff(p.matrix(), &sum);
    ensure(err < 1e-8 * sum.norm(), || format!("precisions do not add: {err}"))?;
    let eta = pa.matrix() * &a.mean + pb.matrix() * &b.mean;
    let err = (p.matrix() * &ab.mean - eta).norm();
    ensure(err < 1e-8 * (1.0 + sum.norm()), || format!("mean not precision-weighted: {err}"))
}

/// Pilot and data elements are disjoint, sorted and cover the grid.
pub fn pilot_partition(kk: usize, l: usize) -> Check {
    let pos = pilot_positions(kk, l).map_err(|e| e.to_string())?;
    let grid = ResourceGrid::new(kk, l, &pos).map_err(|e| e.to_string())?;
    ensure(grid.pilot_res().windows(2).all(|w| w[0] < w[1]), || "pilot indices unsorted".into())?;
    ensure(grid.data_res().windows(2).all(|w| w[0] < w[1]), || "data indices unsorted".into())?;
    let mut all: Vec<usize> = grid.pilot_res().iter().chain(grid.data_res()).copied().collect();
    all.sort_unstable();
    ensure(all == (0..kk * l).collect::<Vec<_>>(), || format!("{kk}x{l}: pilots and data do not partition the grid"))?;
    ensure(
        grid.pilot_res().iter().all(|&re| pos.contains(&(re % kk, re / kk))),
        || "pilot element outside the pattern".into(),
    )
}

/// A symbol message depends only on its own element.
pub fn per_element_decoupling(seed: u64, tx: usize, rx: usize) -> Check {
    let t = toy(seed, tx, rx, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let target = rng.random_range(0..t.obs.n_re);
    let all: Vec<usize> = (0..t.obs.n_re).collect();
    let upd = |obs: &Observation, sym: &SymbolBeliefGrid, res: &[usize]| {
        vmp_symbol_update(0, obs, 2.0, &t.ch, sym, res).map_err(|e| e.to_string())
    };
    let base = upd(&t.obs, &t.sym, &all)?;
    let single = upd(&t.obs, &t.sym, &[target])?;
    ensure(base[target] == single[0], || "message depends on the evaluated set".into())?;

    let mut obs = t.obs.clone();
    let mut sym = t.sym.clone();
    for re in (0..obs.n_re).filter(|&re| re != target) {
        for n in 0..rx {
            obs.y[n * obs.n_re + re] += complex_gaussian(&mut rng, 1.0);
        }
        for m in 0..tx {
            sym.set(m, re, complex_gaussian(&mut rng, 1.0), rng.random_range(0.0..1.0));
        }
    }
    ensure(upd(&obs, &sym, &[target])?[0] == single[0], || "message depends on other elements".into())
}

/// With one transmit antenna the joint and disjoint channel updates agree.
pub fn single_antenna_equivalence(seed: u64, rx: usize, lambda: f64) -> Check {
    let t = toy(seed, 1, rx, 4, 3);
    let joint = joint_channel_update(&t.obs, lambda, &t.sym, &t.prior).map_err(|e| e.to_string())?;
    let dis = disjoint_channel_update(0, &t.obs, lambda, &t.sym, &t.ch.to_disjoint(), &t.prior).map_err(|e| e.to_string())?;
    for n in 0..rx {
        let dm = (&joint.blocks[n].mean - &dis[n].mean).norm();
        ensure(dm < 1e-9 * (1.0 + dis[n].mean.norm()), || format!("means differ by {dm}"))?;
        let dc = max_abs_diff(joint.blocks[n].cov.matrix(), dis[n].cov.matrix());
        ensure(dc < 1e-9, || format!("covariances differ by {dc}"))?;
    }
    Ok(())
}

/// `A` equals `⟨|y − Σ_m x_m h_m|²⟩` summed over elements and receive
/// antennas, expanded term by term.
pub fn trace_identity(seed: u64, tx: usize, rx: usize) -> Check {
    let t = toy(seed, tx, rx, 3, 2);
    let stats = build_observation_stats(&t.obs, &t.sym, &t.ch).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..t.obs.n_re).collect();
    let a = residual_energy(&t.obs, &t.sym, &t.ch, &stats, &all);
    let kk = t.ch.subcarriers;
    let mut expect = 0.0;
    for re in 0..t.obs.n_re {
        let k = re % kk;
        for n in 0..rx {
            let y = t.obs.at(n, re);
            let pred: Complex64 = (0..tx).map(|m| t.sym.mean[m][re] * t.ch.mean(n, m, k)).sum();
            let mut second = 0.0;
            for m in 0..tx {
                for m2 in 0..tx {
                    let mut xx = t.sym.mean[m][re] * t.sym.mean[m2][re].conj();
                    if m == m2 {
                        xx += t.sym.var[m][re];
                    }
                    let hh = t.ch.mean(n, m, k) * t.ch.mean(n, m2, k).conj() + t.ch.cov(n, m, k, m2, k);
                    second += (xx * hh).re;
                }
            }
            expect += y.norm_sqr() - 2.0 * (y.conj() * pred).re + second;
        }
    }
    ensure((a - expect).abs() < 1e-9 * (1.0 + expect.abs()), || format!("A = {a}, expected {expect}"))
}

/// Extrinsic plus own prior is the a-posteriori LLR, computed by full sums.
pub fn extrinsic_consistency(ll: &[f64], priors: &[f64]) -> Check {
    let c = Constellation::new(Modulation::Qam16);
    let ext = demap_extrinsic(ll, priors, &c);
    for j in 0..4 {
        let (mut p0, mut p1) = (0.0, 0.0);
        for s in 0..16 {
            let prior: f64 = (0..4)
                .map(|i| if c.label_bit(s, i) == 0 { 0.5 * priors[i] } else { -0.5 * priors[i] })
                .sum();
            let w = (ll[s] + prior).exp();
            if c.label_bit(s, j) == 0 {
                p0 += w
            } else {
                p1 += w
            }
        }
        let app = (p0 / p1).ln();
        let err = (ext[j] + priors[j] - app).abs();
        ensure(err < 1e-9, || format!("bit {j}: extrinsic + prior off by {err}"))?;
    }
    Ok(())
}

pub fn extrinsic_consistency_seeded(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ll: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..0.0)).collect();
    let priors: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
    extrinsic_consistency(&ll, &priors)
}

/// Point-mass channel beliefs reduce the symbol update to zero forcing
/// against the interference-cancelled observation.
pub fn em_symbol_update(seed: u64, tx: usize, rx: usize) -> Check {
    let t = toy(seed, tx, rx, 3, 2);
    let em = t.ch.em_restrict();
    let all: Vec<usize> = (0..t.obs.n_re).collect();
    let lambda = 3.0;
    for m in 0..tx {
        let msgs = vmp_symbol_update(m, &t.obs, lambda, &em, &t.sym, &all).map_err(|e| e.to_string())?;
        for (&re, msg) in all.iter().zip(&msgs) {
            let k = re % 3;
            let mut num = Complex64::new(0.0, 0.0);
            let mut gain = 0.0;
            for n in 0..rx {
                let h = t.ch.mean(n, m, k);
                let others: Complex64 = (0..tx)
                    .filter(|&m2| m2 != m)
                    .map(|m2| t.ch.mean(n, m2, k) * t.sym.mean[m2][re])
                    .sum();
                num += h.conj() * (t.obs.at(n, re) - others);
                gain += h.norm_sqr();
            }
            ensure((msg.mean - num / gain).norm() < 1e-10 * (1.0 + msg.mean.norm()), || format!("mean at {re}"))?;
            ensure((msg.var - 1.0 / (lambda * gain)).abs() < 1e-10 * msg.var, || format!("variance at {re}"))?;
        }
    }
    Ok(())
}

/// Identical tables on one and on three worker threads.
pub fn worker_count_determinism() -> Check {
    let (cfg, _) = FrameConfig::from_toml_str("constellation = \"qpsk\"").map_err(|e| e.to_string())?;
    let s = Scenario {
        cfg,
        receivers: vec![(ReceiverKind::PscDd, 2), (ReceiverKind::IDjcDd, 1), (ReceiverKind::LmmseBaseline, 1)],
        eb_n0_db: vec![4.0],
        frames: 5,
        master_seed: 9,
        early_exit: false,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?
            .install(|| run_monte_carlo(&s))
            .map_err(|e| e.to_string())
    };
    ensure(run(1)? == run(3)?, || "tables differ between 1 and 3 workers".into())
}
