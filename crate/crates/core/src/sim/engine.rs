//! Two samplers of the same pulse-level model.
//!
//! [`run`] only visits pulses that can produce a BSM double click: the number
//! of such candidates per batch is drawn from a binomial, and each candidate
//! is drawn from the exact conditional distribution of (detected Alice
//! photons, detected idlers, BSM dark clicks). [`run_reference`] simulates
//! every pulse photon by photon and exists to cross-check the fast path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use rayon::prelude::*;

use super::{PairStatistics, SignalAttribution, SimConfig, SimResult, Tallies};
use crate::domain::{expected_output_state, SystemParams, TimeBinQubit};
use crate::error::{Error, Result};

/// Pulses per independently seeded batch.
const BATCH_PULSES: u64 = 1 << 26;
/// Largest photon number tabulated per source in the candidate sampler.
const MAX_K: usize = 24;
/// Probability mass the truncated tables may drop before we refuse to run.
const MAX_TRUNCATED_MASS: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pedigree {
    P111,
    P112,
    P022,
    P201,
    Higher,
    Dark,
}

/// An accepted three-fold event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    /// Signal click at the port projecting on the analysis state.
    pub max_port: bool,
    pub pedigree: Pedigree,
}

#[derive(Default)]
struct Partial {
    max: u64,
    min: u64,
    candidates: u64,
    tallies: Tallies,
}

impl Partial {
    fn record(&mut self, o: Outcome) {
        if o.max_port {
            self.max += 1;
        } else {
            self.min += 1;
        }
        let t = &mut self.tallies;
        match o.pedigree {
            Pedigree::P111 => t.p111 += 1,
            Pedigree::P112 => t.p112 += 1,
            Pedigree::P022 => t.p022 += 1,
            Pedigree::P201 => t.p201 += 1,
            Pedigree::Higher => t.higher += 1,
            Pedigree::Dark => t.dark += 1,
        }
    }

    fn merge(mut self, o: Partial) -> Partial {
        self.max += o.max;
        self.min += o.min;
        self.candidates += o.candidates;
        self.tallies.add(&o.tallies);
        self
    }
}

/// Port probabilities at the signal analyser.
fn analysis_state(cfg: &SimConfig, target: &TimeBinQubit) -> TimeBinQubit {
    match (cfg.umzi2_phase, cfg.analysis_state) {
        (Some(phi), _) => TimeBinQubit::equatorial(phi),
        (None, Some(m)) => m,
        (None, None) => *target,
    }
}

fn bin_state(bin: usize) -> TimeBinQubit {
    if bin == 0 {
        TimeBinQubit::EARLY
    } else {
        TimeBinQubit::LATE
    }
}

/// Precomputed link quantities for the candidate sampler.
#[derive(Debug, Clone)]
pub struct Link {
    p_early: f64,
    p_signal: f64,
    dark: f64,
    attribution: SignalAttribution,
    stats: PairStatistics,
    /// Mean pairs whose idler is not detected (Poisson case).
    mu_undetected: f64,
    /// `q (1 - p_idler)` of the thermal conditional (thermal case).
    thermal_ratio: f64,
    /// P(max port) for the teleported signal, by pair bin.
    p_max_teleported: [f64; 2],
    /// P(max port) for any other signal photon, by pair bin.
    p_max_plain: [f64; 2],
    /// Candidate configurations `(alice, idlers, darks)` and cumulative weights.
    configs: Vec<(u8, u8, u8)>,
    cumulative: Vec<f64>,
    p_candidate: f64,
}

fn poisson_pmf(mean: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; MAX_K + 1];
    let mut w = (-mean).exp();
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            w *= mean / k as f64;
        }
        *slot = w;
    }
    pmf
}

fn geometric_pmf(mean: f64) -> Vec<f64> {
    let r = mean / (1.0 + mean);
    let mut pmf = vec![0.0; MAX_K + 1];
    let mut w = 1.0 - r;
    for slot in pmf.iter_mut() {
        *slot = w;
        w *= r;
    }
    pmf
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let c: f64 = (0..k).map(|j| (n - j) as f64 / (j + 1) as f64).product();
            c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
        })
        .collect()
}

impl Link {
    pub fn new(p: &SystemParams, cfg: &SimConfig) -> Result<Self> {
        p.validate()?;
        cfg.validate()?;
        let p_alice = p.eta_a * p.xi_bsm;
        let p_idler = p.eta_i * p.xi_bsm;
        let target = expected_output_state(&cfg.input_state);
        let m = analysis_state(cfg, &target);
        let teleported = m.overlap(&target);
        let plain = [m.overlap(&bin_state(0)), m.overlap(&bin_state(1))];

        let alice_pmf = poisson_pmf(p.mu_a * p_alice);
        let idler_pmf = match cfg.pair_statistics {
            PairStatistics::Poissonian => poisson_pmf(p.mu_spdc * p_idler),
            PairStatistics::Thermal => geometric_pmf(p.mu_spdc * p_idler),
        };
        let dark_pmf = binomial_pmf(4, cfg.dark_count_prob);
        let kept: f64 =
            alice_pmf.iter().sum::<f64>() * idler_pmf.iter().sum::<f64>() * dark_pmf.iter().sum::<f64>();
        if 1.0 - kept > MAX_TRUNCATED_MASS {
            return Err(Error::input(format!(
                "mean photon numbers too large for the sampler tables (dropped mass {:.1e})",
                1.0 - kept
            )));
        }

        let mut configs = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (a, pa) in alice_pmf.iter().enumerate() {
            for (i, pi) in idler_pmf.iter().enumerate() {
                for (d, pd) in dark_pmf.iter().enumerate() {
                    let w = pa * pi * pd;
                    if a + i + d >= 2 && w > 0.0 {
                        acc += w;
                        configs.push((a as u8, i as u8, d as u8));
                        cumulative.push(acc);
                    }
                }
            }
        }

        let q = p.mu_spdc / (1.0 + p.mu_spdc);
        Ok(Link {
            p_early: cfg.input_state.p_early(),
            p_signal: p.eta_s * p.xi_s,
            dark: cfg.dark_count_prob,
            attribution: cfg.signal_attribution,
            stats: cfg.pair_statistics,
            mu_undetected: p.mu_spdc * (1.0 - p_idler),
            thermal_ratio: q * (1.0 - p_idler),
            p_max_teleported: [
                p.zeta * teleported + (1.0 - p.zeta) * plain[0],
                p.zeta * teleported + (1.0 - p.zeta) * plain[1],
            ],
            p_max_plain: plain,
            configs,
            cumulative,
            p_candidate: acc,
        })
    }

    /// Probability that a pulse yields at least two BSM click sources.
    pub fn candidate_probability(&self) -> f64 {
        self.p_candidate
    }

    fn sample_candidate<R: Rng>(&self, rng: &mut R) -> (usize, usize, usize) {
        let u = rng.random::<f64>() * self.p_candidate;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.configs.len() - 1);
        let (a, i, d) = self.configs[idx];
        (a as usize, i as usize, d as usize)
    }

    /// Plays out one pulse with `alice` detected Alice photons, `idlers`
    /// detected idler photons and `darks` BSM dark clicks.
    pub fn evaluate<R: Rng>(
        &self,
        alice: usize,
        idlers: usize,
        darks: usize,
        rng: &mut R,
    ) -> Option<Outcome> {
        // slots[detector][bin]
        let mut slots = [[false; 2]; 2];
        for _ in 0..alice {
            let bin = usize::from(rng.random::<f64>() >= self.p_early);
            slots[usize::from(rng.random::<bool>())][bin] = true;
        }
        let mut idler_bins = [0usize; MAX_K + 1];
        for b in idler_bins.iter_mut().take(idlers) {
            *b = usize::from(rng.random::<bool>());
            slots[usize::from(rng.random::<bool>())][*b] = true;
        }
        if darks > 0 {
            let mut all = [0usize, 1, 2, 3];
            for k in 0..darks {
                let j = rng.random_range(k..4);
                all.swap(k, j);
                slots[all[k] / 2][all[k] % 2] = true;
            }
        }
        let psi_minus = (slots[0][0] && slots[1][1] && !slots[0][1] && !slots[1][0])
            || (slots[0][1] && slots[1][0] && !slots[0][0] && !slots[1][1]);
        if !psi_minus {
            return None;
        }

        let teleporting = alice == 1 && idlers == 1 && darks == 0;
        let mut ports = [false; 2];
        let mut n_signals = 0;
        let mut partner_seen = false;
        let port = |p_max: f64, rng: &mut R, ports: &mut [bool; 2]| {
            ports[usize::from(rng.random::<f64>() >= p_max)] = true;
        };

        for (k, &bin) in idler_bins.iter().enumerate().take(idlers) {
            if rng.random::<f64>() < self.p_signal {
                n_signals += 1;
                let p_max = if teleporting && k == 0 {
                    partner_seen = true;
                    self.p_max_teleported[bin]
                } else {
                    self.p_max_plain[bin]
                };
                port(p_max, rng, &mut ports);
            }
        }

        let extra_mean = match self.stats {
            PairStatistics::Poissonian => self.mu_undetected * self.p_signal,
            PairStatistics::Thermal => {
                // Given `idlers` detected, undetected pairs are negative
                // binomial; sample it as a gamma-Poisson mixture.
                if self.thermal_ratio > 0.0 {
                    let scale = self.thermal_ratio / (1.0 - self.thermal_ratio);
                    let g = Gamma::new((idlers + 1) as f64, scale).expect("valid gamma");
                    g.sample(rng) * self.p_signal
                } else {
                    0.0
                }
            }
        };
        let extra = if extra_mean > 0.0 {
            Poisson::new(extra_mean).expect("valid mean").sample(rng) as u64
        } else {
            0
        };
        for _ in 0..extra {
            n_signals += 1;
            let bin = usize::from(rng.random::<bool>());
            let p_max = if teleporting && self.attribution == SignalAttribution::AnySignal {
                self.p_max_teleported[idler_bins[0]]
            } else {
                self.p_max_plain[bin]
            };
            port(p_max, rng, &mut ports);
        }

        let mut signal_dark = false;
        if self.dark > 0.0 {
            for p in ports.iter_mut() {
                if rng.random::<f64>() < self.dark {
                    *p = true;
                    signal_dark = true;
                }
            }
        }
        if ports[0] == ports[1] {
            return None;
        }

        let pedigree = if darks > 0 || signal_dark {
            Pedigree::Dark
        } else if n_signals != 1 {
            Pedigree::Higher
        } else {
            match (alice, idlers) {
                (1, 1) if partner_seen => Pedigree::P111,
                (1, 1) => Pedigree::P112,
                (0, 2) => Pedigree::P022,
                (2, 0) => Pedigree::P201,
                _ => Pedigree::Higher,
            }
        };
        Some(Outcome {
            max_port: ports[0],
            pedigree,
        })
    }
}

fn batches(n_pulses: u64) -> Vec<(u64, u64)> {
    let n_batches = n_pulses.div_ceil(BATCH_PULSES);
    (0..n_batches)
        .map(|b| (b, BATCH_PULSES.min(n_pulses - b * BATCH_PULSES)))
        .collect()
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Fast sampler. Deterministic for a given seed regardless of thread count.
pub fn run(p: &SystemParams, cfg: &SimConfig) -> Result<SimResult> {
    let link = Link::new(p, cfg)?;
    let total = batches(cfg.n_pulses)
        .into_par_iter()
        .map(|(b, n)| {
            let mut rng = batch_rng(cfg.seed, b);
            let mut part = Partial::default();
            if link.p_candidate > 0.0 {
                let c = Binomial::new(n, link.p_candidate.min(1.0))
                    .expect("valid binomial")
                    .sample(&mut rng);
                part.candidates = c;
                for _ in 0..c {
                    let (a, i, d) = link.sample_candidate(&mut rng);
                    if let Some(o) = link.evaluate(a, i, d, &mut rng) {
                        part.record(o);
                    }
                }
            }
            part
        })
        .reduce(Partial::default, Partial::merge);
    Ok(SimResult::from_counts(
        cfg.n_pulses,
        total.max,
        total.min,
        total.candidates,
        total.tallies,
    ))
}

struct Pair {
    bin: usize,
    idler_detector: Option<usize>,
    signal_detected: bool,
}

/// Photon-by-photon reference sampler; slow, intended for small runs.
pub fn run_reference(p: &SystemParams, cfg: &SimConfig) -> Result<SimResult> {
    p.validate()?;
    cfg.validate()?;
    let target = expected_output_state(&cfg.input_state);
    let m = analysis_state(cfg, &target);
    let p_early = cfg.input_state.p_early();
    let alice_dist = (p.mu_a > 0.0).then(|| Poisson::new(p.mu_a).expect("valid mean"));
    let pair_poisson = (p.mu_spdc > 0.0).then(|| Poisson::new(p.mu_spdc).expect("valid mean"));
    let pair_geometric = Geometric::new(1.0 / (1.0 + p.mu_spdc)).expect("valid geometric");

    let total = batches(cfg.n_pulses)
        .into_par_iter()
        .map(|(b, n)| {
            let mut rng = batch_rng(cfg.seed, b);
            let mut part = Partial::default();
            let mut pairs: Vec<Pair> = Vec::new();
            for _ in 0..n {
                let mut grid = [[0u32; 2]; 2];
                let mut alice_hits = 0;
                let n_alice = alice_dist.map_or(0, |d| d.sample(&mut rng) as u64);
                for _ in 0..n_alice {
                    let bin = if rng.random_bool(p_early) { 0 } else { 1 };
                    if rng.random_bool(p.eta_a * p.xi_bsm) {
                        grid[rng.random_range(0..2)][bin] += 1;
                        alice_hits += 1;
                    }
                }
                let n_pairs = match cfg.pair_statistics {
                    PairStatistics::Poissonian => pair_poisson.map_or(0, |d| d.sample(&mut rng) as u64),
                    PairStatistics::Thermal => pair_geometric.sample(&mut rng),
                };
                pairs.clear();
                let mut idler_hits = 0;
                for _ in 0..n_pairs {
                    let bin = rng.random_range(0..2);
                    let idler_detector = rng
                        .random_bool(p.eta_i * p.xi_bsm)
                        .then(|| rng.random_range(0..2));
                    if let Some(det) = idler_detector {
                        grid[det][bin] += 1;
                        idler_hits += 1;
                    }
                    let signal_detected = rng.random_bool(p.eta_s * p.xi_s);
                    pairs.push(Pair {
                        bin,
                        idler_detector,
                        signal_detected,
                    });
                }
                let mut bsm_dark = false;
                for slot in grid.iter_mut().flatten() {
                    if rng.random_bool(cfg.dark_count_prob) {
                        *slot += 1;
                        bsm_dark = true;
                    }
                }
                if bsm_dark || alice_hits + idler_hits >= 2 {
                    part.candidates += 1;
                }
                let clicked: Vec<(usize, usize)> = (0..2)
                    .flat_map(|d| (0..2).map(move |b| (d, b)))
                    .filter(|&(d, b)| grid[d][b] > 0)
                    .collect();
                let accepted =
                    clicked.len() == 2 && clicked[0].0 != clicked[1].0 && clicked[0].1 != clicked[1].1;
                if !accepted {
                    continue;
                }

                // The pair whose idler clicked, when the BSM saw exactly one
                // Alice photon and one idler.
                let teleporting_pair = (alice_hits == 1 && idler_hits == 1 && !bsm_dark)
                    .then(|| pairs.iter().position(|q| q.idler_detector.is_some()))
                    .flatten();
                let mut ports = [0u32; 2];
                let mut n_signals = 0;
                let mut partner_seen = false;
                for (idx, pair) in pairs.iter().enumerate() {
                    if !pair.signal_detected {
                        continue;
                    }
                    n_signals += 1;
                    let own = m.overlap(&bin_state(pair.bin));
                    let p_max = match teleporting_pair {
                        Some(t) if t == idx || cfg.signal_attribution == SignalAttribution::AnySignal => {
                            if t == idx {
                                partner_seen = true;
                            }
                            let partner_bin = pairs[t].bin;
                            p.zeta * m.overlap(&target) + (1.0 - p.zeta) * m.overlap(&bin_state(partner_bin))
                        }
                        _ => own,
                    };
                    ports[if rng.random_bool(p_max) { 0 } else { 1 }] += 1;
                }
                let mut signal_dark = false;
                for port in ports.iter_mut() {
                    if rng.random_bool(cfg.dark_count_prob) {
                        *port += 1;
                        signal_dark = true;
                    }
                }
                if (ports[0] > 0) == (ports[1] > 0) {
                    continue;
                }
                let pedigree = if bsm_dark || signal_dark {
                    Pedigree::Dark
                } else if n_signals != 1 {
                    Pedigree::Higher
                } else if alice_hits == 1 && idler_hits == 1 {
                    if partner_seen {
                        Pedigree::P111
                    } else {
                        Pedigree::P112
                    }
                } else if alice_hits == 0 && idler_hits == 2 {
                    Pedigree::P022
                } else if alice_hits == 2 && idler_hits == 0 {
                    Pedigree::P201
                } else {
                    Pedigree::Higher
                };
                part.record(Outcome {
                    max_port: ports[0] > 0,
                    pedigree,
                });
            }
            part
        })
        .reduce(Partial::default, Partial::merge);
    Ok(SimResult::from_counts(
        cfg.n_pulses,
        total.max,
        total.min,
        total.candidates,
        total.tallies,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StateLabel;

    fn bright() -> SystemParams {
        SystemParams {
            mu_spdc: 0.3,
            mu_a: 0.6,
            eta_a: 0.5,
            eta_i: 0.5,
            eta_s: 0.6,
            xi_bsm: 0.8,
            xi_s: 0.9,
            zeta: 0.9,
            ..SystemParams::operating_point()
        }
    }

    #[test]
    fn forced_single_photons_accept_a_quarter_of_signal_heralds() {
        // With a perfect signal detector every accepted (1,1) BSM event yields
        // exactly one signal click, so the accepted fraction is the BSM factor.
        let mut p = bright();
        p.eta_s = 1.0;
        p.xi_s = 1.0;
        p.mu_spdc = 1e-12;
        let link = Link::new(&p, &SimConfig::new(1, 0, StateLabel::Plus.qubit())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400_000;
        let mut hits = 0u64;
        for _ in 0..n {
            if let Some(o) = link.evaluate(1, 1, 0, &mut rng) {
                assert_eq!(o.pedigree, Pedigree::P111);
                hits += 1;
            }
        }
        let frac = hits as f64 / n as f64;
        assert!(
            (frac - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt(),
            "{frac}"
        );
    }

    #[test]
    fn candidate_probability_matches_direct_sum() {
        let p = bright();
        let mut cfg = SimConfig::new(1, 0, StateLabel::Plus.qubit());
        cfg.pair_statistics = PairStatistics::Poissonian;
        let link = Link::new(&p, &cfg).unwrap();
        // Without darks: K ~ Poisson(la + li), candidates are K >= 2.
        let lam = p.mu_a * p.eta_a * p.xi_bsm + p.mu_spdc * p.eta_i * p.xi_bsm;
        let want = 1.0 - (-lam).exp() * (1.0 + lam);
        assert!((link.candidate_probability() - want).abs() < 1e-14);
    }

    #[test]
    fn oversized_means_are_rejected() {
        let mut p = bright();
        p.mu_a = 40.0;
        p.eta_a = 1.0;
        p.xi_bsm = 1.0;
        assert!(Link::new(&p, &SimConfig::new(1, 0, StateLabel::E.qubit())).is_err());
    }
}
