//! Independent reference solutions: the closed-form cluster number for the
//! constant kernel and a stochastic particle simulation of coagulation with injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::KernelSpec;
use crate::ode::{MomentRecord, SourceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("event budget of {0} exceeded")]
    EventBudget(u64),
    #[error("kernel exceeds its majorant by a factor {ratio} at ({x}, {y})")]
    MajorantViolated { x: u64, y: u64, ratio: f64 },
}

/// Solution of `dm/dt = n_rate - (k/2) m²` with `m(0) = m0_initial`.
pub fn constant_kernel_m0(t: f64, m0_initial: f64, k: f64, n_rate: f64) -> Result<f64, OracleError> {
    if !(t >= 0.0 && m0_initial >= 0.0 && k > 0.0 && n_rate > 0.0) {
        return Err(OracleError::Invalid(format!(
            "t = {t}, m0 = {m0_initial}, k = {k}, rate = {n_rate}"
        )));
    }
    let cs = (2.0 * n_rate / k).sqrt();
    let r = m0_initial / cs;
    let theta = 0.5 * k * cs * t;
    Ok(if r < 1.0 {
        cs * (theta + r.atanh()).tanh()
    } else if r == 1.0 {
        cs
    } else {
        // coth branch
        let acoth = 0.5 * ((r + 1.0) / (r - 1.0)).ln();
        cs / (theta + acoth).tanh()
    })
}

#[derive(Debug, Clone)]
pub struct StochasticConfig {
    pub kernel: KernelSpec,
    /// Injection rates per unit volume.
    pub source: SourceSpec,
    pub volume: f64,
    pub t_end: f64,
    pub seed: u64,
    pub sample_times: Vec<f64>,
    pub max_events: u64,
}

impl StochasticConfig {
    pub fn new(kernel: KernelSpec, volume: f64, t_end: f64, seed: u64) -> Self {
        Self {
            kernel,
            source: SourceSpec::monomer(),
            volume,
            t_end,
            seed,
            sample_times: Vec::new(),
            max_events: 2_000_000_000,
        }
    }
}

/// Fenwick tree over cluster sizes `1..=len`.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(len: usize) -> Self {
        Self {
            tree: vec![0.0; len + 1],
        }
    }

    fn len(&self) -> usize {
        self.tree.len() - 1
    }

    fn add(&mut self, mut i: usize, v: f64) {
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut i = self.len();
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    /// Smallest index whose prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let mut pos = 0;
        let mut step = self.len().next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.len() && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        (pos + 1).min(self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Injection { size: u64 },
    Coagulation { x: u64, y: u64 },
    /// Proposal rejected by thinning; the state is unchanged.
    Null,
}

/// Majorant `scale (u^α v^β + u^β v^α)` of the kernel.
#[derive(Debug, Clone, Copy)]
struct Majorant {
    alpha: f64,
    beta: f64,
    scale: f64,
}

fn majorant(k: &KernelSpec) -> Majorant {
    if let Some(s) = k.separable() {
        return Majorant {
            alpha: s.alpha,
            beta: s.beta,
            scale: s.scale,
        };
    }
    let alpha = k.sum_exponent();
    let beta = -k.lambda();
    // sup over the shape variable of K / (x^α y^β + x^β y^α), sampled on a log grid
    let mut sup: f64 = 0.0;
    for i in 0..=2000 {
        let s = 0.5 * 10f64.powf(-12.0 * i as f64 / 2000.0);
        let base = s.powf(alpha) * (1.0 - s).powf(beta) + s.powf(beta) * (1.0 - s).powf(alpha);
        let f = k.rate(s, 1.0 - s);
        if base > 0.0 && f.is_finite() {
            sup = sup.max(f / base);
        }
    }
    Majorant {
        alpha,
        beta,
        scale: 1.05 * sup,
    }
}

/// Marcus–Lushnikov process with injection, simulated by thinning.
pub struct Stochastic {
    kernel: KernelSpec,
    maj: Majorant,
    volume: f64,
    rng: ChaCha8Rng,
    counts: Vec<u64>,
    wa: Fenwick,
    wb: Fenwick,
    clusters: u64,
    mass: u64,
    injected: u64,
    t: f64,
    inj_rate: f64,
    inj_cum: Vec<(u64, f64)>,
    events: u64,
    updates: u64,
}

impl Stochastic {
    pub fn new(cfg: &StochasticConfig) -> Result<Self, OracleError> {
        if !(cfg.volume > 0.0 && cfg.volume.is_finite()) {
            return Err(OracleError::Invalid(format!("volume {}", cfg.volume)));
        }
        if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
            return Err(OracleError::Invalid(format!("t_end {}", cfg.t_end)));
        }
        let total = cfg.source.number_rate();
        let mut acc = 0.0;
        let inj_cum = cfg
            .source
            .entries()
            .iter()
            .map(|&(n, r)| {
                acc += r / total;
                (n as u64, acc)
            })
            .collect();
        let cap = 64.max(cfg.source.support() + 1);
        Ok(Self {
            kernel: cfg.kernel.clone(),
            maj: majorant(&cfg.kernel),
            volume: cfg.volume,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            counts: vec![0; cap + 1],
            wa: Fenwick::new(cap),
            wb: Fenwick::new(cap),
            clusters: 0,
            mass: 0,
            injected: 0,
            t: 0.0,
            inj_rate: cfg.volume * total,
            inj_cum,
            events: 0,
            updates: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn cluster_count(&self) -> u64 {
        self.clusters
    }

    pub fn total_mass(&self) -> u64 {
        self.mass
    }

    pub fn injected_mass(&self) -> u64 {
        self.injected
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// `(size, count)` for occupied sizes.
    pub fn occupied(&self) -> Vec<(u64, u64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u64, c))
            .collect()
    }

    fn grow(&mut self, size: usize) {
        let mut cap = self.wa.len();
        while cap < size {
            cap *= 2;
        }
        self.counts.resize(cap + 1, 0);
        self.rebuild(cap);
    }

    fn rebuild(&mut self, cap: usize) {
        self.wa = Fenwick::new(cap);
        self.wb = Fenwick::new(cap);
        for i in 1..=cap {
            let c = self.counts[i];
            if c > 0 {
                let x = i as f64;
                self.wa.add(i, c as f64 * x.powf(self.maj.alpha));
                self.wb.add(i, c as f64 * x.powf(self.maj.beta));
            }
        }
    }

    fn change(&mut self, size: u64, delta: i64) {
        let i = size as usize;
        if i > self.wa.len() {
            self.grow(i);
        }
        self.counts[i] = (self.counts[i] as i64 + delta) as u64;
        let x = size as f64;
        self.wa.add(i, delta as f64 * x.powf(self.maj.alpha));
        self.wb.add(i, delta as f64 * x.powf(self.maj.beta));
        self.updates += 1;
        if self.updates % (1 << 16) == 0 {
            let cap = self.wa.len();
            self.rebuild(cap);
        }
    }

    fn coag_bound(&self) -> f64 {
        if self.clusters < 2 {
            return 0.0;
        }
        self.maj.scale * self.wa.total().max(0.0) * self.wb.total().max(0.0) / self.volume
    }

    /// Time of the next proposal, without applying it.
    fn next_time(&mut self) -> (f64, f64) {
        let rc = self.coag_bound();
        let total = rc + self.inj_rate;
        if total <= 0.0 {
            return (f64::INFINITY, rc);
        }
        let u: f64 = self.rng.gen();
        (self.t - (1.0 - u).ln() / total, rc)
    }

    fn apply(&mut self, rc: f64) -> Result<Event, OracleError> {
        self.events += 1;
        let total = rc + self.inj_rate;
        let u: f64 = self.rng.gen::<f64>() * total;
        if u >= rc {
            let v: f64 = self.rng.gen();
            let size = self
                .inj_cum
                .iter()
                .find(|e| v < e.1)
                .map_or(self.inj_cum.last().map_or(1, |e| e.0), |e| e.0);
            self.change(size, 1);
            self.clusters += 1;
            self.mass += size;
            self.injected += size;
            return Ok(Event::Injection { size });
        }
        let ua: f64 = self.rng.gen::<f64>() * self.wa.total();
        let ub: f64 = self.rng.gen::<f64>() * self.wb.total();
        let i = self.wa.find(ua) as u64;
        let j = self.wb.find(ub) as u64;
        let (ci, cj) = (self.counts[i as usize], self.counts[j as usize]);
        if ci == 0 || cj == 0 {
            return Ok(Event::Null);
        }
        if i == j {
            // the same individual is drawn twice with probability 1/n_i
            let same: f64 = self.rng.gen();
            if same * (ci as f64) < 1.0 {
                return Ok(Event::Null);
            }
            if ci < 2 {
                return Ok(Event::Null);
            }
        }
        let (x, y) = (i as f64, j as f64);
        let bound = self.maj.scale
            * (x.powf(self.maj.alpha) * y.powf(self.maj.beta)
                + x.powf(self.maj.beta) * y.powf(self.maj.alpha));
        let ratio = self.kernel.rate(x, y) / bound;
        if ratio > 1.0 + 1e-9 {
            return Err(OracleError::MajorantViolated { x: i, y: j, ratio });
        }
        let acc: f64 = self.rng.gen();
        if acc >= ratio {
            return Ok(Event::Null);
        }
        self.change(i, -1);
        self.change(j, -1);
        self.change(i + j, 1);
        self.clusters -= 1;
        Ok(Event::Coagulation { x: i, y: j })
    }

    /// Advances by one proposal (accepted or not). Returns `None` when no event can occur.
    pub fn step(&mut self) -> Result<Option<Event>, OracleError> {
        let (t_next, rc) = self.next_time();
        if !t_next.is_finite() {
            return Ok(None);
        }
        self.t = t_next;
        self.apply(rc).map(Some)
    }

    fn record(&self, t: f64) -> MomentRecord {
        let v = self.volume;
        let a = self.kernel.sum_exponent();
        let b = 1.0 - self.kernel.lambda();
        let mut r = MomentRecord {
            t,
            m0: 0.0,
            m1: 0.0,
            m_gl: 0.0,
            m_one_minus_lambda: 0.0,
            m2: 0.0,
            leaked_mass: 0.0,
            leaked_number: 0.0,
        };
        for (size, count) in self.occupied() {
            let x = size as f64;
            let c = count as f64 / v;
            r.m0 += c;
            r.m1 += x * c;
            r.m_gl += x.powf(a) * c;
            r.m_one_minus_lambda += x.powf(b) * c;
            r.m2 += x * x * c;
        }
        r
    }

    /// Concentrations `count / V` on sizes `1..=n`.
    pub fn concentrations(&self, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n];
        for (size, count) in self.occupied() {
            if (size as usize) <= n {
                c[size as usize - 1] = count as f64 / self.volume;
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct StochasticTrajectory {
    pub samples: Vec<MomentRecord>,
    /// `(size, count)` pairs at each sample time.
    pub sample_counts: Vec<Vec<(u64, u64)>>,
    pub final_counts: Vec<(u64, u64)>,
    pub final_time: f64,
    pub events: u64,
    pub injected_mass: u64,
    pub total_mass: u64,
}

/// Runs one realization to `t_end`, sampling moments (per unit volume) at the
/// requested times and at `t_end`.
pub fn stochastic_run(cfg: &StochasticConfig) -> Result<StochasticTrajectory, OracleError> {
    let mut sim = Stochastic::new(cfg)?;
    let mut times: Vec<f64> = cfg
        .sample_times
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= cfg.t_end)
        .chain(std::iter::once(cfg.t_end))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut samples = Vec::with_capacity(times.len());
    let mut sample_counts = Vec::with_capacity(times.len());
    let mut next = 0;
    loop {
        let (t_next, rc) = sim.next_time();
        while next < times.len() && times[next] < t_next {
            samples.push(sim.record(times[next]));
            sample_counts.push(sim.occupied());
            next += 1;
        }
        if next == times.len() {
            break;
        }
        if sim.events >= cfg.max_events {
            return Err(OracleError::EventBudget(cfg.max_events));
        }
        sim.t = t_next;
        sim.apply(rc)?;
    }
    sim.t = cfg.t_end;
    Ok(StochasticTrajectory {
        samples,
        sample_counts,
        final_counts: sim.occupied(),
        final_time: cfg.t_end,
        events: sim.events,
        injected_mass: sim.injected,
        total_mass: sim.mass,
    })
}
