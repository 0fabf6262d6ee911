//! Acceptance suite: one line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,9` restricts the run to the listed criteria. A FAIL
//! line is a measured shortfall and only sets the exit status under
//! `ACCEPTANCE_STRICT=1`; a criterion that panics always does.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::SymmetricEigen;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use remdyna_core::agents::{Agent, AgentConfig, Control, LinearDynaModel, Variant};
use remdyna_core::buffer::PriorityBuffer;
use remdyna_core::envs::{riverswim_optimal_return, EnvConfig};
use remdyna_core::rem::{closed_form_c, Decision, PrototypeSelector, RemConfig, RemModel, SelectorConfig};
use remdyna_core::{derive_seed, rng_from_seed, Bandwidth, Transition};
use remdyna_harness::metrics::{cumulative, steps_to_ratio};
use remdyna_harness::runner::{load_records, Trace};
use remdyna_harness::{run_experiment, worker_count, ExperimentSpec, Sweep};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "coefficient oracle equivalence", Some(Duration::from_secs(10)), c1_oracle),
    (2, "forward-sample fidelity on an embedded MDP", Some(Duration::from_secs(30)), c2_fidelity),
    (3, "conditional-moment identities", None, c3_moments),
    (4, "priority buffer correctness", None, c4_buffer),
    (5, "prototype selection utility", Some(Duration::from_secs(60)), c5_selection),
    (6, "tabular gridworld ordering", Some(Duration::from_secs(15 * 60)), c6_tabular),
    (7, "riverswim ratio", Some(Duration::from_secs(30 * 60)), c7_riverswim),
    (8, "continuous gridworld ordering", Some(Duration::from_secs(45 * 60)), c8_continuous),
    (9, "n = 0 degeneracy", None, c9_degeneracy),
    (10, "linear model fixed point", None, c10_linear),
];

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    let mut crashed = false;
    for &(id, name, limit, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            crashed = true;
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = v.pass && in_time;
        let limit_txt = limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s{limit_txt}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
    }
    if crashed || (strict && !failed.is_empty()) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------------------
// 1. Streaming coefficients against the closed form

fn c1_oracle() -> Verdict {
    // two prototypes at s = 0 with outcomes s' = 1 and s' = 2; data states in
    // [0.5, 0.6] so every ρ is small and the update averages over many samples
    let hs = Bandwidth::scalar(0.04).unwrap();
    let hout = Bandwidth::isotropic(3, 1e-4).unwrap();
    let protos = vec![
        Transition::new(vec![0.0], 0, vec![1.0], 0.0, 0.9),
        Transition::new(vec![0.0], 0, vec![2.0], 0.0, 0.9),
    ];
    let p = [0.7, 0.3];
    let mut model = RemModel::with_fixed_prototypes(RemConfig::default(), protos.clone(), hs.clone(), hout.clone());
    let mut rng = rng_from_seed(101);
    let mut data = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let s = rng.random_range(0.5..0.6);
        let s_next = if rng.random::<f64>() < p[0] { 1.0 } else { 2.0 };
        let t = Transition::new(vec![s], 0, vec![s_next], 0.0, 0.9);
        model.update(&t);
        data.push(t);
    }
    let mut worst_stream = 0.0f64;
    let mut worst_analytic = 0.0f64;
    let mut parts = Vec::new();
    for (i, proto) in protos.iter().enumerate() {
        let closed = closed_form_c(&data, proto, &hs, &hout).unwrap();
        let streamed = model.prototypes()[i].c;
        // k_out between the two outcomes is e^{-1/1e-4}, i.e. zero
        let analytic = p[i];
        worst_stream = worst_stream.max((streamed - closed).abs());
        worst_analytic = worst_analytic.max((closed - analytic).abs());
        parts.push(format!("c{i}={streamed:.4}/closed {closed:.4}/analytic {analytic}"));
    }
    verdict(
        worst_stream < 0.05 && worst_analytic < 0.02,
        format!(
            "{}; max |stream-closed| {worst_stream:.4} (< 0.05), max |closed-analytic| {worst_analytic:.4} (< 0.02)",
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Forward-sample frequencies on a 3-state MDP embedded in ℝ

const P2: [[[f64; 3]; 3]; 2] = [
    [[0.7, 0.3, 0.0], [0.1, 0.8, 0.1], [0.0, 0.4, 0.6]],
    [[0.2, 0.8, 0.0], [0.0, 0.3, 0.7], [0.5, 0.0, 0.5]],
];

fn c2_fidelity() -> Verdict {
    // states 0, 1, 2 with state bandwidth 0.1 (variance 0.01): ten bandwidths apart
    let config = RemConfig {
        state_bandwidth: 0.01,
        ..RemConfig::default()
    };
    let mut model = RemModel::new(config, 1, 7);
    let mut rng = rng_from_seed(202);
    let mut data = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let s = rng.random_range(0..3);
        let a = rng.random_range(0..2);
        let next = draw(&P2[a][s], &mut rng);
        let t = Transition::new(vec![s as f64], a, vec![next as f64], 0.0, 0.9);
        model.update(&t);
        data.push(t);
    }
    // the batch estimator on the same prototypes, for the diagnostic line
    let hs = Bandwidth::scalar(0.01).unwrap();
    let hout = Bandwidth::isotropic(3, 1e-4).unwrap();
    let mut closed_err = 0.0f64;
    let mut streamed_err = 0.0f64;
    for p in model.prototypes() {
        let (s, sn) = (p.t.s[0] as usize, p.t.s_next[0] as usize);
        let truth = P2[p.t.a][s][sn];
        closed_err = closed_err.max((closed_form_c(&data, &p.t, &hs, &hout).unwrap() - truth).abs());
        streamed_err = streamed_err.max((p.c - truth).abs());
    }
    let draws = 10_000;
    let mut worst = 0.0f64;
    let mut worst_component = 0.0f64;
    for a in 0..2 {
        for s in 0..3 {
            let mut freq = [0.0; 3];
            let mut comp = [0.0; 3];
            for _ in 0..draws {
                let o = model.sample_forward(&[s as f64], a, &mut rng).unwrap();
                let k = o.s_next[0].round().clamp(0.0, 2.0) as usize;
                freq[k] += 1.0 / draws as f64;
                let j = model.sample_component(&[s as f64], a, &mut rng).unwrap();
                let kj = model.prototypes()[j].t.s_next[0].round() as usize;
                comp[kj] += 1.0 / draws as f64;
            }
            for k in 0..3 {
                worst = worst.max((freq[k] - P2[a][s][k]).abs());
                worst_component = worst_component.max((comp[k] - P2[a][s][k]).abs());
            }
        }
    }
    verdict(
        worst <= 0.02,
        format!(
            "max |freq - P| {worst:.4} (<= 0.02); component-only max error {worst_component:.4}; {} prototypes; \
             max |c - P| streamed {streamed_err:.3}, closed form {closed_err:.3}",
            model.len()
        ),
    )
}

fn draw<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

// ---------------------------------------------------------------------------
// 3. β normalisation and conditional covariance

fn c3_moments() -> Verdict {
    let mut rng = rng_from_seed(303);
    let mut worst_sum = 0.0f64;
    let mut worst_asym = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut singles_zero = true;
    let mut singles = 0;
    for inst in 0..1000 {
        let dim = rng.random_range(1..=3);
        let count = if inst % 10 == 0 { 1 } else { rng.random_range(2..=20) };
        let protos: Vec<Transition> = (0..count)
            .map(|_| {
                let s: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let sn: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                Transition::new(s, rng.random_range(0..2), sn, rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0))
            })
            .collect();
        let hs = Bandwidth::isotropic(dim, rng.random_range(0.05..1.0)).unwrap();
        let hout = Bandwidth::isotropic(dim + 2, 0.1).unwrap();
        let mut model = RemModel::with_fixed_prototypes(RemConfig::default(), protos.clone(), hs, hout);
        for i in 0..count {
            model.set_coefficients(i, rng.random_range(0.01..1.0), 1.0);
        }
        let anchor = &protos[rng.random_range(0..count)];
        let query: Vec<f64> = anchor.s.iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
        let a = anchor.a;
        let beta = model.beta(&query, a).unwrap();
        worst_sum = worst_sum.max((beta.iter().sum::<f64>() - 1.0).abs());
        let cov = model.conditional_covariance(&query, a).unwrap();
        worst_asym = worst_asym.max((&cov - cov.transpose()).amax());
        let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
        min_eig = min_eig.min(eig.min());
        if count == 1 {
            singles += 1;
            singles_zero &= cov.iter().all(|v| *v == 0.0);
        }
    }
    verdict(
        worst_sum <= 1e-10 && worst_asym <= 1e-10 && min_eig >= -1e-10 && singles_zero,
        format!(
            "max |Σβ-1| {worst_sum:.2e}, max asymmetry {worst_asym:.2e}, min eigenvalue {min_eig:.2e}, {singles} single-prototype covariances all zero: {singles_zero}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Buffer against a list-based reference

struct RefBuffer {
    cap: usize,
    items: Vec<(u64, f64, u64)>,
    cursor: usize,
    stamp: u64,
}

impl RefBuffer {
    fn insert(&mut self, item: u64, p: f64) -> (usize, u64) {
        let i = self.cursor;
        let entry = (item, p, self.stamp);
        if i == self.items.len() {
            self.items.push(entry);
        } else {
            self.items[i] = entry;
        }
        self.stamp += 1;
        self.cursor = (self.cursor + 1) % self.cap;
        (i, entry.2)
    }

    fn sample(&self, rng: &mut impl RngCore) -> usize {
        let total: f64 = self.items.iter().map(|e| e.1).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, e) in self.items.iter().enumerate() {
            acc += e.1;
            if u < acc {
                return i;
            }
        }
        self.items.len() - 1
    }
}

fn c4_buffer() -> Verdict {
    let mut rng = rng_from_seed(404);
    let mut ra = rng_from_seed(405);
    let mut rb = rng_from_seed(405);
    let cap = 97;
    let mut buf = PriorityBuffer::new(cap);
    let mut reference = RefBuffer {
        cap,
        items: Vec::new(),
        cursor: 0,
        stamp: 0,
    };
    let mut handles = Vec::new();
    let mut mismatches = 0usize;
    let ops = 100_000;
    for op in 0..ops {
        let kind = rng.random_range(0..10);
        if reference.items.is_empty() || kind < 3 {
            // integer priorities keep every partial sum exact
            let p = rng.random_range(1..=20) as f64;
            let slot = buf.insert(op as u64, p);
            let (ri, rs) = reference.insert(op as u64, p);
            mismatches += usize::from(slot.index != ri || slot.stamp != rs);
            handles.push(slot);
        } else if kind < 6 {
            let slot = handles[rng.random_range(0..handles.len())];
            let p = rng.random_range(1..=20) as f64;
            let applied = buf.update_priority(slot, p);
            let current = reference.items[slot.index].2 == slot.stamp;
            mismatches += usize::from(applied != current);
            if current {
                reference.items[slot.index].1 = p;
            }
        } else if kind < 9 {
            let (slot, item) = buf.sample(&mut ra).unwrap();
            let ri = reference.sample(&mut rb);
            mismatches += usize::from(slot.index != ri || *item != reference.items[ri].0);
        } else {
            let (slot, _) = buf.sample_uniform(&mut ra).unwrap();
            let ri = rb.random_range(0..reference.items.len());
            mismatches += usize::from(slot.index != ri);
        }
        if op % 1000 == 0 {
            let same = reference
                .items
                .iter()
                .enumerate()
                .all(|(i, e)| buf.get(i) == Some(&e.0) && buf.priority(i) == e.1);
            mismatches += usize::from(!same);
        }
    }

    let p13 = chi_square_proportional(&[1.0, 3.0], 20_000, 406);
    let puni = chi_square_proportional(&[2.0; 8], 40_000, 407);
    let uni = chi_square_uniform(8, 40_000, 408);
    verdict(
        mismatches == 0 && p13 > 0.01 && puni > 0.01 && uni > 0.01,
        format!(
            "{ops} ops, {mismatches} mismatches; chi-square p: priorities {{1,3}} {p13:.3}, equal priorities {puni:.3}, uniform draw {uni:.3} (each > 0.01)"
        ),
    )
}

fn chi_square_proportional(priorities: &[f64], draws: usize, seed: u64) -> f64 {
    let mut buf = PriorityBuffer::new(priorities.len());
    for (i, p) in priorities.iter().enumerate() {
        buf.insert(i, *p);
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0.0; priorities.len()];
    for _ in 0..draws {
        counts[*buf.sample(&mut rng).unwrap().1] += 1.0;
    }
    let total: f64 = priorities.iter().sum();
    let expected: Vec<f64> = priorities.iter().map(|p| p / total * draws as f64).collect();
    chi_square_p(&counts, &expected)
}

fn chi_square_uniform(n: usize, draws: usize, seed: u64) -> f64 {
    let mut buf = PriorityBuffer::new(n);
    for i in 0..n {
        buf.insert(i, 1.0 + i as f64);
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0.0; n];
    for _ in 0..draws {
        counts[*buf.sample_uniform(&mut rng).unwrap().1] += 1.0;
    }
    chi_square_p(&counts, &vec![draws as f64 / n as f64; n])
}

fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

// ---------------------------------------------------------------------------
// 5. Prototype selection

fn random_policy_stream(env: &EnvConfig, steps: usize, seed: u64) -> Vec<Transition> {
    let mut env = env.build().unwrap();
    let mut rng = rng_from_seed(seed);
    let mut s = env.reset(&mut rng);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = rng.random_range(0..env.num_actions());
        let st = env.step(a, &mut rng);
        out.push(Transition::new(s, a, st.s_next.clone(), st.r, st.gamma));
        s = if st.episode_end { env.reset(&mut rng) } else { st.s_next };
    }
    out
}

fn c5_selection() -> Verdict {
    let env = EnvConfig::ContinuousGridworld {
        step_noise_std: 0.1,
        success_prob: 0.9,
    };
    let config = SelectorConfig {
        budget: 50,
        ..SelectorConfig::default()
    };
    let mut wins = 0;
    let mut swaps = 0usize;
    let mut min_gain = f64::INFINITY;
    for stream in 0..30u64 {
        let data = random_policy_stream(&env, 5000, derive_seed(505, stream));
        let mut sel = PrototypeSelector::new(config.clone(), stream);
        let mut utility = f64::NAN;
        for t in &data {
            let before = if sel.is_full() { utility } else { f64::NAN };
            let d = sel.consider(t);
            if !matches!(d, Decision::Rejected) {
                utility = sel.utility();
            }
            if let Decision::Swapped(_) = d {
                swaps += 1;
                min_gain = min_gain.min(utility - before);
            }
        }
        let mut rng = rng_from_seed(derive_seed(506, stream));
        let subset: Vec<Transition> = sample_indices(&mut rng, data.len(), 50)
            .into_iter()
            .map(|i| data[i].clone())
            .collect();
        if sel.utility() >= sel.utility_of(&subset) {
            wins += 1;
        }
    }
    verdict(
        wins >= 27 && swaps > 0 && min_gain > 0.01,
        format!("selected >= random in {wins}/30 streams (>= 27); {swaps} swaps, smallest recomputed gain {min_gain:.10} (> 0.01)"),
    )
}

// ---------------------------------------------------------------------------
// 6-8. Learning experiments through the harness

const PRE_SWEEP_ALPHAS: [f64; 3] = [0.0625, 0.25, 1.0];
const RUNS: usize = 30;
const STEPS: usize = 20_000;

struct Experiment {
    env: EnvConfig,
    template: AgentConfig,
    pre_runs: usize,
    pre_steps: usize,
    seed: u64,
}

struct Outcome {
    variant: Variant,
    alpha: f64,
    /// Per-run reward traces.
    traces: Vec<Vec<f64>>,
}

impl Outcome {
    fn finals(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.iter().sum()).collect()
    }

    fn final_mean_se(&self) -> (f64, f64) {
        mean_se(&self.finals())
    }

    fn mean_trace(&self) -> Vec<f64> {
        let k = self.traces.len() as f64;
        let mut m = vec![0.0; self.traces[0].len()];
        for t in &self.traces {
            for (a, b) in m.iter_mut().zip(t) {
                *a += b / k;
            }
        }
        m
    }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn run_spec(spec: &ExperimentSpec) -> Vec<(usize, AgentConfig, Vec<Vec<f64>>)> {
    let manifest = run_experiment(spec, worker_count()).expect("experiment runs");
    assert_eq!(manifest.failed().count(), 0, "jobs failed");
    let (_, records) = load_records(&spec.output_dir).unwrap();
    let mut groups: Vec<(usize, AgentConfig, Vec<Vec<f64>>)> = Vec::new();
    for (job, trace) in records {
        let Trace::Rewards(r) = trace else { unreachable!() };
        match groups.iter_mut().find(|g| g.0 == job.config_index) {
            Some(g) => g.2.push(r),
            None => groups.push((job.config_index, job.config, vec![r])),
        }
    }
    groups
}

impl Experiment {
    fn spec(&self, dir: &Path, sweep: Sweep, runs: usize, steps: usize, seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            env: self.env.clone(),
            agent: self.template.clone(),
            sweep,
            runs,
            steps,
            master_seed: seed,
            output_dir: dir.to_path_buf(),
            checkpoint_every: None,
        }
    }

    /// Best stepsize per variant from a short sweep, then the full runs.
    fn run(&self, variants: &[Variant]) -> Vec<Outcome> {
        let dir = tempfile::tempdir().unwrap();
        let pre = self.spec(
            &dir.path().join("pre"),
            Sweep {
                variant: variants.to_vec(),
                alpha: PRE_SWEEP_ALPHAS.to_vec(),
                ..Sweep::default()
            },
            self.pre_runs,
            self.pre_steps,
            derive_seed(self.seed, 1),
        );
        let groups = run_spec(&pre);
        let mut out = Vec::new();
        for (k, &v) in variants.iter().enumerate() {
            let best = groups
                .iter()
                .filter(|g| g.1.variant == v)
                .map(|g| (g.1.alpha, g.2.iter().map(|t| t.iter().sum::<f64>()).sum::<f64>()))
                .fold((f64::NAN, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            let main = self.spec(
                &dir.path().join(format!("main_{k}")),
                Sweep {
                    variant: vec![v],
                    alpha: vec![best.0],
                    ..Sweep::default()
                },
                RUNS,
                STEPS,
                derive_seed(self.seed, 2),
            );
            let mut g = run_spec(&main);
            out.push(Outcome {
                variant: v,
                alpha: best.0,
                traces: g.remove(0).2,
            });
        }
        out
    }
}

fn describe(o: &Outcome) -> String {
    let (m, se) = o.final_mean_se();
    format!("{} (α={}) {m:.1}±{se:.1}", o.variant, o.alpha)
}

const ER_VARIANTS: [Variant; 3] = [
    Variant::Er(Control::Random),
    Variant::Er(Control::Prioritized),
    Variant::Er(Control::Predecessors),
];

fn c6_tabular() -> Verdict {
    let exp = Experiment {
        env: EnvConfig::TabularGridworld {
            size: 12,
            stochastic: true,
            layout: None,
        },
        template: AgentConfig {
            n: 5,
            ..AgentConfig::default()
        },
        pre_runs: 5,
        pre_steps: STEPS,
        seed: 606,
    };
    let mut variants = vec![Variant::TabularDyna(Control::Predecessors)];
    variants.extend(ER_VARIANTS);
    let outcomes = exp.run(&variants);
    let (dm, dse) = outcomes[0].final_mean_se();
    let pass = outcomes[1..].iter().all(|o| {
        let (m, se) = o.final_mean_se();
        dm - dse > m + se
    });
    verdict(pass, outcomes.iter().map(describe).collect::<Vec<_>>().join("; "))
}

fn c7_riverswim() -> Verdict {
    let noise_std = 0.02f64.sqrt();
    let exp = Experiment {
        env: EnvConfig::RiverSwim { noise_std },
        // optimistic weights supply the exploration; ε-greedy with ε = 0.1
        // alone caps any agent at about 0.8 of optimal on this domain
        template: AgentConfig {
            n: 10,
            epsilon: 0.0,
            ..AgentConfig::default()
        },
        pre_runs: 5,
        pre_steps: 5000,
        seed: 707,
    };
    let mut variants = vec![Variant::RemDyna(Control::Predecessors)];
    variants.extend(ER_VARIANTS);
    let outcomes = exp.run(&variants);
    let baseline = riverswim_optimal_return(STEPS, 30, noise_std, 708) / STEPS as f64;

    let rem = &outcomes[0];
    let reached = rem
        .traces
        .iter()
        .filter(|t| steps_to_ratio(t, baseline, &[0.85])[0].1.is_some())
        .count();
    let mut parts = vec![format!(
        "{}: 0.85 reached in {reached}/{RUNS} runs (> {}), final ratio {:.3}",
        describe(rem),
        RUNS / 2,
        final_ratio(&rem.mean_trace(), baseline)
    )];
    let mut er_ok = true;
    for o in &outcomes[1..] {
        let mean = o.mean_trace();
        let hit = steps_to_ratio(&mean, baseline, &[0.85])[0].1;
        er_ok &= hit.is_none();
        parts.push(format!(
            "{}: mean reaches 0.85 at {hit:?}, final ratio {:.3}",
            describe(o),
            final_ratio(&mean, baseline)
        ));
    }
    verdict(reached > RUNS / 2 && er_ok, parts.join("; "))
}

fn final_ratio(trace: &[f64], baseline: f64) -> f64 {
    cumulative(trace).last().unwrap() / (baseline * trace.len() as f64)
}

fn c8_continuous() -> Verdict {
    let exp = Experiment {
        env: EnvConfig::ContinuousGridworld {
            step_noise_std: 0.1,
            success_prob: 0.9,
        },
        template: AgentConfig {
            n: 10,
            ..AgentConfig::default()
        },
        pre_runs: 5,
        pre_steps: 5000,
        seed: 808,
    };
    let outcomes = exp.run(&[Variant::RemDyna(Control::Predecessors), Variant::Er(Control::Random)]);
    let (rm, rse) = outcomes[0].final_mean_se();
    let (em, ese) = outcomes[1].final_mean_se();
    verdict(
        rm - rse > em + ese,
        outcomes.iter().map(describe).collect::<Vec<_>>().join("; "),
    )
}

// ---------------------------------------------------------------------------
// 9. Without planning every agent is Q-learning

fn c9_degeneracy() -> Verdict {
    let envs = [
        EnvConfig::TabularGridworld {
            size: 12,
            stochastic: true,
            layout: None,
        },
        EnvConfig::ContinuousGridworld {
            step_noise_std: 0.1,
            success_prob: 0.9,
        },
        EnvConfig::RiverSwim {
            noise_std: 0.02f64.sqrt(),
        },
    ];
    let mut checked = 0;
    let mut diverged = Vec::new();
    for env_cfg in &envs {
        for v in Variant::all() {
            if v == Variant::Q {
                continue;
            }
            let seed = 909;
            let mut env_q = env_cfg.build().unwrap();
            let mut env_v = env_cfg.build().unwrap();
            let base = AgentConfig {
                n: 0,
                alpha: 0.25,
                ..AgentConfig::default()
            };
            let mut q = Agent::new(AgentConfig { variant: Variant::Q, ..base.clone() }, env_q.as_ref(), seed);
            let mut agent = Agent::new(AgentConfig { variant: v, ..base }, env_v.as_ref(), seed);
            let mut rq = rng_from_seed(derive_seed(seed, 0));
            let mut rv = rng_from_seed(derive_seed(seed, 0));
            let mut sq = env_q.reset(&mut rq);
            let mut sv = env_v.reset(&mut rv);
            for step in 0..1000 {
                let aq = q.act(&sq);
                let av = agent.act(&sv);
                let oq = env_q.step(aq, &mut rq);
                let ov = env_v.step(av, &mut rv);
                q.observe(&Transition::new(sq, aq, oq.s_next.clone(), oq.r, oq.gamma));
                agent.observe(&Transition::new(sv, av, ov.s_next.clone(), ov.r, ov.gamma));
                if q.q().weights() != agent.q().weights() {
                    diverged.push(format!("{} on {} at step {step}", v, env_cfg.name()));
                    break;
                }
                sq = if oq.episode_end { env_q.reset(&mut rq) } else { oq.s_next };
                sv = if ov.episode_end { env_v.reset(&mut rv) } else { ov.s_next };
            }
            checked += 1;
        }
    }
    verdict(
        diverged.is_empty(),
        format!("{checked} variant/env pairs, 1000 steps each; diverged: {diverged:?}"),
    )
}

// ---------------------------------------------------------------------------
// 10. Linear expectation model on a deterministic chain

fn c10_linear() -> Verdict {
    // action 0 cycles 0→1→2→0, action 1 cycles the other way
    let next = [[1usize, 2, 0], [2, 0, 1]];
    let mut model = LinearDynaModel::new(3, 2, 0.125);
    let mut rng = rng_from_seed(1010);
    for _ in 0..2000 {
        let s = rng.random_range(0..3);
        let a = rng.random_range(0..2);
        let sn = next[a][s];
        model.update(&[s], a, 0.0, &[sn], &[sn]);
    }
    let mut worst = 0.0f64;
    for a in 0..2 {
        for j in 0..3 {
            for i in 0..3 {
                let target = if next[a][j] == i { 1.0 } else { 0.0 };
                worst = worst.max((model.forward_entry(a, i, j) - target).abs());
            }
        }
    }
    verdict(worst < 1e-3, format!("max |F_a - permutation| {worst:.2e} (< 1e-3)"))
}
