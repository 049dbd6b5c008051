//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line; the
//! process exits non-zero if any criterion fails.
//!
//! Reference values come from oracles written here, independent of the
//! library: a dense two-qubit simulator, a Kraus-operator density-matrix
//! evolution, nalgebra's SVD and the closed-form Student-t distribution for
//! integer degrees of freedom.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use qpa_core::attention::{MlpVariant, ScorerKind};
use qpa_core::data::{split, synthetic_dataset, SyntheticSpec};
use qpa_core::lab::claims::shot_study_point;
use qpa_core::lab::{
    asymmetry_witness, default_grid, encoding_slice_rank, full_circuit_rank, kernel_enc3, mixed_partial_log_kernel,
    non_monotonicity_witness, score_jacobian, shot_study,
};
use qpa_core::nn::{cross_entropy, ScoreMode, VitConfig, VitModel};
use qpa_core::qpa::{score_encoding_only, QpaCircuit, QpaParams, ScoreKernel};
use qpa_core::quantum::NoiseChannel;
use qpa_core::stats::paired_t_test;
use qpa_core::train::{evaluate, train_loop, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// ---------------------------------------------------------------------------
// Two-qubit oracle. Basis index 2·b0 + b1; qubit 0 carries the query.

type State = [C; 4];
type Op = [[C; 2]; 2];
type Rho = [[C; 4]; 4];

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn ry(t: f64) -> Op {
    let (s, co) = (0.5 * t).sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

fn rx(t: f64) -> Op {
    let (s, co) = (0.5 * t).sin_cos();
    [[c(co), C::new(0.0, -s)], [C::new(0.0, -s), c(co)]]
}

fn mask(qubit: usize) -> usize {
    if qubit == 0 {
        2
    } else {
        1
    }
}

fn apply(s: State, g: &Op, qubit: usize) -> State {
    let m = mask(qubit);
    let mut out = s;
    for i in (0..4).filter(|i| i & m == 0) {
        let (a0, a1) = (s[i], s[i | m]);
        out[i] = g[0][0] * a0 + g[0][1] * a1;
        out[i | m] = g[1][0] * a0 + g[1][1] * a1;
    }
    out
}

fn cnot(s: State, control: usize, target: usize) -> State {
    let mut out = s;
    for i in (0..4).filter(|i| i & mask(control) != 0) {
        out[i] = s[i ^ mask(target)];
    }
    out
}

fn lambdas(p: &QpaParams<f64>) -> (f64, f64) {
    (p.theta_s + p.gamma_d + p.gamma_s, p.gamma_s - p.gamma_d)
}

fn phis(q: f64, k: f64, p: &QpaParams<f64>) -> (f64, f64) {
    let (l1, l2) = lambdas(p);
    (FRAC_PI_4 + l1 * q + l2 * k, FRAC_PI_4 + l2 * q + l1 * k)
}

fn encoded(q: f64, k: f64, p: &QpaParams<f64>) -> State {
    let (f0, f1) = phis(q, k, p);
    let zero = [c(1.0), c(0.0), c(0.0), c(0.0)];
    apply(apply(zero, &ry(f0), 0), &ry(f1), 1)
}

/// Full circuit; `key_first` swaps the roles of the two CNOTs.
fn oracle_state(q: f64, k: f64, p: &QpaParams<f64>, key_first: bool) -> State {
    let (first, second) = if key_first { ((1, 0), (0, 1)) } else { ((0, 1), (1, 0)) };
    let mut s = cnot(encoded(q, k, p), first.0, first.1);
    s = apply(s, &ry(p.alpha * (q + k)), 1);
    s = cnot(s, second.0, second.1);
    apply(apply(s, &rx(2.0 * p.beta), 0), &rx(2.0 * p.beta), 1)
}

fn agree(s: &State) -> f64 {
    s[0].norm_sqr() + s[3].norm_sqr()
}

fn oracle_mu(q: f64, k: f64, p: &QpaParams<f64>) -> f64 {
    agree(&oracle_state(q, k, p, false))
}

fn embed(g: &Op, qubit: usize) -> Rho {
    let m = mask(qubit);
    let mut out = [[c(0.0); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i & !m == j & !m {
                *v = g[usize::from(i & m != 0)][usize::from(j & m != 0)];
            }
        }
    }
    out
}

fn kraus(channel: NoiseChannel, g: f64) -> Vec<Op> {
    let (o, i) = (c(0.0), C::new(0.0, 1.0));
    let id = [[c(1.0), o], [o, c(1.0)]];
    let x = [[o, c(1.0)], [c(1.0), o]];
    let y = [[o, -i], [i, o]];
    let z = [[c(1.0), o], [o, c(-1.0)]];
    let scale = |m: Op, w: f64| m.map(|r| r.map(|v| v * w));
    match channel {
        NoiseChannel::BitFlip => vec![scale(id, (1.0 - g).sqrt()), scale(x, g.sqrt())],
        NoiseChannel::PhaseFlip => vec![scale(id, (1.0 - g).sqrt()), scale(z, g.sqrt())],
        NoiseChannel::Depolarizing => {
            let w = (g / 3.0).sqrt();
            vec![scale(id, (1.0 - g).sqrt()), scale(x, w), scale(y, w), scale(z, w)]
        }
        NoiseChannel::AmplitudeDamping => {
            vec![[[c(1.0), o], [o, c((1.0 - g).sqrt())]], [[o, c(g.sqrt())], [o, o]]]
        }
    }
}

/// `Σ K ρ K†` with every Kraus operator acting on `qubit`.
fn channel_on(rho: &Rho, ops: &[Op], qubit: usize) -> Rho {
    let mut out = [[c(0.0); 4]; 4];
    for op in ops {
        let k = embed(op, qubit);
        for (a, row) in out.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                for i in 0..4 {
                    for j in 0..4 {
                        *v += k[a][i] * rho[i][j] * k[b][j].conj();
                    }
                }
            }
        }
    }
    out
}

fn oracle_noisy_mu(q: f64, k: f64, p: &QpaParams<f64>, channel: NoiseChannel, g: f64) -> f64 {
    let s = oracle_state(q, k, p, false);
    let rho: Rho = std::array::from_fn(|i| std::array::from_fn(|j| s[i] * s[j].conj()));
    let ops = kraus(channel, g);
    let rho = channel_on(&channel_on(&rho, &ops, 0), &ops, 1);
    rho[0][0].re + rho[3][3].re
}

// ---------------------------------------------------------------------------
// Shared helpers.

struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn within(&mut self, started: Instant, limit: Duration) {
        let t = started.elapsed();
        self.require(t < limit, format!("runtime {:.2}s < {}s", t.as_secs_f64(), limit.as_secs()));
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_params(r: &mut ChaCha8Rng, half: f64) -> QpaParams<f64> {
    QpaParams::from_array(std::array::from_fn(|_| r.random_range(-half..half)))
}

/// Parameters with prescribed `(λ1, λ2)` and random `θs`, `α`, `β`.
fn params_for(r: &mut ChaCha8Rng, l1: f64, l2: f64) -> QpaParams<f64> {
    let theta_s = r.random_range(-1.0..1.0);
    let rest = l1 - theta_s;
    QpaParams::new(theta_s, 0.5 * (rest - l2), 0.5 * (rest + l2), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn circuit() -> QpaCircuit {
    QpaCircuit::default()
}

// ---------------------------------------------------------------------------
// Criteria.

fn closed_form_encoding() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    let mut r = rng(1);
    let (mut vs_formula, mut vs_library, mut vs_state) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let p = uniform_params(&mut r, 2.0);
        let (q, k) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let sim = agree(&encoded(q, k, &p));
        let (wd, ws) = (p.theta_s + 2.0 * p.gamma_d, p.theta_s + 2.0 * p.gamma_s);
        let formula = 0.5 + 0.25 * (wd * (q - k)).cos() - 0.25 * (ws * (q + k)).sin();
        let lib_state = circuit().encoding_state(q, k, &p).unwrap().probabilities();
        vs_formula = vs_formula.max((sim - formula).abs());
        vs_library = vs_library.max((score_encoding_only(q, k, &p) - sim).abs());
        vs_state = vs_state.max((lib_state[0] + lib_state[3] - sim).abs());
    }
    ck.require(vs_formula <= 1e-12, format!("simulation vs two-frequency formula {vs_formula:.1e}"));
    ck.require(vs_library <= 1e-12, format!("library closed form vs simulation {vs_library:.1e}"));
    ck.require(vs_state <= 1e-12, format!("library statevector vs simulation {vs_state:.1e}"));
    ck.within(start, Duration::from_secs(5));
    ck
}

fn kernel_equivalence() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = uniform_params(&mut r, 2.0);
        let mut x = || (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let (x1, x2) = (x(), x());
        let (a, b) = (encoded(x1.0, x1.1, &p), encoded(x2.0, x2.1, &p));
        let fidelity = a.iter().zip(&b).map(|(u, v)| u.conj() * v).sum::<C>().norm_sqr();
        worst = worst.max((kernel_enc3(x1, x2, &p) - fidelity).abs());
    }
    ck.require(worst <= 1e-12, format!("closed form vs statevector fidelity {worst:.1e}"));

    let (mut trials, mut negative, mut worst_rel, mut separable) = (0, 0, 0.0f64, 0.0f64);
    while trials < 500 {
        let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let (l1, l2) = (sign * r.random_range(0.05..1.5), sign * r.random_range(0.05..1.5));
        let p = params_for(&mut r, l1, l2);
        let pt = qpa_core::lab::KernelPoint::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let (ha, hb) = (0.5 * (l1 * pt.delta_q + l2 * pt.delta_k), 0.5 * (l2 * pt.delta_q + l1 * pt.delta_k));
        if (ha.cos() * hb.cos()).powi(2) < 1e-2 {
            continue;
        }
        trials += 1;
        let exact = -0.5 * l1 * l2 * (ha.cos().powi(-2) + hb.cos().powi(-2));
        let got = mixed_partial_log_kernel(&p, pt).unwrap();
        negative += usize::from(got < 0.0);
        worst_rel = worst_rel.max((got - exact).abs() / exact.abs().max(1.0));
        let sep = params_for(&mut r, l1, 0.0);
        separable = separable.max(mixed_partial_log_kernel(&sep, pt).unwrap().abs());
    }
    ck.require(negative == trials, format!("mixed log-partial negative at {negative}/{trials} points with λ1λ2 > 0"));
    ck.require(worst_rel <= 1e-5, format!("mixed log-partial vs analytic {worst_rel:.1e}"));
    ck.require(separable < 1e-6, format!("|mixed log-partial| at λ2 = 0 is {separable:.1e}"));
    ck.within(start, Duration::from_secs(10));
    ck
}

fn degenerate_case() -> Check {
    let mut ck = Check::new();
    let mut r = rng(3);
    // Error of each (CNOT order, projected qubit) hypothesis.
    let mut errors = [[0.0f64; 2]; 2];
    let mut library = 0.0f64;
    for _ in 0..2_000 {
        let mut p = uniform_params(&mut r, 2.0);
        (p.alpha, p.beta) = (0.0, 0.0);
        let (q, k) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let (f0, f1) = phis(q, k, &p);
        for (order, row) in errors.iter_mut().enumerate() {
            let mu = agree(&oracle_state(q, k, &p, order == 1));
            row[0] = row[0].max((mu - (0.5 * f0).cos().powi(2)).abs());
            row[1] = row[1].max((mu - (0.5 * f1).cos().powi(2)).abs());
        }
        library = library.max((circuit().score(q, k, &p).unwrap() - (0.5 * f0).cos().powi(2)).abs());
    }
    // Key-control-first projects onto the key qubit instead; only one order
    // yields the query-qubit projection.
    let query_orders: Vec<usize> = (0..2).filter(|&o| errors[o][0] <= 1e-12).collect();
    ck.require(
        query_orders == [0] && errors[1][1] <= 1e-12,
        format!(
            "query-qubit projection holds for query-control-first only (errors {:.1e} vs {:.1e})",
            errors[0][0], errors[1][0]
        ),
    );
    ck.require(library <= 1e-12, format!("library α = β = 0 score vs cos² projection {library:.1e}"));

    let mut origin = 0.0f64;
    for _ in 0..200 {
        let mut p = uniform_params(&mut r, 2.0);
        p.beta = 0.0;
        origin = origin.max((circuit().score(0.0, 0.0, &p).unwrap() - (PI / 8.0).cos().powi(2)).abs());
    }
    let value: f64 = circuit().score(0.0, 0.0, &QpaParams::zeros()).unwrap();
    ck.require(origin <= 1e-9, format!("origin score equals cos²(π/8) within {origin:.1e}"));
    ck.require((value - 0.853553).abs() < 5e-7, format!("origin value {value:.6}"));
    ck
}

fn boundedness_and_witnesses() -> Check {
    let mut ck = Check::new();
    let mut r = rng(4);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..100_000 {
        let p = uniform_params(&mut r, 6.0);
        let mu = ScoreKernel::new(circuit(), p).score(r.random_range(-6.0..6.0), r.random_range(-6.0..6.0));
        (lo, hi) = (lo.min(mu), hi.max(mu));
    }
    ck.require((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi), format!("10⁵ scores span [{lo:.3e}, {hi:.15}]"));

    let (mut sets, mut witnessed) = (0, 0);
    while sets < 50 {
        let p = uniform_params(&mut r, 1.5);
        let (l1, l2) = lambdas(&p);
        if p.alpha.abs() < 1e-3 || (l1 - l2).abs() < 1e-3 {
            continue;
        }
        sets += 1;
        if let Some(w) = asymmetry_witness(circuit(), &p, 20, 2.0, 1e-6) {
            witnessed += usize::from((oracle_mu(w.q, w.k, &p) - oracle_mu(w.k, w.q, &p)).abs() > 1e-6);
        }
    }
    ck.require(witnessed == sets, format!("asymmetry witnessed for {witnessed}/{sets} parameter sets"));

    let p = QpaParams::new(0.5, 0.25, 0.25, 0.3, 0.2);
    match non_monotonicity_witness(circuit(), &p, 12.0, 1201, 0.05) {
        Some(w) => {
            let h = 12.0 / 1200.0;
            let m = oracle_mu(w.q_min, 0.0, &p);
            let local_min = m < oracle_mu(w.q_min - h, 0.0, &p) && m < oracle_mu(w.q_min + h, 0.0, &p);
            let rise = oracle_mu(w.q_peak, 0.0, &p) - m;
            ck.require(
                local_min && w.q_peak > w.q_min && rise >= 0.05,
                format!("μ(q, 0) dips at q = {:.2} then rises by {rise:.3} at q = {:.2}", w.q_min, w.q_peak),
            );
        }
        None => ck.require(false, "no non-monotonicity witness found"),
    }
    ck
}

fn oracle_rank(rows: usize, cols: usize, data: &[f64], rel_tol: f64) -> usize {
    let sv = DMatrix::from_row_slice(rows, cols, data).singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

fn dof_bounds() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    // ∂(ωd, ωs)/∂(θs, γd, γs) with ωd = θs + 2γd and ωs = θs + 2γs.
    let enc = qpa_core::lab::encoding_jacobian_rank::<f64>(&QpaParams::zeros());
    let analytic = oracle_rank(2, 3, &[1.0, 2.0, 0.0, 1.0, 0.0, 2.0], 1e-8);
    ck.require(
        enc.numerical_rank == 2 && analytic == 2,
        format!("encoding Jacobian rank {} (oracle {analytic})", enc.numerical_rank),
    );

    let mut r = rng(5);
    let grid = default_grid::<f64>();
    let (mut max_full, mut full_agree, mut slices) = (0, 0, 0);
    for _ in 0..100 {
        let p = uniform_params(&mut r, 1.5);
        let full = full_circuit_rank(circuit(), &p, &grid, 1e-8).unwrap().numerical_rank;
        let j = score_jacobian(circuit(), &p, &grid);
        let oracle = oracle_rank(j.rows(), j.cols(), j.as_slice(), 1e-8);
        max_full = max_full.max(full);
        full_agree += usize::from(full == oracle);
        slices += usize::from(encoding_slice_rank(circuit(), &p, &grid, 1e-8).unwrap().numerical_rank == 2);
    }
    ck.require(max_full <= 4, format!("largest full-circuit rank over 100 points is {max_full}"));
    ck.require(full_agree == 100, format!("library rank equals SVD oracle at {full_agree}/100 points"));
    ck.require(slices == 100, format!("α = β = 0 slice has rank 2 at {slices}/100 points"));
    ck.within(start, Duration::from_secs(30));
    ck
}

fn tiny_config(scorer: ScorerKind) -> VitConfig {
    VitConfig {
        image_size: 8,
        channels: 1,
        patch_size: 4,
        num_layers: 1,
        heads: 2,
        hidden_size: 8,
        mlp_hidden: 8,
        num_classes: 2,
        scorer,
        depth: 4,
    }
}

fn gradients() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    let mut r = rng(6);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let p = uniform_params(&mut r, 1.5);
        let (q, k) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let g = ScoreKernel::new(circuit(), p).gradient(q, k);
        let base = p.to_array();
        for (i, exact) in g.d_params.to_array().into_iter().enumerate() {
            let (mut up, mut dn) = (base, base);
            up[i] += h;
            dn[i] -= h;
            let fd =
                (oracle_mu(q, k, &QpaParams::from_array(up)) - oracle_mu(q, k, &QpaParams::from_array(dn))) / (2.0 * h);
            worst = worst.max((fd - exact).abs());
        }
        let fd_q = (oracle_mu(q + h, k, &p) - oracle_mu(q - h, k, &p)) / (2.0 * h);
        let fd_k = (oracle_mu(q, k + h, &p) - oracle_mu(q, k - h, &p)) / (2.0 * h);
        worst = worst.max((fd_q - g.d_q).abs()).max((fd_k - g.d_k).abs());
    }
    ck.require(worst <= 1e-6, format!("parameter shift vs central differences {worst:.1e}"));

    // Relative error with an absolute floor far below any gradient that matters.
    let h = 1e-5;
    for scorer in ScorerKind::ALL {
        let model = VitModel::<f64>::new(tiny_config(scorer), 11).unwrap();
        let image: Vec<f64> = (0..64).map(|_| r.random_range(0.0..1.0)).collect();
        let (_, grad) = model.backward(&image, 1).unwrap();
        let loss = |params: &[f64]| {
            let m = VitModel::from_params(tiny_config(scorer), params.to_vec()).unwrap();
            cross_entropy(&m.forward(&image).unwrap(), 1).unwrap()
        };
        let mut params = model.params().to_vec();
        let mut worst_rel = 0.0f64;
        for i in 0..params.len() {
            let x = params[i];
            params[i] = x + h;
            let up = loss(&params);
            params[i] = x - h;
            let dn = loss(&params);
            params[i] = x;
            let fd = (up - dn) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / (fd.abs().max(grad[i].abs()) + 1e-5);
            worst_rel = worst_rel.max(rel);
        }
        ck.require(worst_rel <= 1e-3, format!("{scorer}: {} gradients, worst rel {worst_rel:.1e}", params.len()));
    }
    ck.within(start, Duration::from_secs(120));
    ck
}

fn noise() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    let mut r = rng(7);
    let gammas: Vec<f64> = (0..=10).map(|i| 0.01 * i as f64).collect();
    let (mut pf, mut bf, mut vs_oracle) = (0.0f64, 0.0f64, 0.0f64);
    let mut damage: HashMap<NoiseChannel, f64> = HashMap::new();
    for _ in 0..200 {
        let p = QpaParams::init(&mut r);
        let (q, k) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let clean = oracle_mu(q, k, &p);
        for &g in &gammas {
            let lib_pf = circuit().score_noisy(q, k, &p, NoiseChannel::PhaseFlip, g).unwrap();
            let lib_bf = circuit().score_noisy(q, k, &p, NoiseChannel::BitFlip, g).unwrap();
            pf = pf.max((lib_pf - clean).abs());
            bf = bf.max((lib_bf - (clean * (1.0 - 2.0 * g).powi(2) + 2.0 * g * (1.0 - g))).abs());
        }
        for ch in NoiseChannel::ALL {
            let lib = circuit().score_noisy(q, k, &p, ch, 0.1).unwrap();
            vs_oracle = vs_oracle.max((lib - oracle_noisy_mu(q, k, &p, ch, 0.1)).abs());
            *damage.entry(ch).or_default() += (lib - clean).abs() / 200.0;
        }
    }
    ck.require(pf <= 1e-12, format!("phase flip moves μ by at most {pf:.1e}"));
    ck.require(bf <= 1e-10, format!("bit flip vs closed form {bf:.1e} over γ ∈ [0, 0.1]"));
    ck.require(vs_oracle <= 1e-12, format!("library channels vs Kraus oracle {vs_oracle:.1e}"));
    let most = NoiseChannel::ALL.into_iter().max_by(|a, b| damage[a].total_cmp(&damage[b])).unwrap();
    ck.require(
        most == NoiseChannel::BitFlip,
        format!(
            "mean |Δμ| at γ = 0.1: bf {:.4}, dp {:.4}, ad {:.4}, pf {:.4}",
            damage[&NoiseChannel::BitFlip],
            damage[&NoiseChannel::Depolarizing],
            damage[&NoiseChannel::AmplitudeDamping],
            damage[&NoiseChannel::PhaseFlip]
        ),
    );

    // Trained model: phase flip must leave every score and prediction untouched.
    let data = synthetic_dataset::<f64>(&SyntheticSpec::default()).unwrap();
    let (train, valid) = split(&data, 200, 80, 0).unwrap();
    let cfg = TrainConfig { epochs: 6, ..TrainConfig::default() };
    let model = train_loop(VitModel::new(VitConfig::default(), 0).unwrap(), &train, &valid, &cfg, |_| {}).unwrap().best;
    let exact = evaluate(&model, &valid, ScoreMode::Exact).unwrap();
    let (mut same, mut bf_model) = (true, 0.0f64);
    for &g in &gammas {
        let e = evaluate(&model, &valid, ScoreMode::Noisy { channel: NoiseChannel::PhaseFlip, gamma: g }).unwrap();
        same &= e.predictions == exact.predictions
            && e.metrics.accuracy == exact.metrics.accuracy
            && e.circuit.abs_shift_sum == 0.0;
        let b = evaluate(&model, &valid, ScoreMode::Noisy { channel: NoiseChannel::BitFlip, gamma: g }).unwrap();
        let (clean, mu) = (b.circuit.mean_clean().unwrap(), b.circuit.mean_scored().unwrap());
        bf_model = bf_model.max((mu - (clean * (1.0 - 2.0 * g).powi(2) + 2.0 * g * (1.0 - g))).abs());
    }
    ck.require(
        same,
        format!("phase flip keeps validation accuracy {:.4} and every score exactly", exact.metrics.accuracy),
    );
    ck.require(bf_model <= 1e-10, format!("model-level bit-flip mean vs closed form {bf_model:.1e}"));
    ck.within(start, Duration::from_secs(60));
    ck
}

fn shots() -> Check {
    let mut ck = Check::new();
    let start = Instant::now();
    let s = shot_study(circuit(), 100, 1000, 0).unwrap();
    let (p, q, k) = shot_study_point();
    let mu = oracle_mu(q, k, &p);
    let binomial = (mu * (1.0 - mu) / 100.0).sqrt();
    ck.require(s.std <= 0.05, format!("std at S = 100 over 1000 repetitions is {:.4}", s.std));
    ck.require((s.std / binomial - 1.0).abs() < 0.15, format!("binomial std {binomial:.4}"));
    ck.require((s.mean - mu).abs() < 5.0 * binomial / 1000f64.sqrt(), format!("mean {:.4} vs exact {mu:.4}", s.mean));
    ck.within(start, Duration::from_secs(30));
    ck
}

fn read_csv(path: &Path) -> Vec<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).expect("compare.csv exists");
    reader.deserialize().map(|r| r.expect("well-formed row")).collect()
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).expect("jsonl exists").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn desk_training() -> Check {
    let mut ck = Check::new();
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qpa"))
        .args(["compare", "-q", "--scorers", "qpa,dot", "--seeds", "0,1,2,3,4", "--epochs", "50", "-o", "cmp"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    if !out.status.success() {
        ck.require(false, format!("qpa compare exited with {}", out.status));
        return ck;
    }
    let base = dir.path().join("cmp");
    let runs = read_jsonl(&base.join("runs.jsonl"));
    let mut acc: HashMap<String, Vec<f64>> = HashMap::new();
    for run in &runs {
        let a = run["valid"]["accuracy"].as_f64().unwrap();
        acc.entry(run["scorer"].as_str().unwrap().into()).or_default().push(a);
    }
    let longest = runs.iter().map(|r| r["epochs_run"].as_u64().unwrap()).max().unwrap_or(0);
    ck.require(runs.len() == 10 && longest <= 50, format!("{} runs, longest {longest} epochs", runs.len()));
    for scorer in ["qpa", "dot"] {
        let a = acc.get(scorer).cloned().unwrap_or_default();
        let min = a.iter().copied().fold(f64::INFINITY, f64::min);
        ck.require(a.len() == 5 && min >= 0.95, format!("{scorer}: worst of {} seeds reaches {min:.4}", a.len()));
    }
    let slowest =
        read_jsonl(&base.join("timings.jsonl")).iter().map(|t| t["wall_seconds"].as_f64().unwrap()).fold(0.0, f64::max);
    ck.require(slowest < 180.0, format!("slowest run {slowest:.1}s < 180s"));

    let rows = read_csv(&base.join("compare.csv"));
    let summaries: Vec<_> = rows.iter().filter(|r| r["row_type"] == "summary").collect();
    let filled = ["accuracy_mean", "accuracy_std", "precision_mean", "recall_mean", "f1_mean", "auc_mean"];
    ck.require(
        summaries.len() == 2 && summaries.iter().all(|r| filled.iter().all(|f| r[*f].parse::<f64>().is_ok())),
        "two complete summary rows",
    );
    let Some(t) = rows.iter().find(|r| r["row_type"] == "ttest") else {
        ck.require(false, "t-test row present");
        return ck;
    };
    let diffs: Vec<f64> = acc["qpa"].iter().zip(&acc["dot"]).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        let t_stat: f64 = t["t_statistic"].parse().unwrap_or(f64::NAN);
        let expected = mean / (sd / n.sqrt());
        let p: f64 = t["p_two_tail"].parse().unwrap_or(f64::NAN);
        ck.require(
            (t_stat - expected).abs() < 1e-9 && (0.0..=1.0).contains(&p),
            format!("t = {t_stat:.4} (oracle {expected:.4}), p = {p:.4}"),
        );
    } else {
        // Identical accuracy differences across seeds: the statistic is undefined.
        ck.require(
            t["degenerate"] == "true" && t["t_statistic"].is_empty(),
            format!("accuracy differences constant at {mean:.4}; t-test row marked degenerate"),
        );
    }
    ck
}

/// `P(|T| < t)` for Student-t with integer `nu`, by the finite trigonometric
/// series for odd and even degrees of freedom.
fn student_central(t: f64, nu: usize) -> f64 {
    let theta = (t.abs() / (nu as f64).sqrt()).atan();
    let (s, co) = theta.sin_cos();
    if nu % 2 == 1 {
        let mut term = co;
        let mut sum = if nu > 1 { co } else { 0.0 };
        for j in (3..nu).step_by(2) {
            term *= co * co * (j - 1) as f64 / j as f64;
            sum += term;
        }
        2.0 / PI * (theta + s * sum)
    } else {
        let (mut term, mut sum) = (1.0, 1.0);
        for j in (2..nu).step_by(2) {
            term *= co * co * (j - 1) as f64 / j as f64;
            sum += term;
        }
        s * sum
    }
}

fn statistics() -> Check {
    let mut ck = Check::new();
    let mut r = rng(10);
    let (mut worst_two, mut worst_one, mut cases) = (0.0f64, 0.0f64, 0);
    while cases < 100 {
        let n = r.random_range(3..30);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.0)).collect();
        let shift = r.random_range(-0.1..0.1);
        let b: Vec<f64> = a.iter().map(|x| x - shift + r.random_range(-0.1..0.1)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = mean / (sd / (n as f64).sqrt());
        let two = 1.0 - student_central(t, n - 1);
        let one = if t >= 0.0 { 0.5 * two } else { 1.0 - 0.5 * two };
        let res = paired_t_test(&a, &b).unwrap();
        worst_two = worst_two.max((res.p_two_tail.unwrap() - two).abs());
        worst_one = worst_one.max((res.p_one_tail.unwrap() - one).abs());
        cases += 1;
    }
    ck.require(
        worst_two <= 1e-6 && worst_one <= 1e-6,
        format!("p-values vs series oracle: two-tail {worst_two:.1e}, one-tail {worst_one:.1e}"),
    );
    let hand = paired_t_test(&[0.8, 0.9, 0.7], &[0.6, 0.8, 0.7]).unwrap();
    let (t, d) = (hand.t_statistic.unwrap(), hand.cohens_d.unwrap());
    ck.require((t - 1.7321).abs() < 1e-4 && (d - 1.0).abs() < 1e-4, format!("hand example t = {t:.4}, d = {d:.4}"));
    ck
}

fn structural_counts() -> Check {
    let mut ck = Check::new();
    let count = |scorer, layers| {
        VitModel::<f64>::new(VitConfig { scorer, num_layers: layers, ..VitConfig::default() }, 0).unwrap().param_count()
    };
    for layers in 1..=3 {
        let dot = count(ScorerKind::Dot, layers);
        let extra = |s| count(s, layers) - dot;
        ck.require(
            extra(ScorerKind::Qpa) == 5 * layers
                && extra(ScorerKind::Mlp49) == 49 * layers
                && extra(ScorerKind::Mlp585) == 585 * layers,
            format!(
                "{layers} layer(s): qpa +{}, mlp49 +{}, mlp585 +{}",
                extra(ScorerKind::Qpa),
                extra(ScorerKind::Mlp49),
                extra(ScorerKind::Mlp585)
            ),
        );
    }
    // 4→8→1 and 4→64→4→1 dense layers with biases.
    let (small, large) = (4 * 8 + 8 + 8 + 1, 4 * 64 + 64 + 64 * 4 + 4 + 4 + 1);
    ck.require(
        MlpVariant::Small.param_count() == small
            && MlpVariant::Large.param_count() == large
            && (small, large) == (49, 585),
        format!("scorer MLPs hold {} and {} scalars", MlpVariant::Small.param_count(), MlpVariant::Large.param_count()),
    );
    ck
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("closed-form encoding score", closed_form_encoding),
        ("encoding kernel and separability", kernel_equivalence),
        ("degenerate α = β = 0 projection", degenerate_case),
        ("boundedness, asymmetry, non-monotonicity", boundedness_and_witnesses),
        ("Jacobian rank bounds", dof_bounds),
        ("gradient correctness", gradients),
        ("noise channel behaviour", noise),
        ("shot-noise bound", shots),
        ("desk-scale training comparison", desk_training),
        ("paired t-test against reference", statistics),
        ("parameter counts", structural_counts),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok(ck) if ck.failures.is_empty() => (true, ck.notes.join("; ")),
            Ok(ck) => (false, ck.failures.join("; ")),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += usize::from(!ok);
        println!("{} criterion {n}: {name} [{secs:.2}s] {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
