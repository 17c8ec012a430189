//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use sparse::experiment::{sanitize_records, score_attack, train_attacker};
use sparse_core::attack::{attribution_to_sigma, integrated_gradients, AttackModel, AttackTrainConfig, DEFAULT_IG_STEPS};
use sparse_core::dataset::{generate_synthetic, EmbeddingRecord, PairedDataset, SyntheticPlan};
use sparse_core::gradcheck::{attack_gradient_suite, mask_gradient_suite};
use sparse_core::mask::{inference_mask, mask_to_sigma, top_k, train_mask, MaskTrainConfig};
use sparse_core::mechanism::{verify_ldp_ratio, verify_radial_law, MechanismConfig};
use sparse_core::metrics::{neuron_sensitivity, pearson, sensitivity_split_test, tradeoff_rate};
use sparse_core::numkit::{mahalanobis_norm, sample_standard_normal, euclidean_norm, DiagonalPD, Rng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn normals(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    sample_standard_normal(rng, n).into_iter().map(|v| v * scale).collect()
}

/// Random trace-n diagonal with entries spread over about two decades.
fn random_sigma(rng: &mut Rng, n: usize) -> DiagonalPD {
    let profile: Vec<f64> = (0..n).map(|_| 10f64.powf(2.0 * rng.uniform() - 1.0)).collect();
    DiagonalPD::from_profile(&profile, 1e-6).unwrap()
}

fn within_limit(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn ldp_guarantee() -> Outcome {
    let start = Instant::now();
    let root = Rng::seed_from(101);
    let (mut checks, mut violations, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
    for s in 0..20 {
        let mut rng = root.split(&format!("sigma-{s}"));
        let n = 2 + rng.below(31);
        let sigma = random_sigma(&mut rng, n);
        for eps in [0.5, 5.0, 50.0] {
            let cfg = MechanismConfig::mahalanobis(eps, sigma.clone(), 0).unwrap();
            for _ in 0..50 {
                let x = normals(&mut rng, n, 2.0);
                let xp = normals(&mut rng, n, 2.0);
                // Half the probes sit on the line through x and x', where the bound is tight.
                let probe: Vec<f64> = if rng.uniform() < 0.5 {
                    let t = 4.0 * rng.uniform() - 1.5;
                    x.iter().zip(&xp).map(|(a, b)| a + t * (b - a)).collect()
                } else {
                    normals(&mut rng, n, 3.0)
                };
                for (a, b) in [(&x, &xp), (&xp, &x)] {
                    let r = verify_ldp_ratio(&cfg, a, b, std::slice::from_ref(&probe)).unwrap();
                    checks += 1;
                    violations += r.violations;
                    if r.bound > 0.0 {
                        worst = worst.max(r.max_gap / r.bound);
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && checks == 6000 && within_limit(elapsed, 10),
        format!(
            "{} (x, x', probe) triples x 2 orders, {violations} violations, max gap/bound {worst:.6}, {elapsed:.2?}",
            checks / 2
        ),
    )
}

fn noise_law() -> Outcome {
    let start = Instant::now();
    let root = Rng::seed_from(202);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2usize, 8, 64] {
        for eps in [1.0, 10.0] {
            let mut rng = root.split(&format!("n{n}-eps{eps}"));
            let sigma = random_sigma(&mut rng, n);
            let cfg = MechanismConfig::mahalanobis(eps, sigma, 0).unwrap();
            let r = verify_radial_law(&cfg, 100_000, &mut rng).unwrap();
            let rel = (r.mean_radius - r.expected_mean).abs() / r.expected_mean;
            ok &= r.ks_statistic < 0.01 && rel < 0.01;
            parts.push(format!("n={n} eps={eps}: KS {:.4} mean err {:.3}%", r.ks_statistic, rel * 100.0));
        }
    }
    let elapsed = start.elapsed();
    ok &= within_limit(elapsed, 30);
    outcome(ok, format!("{}; {elapsed:.2?}", parts.join(", ")))
}

fn norm_sandwich() -> Outcome {
    let mut rng = Rng::seed_from(303);
    let slack = |x: f64| x * 1e-12 + 1e-12;
    let mut failures = 0;
    for _ in 0..10_000 {
        let n = 1 + rng.below(32);
        let sigma = random_sigma(&mut rng, n);
        let c = sigma.min_entry() * (0.5 + 0.5 * rng.uniform());
        let scale = 1.0 + 2.0 * rng.uniform();
        let v = normals(&mut rng, n, scale);
        let eps = 0.1 + 4.9 * rng.uniform();
        let l2 = euclidean_norm(&v);
        let m = mahalanobis_norm(&v, &sigma).unwrap();
        let (lo, hi) = (l2 / (n as f64).sqrt(), l2 / c.sqrt());
        let norms_hold = lo <= m + slack(m) && m <= hi + slack(hi);
        let (elo, em, ehi) = ((eps * lo).exp(), (eps * m).exp(), (eps * hi).exp());
        let exps_hold = elo <= em + slack(em) && em <= ehi + slack(ehi) && ehi.is_finite();
        if !(norms_hold && exps_hold) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("10000 random (sigma, v), {failures} failures of either sandwich"))
}

fn gradient_checks() -> Outcome {
    let mask = mask_gradient_suite(404, 50, &[8, 4]).unwrap();
    let attack = attack_gradient_suite(405, 50, &[8, 4]).unwrap();
    outcome(
        mask.passed() && attack.passed(),
        format!(
            "mask: {} entries, max rel err {:.2e} ({}), {} kinks skipped; attacker: {} entries, max rel err {:.2e} ({}), {} kinks skipped",
            mask.checked,
            mask.max_relative_error,
            mask.worst.unwrap_or_default(),
            mask.kinks,
            attack.checked,
            attack.max_relative_error,
            attack.worst.unwrap_or_default(),
            attack.kinks
        ),
    )
}

const RECOVERY_PLANTED: [usize; 2] = [7, 21];

fn recovery_plan(seed: u64) -> SyntheticPlan {
    SyntheticPlan::new(32, 400, RECOVERY_PLANTED, 1.0, 0.3, seed)
}

fn privacy_neuron_recovery() -> Outcome {
    let start = Instant::now();
    let planted: BTreeSet<usize> = RECOVERY_PLANTED.into_iter().collect();
    let data = generate_synthetic(&recovery_plan(11)).unwrap();
    let profile = neuron_sensitivity(&data).unwrap();
    let top_delta: BTreeSet<usize> = top_k(&profile.delta, 2).into_iter().collect();
    let a = top_delta == planted;

    let mut hits = 0;
    let mut tops = Vec::new();
    for seed in 1..=5 {
        let cfg = MaskTrainConfig {
            seed,
            ..MaskTrainConfig::default()
        };
        let trained = train_mask(&data, &cfg).unwrap();
        let top: BTreeSet<usize> = top_k(&inference_mask(&trained.mask), 2).into_iter().collect();
        hits += usize::from(top == planted);
        tops.push(top);
    }
    let b = hits >= 4;

    // Groups of floor(32 * 0.25) = 8 dimensions.
    let split = sensitivity_split_test(&profile, 0.25).unwrap();
    let c = split.p_value() < 0.05;
    let elapsed = start.elapsed();
    outcome(
        a && b && c && within_limit(elapsed, 120),
        format!(
            "(a) top-2 delta {top_delta:?} [{}]; (b) mask top-2 = planted in {hits}/5 seeds {tops:?} [{}]; \
             (c) split p = {:.4} [{}]; {elapsed:.2?}",
            pf(a),
            pf(b),
            split.p_value(),
            pf(c)
        ),
    )
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "fail"
    }
}

// Tradeoff setup.
const TRADEOFF_N: usize = 32;
const TRADEOFF_PLANTED: [usize; 2] = [4, 19];
const EPSILONS: [f64; 3] = [5.0, 10.0, 20.0];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn tradeoff_plan(pairs: usize, seed: u64) -> SyntheticPlan {
    SyntheticPlan::new(TRADEOFF_N, pairs, TRADEOFF_PLANTED, 1.5, 0.5, seed)
}

fn records(paired: &PairedDataset) -> Vec<EmbeddingRecord> {
    paired
        .positives
        .iter()
        .zip(&paired.negatives)
        .flat_map(|(p, n)| [p.clone(), n.clone()])
        .collect()
}

fn attacker_config(seed: u64) -> AttackTrainConfig {
    AttackTrainConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        epochs: 30,
        seed,
        hidden: AttackTrainConfig::SHRUNK_HIDDEN.to_vec(),
    }
}

/// Desk-scale mask training: a few hundred Adam steps instead of a full
/// corpus, so a larger step and a regulariser weight comparable to the summed
/// minibatch loss.
fn mask_config(seed: u64) -> MaskTrainConfig {
    MaskTrainConfig {
        seed,
        learning_rate: 1e-2,
        lambda: 100.0,
        ..MaskTrainConfig::default()
    }
}

/// Ridge regression from the non-planted coordinates to a fixed linear
/// function of the clean non-planted coordinates, fitted on the perturbed
/// training split and scored by Pearson correlation on the perturbed
/// held-out split.
struct Probe {
    weights: Vec<f64>,
    active: Vec<usize>,
}

impl Probe {
    fn new() -> Self {
        let active: Vec<usize> = (0..TRADEOFF_N).filter(|d| !TRADEOFF_PLANTED.contains(d)).collect();
        let mut rng = Rng::seed_from(77);
        Probe {
            weights: normals(&mut rng, active.len(), 1.0),
            active,
        }
    }

    fn target(&self, clean: &EmbeddingRecord) -> f64 {
        self.active.iter().zip(&self.weights).map(|(d, w)| clean.embedding[*d] * w).sum()
    }

    fn design(&self, recs: &[EmbeddingRecord]) -> DMatrix<f64> {
        let k = self.active.len();
        DMatrix::from_fn(recs.len(), k + 1, |i, j| if j == k { 1.0 } else { recs[i].embedding[self.active[j]] })
    }

    fn score(&self, clean_train: &[EmbeddingRecord], noisy_train: &[EmbeddingRecord], clean_eval: &[EmbeddingRecord], noisy_eval: &[EmbeddingRecord]) -> f64 {
        let x = self.design(noisy_train);
        let y = DVector::from_iterator(clean_train.len(), clean_train.iter().map(|r| self.target(r)));
        let mut gram = x.transpose() * &x;
        for i in 0..gram.nrows() - 1 {
            gram[(i, i)] += 1e-3;
        }
        let beta = gram.cholesky().expect("ridge system is positive definite").solve(&(x.transpose() * y));
        let pred: Vec<f64> = (self.design(noisy_eval) * beta).iter().copied().collect();
        let gold: Vec<f64> = clean_eval.iter().map(|r| self.target(r)).collect();
        pearson(&pred, &gold).unwrap_or(0.0)
    }
}

#[derive(Default, Clone, Copy)]
struct Cell {
    leakage: f64,
    utility: f64,
}

struct TradeoffResults {
    /// `[mechanism][eps]` averaged over seeds; mechanisms are isotropic, mask, white-box.
    mean: [[Cell; 3]; 3],
}

fn white_box_sigma(train: &[EmbeddingRecord], positives: &[EmbeddingRecord], seed: u64) -> DiagonalPD {
    let vocab = vec!["sensitive".to_string()];
    let model: AttackModel = train_attacker(train, &vocab, &attacker_config(seed)).unwrap();
    let baseline = vec![0.0; TRADEOFF_N];
    let profiles: Vec<_> = positives
        .iter()
        .take(100)
        .map(|r| integrated_gradients(&model, &r.embedding, "sensitive", DEFAULT_IG_STEPS, &baseline).unwrap())
        .collect();
    attribution_to_sigma(&profiles, 1e-6).unwrap()
}

fn run_tradeoff() -> (TradeoffResults, Duration) {
    let start = Instant::now();
    let probe = Probe::new();
    let vocab = vec!["sensitive".to_string()];
    let mut sums = [[Cell::default(); 3]; 3];
    for seed in SEEDS {
        let train_pd = generate_synthetic(&tradeoff_plan(400, 1000 + seed)).unwrap();
        let eval_pd = generate_synthetic(&tradeoff_plan(200, 2000 + seed)).unwrap();
        let (train, eval) = (records(&train_pd), records(&eval_pd));
        let mask = train_mask(&train_pd, &mask_config(seed)).unwrap().mask;
        let sigmas = [
            DiagonalPD::identity(TRADEOFF_N),
            mask_to_sigma(&inference_mask(&mask), 1e-6).unwrap(),
            white_box_sigma(&train, &eval_pd.positives, seed),
        ];
        for (m, sigma) in sigmas.iter().enumerate() {
            for (e, eps) in EPSILONS.iter().enumerate() {
                let cfg_train = MechanismConfig::mahalanobis(*eps, sigma.clone(), seed * 31 + 1).unwrap();
                let cfg_eval = MechanismConfig::mahalanobis(*eps, sigma.clone(), seed * 31 + 2).unwrap();
                let noisy_train = sanitize_records(&train, &cfg_train, true).unwrap();
                let noisy_eval = sanitize_records(&eval, &cfg_eval, true).unwrap();
                let model = train_attacker(&noisy_train, &vocab, &attacker_config(seed)).unwrap();
                let leakage = score_attack(&model, &noisy_eval, 0.5, true).unwrap().leakage;
                let utility = probe.score(&train, &noisy_train, &eval, &noisy_eval);
                sums[m][e].leakage += leakage;
                sums[m][e].utility += utility;
            }
        }
    }
    let k = SEEDS.len() as f64;
    let mean = sums.map(|row| {
        row.map(|c| Cell {
            leakage: c.leakage / k,
            utility: c.utility / k,
        })
    });
    (TradeoffResults { mean }, start.elapsed())
}

fn table(r: &TradeoffResults) -> String {
    let names = ["iso", "mask", "wb"];
    EPSILONS
        .iter()
        .enumerate()
        .map(|(e, eps)| {
            let cells: Vec<String> = (0..3)
                .map(|m| format!("{} leak {:.2}% util {:.3}", names[m], r.mean[m][e].leakage * 100.0, r.mean[m][e].utility))
                .collect();
            format!("eps={eps}: {}", cells.join(" / "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn qualitative_tradeoff(r: &TradeoffResults, elapsed: Duration) -> Outcome {
    let ok = (0..EPSILONS.len()).all(|e| {
        let (iso, mask) = (r.mean[0][e], r.mean[1][e]);
        mask.leakage <= iso.leakage && mask.utility >= iso.utility
    });
    outcome(ok && within_limit(elapsed, 300), format!("{}; {elapsed:.2?}", table(r)))
}

fn white_box_parity(r: &TradeoffResults) -> Outcome {
    let ok = (0..EPSILONS.len()).all(|e| {
        let (iso, mask, wb) = (r.mean[0][e], r.mean[1][e], r.mean[2][e]);
        wb.leakage <= mask.leakage + 0.02 && wb.leakage < iso.leakage && mask.leakage < iso.leakage
    });
    let gaps: Vec<String> = (0..EPSILONS.len())
        .map(|e| format!("eps={}: wb - mask = {:+.2}pp", EPSILONS[e], (r.mean[2][e].leakage - r.mean[1][e].leakage) * 100.0))
        .collect();
    outcome(ok, gaps.join(", "))
}

fn tradeoff_rate_anchors() -> Outcome {
    let sts = tradeoff_rate(60.09, 36.98, 74.25, 73.25).unwrap();
    let fiqa = tradeoff_rate(77.35, 53.41, 33.56, 32.65).unwrap();
    outcome(
        (sts - 23.11).abs() <= 0.01 && (fiqa - 26.30).abs() <= 0.01,
        format!("STS12 R = {sts:.4}, FIQA R = {fiqa:.4}"),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (train, eval, sim) = common::small_corpus(d);
    let mut problems = Vec::new();
    let mut commands = 0;
    // Each command runs three times: sequential, sequential again, parallel.
    let mut check = |name: &str, args: Vec<String>, outputs: &[&str], parallel: bool| {
        commands += 1;
        let mut digests = Vec::new();
        for run in 0..3 {
            let rd = d.join(format!("{name}-{run}"));
            std::fs::create_dir_all(&rd).unwrap();
            let mut a: Vec<String> = args.iter().map(|s| s.replace("{dir}", &rd.to_string_lossy())).collect();
            if run == 2 && parallel {
                a.push("--parallel".into());
            }
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_sparse"))
                .args(&a)
                .env("SPARSE_THREADS", "4")
                .output()
                .unwrap();
            if !out.status.success() {
                problems.push(format!("{name} run {run} failed: {}", String::from_utf8_lossy(&out.stderr)));
                return;
            }
            let contents: Vec<Vec<u8>> = outputs.iter().map(|o| common::bytes(rd.join(o))).collect();
            digests.push(contents);
        }
        if digests.windows(2).any(|w| w[0] != w[1]) {
            problems.push(format!("{name} outputs differ between runs"));
        }
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    check(
        "generate",
        s(&["generate-synthetic", "--n", "8", "--pairs", "20", "--planted", "1", "--seed", "4", "--out", "{dir}/g.jsonl",
            "--similarity-pairs", "5", "--similarity-out", "{dir}/s.jsonl"]),
        &["g.jsonl", "g.jsonl.meta.json", "s.jsonl"],
        false,
    );
    check(
        "train-mask",
        s(&["train-mask", "--pairs", &train, "--lambda", "1e-3", "--seed", "1", "--epochs", "5", "--hidden", "8,4",
            "--out", "{dir}/mask.json"]),
        &["mask.json", "mask.classifier.json", "mask.log.json"],
        false,
    );
    let mask = d.join("train-mask-0/mask.json").to_string_lossy().into_owned();
    check(
        "sanitize",
        s(&["sanitize", "--in", &train, "--mech", "mahalanobis", "--mask", &mask, "--eps", "10", "--seed", "1",
            "--out", "{dir}/p.jsonl"]),
        &["p.jsonl", "p.jsonl.meta.json"],
        true,
    );
    check(
        "attack",
        s(&["attack", "--train", &train, "--eval", &eval, "--attack-hidden", "8", "--attack-epochs", "5", "--seed", "2",
            "--out", "{dir}/r.json", "--checkpoint", "{dir}/atk.json"]),
        &["r.json", "atk.json"],
        true,
    );
    let atk = d.join("attack-0/atk.json").to_string_lossy().into_owned();
    check(
        "attribute",
        s(&["attribute", "--attack", &atk, "--in", &eval, "--steps", "8", "--out", "{dir}/sigma.json"]),
        &["sigma.json"],
        true,
    );
    let sigma = d.join("attribute-0/sigma.json").to_string_lossy().into_owned();
    check(
        "evaluate",
        s(&["evaluate", "--train", &train, "--eval", &eval, "--utility", &sim, "--mask", &mask, "--sigma", &sigma,
            "--mech", "isotropic,mahalanobis,mahalanobis-wb", "--eps", "5,10", "--seed", "1,2", "--attack-hidden", "8",
            "--attack-epochs", "3", "--out", "{dir}/t.csv"]),
        &["t.csv", "t.csv.meta.json"],
        true,
    );
    check(
        "sensitivity-report",
        s(&["sensitivity-report", "--pairs", &train, "--fraction", "0.25", "--out", "{dir}/sens.json", "--csv",
            "{dir}/sens.csv"]),
        &["sens.json", "sens.csv"],
        false,
    );
    outcome(
        problems.is_empty() && commands == 7,
        if problems.is_empty() {
            format!("{commands} subcommands, 3 runs each (parallel on and off where supported), byte-identical outputs")
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    };
    report("ldp-guarantee", ldp_guarantee());
    report("noise-law", noise_law());
    report("norm-sandwich", norm_sandwich());
    report("gradient-correctness", gradient_checks());
    report("privacy-neuron-recovery", privacy_neuron_recovery());
    let (tradeoff, elapsed) = run_tradeoff();
    report("qualitative-tradeoff", qualitative_tradeoff(&tradeoff, elapsed));
    report("white-box-parity", white_box_parity(&tradeoff));
    report("tradeoff-rate-anchors", tradeoff_rate_anchors());
    report("cli-determinism", cli_determinism());
    println!("acceptance: {} failed", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
