//! Acceptance suite. Each check prints one `PASS`/`FAIL` line to stderr
//! (bypassing test capture) and then asserts, except the AwA check, which
//! only reports.
//!
//! The checks hold a shared lock so their wall-clock budgets are measured
//! without interference from each other.
//!
//! Set `ZSL_AWA_DATA` to a dataset directory with a `split.json` to run the
//! informational AwA check.

use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock, PoisonError};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use zsl_core::dataset::{
    generate_synthetic, load_dataset, load_split_file, make_split, standardize_signatures, Dataset,
    SignatureMatrix, Split, SyntheticConfig, SyntheticDataset,
};
use zsl_core::diagnostics::{collect_mispredictions, diagnose, sort_attributes, SortKey};
use zsl_core::model::{self, decode_checkpoint, loss_and_grad, predict_instances, MappingModel, TrainConfig};
use zsl_core::projection::{compute_affinities, conditional_affinities, project, TsneConfig};
use zsl_core::steering::{self, SteeringState};
use zsl_core::Matrix;
use zsl_service::{router, AppState, DiagnosticsPayload, Session, SessionInputs};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(PoisonError::into_inner)
}

fn report(id: &str, title: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{id} {verdict} {title}: {detail}");
    pass
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn weighted_score(f: &[f64], z: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..f.len() {
        s += w[k] * f[k] * z[k];
    }
    s
}

fn random_model(rng: &mut ChaCha8Rng, d: usize, h: usize, a: usize) -> MappingModel {
    let mut m = MappingModel::init(d, h, a, rng);
    for b in m.b1.iter_mut().chain(m.b2.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    m
}

#[test]
fn decomposition_identity() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 1000 {
        let (d, h) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let a = rng.random_range(2..=12);
        let classes = rng.random_range(2..=8);
        let m = random_model(&mut rng, d, h, a);
        let raw: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..a).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let w: Vec<f64> = (0..a)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..=1.0) })
            .collect();
        let x: Vec<f32> = (0..d).map(|_| rng.random_range(-2.0f32..2.0)).collect();

        let f = m.forward(&x.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let scores: Vec<f64> = raw.iter().map(|z| weighted_score(&f, z, &w)).collect();
        let best = (0..classes).fold(0, |b, c| if scores[c] > scores[b] { c } else { b });
        let mut label = rng.random_range(0..classes - 1);
        if label >= best {
            label += 1;
        }

        let ds = Dataset::new(
            Matrix::from_vec(1, d, x).unwrap(),
            vec![label],
            (0..classes).map(|c| format!("c{c}")).collect(),
            Matrix::from_rows(&raw).unwrap(),
            (0..a).map(|k| format!("a{k}")).collect(),
        )
        .unwrap();
        let sig = SignatureMatrix::from_matrix(Matrix::from_rows(&raw).unwrap());
        let seen: Vec<usize> = (0..classes).collect();
        let records = collect_mispredictions(&m, &[0], &seen, &ds, &sig, &w).unwrap();
        let Some(r) = records.first() else {
            // Exact score tie resolved toward the label; not a misprediction.
            continue;
        };
        let gap = weighted_score(&f, &raw[r.predicted_class], &w) - weighted_score(&f, &raw[label], &w);
        let sum: f64 = r.contributions.iter().sum();
        worst = worst.max((sum - gap).abs());
        draws += 1;
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(5);
    let detail = format!("max |sum p - gap| = {worst:.3e} over 1000 draws (tol 1e-9), {:.2}s (budget 5s)", secs(elapsed));
    assert!(report("A1", "decomposition identity", pass, &detail));
}

struct Problem {
    m: MappingModel,
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    z: Vec<Vec<f64>>,
    w: Vec<f64>,
    eta: f64,
    wd: f64,
}

impl Problem {
    fn hidden(m: &MappingModel, x: &[f64]) -> Vec<f64> {
        (0..m.b1.len())
            .map(|j| m.b1[j] + (0..x.len()).map(|i| m.w1.get(j, i) * x[i]).sum::<f64>())
            .collect()
    }

    fn mapped(m: &MappingModel, x: &[f64]) -> Vec<f64> {
        let pre = Self::hidden(m, x);
        (0..m.b2.len())
            .map(|k| m.b2[k] + (0..pre.len()).map(|j| m.w2.get(k, j) * pre[j].max(0.0)).sum::<f64>())
            .collect()
    }

    fn scores(&self, m: &MappingModel, x: &[f64], y: usize) -> (f64, Vec<f64>) {
        let f = Self::mapped(m, x);
        let own = weighted_score(&f, &self.z[y], &self.w);
        let others = (0..self.z.len())
            .filter(|&c| c != y)
            .map(|c| weighted_score(&f, &self.z[c], &self.w))
            .collect();
        (own, others)
    }

    fn loss(&self, m: &MappingModel) -> f64 {
        let mut total = 0.0;
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            let (own, others) = self.scores(m, x, y);
            let worst = others.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            total += (self.eta + worst - own).max(0.0);
        }
        let norm: f64 = m.params().iter().flat_map(|p| p.iter()).map(|v| v * v).sum();
        total / self.inputs.len() as f64 + 0.5 * self.wd * norm
    }

    fn kink_distance(&self) -> f64 {
        let mut closest = f64::INFINITY;
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            for p in Self::hidden(&self.m, x) {
                closest = closest.min(p.abs());
            }
            let (own, mut others) = self.scores(&self.m, x, y);
            others.sort_by(|a, b| b.total_cmp(a));
            closest = closest.min((self.eta + others[0] - own).abs());
            if others.len() > 1 {
                closest = closest.min(others[0] - others[1]);
            }
        }
        closest
    }
}

#[test]
fn gradient_oracle() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let step = 1e-5;
    let (mut worst, mut done, mut resampled) = (0.0f64, 0, 0);
    while done < 50 {
        let (d, h, a) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8));
        let classes = rng.random_range(2..=6);
        let batch = rng.random_range(1..=5);
        let p = Problem {
            m: random_model(&mut rng, d, h, a),
            inputs: (0..batch)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
            labels: (0..batch).map(|_| rng.random_range(0..classes)).collect(),
            z: (0..classes)
                .map(|_| (0..a).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
            w: (0..a).map(|_| rng.random_range(0.0..=1.0)).collect(),
            eta: rng.random_range(0.0..1.0),
            wd: if rng.random_bool(0.5) { 1e-3 } else { 0.0 },
        };
        if p.kink_distance() < 1e-4 {
            resampled += 1;
            continue;
        }
        let refs: Vec<&[f64]> = p.inputs.iter().map(Vec::as_slice).collect();
        let sig = SignatureMatrix::from_matrix(Matrix::from_rows(&p.z).unwrap());
        let seen: Vec<usize> = (0..classes).collect();
        let (_, grad) = loss_and_grad(&p.m, &refs, &p.labels, &sig, &seen, &p.w, p.eta, p.wd).unwrap();
        for block in 0..4 {
            for idx in 0..grad.params()[block].len() {
                let mut plus = p.m.clone();
                plus.params_mut()[block][idx] += step;
                let mut minus = p.m.clone();
                minus.params_mut()[block][idx] -= step;
                let numeric = (p.loss(&plus) - p.loss(&minus)) / (2.0 * step);
                let analytic = grad.params()[block][idx];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        done += 1;
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(30);
    let detail = format!(
        "max relative error {worst:.3e} over 50 configurations, {resampled} kink resamples (tol 1e-4), {:.2}s (budget 30s)",
        secs(elapsed)
    );
    assert!(report("A2", "gradient oracle", pass, &detail));
}

fn synthetic(seed: u64, corrupt: Option<usize>) -> SyntheticDataset {
    generate_synthetic(&SyntheticConfig {
        seen_classes: 20,
        unseen_classes: 5,
        attributes: 12,
        dim: 32,
        per_class: 100,
        noise_sigma: 0.3,
        corrupt_attribute: corrupt,
        seed,
    })
    .unwrap()
}

struct Prepared {
    dataset: Dataset,
    split: Split,
    signatures: SignatureMatrix,
}

fn prepare(syn: SyntheticDataset, seed: u64) -> Prepared {
    let split = make_split(&syn.dataset, &syn.unseen_names, 0.2, seed).unwrap();
    let signatures = standardize_signatures(syn.dataset.raw_attributes()).unwrap();
    Prepared {
        dataset: syn.dataset,
        split,
        signatures,
    }
}

fn unseen_accuracy(p: &Prepared, m: &MappingModel, w: &[f64]) -> f64 {
    steering::unseen_metrics(m, &p.dataset, &p.split, &p.signatures, w)
        .unwrap()
        .mean_per_class
}

const CORRUPT: usize = 3;

struct SeedRun {
    seed: u64,
    clean_unseen: f64,
    clean_time: Duration,
    corrupt_rank: usize,
    top3: Vec<usize>,
    corrupt_time: Duration,
    base_unseen: f64,
    steered_unseen: f64,
    steer_time: Duration,
}

fn seed_runs() -> &'static [SeedRun] {
    static RUNS: OnceLock<Vec<SeedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=5)
            .map(|seed| {
                let config = TrainConfig {
                    seed,
                    ..TrainConfig::default()
                };
                let ones = vec![1.0; 12];

                let t = Instant::now();
                let clean = prepare(synthetic(seed, None), seed);
                let (m, _) = model::train(&clean.dataset, &clean.split, &clean.signatures, &ones, &config).unwrap();
                let clean_unseen = unseen_accuracy(&clean, &m, &ones);
                let clean_time = t.elapsed();

                let t = Instant::now();
                let bad = prepare(synthetic(seed, Some(CORRUPT)), seed);
                let (base, _) = model::train(&bad.dataset, &bad.split, &bad.signatures, &ones, &config).unwrap();
                let summary = diagnose(&base, &bad.dataset, &bad.split, &bad.signatures, &ones, &bad.split.seen_classes).unwrap();
                let order = sort_attributes(&summary, SortKey::Total, None).unwrap().order;
                let corrupt_rank = order.iter().position(|&k| k == CORRUPT).unwrap();
                let corrupt_time = t.elapsed();

                let t = Instant::now();
                let base_unseen = unseen_accuracy(&bad, &base, &ones);
                let mut state = SteeringState::new(12);
                state.apply(CORRUPT, -0.5).unwrap();
                let outcome = steering::retrain(&bad.dataset, &bad.split, &bad.signatures, &state, &config).unwrap();
                let steered_unseen = unseen_accuracy(&bad, &outcome.model, state.weights());
                let steer_time = t.elapsed();

                SeedRun {
                    seed,
                    clean_unseen,
                    clean_time,
                    corrupt_rank,
                    top3: order[..3].to_vec(),
                    corrupt_time,
                    base_unseen,
                    steered_unseen,
                    steer_time,
                }
            })
            .collect()
    })
}

#[test]
fn synthetic_zero_shot_end_to_end() {
    let _guard = serial();
    let runs = seed_runs();
    let hits = runs.iter().filter(|r| r.clean_unseen >= 0.6).count();
    let elapsed: Duration = runs.iter().map(|r| r.clean_time).sum();
    let accs: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: {:.1}%", r.seed, 100.0 * r.clean_unseen))
        .collect();
    let pass = hits >= 4 && elapsed < Duration::from_secs(120);
    let detail = format!(
        "unseen mean per-class accuracy [{}], {hits}/5 at >= 60% (need 4), {:.1}s (budget 120s)",
        accs.join(", "),
        secs(elapsed)
    );
    assert!(report("A3", "synthetic zero-shot", pass, &detail));
}

#[test]
fn planted_corruption_is_detected() {
    let _guard = serial();
    let runs = seed_runs();
    let hits = runs.iter().filter(|r| r.corrupt_rank < 3).count();
    let elapsed: Duration = runs.iter().map(|r| r.corrupt_time).sum();
    let ranks: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: rank {} top3 {:?}", r.seed, r.corrupt_rank + 1, r.top3))
        .collect();
    let pass = hits >= 4 && elapsed < Duration::from_secs(120);
    let detail = format!(
        "attribute {CORRUPT} by total score [{}], {hits}/5 in top 3 (need 4), {:.1}s (budget 120s)",
        ranks.join("; "),
        secs(elapsed)
    );
    assert!(report("A4", "planted corruption detection", pass, &detail));
}

#[test]
fn steering_improves_unseen_accuracy() {
    let _guard = serial();
    let runs = seed_runs();
    let deltas: Vec<f64> = runs
        .iter()
        .map(|r| 100.0 * (r.steered_unseen - r.base_unseen))
        .collect();
    let hits = deltas.iter().filter(|&&d| d >= 5.0).count();
    let elapsed: Duration = runs.iter().map(|r| r.steer_time).sum();
    let detail: Vec<String> = runs
        .iter()
        .zip(&deltas)
        .map(|(r, d)| {
            format!(
                "seed {}: {:.1}% -> {:.1}% ({d:+.1} pp)",
                r.seed,
                100.0 * r.base_unseen,
                100.0 * r.steered_unseen
            )
        })
        .collect();
    let pass = hits >= 4 && elapsed < Duration::from_secs(180);
    let detail = format!(
        "w[{CORRUPT}] = 0.5 [{}], {hits}/5 improve >= 5 pp (need 4), {:.1}s (budget 180s)",
        detail.join("; "),
        secs(elapsed)
    );
    assert!(report("A5", "steering efficacy", pass, &detail));
}

#[test]
fn zero_weight_column_is_ignored() {
    let _guard = serial();
    let start = Instant::now();
    let p = prepare(synthetic(6, None), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let m = MappingModel::init(32, 64, 12, &mut rng);
    let instances: Vec<usize> = (0..1000).map(|_| rng.random_range(0..p.dataset.num_instances())).collect();
    let classes: Vec<usize> = (0..p.dataset.num_classes()).collect();
    let mut changed = 0;
    for k in 0..12 {
        let mut w: Vec<f64> = (0..12).map(|_| rng.random_range(0.2..=1.0)).collect();
        w[k] = 0.0;
        let before = predict_instances(&m, &instances, &classes, &p.dataset, &p.signatures, &w).unwrap();
        let mut shuffled = p.signatures.matrix().clone();
        for c in 0..shuffled.rows() {
            shuffled.set(c, k, rng.random_range(-50.0..50.0));
        }
        let sig = SignatureMatrix::from_matrix(shuffled);
        let after = predict_instances(&m, &instances, &classes, &p.dataset, &sig, &w).unwrap();
        changed += before.iter().zip(&after).filter(|(a, b)| a != b).count();
    }
    let elapsed = start.elapsed();
    let pass = changed == 0 && elapsed < Duration::from_secs(5);
    let detail = format!(
        "{changed} changed predictions over 1000 instances x 12 zeroed columns, {:.2}s (budget 5s)",
        secs(elapsed)
    );
    assert!(report("A6", "weight-zero invariance", pass, &detail));
}

#[test]
fn tsne_invariants() {
    let _guard = serial();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let data: Vec<f64> = (0..50 * 85).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(50, 85, data).unwrap();
        let config = TsneConfig {
            seed,
            ..TsneConfig::default()
        };
        let target = config.effective_perplexity(50);

        let p = compute_affinities(&x, target).unwrap();
        let mut asym: f64 = 0.0;
        let mut total = 0.0;
        for i in 0..50 {
            for j in 0..50 {
                asym = asym.max((p.get(i, j) - p.get(j, i)).abs());
                total += p.get(i, j);
            }
        }
        let cond = conditional_affinities(&x, target).unwrap();
        let mut perp_err: f64 = 0.0;
        for row in cond.probabilities.iter_rows() {
            let entropy: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
            perp_err = perp_err.max((entropy.exp() - target).abs());
        }

        let start = Instant::now();
        let emb = project(&x, &config).unwrap();
        let elapsed = start.elapsed();
        let kl_250 = emb.kl_history[249];
        let kl_final = emb.final_kl();

        let ok = asym <= 1e-12
            && (total - 1.0).abs() <= 1e-9
            && perp_err <= 1e-3
            && kl_final <= kl_250
            && elapsed < Duration::from_secs(10);
        if !ok {
            failures.push(seed);
        }
        lines.push(format!(
            "seed {seed}: asym {asym:.1e}, |sum-1| {:.1e}, perplexity err {perp_err:.1e}, KL {kl_250:.4} -> {kl_final:.4}, {:.2}s",
            (total - 1.0).abs(),
            secs(elapsed)
        ));
    }
    let pass = failures.is_empty();
    let detail = format!(
        "target perplexity 16 [{}], {}/5 seeds ok (tol 1e-12 / 1e-9 / 1e-3, budget 10s)",
        lines.join("; "),
        5 - failures.len()
    );
    assert!(report("A7", "t-SNE invariants", pass, &detail));
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["zsl"];
    argv.extend_from_slice(args);
    zsl_cli::run(argv)
}

#[test]
fn training_is_deterministic() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = s(&dir.path().join("data"));
    let (a, b) = (s(&dir.path().join("a.zslm")), s(&dir.path().join("b.zslm")));
    assert_eq!(cli(&["synth", "--seed", "8", "--out", &data]), 0);
    let flags = ["--epochs", "10", "--seed", "8"];
    for out in [&a, &b] {
        let mut args = vec!["train", "--data", &data, "--out", out];
        args.extend_from_slice(&flags);
        assert_eq!(cli(&args), 0);
    }
    let (bytes_a, bytes_b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let identical = bytes_a == bytes_b;

    let ck = decode_checkpoint(&bytes_a).unwrap();
    let ds = load_dataset(&data).unwrap();
    let split_file = ck.split.clone().unwrap();
    let split = make_split(&ds, &split_file.unseen, split_file.diag_fraction, split_file.seed).unwrap();
    let sig = standardize_signatures(ds.raw_attributes()).unwrap();
    let state = SteeringState::new(ds.num_attributes());
    let outcome = steering::retrain(&ds, &split, &sig, &state, &ck.config).unwrap();
    let all: Vec<usize> = (0..ds.num_instances()).collect();
    let classes: Vec<usize> = (0..ds.num_classes()).collect();
    let w = vec![1.0; ds.num_attributes()];
    let base = predict_instances(&ck.model, &all, &classes, &ds, &sig, &w).unwrap();
    let again = predict_instances(&outcome.model, &all, &classes, &ds, &sig, &w).unwrap();
    let differing = base.iter().zip(&again).filter(|(x, y)| x != y).count();
    let same_params = outcome.model == ck.model;

    let pass = identical && differing == 0 && same_params;
    let detail = format!(
        "checkpoints {} ({} bytes), unit-weight retrain: {differing}/{} predictions differ, parameters {}",
        if identical { "bit-identical" } else { "differ" },
        bytes_a.len(),
        all.len(),
        if same_params { "identical" } else { "differ" }
    );
    assert!(report("A8", "determinism", pass, &detail));
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[test]
fn api_is_coherent_with_the_library() {
    let _guard = serial();
    let p = prepare(synthetic(9, Some(CORRUPT)), 9);
    let config = TrainConfig {
        seed: 9,
        epochs: 5,
        hidden_dim: 64,
        ..TrainConfig::default()
    };
    let ones = vec![1.0; 12];
    let (m, _) = model::train(&p.dataset, &p.split, &p.signatures, &ones, &config).unwrap();
    let seen = p.split.seen_classes.clone();
    let direct = diagnose(&m, &p.dataset, &p.split, &p.signatures, &ones, &seen).unwrap();
    let session = Session::new(SessionInputs {
        dataset: p.dataset,
        split: p.split,
        signatures: p.signatures,
        model: m,
        config,
        weights: ones,
        tsne: TsneConfig {
            seed: 9,
            ..TsneConfig::default()
        },
        eval_unseen: false,
    })
    .unwrap();
    let app = router(AppState::ready(session), None);

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (q_err, sum_err, cells, new_weight) = rt.block_on(async {
        let names: Vec<String> = seen.iter().map(|c| format!("seen_{c:02}")).collect();
        let (status, body) = call(&app, "GET", &format!("/api/diagnostics?seen={}", names.join(",")), None).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let payload: DiagnosticsPayload = serde_json::from_value(body).unwrap();
        let mut q_err: f64 = 0.0;
        for (got, want) in [(&payload.q_over, &direct.q_over), (&payload.q_under, &direct.q_under)] {
            for (k, row) in got.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    q_err = q_err.max((v - want.get(k, j)).abs());
                }
            }
        }
        let (mut sum_err, mut cells) = (0.0f64, 0);
        for k in 0..12 {
            for (j, cat) in names.iter().enumerate() {
                for (side, q) in [("over", &payload.q_over), ("under", &payload.q_under)] {
                    let uri = format!("/api/decomposition?attr={k}&cat={cat}&side={side}");
                    let (status, d) = call(&app, "GET", &uri, None).await;
                    assert_eq!(status, StatusCode::OK, "{d}");
                    let total: f64 = d["contributions"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|c| c["value"].as_f64().unwrap())
                        .sum();
                    sum_err = sum_err.max((total - q[k][j]).abs());
                    cells += 1;
                }
            }
        }
        let (status, w) = call(&app, "POST", "/api/weights", Some(json!({"attr": 4, "delta": -0.1}))).await;
        assert_eq!(status, StatusCode::OK);
        (q_err, sum_err, cells, w["weights"][4].as_f64().unwrap())
    });
    let pass = q_err <= 1e-12 && sum_err <= 1e-9 && new_weight == 0.9;
    let detail = format!(
        "max |api - direct| q = {q_err:.1e} (tol 1e-12), max breakdown residual {sum_err:.1e} over {cells} cells (tol 1e-9), weight after -0.1 = {new_weight}"
    );
    assert!(report("A9", "API coherence", pass, &detail));
}

#[test]
fn awa_accuracy_is_reported() {
    let _guard = serial();
    let Ok(dir) = std::env::var("ZSL_AWA_DATA") else {
        let _ = writeln!(std::io::stderr().lock(), "A10 SKIP AwA unseen accuracy (informational): ZSL_AWA_DATA not set");
        return;
    };
    let outcome = (|| -> zsl_core::Result<(f64, usize)> {
        let ds = load_dataset(&dir)?;
        let split_file = load_split_file(&dir)?
            .ok_or_else(|| zsl_core::Error::InvalidArgument(format!("{dir} has no split.json")))?;
        let split = make_split(&ds, &split_file.unseen, split_file.diag_fraction, split_file.seed)?;
        let sig = standardize_signatures(ds.raw_attributes())?;
        let w = vec![1.0; ds.num_attributes()];
        let config = TrainConfig {
            seed: split_file.seed,
            ..TrainConfig::default()
        };
        let (m, _) = model::train(&ds, &split, &sig, &w, &config)?;
        let metrics = steering::unseen_metrics(&m, &ds, &split, &sig, &w)?;
        Ok((metrics.overall, metrics.total))
    })();
    // Informational only: the verdict is printed, never asserted.
    match outcome {
        Ok((acc, n)) => {
            let in_band = (0.45..=0.60).contains(&acc);
            let detail = format!("overall unseen accuracy {:.1}% on {n} instances (band 45-60%)", 100.0 * acc);
            report("A10", "AwA unseen accuracy (informational)", in_band, &detail);
        }
        Err(e) => {
            report("A10", "AwA unseen accuracy (informational)", false, &format!("could not run: {e}"));
        }
    }
}
