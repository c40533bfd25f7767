// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use discort_core::annotate::{logistic_gradient, logistic_loss};
use discort_core::evaluation::{holdout_experiment, macro_f1, micro_f1, Protocol};
use discort_core::features::{label_posterior, label_prior, modularity_features, modularity_matrix, FeatureBlocks};
use discort_core::periodicity::{dominant_periods, fft, periodogram, ActivitySequence, ThresholdPolicy};
use discort_core::pipeline::{relevances, run_pipeline, Inputs, PipelineConfig};
use discort_core::rgt::{build_rgt, RelationalGraphOfThings, RgtEdge};
use discort_core::rwr::{rwr_closed_form, rwr_steady_state, transition_matrix, DanglingPolicy, RwrConfig};
use discort_core::sparse::CsrMatrix;
use discort_core::synth::{generate, write_synth, SynthConfig};

type Outcome = Result<String, String>;

fn random_graph(rng: &mut ChaCha8Rng) -> CsrMatrix {
    let n = rng.gen_range(2..=50);
    let density = rng.gen_range(0.05..0.6);
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.gen_bool(density) {
                t.push((i, j, rng.gen_range(0.0..5.0)));
            }
        }
    }
    if t.is_empty() {
        t.push((0, 1, 1.0));
    }
    CsrMatrix::from_triplets(n, n, t)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for g in 0..120 {
        let w = random_graph(&mut rng);
        let c = [0.1, 0.5, 0.9][g % 3];
        let cfg = RwrConfig { c, ..RwrConfig::default() };
        let p = transition_matrix(&w, DanglingPolicy::SelfLoop).map_err(|e| e.to_string())?;
        for seed in 0..p.size() {
            let iter = rwr_steady_state(&p, seed, &cfg).map_err(|e| e.to_string())?;
            let exact = rwr_closed_form(&p, seed, c).map_err(|e| e.to_string())?;
            let err = iter.pi.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
        graphs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{graphs} graphs, max |power - closed form| = {worst:.2e}, {secs:.2}s");
    if worst <= 1e-8 && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let (mut col_err, mut mass_err, mut min_pi): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for g in 0..100 {
        let w = random_graph(&mut rng);
        let policy = if g % 2 == 0 { DanglingPolicy::SelfLoop } else { DanglingPolicy::Uniform };
        let p = transition_matrix(&w, policy).map_err(|e| e.to_string())?;
        for s in p.column_sums() {
            col_err = col_err.max((s - 1.0).abs());
        }
        let cfg = RwrConfig { c: [0.1, 0.5, 0.9][g % 3], dangling: policy, ..RwrConfig::default() };
        for seed in 0..p.size() {
            let pi = rwr_steady_state(&p, seed, &cfg).map_err(|e| e.to_string())?.pi;
            mass_err = mass_err.max((pi.iter().sum::<f64>() - 1.0).abs());
            min_pi = pi.iter().copied().fold(min_pi, f64::min);
        }
    }
    let detail = format!("max column-sum error {col_err:.1e}, max mass error {mass_err:.1e}, min pi {min_pi:.1e}");
    if col_err <= 1e-12 && mass_err <= 1e-8 && min_pi >= 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3() -> Outcome {
    let w = CsrMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]);
    let p = transition_matrix(&w, DanglingPolicy::SelfLoop).map_err(|e| e.to_string())?;
    let pi = rwr_steady_state(&p, 0, &RwrConfig { c: 0.5, tol: 1e-15, ..RwrConfig::default() })
        .map_err(|e| e.to_string())?
        .pi;
    let err = (pi[0] - 2.0 / 3.0).abs().max((pi[1] - 1.0 / 3.0).abs());
    let detail = format!("pi = ({:.15}, {:.15}), error {err:.1e}", pi[0], pi[1]);
    if err <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let n = 336;
    let planted: Vec<f64> = (0..n).map(|i| if i % 24 == 7 { 1.0 } else { 0.0 }).collect();
    let seq = ActivitySequence::new("loc", planted.clone()).map_err(|e| e.to_string())?;
    let p = periodogram(&seq);
    let found = dominant_periods(&p, ThresholdPolicy::default());
    let energy: f64 = planted.iter().map(|x| x * x).sum();
    let spectrum: f64 = fft(&planted).iter().map(|x| x.norm_sqr()).sum();
    let parseval = (energy - spectrum).abs();

    let constant = ActivitySequence::new("loc", vec![3.0; n]).map_err(|e| e.to_string())?;
    let constant_periods = dominant_periods(&periodogram(&constant), ThresholdPolicy::default());

    let mut false_positives = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let s = ActivitySequence::new("loc", noise).map_err(|e| e.to_string())?;
        if !dominant_periods(&periodogram(&s), ThresholdPolicy::default()).is_empty() {
            false_positives += 1;
        }
    }
    let detail = format!(
        "periods {found:?}, Parseval error {parseval:.1e}, constant -> {constant_periods:?}, noise FP {false_positives}/100"
    );
    if found.contains(&24) && parseval <= 1e-9 && constant_periods.is_empty() && false_positives <= 5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn undirected(n: usize, pairs: &[(usize, usize)]) -> RelationalGraphOfThings {
    let mut edges = Vec::new();
    for &(a, b) in pairs {
        edges.push(RgtEdge { src: a, dst: b, weight: 1.0 });
        edges.push(RgtEdge { src: b, dst: a, weight: 1.0 });
    }
    RelationalGraphOfThings::from_edges((0..n).map(|i| format!("n{i}")).collect(), edges, n).unwrap()
}

fn criterion_5() -> Outcome {
    // classic reduction on a random undirected graph
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let n = 25;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| rng.gen_bool(0.2))
        .collect();
    let b = modularity_matrix(&undirected(n, &pairs));
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in &pairs {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = d.iter().sum();
    let mut classic_err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            classic_err = classic_err.max((b[(i, j)] / 2.0 - (a[i][j] - d[i] * d[j] / two_m)).abs());
        }
    }

    // zero row sums on a random directed weighted graph
    let edges: Vec<RgtEdge> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .filter_map(|(i, j)| {
            rng.gen_bool(0.15).then(|| RgtEdge { src: i, dst: j, weight: rng.gen_range(0.01..2.0) })
        })
        .collect();
    let g = RelationalGraphOfThings::from_edges((0..n).map(|i| format!("n{i}")).collect(), edges, 5).unwrap();
    let bd = modularity_matrix(&g);
    let row_err = (0..n).map(|i| bd.row(i).sum().abs()).fold(0.0, f64::max);

    // two 10-cliques joined by one edge
    let mut cliques = Vec::new();
    for base in [0, 10] {
        for i in base..base + 10 {
            for j in i + 1..base + 10 {
                cliques.push((i, j));
            }
        }
    }
    cliques.push((9, 10));
    let fs = modularity_features(&undirected(20, &cliques), 1).map_err(|e| e.to_string())?;
    let left = fs[0][0] > 0.0;
    let recovered = (0..20).all(|i| (fs[i][0] > 0.0) == (if i < 10 { left } else { !left }));

    let detail = format!("classic error {classic_err:.1e}, max row sum {row_err:.1e}, two-clique split {recovered}");
    if classic_err <= 1e-12 && row_err <= 1e-9 && recovered {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let set = |ls: &[usize]| ls.iter().copied().collect::<BTreeSet<usize>>();
    let train = vec![set(&[0]), set(&[0, 1]), set(&[1]), set(&[])];
    let prior = label_prior(&train, 2).map_err(|e| e.to_string())?;
    let pi = [0.5, 0.2, 0.1, 0.2];
    let post = label_posterior(&pi, 3, &train, &prior, false);
    let (a, b) = (0.5 * (0.5 + 0.2) / 2.0, 0.5 * (0.2 + 0.1) / 2.0);
    let hand_err = (post[0] - a / (a + b)).abs().max((post[1] - b / (a + b)).abs());
    let sum_err = (post.iter().sum::<f64>() - 1.0).abs();

    let mut exact = true;
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    for _ in 0..200 {
        let r: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let base = label_posterior(&r, 3, &train, &prior, false);
        let c = 2f64.powi(rng.gen_range(-40..40));
        let scaled: Vec<f64> = r.iter().map(|x| x * c).collect();
        exact &= label_posterior(&scaled, 3, &train, &prior, false) == base;
    }
    let detail = format!("hand-case error {hand_err:.1e}, sum error {sum_err:.1e}, scale-invariant {exact}");
    if hand_err <= 1e-12 && sum_err <= 1e-9 && exact {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Pooled and per-label F1 by explicit enumeration of (thing, label) cells.
fn brute_force_f1(truth: &[BTreeSet<usize>], pred: &[BTreeSet<usize>], n_labels: usize) -> (f64, f64) {
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        }
    };
    let mut totals = (0, 0, 0);
    let mut per_label = Vec::new();
    for l in 0..n_labels {
        let mut c = (0, 0, 0);
        for (t, p) in truth.iter().zip(pred) {
            match (t.contains(&l), p.contains(&l)) {
                (true, true) => c.0 += 1,
                (false, true) => c.1 += 1,
                (true, false) => c.2 += 1,
                _ => {}
            }
        }
        totals = (totals.0 + c.0, totals.1 + c.1, totals.2 + c.2);
        if c != (0, 0, 0) {
            per_label.push(f1(c.0, c.1, c.2));
        }
    }
    let macro_avg = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().sum::<f64>() / per_label.len() as f64
    };
    (f1(totals.0, totals.1, totals.2), macro_avg)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let things = rng.gen_range(1..=10);
        let labels = rng.gen_range(1..=5);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<BTreeSet<usize>> {
            (0..things).map(|_| (0..labels).filter(|_| rng.gen_bool(0.4)).collect()).collect()
        };
        let truth = draw(&mut rng);
        let pred = draw(&mut rng);
        let (mi, ma) = brute_force_f1(&truth, &pred, labels);
        if micro_f1(&truth, &pred).unwrap() != mi || macro_f1(&truth, &pred).unwrap() != ma {
            mismatches += 1;
        }
    }
    let detail = format!("{mismatches} mismatches in 1000 random cases");
    if mismatches == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(3..12);
        let d = rng.gen_range(1..7);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let lambda = 1e-3;
        let (gw, gb) = logistic_gradient(&x, &y, &w, b, lambda);
        let h = 1e-5;
        for j in 0..=d {
            let f = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < d {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_loss(&x, &y, &w2, b2, lambda)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let an = if j < d { gw[j] } else { gb };
            worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-8));
        }
    }
    let detail = format!("max relative error {worst:.1e} over 20 instances");
    if worst < 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let data = generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let inputs = Inputs::new(data.log.clone(), &data.friendships, data.metadata.clone());
    let cfg = PipelineConfig::default();
    let rel = relevances(&inputs, &cfg).map_err(|e| e.to_string())?;
    let r = rel.combined(cfg.alpha, cfg.beta).map_err(|e| e.to_string())?;
    let g = build_rgt(&r, inputs.log.things(), 5).map_err(|e| e.to_string())?;
    let cluster = |i: usize| data.truth.clusters[&g.things()[i]];
    let inside = g.edges().iter().filter(|e| cluster(e.src) == cluster(e.dst)).count();
    let precision = inside as f64 / g.edges().len() as f64;

    let protocol = Protocol { fractions: vec![0.3], reps: 5, ..cfg.protocol() };
    let eval = inputs.eval_data();
    let mean = |blocks| -> Result<f64, String> {
        let rows = holdout_experiment(&eval, &r, blocks, &protocol, "", cfg.alpha, cfg.beta).map_err(|e| e.to_string())?;
        Ok(rows.iter().find(|x| x.rep.is_none()).map(|x| x.micro_f1).unwrap_or(0.0))
    };
    let combined = mean(FeatureBlocks::ALL)?;
    let content = mean(FeatureBlocks::CONTENT)?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "RGT top-5 precision {precision:.3}, micro-F1 combined {combined:.3}, content-only {content:.3}, {secs:.1}s"
    );
    if precision >= 0.8 && combined >= 0.85 && combined >= content && secs < 300.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = generate(&SynthConfig::default()).map_err(|e| e.to_string())?;
    write_synth(&data, &dir.path().join("data")).map_err(|e| e.to_string())?;
    let run = |jobs: usize, name: &str| -> Result<Vec<Vec<u8>>, String> {
        let cfg = PipelineConfig {
            events: Some(dir.path().join("data/events.csv")),
            friendships: Some(dir.path().join("data/friendships.csv")),
            metadata: Some(dir.path().join("data/metadata.jsonl")),
            out_dir: dir.path().join(name),
            ..PipelineConfig::default()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| e.to_string())?;
        let out = pool.install(|| run_pipeline(&cfg)).map_err(|e| e.to_string())?;
        [out.rgt, out.features, out.model, out.annotations, out.report]
            .iter()
            .map(|p| fs::read(p).map_err(|e| e.to_string()))
            .collect()
    };
    let a = run(1, "a")?;
    let b = run(1, "b")?;
    let c = run(4, "c")?;
    let detail = format!("{} artifacts, jobs 1 vs 1 vs 4", a.len());
    if a == b && a == c {
        Ok(detail)
    } else {
        Err(detail)
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("RWR power iteration matches closed form", criterion_1),
        ("stochasticity and mass conservation", criterion_2),
        ("two-node hand case", criterion_3),
        ("periodogram planted period, Parseval, controls", criterion_4),
        ("modularity reduction, row sums, two-clique split", criterion_5),
        ("label posterior normalization and scale invariance", criterion_6),
        ("F1 metrics against brute-force counts", criterion_7),
        ("logistic gradient against finite differences", criterion_8),
        ("synthetic end-to-end recovery", criterion_9),
        ("pipeline determinism across job counts", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
