//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{loss_gradient_error, score_gradient_error, ts, TOLERANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tkge_core::checkpoint::Checkpoint;
use tkge_core::dataset::DatasetManifest;
use tkge_core::evaluation::{evaluate, filtered_rank, rank_from_scores, EvalOptions, Metrics, RankPair, TiePolicy};
use tkge_core::forecasting::{forecast, heatmap_matrix, TimeGrid, TimeStep};
use tkge_core::kg::{EntityId, FilterIndex, FilterScope, Quadruple, RelationId};
use tkge_core::models::rotation::{modulus, tero_time_rotate};
use tkge_core::models::{init_parameters, ModelDims, ModelKind, ModelParameters, RotationNorm, Slot};
use tkge_core::training::grid::{grid_search, GridSpec};
use tkge_core::training::sampling::corrupt;
use tkge_core::training::{train, LossReduction, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, started: Instant, detail: String) -> Outcome {
    let elapsed = started.elapsed();
    if elapsed <= limit {
        Ok(format!("{detail} in {:.1}s", elapsed.as_secs_f64()))
    } else {
        Err(format!("{detail} but took {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
    }
}

// 1. Filtered ranks against a brute-force count written straight from the
// rank definition.

fn brute_force_rank(q: &Quadruple, slot: Slot, params: &ModelParameters, known: &HashSet<Quadruple>) -> usize {
    let truth = params.score(q).unwrap();
    let mut rank = 1;
    for e in 0..params.n_entities {
        let candidate = match slot {
            Slot::Head => Quadruple { head: EntityId(e), ..*q },
            Slot::Tail => Quadruple { tail: EntityId(e), ..*q },
        };
        if candidate == *q || known.contains(&candidate) {
            continue;
        }
        if params.score(&candidate).unwrap() >= truth {
            rank += 1;
        }
    }
    rank
}

fn ranking_oracle() -> Outcome {
    let started = Instant::now();
    let shapes = [(20, 5, 8, 300), (12, 3, 5, 150), (20, 2, 8, 250), (8, 4, 3, 90), (15, 5, 6, 200)];
    let mut checked = 0;
    let mut ties = 0;
    for (i, &(ne, nr, nt, nq)) in shapes.iter().enumerate() {
        let kg = common::random_kg(100 + i as u64, ne, nr, nt, nq);
        let kind = ModelKind::ALL[i % ModelKind::ALL.len()];
        let mut params = init_parameters(kind, &ModelDims::for_kg(&kg, 6, 0.5), i as u64).unwrap();
        if i % 2 == 1 {
            // Coarse parameters produce exact score ties.
            for t in &mut params.tensors {
                t.data.iter_mut().for_each(|v| *v = (*v * 4.0).round() / 2.0);
            }
        }
        let known: HashSet<Quadruple> = kg.train().iter().chain(kg.valid()).copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7 + i as u64);
        for _ in 0..100 {
            let q = kg.test()[rng.gen_range(0..kg.test().len())];
            let slot = if rng.gen_bool(0.5) { Slot::Head } else { Slot::Tail };
            let expected = brute_force_rank(&q, slot, &params, &known);
            let got = filtered_rank(&q, slot, &params, kg.filter()).unwrap();
            if got != expected {
                return Err(format!("kg {i} ({kind}) {q:?} {slot:?}: rank {got}, oracle {expected}"));
            }
            let scores = params.score_candidates(&q, slot).unwrap();
            let target = params.score(&q).unwrap();
            ties += scores.iter().filter(|&&s| s == target).count() - 1;
            checked += 1;
        }
    }
    within(Duration::from_secs(10), started, format!("{checked} queries on 5 graphs match exactly ({ties} score ties)"))
}

// 2. Metric formulas on hand-computed rank lists.

fn metric_formulas() -> Outcome {
    let pair = |head, tail| RankPair { head, tail };
    let ks = [1, 3, 10];
    let mut failures = Vec::new();
    let mut expect = |what: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{what}: {got} != {want}"));
        }
    };

    let m = Metrics::from_ranks(&[pair(1.0, 2.0)], &ks);
    expect("MRR(1,2)", m.mrr, 0.75);
    expect("MR(1,2)", m.mr, 1.5);
    expect("H@1(1,2)", m.hits_at(1).unwrap(), 0.5);
    expect("H@3(1,2)", m.hits_at(3).unwrap(), 1.0);

    // Ranks 1, 3, 10, 4, 2, 50.
    let m = Metrics::from_ranks(&[pair(1.0, 3.0), pair(10.0, 4.0), pair(2.0, 50.0)], &ks);
    expect("MRR", m.mrr, (1.0 + 1.0 / 3.0 + 0.1 + 0.25 + 0.5 + 0.02) / 6.0);
    expect("MR", m.mr, 70.0 / 6.0);
    expect("H@1", m.hits_at(1).unwrap(), 1.0 / 6.0);
    expect("H@3", m.hits_at(3).unwrap(), 3.0 / 6.0);
    expect("H@10", m.hits_at(10).unwrap(), 5.0 / 6.0);

    // One candidate above the truth and two tied with it.
    let q = Quadruple::new(EntityId(0), RelationId(0), EntityId(1), ts(2020, 1, 1));
    let scores = [0.5, 0.5, 0.9, 0.5, 0.1];
    let empty = FilterIndex::default();
    expect("pessimistic ties", rank_from_scores(&scores, &q, Slot::Head, &empty, TiePolicy::Pessimistic), 4.0);
    expect("mean over ties", rank_from_scores(&scores, &q, Slot::Head, &empty, TiePolicy::MeanOverTies), 3.0);

    check(failures.is_empty(), if failures.is_empty() { "3 rank lists reproduce MRR/MR/H@k to 1e-12".into() } else { failures.join("; ") })
}

// 3. Finite-difference gradient checks.

fn gradients() -> Outcome {
    let started = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    for kind in ModelKind::ALL {
        let e = (0..20).map(|s| score_gradient_error(kind, RotationNorm::L1, s)).fold(0.0, f64::max);
        worst.push((kind.to_string(), e));
    }
    let e = (0..20).map(|s| score_gradient_error(ModelKind::TeRo, RotationNorm::L2, s)).fold(0.0, f64::max);
    worst.push(("tero-l2".into(), e));
    for reduction in [LossReduction::Sum, LossReduction::Mean] {
        let e = ModelKind::ALL
            .into_iter()
            .flat_map(|k| (0..20).map(move |s| loss_gradient_error(k, reduction, s)))
            .fold(0.0, f64::max);
        worst.push((format!("loss-{reduction:?}").to_lowercase(), e));
    }
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let bad: Vec<String> = worst.iter().filter(|(_, e)| *e >= TOLERANCE).map(|(n, e)| format!("{n} {e:.1e}")).collect();
    if !bad.is_empty() {
        return Err(format!("relative error too large: {}", bad.join(", ")));
    }
    within(
        Duration::from_secs(60),
        started,
        format!("7 scores + loss at 20 points each, worst relative error {max:.1e}"),
    )
}

// 4. Reduction identities.

fn reductions() -> Outcome {
    let d = ModelDims {
        n_entities: 30,
        n_relations: 4,
        dim: 10,
        gamma: 0.0,
        norm: RotationNorm::L1,
        time_origin: ts(2000, 1, 1),
        time_table: (0..5).map(|i| ts(2000 + i, 1, 1)).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let quads: Vec<Quadruple> = (0..1000)
        .map(|_| {
            Quadruple::new(
                EntityId(rng.gen_range(0..30)),
                RelationId(rng.gen_range(0..4)),
                EntityId(rng.gen_range(0..30)),
                d.time_table[rng.gen_range(0..5)],
            )
        })
        .collect();
    let mut worst = 0.0f64;
    for (de, base) in [(ModelKind::DeTransE, ModelKind::TransE), (ModelKind::DeDistMult, ModelKind::DistMult)] {
        let stat = init_parameters(base, &d, 1).unwrap();
        let mut dia = init_parameters(de, &d, 2).unwrap();
        dia.tensors[0].data = stat.tensor("entity").unwrap().data.clone();
        dia.tensors[3].data = stat.tensor("relation").unwrap().data.clone();
        for q in &quads {
            worst = worst.max((dia.score(q).unwrap() - stat.score(q).unwrap()).abs());
        }
    }

    let mut tero = init_parameters(ModelKind::TeRo, &d, 3).unwrap();
    let dim = d.dim;
    for t in &mut tero.tensors {
        let is_time = t.name == "time";
        for i in 0..t.rows {
            let row = t.row_mut(i);
            if is_time {
                row[..dim].iter_mut().for_each(|v| *v = 1.0);
            }
            row[dim..].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    for q in &quads {
        let h = &tero.tensor("entity").unwrap().row(q.head.0)[..dim];
        let r = &tero.tensor("relation").unwrap().row(q.relation.0)[..dim];
        let t = &tero.tensor("entity").unwrap().row(q.tail.0)[..dim];
        let l1_transe = -(0..dim).map(|k| (h[k] + r[k] - t[k]).abs()).sum::<f64>();
        worst = worst.max((tero.score(q).unwrap() - l1_transe).abs());
    }
    check(worst < 1e-12, format!("DE(γ=0) = static and identity-time TeRo = L1 TransE on 1000 facts, max deviation {worst:.1e}"))
}

// 5. Rotation isometry.

fn isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let d = rng.gen_range(1..=16);
        let x: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let angles: Vec<f64> = (0..d).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let tau: Vec<f64> = angles.iter().map(|a| a.cos()).chain(angles.iter().map(|a| a.sin())).collect();
        let before = modulus(&x);
        let after = modulus(&tero_time_rotate(&x, &tau));
        for (a, b) in before.iter().zip(&after) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst < 1e-12, format!("10^4 random rotations, max modulus change {worst:.1e}"))
}

// 6. Learnability on a synthetic windowed graph.

fn learnability() -> Outcome {
    let started = Instant::now();
    let kg = common::windowed_kg(7);
    let n = kg.n_entities();
    let uniform = (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64;
    let config = TrainConfig {
        learning_rate: 0.001,
        dim: 50,
        margin: 1.0,
        n_neg: 10,
        batch_size: 256,
        n_epochs: 200,
        gamma: 0.2,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::TaDistMult, ModelKind::DeDistMult] {
        let untrained = init_parameters(kind, &config.model_dims(&kg), config.seed).unwrap();
        let before = evaluate(kg.test(), &untrained, &kg, &EvalOptions::default()).unwrap().mrr();
        let out = train(&kg, kind, &config).map_err(|e| e.to_string())?;
        let after = evaluate(kg.test(), &out.params, &kg, &EvalOptions::default()).unwrap().mrr();
        ok &= after >= 0.5;
        parts.push(format!("{kind} test MRR {after:.3} (untrained {before:.3}, best epoch {})", out.best_epoch));
    }
    let detail = format!("{}; uniform ranker {uniform:.3}", parts.join(", "));
    if !ok {
        return Err(format!("{detail}; need >= 0.5"));
    }
    within(Duration::from_secs(300), started, detail)
}

// 7. Negative sampler statistics.

fn sampler() -> Outcome {
    let (n_entities, n_samples) = (100usize, 100_000usize);
    let q = Quadruple::new(EntityId(3), RelationId(0), EntityId(71), ts(2021, 6, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut heads = 0usize;
    let mut head_counts = vec![0usize; n_entities];
    let mut tail_counts = vec![0usize; n_entities];
    for _ in 0..n_samples {
        let (neg, slot) = corrupt(&q, n_entities, &mut rng);
        match slot {
            Slot::Head if neg.tail == q.tail && neg.head != q.head => {
                heads += 1;
                head_counts[neg.head.0] += 1;
            }
            Slot::Tail if neg.head == q.head && neg.tail != q.tail => tail_counts[neg.tail.0] += 1,
            _ => return Err(format!("malformed negative {neg:?} for slot {slot:?}")),
        }
    }
    let rate = heads as f64 / n_samples as f64;
    let critical = ChiSquared::new((n_entities - 2) as f64).unwrap().inverse_cdf(0.99);
    let chi2 = |counts: &[usize], skip: usize| {
        let total: usize = counts.iter().sum();
        let expected = total as f64 / (n_entities - 1) as f64;
        (0..n_entities).filter(|&e| e != skip).map(|e| (counts[e] as f64 - expected).powi(2) / expected).sum::<f64>()
    };
    let (ch, ct) = (chi2(&head_counts, q.head.0), chi2(&tail_counts, q.tail.0));
    check(
        (rate - 0.5).abs() <= 0.01 && ch < critical && ct < critical,
        format!("head rate {rate:.4}, χ² head {ch:.1} / tail {ct:.1} vs critical {critical:.1} (98 dof, α = 0.01)"),
    )
}

// 8. Determinism and persistence.

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files.into_iter().map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap())).collect()
}

fn determinism() -> Outcome {
    let kg = common::random_kg(8, 16, 3, 6, 200);
    let config = TrainConfig { dim: 8, n_epochs: 6, batch_size: 40, eval_every: 3, gamma: 0.25, seed: 11, ..TrainConfig::default() };
    let tmp = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let mut dirs = Vec::new();
        let mut first = None;
        for run in 0..2 {
            let out = train(&kg, kind, &config).map_err(|e| e.to_string())?;
            let dir = tmp.path().join(format!("{kind}-{run}"));
            Checkpoint::new(out.params.clone(), &kg, out.best_epoch, config.seed).save(&dir).map_err(|e| e.to_string())?;
            dirs.push(dir);
            first.get_or_insert(out.params);
        }
        if dir_bytes(&dirs[0]) != dir_bytes(&dirs[1]) {
            return Err(format!("{kind}: two runs wrote different checkpoints"));
        }
        let in_memory = evaluate(kg.test(), first.as_ref().unwrap(), &kg, &EvalOptions::default()).unwrap();
        let loaded = Checkpoint::load(&dirs[0]).map_err(|e| e.to_string())?;
        loaded.check_compatible(&kg).map_err(|e| e.to_string())?;
        let reloaded = evaluate(kg.test(), &loaded.params, &kg, &EvalOptions::default()).unwrap();
        if in_memory != reloaded {
            return Err(format!("{kind}: evaluation after reload differs"));
        }
    }
    Ok("7 models: byte-identical checkpoints from two runs; reload reproduces evaluation exactly".into())
}

// 9. Grid harness.

fn grid() -> Outcome {
    let full = GridSpec::default();
    let (de, ta) = (full.points(ModelKind::DeDistMult).len(), full.points(ModelKind::TaDistMult).len());
    if de != 288 {
        return Err(format!("DE grid has {de} points"));
    }
    let kg = common::random_kg(12, 15, 2, 4, 200);
    let base = TrainConfig { dim: 8, n_epochs: 20, batch_size: 64, eval_every: 5, ..TrainConfig::default() };
    // The 1e-9 learning rate leaves the parameters at initialisation.
    let toy = GridSpec { learning_rates: vec![1e-9, 0.05], n_negs: vec![10], margins: vec![1.0], dims: vec![8], gammas: vec![0.1], base };
    let entries = grid_search(&kg, ModelKind::DistMult, &toy).map_err(|e| e.to_string())?;
    let order: Vec<f64> = entries.iter().map(|e| e.config.learning_rate).collect();
    let mrrs: Vec<f64> = entries.iter().map(|e| e.valid_mrr.unwrap_or(f64::NAN)).collect();
    check(
        order == [0.05, 1e-9] && mrrs[0] > mrrs[1],
        format!("DE grid {de} points (TA {ta}); toy grid ranks lr 0.05 (MRR {:.3}) over lr 1e-9 (MRR {:.3})", mrrs[0], mrrs[1]),
    )
}

// 10. Forecasting mechanics.

fn forecasting_mechanics() -> Outcome {
    let grid = TimeGrid::new(ts(2010, 1, 1), ts(2025, 1, 1), TimeStep::Quarterly).unwrap().points();
    if grid.len() != 61 || grid[0] != ts(2010, 1, 1) || grid[60] != ts(2025, 1, 1) {
        return Err(format!("quarterly grid has {} points", grid.len()));
    }
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy");
    let kg = DatasetManifest::directory(&data).load(FilterScope::TrainValid).map_err(|e| e.to_string())?;
    let entity = |n: &str| EntityId(kg.entities().id_of(n).unwrap());
    let skills_text = fs::read_to_string(data.join("skills.txt")).unwrap();
    let skills: Vec<EntityId> = skills_text.lines().filter(|l| !l.trim().is_empty()).map(|l| entity(l.trim())).collect();
    let job = entity("Production Leader");
    let requires = RelationId(kg.relations().id_of("requires").unwrap());

    let mut worst = 0.0f64;
    for kind in ModelKind::ALL {
        let config = TrainConfig { dim: 8, n_epochs: 10, batch_size: 8, eval_every: 5, gamma: 0.25, ..TrainConfig::default() };
        let params = train(&kg, kind, &config).map_err(|e| e.to_string())?.params;
        let fc = forecast(job, requires, &skills, &grid, &params).map_err(|e| e.to_string())?;
        for (j, p) in fc.mean.points.iter().enumerate() {
            let mean = fc.skills.iter().map(|s| s.points[j].score).sum::<f64>() / skills.len() as f64;
            worst = worst.max((p.score - mean).abs());
        }
        let hm = heatmap_matrix(job, requires, &skills, skills.len(), &grid, &params).map_err(|e| e.to_string())?;
        let means: Vec<f64> = hm.values.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect();
        if means.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("{kind}: heatmap row means {means:?} not non-increasing"));
        }
        for (skill, row) in hm.skills.iter().zip(&hm.values) {
            let series = fc.skills.iter().find(|s| s.tail == Some(*skill)).unwrap();
            if series.points.iter().map(|p| p.score).ne(row.iter().copied()) {
                return Err(format!("{kind}: heatmap row differs from forecast"));
            }
        }
    }
    check(worst <= 1e-12, format!("61 quarterly points; mean series deviation {worst:.1e}; heatmap rows ordered for 7 models"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("ranking oracle equivalence", ranking_oracle),
        ("metric formulas", metric_formulas),
        ("gradient correctness", gradients),
        ("reduction identities", reductions),
        ("rotation isometry", isometry),
        ("synthetic learnability", learnability),
        ("negative sampler statistics", sampler),
        ("determinism and persistence", determinism),
        ("grid harness", grid),
        ("forecasting mechanics", forecasting_mechanics),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
