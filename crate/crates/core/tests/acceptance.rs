//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness)
//! and prints one PASS/FAIL line per criterion; exits non-zero on any failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use h2pinn::checkpoint::{TrainedModel, TrainingMeta};
use h2pinn::data::{augment, stratified_split, AugmentConfig, Dataset, MembraneCatalog, Provenance, Record, SplitSpec};
use h2pinn::inference::{bench, extrapolation_study, random_points, BenchConfig, ExtrapolationConfig};
use h2pinn::nn::{Activation, Mlp, REFERENCE_PARAM_COUNT, REFERENCE_SIZES};
use h2pinn::physics::{crossover_concentration, physics_residuals, OperatingPoint, PhysicsParams};
use h2pinn::synth::{generate, sample_points, SynthConfig, ThicknessClass};
use h2pinn::train::{
    cross_validate, evaluate, loss_and_gradients, train, train_with_collocation, Collocation, CvPlan, Partitions,
    TrainConfig,
};
use h2pinn::uncertainty::{coverage, train_ensemble, DEFAULT_LEVELS};

// Tolerances and thresholds.
const FD_STEP: f64 = 1e-5;
const FD_MAX_REL: f64 = 1e-6;
/// Below `FD_REL_FLOOR·max(L, 1)` the comparison becomes absolute: central
/// differences at h = 1e-5 carry round-off of order ε·L/h (≈ 1e-11·L), which
/// swamps relative error on partials much smaller than the loss itself.
const FD_REL_FLOOR: f64 = 1e-4;
const RESIDUAL_MAX: f64 = 1e-12;
const RECOVERY_R2: f64 = 0.99;
const RECOVERY_RMSE_FRACTION: f64 = 0.05;
const FUSION_MARGIN_R2: f64 = 0.10;
const HENRY_REL: f64 = 1e-3;
const AUG_PHYSICS_REL: f64 = 0.05;
const AUG_MAX_PER_GAP: usize = 10;
const COVERAGE_95: (f64, f64) = (0.90, 0.98);
const LATENCY_MEAN_US: f64 = 2_000.0;
const ROUND_TRIP_ABS: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Three Nafion thickness classes: 117 (183 µm), 115 (127 µm), 1135 (89 µm).
fn recovery_catalog() -> MembraneCatalog {
    MembraneCatalog { classes: vec!["nafion117".into(), "nafion115".into(), "nafion1135".into()] }
}

fn recovery_design(n: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n,
        seed,
        log_current: true,
        classes: vec![
            ThicknessClass { membrane_id: 0, thickness: 183.0 },
            ThicknessClass { membrane_id: 1, thickness: 127.0 },
            ThicknessClass { membrane_id: 2, thickness: 89.0 },
        ],
        ..SynthConfig::default()
    }
}

fn split_partitions(ds: &Dataset, params: &PhysicsParams) -> Partitions {
    let strata: Vec<usize> = ds.records.iter().map(|r| r.point.membrane_id).collect();
    let split = stratified_split(&strata, &SplitSpec::default()).unwrap();
    Partitions::new(ds, &split, params).unwrap()
}

fn criterion_1() -> Outcome {
    let m = Mlp::<f64>::reference(42);
    outcome(m.param_count() == 17_793 && REFERENCE_PARAM_COUNT == 17_793, format!("{:?} -> {} parameters", REFERENCE_SIZES, m.param_count()))
}

fn criterion_2() -> Outcome {
    let params = PhysicsParams::default();
    let catalog = MembraneCatalog::default();
    let ds = generate(&SynthConfig { n: 80, seed: 2, ..Default::default() }, &params, &catalog).unwrap();
    let parts = split_partitions(&ds, &params);
    let colloc = Collocation { features: parts.test.features.clone(), physics: parts.test.physics.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut fd_check = |model: &Mlp<f64>, idx: &[usize], cidx: &[usize], beta: f64, which: &[usize]| {
        let (loss, g): (f64, _) = loss_and_gradients(model, &parts.train, idx, Some((&colloc, cidx)), beta);
        let floor = FD_REL_FLOOR * loss.abs().max(1.0);
        for &j in which {
            let mut plus = model.clone();
            plus.params_mut()[j] += FD_STEP;
            let mut minus = model.clone();
            minus.params_mut()[j] -= FD_STEP;
            let lp: f64 = loss_and_gradients(&plus, &parts.train, idx, Some((&colloc, cidx)), beta).0;
            let lm: f64 = loss_and_gradients(&minus, &parts.train, idx, Some((&colloc, cidx)), beta).0;
            let fd = (lp - lm) / (2.0 * FD_STEP);
            let rel = (fd - g.values[j]).abs() / fd.abs().max(g.values[j].abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    };
    for net in 0..20u64 {
        let sizes = [8, rng.gen_range(3..=12), rng.gen_range(3..=12), 1];
        let model = Mlp::<f64>::init(1000 + net, &sizes, Activation::Tanh).unwrap();
        let idx: Vec<usize> = (0..8).map(|_| rng.gen_range(0..parts.train.len())).collect();
        let cidx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..colloc.len())).collect();
        let all: Vec<usize> = (0..model.param_count()).collect();
        for beta in [0.0, 0.3, 1.0] {
            fd_check(&model, &idx, &cidx, beta, &all);
        }
    }
    // the reference topology, on a random subset of its parameters
    let model = Mlp::<f64>::reference(7);
    let idx: Vec<usize> = (0..8).collect();
    let sample: Vec<usize> = (0..300).map(|_| rng.gen_range(0..model.param_count())).collect();
    for beta in [0.0, 0.3, 1.0] {
        fd_check(&model, &idx, &[0, 1, 2], beta, &sample);
    }
    outcome(worst < FD_MAX_REL, format!("{checked} partials, max relative error {worst:.2e} (limit {FD_MAX_REL:e})"))
}

fn criterion_3() -> Outcome {
    let params = PhysicsParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 1_000 {
        let thickness = rng.gen_range(20.0..250.0);
        let pt = OperatingPoint {
            temperature_stack: rng.gen_range(5.0..120.0),
            pressure_cathode: rng.gen_range(1.0..200.0),
            pressure_anode: rng.gen_range(1.0..30.0),
            thickness,
            current_density: rng.gen_range(0.01..5.0),
            membrane_id: rng.gen_range(0..6),
            compression: rng.gen_range(0.0..0.3 * thickness),
            pt_interlayer: rng.gen(),
            h2_concentration: None,
        };
        let Ok(state) = crossover_concentration(&pt, &params) else { continue };
        worst = physics_residuals(&pt, &state, &params).iter().copied().fold(worst, f64::max);
        n += 1;
    }
    outcome(worst < RESIDUAL_MAX, format!("{n} points, max residual {worst:.2e} (limit {RESIDUAL_MAX:e})"))
}

fn criterion_4() -> Outcome {
    let params = PhysicsParams::default();
    let catalog = recovery_catalog();
    let design = recovery_design(200, 42);
    let ds = generate(&design, &params, &catalog).unwrap();
    let parts = split_partitions(&ds, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let colloc_points = sample_points(&SynthConfig { n: 4_000, ..design.clone() }, &mut rng).unwrap();
    let colloc = Collocation::new(&colloc_points, catalog.len(), &parts.scaler, &params).unwrap();
    let cfg = TrainConfig { physics_weight: 0.3, ..Default::default() };
    let mut model = Mlp::<f64>::init(cfg.seed, &cfg.layer_sizes, cfg.activation).unwrap();
    let report = train_with_collocation(&mut model, &parts.train, &parts.val, Some(&colloc), &cfg).unwrap();
    let m = evaluate(&model, &parts.test).unwrap();
    let y = &parts.test.labels;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let pass = ds.len() == 200 && m.r2 >= RECOVERY_R2 && m.rmse <= RECOVERY_RMSE_FRACTION * sd;
    outcome(
        pass,
        format!(
            "{} points, test R² {:.4}, RMSE {:.4} = {:.1}% of label σ, stopped at epoch {}",
            ds.len(),
            m.r2,
            m.rmse,
            100.0 * m.rmse / sd,
            report.stop_epoch
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = ExtrapolationConfig::default();
    let r = extrapolation_study(&cfg, &PhysicsParams::default(), &MembraneCatalog::default()).unwrap();
    let at = |p: f64, method: &str| r.r2(p, method).unwrap();
    let (nn, pinn, fusion) = (at(200.0, "nn"), at(200.0, "pinn"), at(200.0, "fusion"));
    let inside = ["nn", "pinn", "fusion"].map(|m| at(40.0, m));
    let spread = inside.iter().copied().fold(f64::MIN, f64::max) - inside.iter().copied().fold(f64::MAX, f64::min);
    let pass = fusion >= pinn && pinn >= nn && fusion - nn >= FUSION_MARGIN_R2;
    outcome(
        pass,
        format!(
            "R² at 200 bar: fusion {fusion:.4} ≥ PINN {pinn:.4} ≥ NN {nn:.4}, fusion − NN = {:.1} points; \
             spread at 40 bar {:.1} points",
            100.0 * (fusion - nn),
            100.0 * spread
        ),
    )
}

fn criterion_6() -> Outcome {
    let params = PhysicsParams::default();
    let mut worst: f64 = 0.0;
    let cathode_part = |p: f64, t: f64, i: f64| {
        let pt = OperatingPoint {
            temperature_stack: t,
            pressure_cathode: p,
            pressure_anode: 1.0,
            thickness: 183.0,
            current_density: i,
            membrane_id: 0,
            compression: 0.0,
            pt_interlayer: false,
            h2_concentration: None,
        };
        let s = crossover_concentration(&pt, &params).unwrap();
        // remove the anode back-pressure term from X
        s.h2_in_o2 * s.saturation_cathode / (s.saturation_cathode - s.saturation_anode)
    };
    for t in [25.0, 55.0, 85.0] {
        for i in [0.2, 1.0, 2.0] {
            for p in [10.0, 20.0, 40.0, 80.0, 100.0] {
                let ratio = cathode_part(2.0 * p, t, i) / cathode_part(p, t, i);
                worst = worst.max((ratio / 2.0 - 1.0).abs());
            }
        }
    }
    outcome(worst <= HENRY_REL, format!("max |X(2P)/X(P)/2 − 1| = {worst:.2e} for P ≥ 10 bar (limit {HENRY_REL:e})"))
}

fn criterion_7() -> Outcome {
    let params = PhysicsParams::default();
    let catalog = MembraneCatalog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut records = Vec::new();
    for (k, (t, p, membrane, thickness)) in
        [(25.0, 10.0, 0, 183.0), (60.0, 30.0, 1, 51.0), (80.0, 5.0, 0, 183.0), (45.0, 60.0, 3, 130.0)].into_iter().enumerate()
    {
        for i in [0.1, 0.3, 0.6, 1.0, 1.5, 2.0] {
            let pt = OperatingPoint {
                temperature_stack: t,
                pressure_cathode: p,
                pressure_anode: 1.0,
                thickness,
                current_density: i,
                membrane_id: membrane,
                compression: 0.0,
                pt_interlayer: false,
                h2_concentration: None,
            };
            let x = crossover_concentration(&pt, &params).unwrap().h2_in_o2;
            let noisy = x * (1.0 + 0.02 * rng.gen_range(-1.0..1.0));
            records.push(Record::experimental(format!("series-{k}"), OperatingPoint { h2_concentration: Some(noisy), ..pt }));
        }
    }
    let ds = Dataset::new(records, catalog).unwrap();
    let (out, stats) = augment(&ds, &AugmentConfig::default(), &params).unwrap();
    let knots: Vec<&Record> = out.records.iter().filter(|r| r.provenance == Provenance::Experimental).collect();
    let augmented: Vec<&Record> = out.records.iter().filter(|r| r.provenance == Provenance::Augmented).collect();
    let mut violations = 0;
    let mut max_gap = 0;
    for study in knots.iter().map(|r| r.study.clone()).collect::<std::collections::BTreeSet<_>>() {
        let mut k: Vec<&Record> = knots.iter().copied().filter(|r| r.study == study).collect();
        k.sort_by(|a, b| a.point.current_density.total_cmp(&b.point.current_density));
        for w in k.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut inside: Vec<&Record> = augmented
                .iter()
                .copied()
                .filter(|r| r.study == study && r.point.current_density > a.point.current_density && r.point.current_density < b.point.current_density)
                .collect();
            inside.sort_by(|x, y| x.point.current_density.total_cmp(&y.point.current_density));
            max_gap = max_gap.max(inside.len());
            let chain: Vec<f64> = std::iter::once(a.label()).chain(inside.iter().map(|r| r.label())).chain([b.label()]).collect();
            let rising = b.label() >= a.label();
            if chain.windows(2).any(|c| if rising { c[1] < c[0] } else { c[1] > c[0] }) {
                violations += 1;
            }
        }
    }
    for r in &augmented {
        let y = r.label();
        let x = crossover_concentration(&r.point, &params).unwrap().h2_in_o2;
        if !(0.0..=20.0).contains(&y) || (y - x).abs() > AUG_PHYSICS_REL * x {
            violations += 1;
        }
    }
    let pass = !augmented.is_empty() && violations == 0 && max_gap <= AUG_MAX_PER_GAP;
    outcome(
        pass,
        format!(
            "{} augmented points from {} series, {violations} violations, max {max_gap} per gap, {} rejected by physics",
            augmented.len(),
            stats.series,
            stats.rejected_physics
        ),
    )
}

fn criterion_8() -> Outcome {
    let params = PhysicsParams::default();
    let catalog = recovery_catalog();
    let design = recovery_design(200, 8);
    let ds = generate(&design, &params, &catalog).unwrap();
    let parts = split_partitions(&ds, &params);
    let cfg = TrainConfig::default();
    let ensemble = train_ensemble(&parts, &catalog, &params, &cfg, None, 25, 42, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs = sample_points(&SynthConfig { n: 1_000, seed: 80, ..design }, &mut rng).unwrap();
    let preds: Vec<_> = inputs.iter().map(|p| ensemble.predict(p).unwrap()).collect();
    // observations scattered around the ensemble mean with the ensemble's own spread
    let labels: Vec<f64> = preds
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            p.mean + p.std * z
        })
        .collect();
    let levels = coverage(&preds, &labels, &DEFAULT_LEVELS).unwrap();
    let c95 = levels.iter().find(|l| l.nominal == 0.95).unwrap().coverage;
    let monotone = levels.windows(2).all(|w| w[0].coverage <= w[1].coverage);
    let spread_ok = preds.iter().all(|p| p.std > 0.0);
    let pass = ensemble.len() == 25 && spread_ok && monotone && (COVERAGE_95.0..=COVERAGE_95.1).contains(&c95);
    let table: Vec<String> = levels.iter().map(|l| format!("{:.0}%→{:.3}", 100.0 * l.nominal, l.coverage)).collect();
    outcome(pass, format!("{} members, {} points, coverage {}", ensemble.len(), preds.len(), table.join(" ")))
}

fn criterion_9() -> Outcome {
    let params = PhysicsParams::default();
    let catalog = MembraneCatalog::default();
    let ds = generate(&SynthConfig { n: 120, seed: 9, ..Default::default() }, &params, &catalog).unwrap();
    let parts = split_partitions(&ds, &params);
    let cfg = TrainConfig { max_epochs: 60, ..Default::default() };
    let checkpoint_bytes = || {
        let mut mlp = Mlp::<f64>::init(cfg.seed, &cfg.layer_sizes, cfg.activation).unwrap();
        let r = train(&mut mlp, &parts.train, &parts.val, &cfg).unwrap();
        let meta = TrainingMeta { seed: cfg.seed, physics_weight: cfg.physics_weight, epochs: r.stop_epoch, best_epoch: r.best_epoch };
        let model = TrainedModel::new(mlp, parts.scaler.clone(), catalog.clone(), params, meta).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        buf
    };
    let identical = checkpoint_bytes() == checkpoint_bytes();

    let plan = CvPlan::default();
    let tiny = TrainConfig { layer_sizes: vec![8, 4, 1], max_epochs: 2, ..Default::default() };
    let cv = cross_validate(&ds, &tiny, &plan, &[0.3], &params, 0).unwrap();
    let mut seeds: Vec<u64> = cv.rows.iter().map(|r| r.seed).collect();
    let formula_ok = cv.rows.iter().all(|r| r.seed == 42 + 5 * r.rep as u64 + r.fold as u64);
    seeds.sort_unstable();
    let ledger_ok = seeds == (42..142).collect::<Vec<u64>>() && cv.aggregates[0].r2.n == 100;
    outcome(
        identical && formula_ok && ledger_ok,
        format!("checkpoints identical: {identical}; {} CV runs, seeds = 42 + 5r + f: {}", cv.rows.len(), formula_ok && ledger_ok),
    )
}

fn reference_model() -> TrainedModel {
    let params = PhysicsParams::default();
    let catalog = MembraneCatalog::default();
    let ds = generate(&SynthConfig { n: 100, seed: 10, ..Default::default() }, &params, &catalog).unwrap();
    let scaler = ds.normalize().unwrap().scaler;
    let meta = TrainingMeta { seed: 42, physics_weight: 0.3, epochs: 0, best_epoch: 0 };
    TrainedModel::new(Mlp::reference(42), scaler, catalog, params, meta).unwrap()
}

fn criterion_10() -> Outcome {
    let r = bench(&reference_model(), &BenchConfig::default()).unwrap();
    outcome(
        r.samples_us.len() == 900 && r.mean_us < LATENCY_MEAN_US,
        format!(
            "{} timed calls, mean {:.1} µs (p50 {:.1}, p95 {:.1}, p99 {:.1}); limit {LATENCY_MEAN_US} µs",
            r.samples_us.len(),
            r.mean_us,
            r.p50_us,
            r.p95_us,
            r.p99_us
        ),
    )
}

fn criterion_11() -> Outcome {
    let model = reference_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let loaded = TrainedModel::load(&path).unwrap();
    let mut worst: f64 = 0.0;
    for pt in random_points(&model, 1_000, 11) {
        worst = worst.max((model.predict(&pt).unwrap() - loaded.predict(&pt).unwrap()).abs());
    }
    outcome(worst <= ROUND_TRIP_ABS, format!("1000 inputs, max |Δŷ| = {worst:.1e} (limit {ROUND_TRIP_ABS:e})"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("parameter count", criterion_1),
        ("gradient exactness", criterion_2),
        ("physics self-consistency", criterion_3),
        ("oracle recovery", criterion_4),
        ("extrapolation ordering", criterion_5),
        ("Henry linearity", criterion_6),
        ("augmentation constraints", criterion_7),
        ("ensemble calibration", criterion_8),
        ("determinism", criterion_9),
        ("latency", criterion_10),
        ("checkpoint round-trip", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || label.ends_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "{} {label} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
