//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::HashMap;
use std::process::{Command, ExitCode};

use gmsdb::datasets::{gen_blobs, generate, preset, PRESETS};
use gmsdb::distance::{cluster_distance_matrix, ClusterDistanceMatrix, PairSampling};
use gmsdb::gmm::{fit_gmm, hard_assign, responsibilities, select_by_bic, EmConfig, MixtureModel};
use gmsdb::grouping::{dbscan_precomputed, delta_d, epsilon_schedule, mc, mc_p_value, SuperDistanceMatrix};
use gmsdb::metrics::{pair_counts, rand_index, run_interval};
use gmsdb::numerics::percentile;
use gmsdb::{fit, predict_hard, predict_soft, DataMatrix, GmsdbConfig, GmsdbModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

struct Run {
    n_superclusters: usize,
    rand_index: f64,
    total: f64,
    grouping_share: f64,
    monotone: bool,
}

fn monotone(m: &MixtureModel) -> bool {
    let t = &m.diagnostics.log_likelihood_trace;
    (1..t.len()).all(|i| m.diagnostics.drops.contains(&i) || t[i] >= t[i - 1] - 1e-9)
}

fn run_once(name: &str, seed: u64) -> (Run, GmsdbModel, DataMatrix) {
    let ds = generate(&preset(name, None).unwrap(), seed).unwrap();
    let model = fit(&ds.points, &GmsdbConfig { alpha: 0.1, n_max: 50, seed, ..Default::default() }).unwrap();
    let labels = predict_hard(&model, &ds.points).unwrap();
    let t = model.stage_timings;
    let run = Run {
        n_superclusters: model.n_superclusters(),
        rand_index: rand_index(&ds.labels, &labels).unwrap(),
        total: t.total,
        grouping_share: t.grouping / t.total,
        monotone: monotone(&model.mixture),
    };
    eprintln!(
        "  {name} seed {seed}: N_BIC {} N_S {} RI {:.4} {:.1}s",
        model.n_bic(),
        run.n_superclusters,
        run.rand_index,
        run.total
    );
    (run, model, ds.points)
}

fn runs(name: &str) -> Vec<Run> {
    (0..SEEDS).map(|s| run_once(name, s).0).collect()
}

fn median_ri(runs: &[Run]) -> f64 {
    percentile(&runs.iter().map(|r| r.rand_index).collect::<Vec<_>>(), 50.0).unwrap()
}

fn modal_count(runs: &[Run]) -> usize {
    let mut freq: HashMap<usize, usize> = HashMap::new();
    for r in runs {
        *freq.entry(r.n_superclusters).or_default() += 1;
    }
    // ties go to the smaller count
    freq.into_iter().max_by_key(|&(k, c)| (c, std::cmp::Reverse(k))).unwrap().0
}

fn counts(runs: &[Run]) -> Vec<usize> {
    runs.iter().map(|r| r.n_superclusters).collect()
}

fn criterion_1(grains: &[Run]) -> (bool, String) {
    let ri: Vec<f64> = grains.iter().map(|r| r.rand_index).collect();
    let (lo, hi) = run_interval(&ri, 0.95).unwrap();
    let med = median_ri(grains);
    let slowest = grains.iter().map(|r| r.total).fold(0.0, f64::max);
    let ok = lo <= 1.0 && 1.0 <= hi && med >= 0.99 && slowest <= 120.0;
    (ok, format!("RI interval [{lo:.4}, {hi:.4}], median {med:.4}, slowest run {slowest:.1}s"))
}

fn criterion_2(rings: &[Run]) -> (bool, String) {
    let med = median_ri(rings);
    let twos = rings.iter().filter(|r| r.n_superclusters == 2).count();
    (med >= 0.95 && twos >= 8, format!("median RI {med:.4}, N_S = 2 in {twos}/10, counts {:?}", counts(rings)))
}

fn criterion_3(rings: &[Run]) -> (bool, String) {
    let med = median_ri(rings);
    let mode = modal_count(rings);
    (
        mode == 4 && (0.90..=1.0).contains(&med),
        format!("modal N_S {mode}, median RI {med:.4}, counts {:?}", counts(rings)),
    )
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            // coarse grid so ties and exact threshold hits occur
            let v = (rng.random_range(1..=40) as f64) * 0.25;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn criterion_4() -> (bool, String) {
    let want = (-4.0 * f64::ln(0.1)).sqrt();
    let got = delta_d(0.1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agree = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let dm = SuperDistanceMatrix::from_rows(&random_symmetric(&mut rng, n)).unwrap();
        if mc(&dm, got) == mc_p_value(&dm, 0.1, 2).unwrap() {
            agree += 1;
        }
    }
    (
        (got - want).abs() < 1e-5 && agree == 100,
        format!("deltaD(0.1, 2) = {got:.6}, closed form {want:.6}, MC forms agree on {agree}/100"),
    )
}

fn components(r: &[Vec<f64>], eps: f64) -> Vec<usize> {
    let n = r.len();
    let mut label: Vec<usize> = (0..n).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if r[i][j] <= eps && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
    }
    label
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn criterion_5() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let rows = random_symmetric(&mut rng, n);
        let r = ClusterDistanceMatrix::from_entries(&rows).unwrap();
        let schedule = epsilon_schedule(&r).unwrap();
        let eps = schedule.values()[rng.random_range(0..schedule.len())];
        let p = dbscan_precomputed(&r, eps, 1).unwrap();
        if same_partition(p.map(), &components(&rows, eps)) {
            hits += 1;
        }
    }
    (hits == 100, format!("{hits}/100 partitions equal connected components"))
}

fn criterion_6() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut hits = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let (mut tp, mut tn, mut total) = (0u64, 0u64, 0u64);
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => tp += 1,
                    (false, false) => tn += 1,
                    _ => {}
                }
            }
        }
        let c = pair_counts(&a, &b).unwrap();
        let exact = (c.true_positive, c.true_negative, c.total) == (tp, tn, total)
            && c.pwtp() == tp as f64 / total as f64
            && c.pwtn() == tn as f64 / total as f64
            && c.rand_index() == c.pwtp() + c.pwtn();
        if exact {
            hits += 1;
        }
    }
    (hits == 100, format!("{hits}/100 labeling pairs match enumeration"))
}

fn criterion_7(pipeline_runs: &[&Run]) -> (bool, String) {
    let mut fits_ok = pipeline_runs.iter().all(|r| r.monotone);
    let em = EmConfig::default();
    let blobs = gen_blobs(&[vec![0.0, 0.0], vec![3.0, 1.0], vec![0.0, 4.0]], &[1.0, 0.5, 2.0], 100, 7).unwrap();
    for k in [2, 4, 8, 12] {
        fits_ok &= monotone(&fit_gmm(&blobs.points, k, k as u64, &em).unwrap());
    }

    let one = gen_blobs(&[vec![1.0, -2.0, 0.5]], &[1.5], 300, 4).unwrap();
    let x = &one.points;
    let m = fit_gmm(x, 1, 0, &em).unwrap();
    let n = x.n() as f64;
    let mean: Vec<f64> = (0..3).map(|j| x.rows().map(|r| r[j]).sum::<f64>() / n).collect();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        worst = worst.max(rel(m.components[0].mean[j], mean[j]));
        for k in 0..3 {
            let c = x.rows().map(|r| (r[j] - mean[j]) * (r[k] - mean[k])).sum::<f64>() / n;
            worst = worst.max(rel(m.components[0].covariance.get(j, k), c));
        }
    }

    let mut picks = 0;
    for seed in 0..10 {
        let ds = gen_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], &[1.0, 1.0], 200, 100 + seed).unwrap();
        if select_by_bic(&ds.points, 2, 6, 3, seed, &em).unwrap().model.n_components() == 2 {
            picks += 1;
        }
    }
    (
        fits_ok && worst <= 1e-9 && picks >= 9,
        format!("log-likelihood monotone: {fits_ok}, N=1 worst relative error {worst:.1e}, BIC picks 2 in {picks}/10"),
    )
}

fn criterion_8(models: &[(&GmsdbModel, &DataMatrix)]) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut argmax_ok = true;
    for (model, x) in models {
        let lo: Vec<f64> = (0..x.d()).map(|j| x.rows().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..x.d()).map(|j| x.rows().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..x.d()).map(|j| rng.random_range(lo[j] - 1.0..hi[j] + 1.0)).collect())
            .collect();
        let q = DataMatrix::from_rows(&rows).unwrap();
        let soft = predict_soft(model, &q).unwrap();
        let hard = predict_hard(model, &q).unwrap();
        for (row, &h) in soft.rows().zip(&hard) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            argmax_ok &= row.iter().position(|&p| p == best) == Some(h);
        }
    }
    (
        worst <= 1e-9 && argmax_ok,
        format!("{} models x 1000 points: worst |sum - 1| {worst:.1e}, hard = argmax: {argmax_ok}", models.len()),
    )
}

fn criterion_9() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("grains.csv");
    let bin = env!("CARGO_BIN_EXE_gmsdb");
    let status = Command::new(bin)
        .args(["gen", "--preset", "grains", "--seed", "3", "--out"])
        .arg(&data)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let fit_to = |name: &str| {
        let model = dir.path().join(name);
        let out = Command::new(bin)
            .args(["fit", "--seed", "3", "--in"])
            .arg(&data)
            .arg("--model")
            .arg(&model)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(model).unwrap()
    };
    let identical_files = fit_to("a.json") == fit_to("b.json");

    let ds = generate(&preset("rings2", None).unwrap(), 3).unwrap();
    let m = fit_gmm(&ds.points, 12, 3, &EmConfig::default()).unwrap();
    let h = hard_assign(&responsibilities(&m, &ds.points).unwrap());
    let sampling = PairSampling { cap: 3000, ..PairSampling::default() };
    let matrix = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cluster_distance_matrix(&ds.points, &h, &m, &sampling).unwrap())
    };
    let base = matrix(1);
    let identical_matrix = [2, 4, 8].iter().all(|&t| matrix(t) == base);
    (
        identical_files && identical_matrix,
        format!("model files identical: {identical_files}, stage-2 matrix identical for 1/2/4/8 threads: {identical_matrix}"),
    )
}

fn criterion_10(shares: &[(String, f64)]) -> (bool, String) {
    let (worst_name, worst) = shares.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    (
        worst < 0.10,
        format!("{} presets, largest stage 3-4 share {:.4}% ({worst_name})", shares.len(), 100.0 * worst),
    )
}

fn main() -> ExitCode {
    let grains = runs("grains");
    let rings2 = runs("rings2");
    let rings3 = runs("rings3+noise");

    let mut shares: Vec<(String, f64)> = Vec::new();
    for (name, rs) in [("grains", &grains), ("rings2", &rings2), ("rings3+noise", &rings3)] {
        shares.push((name.into(), rs.iter().map(|r| r.grouping_share).fold(0.0, f64::max)));
    }
    let mut extra = Vec::new();
    let mut fitted = Vec::new();
    for name in PRESETS.iter().filter(|p| !["grains", "rings2"].contains(p)) {
        let (run, model, x) = run_once(name, 0);
        shares.push((name.to_string(), run.grouping_share));
        extra.push(run);
        fitted.push((model, x));
    }
    let (_, grains_model, grains_x) = run_once("grains", 0);

    let all: Vec<&Run> = grains.iter().chain(&rings2).chain(&rings3).chain(&extra).collect();
    let mut models: Vec<(&GmsdbModel, &DataMatrix)> = vec![(&grains_model, &grains_x)];
    models.extend(fitted.iter().map(|(m, x)| (m, x)));

    let results = [
        criterion_1(&grains),
        criterion_2(&rings2),
        criterion_3(&rings3),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(&all),
        criterion_8(&models),
        criterion_9(),
        criterion_10(&shares),
    ];
    let mut failed = 0;
    for (i, (ok, detail)) in results.iter().enumerate() {
        println!("criterion {:>2}: {}  {detail}", i + 1, if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
