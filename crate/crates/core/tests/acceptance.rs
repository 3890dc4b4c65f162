//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Positional arguments select
//! a subset by number, e.g. `cargo test --test acceptance -- 1 5`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, Point2, Point3};
use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartkit::experiments::{
    build_dt, estimate_positions, evaluate_model, run_baseline, run_proposed, run_triplet_with_alignment, simulate,
    train, BaselineKind, Datasets, ExperimentConfig, Method, ScenarioPreset,
};
use chartkit::features::{csi_input_feature, large_scale_feature, CsiTensor, FeatureKind};
use chartkit::geom::{add_awgn, generate_dt_grid, synth_csi_set, ApConfig, DtGrid, Scenario, UniformLinearArray, Wall};
use chartkit::io::{
    dataset_to_container, load_checkpoint, load_dataset, load_dt, save_checkpoint, save_dataset, save_dt, Checkpoint,
};
use chartkit::losses::{dt_loss, dt_sample_loss, triplet_loss, Triplet};
use chartkit::metrics::{
    continuity, default_neighbors, kruskal_stress, mde, pde95, rajski_distance, trustworthiness, GammaForm,
    MetricsReport,
};
use chartkit::model::{chain_through_expectations, ChartModel, DtDatabase, Mode};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn reference_config() -> Result<ExperimentConfig, String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    ExperimentConfig::load(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn box_scenario(width: f64, depth: f64, aps: Vec<ApConfig>, inner: Vec<Wall>) -> Scenario {
    let c = [
        Point2::new(0.0, 0.0),
        Point2::new(width, 0.0),
        Point2::new(width, depth),
        Point2::new(0.0, depth),
    ];
    let mut walls: Vec<Wall> = (0..4).map(|i| Wall::new(c[i], c[(i + 1) % 4], 0.5)).collect();
    walls.extend(inner);
    Scenario {
        walls,
        aps,
        carrier_freq_hz: 2.4e9,
        bandwidth_hz: 20e6,
        num_subcarriers: 8,
        max_reflection_order: 2,
        noise_floor: 0.0,
        boundary: None,
    }
}

fn ap(x: f64, y: f64, axis: nalgebra::Vector3<f64>) -> ApConfig {
    ApConfig {
        position: Point3::new(x, y, 2.0),
        array: UniformLinearArray::new(2, axis),
    }
}

fn random_positions(rng: &mut ChaCha8Rng, n: usize, x: (f64, f64), y: (f64, f64), h: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| Point3::new(rng.gen_range(x.0..x.1), rng.gen_range(y.0..y.1), h))
        .collect()
}

fn rows(values: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((values.len(), values[0].len()), |(i, j)| values[i][j])
}

fn to_points(xy: &Array2<f64>) -> Vec<Point2<f64>> {
    xy.rows().into_iter().map(|r| Point2::new(r[0], r[1])).collect()
}

// ---------------------------------------------------------------------------

struct Pipeline {
    inputs: Array2<f64>,
    measured: Array2<f64>,
    dt: DtDatabase,
    triplets: Vec<Triplet>,
    lambda_cc: f64,
    lambda_dt: f64,
    margin: f64,
}

impl Pipeline {
    fn loss(&self, model: &ChartModel) -> f64 {
        let p = model.predict(self.inputs.view()).unwrap();
        let pos = to_points(&p.dot(&self.dt.position_matrix().t()));
        let cc = triplet_loss(&pos, &self.triplets, self.margin).unwrap().value;
        let expected = p.dot(&self.dt.features.t());
        let dt = dt_loss(self.measured.view(), expected.view()).unwrap().value;
        self.lambda_cc * cc + self.lambda_dt * dt
    }

    fn gradient(&self, model: &ChartModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let cache = model.forward_batch(self.inputs.view(), Mode::Inference, rng).unwrap();
        let pos = to_points(&cache.probs.dot(&self.dt.position_matrix().t()));
        let cc = triplet_loss(&pos, &self.triplets, self.margin).unwrap();
        let gp = Array2::from_shape_fn((pos.len(), 2), |(i, k)| self.lambda_cc * cc.grads[i][k]);
        let expected = cache.probs.dot(&self.dt.features.t());
        let gv = dt_loss(self.measured.view(), expected.view()).unwrap().grad * self.lambda_dt;
        let upstream = chain_through_expectations(Some(gp.view()), Some(gv.view()), &self.dt, pos.len());
        let grads = model.backward(&cache, upstream.view()).unwrap();
        grads
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

fn numeric_gradient(pipe: &Pipeline, model: &ChartModel, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..model.layers().len() {
        let (wr, wc) = model.layers()[l].weight.dim();
        let nb = model.layers()[l].bias.len();
        for idx in 0..wr * wc + nb {
            let bump = |delta: f64| {
                let mut m = model.clone();
                let layer = &mut m.layers_mut()[l];
                if idx < wr * wc {
                    layer.weight[[idx / wc, idx % wc]] += delta;
                } else {
                    layer.bias[idx - wr * wc] += delta;
                }
                pipe.loss(&m)
            };
            out.push((bump(h) - bump(-h)) / (2.0 * h));
        }
    }
    out
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scenario = box_scenario(
        6.0,
        4.0,
        vec![ap(0.5, 0.5, nalgebra::Vector3::x()), ap(5.5, 3.5, nalgebra::Vector3::y())],
        Vec::new(),
    );
    let taps = 4;
    let positions = random_positions(&mut rng, 6, (1.0, 5.0), (1.0, 3.0), 1.5);
    let times: Vec<f64> = (0..positions.len()).map(|i| i as f64).collect();
    let csi = synth_csi_set(&scenario, &positions, Some(&times)).map_err(fail)?;
    let inputs = rows(&csi.iter().map(|t| csi_input_feature(t, taps).unwrap().0).collect::<Vec<_>>());
    let grid = DtGrid {
        spacing: 1.0,
        height: 1.5,
        points: random_positions(&mut rng, 5, (0.8, 5.2), (0.8, 3.2), 0.0)
            .iter()
            .map(|p| p.xy())
            .collect(),
    };
    let triplets = vec![Triplet::new(0, 1, 4), Triplet::new(2, 3, 5), Triplet::new(1, 2, 5), Triplet::new(4, 5, 0)];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in FeatureKind::ALL {
        let dt = DtDatabase::build(&scenario, &grid, kind, taps).map_err(fail)?;
        let measured = rows(
            &csi.iter()
                .map(|t| large_scale_feature(kind, t, taps).unwrap().values)
                .collect::<Vec<_>>(),
        );
        let pipe = Pipeline {
            inputs: inputs.clone(),
            measured,
            dt,
            triplets: triplets.clone(),
            lambda_cc: kind.default_lambda_cc(),
            lambda_dt: 1.0,
            margin: 20.0,
        };
        let model = ChartModel::new(inputs.ncols(), &[8, 8], 5, 0.0, &mut rng).map_err(fail)?;
        let analytic = pipe.gradient(&model, &mut rng);
        let numeric = numeric_gradient(&pipe, &model, 1e-5);
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = diff / norm;
        worst = worst.max(rel);
        parts.push(format!("{}={rel:.1e}", kind.name()));
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst < 1e-4 && secs < 10.0, format!("relative error {} in {secs:.1} s", parts.join(" ")))
}

fn criterion_lemma() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let bound = (-1.0f64).exp();
    let mut min_loss = f64::INFINITY;
    let mut worst_dep: f64 = 0.0;
    for i in 0..10_000 {
        let d = rng.gen_range(1..=16);
        let signed = i % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d)
                .map(|_| if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..1.0) })
                .collect()
        };
        let v = draw(&mut rng);
        let w = draw(&mut rng);
        if v.iter().all(|&x| x == 0.0) || w.iter().all(|&x| x == 0.0) {
            continue;
        }
        min_loss = min_loss.min(dt_sample_loss(&v, &w));
        let c = rng.gen_range(0.01..100.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let dep: Vec<f64> = v.iter().map(|x| c * x).collect();
        worst_dep = worst_dep.max((dt_sample_loss(&v, &dep) - bound).abs());
        let batch = dt_loss(rows(std::slice::from_ref(&v)).view(), rows(&[dep]).view()).map_err(fail)?;
        worst_dep = worst_dep.max((batch.value - bound).abs());
    }
    check(
        min_loss >= bound - 1e-12 && worst_dep < 1e-9,
        format!("min loss - e^-1 = {:.2e}, dependent pairs deviate by {worst_dep:.1e}", min_loss - bound),
    )
}

fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

fn criterion_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (p_len, dv) = (8, 12);
    let mut recovered = 0;
    let mut worst_p: f64 = 0.0;
    let mut instances = 0;
    while instances < 100 {
        let features = Array2::from_shape_fn((dv, p_len), |_| rng.gen_range(0.0..1.0));
        let m = DMatrix::from_fn(dv, p_len, |i, j| features[[i, j]]);
        if m.singular_values().min() < 1e-3 {
            continue;
        }
        instances += 1;
        let raw: Vec<f64> = (0..p_len).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let p_star: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let positions: Vec<Point2<f64>> = (0..p_len)
            .map(|_| Point2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let dt = DtDatabase::from_parts(positions.clone(), features.clone(), FeatureKind::Power, 1).map_err(fail)?;
        let v = rows(std::slice::from_ref(&p_star)).dot(&features.t());

        let eval = |p: &[f64]| -> (f64, Vec<f64>) {
            let expected = rows(&[p.to_vec()]).dot(&features.t());
            let l = dt_loss(v.view(), expected.view()).unwrap();
            let g = chain_through_expectations(None, Some(l.grad.view()), &dt, 1);
            (l.value, g.row(0).to_vec())
        };
        let mut p = vec![1.0 / p_len as f64; p_len];
        let (mut f, mut g) = eval(&p);
        let mut step = 1.0;
        for _ in 0..20_000 {
            let mut accepted = false;
            while step > 1e-12 {
                let trial: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let q = project_simplex(&trial);
                let (fq, gq) = eval(&q);
                let decrease: f64 = g.iter().zip(p.iter().zip(&q)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if fq <= f - 1e-4 * decrease {
                    p = q;
                    f = fq;
                    g = gq;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let err_p = p.iter().zip(&p_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let pos = |w: &[f64]| {
            w.iter()
                .zip(&positions)
                .fold(Point2::origin(), |acc, (wi, x)| acc + x.coords * *wi)
        };
        let err_x = (pos(&p) - pos(&p_star)).norm();
        worst_p = worst_p.max(err_p);
        if err_p < 1e-3 && err_x < 1e-3 {
            recovered += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        recovered >= 99 && secs < 60.0,
        format!("{recovered}/100 recovered, worst |p - p*|_inf = {worst_p:.1e}, {secs:.1} s"),
    )
}

fn criterion_single_ap_region() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let divider = Wall::new(Point2::new(4.0, 0.0), Point2::new(4.0, 4.0), 0.4);
    let scenario = box_scenario(
        8.0,
        4.0,
        vec![ap(1.5, 2.0, nalgebra::Vector3::x()), ap(6.5, 2.0, nalgebra::Vector3::y())],
        vec![divider],
    );
    let taps = 4;
    let grid = generate_dt_grid(&scenario, 0.5, 1.5).map_err(fail)?;
    let dt = DtDatabase::build(&scenario, &grid, FeatureKind::Power, taps).map_err(fail)?;
    let region: Vec<usize> = (0..dt.len())
        .filter(|&p| dt.features[[1, p]] == 0.0 && dt.features[[0, p]] > 0.0)
        .collect();
    if region.is_empty() || region.len() == dt.len() {
        return Err(format!("{} of {} grid points see only AP 0", region.len(), dt.len()));
    }
    let positions = random_positions(&mut rng, 8, (0.4, 3.6), (0.4, 3.6), 1.5);
    let csi = synth_csi_set(&scenario, &positions, None).map_err(fail)?;
    let measured = rows(
        &csi.iter()
            .map(|t| large_scale_feature(FeatureKind::Power, t, taps).unwrap().values)
            .collect::<Vec<_>>(),
    );
    if measured.column(1).iter().any(|&v| v != 0.0) {
        return Err("a measured sample in the region receives AP 1".into());
    }
    let inputs = rows(&csi.iter().map(|t| csi_input_feature(t, taps).unwrap().0).collect::<Vec<_>>());
    let free = ChartModel::new(inputs.ncols(), &[16, 16], dt.len(), 0.0, &mut rng).map_err(fail)?;
    let mut confined = free.clone();
    let last = confined.layers_mut().last_mut().unwrap();
    for p in 0..dt.len() {
        if !region.contains(&p) {
            last.bias[p] = -1e3;
        }
    }
    let grad_norm = |model: &ChartModel, rng: &mut ChaCha8Rng| -> Result<(f64, f64), String> {
        let cache = model.forward_batch(inputs.view(), Mode::Inference, rng).map_err(fail)?;
        let outside: f64 = (0..dt.len())
            .filter(|p| !region.contains(p))
            .map(|p| cache.probs.column(p).sum())
            .sum();
        let expected = cache.probs.dot(&dt.features.t());
        let l = dt_loss(measured.view(), expected.view()).map_err(fail)?;
        let upstream = chain_through_expectations(None, Some(l.grad.view()), &dt, inputs.nrows());
        Ok((model.backward(&cache, upstream.view()).map_err(fail)?.max_abs(), outside))
    };
    let (confined_grad, leak) = grad_norm(&confined, &mut rng)?;
    let (free_grad, _) = grad_norm(&free, &mut rng)?;
    check(
        confined_grad < 1e-10 && leak == 0.0 && free_grad > 1e-6,
        format!(
            "{} single-AP grid points; gradient {confined_grad:.1e} when supported there, {free_grad:.1e} otherwise",
            region.len()
        ),
    )
}

fn brute_rank(pts: &[Point2<f64>], i: usize, j: usize) -> usize {
    let d = |a: usize, b: usize| (pts[a] - pts[b]).norm();
    1 + (0..pts.len())
        .filter(|&k| k != i && k != j && (d(i, k) < d(i, j) || (d(i, k) == d(i, j) && k < j)))
        .count()
}

fn brute_tw(truth: &[Point2<f64>], est: &[Point2<f64>], j: usize, form: GammaForm) -> f64 {
    let n = truth.len();
    let mut s = 0.0;
    for i in 0..n {
        for k in (0..n).filter(|&k| k != i) {
            let in_est = brute_rank(est, i, k) <= j;
            let r = brute_rank(truth, i, k);
            if in_est && r > j {
                s += (r - j) as f64;
            }
        }
    }
    let (nf, jf) = (n as f64, j as f64);
    let gamma = match form {
        GammaForm::Standard => 2.0 / (nf * jf * (2.0 * nf - 3.0 * jf - 1.0)),
        GammaForm::Literal => 2.0 / (nf * jf * (nf - 3.0 * jf - 1.0)),
    };
    1.0 - gamma * s
}

fn pair_distances(pts: &[Point2<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..pts.len() {
        for k in i + 1..pts.len() {
            out.push((pts[i] - pts[k]).norm());
        }
    }
    out
}

fn brute_stress(truth: &[Point2<f64>], est: &[Point2<f64>]) -> f64 {
    let d = pair_distances(truth);
    let dh = pair_distances(est);
    let sh2: f64 = dh.iter().map(|x| x * x).sum();
    let f = |eta: f64| d.iter().zip(&dh).map(|(a, b)| (b - eta * a).powi(2)).sum::<f64>();
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..300 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    (f(0.5 * (lo + hi)) / sh2).sqrt()
}

fn brute_rajski(truth: &[Point2<f64>], est: &[Point2<f64>], bins: usize) -> f64 {
    let bin_of = |vals: &[f64]| -> Vec<usize> {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vals.iter()
            .map(|&v| {
                if hi > lo {
                    ((bins as f64 * (v - lo) / (hi - lo)).floor() as usize).min(bins - 1)
                } else {
                    0
                }
            })
            .collect()
    };
    let a = bin_of(&pair_distances(truth));
    let b = bin_of(&pair_distances(est));
    let m = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(&b) {
        *joint.entry((x, y)).or_default() += 1.0 / m;
        *pa.entry(x).or_default() += 1.0 / m;
        *pb.entry(y).or_default() += 1.0 / m;
    }
    let h: f64 = joint.values().map(|p| -p * p.log2()).sum();
    let mi: f64 = joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).log2()).sum();
    1.0 - mi / h
}

fn brute_pde95(truth: &[Point2<f64>], est: &[Point2<f64>]) -> f64 {
    let e: Vec<f64> = truth.iter().zip(est).map(|(a, b)| (a - b).norm()).collect();
    let n = e.len() as f64;
    e.iter()
        .copied()
        .filter(|&x| e.iter().filter(|&&y| y <= x).count() as f64 >= 0.95 * n)
        .fold(f64::INFINITY, f64::min)
}

fn criterion_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut identity_ok = true;
    while checked < 200 {
        let n = rng.gen_range(3..=10);
        let truth: Vec<Point2<f64>> = (0..n)
            .map(|_| Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let est: Vec<Point2<f64>> = if checked % 2 == 0 {
            (0..n)
                .map(|_| Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
                .collect()
        } else {
            truth
                .iter()
                .map(|p| Point2::new(p.x * 1.3 + rng.gen_range(-1.0..1.0), p.y * 0.8 + rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let Ok(report) = MetricsReport::compute(&truth, &est, None, GammaForm::Standard) else {
            continue;
        };
        checked += 1;
        let j = default_neighbors(n);
        let e: Vec<f64> = truth.iter().zip(&est).map(|(a, b)| (a - b).norm()).collect();
        let errs = [
            report.tw - brute_tw(&truth, &est, j, GammaForm::Standard),
            report.ct - brute_tw(&est, &truth, j, GammaForm::Standard),
            report.ks - brute_stress(&truth, &est),
            report.rd - brute_rajski(&truth, &est, 20),
            report.mde - e.iter().sum::<f64>() / n as f64,
            report.pde95 - brute_pde95(&truth, &est),
        ];
        worst = errs.iter().fold(worst, |w, x| w.max(x.abs()));
        let jmax = (n - 1) / 2;
        if jmax >= 1 {
            let j2 = rng.gen_range(1..=jmax);
            for form in [GammaForm::Standard, GammaForm::Literal] {
                if form == GammaForm::Literal && n <= 3 * j2 + 1 {
                    continue;
                }
                let tw = trustworthiness(&truth, &est, j2, form).map_err(fail)?;
                let ct = continuity(&truth, &est, j2, form).map_err(fail)?;
                worst = worst.max((tw - brute_tw(&truth, &est, j2, form)).abs());
                worst = worst.max((ct - brute_tw(&est, &truth, j2, form)).abs());
            }
        }
        let id = MetricsReport::compute(&truth, &truth, None, GammaForm::Standard).map_err(fail)?;
        identity_ok &= id.tw == 1.0 && id.ct == 1.0 && id.ks == 0.0 && id.rd.abs() < 1e-12 && id.mde == 0.0;
        identity_ok &= kruskal_stress(&truth, &truth).map_err(fail)? == 0.0;
        identity_ok &= rajski_distance(&truth, &truth, 20).map_err(fail)?.abs() < 1e-12;
        identity_ok &= mde(&truth, &truth).map_err(fail)? == 0.0 && pde95(&truth, &truth).map_err(fail)? == 0.0;
    }
    check(
        worst < 1e-9 && identity_ok,
        format!("200 instances, worst deviation {worst:.1e}, identity embeddings exact: {identity_ok}"),
    )
}

fn criterion_power_invariance() -> Outcome {
    let config = reference_config()?;
    let preset = ScenarioPreset::from_config(&config).map_err(fail)?;
    let traj = preset.trajectory(config.ue_height).map_err(fail)?;
    let stride = traj.len() / 60;
    let positions: Vec<Point3<f64>> = traj.positions.iter().step_by(stride.max(1)).copied().collect();
    let clean = synth_csi_set(&preset.scenario, &positions, None).map_err(fail)?;
    let (csi, _) = add_awgn(&clean, config.taps, config.snr_db, 5).map_err(fail)?;
    let factor = Complex64::from_polar(7.3, 0.4);
    let scaled: Vec<CsiTensor> = csi.iter().map(|t| t.scaled(factor)).collect();
    let mut worst_input: f64 = 0.0;
    for (a, b) in csi.iter().zip(&scaled) {
        let fa = csi_input_feature(a, config.taps).map_err(fail)?;
        let fb = csi_input_feature(b, config.taps).map_err(fail)?;
        worst_input = fa.0.iter().zip(&fb.0).fold(worst_input, |w, (x, y)| w.max((x - y).abs()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst_loss: f64 = 0.0;
    for kind in FeatureKind::ALL {
        let mut c = config.clone();
        c.feature = kind;
        let dt = build_dt(&c).map_err(fail)?;
        let feats = |set: &[CsiTensor]| {
            rows(&set
                .iter()
                .map(|t| large_scale_feature(kind, t, c.taps).unwrap().values)
                .collect::<Vec<_>>())
        };
        let probs = Array2::from_shape_fn((csi.len(), dt.len()), |_| rng.gen_range(0.0..1.0));
        let sums = probs.sum_axis(Axis(1)).insert_axis(Axis(1));
        let expected = (probs / sums).dot(&dt.features.t());
        let la = dt_loss(feats(&csi).view(), expected.view()).map_err(fail)?;
        let lb = dt_loss(feats(&scaled).view(), expected.view()).map_err(fail)?;
        worst_loss = worst_loss.max((la.value - lb.value).abs());
    }
    check(
        worst_input < 1e-9 && worst_loss < 1e-9,
        format!("input features change by {worst_input:.1e}, DT loss by {worst_loss:.1e} over all feature kinds"),
    )
}

struct TrendRuns {
    power: (f64, f64),
    shifted: Option<(f64, f64)>,
    triplet: (f64, f64),
    affine: (f64, f64),
    fingerprint: (f64, f64),
    diagonal: f64,
    seconds: f64,
}

fn trend_runs(with_shift: bool) -> Result<TrendRuns, String> {
    let start = Instant::now();
    let config = reference_config()?;
    let sim = simulate(&config).map_err(fail)?;
    let dt = build_dt(&config).map_err(fail)?;
    let data = Datasets::assemble(&config, &sim, dt).map_err(fail)?;
    let mde = |r: &chartkit::experiments::RunResult| r.test_stat(|m| m.mde);
    let power = mde(&run_proposed(&config, &data).map_err(fail)?);
    let (triplet, affine) = run_triplet_with_alignment(&config, &data).map_err(fail)?;
    let fingerprint = mde(&run_baseline(BaselineKind::Fingerprint, &config, &data).map_err(fail)?);
    let seconds = start.elapsed().as_secs_f64();
    let shifted = if with_shift {
        let mut c = config.clone();
        c.ap_shift = [0.0625, 0.0, 0.0];
        let dt = build_dt(&c).map_err(fail)?;
        let data = Datasets::assemble(&c, &sim, dt).map_err(fail)?;
        Some(mde(&run_proposed(&c, &data).map_err(fail)?))
    } else {
        None
    };
    let walls = &data.scenario.walls;
    let (lo, hi) = walls.iter().flat_map(|w| [w.start, w.end]).fold(
        (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))),
    );
    Ok(TrendRuns {
        power,
        shifted,
        triplet: mde(&triplet),
        affine: mde(&affine),
        fingerprint,
        diagonal: (hi - lo).norm(),
        seconds,
    })
}

fn criterion_trend(runs: &TrendRuns) -> Outcome {
    let d = runs.diagonal;
    let p = runs.power.0;
    let a = p < runs.triplet.0 && runs.triplet.0 > 0.25 * d && p < runs.affine.0;
    let b = runs.fingerprint.0 < p.min(runs.triplet.0).min(runs.affine.0);
    let c = p < 0.15 * d;
    check(
        a && b && c && runs.seconds < 1800.0,
        format!(
            "test MDE power {:.3}±{:.3}, triplet {:.3}±{:.3}, affine {:.3}±{:.3}, fingerprint {:.3}±{:.3} m; \
             25% / 15% of diagonal = {:.2} / {:.2} m; {:.0} s",
            runs.power.0,
            runs.power.1,
            runs.triplet.0,
            runs.triplet.1,
            runs.affine.0,
            runs.affine.1,
            runs.fingerprint.0,
            runs.fingerprint.1,
            0.25 * d,
            0.15 * d,
            runs.seconds
        ),
    )
}

fn criterion_shift(runs: &TrendRuns) -> Outcome {
    let Some(shifted) = runs.shifted else {
        return Err("shifted run missing".into());
    };
    let change = (shifted.0 - runs.power.0).abs() / runs.power.0;
    check(
        change < 0.5,
        format!(
            "power MDE {:.3} m matched, {:.3}±{:.3} m with APs shifted 6.25 cm: {:.1}% change",
            runs.power.0,
            shifted.0,
            shifted.1,
            100.0 * change
        ),
    )
}

fn criterion_persistence() -> Outcome {
    let mut config = reference_config()?;
    config.iterations = 200;
    config.seeds = vec![0];
    let sim = simulate(&config).map_err(fail)?;
    let dt = build_dt(&config).map_err(fail)?;
    let data = Datasets::assemble(&config, &sim, dt.clone()).map_err(fail)?;
    let outcome = train(Method::Proposed, &config, &data, 0).map_err(fail)?;
    let (tr, te) = evaluate_model(&config, &outcome.model, &data).map_err(fail)?;
    let est = estimate_positions(&outcome.model, &data.test.inputs, &data.dt).map_err(fail)?;

    let dir = std::env::temp_dir().join(format!("chartkit-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(fail)?;
    let ck = Checkpoint {
        model: outcome.model,
        seed: 0,
        iterations: config.iterations,
    };
    save_dataset(&dir.join("dataset.ccds"), &sim).map_err(fail)?;
    save_dt(&dir.join("dt.ccds"), &dt).map_err(fail)?;
    save_checkpoint(&dir.join("model.ccds"), &ck).map_err(fail)?;
    let sim2 = load_dataset(&dir.join("dataset.ccds")).map_err(fail)?;
    let dt2 = load_dt(&dir.join("dt.ccds")).map_err(fail)?;
    let ck2 = load_checkpoint(&dir.join("model.ccds")).map_err(fail)?;
    let _ = std::fs::remove_dir_all(&dir);

    let data2 = Datasets::assemble(&config, &sim2, dt2).map_err(fail)?;
    let (tr2, te2) = evaluate_model(&config, &ck2.model, &data2).map_err(fail)?;
    let est2 = estimate_positions(&ck2.model, &data2.test.inputs, &data2.dt).map_err(fail)?;
    let bits = |r: &MetricsReport| r.values().map(f64::to_bits);
    let same_bytes = dataset_to_container(&sim).map_err(fail)?.to_bytes() == dataset_to_container(&sim2).map_err(fail)?.to_bytes();
    let same_metrics = bits(&tr) == bits(&tr2) && bits(&te) == bits(&te2);
    let same_est = est
        .iter()
        .zip(&est2)
        .all(|(a, b)| a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits());
    let same_model = ck.model.layers() == ck2.model.layers();
    check(
        same_bytes && same_metrics && same_est && same_model,
        format!(
            "arrays {same_bytes}, model {same_model}, estimates {same_est}, metrics {same_metrics} (test MDE {:.4} m)",
            te.mde
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => println!("FAIL criterion {n} ({name}): {d}"),
        }
        results.push((n, name, outcome));
    };
    type Check = fn() -> Outcome;
    let quick: [(usize, &str, Check); 6] = [
        (1, "pipeline gradients", criterion_gradients),
        (2, "twin loss lower bound", criterion_lemma),
        (3, "simplex recovery", criterion_recovery),
        (4, "single-AP region gradient", criterion_single_ap_region),
        (5, "metric oracles", criterion_metrics),
        (6, "transmit-power invariance", criterion_power_invariance),
    ];
    for (n, name, f) in quick {
        if run(n) {
            report(n, name, f());
        }
    }
    if run(9) {
        report(9, "persistence", criterion_persistence());
    }
    if run(7) || run(8) {
        match trend_runs(run(8)) {
            Ok(runs) => {
                if run(7) {
                    report(7, "method ranking", criterion_trend(&runs));
                }
                if run(8) {
                    report(8, "AP-shift robustness", criterion_shift(&runs));
                }
            }
            Err(e) => {
                for n in [7, 8].into_iter().filter(|&n| run(n)) {
                    report(n, "reference runs", Err(e.clone()));
                }
            }
        }
    }
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
