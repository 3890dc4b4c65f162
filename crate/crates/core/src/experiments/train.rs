use std::collections::HashMap;

use nalgebra::{Point2, Vector2};
use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Datasets, ExperimentConfig};
use crate::error::{Error, Result};
use crate::losses::{
    bbb_losses, bbb_sample, dt_loss, power_threshold, supervised_loss, triplet_loss, BbbSample, LossWeights, Triplet,
    TripletSampler,
};
use crate::model::{adam_step, chain_through_expectations, AdamState, ChartModel, DtDatabase, Mode};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Triplet loss plus digital-twin feature matching.
    Proposed,
    /// Triplet loss only; the chart is not tied to global coordinates.
    TripletOnly,
    /// Triplet loss with bilateration and bounding-box terms.
    Bbb,
    /// Supervised regression of the expected position.
    Fingerprint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::TripletOnly => "triplet",
            Method::Bbb => "bbb",
            Method::Fingerprint => "fingerprint",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub cc: f64,
    pub dt: f64,
    pub bi: f64,
    pub boxed: f64,
    pub supervised: f64,
}

impl LossRecord {
    pub const CSV_HEADER: &'static str = "iteration,total,cc,dt,bi,box,supervised";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration, self.total, self.cc, self.dt, self.bi, self.boxed, self.supervised
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ChartModel,
    pub curve: Vec<LossRecord>,
}

impl TrainOutcome {
    /// Mean total loss over the first and last `window` iterations.
    pub fn loss_change(&self, window: usize) -> (f64, f64) {
        let w = window.clamp(1, self.curve.len().max(1));
        let mean = |s: &[LossRecord]| s.iter().map(|r| r.total).sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.curve[..w.min(self.curve.len())]), mean(&self.curve[self.curve.len().saturating_sub(w)..]))
    }
}

struct Objective {
    weights: LossWeights,
    use_triplets: bool,
    use_dt: bool,
    use_bbb: bool,
    supervised: bool,
}

fn objective(method: Method, config: &ExperimentConfig) -> Result<Objective> {
    Ok(match method {
        Method::Proposed => {
            let w = config.weights()?;
            Objective {
                weights: w,
                use_triplets: w.cc > 0.0,
                use_dt: w.dt > 0.0,
                use_bbb: false,
                supervised: false,
            }
        }
        Method::TripletOnly => Objective {
            weights: LossWeights::new(1.0, 0.0, 0.0, 0.0)?,
            use_triplets: true,
            use_dt: false,
            use_bbb: false,
            supervised: false,
        },
        Method::Bbb => {
            let w = LossWeights::new(config.bbb_lambda_cc, 0.0, config.lambda_bi, config.lambda_box)?;
            Objective {
                weights: w,
                use_triplets: w.cc > 0.0,
                use_dt: false,
                use_bbb: true,
                supervised: false,
            }
        }
        Method::Fingerprint => Objective {
            weights: LossWeights::new(0.0, 0.0, 0.0, 0.0)?,
            use_triplets: false,
            use_dt: false,
            use_bbb: false,
            supervised: true,
        },
    })
}

/// Rows of a mini-batch, with each distinct training sample appearing once.
#[derive(Default)]
struct Batch {
    rows: Vec<usize>,
    lookup: HashMap<usize, usize>,
}

impl Batch {
    fn row(&mut self, sample: usize) -> usize {
        *self.lookup.entry(sample).or_insert_with(|| {
            self.rows.push(sample);
            self.rows.len() - 1
        })
    }
}

fn gather(src: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    src.select(Axis(0), rows)
}

/// Mini-batch Adam training of a fresh model for one seed.
///
/// On a non-finite loss or gradient the run stops and the error carries the
/// parameters from before the offending step.
pub fn train(method: Method, config: &ExperimentConfig, data: &Datasets, seed: u64) -> Result<TrainOutcome> {
    let obj = objective(method, config)?;
    let train = &data.train;
    let n = train.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    let dt: &DtDatabase = &data.dt;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(2);

    let mut model = ChartModel::new(train.inputs.ncols(), &config.hidden, dt.len(), config.dropout, &mut init_rng)?;
    let mut adam = AdamState::default();
    let lr = config.learning_rate();

    let sampler = if obj.use_triplets {
        Some(TripletSampler::new(&train.timestamps, config.t_close, config.t_far)?)
    } else {
        None
    };
    let bbb_sets: Vec<BbbSample> = if obj.use_bbb {
        let thr = power_threshold(&train.powers_db, config.bbb_percentile)?;
        train
            .powers_db
            .iter()
            .map(|p| bbb_sample(p, thr, config.bbb_power_margin_db))
            .collect()
    } else {
        Vec::new()
    };
    if (obj.supervised || obj.use_bbb) && train.positions.len() != n {
        return Err(Error::MissingSideInfo("ground-truth positions".into()));
    }

    let mut curve = Vec::with_capacity(config.iterations);
    let mut last_good = model.clone();
    for iteration in 0..config.iterations {
        let mut batch = Batch::default();
        let triplets: Vec<Triplet> = match &sampler {
            Some(s) => (0..config.triplet_batch)
                .map(|_| {
                    let t = s.sample(&mut batch_rng);
                    Triplet::new(batch.row(t.anchor), batch.row(t.close), batch.row(t.far))
                })
                .collect(),
            None => Vec::new(),
        };
        let point_rows: Vec<usize> = if obj.use_dt || obj.use_bbb || obj.supervised {
            sample(&mut batch_rng, n, config.dt_batch.min(n))
                .into_iter()
                .map(|i| batch.row(i))
                .collect()
        } else {
            Vec::new()
        };

        let x = gather(&train.inputs, &batch.rows);
        let cache = model.forward_batch(x.view(), Mode::Training, &mut dropout_rng)?;
        let xy = cache.probs.dot(&dt.position_matrix().t());
        let positions: Vec<Point2<f64>> = xy.rows().into_iter().map(|r| Point2::new(r[0], r[1])).collect();
        let b = batch.rows.len();
        let mut grad_pos = Array2::<f64>::zeros((b, 2));
        let mut add_pos = |row: usize, g: &Vector2<f64>, w: f64| {
            grad_pos[[row, 0]] += w * g.x;
            grad_pos[[row, 1]] += w * g.y;
        };
        let mut rec = LossRecord {
            iteration,
            ..Default::default()
        };

        if !triplets.is_empty() {
            let l = triplet_loss(&positions, &triplets, config.margin)?;
            rec.cc = l.value;
            for (row, g) in l.grads.iter().enumerate() {
                add_pos(row, g, obj.weights.cc);
            }
        }
        if obj.use_bbb {
            let samples: Vec<BbbSample> = point_rows.iter().map(|&r| bbb_sets[batch.rows[r]].clone()).collect();
            let pos: Vec<Point2<f64>> = point_rows.iter().map(|&r| positions[r]).collect();
            let l = bbb_losses(&samples, &data.ap_positions, &data.boxes, config.bbb_distance_margin, &pos)?;
            rec.bi = l.bi;
            rec.boxed = l.boxed;
            for (k, &r) in point_rows.iter().enumerate() {
                add_pos(r, &l.grad_bi[k], obj.weights.bi);
                add_pos(r, &l.grad_box[k], obj.weights.boxed);
            }
        }
        if obj.supervised {
            let pos: Vec<Point2<f64>> = point_rows.iter().map(|&r| positions[r]).collect();
            let truth: Vec<Point2<f64>> = point_rows.iter().map(|&r| train.positions[batch.rows[r]]).collect();
            let l = supervised_loss(&pos, &truth)?;
            rec.supervised = l.value;
            for (k, &r) in point_rows.iter().enumerate() {
                add_pos(r, &l.grads[k], 1.0);
            }
        }
        let grad_feat = if obj.use_dt {
            let sample_ids: Vec<usize> = point_rows.iter().map(|&r| batch.rows[r]).collect();
            let measured = gather(&train.large_scale, &sample_ids);
            let expected = cache.probs.select(Axis(0), &point_rows).dot(&dt.features.t());
            let l = dt_loss(measured.view(), expected.view())?;
            rec.dt = l.value;
            let mut g = Array2::<f64>::zeros((b, dt.feature_dim()));
            for (k, &r) in point_rows.iter().enumerate() {
                g.row_mut(r).scaled_add(obj.weights.dt, &l.grad.row(k));
            }
            Some(g)
        } else {
            None
        };
        rec.total = obj.weights.cc * rec.cc
            + obj.weights.dt * rec.dt
            + obj.weights.bi * rec.bi
            + obj.weights.boxed * rec.boxed
            + rec.supervised;
        if !rec.total.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: rec.total,
                checkpoint: Box::new(last_good),
            });
        }
        let upstream = chain_through_expectations(Some(grad_pos.view()), grad_feat.as_ref().map(|g| g.view()), dt, b);
        let grads = model.backward(&cache, upstream.view())?;
        last_good = model.clone();
        match adam_step(&mut model, &grads, &mut adam, lr) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient { .. }) => {
                return Err(Error::Diverged {
                    iteration,
                    loss: rec.total,
                    checkpoint: Box::new(last_good),
                })
            }
            Err(e) => return Err(e),
        }
        if iteration % 500 == 0 || iteration + 1 == config.iterations {
            log::debug!("{} seed {seed} iteration {iteration}: loss {:.5}", method.name(), rec.total);
        }
        curve.push(rec);
    }
    Ok(TrainOutcome { model, curve })
}

pub fn train_proposed(config: &ExperimentConfig, data: &Datasets, seed: u64) -> Result<TrainOutcome> {
    train(Method::Proposed, config, data, seed)
}

/// Inference-mode expected positions for every row of `inputs`.
pub fn estimate_positions(model: &ChartModel, inputs: &Array2<f64>, dt: &DtDatabase) -> Result<Vec<Point2<f64>>> {
    let mut out = Vec::with_capacity(inputs.nrows());
    let pm = dt.position_matrix();
    for chunk in inputs.axis_chunks_iter(Axis(0), 512) {
        let probs = model.predict(chunk)?;
        let xy = probs.dot(&pm.t());
        out.extend(xy.rows().into_iter().map(|r| Point2::new(r[0], r[1])));
    }
    Ok(out)
}
