//! Training loop.
//!
//! 1. Pretrain every view's autoencoder on reconstruction alone.
//! 2. Initialize each view's centroids with k-means on its own embeddings.
//! 3. Repeat: build the target from the current embeddings, measure the
//!    aligned rate and stop once it exceeds the threshold (or the round budget
//!    is spent); otherwise fine-tune every view for a fixed number of
//!    mini-batches on `L_r + gamma * L_c` with the target held fixed.
//! 4. Predict with the argmax of the view-averaged soft assignments.
//!
//! Views only meet at the target update, so fine-tuning runs one worker per
//! view through [`Parallelism`]. All randomness comes from streams derived
//! from the run seed, independent of scheduling.

mod config;
mod report;

pub use config::{Mode, TrainingConfig};
pub use report::{
    Checkpoint, DatasetSummary, FinalResult, RoundRecord, RunReport, StopReason, Timing, REPORT_SCHEMA_VERSION,
};

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    grad_centroids, grad_embeddings, hard_predict, kl_clustering_loss, AssignmentMatrix, ClusteringLayer,
};
use crate::dataio::MultiViewDataset;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::metrics::{hungarian, ClusteringScores};
use crate::nn::{reconstruction_loss, reconstruction_loss_and_grad, AdamConfig, AdamState, Autoencoder, DenseLayer};
use crate::parallel::Parallelism;
use crate::rng::{derive_seed, Rng};
use crate::target::{kmeans_with, pseudo_assign, scale_and_concat, sharpen_with_diagnostics};

// Labels of the random streams derived from the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_PRETRAIN: u64 = 2;
const STREAM_VIEW_KMEANS: u64 = 3;
const STREAM_TARGET_KMEANS: u64 = 4;
const STREAM_FINETUNE: u64 = 5;

/// Pretrained autoencoders with the mean reconstruction loss of every epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub models: Vec<Autoencoder>,
    pub epoch_losses: Vec<Vec<f64>>,
}

impl Pretrained {
    pub fn final_losses(&self) -> Vec<f64> {
        self.epoch_losses
            .iter()
            .map(|l| l.last().copied().unwrap_or(f64::NAN))
            .collect()
    }
}

/// Autoencoder plus clustering layer of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewModel {
    pub autoencoder: Autoencoder,
    pub clustering: ClusteringLayer,
}

impl ViewModel {
    /// Re-runs the constructors' checks, e.g. after deserializing.
    pub fn validated(self) -> Result<Self> {
        let rebuild = |layers: &[DenseLayer]| -> Result<Vec<DenseLayer>> {
            layers
                .iter()
                .map(|l| DenseLayer::new(l.weights.clone(), l.biases.clone(), l.activation))
                .collect()
        };
        let ae = &self.autoencoder;
        Ok(ViewModel {
            autoencoder: Autoencoder::from_layers(rebuild(ae.encoder())?, rebuild(ae.decoder())?)?,
            clustering: ClusteringLayer::new(self.clustering.centroids().clone())?,
        })
    }
}

/// A view model with its fine-tuning optimizer state.
#[derive(Clone, Debug)]
pub struct ViewTrainer {
    pub model: ViewModel,
    autoencoder_opt: AdamState,
    centroid_opt: AdamState,
}

/// Mean losses of one fine-tuning round of one view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundStats {
    pub reconstruction: f64,
    pub clustering: f64,
    pub batches: usize,
}

impl ViewTrainer {
    pub fn new(model: ViewModel, learning_rate: f64) -> Self {
        let adam = AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        };
        let sizes = model.autoencoder.parameter_sizes();
        let centroid_len = model.clustering.centroids().as_slice().len();
        ViewTrainer {
            autoencoder_opt: AdamState::new(adam, &sizes),
            centroid_opt: AdamState::new(adam, &[centroid_len]),
            model,
        }
    }

    /// One mini-batch step on `L_r + gamma * L_c` for the rows `batch`.
    /// Returns the batch's summed reconstruction and clustering losses.
    fn step(&mut self, x: &Matrix, target: &AssignmentMatrix, batch: &[usize], gamma: f64) -> Result<(f64, f64)> {
        let xb = x.select_rows(batch);
        let pb = target.select_rows(batch);
        let ae = &mut self.model.autoencoder;
        let layer = &mut self.model.clustering;

        let trace = ae.forward(&xb)?;
        let z = trace.embedding();
        let q = layer.soft_assign(z)?;
        let (rec_loss, grad_out) = reconstruction_loss_and_grad(&xb, trace.reconstruction())?;
        let clu_loss = kl_clustering_loss(&pb, &q)?;

        let inv_n = 1.0 / batch.len() as f64;
        let mut grad_z = grad_embeddings(z, layer, &pb, &q)?;
        grad_z.scale_in_place(gamma);
        let mut grads = ae.backward(&trace, grad_out, Some(&grad_z))?;
        grads.scale(inv_n);
        let mut grad_mu = grad_centroids(z, layer, &pb, &q)?;
        grad_mu.scale_in_place(inv_n);

        self.autoencoder_opt.step(&mut ae.parameters_mut(), &grads.slices())?;
        self.centroid_opt
            .step(&mut [layer.centroids_mut().as_mut_slice()], &[grad_mu.as_slice()])?;
        if !(rec_loss.is_finite() && clu_loss.is_finite()) {
            return Err(Error::Numerical("fine-tuning loss became non-finite".into()));
        }
        Ok((rec_loss, clu_loss))
    }

    /// Fine-tunes for `config.finetune_batches_per_round` mini-batches against
    /// a fixed target. Batches walk seeded permutations of the example ids;
    /// the permutation for `(round, pass)` is the same for every view.
    pub fn finetune_round(
        &mut self,
        x: &Matrix,
        target: &AssignmentMatrix,
        config: &TrainingConfig,
        round: usize,
    ) -> Result<RoundStats> {
        let n = x.rows();
        if target.n_rows() != n || target.n_clusters() != self.model.clustering.n_clusters() {
            return Err(Error::shape(format!(
                "target is {}x{}, expected {}x{}",
                target.n_rows(),
                target.n_clusters(),
                n,
                self.model.clustering.n_clusters()
            )));
        }
        let budget = config.finetune_batches_per_round;
        let (mut done, mut examples, mut rec, mut clu) = (0, 0usize, 0.0, 0.0);
        let mut pass = 0u64;
        while done < budget {
            let perm = Rng::derived(config.seed, &[STREAM_FINETUNE, round as u64, pass]).permutation(n);
            for batch in perm.chunks(config.batch_size) {
                if done == budget {
                    break;
                }
                let (r, c) = self.step(x, target, batch, config.gamma)?;
                rec += r;
                clu += c;
                examples += batch.len();
                done += 1;
            }
            pass += 1;
        }
        let denom = examples.max(1) as f64;
        Ok(RoundStats {
            reconstruction: rec / denom,
            clustering: clu / denom,
            batches: done,
        })
    }
}

/// Randomly initialized autoencoders, one per view, from per-view streams.
pub fn init_models(dataset: &MultiViewDataset, config: &TrainingConfig) -> Result<Vec<Autoencoder>> {
    dataset
        .dims()
        .iter()
        .enumerate()
        .map(|(v, &d)| {
            let mut rng = Rng::derived(config.seed, &[STREAM_INIT, v as u64]);
            Autoencoder::new(d, &config.hidden, config.embed_dim, &mut rng)
        })
        .collect()
}

fn pretrain_view(model: &mut Autoencoder, x: &Matrix, config: &TrainingConfig) -> Result<Vec<f64>> {
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut opt = AdamState::new(adam, &model.parameter_sizes());
    let n = x.rows();
    let mut losses = Vec::with_capacity(config.pretrain_epochs);
    for epoch in 0..config.pretrain_epochs {
        let perm = Rng::derived(config.seed, &[STREAM_PRETRAIN, epoch as u64]).permutation(n);
        let mut total = 0.0;
        for batch in perm.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let (loss, mut grads) = model.backward_reconstruction(&xb)?;
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.parameters_mut(), &grads.slices())?;
            total += loss;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("pretraining loss non-finite at epoch {epoch}")));
        }
        losses.push(mean);
    }
    Ok(losses)
}

/// Trains every view's autoencoder on reconstruction only for
/// `config.pretrain_epochs` epochs of shuffled mini-batches.
pub fn pretrain(dataset: &MultiViewDataset, config: &TrainingConfig, parallelism: Parallelism) -> Result<Pretrained> {
    config.validate(dataset.n())?;
    let models = init_models(dataset, config)?;
    let jobs: Vec<(usize, Autoencoder)> = models.into_iter().enumerate().collect();
    let results = parallelism.map(jobs, |(v, mut model)| {
        pretrain_view(&mut model, dataset.view(v), config).map(|losses| (model, losses))
    });
    let mut models = Vec::with_capacity(results.len());
    let mut epoch_losses = Vec::with_capacity(results.len());
    for r in results {
        let (m, l) = r?;
        models.push(m);
        epoch_losses.push(l);
    }
    Ok(Pretrained { models, epoch_losses })
}

/// k-means on each view's own embeddings gives that view's initial centroids.
pub fn init_view_centroids(
    models: &[Autoencoder],
    dataset: &MultiViewDataset,
    k: usize,
    seed: u64,
    restarts: usize,
    parallelism: Parallelism,
) -> Result<Vec<ClusteringLayer>> {
    if models.len() != dataset.n_views() {
        return Err(Error::invalid(format!(
            "{} models for {} views",
            models.len(),
            dataset.n_views()
        )));
    }
    if dataset.n() < k {
        return Err(Error::invalid(format!("{} examples cannot form {k} clusters", dataset.n())));
    }
    let jobs: Vec<(usize, &Autoencoder)> = models.iter().enumerate().collect();
    parallelism
        .map(jobs, |(v, model)| {
            let z = model.encode(dataset.view(v))?;
            let km = kmeans_with(&z, k, derive_seed(seed, &[STREAM_VIEW_KMEANS, v as u64]), restarts, Parallelism::Sequential)?;
            ClusteringLayer::new(km.centroids.centroids)
        })
        .into_iter()
        .collect()
}

/// Fraction of examples on which every view predicts the same cluster.
pub fn aligned_rate(predictions: &[Vec<usize>]) -> Result<f64> {
    let Some(first) = predictions.first() else {
        return Err(Error::invalid("no predictions"));
    };
    if predictions.iter().any(|p| p.len() != first.len()) {
        return Err(Error::shape("prediction vectors differ in length"));
    }
    if first.is_empty() {
        return Ok(1.0);
    }
    let aligned = (0..first.len())
        .filter(|&i| predictions.iter().all(|p| p[i] == first[i]))
        .count();
    Ok(aligned as f64 / first.len() as f64)
}

/// Argmax of the view-averaged soft assignments, lowest index on ties.
pub fn consensus_predict(assignments: &[AssignmentMatrix]) -> Result<Vec<usize>> {
    let Some(first) = assignments.first() else {
        return Err(Error::invalid("no assignments"));
    };
    let shape = first.values().shape();
    if assignments.iter().any(|q| q.values().shape() != shape) {
        return Err(Error::shape("assignment matrices differ in shape"));
    }
    let v = assignments.len() as f64;
    let mut mean = Matrix::zeros(shape.0, shape.1);
    for q in assignments {
        for (m, x) in mean.as_mut_slice().iter_mut().zip(q.values().as_slice()) {
            *m += x;
        }
    }
    mean.scale_in_place(1.0 / v);
    Ok(mean.row_iter().map(crate::clustering::argmax).collect())
}

/// Mean over view pairs of `(1 / NK) sum_ij |q_ij^a - q_ij^b|`.
pub fn view_disagreement(assignments: &[AssignmentMatrix]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..assignments.len() {
        for b in a + 1..assignments.len() {
            let (qa, qb) = (assignments[a].values(), assignments[b].values());
            let sum: f64 = qa.as_slice().iter().zip(qb.as_slice()).map(|(x, y)| (x - y).abs()).sum();
            total += sum / qa.as_slice().len().max(1) as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Mean distance between two centroid sets under the cheapest one-to-one
/// matching.
fn centroid_drift(previous: &Matrix, current: &Matrix) -> f64 {
    let k = current.rows();
    let dist: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| squared_distance(previous.row(a), current.row(b)).sqrt()).collect())
        .collect();
    let cost: Vec<Vec<i64>> = dist
        .iter()
        .map(|r| r.iter().map(|d| (d * 1e9).round() as i64).collect())
        .collect();
    let matching = hungarian(&cost);
    matching.iter().enumerate().map(|(a, &b)| dist[a][b]).sum::<f64>() / k as f64
}

/// Relabeling `perm` (label `l` becomes `perm[l]`) that maximizes agreement
/// of `labels` with `reference`.
pub fn matching_permutation(labels: &[usize], reference: &[usize], k: usize) -> Vec<usize> {
    let mut overlap = vec![vec![0i64; k]; k];
    for (&l, &r) in labels.iter().zip(reference) {
        overlap[l][r] += 1;
    }
    let max = overlap.iter().flatten().copied().max().unwrap_or(0);
    let cost: Vec<Vec<i64>> = overlap.iter().map(|row| row.iter().map(|c| max - c).collect()).collect();
    hungarian(&cost)
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = m.clone();
    for (from, &to) in perm.iter().enumerate() {
        out.row_mut(to).copy_from_slice(m.row(from));
    }
    out
}

fn permute_columns(m: &AssignmentMatrix, perm: &[usize]) -> AssignmentMatrix {
    let v = m.values();
    let mut out = Matrix::zeros(v.rows(), v.cols());
    for i in 0..v.rows() {
        for (from, &to) in perm.iter().enumerate() {
            out[(i, to)] = v[(i, from)];
        }
    }
    AssignmentMatrix::from_normalized(out)
}

/// A target from k-means over scaled, concatenated features.
struct UnifiedTarget {
    target: AssignmentMatrix,
    centroids: Matrix,
    inertia: f64,
    clamped: usize,
}

fn unified_target(blocks: &[Matrix], k: usize, seed: u64, restarts: usize, parallelism: Parallelism) -> Result<UnifiedTarget> {
    let global = scale_and_concat(blocks)?;
    let km = kmeans_with(&global.values, k, seed, restarts, parallelism)?;
    let s = pseudo_assign(&global, &km.centroids)?;
    let sharpened = sharpen_with_diagnostics(&s);
    Ok(UnifiedTarget {
        target: sharpened.target,
        centroids: km.centroids.centroids,
        inertia: km.centroids.inertia,
        clamped: sharpened.clamped_clusters.len(),
    })
}

impl UnifiedTarget {
    fn labels(&self) -> Vec<usize> {
        hard_predict(&self.target)
    }

    fn relabel(&mut self, perm: &[usize]) {
        self.target = permute_columns(&self.target, perm);
        self.centroids = permute_rows(&self.centroids, perm);
    }
}

enum Targets {
    Shared(AssignmentMatrix),
    PerView(Vec<AssignmentMatrix>),
}

impl Targets {
    fn for_view(&self, v: usize) -> &AssignmentMatrix {
        match self {
            Targets::Shared(p) => p,
            Targets::PerView(ps) => &ps[v],
        }
    }
}

/// Full-dataset view of the current models.
struct Snapshot {
    embeddings: Vec<Matrix>,
    assignments: Vec<AssignmentMatrix>,
    reconstruction: Vec<f64>,
}

fn snapshot(workers: &[ViewTrainer], dataset: &MultiViewDataset, parallelism: Parallelism) -> Result<Snapshot> {
    let jobs: Vec<(usize, &ViewTrainer)> = workers.iter().enumerate().collect();
    let per_view = parallelism.map(jobs, |(v, w)| -> Result<(Matrix, AssignmentMatrix, f64)> {
        let x = dataset.view(v);
        let z = w.model.autoencoder.encode(x)?;
        let x_hat = w.model.autoencoder.decode(&z)?;
        let rec = reconstruction_loss(x, &x_hat)? / x.rows() as f64;
        let q = w.model.clustering.soft_assign(&z)?;
        if !(z.is_finite() && rec.is_finite()) {
            return Err(Error::Numerical(format!("view {v} produced non-finite embeddings")));
        }
        Ok((z, q, rec))
    });
    let mut snap = Snapshot {
        embeddings: Vec::new(),
        assignments: Vec::new(),
        reconstruction: Vec::new(),
    };
    for r in per_view {
        let (z, q, rec) = r?;
        snap.embeddings.push(z);
        snap.assignments.push(q);
        snap.reconstruction.push(rec);
    }
    Ok(snap)
}

fn scores_for(labels: Option<&[usize]>, preds: &[Vec<usize>], consensus: &[usize]) -> Result<(Option<Vec<ClusteringScores>>, Option<ClusteringScores>)> {
    let Some(truth) = labels else {
        return Ok((None, None));
    };
    let per_view = preds
        .iter()
        .map(|p| ClusteringScores::compute(p, truth))
        .collect::<Result<Vec<_>>>()?;
    Ok((Some(per_view), Some(ClusteringScores::compute(consensus, truth)?)))
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: RunReport,
    /// Consensus prediction.
    pub labels: Vec<usize>,
    pub view_labels: Vec<Vec<usize>>,
    pub models: Vec<ViewModel>,
    pub assignments: Vec<AssignmentMatrix>,
}

/// A failed run together with the report filled in up to the failure.
#[derive(Debug)]
pub struct TrainError {
    pub source: Error,
    pub partial: Box<RunReport>,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training aborted: {}", self.source)
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Runs the unified-target training of `config.mode == Sdmvc`.
pub fn train_sdmvc(dataset: &MultiViewDataset, config: &TrainingConfig) -> std::result::Result<TrainOutcome, TrainError> {
    if config.mode != Mode::Sdmvc {
        return Err(reject(dataset, config, format!("train_sdmvc called with mode {}", config.mode)));
    }
    train(dataset, config, None, Parallelism::from_env())
}

/// Runs one of the ablation baselines.
pub fn train_baseline(dataset: &MultiViewDataset, config: &TrainingConfig) -> std::result::Result<TrainOutcome, TrainError> {
    if !config.mode.is_baseline() {
        return Err(reject(dataset, config, format!("{} is not a baseline mode", config.mode)));
    }
    train(dataset, config, None, Parallelism::from_env())
}

fn summary(dataset: &MultiViewDataset) -> DatasetSummary {
    DatasetSummary {
        name: dataset.name.clone(),
        n: dataset.n(),
        dims: dataset.dims(),
        has_labels: dataset.labels().is_some(),
    }
}

fn reject(dataset: &MultiViewDataset, config: &TrainingConfig, msg: String) -> TrainError {
    TrainError {
        source: Error::InvalidInput(msg),
        partial: Box::new(RunReport::new(config, summary(dataset))),
    }
}

/// Full pipeline for any mode. Pass `pretrained` to reuse autoencoders
/// (they must come from [`pretrain`] with the same architecture); otherwise
/// pretraining runs first.
pub fn train(
    dataset: &MultiViewDataset,
    config: &TrainingConfig,
    pretrained: Option<&Pretrained>,
    parallelism: Parallelism,
) -> std::result::Result<TrainOutcome, TrainError> {
    let started = Instant::now();
    let mut report = RunReport::new(config, summary(dataset));
    let result = run(&mut report, dataset, config, pretrained, parallelism);
    report.timing.total_seconds = started.elapsed().as_secs_f64();
    match result {
        Ok((labels, view_labels, models, assignments)) => {
            report.incomplete = false;
            Ok(TrainOutcome {
                report,
                labels,
                view_labels,
                models,
                assignments,
            })
        }
        Err(source) => Err(TrainError {
            source,
            partial: Box::new(report),
        }),
    }
}

type RunOutput = (Vec<usize>, Vec<Vec<usize>>, Vec<ViewModel>, Vec<AssignmentMatrix>);

fn run(
    report: &mut RunReport,
    dataset: &MultiViewDataset,
    config: &TrainingConfig,
    pretrained: Option<&Pretrained>,
    parallelism: Parallelism,
) -> Result<RunOutput> {
    config.validate(dataset.n())?;
    let owned;
    let pretrained = match pretrained {
        Some(p) => {
            let dims_ok = p.models.len() == dataset.n_views()
                && p.models.iter().zip(dataset.dims()).all(|(m, d)| m.input_dim() == d && m.embed_dim() == config.embed_dim);
            if !dims_ok {
                return Err(Error::invalid("pretrained models do not fit this dataset and config"));
            }
            p
        }
        None => {
            let t = Instant::now();
            owned = pretrain(dataset, config, parallelism)?;
            report.timing.pretrain_seconds = t.elapsed().as_secs_f64();
            &owned
        }
    };
    report.pretrain_loss = pretrained.final_losses();

    let k = config.k;
    let layers = init_view_centroids(&pretrained.models, dataset, k, config.seed, config.kmeans_restarts, parallelism)?;
    let mut workers: Vec<ViewTrainer> = pretrained
        .models
        .iter()
        .cloned()
        .zip(layers)
        .map(|(autoencoder, clustering)| ViewTrainer::new(ViewModel { autoencoder, clustering }, config.learning_rate))
        .collect();

    // Cluster indices of independently initialized views are arbitrary.
    // Relabel every view against one reference partition so that the same
    // index means the same cluster in all views and in the target.
    let target_seed = |round: usize| derive_seed(config.seed, &[STREAM_TARGET_KMEANS, round as u64]);
    let mut pending = match config.mode {
        Mode::Sdmvc => {
            let z = snapshot(&workers, dataset, parallelism)?.embeddings;
            Some(unified_target(&z, k, target_seed(0), config.kmeans_restarts, parallelism)?)
        }
        Mode::NoSsm => Some(unified_target(dataset.views(), k, target_seed(0), config.kmeans_restarts, parallelism)?),
        Mode::IdecPerView | Mode::NoUtd => None,
    };
    let reference = match &pending {
        Some(ut) => ut.labels(),
        None => hard_predict(&workers[0].model.clustering.soft_assign(&workers[0].model.autoencoder.encode(dataset.view(0))?)?),
    };
    for (v, w) in workers.iter_mut().enumerate() {
        let z = w.model.autoencoder.encode(dataset.view(v))?;
        let labels = hard_predict(&w.model.clustering.soft_assign(&z)?);
        let perm = matching_permutation(&labels, &reference, k);
        let c = permute_rows(w.model.clustering.centroids(), &perm);
        *w.model.clustering.centroids_mut() = c;
    }
    let fixed = if config.mode == Mode::NoSsm { pending.take() } else { None };

    let mut previous: Option<(Matrix, Vec<usize>)> = None;
    let mut round = 0usize;
    let (snap, aligned) = loop {
        let t = Instant::now();
        let snap = snapshot(&workers, dataset, parallelism)?;
        let preds: Vec<Vec<usize>> = snap.assignments.iter().map(hard_predict).collect();

        let mut inertia = None;
        let mut drift = None;
        let mut clamped = 0;
        let targets = match config.mode {
            Mode::Sdmvc => {
                let mut ut = match pending.take() {
                    Some(ut) => ut,
                    None => unified_target(&snap.embeddings, k, target_seed(round), config.kmeans_restarts, parallelism)?,
                };
                if let Some((prev_centroids, prev_labels)) = &previous {
                    // fresh k-means numbers clusters arbitrarily; keep the
                    // numbering the views were trained against
                    ut.relabel(&matching_permutation(&ut.labels(), prev_labels, k));
                    drift = Some(centroid_drift(prev_centroids, &ut.centroids));
                }
                inertia = Some(ut.inertia);
                clamped = ut.clamped;
                previous = Some((ut.centroids.clone(), ut.labels()));
                Targets::Shared(ut.target)
            }
            Mode::NoSsm => {
                let ut = fixed.as_ref().expect("built before the loop");
                inertia = Some(ut.inertia);
                clamped = ut.clamped;
                Targets::Shared(ut.target.clone())
            }
            Mode::IdecPerView | Mode::NoUtd => Targets::PerView(
                snap.assignments
                    .iter()
                    .map(|q| {
                        let s = sharpen_with_diagnostics(q);
                        clamped += s.clamped_clusters.len();
                        s.target
                    })
                    .collect(),
            ),
        };
        if clamped > 0 {
            report
                .warnings
                .push(format!("round {round}: {clamped} target cluster frequencies clamped"));
        }

        let aligned = aligned_rate(&preds)?;
        let consensus = consensus_predict(&snap.assignments)?;
        let (per_view_scores, consensus_scores) = scores_for(dataset.labels(), &preds, &consensus)?;
        let clustering_loss = snap
            .assignments
            .iter()
            .enumerate()
            .map(|(v, q)| kl_clustering_loss(targets.for_view(v), q))
            .collect::<Result<Vec<_>>>()?;
        report.checkpoints.push(Checkpoint {
            round,
            aligned_rate: aligned,
            view_disagreement: view_disagreement(&snap.assignments),
            clustering_loss,
            reconstruction_loss: snap.reconstruction.clone(),
            target_inertia: inertia,
            centroid_drift: drift,
            clamped_clusters: clamped,
            per_view_scores,
            consensus_scores,
        });
        report.timing.target_seconds.push(t.elapsed().as_secs_f64());

        if config.mode.uses_alignment_stop() && aligned > config.aligned_stop {
            report.stop_reason = Some(StopReason::AlignedThreshold);
            break (snap, aligned);
        }
        if round >= config.max_rounds {
            report.stop_reason = Some(StopReason::MaxRounds);
            break (snap, aligned);
        }

        let t = Instant::now();
        let jobs: Vec<(usize, &mut ViewTrainer)> = workers.iter_mut().enumerate().collect();
        let stats = parallelism
            .map(jobs, |(v, w)| w.finetune_round(dataset.view(v), targets.for_view(v), config, round))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        report.rounds.push(RoundRecord {
            round,
            aligned_rate: aligned,
            batches: stats.first().map_or(0, |s| s.batches),
            reconstruction_loss: stats.iter().map(|s| s.reconstruction).collect(),
            clustering_loss: stats.iter().map(|s| s.clustering).collect(),
        });
        report.timing.finetune_seconds.push(t.elapsed().as_secs_f64());
        round += 1;
    };

    let view_labels: Vec<Vec<usize>> = snap.assignments.iter().map(hard_predict).collect();
    let labels = consensus_predict(&snap.assignments)?;
    let (per_view_scores, consensus_scores) = scores_for(dataset.labels(), &view_labels, &labels)?;
    report.final_result = Some(FinalResult {
        aligned_rate: aligned,
        per_view_scores,
        consensus_scores,
    });
    let models = workers.into_iter().map(|w| w.model).collect();
    Ok((labels, view_labels, models, snap.assignments))
}
