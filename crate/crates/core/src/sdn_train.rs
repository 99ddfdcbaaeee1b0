//! Dataset generation, MSE training, and evaluation for the surrogate
//! dynamic network, plus the frozen-model generalization sweeps.
//!
//! Datasets store the *scaled* problem: inputs are divided by v_th so every
//! stored sequence is at effective threshold 1, and targets are the decayed
//! post-reset potentials τ·u_{t−1} produced by the iterative neuron on those
//! stored inputs. That makes a dataset self-contained — targets are exactly
//! reproducible from inputs + meta.

use crate::error::{Error, Result};
use crate::grad::AdamW;
use crate::lif::{lif_run, NeuronParams, ResetMode, SpikeTrain};
use crate::rng::Rng;
use crate::sdn::{parallel_spike, SdnModel, SdnTrainCache, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta {
    pub tau: f64,
    pub v_th: f64,
    pub length: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SdnDataset {
    /// Row-major [count][length], pre-scaled by 1/v_th.
    pub inputs: Vec<f32>,
    /// Row-major [count][length]; targets[i][0] = 0 (zero initial potential).
    pub targets: Vec<f32>,
    pub meta: DatasetMeta,
}

impl SdnDataset {
    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.meta.length..(i + 1) * self.meta.length]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i * self.meta.length..(i + 1) * self.meta.length]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.meta.count * self.meta.length;
        if self.inputs.len() != n || self.targets.len() != n {
            return Err(Error::data(format!(
                "dataset length mismatch: meta says {} values, inputs {} targets {}",
                n,
                self.inputs.len(),
                self.targets.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_spike_accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalStats {
    pub mse: f64,
    pub spike_accuracy: f64,
}

/// Decayed post-reset trace τ·u_{t−1} and the oracle spikes for a stored
/// (already threshold-scaled) input row.
pub fn target_trace(inputs: &[f32], tau: f64) -> Result<(Vec<f32>, SpikeTrain)> {
    let params = NeuronParams { tau, v_th: 1.0, u_r: 0.0, reset: ResetMode::Hard };
    let x64: Vec<f64> = inputs.iter().map(|&v| v as f64).collect();
    let (spikes, trace) = lif_run(&x64, &params)?;
    let mut targets = vec![0.0f32; inputs.len()];
    for t in 1..inputs.len() {
        targets[t] = (tau * trace.post_reset[t - 1]) as f32;
    }
    Ok((targets, spikes))
}

/// Draw `count` sequences of `length` from N(mean, std²), scale by 1/v_th,
/// and label them with the iterative oracle. Sample i uses RNG substream i of
/// `seed`, so any sample is regenerable in isolation.
pub fn generate_dataset(
    count: usize,
    length: usize,
    params: &NeuronParams,
    dist: (f64, f64),
    seed: u64,
) -> Result<SdnDataset> {
    if count == 0 || length == 0 {
        return Err(Error::invalid("dataset count and length must be positive"));
    }
    params.validate()?;
    if params.reset != ResetMode::Hard || params.u_r != 0.0 {
        return Err(Error::invalid(
            "dataset generation requires hard reset to u_r = 0 (the closed-form target depends on it)",
        ));
    }
    let (mean, std) = dist;
    let mut inputs = vec![0.0f32; count * length];
    let mut targets = vec![0.0f32; count * length];
    let root = Rng::new(seed);
    for i in 0..count {
        let mut r = root.split(i as u64);
        let raw = r.normal_seq(length, mean, std)?;
        let row = &mut inputs[i * length..(i + 1) * length];
        for (dst, &v) in row.iter_mut().zip(&raw) {
            *dst = (v / params.v_th) as f32;
        }
        let (tg, _) = target_trace(row, params.tau)?;
        targets[i * length..(i + 1) * length].copy_from_slice(&tg);
    }
    Ok(SdnDataset {
        inputs,
        targets,
        meta: DatasetMeta {
            tau: params.tau,
            v_th: params.v_th,
            length,
            count,
            mean,
            std,
            seed,
        },
    })
}

/// MSE-train a fresh model on `dataset`. A tail slice (10%, capped at 2000
/// samples) is held out for the per-epoch test columns of the report.
/// Aborts with a numerical error if the loss stops being finite.
pub fn train_sdn(
    dataset: &SdnDataset,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(SdnModel, TrainReport)> {
    dataset.validate()?;
    if epochs == 0 || batch_size == 0 {
        return Err(Error::invalid("epochs and batch_size must be positive"));
    }
    let l = dataset.meta.length;
    let count = dataset.meta.count;
    let test_count = (count / 10).clamp(1, 2000).min(count);
    let train_count = (count - test_count).max(1);
    let mut rng = Rng::new(seed);
    let mut model = SdnModel::init(&mut rng);
    let mut opt = AdamW::new(lr, 0.0, PARAM_COUNT);
    let mut order: Vec<usize> = (0..train_count).collect();
    let mut cache = SdnTrainCache::default();
    let mut xb = vec![0.0f32; batch_size * l];
    let mut tb = vec![0.0f32; batch_size * l];
    let mut dy = vec![0.0f32; batch_size * l];
    let mut grads = vec![0.0f32; PARAM_COUNT];
    // Oracle spikes of the held-out slice, computed once.
    let test_rows: Vec<usize> = (count - test_count..count).collect();
    let mut test_spikes = Vec::with_capacity(test_count);
    for &i in &test_rows {
        let (_, s) = target_trace(dataset.input(i), dataset.meta.tau)?;
        test_spikes.push(s);
    }
    let mut report = TrainReport::default();
    for epoch in 0..epochs {
        // Cosine decay to 1% of the base rate. The spike-accuracy metric is
        // dominated by potentials sitting right at the threshold, and those
        // only settle once the step size gets small.
        let t = epoch as f64 / (epochs.max(2) - 1) as f64;
        opt.lr = lr * (0.01 + 0.99 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()));
        let mut shuffler = rng.split(1_000 + epoch as u64);
        shuffler.shuffle(&mut order);
        let mut sq_sum = 0.0f64;
        let mut step_count = 0usize;
        for chunk in order.chunks(batch_size) {
            let b = chunk.len();
            for (slot, &row) in chunk.iter().enumerate() {
                xb[slot * l..(slot + 1) * l].copy_from_slice(dataset.input(row));
                tb[slot * l..(slot + 1) * l].copy_from_slice(dataset.target(row));
            }
            model.forward_train(&xb[..b * l], b, l, &mut cache);
            let scale = 2.0 / (b * l) as f32;
            let mut batch_sq = 0.0f64;
            for i in 0..b * l {
                let d = cache.y[i] - tb[i];
                dy[i] = scale * d;
                batch_sq += (d as f64) * (d as f64);
            }
            if !batch_sq.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch}: non-finite loss"
                )));
            }
            sq_sum += batch_sq;
            step_count += b * l;
            grads.fill(0.0);
            model.backward_train(&xb[..b * l], &dy[..b * l], &mut cache, &mut grads);
            opt.step(&mut model.params, &grads)?;
        }
        let train_mse = sq_sum / step_count as f64;
        let mut test_sq = 0.0f64;
        let mut hits = 0usize;
        for (k, &i) in test_rows.iter().enumerate() {
            let x = dataset.input(i);
            let pred = model.forward_eval(x);
            let tg = dataset.target(i);
            for t in 0..l {
                let d = (pred[t] - tg[t]) as f64;
                test_sq += d * d;
            }
            let (s, _) = parallel_spike(&pred, x, 1.0)?;
            hits += s.0.iter().zip(&test_spikes[k].0).filter(|(a, b)| a == b).count();
        }
        report.epochs.push(EpochStats {
            train_mse,
            test_mse: test_sq / (test_count * l) as f64,
            test_spike_accuracy: hits as f64 / (test_count * l) as f64,
        });
    }
    Ok((model, report))
}

/// MSE + spike accuracy of `predict` against a dataset's targets and oracle
/// spikes. `predict` maps one scaled input row to the predicted leak terms.
pub fn eval_with(
    mut predict: impl FnMut(&[f32]) -> Vec<f32>,
    dataset: &SdnDataset,
) -> Result<EvalStats> {
    dataset.validate()?;
    let l = dataset.meta.length;
    let mut sq = 0.0f64;
    let mut hits = 0usize;
    for i in 0..dataset.meta.count {
        let x = dataset.input(i);
        let pred = predict(x);
        if pred.len() != l {
            return Err(Error::invalid(format!(
                "prediction length {} does not match sequence length {l}",
                pred.len()
            )));
        }
        let tg = dataset.target(i);
        for t in 0..l {
            let d = (pred[t] - tg[t]) as f64;
            sq += d * d;
        }
        let (_, oracle) = target_trace(x, dataset.meta.tau)?;
        let (s, _) = parallel_spike(&pred, x, 1.0)?;
        hits += s.0.iter().zip(&oracle.0).filter(|(a, b)| a == b).count();
    }
    let steps = (dataset.meta.count * l) as f64;
    Ok(EvalStats { mse: sq / steps, spike_accuracy: hits as f64 / steps })
}

pub fn eval_sdn(model: &SdnModel, dataset: &SdnDataset) -> Result<EvalStats> {
    eval_with(|x| model.forward(x), dataset)
}

/// Like eval over `generate_dataset(count, length, ...)` but one sample at a
/// time, so long-sequence sweeps never materialize the whole dataset.
pub fn eval_streamed(
    model: &SdnModel,
    count: usize,
    length: usize,
    params: &NeuronParams,
    dist: (f64, f64),
    seed: u64,
) -> Result<EvalStats> {
    if count == 0 || length == 0 {
        return Err(Error::invalid("count and length must be positive"));
    }
    params.validate()?;
    if params.reset != ResetMode::Hard || params.u_r != 0.0 {
        return Err(Error::invalid("evaluation oracle requires hard reset to u_r = 0"));
    }
    let root = Rng::new(seed);
    let mut x = vec![0.0f32; length];
    let mut sq = 0.0f64;
    let mut hits = 0usize;
    for i in 0..count {
        let mut r = root.split(i as u64);
        let raw = r.normal_seq(length, dist.0, dist.1)?;
        for (dst, &v) in x.iter_mut().zip(&raw) {
            *dst = (v / params.v_th) as f32;
        }
        let (tg, oracle) = target_trace(&x, params.tau)?;
        let pred = model.forward(&x);
        for t in 0..length {
            let d = (pred[t] - tg[t]) as f64;
            sq += d * d;
        }
        let (s, _) = parallel_spike(&pred, &x, 1.0)?;
        hits += s.0.iter().zip(&oracle.0).filter(|(a, b)| a == b).count();
    }
    let steps = (count * length) as f64;
    Ok(EvalStats { mse: sq / steps, spike_accuracy: hits as f64 / steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Value = sequence length (positive integer).
    Length,
    /// Value = mean of the input Gaussian; std carried over from the base meta.
    Distribution,
    /// Value = membrane decay τ ∈ [0, 1].
    Tau,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "length" => Ok(SweepAxis::Length),
            "distribution" => Ok(SweepAxis::Distribution),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::invalid(format!(
                "unknown sweep axis '{other}' (expected length, distribution, or tau)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
    pub mse: f64,
}

/// Evaluate a frozen model across one varied dataset property, regenerating
/// the dataset for each value. The base meta supplies everything not swept.
pub fn generalization_sweep(
    model: &SdnModel,
    axis: SweepAxis,
    values: &[f64],
    base: &DatasetMeta,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut params = NeuronParams {
            tau: base.tau,
            v_th: base.v_th,
            u_r: 0.0,
            reset: ResetMode::Hard,
        };
        let mut length = base.length;
        let mut dist = (base.mean, base.std);
        match axis {
            SweepAxis::Length => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::invalid(format!("length value {v} must be a positive integer")));
                }
                length = v as usize;
            }
            SweepAxis::Distribution => dist.0 = v,
            SweepAxis::Tau => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("tau value {v} outside [0, 1]")));
                }
                params.tau = v;
            }
        }
        let stats = eval_streamed(model, base.count, length, &params, dist, base.seed)?;
        rows.push(SweepRow { value: v, accuracy: stats.spike_accuracy, mse: stats.mse });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("value,accuracy,mse\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.value, r.accuracy, r.mse));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_params() -> NeuronParams {
        NeuronParams::default()
    }

    #[test]
    fn rejects_empty_shapes_and_bad_neuron_setups() {
        assert!(generate_dataset(0, 8, &quick_params(), (0.0, 1.0), 1).is_err());
        assert!(generate_dataset(8, 0, &quick_params(), (0.0, 1.0), 1).is_err());
        let soft = NeuronParams { reset: ResetMode::Soft, ..quick_params() };
        assert!(generate_dataset(4, 8, &soft, (0.0, 1.0), 1).is_err());
        let lifted = NeuronParams { u_r: 0.5, ..quick_params() };
        assert!(generate_dataset(4, 8, &lifted, (0.0, 1.0), 1).is_err());
        assert!(generate_dataset(4, 8, &quick_params(), (0.0, -1.0), 1).is_err());
    }

    #[test]
    fn first_target_is_always_zero() {
        let ds = generate_dataset(16, 32, &quick_params(), (0.0, 1.0), 3).unwrap();
        for i in 0..16 {
            assert_eq!(ds.target(i)[0], 0.0);
        }
    }

    #[test]
    fn hard_reset_zeroes_the_target_after_a_spike() {
        // x = [2.0, 0.5]: step 1 fires (u' = 2 ≥ 1), hard reset to 0, so the
        // step-2 leak term τ·u_1 is 0.
        let (targets, spikes) = target_trace(&[2.0, 0.5], 0.2).unwrap();
        assert_eq!(spikes.0, vec![1, 0]);
        assert_eq!(targets, vec![0.0, 0.0]);
        // Without a spike the leak term is plain decay: x = [0.5, 0.5].
        let (targets, spikes) = target_trace(&[0.5, 0.5], 0.2).unwrap();
        assert_eq!(spikes.0, vec![0, 0]);
        assert_eq!(targets[1], (0.2 * 0.5f64) as f32);
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = generate_dataset(8, 64, &quick_params(), (0.3, 1.5), 42).unwrap();
        let b = generate_dataset(8, 64, &quick_params(), (0.3, 1.5), 42).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        let c = generate_dataset(8, 64, &quick_params(), (0.3, 1.5), 43).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn targets_are_reproducible_from_inputs() {
        let p = NeuronParams { v_th: 1.7, ..quick_params() };
        let ds = generate_dataset(6, 48, &p, (0.0, 2.0), 9).unwrap();
        for i in 0..ds.meta.count {
            let (tg, _) = target_trace(ds.input(i), ds.meta.tau).unwrap();
            assert_eq!(tg, ds.target(i), "sample {i}");
        }
    }

    #[test]
    fn oracle_replay_scores_perfectly() {
        let ds = generate_dataset(10, 64, &quick_params(), (0.0, 1.0), 5).unwrap();
        let rows: Vec<Vec<f32>> = (0..10).map(|i| ds.target(i).to_vec()).collect();
        let mut i = 0;
        let stats = eval_with(
            |_| {
                let row = rows[i].clone();
                i += 1;
                row
            },
            &ds,
        )
        .unwrap();
        assert_eq!(stats.mse, 0.0);
        assert_eq!(stats.spike_accuracy, 1.0);
    }

    #[test]
    fn eval_rejects_wrong_prediction_length() {
        let ds = generate_dataset(2, 16, &quick_params(), (0.0, 1.0), 5).unwrap();
        assert!(eval_with(|_| vec![0.0; 7], &ds).is_err());
    }

    #[test]
    fn streamed_eval_matches_in_memory_eval() {
        let ds = generate_dataset(12, 80, &quick_params(), (0.0, 1.0), 77).unwrap();
        let mut model = SdnModel::init(&mut Rng::new(2));
        model.fuse().unwrap();
        let a = eval_sdn(&model, &ds).unwrap();
        let b = eval_streamed(&model, 12, 80, &quick_params(), (0.0, 1.0), 77).unwrap();
        assert_eq!(a.mse, b.mse);
        assert_eq!(a.spike_accuracy, b.spike_accuracy);
    }

    #[test]
    fn short_training_run_learns_and_is_deterministic() {
        let ds = generate_dataset(300, 96, &quick_params(), (0.0, 1.0), 11).unwrap();
        let (m1, r1) = train_sdn(&ds, 3, 1e-3, 32, 7).unwrap();
        let (m2, r2) = train_sdn(&ds, 3, 1e-3, 32, 7).unwrap();
        assert_eq!(m1.params, m2.params, "same seed must give identical weights");
        assert_eq!(r1.epochs.len(), 3);
        let first = r1.epochs.first().unwrap().train_mse;
        let last = r1.epochs.last().unwrap().train_mse;
        assert!(last < first, "loss should trend down: {first} -> {last}");
        assert!((r1.epochs[2].test_spike_accuracy - r2.epochs[2].test_spike_accuracy).abs() == 0.0);
        for e in &r1.epochs {
            assert!((0.0..=1.0).contains(&e.test_spike_accuracy));
        }
    }

    #[test]
    fn sweep_validates_axis_values() {
        let model = SdnModel::init(&mut Rng::new(1));
        let base = DatasetMeta { tau: 0.2, v_th: 1.0, length: 32, count: 4, mean: 0.0, std: 1.0, seed: 3 };
        assert!(generalization_sweep(&model, SweepAxis::Tau, &[0.2, 1.2], &base).is_err());
        assert!(generalization_sweep(&model, SweepAxis::Tau, &[-0.1], &base).is_err());
        assert!(generalization_sweep(&model, SweepAxis::Length, &[64.5], &base).is_err());
        assert!(generalization_sweep(&model, SweepAxis::Length, &[0.0], &base).is_err());
        let rows = generalization_sweep(&model, SweepAxis::Length, &[16.0, 32.0], &base).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].value, 16.0);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("value,accuracy,mse\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    #[ignore = "timing probe, run by hand"]
    fn training_step_throughput_probe() {
        let ds = generate_dataset(512, 1024, &quick_params(), (0.0, 1.0), 11).unwrap();
        let start = std::time::Instant::now();
        let (_m, _r) = train_sdn(&ds, 2, 1e-3, 256, 7).unwrap();
        let dt = start.elapsed().as_secs_f64();
        // 2 epochs over 512 samples of length 1024.
        let per_sample = dt / (2.0 * 512.0);
        eprintln!("train step: {dt:.3}s total, {:.3}ms/sample, projected 100x50k epochs: {:.1} min",
            per_sample * 1e3, per_sample * 100.0 * 45_000.0 / 60.0);
    }

    #[test]
    fn sweep_axis_parse_covers_the_three_axes() {
        assert_eq!(SweepAxis::parse("length").unwrap(), SweepAxis::Length);
        assert_eq!(SweepAxis::parse("distribution").unwrap(), SweepAxis::Distribution);
        assert_eq!(SweepAxis::parse("tau").unwrap(), SweepAxis::Tau);
        assert!(SweepAxis::parse("width").is_err());
    }
}
