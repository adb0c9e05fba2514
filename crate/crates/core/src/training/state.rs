use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, GmanVariant, TrainConfig};
use crate::distributions::{stream_rng, StreamRng};
use crate::error::{Error, Result};
use crate::models::{route, Classifier, DiscriminatorBank, Generator, Standardizer};
use crate::nn::{backward, loss_input_gradient, Direction, GradientSet, LossSpec, RmsPropState};

const STREAM_DATA: u64 = 0;
const STREAM_ROUTE: u64 = 1;
const STREAM_INIT_G: u64 = 2;
const STREAM_INIT_Q: u64 = 3;
const STREAM_INIT_D: u64 = 1000;

/// One iteration's minibatch: noise, codes and real samples (data space).
#[derive(Debug, Clone)]
pub struct Batches {
    pub z: Array2<f64>,
    pub codes: Vec<usize>,
    pub one_hot: Array2<f64>,
    pub real: Array2<f64>,
}

/// Row indices routed to each discriminator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub real: Vec<Vec<usize>>,
    pub fake: Vec<Vec<usize>>,
}

impl Partition {
    /// Everything to discriminator 0 (the unrouted single-discriminator game).
    pub fn single(m_real: usize, m_fake: usize) -> Self {
        Partition {
            real: vec![(0..m_real).collect()],
            fake: vec![(0..m_fake).collect()],
        }
    }

    fn from_routes(real: &[usize], fake: &[usize], n: usize) -> Self {
        let group = |routes: &[usize]| {
            let mut out = vec![Vec::new(); n];
            for (row, &k) in routes.iter().enumerate() {
                out[k].push(row);
            }
            out
        };
        Partition {
            real: group(real),
            fake: group(fake),
        }
    }

    pub fn real_sizes(&self) -> Vec<usize> {
        self.real.iter().map(Vec::len).collect()
    }

    pub fn fake_sizes(&self) -> Vec<usize> {
        self.fake.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: u64,
    pub generator_loss: f64,
    /// Ascended objective value of each discriminator this iteration.
    pub discriminator_objectives: Vec<f64>,
    pub classifier_loss: Option<f64>,
    /// `|𝒟_n|`; empty when the algorithm does not route.
    pub real_routed: Vec<usize>,
    /// `|𝒟̂_n|`; empty when the algorithm does not route.
    pub fake_routed: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

/// Parameters, optimizer accumulators and random streams of all agents.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub bank: DiscriminatorBank,
    pub classifier: Option<Classifier>,
    pub generator_opt: RmsPropState,
    pub discriminator_opts: Vec<RmsPropState>,
    pub classifier_opt: Option<RmsPropState>,
    data_rng: StreamRng,
    route_rng: StreamRng,
    iteration: u64,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let scaler = if config.standardize {
            Standardizer::for_mixture(&config.target)
        } else {
            Standardizer::identity(config.target.dims())
        };
        let seed = config.seed;
        let arch = &config.architecture;
        let generator = Generator::new(
            config.noise.dim,
            config.n_codes(),
            arch,
            scaler.clone(),
            &mut stream_rng(seed, STREAM_INIT_G),
        )?
        .with_code_scale(config.code_scale)?;
        let bank = DiscriminatorBank::new(config.bank_size(), arch, scaler.clone(), |i| {
            stream_rng(seed, STREAM_INIT_D + i as u64)
        })?;
        let classifier = match config.algorithm {
            Algorithm::Dopanet => Some(Classifier::new(
                config.n_discriminators,
                arch,
                scaler,
                &mut stream_rng(seed, STREAM_INIT_Q),
            )?),
            _ => None,
        };
        let generator_opt = RmsPropState::new(&generator.net, config.optimizer)?;
        let discriminator_opts = bank
            .nets
            .iter()
            .map(|n| RmsPropState::new(n, config.optimizer))
            .collect::<Result<Vec<_>>>()?;
        let classifier_opt = classifier
            .as_ref()
            .map(|q| RmsPropState::new(&q.net, config.optimizer))
            .transpose()?;
        Ok(TrainState {
            generator,
            bank,
            classifier,
            generator_opt,
            discriminator_opts,
            classifier_opt,
            data_rng: stream_rng(seed, STREAM_DATA),
            route_rng: stream_rng(seed, STREAM_ROUTE),
            iteration: 0,
            config,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_finite(&self) -> bool {
        self.generator.net.is_finite()
            && self.bank.nets.iter().all(|n| n.is_finite())
            && self.classifier.as_ref().is_none_or(|q| q.net.is_finite())
    }

    /// Fresh noise and codes (steps 2–3 / 9–10).
    pub fn sample_latent(&mut self, m: usize) -> Result<(Array2<f64>, Vec<usize>, Array2<f64>)> {
        let z = self.config.noise.sample(m, &mut self.data_rng)?;
        let (codes, one_hot) = self.config.code_prior().sample(m, &mut self.data_rng)?;
        Ok((z, codes, one_hot))
    }

    /// Steps 2–4: noise, codes, then real samples.
    pub fn sample_batches(&mut self) -> Result<Batches> {
        let m = self.config.batch_size;
        let (z, codes, one_hot) = self.sample_latent(m)?;
        let real = self.config.target.sample(m, &mut self.data_rng);
        Ok(Batches {
            z,
            codes,
            one_hot,
            real,
        })
    }

    /// Draws `n` generated samples with freshly drawn noise and codes.
    pub fn generate_samples<R: rand::Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Vec<usize>)> {
        let z = self.config.noise.sample(n, rng)?;
        let (codes, one_hot) = self.config.code_prior().sample(n, rng)?;
        Ok((self.generator.generate(z.view(), one_hot.view())?, codes))
    }

    fn classifier_parts(&mut self) -> Result<(&mut Classifier, &mut RmsPropState)> {
        match (self.classifier.as_mut(), self.classifier_opt.as_mut()) {
            (Some(q), Some(opt)) => Ok((q, opt)),
            _ => Err(Error::invalid(
                "training step",
                "this algorithm has no classifier",
            )),
        }
    }

    /// Step 5: one ascent step on `mean c·log Q(G(z, c))`. Returns the
    /// cross-entropy. The generator receives no gradient.
    pub fn update_classifier(&mut self, z: ArrayView2<f64>, codes: &[usize]) -> Result<f64> {
        let one_hot = crate::distributions::one_hot(codes, self.generator.n_codes);
        let fake = self.generator.generate(z, one_hot.view())?;
        self.classifier_step(fake.view(), codes)
    }

    fn classifier_step(&mut self, fake: ArrayView2<f64>, codes: &[usize]) -> Result<f64> {
        let (q, opt) = self.classifier_parts()?;
        let u = q.scaler.to_model(fake);
        let (loss, mut grads) =
            backward(&q.net, u.view(), &LossSpec::CrossEntropy(codes.to_vec()))?;
        grads.negate();
        opt.step(&mut q.net, &grads, Direction::Ascend)?;
        Ok(loss)
    }

    /// Steps 6–7: route every real and generated row through `σ ~ Q(x)`.
    pub fn partition_batches(
        &mut self,
        real: ArrayView2<f64>,
        fake: ArrayView2<f64>,
    ) -> Result<Partition> {
        let q = self
            .classifier
            .as_ref()
            .ok_or_else(|| Error::invalid("partition", "this algorithm has no classifier"))?;
        let n = q.n_classes();
        let real_probs = q.classify(real)?;
        let fake_probs = q.classify(fake)?;
        let real_routes = route(real_probs.view(), &mut self.route_rng);
        let fake_routes = route(fake_probs.view(), &mut self.route_rng);
        Ok(Partition::from_routes(&real_routes, &fake_routes, n))
    }

    /// Step 8: each discriminator ascends `mean_{𝒟_n} log D + mean_{𝒟̂_n} log(1 − D)`.
    /// An empty partition contributes neither value nor gradient; a
    /// discriminator with both partitions empty is not stepped.
    pub fn update_discriminators(
        &mut self,
        real: ArrayView2<f64>,
        fake: ArrayView2<f64>,
        partition: &Partition,
    ) -> Result<Vec<f64>> {
        let n = self.bank.len();
        if partition.real.len() != n || partition.fake.len() != n {
            return Err(Error::shape("partition", n, partition.real.len()));
        }
        let scaler = self.bank.scaler.clone();
        let real_u = scaler.to_model(real);
        let fake_u = scaler.to_model(fake);
        let mut objectives = vec![0.0; n];
        for (k, objective) in objectives.iter_mut().enumerate() {
            let (real_rows, fake_rows) = (&partition.real[k], &partition.fake[k]);
            if real_rows.is_empty() && fake_rows.is_empty() {
                continue;
            }
            let net = &self.bank.nets[k];
            let mut total: Option<GradientSet> = None;
            let mut loss = 0.0;
            for (rows, batch, spec) in [
                (real_rows, &real_u, LossSpec::BceReal),
                (fake_rows, &fake_u, LossSpec::BceFake),
            ] {
                if rows.is_empty() {
                    continue;
                }
                let selected = select_rows(batch, rows);
                let (l, g) = backward(net, selected.view(), &spec)?;
                loss += l;
                match total.as_mut() {
                    Some(t) => t.add_assign(&g),
                    None => total = Some(g),
                }
            }
            let mut grads = total.expect("at least one partition is nonempty");
            grads.negate();
            self.discriminator_opts[k].step(&mut self.bank.nets[k], &grads, Direction::Ascend)?;
            *objective = -loss;
        }
        Ok(objectives)
    }

    /// Gradient of `(1/m) Σ w_row · log(1 − D_{route(row)}(x_row))` with
    /// respect to the generator's network output, plus the loss value.
    fn generator_output_grad(
        &self,
        fake_data: ArrayView2<f64>,
        routes: &[usize],
    ) -> Result<(f64, Array2<f64>)> {
        let m = fake_data.nrows();
        let n = self.bank.len();
        let mut groups = vec![Vec::new(); n];
        for (row, &k) in routes.iter().enumerate() {
            groups[k].push(row);
        }
        let u = self.bank.scaler.to_model(fake_data);
        let chain = self.generator.scaler.scale / self.bank.scaler.scale;
        let mut grad = Array2::zeros(u.raw_dim());
        let mut loss = 0.0;
        for (k, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let share = rows.len() as f64 / m as f64;
            let selected = select_rows(&u, rows);
            let (l, input_grad) = loss_input_gradient(
                &self.bank.nets[k],
                selected.view(),
                &self.config.generator_loss.spec(),
            )?;
            loss += share * l;
            for (i, &row) in rows.iter().enumerate() {
                for (g, &v) in grad.row_mut(row).iter_mut().zip(input_grad.row(i)) {
                    *g += share * chain * v;
                }
            }
        }
        Ok((loss, grad))
    }

    /// Steps 9–12: fresh noise and codes, fresh routing `σ̂ ~ Q(G(z, c))`,
    /// then one descent step on `mean log(1 − D_σ̂(G(z, c)))`.
    pub fn update_generator(&mut self) -> Result<f64> {
        let m = self.config.batch_size;
        let (z, _, one_hot) = self.sample_latent(m)?;
        let input = self.generator.input(z.view(), one_hot.view())?;
        let trace = self.generator.net.forward_trace(input.view())?;
        let fake = self.generator.scaler.to_data(trace.output.view());
        let routes = match self.classifier.as_ref() {
            Some(q) => {
                let probs = q.classify(fake.view())?;
                route(probs.view(), &mut self.route_rng)
            }
            None => vec![0; m],
        };
        let (loss, out_grad) = self.generator_output_grad(fake.view(), &routes)?;
        let (grads, _) = self.generator.net.backprop(&trace, out_grad, false)?;
        self.generator_opt
            .step(&mut self.generator.net, &grads, Direction::Descend)?;
        Ok(loss)
    }

    /// The unrouted single-discriminator iteration of the classic game.
    pub fn standard_gan_step(&mut self) -> Result<LogRecord> {
        let batches = self.sample_batches()?;
        let fake = self
            .generator
            .generate(batches.z.view(), batches.one_hot.view())?;
        let m = self.config.batch_size;
        let partition = Partition::single(m, m);
        let objectives =
            self.update_discriminators(batches.real.view(), fake.view(), &partition)?;
        let generator_loss = self.update_generator()?;
        Ok(LogRecord {
            iteration: self.iteration,
            generator_loss,
            discriminator_objectives: objectives,
            classifier_loss: None,
            real_routed: vec![m],
            fake_routed: vec![m],
        })
    }

    /// One full DoPaNet iteration in listed order: classifier, routing,
    /// discriminators, generator.
    pub fn dopanet_step(&mut self) -> Result<LogRecord> {
        let batches = self.sample_batches()?;
        let fake = self
            .generator
            .generate(batches.z.view(), batches.one_hot.view())?;
        let classifier_loss = self.classifier_step(fake.view(), &batches.codes)?;
        let partition = self.partition_batches(batches.real.view(), fake.view())?;
        let objectives =
            self.update_discriminators(batches.real.view(), fake.view(), &partition)?;
        let generator_loss = self.update_generator()?;
        Ok(LogRecord {
            iteration: self.iteration,
            generator_loss,
            discriminator_objectives: objectives,
            classifier_loss: Some(classifier_loss),
            real_routed: partition.real_sizes(),
            fake_routed: partition.fake_sizes(),
        })
    }

    /// GMAN: every discriminator sees the whole real and fake batch; the
    /// generator descends an aggregate of the per-discriminator losses.
    pub fn train_gman_step(&mut self, variant: GmanVariant) -> Result<LogRecord> {
        let batches = self.sample_batches()?;
        self.gman_step_on(variant, batches)
    }

    pub fn gman_step_on(&mut self, variant: GmanVariant, batches: Batches) -> Result<LogRecord> {
        let fake = self
            .generator
            .generate(batches.z.view(), batches.one_hot.view())?;
        let m = self.config.batch_size;
        let n = self.bank.len();
        let all = Partition {
            real: vec![(0..m).collect(); n],
            fake: vec![(0..m).collect(); n],
        };
        let objectives = self.update_discriminators(batches.real.view(), fake.view(), &all)?;

        let (z, _, one_hot) = self.sample_latent(m)?;
        let input = self.generator.input(z.view(), one_hot.view())?;
        let trace = self.generator.net.forward_trace(input.view())?;
        let fake = self.generator.scaler.to_data(trace.output.view());
        let u = self.bank.scaler.to_model(fake.view());
        let chain = self.generator.scaler.scale / self.bank.scaler.scale;
        let mut losses = Vec::with_capacity(n);
        let mut input_grads = Vec::with_capacity(n);
        for net in &self.bank.nets {
            let (l, g) = loss_input_gradient(net, u.view(), &self.config.generator_loss.spec())?;
            losses.push(l);
            input_grads.push(g);
        }
        let weights = aggregate_weights(variant, &losses);
        let mut out_grad = Array2::zeros(u.raw_dim());
        let mut generator_loss = 0.0;
        for ((w, l), g) in weights.iter().zip(&losses).zip(&input_grads) {
            generator_loss += w * l;
            out_grad.scaled_add(w * chain, g);
        }
        let (grads, _) = self.generator.net.backprop(&trace, out_grad, false)?;
        self.generator_opt
            .step(&mut self.generator.net, &grads, Direction::Descend)?;
        Ok(LogRecord {
            iteration: self.iteration,
            generator_loss,
            discriminator_objectives: objectives,
            classifier_loss: None,
            real_routed: Vec::new(),
            fake_routed: Vec::new(),
        })
    }

    /// Runs one iteration of the configured algorithm.
    pub fn step(&mut self) -> Result<LogRecord> {
        let iteration = self.iteration;
        let lr = self.config.optimizer.learning_rate
            * self
                .config
                .lr_schedule
                .factor(iteration, self.config.iterations);
        for opt in std::iter::once(&mut self.generator_opt)
            .chain(self.discriminator_opts.iter_mut())
            .chain(self.classifier_opt.iter_mut())
        {
            opt.config.learning_rate = lr;
        }
        let record = match self.config.algorithm {
            Algorithm::Dopanet => self.dopanet_step(),
            Algorithm::StandardGan => self.standard_gan_step(),
            Algorithm::Gman(v) => self.train_gman_step(v),
        }
        .map_err(|e| Error::Training {
            iteration,
            source: Box::new(e),
        })?;
        if !self.is_finite() {
            return Err(Error::Training {
                iteration,
                source: Box::new(Error::NonFinite { layer: 0 }),
            });
        }
        self.iteration += 1;
        Ok(record)
    }
}

/// Weights applied to the per-discriminator generator losses. Weights are
/// treated as constants when differentiating.
pub fn aggregate_weights(variant: GmanVariant, losses: &[f64]) -> Vec<f64> {
    let n = losses.len();
    match variant {
        GmanVariant::Mean => vec![1.0 / n as f64; n],
        GmanVariant::Max => {
            let best = losses
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, &l)| if l > b.1 { (i, l) } else { b },
                )
                .0;
            (0..n).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
        }
        GmanVariant::Weighted(lambda) => {
            let max = losses
                .iter()
                .fold(f64::NEG_INFINITY, |m, &l| m.max(lambda * l));
            let exps: Vec<f64> = losses.iter().map(|&l| (lambda * l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        }
    }
}

fn select_rows(batch: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    batch.select(Axis(0), rows)
}

/// Runs the configured number of iterations; `hook` sees the state after
/// every iteration.
pub fn train_with<F>(config: TrainConfig, mut hook: F) -> Result<(TrainState, TrainLog)>
where
    F: FnMut(&TrainState, &LogRecord) -> Result<()>,
{
    let mut state = TrainState::new(config)?;
    let mut log = TrainLog::default();
    let total = state.config.iterations;
    let every = state.config.log_every;
    for it in 0..total {
        let record = state.step()?;
        if it % every == 0 || it + 1 == total {
            log.records.push(record.clone());
        }
        hook(&state, &record)?;
    }
    Ok((state, log))
}

pub fn train(config: TrainConfig) -> Result<(TrainState, TrainLog)> {
    train_with(config, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::MixtureSpec;
    use crate::models::Architecture;
    use crate::nn::{finite_difference_check, HiddenActivation, Mlp, OutputActivation};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn tiny(alg: Algorithm, n: usize, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(MixtureSpec::five_mode_1d(), alg, n, seed);
        cfg.architecture = Architecture {
            hidden: vec![8, 8],
            leaky_slope: 0.2,
        };
        cfg.noise.dim = 3;
        cfg.batch_size = 16;
        cfg.iterations = 25;
        cfg.log_every = 1;
        cfg
    }

    fn flat(net: &Mlp) -> Vec<f64> {
        net.layers()
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    fn snapshot(s: &TrainState) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
        (
            flat(&s.generator.net),
            s.bank.nets.iter().map(flat).collect(),
            s.classifier
                .as_ref()
                .map(|q| flat(&q.net))
                .unwrap_or_default(),
        )
    }

    fn zero_net(sizes: &[usize], output: OutputActivation) -> Mlp {
        Mlp::zeros(sizes, HiddenActivation::LeakyRelu(0.2), output).unwrap()
    }

    #[test]
    fn single_discriminator_dopanet_is_the_standard_gan() {
        let (a, _) = train(tiny(Algorithm::Dopanet, 1, 9)).unwrap();
        let (b, _) = train(tiny(Algorithm::StandardGan, 1, 9)).unwrap();
        assert_eq!(a.generator.net, b.generator.net);
        assert_eq!(a.bank.nets, b.bank.nets);
        let (c, _) = train(tiny(Algorithm::Gman(GmanVariant::Mean), 1, 9)).unwrap();
        assert_eq!(c.generator.net, b.generator.net);
        assert_eq!(c.bank.nets, b.bank.nets);
    }

    #[test]
    fn same_seed_same_log() {
        for alg in [Algorithm::Dopanet, Algorithm::Gman(GmanVariant::Max)] {
            let (s1, l1) = train(tiny(alg, 3, 4)).unwrap();
            let (s2, l2) = train(tiny(alg, 3, 4)).unwrap();
            assert_eq!(l1, l2);
            assert_eq!(snapshot(&s1), snapshot(&s2));
            let (_, l3) = train(tiny(alg, 3, 5)).unwrap();
            assert_ne!(l1, l3);
        }
    }

    #[test]
    fn logged_partitions_conserve_the_batch() {
        let (_, log) = train(tiny(Algorithm::Dopanet, 4, 1)).unwrap();
        assert_eq!(log.records.len(), 25);
        for r in &log.records {
            assert_eq!(r.real_routed.iter().sum::<usize>(), 16);
            assert_eq!(r.fake_routed.iter().sum::<usize>(), 16);
            assert_eq!(r.discriminator_objectives.len(), 4);
        }
    }

    #[test]
    fn updates_touch_only_their_agent() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 3, 2)).unwrap();
        for _ in 0..3 {
            s.step().unwrap();
        }
        let b = s.sample_batches().unwrap();
        let before = snapshot(&s);
        s.update_classifier(b.z.view(), &b.codes).unwrap();
        let after_q = snapshot(&s);
        assert_eq!(before.0, after_q.0);
        assert_eq!(before.1, after_q.1);
        assert_ne!(before.2, after_q.2);

        let fake = s.generator.generate(b.z.view(), b.one_hot.view()).unwrap();
        let p = s.partition_batches(b.real.view(), fake.view()).unwrap();
        s.update_discriminators(b.real.view(), fake.view(), &p)
            .unwrap();
        let after_d = snapshot(&s);
        assert_eq!(after_q.0, after_d.0);
        assert_ne!(after_q.1, after_d.1);
        assert_eq!(after_q.2, after_d.2);

        s.update_generator().unwrap();
        let after_g = snapshot(&s);
        assert_ne!(after_d.0, after_g.0);
        assert_eq!(after_d.1, after_g.1);
        assert_eq!(after_d.2, after_g.2);
    }

    #[test]
    fn classifier_loss_at_initialization() {
        let mut cfg = TrainConfig::new(MixtureSpec::five_mode_1d(), Algorithm::Dopanet, 5, 0);
        cfg.batch_size = 512;
        let mut s = TrainState::new(cfg).unwrap();
        let b = s.sample_batches().unwrap();
        let loss = s.update_classifier(b.z.view(), &b.codes).unwrap();
        assert!((loss - 5f64.ln()).abs() < 0.1, "{loss}");

        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 1, 0)).unwrap();
        let b = s.sample_batches().unwrap();
        assert_eq!(s.update_classifier(b.z.view(), &b.codes).unwrap(), 0.0);
    }

    #[test]
    fn confident_classifier_has_nothing_to_learn() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 2, 0)).unwrap();
        // Q outputs class 1 with overwhelming confidence everywhere.
        let mut net = zero_net(&[1, 4, 2], OutputActivation::Softmax);
        net.layers_mut()[1].bias[1] = 60.0;
        let before = net.clone();
        s.classifier = Some(Classifier::from_net(net, s.bank.scaler.clone()).unwrap());
        s.classifier_opt = Some(RmsPropState::new(&before, s.config.optimizer).unwrap());
        let z = Array2::zeros((8, 3));
        let loss = s.update_classifier(z.view(), &[1; 8]).unwrap();
        assert!(loss < 1e-12);
        let delta = flat(&s.classifier.as_ref().unwrap().net)
            .iter()
            .zip(flat(&before))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(delta < 1e-12, "{delta}");
    }

    #[test]
    fn routing_follows_the_classifier() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 4, 0)).unwrap();
        let scaler = s.bank.scaler.clone();
        s.classifier = Some(
            Classifier::from_net(
                zero_net(&[1, 4, 4], OutputActivation::Softmax),
                scaler.clone(),
            )
            .unwrap(),
        );
        let x = s.config.target.sample(4096, &mut stream_rng(1, 0));
        let p = s.partition_batches(x.view(), x.view()).unwrap();
        for size in p.real_sizes().into_iter().chain(p.fake_sizes()) {
            assert!((size as f64 - 1024.0).abs() <= 100.0, "{size}");
        }

        let mut net = zero_net(&[1, 4, 4], OutputActivation::Softmax);
        net.layers_mut()[1].bias[2] = 60.0;
        s.classifier = Some(Classifier::from_net(net, scaler).unwrap());
        let p = s.partition_batches(x.view(), x.view()).unwrap();
        assert_eq!(p.real_sizes(), vec![0, 0, 4096, 0]);
        assert_eq!(p.fake_sizes(), vec![0, 0, 4096, 0]);

        let mut gan = TrainState::new(tiny(Algorithm::StandardGan, 1, 0)).unwrap();
        assert!(gan.partition_batches(x.view(), x.view()).is_err());
        assert_eq!(Partition::single(3, 2).real, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn neutral_discriminators_score_minus_log_four() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 3, 0)).unwrap();
        let nets = vec![zero_net(&[1, 8, 8, 1], OutputActivation::Sigmoid); 3];
        s.bank = DiscriminatorBank::from_nets(nets, s.bank.scaler.clone()).unwrap();
        let x = s.config.target.sample(6, &mut stream_rng(0, 0));
        let partition = Partition {
            real: vec![vec![0, 1], vec![], vec![2, 3, 4, 5]],
            fake: vec![vec![3], vec![0, 1, 2], vec![]],
        };
        let before = s.bank.nets.clone();
        let obj = s
            .update_discriminators(x.view(), x.view(), &partition)
            .unwrap();
        let half = 0.5f64.ln();
        assert!((obj[0] - 2.0 * half).abs() < 1e-12);
        assert!((obj[1] - half).abs() < 1e-12);
        assert!((obj[2] - half).abs() < 1e-12);

        let empty = Partition {
            real: vec![vec![0], vec![], vec![]],
            fake: vec![vec![], vec![], vec![]],
        };
        s.bank.nets = before.clone();
        s.discriminator_opts = before
            .iter()
            .map(|n| RmsPropState::new(n, s.config.optimizer).unwrap())
            .collect();
        s.update_discriminators(x.view(), x.view(), &empty).unwrap();
        assert_ne!(s.bank.nets[0], before[0]);
        assert_eq!(s.bank.nets[1..], before[1..]);
    }

    #[test]
    fn one_sample_partition_gradients() {
        let s = TrainState::new(tiny(Algorithm::Dopanet, 2, 3)).unwrap();
        let x = s.config.target.sample(2, &mut stream_rng(3, 0));
        let u = s.bank.scaler.to_model(x.view());
        for (row, spec) in [(0, LossSpec::BceReal), (1, LossSpec::BceFake)] {
            let one = u.slice(ndarray::s![row..row + 1, ..]);
            let err = finite_difference_check(&s.bank.nets[0], &spec, one, 1e-6).unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn generator_gradient_through_routed_discriminators() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 3, 7)).unwrap();
        for _ in 0..5 {
            s.step().unwrap();
        }
        let (z, _, one_hot) = s.sample_latent(12).unwrap();
        let routes: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let loss_at = |g: &Generator| {
            let fake = g.generate(z.view(), one_hot.view()).unwrap();
            s.generator_output_grad(fake.view(), &routes).unwrap().0
        };
        let input = s.generator.input(z.view(), one_hot.view()).unwrap();
        let trace = s.generator.net.forward_trace(input.view()).unwrap();
        let fake = s.generator.scaler.to_data(trace.output.view());
        let (_, out_grad) = s.generator_output_grad(fake.view(), &routes).unwrap();
        let (grads, _) = s.generator.net.backprop(&trace, out_grad, false).unwrap();
        let analytic = grads.flat();
        let h = 1e-6;
        let mut probe = s.generator.clone();
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = *probe.net.param_mut(i).unwrap();
            *probe.net.param_mut(i).unwrap() = orig + h;
            let plus = loss_at(&probe);
            *probe.net.param_mut(i).unwrap() = orig - h;
            let minus = loss_at(&probe);
            *probe.net.param_mut(i).unwrap() = orig;
            worst = worst.max((a - (plus - minus) / (2.0 * h)).abs() / a.abs().max(1.0));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn neutral_discriminator_generator_loss() {
        let mut s = TrainState::new(tiny(Algorithm::Dopanet, 2, 0)).unwrap();
        let nets = vec![zero_net(&[1, 8, 8, 1], OutputActivation::Sigmoid); 2];
        s.bank = DiscriminatorBank::from_nets(nets, s.bank.scaler.clone()).unwrap();
        let loss = s.update_generator().unwrap();
        assert!((loss - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gman_aggregation() {
        let losses = [0.3, 0.7, -0.2];
        assert_eq!(
            aggregate_weights(GmanVariant::Weighted(0.0), &losses),
            aggregate_weights(GmanVariant::Mean, &losses)
        );
        let w = aggregate_weights(GmanVariant::Max, &[0.3, 0.7]);
        let agg: f64 = w.iter().zip([0.3, 0.7]).map(|(w, l)| w * l).sum();
        assert_eq!(agg, 0.7);
        let w = aggregate_weights(GmanVariant::Weighted(2.0), &losses);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[1] > w[0] && w[0] > w[2]);
    }

    #[test]
    fn gman_discriminators_see_the_whole_batch() {
        let mut s = TrainState::new(tiny(Algorithm::Gman(GmanVariant::Mean), 3, 0)).unwrap();
        let nets = vec![zero_net(&[1, 8, 8, 1], OutputActivation::Sigmoid); 3];
        s.bank = DiscriminatorBank::from_nets(nets, s.bank.scaler.clone()).unwrap();
        let r = s.train_gman_step(GmanVariant::Mean).unwrap();
        let log4 = -(4f64.ln());
        for o in &r.discriminator_objectives {
            assert!((o - log4).abs() < 1e-12);
        }
        // identical zero-initialized members receive identical updates
        assert_eq!(s.bank.nets[0], s.bank.nets[2]);
    }

    #[test]
    fn standard_gan_smoke() {
        let mut cfg = tiny(Algorithm::StandardGan, 1, 0);
        cfg.iterations = 300;
        cfg.batch_size = 64;
        cfg.architecture.hidden = vec![16, 16];
        let (s, _) = train(cfg).unwrap();
        let (x, _) = s.generate_samples(2000, &mut stream_rng(0, 9)).unwrap();
        let inside = x.iter().filter(|v| (-10.0..=130.0).contains(*v)).count();
        assert!(inside as f64 > 0.9 * 2000.0, "{inside}");
        let spec = crate::evaluation::HistogramSpec::standard_1d();
        let real = s.config.target.sample(2000, &mut stream_rng(0, 8));
        let kl = crate::evaluation::kl_divergence(
            &crate::evaluation::build_histogram(x.view(), &spec).unwrap(),
            &crate::evaluation::build_histogram(real.view(), &spec).unwrap(),
        )
        .unwrap();
        assert!(kl.is_finite());
    }

    #[test]
    fn divergence_aborts_with_iteration() {
        let mut cfg = tiny(Algorithm::Dopanet, 2, 0);
        cfg.optimizer.learning_rate = 1e300;
        match train(cfg) {
            Err(Error::Training { iteration, .. }) => assert!(iteration < 25),
            other => panic!("expected a training error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn partitions_are_disjoint_and_exhaustive(seed in 0u64..1000, n in 1usize..6, m in 2usize..40) {
            let mut cfg = tiny(Algorithm::Dopanet, n, seed);
            cfg.batch_size = m;
            let mut s = TrainState::new(cfg).unwrap();
            let b = s.sample_batches().unwrap();
            let fake = s.generator.generate(b.z.view(), b.one_hot.view()).unwrap();
            let p = s.partition_batches(b.real.view(), fake.view()).unwrap();
            for lists in [&p.real, &p.fake] {
                prop_assert_eq!(lists.len(), n);
                let mut all: Vec<usize> = lists.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
            }
        }
    }
}
