use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cfnlab::corpus::{build_corpus, Corpus, CorpusPaths, Split, Vocab, VocabSource};
use cfnlab::dynamics::{
    self, attractor_sample, divergence_experiment, impulse_response, iterate, lemma1_instance, lemma1_suite,
    lemma2_suite, lyapunov_estimate, paired_trajectories, random_cfn, recurrently_active, verify_lemma1_sweep,
    verify_multilayer_decay, InducedMap, Lemma1Config, Lemma2Config, Orbit, ZeroAttractorConfig,
};
use cfnlab::numkit::{Rng, Vector};
use cfnlab::stack::{checkpoint, init_stack, CellKind, LayerParams, ModelStack, StackState};
use cfnlab::train::gradcheck::{gradcheck, GradcheckConfig};
use cfnlab::train::{evaluate, train, MaskMode, Schedule, TrainConfig};

use crate::args::{
    Cell, Cli, Command, CorpusArgs, DynamicsArgs, EvalArgs, Experiment, GradcheckArgs, MapSource, MaskModeArg,
    ScheduleArg, TrainArgs,
};
use crate::manifest;

type CmdResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Whether a completed run met its pass criterion.
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_flag(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn run(cli: &Cli) -> CmdResult<Outcome> {
    fs::create_dir_all(&cli.out)?;
    let mut out = Outputs {
        dir: cli.out.clone(),
        files: Vec::new(),
    };
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(cli, a, &mut out)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Dynamics(a) => cmd_dynamics(cli, a, &mut out)?,
        Command::Gradcheck(a) => cmd_gradcheck(cli, a)?,
    };
    manifest::write(cli, &cli.out, &out.files)?;
    Ok(outcome)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> CmdResult<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

fn cell_kind(c: Cell) -> CellKind {
    match c {
        Cell::Cfn => CellKind::Cfn,
        Cell::Lstm => CellKind::Lstm,
        Cell::Gru => CellKind::Gru,
    }
}

fn corpus_paths(a: &CorpusArgs) -> CmdResult<CorpusPaths> {
    let mut p = match &a.data {
        Some(d) => CorpusPaths::from_dir(d),
        None => CorpusPaths::default(),
    };
    if let Some(t) = &a.train {
        p.train = t.clone();
    }
    if a.valid.is_some() {
        p.valid = a.valid.clone();
    }
    if a.test.is_some() {
        p.test = a.test.clone();
    }
    if p.train.as_os_str().is_empty() {
        return Err("a corpus is required: pass --data DIR or --train FILE".into());
    }
    Ok(p)
}

fn cmd_train(cli: &Cli, a: &TrainArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let corpus = build_corpus(
        &corpus_paths(&a.corpus)?,
        VocabSource::FromTrain,
        a.corpus.vocab_size,
        a.corpus.lowercase,
    )?;
    let kind = cell_kind(a.cell);
    let mut m = init_stack(kind, a.depth, a.hidden, corpus.vocab.len(), &mut Rng::new(cli.seed))?;
    println!(
        "model {kind} depth {} hidden {} vocab {} params {}",
        a.depth,
        a.hidden,
        corpus.vocab.len(),
        m.num_params()
    );
    println!(
        "tokens train {} valid {} test {}",
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len()
    );
    let cfg = TrainConfig {
        unroll: a.unroll,
        batch: a.batch,
        lr0: a.lr0,
        schedule: match a.schedule {
            ScheduleArg::Div3 => Schedule::DivideBy3EachEpoch,
            ScheduleArg::Adaptive => Schedule::AdaptiveDivide1_1,
        },
        p: a.p,
        q: a.q,
        epochs: a.epochs,
        seed: cli.seed,
        mask_mode: match a.mask_mode {
            MaskModeArg::Window => MaskMode::PerWindow,
            MaskModeArg::Step => MaskMode::PerStep,
        },
        log_every: a.log_every,
    };
    let log = train(&mut m, &corpus, &cfg)?;
    for r in log.epochs() {
        println!(
            "epoch {} lr {:.6} train_nll {:.4} val_perp {:.3}",
            r.epoch,
            r.lr,
            r.train_nll,
            r.val_perp.unwrap_or(f64::NAN)
        );
    }
    println!(
        "updates {} skipped {} max |step norm - lr| {:.3e}",
        log.updates.len(),
        log.skipped,
        log.max_step_deviation()
    );
    log.write_csv(out.create("train_log.csv")?)?;
    checkpoint::save(&m, &out.path("model.ckpt"))?;
    corpus.vocab.save(&out.path("vocab.tsv"))?;
    if let Some(v) = log.epochs().last().and_then(|r| r.val_perp) {
        println!("final val perplexity {v:.3}");
    }
    if corpus.test.len() >= 2 {
        println!("test perplexity {:.3}", evaluate(&m, &corpus.test)?.perplexity);
    }
    Ok(Outcome::Pass)
}

fn load_vocab_for(ckpt: &Path, explicit: Option<&Path>) -> CmdResult<Vocab> {
    let path = explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ckpt.with_file_name("vocab.tsv"));
    Ok(Vocab::load(&path).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn cmd_eval(a: &EvalArgs) -> CmdResult<Outcome> {
    let m = checkpoint::load(&a.checkpoint)?;
    let vocab = load_vocab_for(&a.checkpoint, a.vocab.as_deref())?;
    if vocab.len() != m.vocab_size() {
        return Err(format!(
            "checkpoint expects a vocabulary of {} tokens but the vocabulary file has {}",
            m.vocab_size(),
            vocab.len()
        )
        .into());
    }
    let corpus = build_corpus(
        &corpus_paths(&a.corpus)?,
        VocabSource::Provided(vocab),
        0,
        a.corpus.lowercase,
    )?;
    let split: Split = a.split.parse()?;
    let r = evaluate(&m, corpus.split(split))?;
    println!(
        "split {} tokens {} mean_nll {:.6} perplexity {:.6}",
        a.split, r.tokens, r.mean_nll, r.perplexity
    );
    Ok(Outcome::Pass)
}

fn load_model(a: &DynamicsArgs) -> CmdResult<ModelStack> {
    let path = a
        .checkpoint
        .as_ref()
        .ok_or("this experiment needs --checkpoint")?;
    Ok(checkpoint::load(path)?)
}

fn load_map(a: &DynamicsArgs) -> CmdResult<InducedMap> {
    if a.experiment == Experiment::Henon {
        return Ok(InducedMap::henon());
    }
    Ok(match a.map {
        MapSource::PaperLstm => InducedMap::paper_lstm(),
        MapSource::PaperGru => InducedMap::paper_gru(),
        MapSource::Henon => InducedMap::henon(),
        MapSource::Checkpoint => InducedMap::from_stack(&load_model(a)?),
    })
}

/// A state on the attractor: a uniform draw from `[0, 1]^dim` advanced
/// `burn_in` steps.
fn settled_state(map: &InducedMap, seed: u64, burn_in: usize) -> CmdResult<Vector> {
    let mut rng = Rng::new(seed);
    let u0 = rng.uniform(0.0, 1.0, map.dim())?;
    let mut o = iterate(map, &u0, burn_in, burn_in, 1)?;
    Ok(o.states.pop().expect("one stored state"))
}

/// Test-split tokens (or random ones) for runs that need real input.
fn input_tokens(a: &DynamicsArgs, m: &ModelStack, n: usize, seed: u64) -> CmdResult<Vec<usize>> {
    match (&a.data, &a.checkpoint) {
        (Some(dir), Some(ckpt)) => {
            let vocab = load_vocab_for(ckpt, None)?;
            let corpus: Corpus = build_corpus(&CorpusPaths::from_dir(dir), VocabSource::Provided(vocab), 0, false)?;
            let src = if corpus.test.len() >= n { &corpus.test } else { &corpus.train };
            if src.len() < n {
                return Err(format!("corpus has fewer than {n} tokens").into());
            }
            Ok(src[..n].to_vec())
        }
        _ => {
            let mut rng = Rng::derive(seed, 0x5eed);
            Ok((0..n).map(|_| rng.index(m.vocab_size())).collect())
        }
    }
}

fn cmd_dynamics(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    match a.experiment {
        Experiment::Attractor | Experiment::Henon => dyn_attractor(cli, a, out),
        Experiment::Diverge => dyn_diverge(cli, a, out),
        Experiment::Impulse => dyn_impulse(cli, a, out),
        Experiment::Lemma1 => dyn_lemma1(cli, a, out),
        Experiment::Lemma2 => dyn_lemma2(cli, a),
        Experiment::Multilayer => dyn_multilayer(cli, a, out),
        Experiment::Lyapunov => dyn_lyapunov(cli, a),
    }
}

fn dyn_attractor(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let map = load_map(a)?;
    let steps = a.steps.unwrap_or(100_000);
    if a.keep_from == 0 || a.keep_from > steps {
        return Err(format!("need 1 <= --keep-from <= --steps (got {} and {steps})", a.keep_from).into());
    }
    let henon = matches!(map, InducedMap::Henon { .. });
    if henon {
        let o = iterate(&map, &[0.0, 0.0], 2, 1, 1)?;
        println!("from (0, 0): u1 = {:?}, u2 = {:?}", o.states[0].as_slice(), o.states[1].as_slice());
    }
    let cloud = attractor_sample(&map, a.n_init.unwrap_or(1), (0.0, 1.0), a.keep_from, steps - a.keep_from, cli.seed)?;
    dynamics::csv::write_cloud(out.create("cloud.csv")?, &cloud, false)?;

    let u0 = if henon {
        Vector::from(vec![0.0, 0.0])
    } else {
        Rng::derive(cli.seed, 0).uniform(0.0, 1.0, map.dim())?
    };
    let orbit = iterate(&map, &u0, steps, a.keep_from, a.stride)?;
    dynamics::csv::write_orbit(out.create("orbit.csv")?, &orbit)?;

    println!("map {} points {} escaped {}", map.name(), cloud.points.len(), cloud.escaped);
    for (i, (lo, hi)) in cloud.bounding_box().iter().enumerate() {
        println!("axis {i}: [{lo:.6}, {hi:.6}]");
    }
    println!("span {:.6} max |x| {:.6}", cloud.span(), cloud.max_abs());
    let active = recurrently_active(&orbit, (1000 / a.stride).max(1), a.threshold);
    println!("recurrently above {} (1000-step windows): {active}", a.threshold);
    Ok(Outcome::Pass)
}

fn dyn_diverge(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let map = load_map(a)?;
    let steps = a.steps.unwrap_or(200);
    let trials = a.trials.unwrap_or(1000);
    let u0 = settled_state(&map, cli.seed, a.keep_from)?;
    let traces = divergence_experiment(&map, &u0, a.perturb, steps, trials, cli.seed)?;
    dynamics::csv::write_divergence(out.create("diverge.csv")?, &traces)?;
    let hits = traces.iter().filter(|t| t.first_exceeding(a.threshold).is_some()).count();
    println!(
        "map {} trials {trials}: {hits} exceed {} within {steps} steps ({:.1}%)",
        map.name(),
        a.threshold,
        100.0 * hits as f64 / trials.max(1) as f64
    );

    if let (InducedMap::Stack(m), Some(_)) = (&map, &a.data) {
        // Two distant states driven by the same text.
        let mut rng = Rng::derive(cli.seed, 1);
        let dim = map.dim();
        let a0 = StackState::from_flat(m.kind, m.depth(), m.hidden(), &rng.uniform(-1.0, 1.0, dim)?);
        let b0 = StackState::from_flat(m.kind, m.depth(), m.hidden(), &rng.uniform(-1.0, 1.0, dim)?);
        let tokens = input_tokens(a, m, steps, cli.seed)?;
        let tr = paired_trajectories(m, &a0, &b0, Some(&tokens), steps)?;
        dynamics::csv::write_divergence(out.create("diverge_data.csv")?, std::slice::from_ref(&tr))?;
        println!(
            "data-driven: distance {:.3e} -> {:.3e} after {steps} steps",
            tr.distances[0],
            tr.distances[steps]
        );
    }
    Ok(Outcome::Pass)
}

fn dyn_impulse(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let p = match &a.checkpoint {
        Some(_) => match load_model(a)?.params.layers.into_iter().next() {
            Some(LayerParams::Cfn(p)) => p,
            _ => return Err("impulse needs a CFN checkpoint".into()),
        },
        None => {
            let n = a.dim.unwrap_or(8);
            random_cfn(n, n, 1.0, &mut Rng::new(cli.seed))
        }
    };
    let tr = impulse_response(&p, a.unit, a.spike, a.amplitude, a.horizon)?;
    let orbit = Orbit {
        map: "cfn",
        u0: tr.h[0].clone(),
        times: (0..tr.len()).collect(),
        states: tr.h.clone(),
        t_start: 0,
        t_end: a.horizon,
    };
    dynamics::csv::write_orbit(out.create("orbit.csv")?, &orbit)?;
    let certs = verify_lemma1_sweep(&tr, a.unit, a.spike, a.horizon - a.spike)?;
    dynamics::csv::write_certificates(out.create("certificates.csv")?, &certs)?;
    let ok = certs.iter().all(|c| c.satisfied);
    println!(
        "unit {} spike {} peak h {:.6} final h {:.3e} certificates {} {}",
        a.unit,
        a.spike,
        tr.h[a.spike][a.unit],
        tr.h[a.horizon][a.unit],
        certs.len(),
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(Outcome::from_flag(ok))
}

fn dyn_lemma1(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let cfg = Lemma1Config {
        trials: a.trials.unwrap_or(1000),
        max_dim: a.dim.unwrap_or(16),
        seed: cli.seed,
        ..Lemma1Config::default()
    };
    let s = lemma1_suite(&cfg)?;
    let tr = lemma1_instance(&cfg, 0)?;
    let mut certs = Vec::new();
    for t in 1..=cfg.starts {
        certs.extend(verify_lemma1_sweep(&tr, 0, t, cfg.k_max)?);
    }
    dynamics::csv::write_certificates(out.create("certificates.csv")?, &certs)?;
    println!(
        "instances {} certificates {} violations {} worst margin {:.3e} {}",
        s.trials,
        s.certificates,
        s.violations,
        s.worst_margin,
        if s.passed() { "PASS" } else { "FAIL" }
    );
    Ok(Outcome::from_flag(s.passed()))
}

fn dyn_lemma2(cli: &Cli, a: &DynamicsArgs) -> CmdResult<Outcome> {
    let cfg = Lemma2Config {
        maps: a.trials.unwrap_or(100),
        dim: a.dim,
        attractor: ZeroAttractorConfig {
            n_init: a.n_init.unwrap_or(100),
            tol: a.tol,
            max_steps: a.max_steps,
            ..ZeroAttractorConfig::default()
        },
        seed: cli.seed,
        ..Lemma2Config::default()
    };
    let s = lemma2_suite(&cfg)?;
    println!(
        "maps {} orbits {} failed {} outside bound {} worst steps {} {}",
        s.maps,
        s.orbits,
        s.failed_maps,
        s.outside_bound,
        s.worst_steps,
        if s.passed() { "PASS" } else { "FAIL" }
    );
    Ok(Outcome::from_flag(s.passed()))
}

fn dyn_multilayer(cli: &Cli, a: &DynamicsArgs, out: &mut Outputs) -> CmdResult<Outcome> {
    let m = load_model(a)?;
    let warm = input_tokens(a, &m, a.warm, cli.seed)?;
    let r = verify_multilayer_decay(&m, &warm, a.horizon)?;
    dynamics::csv::write_decay(out.create("decay.csv")?, &r)?;
    for l in &r.layers {
        let slow: Vec<String> = l.slowest.iter().map(|(u, t)| format!("{u}:{t}")).collect();
        println!(
            "layer {} half-life {} envelope C {:.4} Theta {:.4} slowest {}",
            l.layer + 1,
            l.half_life,
            l.c,
            l.theta,
            slow.join(" ")
        );
    }
    let ok = !r.degenerate && r.deeper_retains_longer();
    println!("deeper layers retain longer: {}", if ok { "PASS" } else { "FAIL" });
    Ok(Outcome::from_flag(ok))
}

fn dyn_lyapunov(cli: &Cli, a: &DynamicsArgs) -> CmdResult<Outcome> {
    let map = load_map(a)?;
    let u0 = settled_state(&map, cli.seed, a.keep_from)?;
    let est = lyapunov_estimate(&map, &u0, a.steps.unwrap_or(100_000), a.renorm)?;
    println!("map {} lyapunov {est:.6} chaotic {}", map.name(), est > 0.0);
    Ok(Outcome::Pass)
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> CmdResult<Outcome> {
    let cells: Vec<CellKind> = match a.cell {
        Some(c) => vec![cell_kind(c)],
        None => vec![CellKind::Cfn, CellKind::Lstm, CellKind::Gru],
    };
    let mut all = true;
    for kind in cells {
        let r = gradcheck(&GradcheckConfig {
            kind,
            depth: a.depth,
            hidden: a.hidden,
            vocab: a.vocab,
            unroll: a.unroll,
            seed: cli.seed,
            trials: a.trials,
            corrupt: a.corrupt,
            ..GradcheckConfig::default()
        })?;
        println!(
            "{kind} max_rel_err {:.3e} worst {}[{}] trial {} checked {} {}",
            r.max_rel_err,
            r.worst_tensor,
            r.worst_index,
            r.worst_trial,
            r.checked,
            if r.passed { "PASS" } else { "FAIL" }
        );
        if !r.passed {
            eprintln!("gradient check failed for {kind}: worst tensor {}", r.worst_tensor);
        }
        all &= r.passed;
    }
    Ok(Outcome::from_flag(all))
}
