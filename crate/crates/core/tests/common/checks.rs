//! Criterion checks shared by the focused test files and the acceptance runner.
//! Each check panics on failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adares::accuracy::accuracy_model;
use adares::ddqn::Trainer;
use adares::energy::{EnergyParams, FrameSpec};
use adares::env::{EnvModel, SequenceSampler, VideoEnv};
use adares::qnet::{NetSpec, QNetwork};
use adares::schedulers::{
    run_policy, AdaptiveConfig, AdaptiveHfs, DownsamplingScan, FixedIntervalConfig, FixedIntervalHfs, Policy,
    RandomConfig, RandomHfs, ScanConfig,
};
use adares::Action;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use super::{chain_train_config, chain_value_iteration, hd, rel_err, ChainMdp, RawPreset, CHAIN_ACTIONS, CHAIN_STATES};

pub fn random_preset(rng: &mut ChaCha8Rng) -> RawPreset {
    RawPreset {
        sensor_mp: rng.random_range(2.0..20.0),
        clock_hz: rng.random_range(1e6..1e8),
        t_exp: rng.random_range(1e-4..0.1),
        p_sensor_idle: rng.random_range(1.0..500.0),
        sensor_slope: rng.random_range(0.1..50.0),
        sensor_offset: rng.random_range(1.0..500.0),
        p_isp_active: rng.random_range(100.0..5000.0),
        p_isp_idle: rng.random_range(1.0..500.0),
        isp_slope: rng.random_range(0.001..0.5),
        isp_offset: rng.random_range(0.001..0.1),
        p_host_active: rng.random_range(100.0..10000.0),
        p_host_idle: rng.random_range(1.0..1000.0),
        app_key: rng.random_range(0.2..2.0),
        app_flow: rng.random_range(0.01..0.19),
        comm_k: rng.random_range(0.1..50.0),
    }
}

/// Worst relative error of `cases` random parameter sets and frames against [`RawPreset`].
pub fn energy_transcription_worst(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let raw = random_preset(&mut rng);
        let params = raw.to_params();
        let max_side = (raw.sensor_mp * 1e6).sqrt() as u32;
        let w = rng.random_range(1..=max_side);
        let h = rng.random_range(1..=max_side);
        let key = rng.random_bool(0.5);
        let got = params.frame_energy(FrameSpec::new(w, h).unwrap(), key).unwrap();
        let want = raw.energy(w, h, key);
        for (g, o) in [got.sensor_mj, got.isp_mj, got.host_mj, got.comm_mj, got.total_mj]
            .into_iter()
            .zip(want)
        {
            worst = worst.max(rel_err(g, o));
        }
    }
    worst
}

pub fn assert_preset_golden_values() {
    let p = EnergyParams::imx219_pi3();
    let e = p.frame_energy(hd(), true).unwrap();
    // Printed by tests/oracles/energy_golden.py.
    assert_relative_eq!(e.sensor_mj, 17.983377541120, max_relative = 1e-6);
    assert_relative_eq!(e.isp_mj, 262.968, max_relative = 1e-6);
    assert_relative_eq!(e.host_mj, 1447.3056, max_relative = 1e-6);
    assert_relative_eq!(e.comm_mj, 9.216, max_relative = 1e-6);
    assert_relative_eq!(e.total_mj, 1737.472977541120, max_relative = 1e-6);
    assert_relative_eq!(p.isp.isp_time_s(hd()), 0.119552, max_relative = 1e-6);

    let a4 = p.frame_energy(hd().downsampled(8), false).unwrap();
    assert_relative_eq!(a4.total_mj, 78.262277774080, max_relative = 1e-6);
    let a2 = p.frame_energy(hd().downsampled(2), false).unwrap();
    assert_relative_eq!(a2.total_mj, 210.656444385280, max_relative = 1e-6);
}

const H: f64 = 1e-5;

fn loss(net: &QNetwork, x: &[f64], hist: &[f64], action: usize, target: f64) -> f64 {
    let q = net.forward(x, hist).unwrap();
    0.5 * (q[action] - target).powi(2)
}

pub fn random_case(seed: u64) -> (QNetwork, Vec<f64>, Vec<f64>, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(0..=3);
    let spec = NetSpec {
        input_dim: rng.random_range(1..=6),
        trunk_dims: (0..depth).map(|_| rng.random_range(1..=8)).collect(),
        history_dim: rng.random_range(0..=4),
        outputs: rng.random_range(1..=4),
    };
    let mut net = QNetwork::init(spec.clone(), seed).unwrap();
    // Non-zero biases so hidden units sit away from the rectifier kink more often.
    for p in net.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let x = (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hist = (0..spec.history_dim).map(|_| rng.random_range(0.0..1.0)).collect();
    let action = rng.random_range(0..spec.outputs);
    let target = rng.random_range(-2.0..2.0);
    (net, x, hist, action, target)
}

/// Largest relative error between backprop and central differences over `nets` random networks.
pub fn gradcheck_worst(nets: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..nets {
        let (net, x, hist, action, target) = random_case(seed);
        let cache = net.forward_cached(&x, &hist).unwrap();
        let td = cache.q_values[action] - target;
        let analytic = net.backward(&cache, action, td);
        assert_eq!(analytic.len(), net.params().len());

        let mut probe = net.clone();
        for i in 0..analytic.len() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + H;
            let up = loss(&probe, &x, &hist, action, target);
            probe.params_mut()[i] = orig - H;
            let down = loss(&probe, &x, &hist, action, target);
            probe.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            let err = (analytic[i] - numeric).abs() / denom;
            assert!(err < 1e-4, "seed {seed} param {i}: analytic {} numeric {numeric}", analytic[i]);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn chain_spec() -> NetSpec {
    NetSpec {
        input_dim: CHAIN_STATES,
        trunk_dims: vec![],
        history_dim: 0,
        outputs: CHAIN_ACTIONS,
    }
}

/// Trains on the chain MDP for at most `budget` steps; returns the largest |Q - Q*|.
pub fn chain_error(seed: u64, budget: usize) -> f64 {
    let cfg = chain_train_config(seed);
    let q_star = chain_value_iteration(cfg.gamma);
    let mut trainer = Trainer::new(chain_spec(), cfg).unwrap();
    let mut env = ChainMdp::new();
    let mut episode = 0;
    while trainer.steps() < budget {
        trainer.run_episode(&mut env, episode).unwrap();
        episode += 1;
    }
    assert!(trainer.steps() <= budget + 2);
    let mut worst: f64 = 0.0;
    for (s, row) in q_star.iter().enumerate() {
        let q = trainer.online().forward(&ChainMdp::one_hot(s).trunk, &[]).unwrap();
        for a in 0..CHAIN_ACTIONS {
            worst = worst.max((q[a] - row[a]).abs());
        }
    }
    worst
}

// Per-frame energies of the shipped preset at 1280x720, from tests/oracles/energy_golden.py.
const E_A2: f64 = 210.656444385280;
const E_A3: f64 = 104.741111096320;
const E_A4: f64 = 78.262277774080;


pub fn env_for(seed: u64) -> VideoEnv {
    let seq = SequenceSampler::default().sequence(seed);
    VideoEnv::new(EnvModel::default_with_lambda(0.6), seq).unwrap()
}

pub fn assert_fixed_interval_is_exactly_periodic() {
    for l in 1..=6 {
        for a in Action::NON_KEY {
            let mut env = env_for(l as u64);
            let trace = run_policy(&mut env, &mut FixedIntervalHfs(FixedIntervalConfig { l, nonkey_action: a })).unwrap();
            for r in &trace.records {
                let want = if r.t % (l + 1) == 0 { Action::Full } else { a };
                assert_eq!(r.action, want, "l={l} t={}", r.t);
            }
        }
    }
}

pub fn assert_adaptive_key_count_non_increasing_in_threshold() {
    let thresholds = [0.5, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 20.0, 50.0, 1e9];
    for seed in 0..20 {
        for a in Action::NON_KEY {
            let keys: Vec<usize> = thresholds
                .iter()
                .map(|&threshold| {
                    let mut env = env_for(seed);
                    let cfg = AdaptiveConfig { threshold, nonkey_action: a };
                    run_policy(&mut env, &mut AdaptiveHfs(cfg)).unwrap().key_count()
                })
                .collect();
            assert!(keys.windows(2).all(|w| w[0] >= w[1]), "seed {seed}: {keys:?}");
            assert_eq!(*keys.last().unwrap(), 1, "only the forced first frame at an unreachable threshold");
        }
    }
}

pub fn assert_random_marginals_within_three_sigma() {
    for key_prob in [0.9, 0.7, 0.5, 0.2] {
        let mut n = 0usize;
        let mut keys = 0usize;
        let mut per_action = [0usize; 4];
        for seed in 0..60 {
            let mut env = env_for(seed);
            let mut policy = RandomHfs::new(RandomConfig { key_prob, rng_seed: 17 });
            let trace = run_policy(&mut env, &mut policy).unwrap();
            for r in &trace.records[1..] {
                n += 1;
                keys += usize::from(r.action.is_key());
                per_action[r.action.index()] += 1;
            }
        }
        let sigma = (n as f64 * key_prob * (1.0 - key_prob)).sqrt();
        assert!((keys as f64 - n as f64 * key_prob).abs() < 3.0 * sigma, "r={key_prob}: {keys}/{n}");
        // Non-key picks are uniform over a2..a4.
        let non_key = n - keys;
        let p = 1.0 / 3.0;
        let s = (non_key as f64 * p * (1.0 - p)).sqrt();
        for &c in &per_action[1..] {
            assert!((c as f64 - non_key as f64 * p).abs() < 3.0 * s, "{per_action:?}");
        }
    }
}

/// Replays Downsampling Scan by hand against the accuracy model and checks
/// both the chosen action and the charged probe energy on every frame.
pub fn assert_scan_bookkeeping_matches_hand_trace() {
    for cnstrt in [0.2, 0.4, 0.6, 0.8] {
        for seed in 0..5 {
            let mut env = env_for(seed);
            env.reset().unwrap();
            let mut policy = DownsamplingScan(ScanConfig { cnstrt });
            while !env.is_done() {
                let truth = env.truth();
                let acc = |a| accuracy_model(&env.model().accuracy, &truth, a);
                let full = acc(Action::Full);
                let ok = |a| (full - acc(a)) / full <= cnstrt;
                let (want, extra) = if ok(Action::Eighth) {
                    (Action::Eighth, 0.0)
                } else if ok(Action::Quarter) {
                    (Action::Quarter, E_A4)
                } else if ok(Action::Half) {
                    (Action::Half, E_A4 + E_A3)
                } else {
                    (Action::Full, E_A4 + E_A3 + E_A2)
                };
                let d = policy.decide(&env).unwrap();
                assert_eq!(d.action, want);
                assert!((d.extra_energy.total_mj - extra).abs() < 1e-9);
                env.step_with_extra(d.action, d.extra_energy).unwrap();
            }
            let trace = env.take_trace();
            let charged: f64 = trace.records.iter().map(|r| r.extra.total_mj).sum();
            assert!((trace.total_consumed_mj() - charged - trace.records.iter().map(|r| r.energy.total_mj).sum::<f64>()).abs() < 1e-6);
        }
    }
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adares")).args(args).output().expect("spawn adares")
}

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn default_config() -> String {
    configs().join("default.json").display().to_string()
}

/// Shortened episodes keep CLI training tests fast.
pub fn small_config(dir: &Path) -> String {
    let text = fs::read_to_string(configs().join("default.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["hardware_preset"] = configs().join("imx219_pi3.json").display().to_string().into();
    v["accuracy_model"] = configs().join("accuracy_model.json").display().to_string().into();
    v["sequence"]["base"]["length_frames"] = 30.into();
    v["eval_seeds"] = serde_json::json!([7, 8]);
    let path = dir.join("small.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.display().to_string()
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Runs the whole pipeline into a fresh directory and returns every output file.
fn pipeline(config: &str, seed: &str) -> Vec<(String, Vec<u8>)> {
    let root = TempDir::new().unwrap();
    let p = root.path();
    let ok = |args: &[&str]| {
        let out = run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let sim = p.join("sim.csv");
    ok(&["simulate", "--config", config, "--seed", seed, "--policy", "scan:cnstrt=0.4", "--out", &s(&sim)]);
    let train = p.join("train");
    ok(&["train", "--config", config, "--seed", seed, "--episodes", "12", "--out-dir", &s(&train)]);
    let ckpt = train.join("checkpoint.qnet");
    ok(&["evaluate", "--config", config, "--seed", seed, "--checkpoint", &s(&ckpt), "--out-dir", &s(&p.join("eval"))]);
    let sweep = p.join("sweep");
    ok(&["sweep", "--config", config, "--seed", seed, "--checkpoint", &s(&ckpt), "--out-dir", &s(&sweep)]);
    ok(&["report", "--config", config, "--seed", seed, "--sweep-dir", &s(&sweep), "--out-dir", &s(&p.join("report"))]);

    let mut files = vec![("sim.csv".to_string(), fs::read(&sim).unwrap())];
    for sub in ["train", "eval", "sweep", "report"] {
        for (name, bytes) in read_dir_sorted(&p.join(sub)) {
            files.push((format!("{sub}/{name}"), bytes));
        }
    }
    files
}

/// Checks every output of every subcommand is byte-identical across reruns.
pub fn assert_pipeline_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = small_config(dir.path());
    let a = pipeline(&config, "21");
    let b = pipeline(&config, "21");
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "sim.csv",
        "train/checkpoint.qnet",
        "train/train_log.csv",
        "eval/summary.csv",
        "eval/trace_21.csv",
        "eval/trace_22.csv",
        "sweep/sweep.csv",
        "sweep/sweep_means.csv",
        "sweep/aecr.csv",
        "report/report_table.csv",
        "report/report_aecr.csv",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
        if na.ends_with(".csv") {
            let text = String::from_utf8(ba.clone()).unwrap();
            assert!(text.lines().count() >= 2, "{na} has no data rows");
            let header = text.lines().next().unwrap();
            assert!(header.split(',').all(|c| !c.is_empty() && c.parse::<f64>().is_err()), "{na}: {header}");
        }
    }
    let c = pipeline(&config, "22");
    let log = |files: &[(String, Vec<u8>)]| files.iter().find(|(n, _)| n == "train/train_log.csv").unwrap().1.clone();
    assert_ne!(log(&a), log(&c), "a different seed should change training");
}

