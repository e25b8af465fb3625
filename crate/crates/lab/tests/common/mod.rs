//! Helpers shared by the lab integration tests and the acceptance harness.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acl_core::checkpoint::{self, Tensor};
use acl_core::data::audio::{AugmentationConfig, MelConfig};
use acl_core::data::synthetic::SyntheticDatasetSpec;
use acl_core::encoder::{Activation, EncoderConfig};
use acl_core::losses::LossConfig;
use acl_core::metrics::ToleranceNorm;
use acl_core::optim::OptimizerKind;
use acl_core::training::*;
use acl_lab::config;
use proptest::prelude::*;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_acl-lab")
}

/// Runs the CLI with extra environment variables.
pub fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("ACL_LAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("acl-lab runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A config that trains in well under a second.
pub const TINY: &str = r#"
seed = 7

[loss]
tau = 0.2
alpha = 0.3

[data.synthetic]
n_classes = 3
n_per_class = 20
n_test_per_class = 10
dim = 6
cluster_spread = 0.1
noise_aug = 0.1
mask_prob = 0.1

[encoder]
hidden = [16]
d_h = 8
head_hidden = 32
d_z = 6

[optimizer]
batch_size = 16
lr = 0.01

[training]
epochs = 6

[metrics]
probe_every = 3
probe_epochs = 50
"#;

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

/// TOML integers are signed 64-bit.
fn seed() -> impl Strategy<Value = u64> {
    0..=i64::MAX as u64
}

prop_compose! {
    fn arb_loss()(tau in finite(1e-3, 10.0), margin in finite(1e-3, std::f64::consts::PI), alpha in 0.0..=1.0f64) -> LossConfig {
        LossConfig { tau, margin, alpha }
    }
}

prop_compose! {
    fn arb_synthetic()(
        n_classes in 1usize..10, n_per_class in 1usize..500, n_test_per_class in 1usize..100, dim in 1usize..64,
        cluster_spread in finite(0.0, 5.0), noise_aug in finite(0.0, 5.0), lo in finite(0.1, 1.0), extra in finite(0.0, 2.0),
        mask_prob in 0.0..=1.0f64, seed in seed(),
    ) -> SyntheticDatasetSpec {
        SyntheticDatasetSpec { n_classes, n_per_class, n_test_per_class, dim, cluster_spread, noise_aug, scale_range: [lo, lo + extra], mask_prob, seed }
    }
}

prop_compose! {
    fn arb_audio()(root in "[a-z/_]{1,20}", target_frames in 1usize..200, test_every in 2usize..10, seed in seed(), lam in finite(0.0, 1.0)) -> AudioCorpusConfig {
        AudioCorpusConfig {
            root,
            mel: MelConfig::default(),
            target_frames,
            test_every,
            augmentation: AugmentationConfig { mixback_lambda_max: lam, seed, ..AugmentationConfig::default() },
        }
    }
}

prop_compose! {
    fn arb_encoder()(hidden in prop::collection::vec(1usize..300, 0..4), d_h in 1usize..128, relu in any::<bool>(), head_hidden in 1usize..128, d_z in 1usize..64) -> EncoderConfig {
        EncoderConfig { hidden, d_h, h_activation: if relu { Activation::Relu } else { Activation::Identity }, head_hidden, d_z }
    }
}

prop_compose! {
    pub fn arb_config()(
        supervised in any::<bool>(), seed in seed(), out in "[a-z][a-z0-9/_.-]{0,20}", loss in arb_loss(),
        t in finite(1e-3, 10.0), same in any::<bool>(), h_space in any::<bool>(), probe_every in 1usize..50, probe_epochs in 0usize..1000, probe_lr in finite(1e-4, 10.0),
        synthetic in arb_synthetic(), audio in prop::option::of(arb_audio()), encoder in arb_encoder(),
        sgd in any::<bool>(), lr in finite(0.0, 1.0), batch_size in 2usize..512, epochs in 0usize..1000, wall in any::<bool>(),
    ) -> ExperimentConfig {
        let source = if audio.is_some() { DataSource::Audio } else { DataSource::Synthetic };
        ExperimentConfig {
            mode: if supervised { RunMode::Supervised } else { RunMode::Ssl },
            seed,
            output_dir: out,
            loss,
            metrics: MetricsConfig {
                t,
                tolerance_norm: if same { ToleranceNorm::SameClassPairs } else { ToleranceNorm::AllPairs },
                space: if h_space { EmbeddingSpace::H } else { EmbeddingSpace::Z },
                probe_every,
                probe_epochs,
                probe_lr,
            },
            data: DataConfig { source, synthetic, audio },
            encoder,
            optimizer: OptimizerConfig { kind: if sgd { OptimizerKind::Sgd } else { OptimizerKind::Adam }, lr, batch_size },
            training: TrainingConfig { epochs, record_wall_ms: wall },
        }
    }
}

/// Serializes to TOML, parses back and compares.
pub fn config_round_trip(cfg: &ExperimentConfig) -> Result<(), String> {
    cfg.validate().map_err(|e| format!("generated config is invalid: {e}"))?;
    let text = config::to_toml(cfg).map_err(|e| e.to_string())?;
    let back = config::parse(&text, "echo").map_err(|e| format!("{e}\n{text}"))?;
    if &back == cfg {
        Ok(())
    } else {
        Err(format!("round trip changed the config:\n{text}"))
    }
}

prop_compose! {
    pub fn arb_tensors()(specs in prop::collection::vec(("[a-z.0-9]{0,12}", prop::collection::vec(0usize..5, 0..4)), 0..6))
        (tensors in specs.into_iter().map(|(name, dims)| {
            let n: usize = dims.iter().product();
            prop::collection::vec(any::<u64>(), n).prop_map(move |bits| Tensor {
                name: name.clone(),
                dims: dims.clone(),
                data: bits.into_iter().map(f64::from_bits).collect(),
            })
        }).collect::<Vec<_>>()) -> Vec<Tensor> {
        tensors
    }
}

/// Writes through the checkpoint file layer and compares bit patterns.
pub fn checkpoint_round_trip(dir: &Path, tensors: &[Tensor]) -> Result<(), String> {
    let path = dir.join("rt.acl");
    acl_lab::checkpoint_file::save(&path, tensors).map_err(|e| e.to_string())?;
    let back = acl_lab::checkpoint_file::load(&path).map_err(|e| e.to_string())?;
    let bits = |t: &[Tensor]| -> Vec<(String, Vec<usize>, Vec<u64>)> {
        t.iter().map(|t| (t.name.clone(), t.dims.clone(), t.data.iter().map(|v| v.to_bits()).collect())).collect()
    };
    if bits(&back) != bits(tensors) {
        return Err("checkpoint round trip changed the tensors".into());
    }
    if checkpoint::encode(&back) != std::fs::read(&path).unwrap() {
        return Err("re-encoding differs from the file".into());
    }
    Ok(())
}
