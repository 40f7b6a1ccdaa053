//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `b"GUNL"`                    |
//! | 4      | 4    | version (`u32`, currently 1)       |
//! | 8      | 4    | kind (`u32`: 0 = SGC, 1 = GCN2)    |
//! | 12     | 8    | parameter count `p` (`u64`)        |
//! | 20     | 4    | propagation depth `k` (`u32`)      |
//! | 24     | 8    | `reg_lambda` (`f64`)               |
//! | 32     | 8    | seed (`u64`)                       |
//! | 40     | 4    | hidden width (`u32`, 0 for SGC)    |
//! | 44     | 4    | feature dim `d` (`u32`)            |
//! | 48     | 4    | class count `c` (`u32`)            |
//! | 52     | 8    | trainer iterations (`u64`)         |
//! | 60     | 8    | final gradient norm (`f64`)        |
//! | 68     | 8·p  | θ as `f64`                         |

use crate::error::{Error, Result};
use crate::model::trainer::TrainDiagnostics;
use crate::model::{ModelKind, ModelSpec, TrainedModel};

pub const MAGIC: &[u8; 4] = b"GUNL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 68;

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.theta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let kind: u32 = match model.spec.kind {
        ModelKind::Sgc => 0,
        ModelKind::Gcn2 => 1,
    };
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(model.theta.len() as u64).to_le_bytes());
    out.extend_from_slice(&(model.spec.k as u32).to_le_bytes());
    out.extend_from_slice(&model.spec.reg_lambda.to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    let hidden = match model.spec.kind {
        ModelKind::Sgc => 0,
        ModelKind::Gcn2 => model.spec.hidden as u32,
    };
    out.extend_from_slice(&hidden.to_le_bytes());
    out.extend_from_slice(&(model.feature_dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(model.diagnostics.iterations as u64).to_le_bytes());
    out.extend_from_slice(&model.diagnostics.grad_norm.to_le_bytes());
    for x in &model.theta {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn take<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("length checked")
}

pub fn decode(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, 4));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = match u32::from_le_bytes(take(bytes, 8)) {
        0 => ModelKind::Sgc,
        1 => ModelKind::Gcn2,
        other => return Err(Error::Checkpoint(format!("unknown model kind {other}"))),
    };
    let p = u64::from_le_bytes(take(bytes, 12)) as usize;
    let k = u32::from_le_bytes(take(bytes, 20)) as usize;
    let reg_lambda = f64::from_le_bytes(take(bytes, 24));
    let seed = u64::from_le_bytes(take(bytes, 32));
    let hidden = u32::from_le_bytes(take(bytes, 40)) as usize;
    let feature_dim = u32::from_le_bytes(take(bytes, 44)) as usize;
    let num_classes = u32::from_le_bytes(take(bytes, 48)) as usize;
    let iterations = u64::from_le_bytes(take(bytes, 52)) as usize;
    let grad_norm = f64::from_le_bytes(take(bytes, 60));
    if bytes.len() != HEADER_LEN + 8 * p {
        return Err(Error::Checkpoint(format!(
            "expected {} bytes of parameters, found {}",
            8 * p,
            bytes.len() - HEADER_LEN
        )));
    }
    let theta: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let spec = ModelSpec {
        kind,
        k,
        reg_lambda,
        hidden: if kind == ModelKind::Gcn2 { hidden } else { ModelSpec::default().hidden },
    };
    if spec.num_params(feature_dim, num_classes) != p {
        return Err(Error::Checkpoint("parameter count does not match header shape".into()));
    }
    let model = TrainedModel {
        spec,
        feature_dim,
        num_classes,
        theta,
        seed,
        diagnostics: TrainDiagnostics {
            iterations,
            grad_norm,
            final_loss: f64::NAN,
            converged: true,
        },
    };
    model.check_invariants()?;
    Ok(model)
}

pub fn save(model: &TrainedModel, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<TrainedModel> {
    decode(&std::fs::read(path)?)
}
