//! JSON checkpoints holding every parameter as a named row-major array.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{GrdlError, Result};
use crate::gin::{BatchNormState, EncoderConfig, GinEncoder, GinLayer};
use crate::mmd::ReferenceSet;
use crate::model::Model;
use crate::tensor::Tensor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl From<&Tensor> for NamedArray {
    fn from(t: &Tensor) -> Self {
        NamedArray {
            shape: [t.rows(), t.cols()],
            data: t.data().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub best_val_acc: Option<f64>,
    pub ref_size: usize,
    /// Original dataset label of each class index.
    pub class_values: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub encoder: EncoderConfig,
    pub classes: usize,
    pub ref_per_class: usize,
    pub pi: f64,
    pub arrays: BTreeMap<String, NamedArray>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config: &TrainConfig, meta: CheckpointMeta) -> Self {
        let mut arrays: BTreeMap<String, NamedArray> = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(n, t)| (n, NamedArray::from(t)))
            .collect();
        for (l, layer) in model.encoder.layers().iter().enumerate() {
            for (i, bn) in layer.norms.iter().enumerate() {
                let row = |v: &[f64]| NamedArray {
                    shape: [1, v.len()],
                    data: v.to_vec(),
                };
                arrays.insert(format!("gin.{l}.bn{i}.running_mean"), row(&bn.running_mean));
                arrays.insert(format!("gin.{l}.bn{i}.running_var"), row(&bn.running_var));
            }
        }
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            encoder: *model.encoder.config(),
            classes: model.refs.classes(),
            ref_per_class: model.refs.per_class(),
            pi: model.refs.pi(),
            arrays,
            meta,
        }
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| GrdlError::Checkpoint(format!("missing array {name}")))?;
        Tensor::from_vec(a.shape[0], a.shape[1], a.data.clone())
            .map_err(|e| GrdlError::Checkpoint(format!("array {name}: {e}")))
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(GrdlError::Checkpoint(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let cfg = self.encoder;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let weights = (0..cfg.mlp_depth)
                .map(|i| self.tensor(&format!("gin.{l}.w{i}")))
                .collect::<Result<_>>()?;
            let norms = (0..cfg.mlp_depth.saturating_sub(1))
                .map(|i| {
                    let p = format!("gin.{l}.bn{i}");
                    Ok(BatchNormState {
                        gamma: self.tensor(&format!("{p}.gamma"))?,
                        beta: self.tensor(&format!("{p}.beta"))?,
                        running_mean: self.tensor(&format!("{p}.running_mean"))?.into_data(),
                        running_var: self.tensor(&format!("{p}.running_var"))?.into_data(),
                    })
                })
                .collect::<Result<_>>()?;
            layers.push(GinLayer { weights, norms });
        }
        let encoder = GinEncoder::from_layers(cfg, layers)?;
        let mut refs = Vec::with_capacity(self.classes * self.ref_per_class);
        for k in 0..self.classes {
            for p in 0..self.ref_per_class {
                refs.push(self.tensor(&format!("ref.{k}.{p}"))?);
            }
        }
        let refs = ReferenceSet::new(refs, self.classes, self.ref_per_class, self.pi)?;
        Model::new(encoder, refs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| GrdlError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, Dataset, DatasetSplit};
    use crate::train::{evaluate, train, RefSize};

    #[test]
    fn save_load_reproduces_predictions() {
        let ds = Dataset::from_graphs("s", generate_synthetic(12, 8, 0.15, 2, 4).unwrap()).unwrap();
        let cfg = TrainConfig {
            layers: 2,
            hidden: 4,
            ref_size: RefSize::Fixed(3),
            epochs: 3,
            batch_size: 4,
            val_interval: 1,
            folds: 2,
            ..TrainConfig::default()
        };
        let all: Vec<usize> = (0..ds.len()).collect();
        let split = DatasetSplit {
            fold: 0,
            train: all.clone(),
            validation: all.clone(),
            test: vec![],
        };
        let out = train(&ds, &split, &cfg, |_| {}).unwrap();
        let meta = CheckpointMeta {
            epoch: out.best_epoch,
            best_val_acc: Some(out.best_val_acc),
            ref_size: out.ref_size,
            class_values: ds.class_values.clone(),
        };
        let ck = Checkpoint::from_model(&out.best, &cfg, meta);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ck);
        let model = loaded.to_model().unwrap();
        assert_eq!(model, out.best);
        let graphs = ds.subset(&all);
        let a = evaluate(&out.best, &graphs, true).unwrap();
        let b = evaluate(&model, &graphs, true).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn missing_array_is_reported() {
        let json = r#"{"schema_version":1,"config":{"layers":1,"mlp_depth":1,"hidden":1,"ref_size":1,
            "ref_per_class":1,"lambda":0,"lr":1,"lr_theta":1,"lr_decay":1,"batch_size":1,"epochs":1,
            "seed":0,"holdout":0,"folds":2,"val_interval":1},
            "encoder":{"layers":1,"mlp_depth":1,"hidden":1,"input_dim":1,"output_dim":1},
            "classes":1,"ref_per_class":1,"pi":1.0,"arrays":{},
            "meta":{"epoch":0,"best_val_acc":null,"ref_size":1,"class_values":[0]}}"#;
        let ck: Checkpoint = serde_json::from_str(json).unwrap();
        assert!(matches!(ck.to_model(), Err(GrdlError::Checkpoint(_))));
    }
}
