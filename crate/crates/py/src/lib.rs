//! Python bindings: schema/dataset handling, preprocessing, model and VAE
//! training, latent-space attacks, and the evaluation metrics.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;
use tabattack::attacks::{attack_sample, AttackConfig, AttackOutcome, EncodedRow};
use tabattack::data::{self, SplitTag};
use tabattack::error::Error;
use tabattack::metrics::{self, AsrRule, MdRule};
use tabattack::models::{
    self, InputSpec, MlpConfig, MlpModel, SdtConfig, SdtModel, TargetModel, TrainConfig,
};
use tabattack::vae::{self, VaeConfig, VaeModel};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Recursive JSON → Python conversion, used for record-like results.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn py_to_json(value: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    if value.is_none() {
        return Ok(serde_json::Value::Null);
    }
    if let Ok(b) = value.extract::<bool>() {
        return Ok(serde_json::Value::Bool(b));
    }
    if let Ok(i) = value.extract::<i64>() {
        return Ok(serde_json::json!(i));
    }
    if let Ok(f) = value.extract::<f64>() {
        return Ok(serde_json::json!(f));
    }
    if let Ok(s) = value.extract::<String>() {
        return Ok(serde_json::Value::String(s));
    }
    if let Ok(list) = value.cast::<PyList>() {
        let mut items = Vec::new();
        for item in list.iter() {
            items.push(py_to_json(&item)?);
        }
        return Ok(serde_json::Value::Array(items));
    }
    if let Ok(dict) = value.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, py_to_json(&v)?);
        }
        return Ok(serde_json::Value::Object(map));
    }
    Err(PyValueError::new_err(format!(
        "cannot convert {} to JSON",
        value.get_type().name()?
    )))
}

/// Column typing of a tabular dataset.
#[pyclass(name = "Schema", skip_from_py_object)]
#[derive(Clone)]
struct PySchema {
    inner: data::TabularSchema,
}

#[pymethods]
impl PySchema {
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Self {
            inner: data::TabularSchema::from_json(json).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::TabularSchema::from_path(&path).map_err(to_py_err)?,
        })
    }

    fn class_count(&self) -> usize {
        self.inner.class_count()
    }
}

/// Parsed rows plus labels.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load_csv(path: PathBuf, schema: &PySchema) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_csv(&path, &schema.inner).map_err(to_py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    fn subset(&self, indices: Vec<usize>) -> PyDataset {
        PyDataset {
            inner: self.inner.subset(&indices),
        }
    }
}

/// Stratified (train, val, test) row indices.
#[pyfunction]
#[pyo3(signature = (dataset, seed, ratios = (0.70, 0.10, 0.20)))]
fn stratified_split(
    dataset: &PyDataset,
    seed: u64,
    ratios: (f64, f64, f64),
) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let m = data::stratified_split(&dataset.inner, ratios, seed).map_err(to_py_err)?;
    Ok((m.train, m.val, m.test))
}

/// Fitted z-score statistics and category code maps.
#[pyclass(name = "Preprocessor", skip_from_py_object)]
#[derive(Clone)]
struct PyPreprocessor {
    inner: data::Preprocessor,
}

#[pymethods]
impl PyPreprocessor {
    #[staticmethod]
    fn fit(train: &PyDataset) -> PyResult<Self> {
        Ok(Self {
            inner: data::Preprocessor::fit(&train.inner).map_err(to_py_err)?,
        })
    }

    fn transform(&self, dataset: &PyDataset, split: &str) -> PyResult<PyEncoded> {
        let tag = match split {
            "train" => SplitTag::Train,
            "val" => SplitTag::Val,
            "test" => SplitTag::Test,
            other => return Err(PyValueError::new_err(format!("unknown split `{other}`"))),
        };
        Ok(PyEncoded {
            inner: self
                .inner
                .transform(&dataset.inner, tag)
                .map_err(to_py_err)?,
        })
    }

    /// Map one encoded row (z-scored numerics, category codes) back to raw
    /// cell values in schema order.
    fn inverse_row(
        &self,
        py: Python<'_>,
        nums: Vec<f64>,
        cats: Vec<usize>,
    ) -> PyResult<Vec<Py<PyAny>>> {
        let row = self.inner.inverse_row(&nums, &cats).map_err(to_py_err)?;
        row.into_iter()
            .map(|v| {
                Ok(match v {
                    data::RawValue::Num(x) => x.into_pyobject(py)?.unbind().into_any(),
                    data::RawValue::Cat(s) => s.into_pyobject(py)?.unbind().into_any(),
                })
            })
            .collect()
    }
}

/// Encoded split: z-scored numerics, category codes, class labels.
#[pyclass(name = "Encoded", skip_from_py_object)]
#[derive(Clone)]
struct PyEncoded {
    inner: data::EncodedDataset,
}

#[pymethods]
impl PyEncoded {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn num_row(&self, i: usize) -> Vec<f64> {
        self.inner.num.row(i)
    }

    fn cat_row(&self, i: usize) -> Vec<usize> {
        self.inner.cat[i].clone()
    }

    fn label(&self, i: usize) -> usize {
        self.inner.y[i]
    }
}

/// A trained target classifier (MLP or soft decision tree).
#[pyclass(name = "TargetModel")]
struct PyTargetModel {
    inner: TargetModel,
}

fn train_config(epochs: usize, lr: f64, batch: usize, seed: u64, patience: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr,
        batch,
        seed,
        patience,
    }
}

#[pymethods]
impl PyTargetModel {
    /// Train an MLP on encoded splits.
    #[staticmethod]
    #[pyo3(signature = (train, val, hidden = vec![64, 32], epochs = 100, lr = 1e-3, batch = 128, seed = 0, patience = 10))]
    #[allow(clippy::too_many_arguments)]
    fn train_mlp(
        train: &PyEncoded,
        val: &PyEncoded,
        hidden: Vec<usize>,
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
        patience: usize,
    ) -> PyResult<Self> {
        use rand::SeedableRng;
        let spec = InputSpec {
            num_dim: train.inner.num_dim(),
            cat_cardinalities: infer_cardinalities(&train.inner),
            one_hot: true,
            class_count: train.inner.y.iter().copied().max().unwrap_or(0) + 1,
        };
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut model = TargetModel::Mlp(MlpModel::new(spec, &MlpConfig { hidden }, &mut rng));
        models::train_target(
            &mut model,
            &train.inner,
            &val.inner,
            &train_config(epochs, lr, batch, seed, patience),
        )
        .map_err(to_py_err)?;
        Ok(Self { inner: model })
    }

    /// Train a soft decision tree on encoded splits.
    #[staticmethod]
    #[pyo3(signature = (train, val, depth = 4, epochs = 100, lr = 1e-3, batch = 128, seed = 0, patience = 10))]
    #[allow(clippy::too_many_arguments)]
    fn train_sdt(
        train: &PyEncoded,
        val: &PyEncoded,
        depth: usize,
        epochs: usize,
        lr: f64,
        batch: usize,
        seed: u64,
        patience: usize,
    ) -> PyResult<Self> {
        use rand::SeedableRng;
        let spec = InputSpec {
            num_dim: train.inner.num_dim(),
            cat_cardinalities: infer_cardinalities(&train.inner),
            one_hot: true,
            class_count: train.inner.y.iter().copied().max().unwrap_or(0) + 1,
        };
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut model = TargetModel::Sdt(
            SdtModel::new(spec, &SdtConfig { depth }, &mut rng).map_err(to_py_err)?,
        );
        models::train_target(
            &mut model,
            &train.inner,
            &val.inner,
            &train_config(epochs, lr, batch, seed, patience),
        )
        .map_err(to_py_err)?;
        Ok(Self { inner: model })
    }

    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn accuracy(&self, data: &PyEncoded) -> PyResult<f64> {
        Ok(models::evaluate(&self.inner, &data.inner)
            .map_err(to_py_err)?
            .accuracy)
    }

    fn predict(&self, data: &PyEncoded) -> PyResult<Vec<usize>> {
        self.inner.predict(&data.inner).map_err(to_py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner
            .save(&path, serde_json::json!({}))
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: TargetModel::load(&path).map_err(to_py_err)?,
        })
    }
}

fn infer_cardinalities(data: &data::EncodedDataset) -> Vec<usize> {
    let m = data.cat_dim();
    (0..m)
        .map(|j| data.cat.iter().map(|row| row[j]).max().unwrap_or(0) + 1)
        .collect()
}

/// The mixed-input VAE with classification head.
#[pyclass(name = "Vae")]
struct PyVae {
    inner: VaeModel,
}

#[pymethods]
impl PyVae {
    /// Train a VAE on an encoded dataset (typically train + validation).
    #[staticmethod]
    #[pyo3(signature = (train, cardinalities, class_count, encode_widths = vec![64, 32],
                        latent_dim = 8, epochs = 100, kl_weight = 1e-2, cls_weight = 1.0,
                        lr = 1e-2, batch = 512, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        train: &PyEncoded,
        cardinalities: Vec<usize>,
        class_count: usize,
        encode_widths: Vec<usize>,
        latent_dim: usize,
        epochs: usize,
        kl_weight: f64,
        cls_weight: f64,
        lr: f64,
        batch: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let mut model = VaeModel::new(
            train.inner.num_dim(),
            cardinalities,
            class_count,
            VaeConfig {
                encode_widths,
                latent_dim,
                epochs,
                kl_weight,
                cls_weight,
                lr,
                batch,
                seed,
            },
        )
        .map_err(to_py_err)?;
        vae::train_vae(&mut model, &train.inner, None, None).map_err(to_py_err)?;
        Ok(Self { inner: model })
    }

    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    /// Inference-mode encoder means for a whole encoded split.
    fn encode_mu(&self, data: &PyEncoded) -> PyResult<Vec<Vec<f64>>> {
        let mu = self
            .inner
            .encode_mu(&data.inner.num, &data.inner.cat)
            .map_err(to_py_err)?;
        Ok((0..data.inner.len()).map(|i| mu.row(i)).collect())
    }

    /// Deterministic reconstruction of an encoded split, in encoded space.
    #[allow(clippy::type_complexity)]
    fn reconstruct(&self, data: &PyEncoded) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<usize>>)> {
        let (num, codes) = self
            .inner
            .reconstruct_encoded(&data.inner)
            .map_err(to_py_err)?;
        Ok(((0..data.inner.len()).map(|i| num.row(i)).collect(), codes))
    }

    fn latent_classifier_accuracy(&self, data: &PyEncoded) -> PyResult<f64> {
        vae::latent_classifier_accuracy(&self.inner, &data.inner).map_err(to_py_err)
    }

    fn save(&self, path: PathBuf, stats: Option<&PyLatentStats>) -> PyResult<()> {
        self.inner
            .save(&path, stats.map(|s| &s.inner), serde_json::json!({}))
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Self, Option<PyLatentStats>)> {
        let (model, stats) = VaeModel::load(&path).map_err(to_py_err)?;
        Ok((
            Self { inner: model },
            stats.map(|inner| PyLatentStats { inner }),
        ))
    }
}

/// Latent mean/covariance statistics of the training split.
#[pyclass(name = "LatentStats", skip_from_py_object)]
#[derive(Clone)]
struct PyLatentStats {
    inner: vae::LatentStats,
}

#[pymethods]
impl PyLatentStats {
    #[staticmethod]
    fn fit(vae_model: &PyVae, train: &PyEncoded) -> PyResult<Self> {
        Ok(Self {
            inner: vae::fit_latent_stats(&vae_model.inner, &train.inner).map_err(to_py_err)?,
        })
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean.clone()
    }

    fn mahalanobis(&self, z: Vec<f64>) -> f64 {
        metrics::mahalanobis(&z, &self.inner)
    }
}

/// Run one attack on one encoded sample; `config` mirrors the attack-config
/// JSON (kind, epsilon, iterations, learning_rate, lambda, ...).
#[pyfunction]
#[pyo3(signature = (model, prep, sample_num, sample_cat, label, config, vae_model = None, index = 0))]
#[allow(clippy::too_many_arguments)]
fn attack<'py>(
    py: Python<'py>,
    model: &PyTargetModel,
    prep: &PyPreprocessor,
    sample_num: Vec<f64>,
    sample_cat: Vec<usize>,
    label: usize,
    config: &Bound<'py, PyAny>,
    vae_model: Option<&PyVae>,
    index: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let config: AttackConfig = serde_json::from_value(py_to_json(config)?)
        .map_err(|e| PyValueError::new_err(format!("invalid attack config: {e}")))?;
    let row = EncodedRow {
        num: sample_num,
        cat: sample_cat,
    };
    let outcome = attack_sample(
        vae_model.map(|v| &v.inner),
        &model.inner,
        &prep.inner,
        index,
        &row,
        label,
        &config,
    )
    .map_err(to_py_err)?;
    json_to_py(py, &serde_json::to_value(&outcome).unwrap())
}

/// Aggregate attack outcomes (as returned by `attack`) into ASR, outlier
/// rate, IDSR, and sparsity metrics.
#[pyfunction]
#[pyo3(signature = (outcomes, stats, md_rule = "paper", asr_rule = "vs_true_label"))]
fn campaign_report<'py>(
    py: Python<'py>,
    outcomes: &Bound<'py, PyList>,
    stats: &PyLatentStats,
    md_rule: &str,
    asr_rule: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let parsed: Vec<AttackOutcome> = outcomes
        .iter()
        .map(|o| {
            serde_json::from_value(py_to_json(&o)?)
                .map_err(|e| PyValueError::new_err(format!("invalid outcome: {e}")))
        })
        .collect::<PyResult<_>>()?;
    let md_rule = match md_rule {
        "paper" => MdRule::Paper,
        "squared" => MdRule::Squared,
        other => return Err(PyValueError::new_err(format!("unknown md_rule `{other}`"))),
    };
    let asr_rule = match asr_rule {
        "vs_true_label" => AsrRule::VsTrueLabel,
        "flipped_only" => AsrRule::FlippedOnly,
        other => return Err(PyValueError::new_err(format!("unknown asr_rule `{other}`"))),
    };
    let report =
        metrics::campaign_report(&parsed, &stats.inner, md_rule, asr_rule).map_err(to_py_err)?;
    let mut value = serde_json::to_value(&report).unwrap();
    value["idsr"] = serde_json::json!(report.idsr());
    json_to_py(py, &value)
}

/// Reconstruction-quality report of a VAE against a target model.
#[pyfunction]
fn recon_report<'py>(
    py: Python<'py>,
    model: &PyTargetModel,
    vae_model: &PyVae,
    split: &PyEncoded,
) -> PyResult<Bound<'py, PyAny>> {
    let report =
        metrics::recon_report(&model.inner, &vae_model.inner, &split.inner).map_err(to_py_err)?;
    json_to_py(py, &serde_json::to_value(report).unwrap())
}

/// Inverse CDF of the chi-squared distribution.
#[pyfunction]
fn chi2_quantile(p: f64, k: usize) -> PyResult<f64> {
    metrics::chi2_quantile(p, k).map_err(to_py_err)
}

#[pymodule]
fn tabattack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPreprocessor>()?;
    m.add_class::<PyEncoded>()?;
    m.add_class::<PyTargetModel>()?;
    m.add_class::<PyVae>()?;
    m.add_class::<PyLatentStats>()?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(campaign_report, m)?)?;
    m.add_function(wrap_pyfunction!(recon_report, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_quantile, m)?)?;
    Ok(())
}
