//! Pipeline stages: preprocess, train, attack, report, sweep. Every output
//! embeds the canonical config hash; stages refuse to mix artifacts from
//! different configurations.

use crate::attacks::{attack_sample, AttackConfig, AttackKind, AttackOutcome, EncodedRow};
use crate::data::{
    load_csv, stratified_split, Dataset, EncodedDataset, Preprocessor, SplitManifest, SplitTag,
};
use crate::driver::config::{RunConfig, SweepConfig, TargetConfig};
use crate::driver::hash::config_hash;
use crate::error::{Error, Result};
use crate::logging::{log_debug, log_info, log_warn};
use crate::metrics::{campaign_report, pca_project, recon_report, CampaignReport, ReconReport};
use crate::models::{
    evaluate, train_target, InputSpec, MlpConfig, MlpModel, SdtConfig, SdtModel, TargetModel,
};
use crate::vae::{fit_latent_stats, train_vae, LatentStats, VaeModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Output-file layout of one experiment directory.
pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Self {
            out: out.to_path_buf(),
        }
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
    pub fn preprocessor(&self) -> PathBuf {
        self.out.join("preprocessor.json")
    }
    pub fn encoded(&self, split: &str) -> PathBuf {
        self.out.join(format!("encoded_{split}.json"))
    }
    pub fn target_ckpt(&self, kind: &str) -> PathBuf {
        self.out.join(format!("target_{kind}.ckpt"))
    }
    pub fn target_history(&self, kind: &str) -> PathBuf {
        self.out.join(format!("target_{kind}_history.csv"))
    }
    pub fn vae_ckpt(&self) -> PathBuf {
        self.out.join("vae.ckpt")
    }
    pub fn vae_history(&self) -> PathBuf {
        self.out.join("vae_history.csv")
    }
    pub fn outcomes(&self, model: &str, attack: &str) -> PathBuf {
        self.out.join(format!("outcomes_{model}_{attack}.jsonl"))
    }
    pub fn attacks_summary(&self) -> PathBuf {
        self.out.join("attacks_summary.json")
    }
    pub fn report_json(&self) -> PathBuf {
        self.out.join("report.json")
    }
    pub fn report_csv(&self, which: &str) -> PathBuf {
        self.out.join(format!("report_{which}.csv"))
    }
    pub fn latents_csv(&self, model: &str, attack: &str) -> PathBuf {
        self.out.join(format!("latents_{model}_{attack}.csv"))
    }
    pub fn sweep_csv(&self, kind: &str) -> PathBuf {
        self.out.join(format!("sweep_{kind}.csv"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    config_hash: String,
    #[serde(flatten)]
    manifest: SplitManifest,
}

#[derive(Debug, Serialize, Deserialize)]
struct PreprocessorFile {
    config_hash: String,
    preprocessor: Preprocessor,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedFile {
    config_hash: String,
    split: String,
    num: Vec<Vec<f64>>,
    cat: Vec<Vec<usize>>,
    y: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRunEntry {
    pub model: String,
    pub attack: String,
    pub outcomes_file: Option<String>,
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AttacksSummary {
    pub config_hash: String,
    pub runs: Vec<AttackRunEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("missing artifact {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_hash(stage: &str, stored: &str, current: &str) -> Result<()> {
    if stored != current {
        return Err(Error::Config(format!(
            "{stage}: artifact was produced under config {stored}, current config is {current}"
        )));
    }
    Ok(())
}

/// Lineage hash: the canonical config hash with consumer-stage and
/// location-only options normalised away. Thread counts never change
/// results, the MD/ASR rules only affect how a report reads outcomes, sweep
/// settings only shape the sweep stage's own output, and the output
/// directory is where results live, not what they are.
pub fn lineage_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.evaluation.threads = 0;
    c.evaluation.md_rule = crate::metrics::MdRule::default();
    c.evaluation.asr_rule = crate::metrics::AsrRule::default();
    c.sweep = None;
    c.output_dir = std::path::PathBuf::new();
    config_hash(&c)
}

/// Load the raw dataset and replay the split exactly as recorded.
fn load_splits(
    config: &RunConfig,
    hash: &str,
    paths: &Paths,
) -> Result<(Dataset, SplitManifest, Preprocessor)> {
    let schema = crate::data::TabularSchema::from_path(&config.dataset.schema)?;
    let dataset = load_csv(&config.dataset.csv, &schema)?;
    let manifest_file: ManifestFile = read_json(&paths.manifest())?;
    check_hash("split manifest", &manifest_file.config_hash, hash)?;
    let prep_file: PreprocessorFile = read_json(&paths.preprocessor())?;
    check_hash("preprocessor", &prep_file.config_hash, hash)?;
    Ok((dataset, manifest_file.manifest, prep_file.preprocessor))
}

fn encode_splits(
    dataset: &Dataset,
    manifest: &SplitManifest,
    prep: &Preprocessor,
) -> Result<(EncodedDataset, EncodedDataset, EncodedDataset)> {
    let train = prep.transform(&dataset.subset(&manifest.train), SplitTag::Train)?;
    let val = prep.transform(&dataset.subset(&manifest.val), SplitTag::Val)?;
    let test = prep.transform(&dataset.subset(&manifest.test), SplitTag::Test)?;
    Ok((train, val, test))
}

/// Stage 1: ingest, split, fit the preprocessor, write all artifacts.
pub fn run_preprocess(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    std::fs::create_dir_all(&paths.out)?;

    let schema = crate::data::TabularSchema::from_path(&config.dataset.schema)?;
    let dataset = load_csv(&config.dataset.csv, &schema)?;
    log_info(&format!(
        "loaded {} rows, {} classes",
        dataset.len(),
        dataset.schema.class_count()
    ));
    let manifest = stratified_split(&dataset, config.dataset.ratios, config.dataset.seed)?;
    let prep = Preprocessor::fit(&dataset.subset(&manifest.train))?;
    let (train, val, test) = encode_splits(&dataset, &manifest, &prep)?;

    write_json(
        &paths.manifest(),
        &ManifestFile {
            config_hash: hash.clone(),
            manifest: manifest.clone(),
        },
    )?;
    write_json(
        &paths.preprocessor(),
        &PreprocessorFile {
            config_hash: hash.clone(),
            preprocessor: prep,
        },
    )?;
    for (name, enc) in [("train", &train), ("val", &val), ("test", &test)] {
        let rows = (0..enc.len()).map(|i| enc.num.row(i)).collect();
        write_json(
            &paths.encoded(name),
            &EncodedFile {
                config_hash: hash.clone(),
                split: name.to_string(),
                num: rows,
                cat: enc.cat.clone(),
                y: enc.y.clone(),
            },
        )?;
    }
    log_info(&format!(
        "splits: train {} / val {} / test {}",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    ));
    Ok(())
}

fn build_target(config: &TargetConfig, spec: InputSpec, seed: u64) -> Result<TargetModel> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(match config {
        TargetConfig::Mlp { arch, .. } => TargetModel::Mlp(MlpModel::new(
            spec,
            &MlpConfig {
                hidden: arch.hidden.clone(),
            },
            &mut rng,
        )),
        TargetConfig::Sdt { arch, .. } => TargetModel::Sdt(SdtModel::new(
            spec,
            &SdtConfig { depth: arch.depth },
            &mut rng,
        )?),
    })
}

/// Stage 2a: train the requested target models (all configured kinds when
/// `kind` is `None`).
pub fn run_train_target(config: &RunConfig, kind: Option<&str>) -> Result<()> {
    config.validate()?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    let (dataset, manifest, prep) = load_splits(config, &hash, &paths)?;
    let (train, val, _) = encode_splits(&dataset, &manifest, &prep)?;

    for target_cfg in &config.targets {
        if let Some(k) = kind {
            if k != target_cfg.kind() {
                continue;
            }
        }
        let spec = InputSpec {
            num_dim: prep.num_dim(),
            cat_cardinalities: prep.cardinalities(),
            one_hot: true,
            class_count: prep.class_count(),
        };
        let mut model = build_target(target_cfg, spec, target_cfg.train().seed)?;
        let history = train_target(&mut model, &train, &val, target_cfg.train())?;
        let eval = evaluate(&model, &val)?;
        log_info(&format!(
            "{}: val accuracy {:.4} after {} epochs",
            target_cfg.kind(),
            eval.accuracy,
            history.len()
        ));
        model.save(
            &paths.target_ckpt(target_cfg.kind()),
            serde_json::json!({
                "config_hash": hash,
                "train": target_cfg.train(),
                "val_accuracy": eval.accuracy,
            }),
        )?;
        let mut csv = String::from("epoch,loss,val_acc\n");
        for row in &history {
            csv.push_str(&format!(
                "{},{:.6},{:.6}\n",
                row.epoch, row.loss, row.val_accuracy
            ));
        }
        write_csv(&paths.target_history(target_cfg.kind()), &hash, &csv)?;
    }
    Ok(())
}

/// Stage 2b: train the VAE on train + validation, fit latent statistics on
/// the training split, and checkpoint both.
pub fn run_train_vae(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    let (dataset, manifest, prep) = load_splits(config, &hash, &paths)?;
    let (train, val, _) = encode_splits(&dataset, &manifest, &prep)?;

    let mut vae = VaeModel::new(
        prep.num_dim(),
        prep.cardinalities(),
        prep.class_count(),
        config.vae.clone(),
    )?;
    // Train on train + validation; the validation split still feeds the
    // latent-classifier accuracy column.
    let combined = concat_encoded(&train, &val)?;
    let history = train_vae(&mut vae, &combined, Some(&val), None)?;
    let stats = fit_latent_stats(&vae, &train)?;
    log_info(&format!(
        "vae trained: final loss {:.5}, latent dim {}",
        history.last().map_or(f64::NAN, |h| h.total),
        vae.latent_dim()
    ));
    vae.save(
        &paths.vae_ckpt(),
        Some(&stats),
        serde_json::json!({
            "config_hash": hash,
            "config": config.vae,
        }),
    )?;
    let mut csv = String::from("epoch,total,recon_num,recon_cat,kl,cls,val_acc\n");
    for row in &history {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            row.epoch, row.total, row.recon_num, row.recon_cat, row.kl, row.cls, row.val_acc
        ));
    }
    write_csv(&paths.vae_history(), &hash, &csv)?;
    Ok(())
}

fn concat_encoded(a: &EncodedDataset, b: &EncodedDataset) -> Result<EncodedDataset> {
    let mut num = a.num.data().to_vec();
    num.extend_from_slice(b.num.data());
    let mut cat = a.cat.clone();
    cat.extend(b.cat.iter().cloned());
    let mut y = a.y.clone();
    y.extend(&b.y);
    Ok(EncodedDataset {
        num: crate::numerics::Tensor::new(vec![a.len() + b.len(), a.num_dim()], num)?,
        cat,
        y,
        split: a.split,
    })
}

fn load_vae(paths: &Paths, hash: &str) -> Result<(VaeModel, LatentStats)> {
    let (vae, stats) = VaeModel::load(&paths.vae_ckpt())?;
    let container = crate::checkpoint::Container::load(&paths.vae_ckpt())?;
    let stored = container.header.metadata["config_hash"]
        .as_str()
        .unwrap_or("")
        .to_string();
    check_hash("vae checkpoint", &stored, hash)?;
    let stats = stats.ok_or_else(|| {
        Error::Checkpoint("vae checkpoint lacks latent statistics; rerun train-vae".into())
    })?;
    Ok((vae, stats))
}

fn load_target(paths: &Paths, kind: &str, hash: &str) -> Result<TargetModel> {
    let container = crate::checkpoint::Container::load(&paths.target_ckpt(kind))?;
    let stored = container.header.metadata["config_hash"]
        .as_str()
        .unwrap_or("")
        .to_string();
    check_hash("target checkpoint", &stored, hash)?;
    TargetModel::from_container(&container)
}

/// Draw the attacked sample positions from the test split: a seeded shuffle,
/// optionally stratified for equal class representation, optionally
/// restricted to samples the target classifies correctly.
pub fn select_samples(
    test: &EncodedDataset,
    model: &TargetModel,
    requested: usize,
    class_balanced: bool,
    restrict_to_correct: bool,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = (0..test.len()).collect();
    if restrict_to_correct {
        let preds = model.predict(test)?;
        candidates.retain(|&i| preds[i] == test.y[i]);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let n = requested.min(candidates.len());
    if n < requested {
        log_warn(&format!(
            "test split provides only {n} samples (requested {requested}); using all of them"
        ));
    }
    if !class_balanced {
        let mut chosen = candidates[..n].to_vec();
        chosen.sort_unstable();
        return Ok(chosen);
    }
    // Round-robin over per-class queues in shuffled order.
    let classes = test.y.iter().copied().max().unwrap_or(0) + 1;
    let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); classes];
    for &i in &candidates {
        queues[test.y[i]].push_back(i);
    }
    let mut chosen = Vec::with_capacity(n);
    'outer: loop {
        let mut any = false;
        for queue in &mut queues {
            if let Some(i) = queue.pop_front() {
                chosen.push(i);
                any = true;
                if chosen.len() == n {
                    break 'outer;
                }
            }
        }
        if !any {
            break;
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn run_campaign(
    vae: &VaeModel,
    model: &TargetModel,
    prep: &Preprocessor,
    test: &EncodedDataset,
    samples: &[usize],
    attack: &AttackConfig,
    threads: usize,
) -> Result<Vec<AttackOutcome>> {
    let rows: Vec<(usize, EncodedRow, usize)> = samples
        .iter()
        .map(|&i| {
            (
                i,
                EncodedRow {
                    num: test.num.row(i),
                    cat: test.cat[i].clone(),
                },
                test.y[i],
            )
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        rows.par_iter()
            .map(|(i, row, y)| attack_sample(Some(vae), model, prep, *i, row, *y, attack))
            .collect::<Result<Vec<_>>>()
    })
}

/// Stage 3: run every configured (target, attack) campaign over the sampled
/// test rows, writing one JSON-lines file per campaign.
pub fn run_attack(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    let (dataset, manifest, prep) = load_splits(config, &hash, &paths)?;
    let (_, _, test) = encode_splits(&dataset, &manifest, &prep)?;
    let (vae, _) = load_vae(&paths, &hash)?;

    let mut runs = Vec::new();
    for target_cfg in &config.targets {
        let model = load_target(&paths, target_cfg.kind(), &hash)?;
        let samples = select_samples(
            &test,
            &model,
            config.evaluation.sample_count,
            config.evaluation.class_balanced,
            config.evaluation.restrict_to_correct,
            config.eval_seed(),
        )?;
        for attack in &config.attacks {
            let name = attack.kind.name();
            // Attacks that cannot run on this task are annotated skips, not
            // failures.
            if attack.kind == AttackKind::DeltaZ && model.class_count() != 2 {
                log_warn(&format!(
                    "skipping deltaz on {}: {} classes",
                    target_cfg.kind(),
                    model.class_count()
                ));
                runs.push(AttackRunEntry {
                    model: target_cfg.kind().into(),
                    attack: name.into(),
                    outcomes_file: None,
                    skipped: true,
                    reason: Some("deltaz supports binary classification only".into()),
                    n: 0,
                });
                continue;
            }
            log_info(&format!(
                "attacking {} with {} on {} samples",
                target_cfg.kind(),
                name,
                samples.len()
            ));
            let outcomes = run_campaign(
                &vae,
                &model,
                &prep,
                &test,
                &samples,
                attack,
                config.evaluation.threads,
            )?;
            let file = paths.outcomes(target_cfg.kind(), name);
            let mut w = std::io::BufWriter::new(std::fs::File::create(&file)?);
            crate::attacks::write_outcomes(&outcomes, &mut w)?;
            runs.push(AttackRunEntry {
                model: target_cfg.kind().into(),
                attack: name.into(),
                outcomes_file: Some(file.file_name().unwrap().to_string_lossy().into_owned()),
                skipped: false,
                reason: None,
                n: outcomes.len(),
            });
        }
    }
    write_json(
        &paths.attacks_summary(),
        &AttacksSummary {
            config_hash: hash,
            runs,
        },
    )?;
    Ok(())
}

/// Everything the report stage produces, also serialised as `report.json`.
#[derive(Debug, Serialize)]
pub struct FullReport {
    pub config_hash: String,
    pub seed: u64,
    pub md_rule: crate::metrics::MdRule,
    pub asr_rule: crate::metrics::AsrRule,
    pub reconstruction: BTreeMap<String, ReconReport>,
    pub campaigns: Vec<CampaignRow>,
    pub gaps: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CampaignRow {
    pub model: String,
    pub attack: String,
    #[serde(flatten)]
    pub report: CampaignReport,
    pub idsr: f64,
}

/// Stage 4: aggregate outcomes into the metric tables and latent scatter
/// exports.
pub fn run_report(config: &RunConfig) -> Result<FullReport> {
    config.validate()?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    let (dataset, manifest, prep) = load_splits(config, &hash, &paths)?;
    let (_, _, test) = encode_splits(&dataset, &manifest, &prep)?;
    let (vae, stats) = load_vae(&paths, &hash)?;

    let mut reconstruction = BTreeMap::new();
    for target_cfg in &config.targets {
        let model = load_target(&paths, target_cfg.kind(), &hash)?;
        reconstruction.insert(
            target_cfg.kind().to_string(),
            recon_report(&model, &vae, &test)?,
        );
    }

    let summary: AttacksSummary = read_json(&paths.attacks_summary())?;
    check_hash("attacks summary", &summary.config_hash, &hash)?;

    let mut campaigns = Vec::new();
    let mut gaps = Vec::new();
    for run in &summary.runs {
        if run.skipped {
            gaps.push(format!(
                "{} / {}: skipped ({})",
                run.model,
                run.attack,
                run.reason.clone().unwrap_or_default()
            ));
            continue;
        }
        let file = paths.outcomes(&run.model, &run.attack);
        if !file.exists() {
            gaps.push(format!(
                "{} / {}: outcomes file missing",
                run.model, run.attack
            ));
            continue;
        }
        let outcomes =
            crate::attacks::read_outcomes(std::io::BufReader::new(std::fs::File::open(&file)?))?;
        let report = campaign_report(
            &outcomes,
            &stats,
            config.evaluation.md_rule,
            config.evaluation.asr_rule,
        )?;
        write_latent_scatter(&paths, &hash, &vae, &run.model, &run.attack, &outcomes)?;
        campaigns.push(CampaignRow {
            model: run.model.clone(),
            attack: run.attack.clone(),
            idsr: report.idsr(),
            report,
        });
    }

    // CSV tables mirroring the evaluation suite's shapes.
    let mut recon_csv = String::from("model,delta_acc,mse,r2,cosine,pearson,cat_acc\n");
    for (model, r) in &reconstruction {
        recon_csv.push_str(&format!(
            "{model},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.delta_acc,
            r.mse,
            r.r2,
            r.cosine,
            r.pearson,
            r.cat_acc.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        ));
    }
    write_csv(&paths.report_csv("recon"), &hash, &recon_csv)?;

    let mut eff_csv = String::from("model,attack,n,asr\n");
    for row in &campaigns {
        eff_csv.push_str(&format!(
            "{},{},{},{:.6}\n",
            row.model, row.attack, row.report.n, row.report.asr
        ));
    }
    write_csv(&paths.report_csv("effectiveness"), &hash, &eff_csv)?;

    let mut imp_csv = String::from("model,attack,asr,outlier_rate,idsr,md_rule\n");
    for row in &campaigns {
        imp_csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            row.model,
            row.attack,
            row.report.asr,
            row.report.outlier_rate,
            row.idsr,
            match row.report.md_rule {
                crate::metrics::MdRule::Paper => "paper",
                crate::metrics::MdRule::Squared => "squared",
            }
        ));
    }
    write_csv(&paths.report_csv("imperceptibility"), &hash, &imp_csv)?;

    let mut sparsity_csv =
        String::from("model,attack,mean_l0,sparsity_rate,mean_l1_encoded,mean_l2_delta\n");
    for row in &campaigns {
        sparsity_csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            row.model,
            row.attack,
            row.report.mean_l0,
            row.report.sparsity_rate,
            row.report.mean_l1_encoded,
            row.report
                .mean_l2_delta
                .map_or("n/a".to_string(), |v| format!("{v:.6}")),
        ));
    }
    write_csv(&paths.report_csv("sparsity"), &hash, &sparsity_csv)?;

    let report = FullReport {
        config_hash: hash,
        seed: config.dataset.seed,
        md_rule: config.evaluation.md_rule,
        asr_rule: config.evaluation.asr_rule,
        reconstruction,
        campaigns,
        gaps,
    };
    write_json(&paths.report_json(), &report)?;
    if !report.gaps.is_empty() {
        for gap in &report.gaps {
            log_warn(&format!("report gap: {gap}"));
        }
    }
    Ok(report)
}

/// PCA scatter of original vs adversarial latents for one campaign.
fn write_latent_scatter(
    paths: &Paths,
    hash: &str,
    vae: &VaeModel,
    model: &str,
    attack: &str,
    outcomes: &[AttackOutcome],
) -> Result<()> {
    let k = vae.latent_dim();
    let mut originals = Vec::with_capacity(outcomes.len() * k);
    let mut adversarial = Vec::with_capacity(outcomes.len() * k);
    for o in outcomes {
        let num =
            crate::numerics::Tensor::new(vec![1, o.original.num.len()], o.original.num.clone())?;
        let mu = vae.encode_mu(&num, std::slice::from_ref(&o.original.cat))?;
        originals.extend_from_slice(mu.data());
        match &o.latent_adv {
            Some(z) => adversarial.extend_from_slice(z),
            None => adversarial.extend_from_slice(mu.data()),
        }
    }
    let mut all = originals.clone();
    all.extend_from_slice(&adversarial);
    let n = outcomes.len();
    let (coords, _) = pca_project(&all, 2 * n, k)?;
    let mut csv = String::from("set,pc1,pc2\n");
    for (i, c) in coords.iter().enumerate() {
        let set = if i < n { "original" } else { "adversarial" };
        csv.push_str(&format!("{set},{:.6},{:.6}\n", c[0], c[1]));
    }
    write_csv(&paths.latents_csv(model, attack), hash, &csv)
}

fn write_csv(path: &Path, hash: &str, body: &str) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# config_hash={hash}")?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Stage 5: hyperparameter or sparsity sweeps over a fixed sample set.
pub fn run_sweep(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let hash = lineage_hash(config);
    let paths = Paths::new(&config.output_dir);
    let (dataset, manifest, prep) = load_splits(config, &hash, &paths)?;
    let (_, _, test) = encode_splits(&dataset, &manifest, &prep)?;
    let (vae, _) = load_vae(&paths, &hash)?;

    let pick_target = |wanted: &Option<String>| -> Result<TargetModel> {
        let kind = wanted
            .clone()
            .unwrap_or_else(|| config.targets[0].kind().to_string());
        load_target(&paths, &kind, &hash)
    };

    match sweep {
        SweepConfig::LambdaEta {
            lambdas,
            etas,
            target,
            iterations,
        } => {
            let model = pick_target(target)?;
            let samples = select_samples(
                &test,
                &model,
                config.evaluation.sample_count,
                config.evaluation.class_balanced,
                config.evaluation.restrict_to_correct,
                config.eval_seed(),
            )?;
            let mut csv = String::from("lambda,eta,asr,mean_l2_delta\n");
            for &lambda in lambdas {
                for &eta in etas {
                    let mut attack = AttackConfig::new(AttackKind::LatentCw);
                    attack.lambda = lambda;
                    attack.learning_rate = eta;
                    attack.iterations = *iterations;
                    let outcomes = run_campaign(
                        &vae,
                        &model,
                        &prep,
                        &test,
                        &samples,
                        &attack,
                        config.evaluation.threads,
                    )?;
                    let n = outcomes.len().max(1) as f64;
                    let asr = outcomes
                        .iter()
                        .filter(|o| o.pred_adversarial != o.true_label)
                        .count() as f64
                        / n;
                    let mean_l2 = outcomes.iter().filter_map(|o| o.l2_delta).sum::<f64>() / n;
                    log_debug(&format!(
                        "sweep λ={lambda} η={eta}: asr {asr:.3}, mean ℓ2 {mean_l2:.4}"
                    ));
                    csv.push_str(&format!("{lambda},{eta},{asr:.6},{mean_l2:.6}\n"));
                }
            }
            write_csv(&paths.sweep_csv("lambda_eta"), &hash, &csv)?;
        }
        SweepConfig::L1 { weights, target } | SweepConfig::L0Sigmoid { weights, target } => {
            let (kind, label) = match sweep {
                SweepConfig::L1 { .. } => (AttackKind::LatentCwL1, "l1"),
                _ => (AttackKind::LatentCwL0, "l0_sigmoid"),
            };
            let model = pick_target(target)?;
            let samples = select_samples(
                &test,
                &model,
                config.evaluation.sample_count,
                config.evaluation.class_balanced,
                config.evaluation.restrict_to_correct,
                config.eval_seed(),
            )?;
            let mut csv = String::from("weight,asr,mean_l0,mean_l1_encoded,sparsity_rate\n");
            for &weight in weights {
                let mut attack = AttackConfig::new(kind);
                attack.sparsity_weight = weight;
                let outcomes = run_campaign(
                    &vae,
                    &model,
                    &prep,
                    &test,
                    &samples,
                    &attack,
                    config.evaluation.threads,
                )?;
                let n = outcomes.len().max(1) as f64;
                let asr = outcomes
                    .iter()
                    .filter(|o| o.pred_adversarial != o.true_label)
                    .count() as f64
                    / n;
                let s = crate::metrics::sparsity_metrics(&outcomes);
                csv.push_str(&format!(
                    "{weight},{asr:.6},{:.6},{:.6},{:.6}\n",
                    s.mean_l0, s.mean_l1_encoded, s.sparsity_rate
                ));
            }
            write_csv(&paths.sweep_csv(label), &hash, &csv)?;
        }
    }
    Ok(())
}
