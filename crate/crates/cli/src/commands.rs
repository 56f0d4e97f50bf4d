use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{Map, Value};

use tgxplain::bottleneck::{explanation_size, rank_rows};
use tgxplain::event_store::{chronological_split, ingest_csv, sample_ego, EventStream, IngestConfig, Metadata};
use tgxplain::evaluator::{embeddings_csv, evaluate, evenly_spaced, export_embeddings, EvalOptions};
use tgxplain::synthetic::{generate as gen_stream, GenConfig, PlantedTruth};
use tgxplain::trainer::{
    fit_with, load_checkpoint, read_checkpoint_header, save_checkpoint, validation_ap, ModelState, TrainConfig,
};

use crate::svg::{chart, Series, Style};
use crate::{kv, EmbedArgs, EvalArgs, ExplainArgs, GenerateArgs, OutArgs, PlotArgs, ReportArgs, TrainArgs};

pub const EVENTS_FILE: &str = "events.csv";
pub const METADATA_FILE: &str = "metadata.txt";
pub const TRUTH_FILE: &str = "truth.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";

/// Invalid user input; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let usage = e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<tgxplain::Error>(),
                Some(tgxplain::Error::InvalidGenConfig(_) | tgxplain::Error::Config(_) | tgxplain::Error::DegeneratePrior(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn prepare_out(out: &OutArgs) -> Result<&Path> {
    let dir = out.out.as_path();
    if dir.exists() {
        let non_empty = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?.next().is_some();
        if non_empty && !out.force {
            return Err(usage(format!("output directory {} is not empty (use --force to overwrite)", dir.display())));
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn with_file<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, file: Option<&PathBuf>) -> Result<T> {
    match file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            kv::from_str(&base, &text).map_err(|e| usage(format!("{}: {e:#}", p.display())))
        }
        None => Ok(base),
    }
}

/// Loads `events.csv` and `metadata.txt` (and `truth.txt` when present).
pub fn load_dataset(dir: &Path) -> Result<(EventStream, Option<PlantedTruth>)> {
    let meta = Metadata::read(&dir.join(METADATA_FILE))?;
    let events = dir.join(EVENTS_FILE);
    let header = fs::read_to_string(&events)
        .with_context(|| format!("reading {}", events.display()))?
        .lines()
        .next()
        .unwrap_or("")
        .to_string();
    let cfg = IngestConfig {
        has_header: true,
        has_label: header.split(',').any(|c| c.trim() == "state_label"),
        id_map: (!meta.ids.is_empty()).then(|| meta.ids.clone()),
        node_features: meta.node_features.clone(),
    };
    let stream = ingest_csv(&events, &cfg)?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = truth_path.exists().then(|| PlantedTruth::read(&truth_path)).transpose()?;
    Ok((stream, truth))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = with_file(GenConfig::default(), a.config.as_ref())?;
    macro_rules! take {
        ($($field:ident <- $arg:ident),*) => { $(if let Some(v) = a.$arg { cfg.$field = v; })* };
    }
    take!(num_nodes <- nodes, num_events <- events, repeat_ratio <- repeat_ratio, num_motif_pairs <- motif_pairs,
          transition_burst_rate <- burst_rate, noise_rate <- noise_rate, seed <- seed);
    let cfg = kv::apply(&cfg, &a.set).map_err(|e| usage(format!("{e:#}")))?;
    cfg.validate()?;
    let dir = prepare_out(&a.out)?;
    let (stream, truth) = gen_stream(&cfg)?;
    stream.write_csv(&dir.join(EVENTS_FILE))?;
    stream.write_metadata(&dir.join(METADATA_FILE))?;
    truth.write(&dir.join(TRUTH_FILE))?;
    write(&dir.join("generate_config.txt"), &kv::to_string(&cfg)?)?;
    println!("wrote {} events over {} nodes to {}", stream.len(), stream.num_nodes(), dir.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let base = if a.desk { TrainConfig::desk() } else { TrainConfig::default() };
    let mut cfg = with_file(base, a.config.as_ref())?;
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
        cfg.disc_lr = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let cfg = kv::apply(&cfg, &a.set).map_err(|e| usage(format!("{e:#}")))?;
    cfg.validate()?;

    let (stream, _) = load_dataset(&a.data)?;
    let split = chronological_split(&stream)?;
    let dir = a.out.out.clone();
    let ckpt = dir.join(CHECKPOINT_FILE);
    let state = if a.resume && ckpt.exists() {
        let state = load_checkpoint(&ckpt)?;
        if state.config != cfg {
            bail!("checkpoint {} was trained with a different configuration", ckpt.display());
        }
        state
    } else {
        prepare_out(&a.out)?;
        ModelState::new(cfg.clone(), stream.d_n(), stream.d_e())?
    };
    write(&dir.join("train_config.txt"), &kv::to_string(&cfg)?)?;
    let state = fit_with(state, &stream, &split, |st| {
        let l = st.log.last().expect("one epoch ran");
        eprintln!(
            "epoch {:>3}  l_pre {:.4}  l_com {:.4}  l_dis {:.4}  total {:.4}  val_ap {:.4}  r {}",
            l.epoch, l.l_pre, l.l_com, l.l_dis, l.total, l.val_ap, l.r
        );
        save_checkpoint(st, &ckpt)?;
        write(&dir.join("train_log.csv"), &st.log_csv()).map_err(|e| tgxplain::Error::Checkpoint(format!("{e:#}")))?;
        Ok(true)
    })?;
    save_checkpoint(&state, &ckpt)?;
    write(&dir.join("train_log.csv"), &state.log_csv())?;
    if let Some(best) = &state.best {
        println!("best epoch {} with val_ap {:.6}", best.epoch, best.val_ap);
    }
    Ok(())
}

fn check_compatible(ckpt: &Path, stream: &EventStream) -> Result<()> {
    let h = read_checkpoint_header(ckpt)?;
    if h.d_n != stream.d_n() || h.d_e != stream.d_e() {
        bail!(
            "dimension mismatch: checkpoint header has d_n={} d_e={}, dataset metadata has d_n={} d_e={}",
            h.d_n,
            h.d_e,
            stream.d_n(),
            stream.d_e()
        );
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (stream, truth) = load_dataset(&a.data)?;
    check_compatible(&a.checkpoint, &stream)?;
    let state = load_checkpoint(&a.checkpoint)?;
    let split = chronological_split(&stream)?;
    let truth = if a.with_truth {
        Some(truth.ok_or_else(|| usage(format!("--with-truth needs {TRUTH_FILE} in the dataset directory")))?)
    } else {
        None
    };
    let opts = EvalOptions {
        num_negatives: a.negatives,
        explain_limit: (a.explain_limit > 0).then_some(a.explain_limit),
        seed: a.seed,
        seen_unseen: a.seen_unseen,
    };
    let mut report = evaluate(&state.model, &stream, &split, truth.as_ref(), &opts)?;
    report.val_ap = Some(validation_ap(&state.model, &stream, &split, state.config.seed)?);
    let dir = prepare_out(&a.out)?;
    report.write(dir)?;
    println!("{}", report.to_json());
    Ok(())
}

pub fn explain(a: ExplainArgs) -> Result<()> {
    let (stream, truth) = load_dataset(&a.data)?;
    check_compatible(&a.checkpoint, &stream)?;
    if a.from >= a.to || a.to > stream.len() {
        return Err(usage(format!("event range {}..{} is empty or beyond the {} events", a.from, a.to, stream.len())));
    }
    if !(0.0..=1.0).contains(&a.sparsity) {
        return Err(usage(format!("sparsity {} outside [0, 1]", a.sparsity)));
    }
    let state = load_checkpoint(&a.checkpoint)?;
    let model = &state.model;
    let mut out = String::from("query,rank,row,event,src,dst,time_gap,p,p_f,w_s,w_t,truth\n");
    for i in a.from..a.to {
        let q = stream.events()[i].query();
        let ego = sample_ego(&stream, &q, model.config.l);
        let inputs = model.inputs(&stream, &q);
        let ins = model.inspect(&inputs)?;
        let ranked = rank_rows(&ins.p, &inputs.real);
        let k = explanation_size(a.sparsity, ranked.len());
        let mask = truth.as_ref().and_then(|t| t.truth_mask(i, &ego).ok()).map(|m| m.mask);
        for (rank, &row) in ranked[..k].iter().enumerate() {
            let e_idx = ego.event_at(row).expect("ranked rows are real");
            let e = &stream.events()[e_idx];
            let ids = stream.id_map();
            let hit = mask.as_ref().map_or(String::new(), |m| m[row].to_string());
            let _ = writeln!(
                out,
                "{i},{},{row},{e_idx},{},{},{},{},{},{},{},{hit}",
                rank + 1,
                ids[e.src as usize],
                ids[e.dst as usize],
                q.t - e.t,
                ins.p[row],
                ins.p_f[row],
                ins.w_s[row],
                ins.w_t[row]
            );
        }
    }
    write(&a.output, &out)?;
    println!("wrote explanations for {} events to {}", a.to - a.from, a.output.display());
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let (stream, _) = load_dataset(&a.data)?;
    check_compatible(&a.checkpoint, &stream)?;
    let state = load_checkpoint(&a.checkpoint)?;
    let split = chronological_split(&stream)?;
    let events = evenly_spaced(split.test.clone(), Some(a.limit));
    let rows = export_embeddings(&state.model, &stream, &events)?;
    write(&a.output, &embeddings_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), a.output.display());
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Result<Vec<f64>> {
    let j = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("missing column `{name}`"))?;
    Ok(rows.iter().map(|r| r[j].parse().unwrap_or(f64::NAN)).collect())
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let (header, rows) = read_table(&a.input)?;
    let series_of = |x: &str, ys: &[&str]| -> Result<Vec<Series>> {
        let xs = column(&header, &rows, x)?;
        ys.iter()
            .map(|y| {
                Ok(Series {
                    name: y.to_string(),
                    points: xs.iter().copied().zip(column(&header, &rows, y)?).collect(),
                })
            })
            .collect()
    };
    let svg = match header.first().map(String::as_str) {
        Some("s") => chart(
            "Fidelity vs sparsity",
            "sparsity",
            "fraction",
            &series_of("s", &["acc", "fid_plus", "fid_minus"])?,
            Style::Lines,
        ),
        Some("epoch") => chart(
            "Training log",
            "epoch",
            "value",
            &series_of("epoch", &["l_pre", "l_com", "l_dis", "total", "val_ap"])?,
            Style::Lines,
        ),
        Some("query") => {
            let pc1 = column(&header, &rows, "pc1")?;
            let pc2 = column(&header, &rows, "pc2")?;
            let j = header.iter().position(|h| h == "latent").ok_or_else(|| anyhow!("missing column `latent`"))?;
            let series: Vec<Series> = ["h_s", "h_t", "h_e"]
                .iter()
                .map(|name| Series {
                    name: name.to_string(),
                    points: rows
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r[j] == *name)
                        .map(|(i, _)| (pc1[i], pc2[i]))
                        .collect(),
                })
                .collect();
            chart("Latent projection", "pc1", "pc2", &series, Style::Points)
        }
        _ => return Err(usage(format!("{}: unrecognized CSV layout", a.input.display()))),
    };
    write(&a.output, &svg)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn numeric_leaves(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.push((prefix.to_string(), x));
            }
        }
        Value::Object(map) => {
            for (k, c) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                numeric_leaves(&key, c, out);
            }
        }
        _ => {}
    }
}

/// Mean and sample standard deviation of every numeric field across reports.
pub fn aggregate(reports: &[Value]) -> Map<String, Value> {
    let mut by_key: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in reports {
        let mut leaves = Vec::new();
        numeric_leaves("", r, &mut leaves);
        for (k, x) in leaves {
            by_key.entry(k).or_default().push(x);
        }
    }
    let mut out = Map::new();
    for (k, xs) in by_key {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.insert(k, serde_json::json!({ "mean": mean, "std": std, "n": xs.len() }));
    }
    out
}

pub fn report(a: ReportArgs) -> Result<()> {
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<Value>>>()?;
    let agg = aggregate(&reports);
    for (k, v) in &agg {
        println!("{k:<28} {:.4} ± {:.4} (n={})", v["mean"].as_f64().unwrap_or(f64::NAN), v["std"].as_f64().unwrap_or(f64::NAN), v["n"]);
    }
    if let Some(out) = &a.output {
        write(out, &serde_json::to_string_pretty(&Value::Object(agg))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_mean_and_std() {
        let reports = vec![
            serde_json::json!({"ap": 0.9, "aufsc_plus": {"correct": 0.1, "incorrect": null}}),
            serde_json::json!({"ap": 0.8, "aufsc_plus": {"correct": 0.3}}),
        ];
        let agg = aggregate(&reports);
        assert!((agg["ap"]["mean"].as_f64().unwrap() - 0.85).abs() < 1e-12);
        assert!((agg["ap"]["std"].as_f64().unwrap() - 0.005f64.sqrt()).abs() < 1e-9);
        assert_eq!(agg["aufsc_plus.correct"]["n"], 2);
        assert!(!agg.contains_key("aufsc_plus.incorrect"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&usage("bad")), 2);
        assert_eq!(exit_code(&tgxplain::Error::InvalidGenConfig("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow!("io")), 1);
        assert_eq!(exit_code(&tgxplain::Error::NoEvents.into()), 1);
    }
}
