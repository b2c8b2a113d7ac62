//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bafline::bafn::{bilinear_pooling, interaction_map, project, BafnWeights};
use bafline::corpus::{prepare_dataset, PreparedCorpus, PreparedFile, PreparedLine};
use bafline::encoder::PrecomputedEmbeddings;
use bafline::eval::{
    auc, cohens_d, confusion, defective_rank_percentiles, evaluate_release, rank_release_lines, scott_knott_esd,
    MetricReport, RankingOrder, DEFAULT_THRESHOLD,
};
use bafline::model::{predict_release, train, write_predictions, ModelCheckpoint, ModelConfig, PredictionRecord, ReportHeader};
use bafline::numcore::{Array2, Tape};
use bafline::synth::{generate_release, SynthConfig};
use bafline::{verify, Error};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synthetic_release(files: usize, seed: u64, tag: &str) -> Vec<PreparedFile> {
    let cfg = SynthConfig { files, seed, ..Default::default() };
    prepare_dataset(&generate_release(&cfg, tag), bafline::corpus::DEFAULT_MAX_LINE_TOKENS).0.files
}

struct Run {
    report: MetricReport,
    records: Vec<PredictionRecord>,
    test: Vec<PreparedFile>,
    seconds: f64,
}

fn end_to_end(cfg: &ModelConfig, files: usize, seed: u64) -> bafline::Result<Run> {
    let train_set = synthetic_release(files, seed * 3, "train");
    let val_set = synthetic_release(files, seed * 3 + 1, "val");
    let test = synthetic_release(files, seed * 3 + 2, "test");
    let start = Instant::now();
    let checkpoint = train(cfg, &train_set, &val_set, None)?;
    let records = predict_release(&checkpoint, &test, None)?;
    let seconds = start.elapsed().as_secs_f64();
    let report = evaluate_release("synthetic", "bafline", &records, &test, DEFAULT_THRESHOLD, RankingOrder::FileFirst)?;
    Ok(Run { report, records, test, seconds })
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let results = verify::run_suite(0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst = results
        .iter()
        .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
        .expect("non-empty suite");
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let groups: std::collections::BTreeSet<&str> = results.iter().map(|r| r.group).collect();
    check(
        failed.is_empty() && secs < 60.0 && groups.len() >= 4,
        format!(
            "{} checks in groups {:?}, worst {} at {:.2e}, {:.2}s, failed {:?}",
            results.len(),
            groups,
            worst.name,
            worst.report.max_rel_error,
            secs,
            failed
        ),
    )
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2 {
    Array2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Independent scalar evaluation of the per-channel bilinear form.
fn triple_loop(h_l: &Array2, h_c: &Array2, u: &Array2, m: &Array2, q: &Array2, activated: bool) -> Vec<f64> {
    let (n, k) = (h_l.rows(), u.cols());
    let relu = |x: f64| x.max(0.0);
    let proj = |h: &Array2, w: &Array2, i: usize, c: usize| (0..h.cols()).map(|t| h.get(i, t) * w.get(t, c)).sum::<f64>();
    let mut f = vec![0.0; k];
    for (c, fc) in f.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let a_ij: f64 = (0..k)
                    .map(|t| relu(proj(h_l, u, i, t)) * q.get(0, t) * relu(proj(h_c, m, j, t)))
                    .sum();
                let (left, right) = if activated {
                    (relu(proj(h_l, u, i, c)), relu(proj(h_c, m, j, c)))
                } else {
                    (proj(h_l, u, i, c), proj(h_c, m, j, c))
                };
                *fc += left * a_ij * right;
            }
        }
    }
    f
}

fn bafn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let d = rng.gen_range(1..=4);
        let dc = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=4);
        let h_l = random_matrix(n, d, &mut rng);
        let h_c = random_matrix(n, dc, &mut rng);
        let w = BafnWeights {
            u: random_matrix(d, k, &mut rng),
            m: random_matrix(dc, k, &mut rng),
            q: vec![random_matrix(1, k, &mut rng), random_matrix(1, k, &mut rng)],
        };
        for activated in [true, false] {
            let mut tape = Tape::new();
            let (vl, vc) = (tape.leaf(h_l.clone()), tape.leaf(h_c.clone()));
            let wv = w.register(&mut tape);
            let proj = project(&mut tape, vl, vc, &wv, None).map_err(|e| e.to_string())?;
            for (head, &qv) in wv.q.iter().enumerate() {
                let a = interaction_map(&mut tape, &proj, qv).map_err(|e| e.to_string())?;
                let f = bilinear_pooling(&mut tape, &proj, a, activated).map_err(|e| e.to_string())?;
                let expect = triple_loop(&h_l, &h_c, &w.u, &w.m, &w.q[head], activated);
                for (c, e) in expect.iter().enumerate() {
                    let got = tape.value(f).get(0, c);
                    worst = worst.max((got - e).abs() / e.abs().max(1.0));
                }
            }
        }
    }
    check(worst <= 1e-10, format!("100 instances x 2 variants x 2 heads, max error {worst:.2e}"))
}

/// Position of every line by pairwise enumeration: the number of lines that
/// must be inspected strictly before it, plus one.
fn oracle_positions(records: &[PredictionRecord]) -> Vec<(f64, bool, usize)> {
    let mut flat = Vec::new();
    for r in records {
        for &(ln, s) in &r.lines {
            flat.push((r.file_id.as_str(), r.prob, ln, s));
        }
    }
    let before = |a: &(&str, f64, u32, f64), b: &(&str, f64, u32, f64)| {
        a.1 > b.1
            || (a.1 == b.1 && a.0 < b.0)
            || (a.1 == b.1 && a.0 == b.0 && (a.3 > b.3 || (a.3 == b.3 && a.2 < b.2)))
    };
    flat.iter()
        .map(|x| (x.3, false, 1 + flat.iter().filter(|y| before(y, x)).count()))
        .collect()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    while done < 200 {
        let n_files = rng.gen_range(2..=20);
        let mut budget = 50usize;
        let mut truth = Vec::new();
        let mut records = Vec::new();
        for f in 0..n_files {
            if budget == 0 {
                break;
            }
            let n_lines = rng.gen_range(1..=budget.min(6));
            budget -= n_lines;
            let lines: Vec<PreparedLine> = (1..=n_lines as u32)
                .map(|ln| PreparedLine { line_number: ln, tokens: vec!["t".into()], label: rng.gen_bool(0.25) })
                .collect();
            let id = format!("f{f:02}");
            records.push(PredictionRecord {
                file_id: id.clone(),
                prob: rng.gen_range(0..=4) as f64 / 4.0,
                lines: lines.iter().map(|l| (l.line_number, rng.gen_range(0..=3) as f64)).collect(),
            });
            truth.push(PreparedFile { file_id: id, file_label: rng.gen_bool(0.4), lines });
        }
        let labels: Vec<bool> = truth.iter().map(|f| f.file_label).collect();
        let probs: Vec<f64> = records.iter().map(|r| r.prob).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        let defective_lines = truth.iter().flat_map(|f| &f.lines).filter(|l| l.label).count();
        if pos == 0 || pos == labels.len() || defective_lines == 0 {
            continue;
        }
        done += 1;

        let mut half_wins = 0usize;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] && !labels[j] {
                    half_wins += if probs[i] > probs[j] { 2 } else if probs[i] == probs[j] { 1 } else { 0 };
                }
            }
        }
        let want_auc = half_wins as f64 / (2 * pos * (labels.len() - pos)) as f64;

        let (mut tp, mut fp, mut tn, mut fn_) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (p, &l) in probs.iter().zip(&labels) {
            match (*p >= DEFAULT_THRESHOLD, l) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, false) => tn += 1.0,
                (false, true) => fn_ += 1.0,
            }
        }
        let want_ba = (tp / (tp + fn_) + tn / (tn + fp)) / 2.0;
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        let want_mcc = if denom == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / denom.sqrt() };

        let mut positions = oracle_positions(&records);
        let flags: Vec<bool> = truth.iter().flat_map(|f| f.lines.iter().map(|l| l.label)).collect();
        for (p, d) in positions.iter_mut().zip(flags) {
            p.1 = d;
        }
        let total = positions.len();
        let cut = total.div_ceil(5);
        let found = positions.iter().filter(|p| p.1 && p.2 <= cut).count();
        let want_recall = found as f64 / defective_lines as f64;
        let target = defective_lines.div_ceil(5).max(1);
        let reach = (1..=total)
            .find(|&k| positions.iter().filter(|p| p.1 && p.2 <= k).count() >= target)
            .expect("target reachable");
        let want_effort = reach as f64 / total as f64;

        let c = confusion(&probs, &labels, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
        let ranking = rank_release_lines(&records, &truth, RankingOrder::FileFirst).map_err(|e| e.to_string())?;
        let got = [
            auc(&probs, &labels).map_err(|e| e.to_string())?,
            c.balanced_accuracy(),
            c.mcc().0,
            ranking.recall_at_loc(0.2).map_err(|e| e.to_string())?,
            ranking.effort_at_recall(0.2).map_err(|e| e.to_string())?,
        ];
        let want = [want_auc, want_ba, want_mcc, want_recall, want_effort];
        if got != want {
            return Err(format!("instance {done}: got {got:?}, oracle {want:?}"));
        }
    }
    Ok("200 instances, AUC/BA/MCC/Recall@20%LOC/Effort@20%Recall identical to enumeration".into())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn synthetic_end_to_end() -> (Outcome, Outcome) {
    let run = match end_to_end(&ModelConfig::default(), 300, 0) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err("no run".into())),
    };
    let r = &run.report;
    let c4 = check(
        run.seconds < 300.0 && r.auc >= 0.95 && r.recall_top20_loc >= 0.80,
        format!(
            "AUC {:.4}, Recall@Top20%LOC {:.4}, train+predict {:.1}s on {} threads",
            r.auc,
            r.recall_top20_loc,
            run.seconds,
            rayon::current_num_threads()
        ),
    );
    let c5 = match defective_rank_percentiles(&run.records, &run.test) {
        Ok(p) => {
            let n = p.len();
            let m = median(p);
            check(m <= 0.20, format!("median percentile {m:.4} over {n} planted lines"))
        }
        Err(e) => Err(e.to_string()),
    };
    (c4, c5)
}

fn ablation_direction() -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let full = ModelConfig { seed, epochs: 5, ..Default::default() };
        let ablated = ModelConfig { no_bafn: true, ..full.clone() };
        let a = end_to_end(&full, 120, seed).map_err(|e| e.to_string())?;
        let b = end_to_end(&ablated, 120, seed).map_err(|e| e.to_string())?;
        let (ra, rb) = (a.report.recall_top20_loc, b.report.recall_top20_loc);
        if ra > rb {
            wins += 1;
        }
        pairs.push(format!("{ra:.2}/{rb:.2}"));
    }
    check(
        wins >= 8,
        format!("full beats w/o BAFN in {wins}/10 seeds (120 files, 5 epochs; full/ablated {})", pairs.join(" ")),
    )
}

fn determinism() -> Outcome {
    let cfg = ModelConfig { embed_dim: 16, hidden: 16, k: 48, epochs: 2, seed: 11, ..Default::default() };
    let train_set = synthetic_release(40, 100, "train");
    let val_set = synthetic_release(40, 101, "val");
    let test = synthetic_release(40, 102, "test");
    let once = || -> bafline::Result<(Vec<u8>, Vec<u8>, String)> {
        let ck = train(&cfg, &train_set, &val_set, None)?;
        let records = predict_release(&ck, &test, None)?;
        let mut report = Vec::new();
        write_predictions(&mut report, &ReportHeader::for_checkpoint(&ck), &records)?;
        let metrics = evaluate_release("t", "m", &records, &test, DEFAULT_THRESHOLD, RankingOrder::FileFirst)?;
        Ok((ck.to_bytes(), report, serde_json::to_string(&metrics)?))
    };
    let a = once().map_err(|e| e.to_string())?;
    let b = once().map_err(|e| e.to_string())?;
    check(
        a == b,
        format!("checkpoint {} bytes, report {} bytes, metrics identical: {}", a.0.len(), a.1.len(), a == b),
    )
}

fn scott_knott_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = |rng: &mut ChaCha8Rng| (0..4).map(|_| rng.gen_range(-0.02..0.02)).sum::<f64>();
    let tasks = 20;
    let strong: Vec<f64> = (0..tasks).map(|_| 0.80 + noise(&mut rng)).collect();
    let weak: Vec<f64> = (0..tasks).map(|_| 0.60 + noise(&mut rng)).collect();
    let mut close = strong.clone();
    close.shuffle(&mut rng);
    let close: Vec<f64> = close.iter().map(|x| x + 0.001).collect();
    let d_close = cohens_d(&strong, &close).abs();

    let separated: BTreeMap<String, Vec<f64>> = [("strong".to_string(), strong.clone()), ("weak".to_string(), weak)].into();
    let overlapping: BTreeMap<String, Vec<f64>> = [("a".to_string(), strong), ("b".to_string(), close)].into();
    let sep = scott_knott_esd(&separated, true).map_err(|e| e.to_string())?;
    let ovl = scott_knott_esd(&overlapping, true).map_err(|e| e.to_string())?;
    let sep_ok = sep.clusters == vec![vec!["strong".to_string()], vec!["weak".to_string()]];
    let ovl_ok = ovl.clusters.len() == 1 && d_close < 0.2;

    let mut invariant = true;
    for _ in 0..20 {
        for (input, reference) in [(&separated, &sep), (&overlapping, &ovl)] {
            let mut order: Vec<usize> = (0..tasks).collect();
            order.shuffle(&mut rng);
            let mut aliases: Vec<String> = input.keys().cloned().collect();
            aliases.shuffle(&mut rng);
            let renamed: BTreeMap<String, Vec<f64>> = input
                .iter()
                .zip(&aliases)
                .map(|((_, v), alias)| (format!("x{alias}"), order.iter().map(|&i| v[i]).collect()))
                .collect();
            let back: BTreeMap<String, &String> =
                input.keys().zip(&aliases).map(|(orig, alias)| (format!("x{alias}"), orig)).collect();
            let res = scott_knott_esd(&renamed, true).map_err(|e| e.to_string())?;
            let ranks: BTreeMap<String, usize> = res.ranks.iter().map(|(k, &r)| (back[k].clone(), r)).collect();
            invariant &= ranks == reference.ranks;
        }
    }
    check(
        sep_ok && ovl_ok && invariant,
        format!(
            "separated -> {:?}; overlapping (d = {d_close:.3}) -> {} cluster(s); 20 shuffles invariant: {invariant}",
            sep.clusters,
            ovl.clusters.len()
        ),
    )
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ModelConfig { embed_dim: 8, hidden: 4, k: 12, epochs: 1, ..Default::default() };
    let files = synthetic_release(20, 9, "rt");
    let ck = train(&cfg, &files, &files, None).map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    ck.save(&path).map_err(|e| e.to_string())?;
    let loaded = ModelCheckpoint::load(&path).map_err(|e| e.to_string())?;
    let ck_ok = loaded == ck && loaded.to_bytes() == std::fs::read(&path).map_err(|e| e.to_string())?;

    let corpus = PreparedCorpus { max_line_tokens: 75, files: files.clone() };
    let text = corpus.to_text(&["source=synthetic".into()]);
    let back = PreparedCorpus::from_text(&text).map_err(|e| e.to_string())?;
    let cache_ok = back == corpus && back.to_text(&["source=synthetic".into()]) == text;

    let mut emb = PrecomputedEmbeddings::new(3);
    let (skip_file, skip_line) = (files[4].file_id.clone(), files[4].lines[2].line_number);
    for f in &files {
        for l in &f.lines {
            if (f.file_id.as_str(), l.line_number) != (skip_file.as_str(), skip_line) {
                emb.insert(&f.file_id, l.line_number, vec![0.5, -1.0, l.line_number as f64])
                    .map_err(|e| e.to_string())?;
            }
        }
    }
    let emb_text_ok = PrecomputedEmbeddings::from_text(&emb.to_text()).map_err(|e| e.to_string())?.to_text() == emb.to_text();
    let err = emb.validate_coverage(&files).err();
    let msg = err.as_ref().map(ToString::to_string).unwrap_or_default();
    let named = matches!(&err, Some(Error::MissingEmbedding { file_id, line_number })
        if *file_id == skip_file && *line_number == skip_line)
        && msg.contains(&skip_file)
        && msg.contains(&skip_line.to_string());
    check(
        ck_ok && cache_ok && emb_text_ok && named,
        format!("checkpoint {ck_ok}, prepared cache {cache_ok}, embedding file {emb_text_ok}, missing line reported as \"{msg}\""),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} [{status}] {name}: {detail}");
    };
    report(1, "gradient integrity", gradient_integrity());
    report(2, "BAFN oracle", bafn_oracle());
    report(3, "metric oracles", metric_oracles());
    let (c4, c5) = synthetic_end_to_end();
    report(4, "synthetic end-to-end", c4);
    report(5, "line-attention localization", c5);
    report(6, "ablation direction", ablation_direction());
    report(7, "determinism", determinism());
    report(8, "Scott-Knott ESD sanity", scott_knott_sanity());
    report(9, "format round-trips", format_round_trips());
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
