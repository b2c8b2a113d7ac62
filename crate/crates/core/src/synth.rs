//! Seeded synthetic releases with a planted defect marker.
//!
//! Every file is a sequence of Java-like statements drawn from a small
//! template pool. In defective files, one to three statements are replaced
//! by a call to a marker identifier that never appears elsewhere; those
//! lines are the defective lines.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, RawFile, RawLineRecord};

/// Generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub files: usize,
    pub min_lines: usize,
    pub max_lines: usize,
    pub defective_ratio: f64,
    /// Inclusive range of planted lines per defective file.
    pub marked_lines: (usize, usize),
    pub marker: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            files: 300,
            min_lines: 30,
            max_lines: 50,
            defective_ratio: 0.1,
            marked_lines: (1, 3),
            marker: "unsafeReleaseHook".to_string(),
            seed: 0,
        }
    }
}

fn statement<R: Rng>(rng: &mut R) -> String {
    let v = |rng: &mut R| format!("value{}", rng.gen_range(0..40));
    let f = |rng: &mut R| format!("helper{}", rng.gen_range(0..20));
    match rng.gen_range(0..10) {
        0 => format!("int {} = {} + {};", v(rng), v(rng), rng.gen_range(0..100)),
        1 => format!("if ({} > {}) {{", v(rng), v(rng)),
        2 => "}".to_string(),
        3 => format!("return {};", v(rng)),
        4 => format!("{}({}, \"label{}\");", f(rng), v(rng), rng.gen_range(0..5)),
        5 => format!("for (int i = 0; i < {}; i++) {{", v(rng)),
        6 => format!("{} = {}.{}({});", v(rng), v(rng), f(rng), v(rng)),
        7 => format!("// note about {}", v(rng)),
        8 => format!("String {} = {}.toString();", v(rng), v(rng)),
        _ => format!("{}.{}();", v(rng), f(rng)),
    }
}

/// One release named `tag`; file ids are `<tag>/pkgN/FileM.java`.
pub fn generate_release(cfg: &SynthConfig, tag: &str) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_defective = ((cfg.files as f64 * cfg.defective_ratio).round() as usize).min(cfg.files);
    let mut flags: Vec<bool> = (0..cfg.files).map(|i| i < n_defective).collect();
    flags.shuffle(&mut rng);

    let files = flags
        .iter()
        .enumerate()
        .map(|(i, &defective)| {
            let n = rng.gen_range(cfg.min_lines..=cfg.max_lines.max(cfg.min_lines));
            let mut content: Vec<String> = (0..n).map(|_| statement(&mut rng)).collect();
            let mut labels = vec![false; n];
            if defective {
                let k = rng.gen_range(cfg.marked_lines.0..=cfg.marked_lines.1).clamp(1, n);
                for idx in rand::seq::index::sample(&mut rng, n, k) {
                    content[idx] = format!("{}(value{});", cfg.marker, rng.gen_range(0..40));
                    labels[idx] = true;
                }
            }
            let file_id = format!("{tag}/pkg{}/File{i}.java", i % 7);
            RawFile {
                file_id: file_id.clone(),
                file_label: defective,
                records: content
                    .into_iter()
                    .zip(labels)
                    .enumerate()
                    .map(|(j, (content, line_label))| RawLineRecord {
                        file_id: file_id.clone(),
                        line_number: j as u32 + 1,
                        content,
                        line_label,
                        file_label: defective,
                    })
                    .collect(),
            }
        })
        .collect();
    Dataset {
        files,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_of_default_release() {
        let d = generate_release(&SynthConfig::default(), "r1");
        assert_eq!(d.files.len(), 300);
        assert_eq!(d.defective_files(), 30);
        assert!(d.files.iter().all(|f| (30..=50).contains(&f.records.len())));
        for f in &d.files {
            let marked = f.records.iter().filter(|r| r.content.contains("unsafeReleaseHook")).count();
            let labelled = f.records.iter().filter(|r| r.line_label).count();
            assert_eq!(marked, labelled);
            if f.file_label {
                assert!((1..=3).contains(&marked));
            } else {
                assert_eq!(marked, 0);
            }
        }
    }

    #[test]
    fn seeded() {
        let c = SynthConfig { files: 20, ..Default::default() };
        assert_eq!(generate_release(&c, "a"), generate_release(&c, "a"));
        let other = SynthConfig { seed: 1, ..c.clone() };
        assert_ne!(generate_release(&c, "a"), generate_release(&other, "a"));
    }
}
