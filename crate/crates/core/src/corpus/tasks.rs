//! Train/validation/test splits over a catalog of releases.

use std::fmt;
use std::path::PathBuf;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReleaseId {
    pub project: String,
    pub release: String,
}

impl fmt::Display for ReleaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.project, self.release)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Within-project.
    Wpdp,
    /// Cross-project.
    Cpdp,
}

/// Releases of one project in chronological order, with their dataset paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectReleases {
    pub project: String,
    pub releases: Vec<(String, PathBuf)>,
}

impl ProjectReleases {
    fn id(&self, i: usize) -> ReleaseId {
        ReleaseId {
            project: self.project.clone(),
            release: self.releases[i].0.clone(),
        }
    }
}

pub type Catalog = Vec<ProjectReleases>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSplit {
    pub train_release: ReleaseId,
    pub validation_release: ReleaseId,
    pub test_releases: Vec<ReleaseId>,
    pub mode: Mode,
}

/// Parses a catalog file: one `project release path` triple per line,
/// whitespace-separated, releases listed oldest first. `#` starts a comment.
pub fn parse_catalog(text: &str) -> Result<Catalog> {
    let mut catalog: Catalog = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [project, release, path] = parts[..] else {
            return Err(Error::Parse {
                row: i + 1,
                message: "catalog line must be `project release path`".into(),
            });
        };
        let entry = (release.to_string(), PathBuf::from(path));
        match catalog.iter_mut().find(|p| p.project == project) {
            Some(p) => {
                if p.releases.iter().any(|(r, _)| r == release) {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!("release {project}@{release} listed twice"),
                    });
                }
                p.releases.push(entry);
            }
            None => catalog.push(ProjectReleases {
                project: project.to_string(),
                releases: vec![entry],
            }),
        }
    }
    Ok(catalog)
}

/// Enumerates tasks: the first release of a project trains, the second
/// validates, each later release is a test target. WPDP tests on the same
/// project; CPDP pairs every source project with every other project's test
/// releases. Projects with fewer than three releases are skipped.
pub fn build_tasks(catalog: &[ProjectReleases], mode: Mode) -> Vec<TaskSplit> {
    let eligible: Vec<&ProjectReleases> = catalog
        .iter()
        .filter(|p| {
            let ok = p.releases.len() >= 3;
            if !ok {
                warn!(
                    "project `{}` has {} release(s); at least 3 are needed, skipping",
                    p.project,
                    p.releases.len()
                );
            }
            ok
        })
        .collect();

    let mut tasks = Vec::new();
    for src in &eligible {
        let targets: Vec<&ProjectReleases> = match mode {
            Mode::Wpdp => vec![src],
            Mode::Cpdp => eligible
                .iter()
                .filter(|t| t.project != src.project)
                .copied()
                .collect(),
        };
        for tgt in targets {
            for i in 2..tgt.releases.len() {
                tasks.push(TaskSplit {
                    train_release: src.id(0),
                    validation_release: src.id(1),
                    test_releases: vec![tgt.id(i)],
                    mode,
                });
            }
        }
    }
    tasks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project(name: &str, releases: &[&str]) -> ProjectReleases {
        ProjectReleases {
            project: name.into(),
            releases: releases
                .iter()
                .map(|r| (r.to_string(), PathBuf::from(format!("{name}-{r}.csv"))))
                .collect(),
        }
    }

    #[test]
    fn wpdp_four_releases() {
        let tasks = build_tasks(&[project("p", &["A", "B", "C", "D"])], Mode::Wpdp);
        let names: Vec<_> = tasks
            .iter()
            .map(|t| {
                (
                    t.train_release.release.as_str(),
                    t.validation_release.release.as_str(),
                    t.test_releases[0].release.as_str(),
                )
            })
            .collect();
        assert_eq!(names, [("A", "B", "C"), ("A", "B", "D")]);
    }

    #[test]
    fn two_releases_skipped() {
        assert!(build_tasks(&[project("p", &["A", "B"])], Mode::Wpdp).is_empty());
    }

    #[test]
    fn cpdp_two_projects() {
        let cat = [project("p", &["1", "2", "3"]), project("q", &["a", "b", "c"])];
        let tasks = build_tasks(&cat, Mode::Cpdp);
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].train_release.project, "p");
        assert_eq!(tasks[0].test_releases[0].to_string(), "q@c");
        assert_eq!(tasks[1].test_releases[0].to_string(), "p@3");
    }

    #[test]
    fn benchmark_task_counts() {
        // Release counts per project from the public line-level benchmark.
        let counts = [5, 4, 3, 3, 3, 3, 4, 4, 3];
        let cat: Vec<_> = counts
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                let rels: Vec<String> = (0..n).map(|r| r.to_string()).collect();
                let refs: Vec<&str> = rels.iter().map(String::as_str).collect();
                project(&format!("p{p}"), &refs)
            })
            .collect();
        assert_eq!(build_tasks(&cat, Mode::Wpdp).len(), 14);
        assert_eq!(build_tasks(&cat, Mode::Cpdp).len(), 112);
    }

    #[test]
    fn catalog_parsing() {
        let cat = parse_catalog("# comment\nact 5.0 a.csv\nact 5.1 b.csv\ncam 1.4 c.csv\n").unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat[0].releases.len(), 2);
        assert!(parse_catalog("act 5.0\n").is_err());
    }
}
