//! Pack layout: `pack.json` (name and split lists), `templates/*.json`,
//! plus the app directories read by [`AppCatalog::load`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::instance::{instantiate, TaskInstance};
use super::judge::judge;
use super::template::{Split, TaskTemplate};
use super::TaskError;
use crate::os::AppCatalog;
use crate::state::{StatePath, StateRegistry, Tier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackManifest {
    pub name: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TaskPack {
    pub dir: PathBuf,
    pub manifest: PackManifest,
    pub catalog: Arc<AppCatalog>,
    pub templates: BTreeMap<String, Arc<TaskTemplate>>,
    base: StateRegistry,
}

impl TaskPack {
    pub fn template(&self, id: &str) -> Result<&Arc<TaskTemplate>, TaskError> {
        self.templates.get(id).ok_or_else(|| TaskError::UnknownTemplate(id.to_string()))
    }

    /// Registry with every store at its pack default.
    pub fn base_registry(&self) -> &StateRegistry {
        &self.base
    }

    pub fn instantiate(&self, id: &str, seed: u64) -> Result<TaskInstance, TaskError> {
        instantiate(self.template(id)?, seed, &self.base)
    }

    pub fn split(&self, split: Split) -> Vec<&str> {
        self.templates.values().filter(|t| t.split == split).map(|t| t.template_id.as_str()).collect()
    }
}

fn read(path: &Path) -> Result<Vec<u8>, TaskError> {
    fs::read(path).map_err(|e| TaskError::Io(format!("{}: {e}", path.display())))
}

/// Loads and validates a pack, failing on the first finding.
pub fn load_pack(dir: &Path) -> Result<TaskPack, TaskError> {
    let (pack, findings) = scan(dir)?;
    match findings.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(pack),
    }
}

/// Every finding in a pack; empty for a clean pack.
pub fn lint_pack(dir: &Path) -> Vec<TaskError> {
    match scan(dir) {
        Ok((_, findings)) => findings,
        Err(e) => vec![e],
    }
}

fn scan(dir: &Path) -> Result<(TaskPack, Vec<TaskError>), TaskError> {
    let manifest: PackManifest = serde_json::from_slice(&read(&dir.join("pack.json"))?)
        .map_err(|e| TaskError::SchemaViolation(format!("pack.json: {e}")))?;
    let catalog = Arc::new(AppCatalog::load(dir)?);
    let base = catalog.build_registry()?;
    let mut findings = Vec::new();

    let train: BTreeSet<&String> = manifest.train.iter().collect();
    let test: BTreeSet<&String> = manifest.test.iter().collect();
    findings.extend(train.intersection(&test).map(|id| TaskError::SplitOverlap(id.to_string())));

    let tdir = dir.join("templates");
    let mut files: Vec<PathBuf> = fs::read_dir(&tdir)
        .map_err(|e| TaskError::Io(format!("{}: {e}", tdir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut templates = BTreeMap::new();
    for file in files {
        let tpl = match TaskTemplate::parse(&read(&file)?) {
            Ok(t) => t,
            Err(TaskError::SchemaViolation(m)) => {
                findings.push(TaskError::SchemaViolation(format!("{}: {m}", file.display())));
                continue;
            }
            Err(e) => return Err(e),
        };
        if templates.contains_key(&tpl.template_id) {
            findings.push(TaskError::DuplicateTemplate(tpl.template_id.clone()));
            continue;
        }
        let listed = match tpl.split {
            Split::Train => &train,
            Split::Test => &test,
        };
        if !listed.contains(&tpl.template_id) {
            findings.push(TaskError::SchemaViolation(format!(
                "{}: split `{}` disagrees with pack.json",
                tpl.template_id,
                tpl.split.label()
            )));
        }
        for c in &tpl.goal_checks {
            let store = StatePath::parse(&c.predicate.path).map(|p| p.store);
            let tier = store.as_ref().ok().and_then(|s| base.spec(s)).map(|s| s.tier);
            if !matches!(tier, Some(Tier::RuntimeOverlay | Tier::OsRuntime)) {
                findings.push(TaskError::SchemaViolation(format!(
                    "{}: check {} path `{}` is not in an overlay or OS store",
                    tpl.template_id, c.check_id, c.predicate.path
                )));
            }
        }
        templates.insert(tpl.template_id.clone(), Arc::new(tpl));
    }
    for id in train.union(&test) {
        if !templates.contains_key(*id) {
            findings.push(TaskError::SchemaViolation(format!("pack.json lists unknown template `{id}`")));
        }
    }
    for tpl in templates.values() {
        match instantiate(tpl, 0, &base) {
            Ok(inst) => match judge(&inst, &inst.initial_snapshot, None) {
                Ok(j) if j.goal_success => findings.push(TaskError::SchemaViolation(format!(
                    "{}: goal already satisfied in the initial state",
                    tpl.template_id
                ))),
                Ok(_) => {}
                Err(e) => findings.push(e),
            },
            Err(e) => findings.push(e),
        }
    }
    Ok((TaskPack { dir: dir.to_path_buf(), manifest, catalog, templates, base }, findings))
}
