//! From raw model output to a runnable test file.
//!
//! [`extract_code`] pulls fenced code out of a response, [`repair`] fixes
//! the dependency defects that can be fixed mechanically, and
//! [`classify_failure`] sorts a run into the dependency/semantic taxonomy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::runner::RunResult;

mod pyscan;

/// Marker comment identifying an inserted path bootstrap.
pub const BOOTSTRAP_MARKER: &str = "# acceptgen: path bootstrap";

/// Prefix given to generated test files inside a sandbox.
pub const TEST_FILE_PREFIX: &str = "test_generated";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PostprocessError {
    #[error("model response is blank")]
    EmptyResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    /// Language tag from the opening fence, if any.
    pub lang: Option<String>,
    pub code: String,
    /// Byte span of `code` inside the raw response.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedArtifact {
    pub raw: String,
    pub blocks: Vec<CodeBlock>,
    pub chosen: usize,
}

impl GeneratedArtifact {
    pub fn chosen_code(&self) -> &str {
        self.blocks.get(self.chosen).map_or("", |b| b.code.as_str())
    }

    /// Raw text between and around the blocks, fence lines included.
    pub fn prose(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.blocks.len() + 1);
        let mut at = 0;
        for block in &self.blocks {
            out.push(&self.raw[at..block.start]);
            at = block.end;
        }
        out.push(&self.raw[at..]);
        out
    }
}

fn fence_lang(line: &str) -> Option<Option<String>> {
    let rest = line.trim_start().strip_prefix("```")?;
    let tag = rest.trim();
    Some((!tag.is_empty()).then(|| tag.split_whitespace().next().unwrap_or(tag).to_string()))
}

fn has_test_function(code: &str) -> bool {
    code.lines().any(|l| {
        let t = l.trim_start();
        t.starts_with("def test_") || t.starts_with("async def test_")
    })
}

/// Split a model response into code blocks.
///
/// Blocks are the bodies of triple-backtick fences, in order; an unclosed
/// fence runs to the end of the text. Without any fence the whole response
/// is one block. The chosen block is the longest one defining a
/// `test_` function, falling back to the longest block.
pub fn extract_code(raw: &str) -> Result<GeneratedArtifact, PostprocessError> {
    if raw.trim().is_empty() {
        return Err(PostprocessError::EmptyResponse);
    }
    let mut blocks = Vec::new();
    let mut open: Option<(Option<String>, usize)> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let line_end = offset + line.len();
        match (&open, fence_lang(line)) {
            (None, Some(lang)) => open = Some((lang, line_end)),
            (Some(_), Some(None)) => {
                let (lang, start) = open.take().expect("checked");
                blocks.push(CodeBlock {
                    lang,
                    code: raw[start..offset].to_string(),
                    start,
                    end: offset,
                });
            }
            _ => {}
        }
        offset = line_end;
    }
    if let Some((lang, start)) = open {
        blocks.push(CodeBlock {
            lang,
            code: raw[start..].to_string(),
            start,
            end: raw.len(),
        });
    }
    if blocks.is_empty() {
        blocks.push(CodeBlock {
            lang: None,
            code: raw.to_string(),
            start: 0,
            end: raw.len(),
        });
    }

    let longest = |candidates: &mut dyn Iterator<Item = (usize, &CodeBlock)>| {
        candidates
            .max_by(|(ia, a), (ib, b)| a.code.len().cmp(&b.code.len()).then(ib.cmp(ia)))
            .map(|(i, _)| i)
    };
    let chosen = longest(&mut blocks.iter().enumerate().filter(|(_, b)| has_test_function(&b.code)))
        .or_else(|| longest(&mut blocks.iter().enumerate()))
        .unwrap_or(0);
    Ok(GeneratedArtifact {
        raw: raw.to_string(),
        blocks,
        chosen,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Repaired { no_action_needed: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFile {
    pub virtual_path: String,
    pub source: String,
    pub stage: Stage,
}

impl TestFile {
    pub fn raw(virtual_path: impl Into<String>, source: impl Into<String>) -> Self {
        TestFile {
            virtual_path: virtual_path.into(),
            source: source.into(),
            stage: Stage::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairKind {
    AddImport,
    AddPathBootstrap,
    RewriteModulePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairAction {
    pub kind: RepairKind,
    pub detail: String,
    pub inserted_text: String,
}

/// A name the scan could not resolve; left untouched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedNote {
    pub name: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub file: TestFile,
    pub actions: Vec<RepairAction>,
    pub skipped: Vec<SkippedNote>,
}

/// Default symbol → import-line table: test-framework entry points, IO
/// capture helpers, numeric arrays and model loading.
pub fn default_known_external() -> BTreeMap<String, String> {
    [
        ("pytest", "import pytest"),
        ("sys", "import sys"),
        ("os", "import os"),
        ("io", "import io"),
        ("re", "import re"),
        ("json", "import json"),
        ("argparse", "import argparse"),
        ("subprocess", "import subprocess"),
        ("contextlib", "import contextlib"),
        ("StringIO", "from io import StringIO"),
        ("BytesIO", "from io import BytesIO"),
        ("redirect_stdout", "from contextlib import redirect_stdout"),
        ("Path", "from pathlib import Path"),
        ("mock", "from unittest import mock"),
        ("patch", "from unittest.mock import patch"),
        ("MagicMock", "from unittest.mock import MagicMock"),
        ("np", "import numpy as np"),
        ("numpy", "import numpy"),
        ("NDArray", "from numpy.typing import NDArray"),
        ("tf", "import tensorflow as tf"),
        ("tensorflow", "import tensorflow"),
        ("keras", "from tensorflow import keras"),
        ("load_model", "from tensorflow.keras.models import load_model"),
        ("PIL", "import PIL.Image"),
        ("Image", "from PIL import Image"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Top-level modules that are never project code.
const FOREIGN_ROOTS: &[&str] = &[
    "abc", "argparse", "ast", "asyncio", "builtins", "collections", "contextlib", "copy", "csv",
    "dataclasses", "datetime", "enum", "functools", "glob", "importlib", "inspect", "io",
    "itertools", "json", "logging", "math", "os", "pathlib", "pickle", "random", "re", "shutil",
    "signal", "string", "subprocess", "sys", "tempfile", "textwrap", "threading", "time",
    "typing", "unittest", "uuid", "warnings", "pytest", "numpy", "tensorflow", "keras", "PIL",
    "torch", "sklearn", "pandas",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectManifest {
    /// Dotted module paths importable from `source_root`.
    pub module_names: BTreeSet<String>,
    pub known_external: BTreeMap<String, String>,
    /// Directory, relative to the sandbox root, that must be on the module
    /// search path for project imports to resolve.
    pub source_root: String,
}

impl ProjectManifest {
    /// Discover `.py` modules and packages under `fixture_root/source_root`.
    pub fn discover(
        fixture_root: &Path,
        source_root: &str,
        known_external: BTreeMap<String, String>,
    ) -> std::io::Result<Self> {
        let base = fixture_root.join(source_root);
        let mut module_names = BTreeSet::new();
        for entry in walkdir::WalkDir::new(&base).sort_by_file_name() {
            let entry = entry.map_err(std::io::Error::other)?;
            let rel = entry.path().strip_prefix(&base).expect("under base");
            let parts: Vec<String> = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            if parts.is_empty() || parts.iter().any(|p| p.starts_with('.') || p == "__pycache__") {
                continue;
            }
            if entry.file_type().is_file() {
                let Some(stem) = parts.last().and_then(|p| p.strip_suffix(".py")) else {
                    continue;
                };
                let mut path = parts[..parts.len() - 1].to_vec();
                if stem != "__init__" {
                    path.push(stem.to_string());
                }
                if !path.is_empty() && !path.iter().any(|p| p.starts_with("test_")) {
                    module_names.insert(path.join("."));
                }
            }
        }
        Ok(ProjectManifest {
            module_names,
            known_external,
            source_root: source_root.to_string(),
        })
    }

    fn top_level(&self) -> BTreeSet<&str> {
        self.module_names
            .iter()
            .filter_map(|m| m.split('.').next())
            .collect()
    }

    fn is_project_module(&self, module: &str) -> bool {
        let root = module.split('.').next().unwrap_or(module);
        self.top_level().contains(root)
    }

    /// The unique module whose dotted path ends with `module`.
    fn unique_suffix_match(&self, module: &str) -> Option<&str> {
        let suffix = format!(".{module}");
        let mut matches = self.module_names.iter().filter(|m| m.ends_with(&suffix));
        let first = matches.next()?;
        matches.next().is_none().then_some(first.as_str())
    }

    fn is_foreign(&self, module: &str) -> bool {
        let root = module.split('.').next().unwrap_or(module);
        FOREIGN_ROOTS.contains(&root)
            || self.known_external.values().any(|line| {
                line.split_whitespace()
                    .nth(1)
                    .and_then(|m| m.split('.').next())
                    == Some(root)
            })
    }
}

fn bootstrap_text(test_path: &str, source_root: &str) -> String {
    let depth = test_path.trim_start_matches("./").matches('/').count();
    let mut rel = "../".repeat(depth);
    rel.push_str(source_root.trim_start_matches("./").trim_end_matches('/'));
    let rel = if rel.is_empty() { ".".to_string() } else { rel };
    format!(
        "import os, sys  {BOOTSTRAP_MARKER}\nsys.path.insert(0, os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(__file__)), {rel:?})))\n"
    )
}

/// Fix what can be fixed mechanically in a raw test file.
///
/// * names used but never bound get an import when `known_external` knows
///   them, or when they are the root of an attribute chain naming a project
///   module;
/// * project imports whose module does not exist are rewritten to the one
///   module that ends with the same dotted suffix;
/// * a path bootstrap putting `source_root` on `sys.path` is prepended when
///   the file imports project code.
///
/// Anything else is reported in `skipped` and left alone. Running `repair`
/// on its own output yields no further actions.
pub fn repair(file: &TestFile, manifest: &ProjectManifest) -> RepairOutcome {
    let scan = pyscan::scan(&file.source);
    let mut actions = Vec::new();
    let mut skipped = Vec::new();

    // Rewrite broken project module paths, back to front to keep offsets.
    let mut source = file.source.clone();
    let mut rewrites = Vec::new();
    let mut project_import = false;
    for import in &scan.imports {
        if manifest.module_names.contains(&import.module) || manifest.is_project_module(&import.module) {
            project_import = true;
            continue;
        }
        if manifest.is_foreign(&import.module) {
            continue;
        }
        let Some(target) = manifest.unique_suffix_match(&import.module) else {
            continue;
        };
        let replacement = if import.from_form || import.alias.is_some() || !import.module.contains('.') {
            target.to_string()
        } else {
            skipped.push(SkippedNote {
                name: import.module.clone(),
                line: import.line,
                reason: format!("dotted import would need rebinding to reach `{target}`"),
            });
            continue;
        };
        let needs_alias = !import.from_form && import.alias.is_none();
        rewrites.push((import, replacement, needs_alias));
        project_import = true;
    }
    for (import, replacement, needs_alias) in rewrites.iter().rev() {
        let new_text = if *needs_alias {
            format!("{replacement} as {}", import.module)
        } else {
            replacement.clone()
        };
        source.replace_range(import.start..import.end, &new_text);
    }
    for (import, _, _) in &rewrites {
        let line = source
            .lines()
            .nth(import.line - 1)
            .unwrap_or_default()
            .trim()
            .to_string();
        actions.push(RepairAction {
            kind: RepairKind::RewriteModulePath,
            detail: format!("`{}` is not a project module; rewrote line {}", import.module, import.line),
            inserted_text: format!("{line}\n"),
        });
    }

    // Imports for unbound names.
    let mut added_imports: Vec<String> = Vec::new();
    for (name, line) in &scan.referenced {
        if scan.bound.contains(name) || pyscan::BUILTINS.contains(&name.as_str()) {
            continue;
        }
        if let Some(import_line) = manifest.known_external.get(name) {
            if !added_imports.contains(import_line) {
                added_imports.push(import_line.clone());
                actions.push(RepairAction {
                    kind: RepairKind::AddImport,
                    detail: format!("`{name}` is used but never imported"),
                    inserted_text: format!("{import_line}\n"),
                });
            }
            continue;
        }
        let chain = scan
            .chains
            .iter()
            .find(|(root, _)| root == name)
            .map(|(_, chain)| chain.clone());
        let project_import_line = chain.and_then(|chain| {
            // longest prefix of the attribute chain that is a project module
            let full = (1..=chain.len())
                .rev()
                .map(|n| chain[..n].join("."))
                .find(|m| manifest.module_names.contains(m));
            if let Some(module) = full {
                return Some(format!("import {module}"));
            }
            manifest.unique_suffix_match(name).map(|module| match module.rsplit_once('.') {
                Some((parent, leaf)) => format!("from {parent} import {leaf}"),
                None => format!("import {module}"),
            })
        });
        match project_import_line {
            Some(import_line) => {
                project_import = true;
                if !added_imports.contains(&import_line) {
                    added_imports.push(import_line.clone());
                    actions.push(RepairAction {
                        kind: RepairKind::AddImport,
                        detail: format!("`{name}` names a project module that is never imported"),
                        inserted_text: format!("{import_line}\n"),
                    });
                }
            }
            None => skipped.push(SkippedNote {
                name: name.clone(),
                line: *line,
                reason: "used but never bound, and not a known import".into(),
            }),
        }
    }

    let needs_bootstrap = project_import && !file.source.contains(BOOTSTRAP_MARKER);
    let mut preamble = String::new();
    if needs_bootstrap {
        let text = bootstrap_text(&file.virtual_path, &manifest.source_root);
        preamble.push_str(&text);
        actions.insert(
            0,
            RepairAction {
                kind: RepairKind::AddPathBootstrap,
                detail: format!("put `{}` on sys.path", manifest.source_root),
                inserted_text: text,
            },
        );
    }
    for line in &added_imports {
        preamble.push_str(line);
        preamble.push('\n');
    }
    if !preamble.is_empty() {
        // Rewrites happen after any leading `from __future__` statements, whose
        // offsets are unaffected because rewrites never touch them.
        let at = if scan.has_future_import {
            let end = scan.future_end;
            source[end..].find('\n').map_or(source.len(), |n| end + n + 1)
        } else {
            0
        };
        if at == source.len() && !source.ends_with('\n') && !source.is_empty() {
            source.push('\n');
        }
        let at = at.min(source.len());
        source.insert_str(at, &preamble);
    }

    let no_action_needed = actions.is_empty();
    RepairOutcome {
        file: TestFile {
            virtual_path: file.virtual_path.clone(),
            source,
            stage: Stage::Repaired { no_action_needed },
        },
        actions,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureClass {
    None,
    Dependency,
    Semantic,
    Harness,
}

impl FailureClass {
    pub const ALL: [FailureClass; 4] = [
        FailureClass::None,
        FailureClass::Dependency,
        FailureClass::Semantic,
        FailureClass::Harness,
    ];
}

const DEPENDENCY_SIGNATURES: [&str; 2] = ["ModuleNotFoundError", "ImportError"];
const BENIGN_SIGNATURES: [&str; 2] = ["AssertionError", "Skipped"];

/// Sort a run into the failure taxonomy.
///
/// * `Harness`: the adapter timed out, could not start or broke protocol.
/// * `Dependency`: an import error during collection or inside a test.
/// * `Semantic`: any other collection error, no tests at all, or a test
///   that died on an exception other than an assertion.
/// * `None`: at least one test reached a verdict and every failure was an
///   assertion.
pub fn classify_failure(run: &RunResult) -> FailureClass {
    if run.timed_out || run.harness_error.is_some() {
        return FailureClass::Harness;
    }
    let is_dependency = |sig: &crate::harness::runner::ErrorSignature| {
        DEPENDENCY_SIGNATURES.contains(&sig.exception.as_str())
    };
    if run.collection_error.iter().any(is_dependency) || run.runtime_errors.iter().any(is_dependency) {
        return FailureClass::Dependency;
    }
    if run.collection_error.is_some() || run.collected == 0 || run.executed == 0 {
        return FailureClass::Semantic;
    }
    if run
        .runtime_errors
        .iter()
        .any(|sig| !BENIGN_SIGNATURES.contains(&sig.exception.as_str()))
    {
        return FailureClass::Semantic;
    }
    FailureClass::None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::ErrorSignature;

    pub(crate) const NL_SAMPLE_1: &str = r#"import sys
import os
sys.path.insert(0, os.getcwd())
from main import main
import pytest

def test_main():
    captured = capfd.readouterr()
    assert "hello world" in captured.out, f'Expected to see "hello world", but got {captured.out}'
"#;

    const GS_SAMPLE_2: &str = r#"import pytest

import hello_world.main as m
def test_main(capsys):
    m.main()
    captured = capsys.readouterr()
    assert "hello world" in captured.out
"#;

    fn manifest() -> ProjectManifest {
        ProjectManifest {
            module_names: ["hello_world", "hello_world.main"]
                .into_iter()
                .map(String::from)
                .collect(),
            known_external: default_known_external(),
            source_root: "src".into(),
        }
    }

    fn kinds(outcome: &RepairOutcome) -> Vec<RepairKind> {
        outcome.actions.iter().map(|a| a.kind).collect()
    }

    #[test]
    fn extract_single_fence() {
        let raw = "Here you go:\n```python\nimport pytest\n\ndef test_main():\n    assert True\n```\nDone.";
        let art = extract_code(raw).unwrap();
        assert_eq!(art.blocks.len(), 1);
        assert_eq!(art.chosen, 0);
        assert_eq!(art.blocks[0].lang.as_deref(), Some("python"));
        assert!(art.chosen_code().starts_with("import pytest"));
    }

    #[test]
    fn extract_without_fences() {
        let raw = "I think the test is:\ndef test_x(): pass";
        let art = extract_code(raw).unwrap();
        assert_eq!(art.blocks.len(), 1);
        assert_eq!(art.chosen_code(), raw);
    }

    #[test]
    fn extract_prefers_test_blocks() {
        let raw = "```bash\npip install pytest pytest-cov and a lot more text here\n```\n```python\ndef test_a():\n    pass\n```\n";
        let art = extract_code(raw).unwrap();
        assert_eq!(art.blocks.len(), 2);
        assert_eq!(art.chosen, 1);
    }

    #[test]
    fn extract_two_example_block() {
        let raw = format!(
            "```python\n# ============= EXAMPLE 1 ============\n\n{NL_SAMPLE_1}\n# ============ EXAMPLE 2 =============\n\nimport pytest\nfrom main import main  \n\ndef test_should_return_hello_world():\n    captured = capsys.readouterr()  \n    assert \"hello world\" in captured.out  \n```\n"
        );
        let art = extract_code(&raw).unwrap();
        let code = art.chosen_code();
        assert!(code.contains("def test_main"));
        assert!(code.contains("def test_should_return_hello_world"));
    }

    #[test]
    fn extract_blank_is_an_error() {
        assert_eq!(extract_code(" \n\t"), Err(PostprocessError::EmptyResponse));
    }

    #[test]
    fn extract_unclosed_fence() {
        let art = extract_code("text\n```python\ndef test_a():\n    pass\n").unwrap();
        assert_eq!(art.chosen_code(), "def test_a():\n    pass\n");
        assert_eq!(art.prose(), ["text\n```python\n", ""]);
    }

    #[test]
    fn repair_nl_sample_one() {
        let file = TestFile::raw("test_generated_hello.py", NL_SAMPLE_1);
        let out = repair(&file, &manifest());
        assert_eq!(
            kinds(&out),
            [RepairKind::AddPathBootstrap, RepairKind::RewriteModulePath]
        );
        assert!(out.file.source.contains("from hello_world.main import main"));
        let skipped: Vec<_> = out.skipped.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(skipped, ["capfd"]);
        assert!(!out
            .actions
            .iter()
            .any(|a| a.kind == RepairKind::AddImport));
    }

    #[test]
    fn repair_adds_bootstrap_for_project_imports() {
        let file = TestFile::raw("test_generated_hello.py", GS_SAMPLE_2);
        let out = repair(&file, &manifest());
        assert_eq!(kinds(&out), [RepairKind::AddPathBootstrap]);
        assert!(out.file.source.starts_with("import os, sys  # acceptgen: path bootstrap\n"));
        assert!(out.file.source.ends_with(GS_SAMPLE_2));
        assert!(out.actions[0].inserted_text.contains("\"src\""));
        assert_eq!(out.file.stage, Stage::Repaired { no_action_needed: false });
    }

    #[test]
    fn repair_adds_known_import_once() {
        let src = "def test_out():\n    buf = StringIO()\n    other = StringIO()\n    assert buf.getvalue() == other.getvalue()\n";
        let out = repair(&TestFile::raw("test_generated_x.py", src), &manifest());
        assert_eq!(kinds(&out), [RepairKind::AddImport]);
        assert_eq!(out.file.source.matches("from io import StringIO").count(), 1);
    }

    #[test]
    fn repair_is_idempotent() {
        for src in [NL_SAMPLE_1, GS_SAMPLE_2, "x = StringIO()\nhello_world.main.main()\n"] {
            let once = repair(&TestFile::raw("test_generated_x.py", src), &manifest());
            let twice = repair(&once.file, &manifest());
            assert!(twice.actions.is_empty(), "{src}: {:?}", twice.actions);
            assert_eq!(twice.file.source, once.file.source);
            assert_eq!(twice.file.stage, Stage::Repaired { no_action_needed: true });
        }
    }

    #[test]
    fn repair_imports_project_module_from_attribute_chain() {
        let out = repair(
            &TestFile::raw("test_generated_x.py", "def test_a():\n    hello_world.main.main()\n"),
            &manifest(),
        );
        assert_eq!(kinds(&out), [RepairKind::AddPathBootstrap, RepairKind::AddImport]);
        assert!(out.file.source.contains("import hello_world.main\n"));
    }

    #[test]
    fn repair_leaves_foreign_and_unknown_imports() {
        let src = "import io\nfrom hello import greet\n\ndef test_a():\n    greet()\n";
        let out = repair(&TestFile::raw("test_generated_x.py", src), &manifest());
        assert!(out.actions.is_empty());
        assert_eq!(out.file.source, src);
    }

    #[test]
    fn repair_bare_import_keeps_binding() {
        let src = "import main\n\ndef test_a():\n    main.main()\n";
        let out = repair(&TestFile::raw("test_generated_x.py", src), &manifest());
        assert!(out.file.source.contains("import hello_world.main as main\n"));
    }

    #[test]
    fn repair_keeps_future_imports_first() {
        let src = "from __future__ import annotations\nx = StringIO()\n";
        let out = repair(&TestFile::raw("t.py", src), &manifest());
        assert!(out
            .file
            .source
            .starts_with("from __future__ import annotations\nfrom io import StringIO\n"));
    }

    #[test]
    fn bootstrap_accounts_for_test_depth() {
        assert!(bootstrap_text("tests/unit/t.py", "src").contains("\"../../src\""));
        assert!(bootstrap_text("t.py", ".").contains("\".\""));
    }

    #[test]
    fn discovers_modules() {
        let dir = tempfile::tempdir().unwrap();
        for rel in [
            "src/pkg/__init__.py",
            "src/pkg/core.py",
            "src/pkg/sub/__init__.py",
            "src/pkg/sub/deep.py",
            "src/pkg/__pycache__/core.cpython-310.pyc",
            "src/tool.py",
            "src/notes.txt",
        ] {
            let path = dir.path().join(rel);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(path, "").unwrap();
        }
        let m = ProjectManifest::discover(dir.path(), "src", BTreeMap::new()).unwrap();
        let names: Vec<_> = m.module_names.iter().map(String::as_str).collect();
        assert_eq!(names, ["pkg", "pkg.core", "pkg.sub", "pkg.sub.deep", "tool"]);
    }

    fn run(collected: u32, passed: u32, failed: u32) -> RunResult {
        RunResult {
            collected,
            executed: passed + failed,
            passed,
            failed,
            ..RunResult::default()
        }
    }

    #[test]
    fn classify_collection_import_error() {
        let r = RunResult {
            collection_error: Some(ErrorSignature::new("ModuleNotFoundError", "No module named 'main'")),
            ..RunResult::default()
        };
        assert_eq!(classify_failure(&r), FailureClass::Dependency);
    }

    #[test]
    fn classify_undefined_name_at_runtime() {
        let mut r = run(1, 0, 1);
        r.runtime_errors.push(ErrorSignature::new(
            "NameError",
            "name 'predinted_labels' is not defined",
        ));
        assert_eq!(classify_failure(&r), FailureClass::Semantic);
    }

    #[test]
    fn classify_passing_and_assertion_failures() {
        assert_eq!(classify_failure(&run(2, 2, 0)), FailureClass::None);
        let mut r = run(1, 0, 1);
        r.runtime_errors.push(ErrorSignature::new("AssertionError", "assert '' == 'hello world'"));
        assert_eq!(classify_failure(&r), FailureClass::None);
    }

    #[test]
    fn classify_other_cases() {
        assert_eq!(classify_failure(&run(0, 0, 0)), FailureClass::Semantic);
        let syntax = RunResult {
            collection_error: Some(ErrorSignature::new("SyntaxError", "invalid syntax")),
            ..RunResult::default()
        };
        assert_eq!(classify_failure(&syntax), FailureClass::Semantic);
        let timeout = RunResult {
            timed_out: true,
            ..run(1, 1, 0)
        };
        assert_eq!(classify_failure(&timeout), FailureClass::Harness);
        assert_eq!(
            classify_failure(&RunResult::harness_failure("no python")),
            FailureClass::Harness
        );
        let mut inside = run(1, 0, 1);
        inside
            .runtime_errors
            .push(ErrorSignature::new("ModuleNotFoundError", "No module named 'hello_world'"));
        assert_eq!(classify_failure(&inside), FailureClass::Dependency);
    }
}
