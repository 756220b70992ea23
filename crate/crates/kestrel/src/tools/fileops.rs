//! File operations with strict path validation and size caps. Paths must be
//! absolute, free of traversal components, and inside an allowed root; every
//! returned path is re-checked against the same rule.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde_json::{json, Map, Value};

use super::{ParamSpec, ParamType, Tool, ToolCategory, ToolMetadata, ToolResult};

/// Why a path was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathRejection {
    Relative,
    Traversal,
    OutsideRoots,
}

impl std::fmt::Display for PathRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PathRejection::Relative => write!(f, "path must be absolute"),
            PathRejection::Traversal => write!(f, "path contains traversal components"),
            PathRejection::OutsideRoots => write!(f, "path is outside the allowed roots"),
        }
    }
}

/// Validate a path: absolute, no `..`/`.`/`~` components, and inside one of
/// the allowed roots after lexical normalization. Returns the normalized
/// path.
pub fn validate_path(path: &str, allowed_roots: &[PathBuf]) -> Result<PathBuf, PathRejection> {
    if path.starts_with('~') {
        return Err(PathRejection::Traversal);
    }
    // Inspect raw segments: `Path::components` silently folds `./` away.
    for segment in path.split('/') {
        if segment == ".." || segment == "." || segment.starts_with('~') {
            return Err(PathRejection::Traversal);
        }
    }
    let p = Path::new(path);
    if !p.is_absolute() {
        return Err(PathRejection::Relative);
    }
    let mut normalized = PathBuf::new();
    for component in p.components() {
        match component {
            Component::ParentDir | Component::CurDir => return Err(PathRejection::Traversal),
            Component::Normal(part) => normalized.push(part),
            Component::RootDir => normalized.push("/"),
            Component::Prefix(_) => return Err(PathRejection::Traversal),
        }
    }
    if allowed_roots.iter().any(|root| normalized.starts_with(root)) {
        Ok(normalized)
    } else {
        Err(PathRejection::OutsideRoots)
    }
}

/// Supported file operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileOp {
    Read,
    Write,
    List,
    Search,
    Delete,
    Move,
    Copy,
}

impl FileOp {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_uppercase().as_str() {
            "READ" => Some(Self::Read),
            "WRITE" => Some(Self::Write),
            "LIST" => Some(Self::List),
            "SEARCH" => Some(Self::Search),
            "DELETE" => Some(Self::Delete),
            "MOVE" => Some(Self::Move),
            "COPY" => Some(Self::Copy),
            _ => None,
        }
    }
}

/// Operation caps: 10MB reads/writes, 1000 directory entries, 100 search
/// matches.
#[derive(Debug, Clone, Copy)]
pub struct FileLimits {
    pub max_bytes: usize,
    pub max_list_entries: usize,
    pub max_search_matches: usize,
}

impl Default for FileLimits {
    fn default() -> Self {
        Self { max_bytes: 10 * 1024 * 1024, max_list_entries: 1000, max_search_matches: 100 }
    }
}

/// Glob match supporting `*` and `?` over file names.
fn glob_match(pattern: &str, name: &str) -> bool {
    fn inner(p: &[char], n: &[char]) -> bool {
        match (p.first(), n.first()) {
            (None, None) => true,
            (Some('*'), _) => {
                inner(&p[1..], n) || (!n.is_empty() && inner(p, &n[1..]))
            }
            (Some('?'), Some(_)) => inner(&p[1..], &n[1..]),
            (Some(pc), Some(nc)) if pc == nc => inner(&p[1..], &n[1..]),
            _ => false,
        }
    }
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    inner(&p, &n)
}

/// The file-operations tool.
pub struct FileOperationsTool {
    metadata: ToolMetadata,
    allowed_roots: Vec<PathBuf>,
    limits: FileLimits,
}

impl FileOperationsTool {
    pub fn new(allowed_roots: Vec<PathBuf>) -> Self {
        Self {
            metadata: ToolMetadata {
                name: "file_operations".to_string(),
                description: "Read, write, list, search, delete, move, and copy files inside the allowed roots".to_string(),
                category: ToolCategory::FileOperations,
                params: vec![
                    ParamSpec::required("operation", ParamType::String),
                    ParamSpec::required("path", ParamType::String),
                    ParamSpec::optional("content", ParamType::String, None),
                    ParamSpec::optional("destination", ParamType::String, None),
                    ParamSpec::optional("pattern", ParamType::String, None),
                    ParamSpec::optional("recursive", ParamType::Boolean, Some(json!(false))),
                    ParamSpec::optional("max_depth", ParamType::Integer, None),
                ],
                version: "1.0.0".to_string(),
                cost_estimate: 0.01,
                default_timeout: 30.0,
                extra: BTreeMap::new(),
            },
            allowed_roots,
            limits: FileLimits::default(),
        }
    }

    pub fn with_limits(mut self, limits: FileLimits) -> Self {
        self.limits = limits;
        self
    }

    fn check(&self, raw: &str) -> Result<PathBuf, ToolResult> {
        validate_path(raw, &self.allowed_roots)
            .map_err(|r| ToolResult::failure("PATH_REJECTED", format!("{raw}: {r}"), false))
    }

    fn read(&self, path: &Path) -> ToolResult {
        match std::fs::read(path) {
            Ok(bytes) => {
                let truncated = bytes.len() > self.limits.max_bytes;
                let slice = &bytes[..bytes.len().min(self.limits.max_bytes)];
                let content = String::from_utf8_lossy(slice).into_owned();
                let mut value = json!({"content": content, "bytes": slice.len()});
                if truncated {
                    value["warning"] = json!(format!(
                        "file exceeds {} bytes; content truncated",
                        self.limits.max_bytes
                    ));
                }
                ToolResult::success(value)
            }
            Err(e) => ToolResult::failure("READ_FAILED", e.to_string(), false),
        }
    }

    fn write(&self, path: &Path, content: &str) -> ToolResult {
        if content.len() > self.limits.max_bytes {
            return ToolResult::failure(
                "WRITE_TOO_LARGE",
                format!("refusing to write {} bytes (cap {})", content.len(), self.limits.max_bytes),
                false,
            );
        }
        if let Some(parent) = path.parent() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                return ToolResult::failure("WRITE_FAILED", e.to_string(), false);
            }
        }
        match std::fs::write(path, content) {
            Ok(()) => ToolResult::success(json!({"bytes_written": content.len()})),
            Err(e) => ToolResult::failure("WRITE_FAILED", e.to_string(), false),
        }
    }

    fn list(&self, path: &Path) -> ToolResult {
        let read = match std::fs::read_dir(path) {
            Ok(r) => r,
            Err(e) => return ToolResult::failure("LIST_FAILED", e.to_string(), false),
        };
        let mut names: Vec<String> = read
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        let total = names.len();
        let truncated = total > self.limits.max_list_entries;
        names.truncate(self.limits.max_list_entries);
        let mut value = json!({"entries": names, "total": total});
        if truncated {
            value["warning"] =
                json!(format!("directory holds {total} entries; list truncated to {}", self.limits.max_list_entries));
        }
        ToolResult::success(value)
    }

    fn search(&self, base: &Path, pattern: &str, recursive: bool, max_depth: Option<usize>) -> ToolResult {
        let mut matches = Vec::new();
        let mut stack = vec![(base.to_path_buf(), 0usize)];
        while let Some((dir, depth)) = stack.pop() {
            if matches.len() >= self.limits.max_search_matches {
                break;
            }
            let entries = match std::fs::read_dir(&dir) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let mut children: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
            children.sort();
            for child in children {
                if matches.len() >= self.limits.max_search_matches {
                    break;
                }
                let name = child.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                if child.is_file() && glob_match(pattern, &name) {
                    // Results must stay inside the allowed roots too.
                    if validate_path(&child.to_string_lossy(), &self.allowed_roots).is_ok() {
                        matches.push(child.to_string_lossy().into_owned());
                    }
                }
                if child.is_dir() && recursive {
                    let within_depth = max_depth.map(|m| depth < m).unwrap_or(true);
                    if within_depth {
                        stack.push((child, depth + 1));
                    }
                }
            }
        }
        let capped = matches.len() >= self.limits.max_search_matches;
        let mut value = json!({"matches": matches});
        if capped {
            value["warning"] = json!(format!("results capped at {}", self.limits.max_search_matches));
        }
        ToolResult::success(value)
    }
}

impl Tool for FileOperationsTool {
    fn metadata(&self) -> &ToolMetadata {
        &self.metadata
    }

    fn execute(&self, args: &Map<String, Value>) -> ToolResult {
        let op = match args.get("operation").and_then(Value::as_str).and_then(FileOp::parse) {
            Some(op) => op,
            None => return ToolResult::failure("INVALID_INPUT", "unknown operation", false),
        };
        let raw_path = args.get("path").and_then(Value::as_str).unwrap_or_default();
        let path = match self.check(raw_path) {
            Ok(p) => p,
            Err(r) => return r,
        };
        match op {
            FileOp::Read => self.read(&path),
            FileOp::Write => {
                let content = args.get("content").and_then(Value::as_str).unwrap_or_default();
                self.write(&path, content)
            }
            FileOp::List => self.list(&path),
            FileOp::Search => {
                let pattern = args.get("pattern").and_then(Value::as_str).unwrap_or("*");
                let recursive = args.get("recursive").and_then(Value::as_bool).unwrap_or(false);
                let max_depth = args.get("max_depth").and_then(Value::as_u64).map(|d| d as usize);
                self.search(&path, pattern, recursive, max_depth)
            }
            FileOp::Delete => match std::fs::remove_file(&path) {
                Ok(()) => ToolResult::success(json!({"deleted": path.to_string_lossy()})),
                Err(e) => ToolResult::failure("DELETE_FAILED", e.to_string(), false),
            },
            FileOp::Move | FileOp::Copy => {
                let raw_dest = args.get("destination").and_then(Value::as_str).unwrap_or_default();
                let dest = match self.check(raw_dest) {
                    Ok(d) => d,
                    Err(r) => return r,
                };
                let outcome = if op == FileOp::Move {
                    std::fs::rename(&path, &dest)
                } else {
                    std::fs::copy(&path, &dest).map(|_| ())
                };
                match outcome {
                    Ok(()) => ToolResult::success(json!({"destination": dest.to_string_lossy()})),
                    Err(e) => ToolResult::failure("FILE_OP_FAILED", e.to_string(), false),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roots(dir: &Path) -> Vec<PathBuf> {
        vec![dir.to_path_buf()]
    }

    fn args(pairs: &[(&str, Value)]) -> Map<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn path_validation_rules() {
        let allowed = vec![PathBuf::from("/workspace")];
        assert!(validate_path("/workspace/a.txt", &allowed).is_ok());
        assert_eq!(validate_path("a.txt", &allowed), Err(PathRejection::Relative));
        assert_eq!(
            validate_path("/workspace/../etc/passwd", &allowed),
            Err(PathRejection::Traversal)
        );
        assert_eq!(validate_path("/workspace/./x", &allowed), Err(PathRejection::Traversal));
        assert_eq!(validate_path("~/x", &allowed), Err(PathRejection::Traversal));
        assert_eq!(validate_path("/etc/passwd", &allowed), Err(PathRejection::OutsideRoots));
    }

    #[test]
    fn read_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tool = FileOperationsTool::new(roots(dir.path()));
        let file = dir.path().join("note.txt");
        let w = tool.execute(&args(&[
            ("operation", json!("WRITE")),
            ("path", json!(file.to_string_lossy())),
            ("content", json!("hello")),
        ]));
        assert!(w.success, "{w:?}");
        let r = tool.execute(&args(&[
            ("operation", json!("READ")),
            ("path", json!(file.to_string_lossy())),
        ]));
        assert!(r.success);
        assert_eq!(r.value["content"], "hello");
    }

    #[test]
    fn oversized_write_refused() {
        let dir = tempfile::tempdir().unwrap();
        let tool = FileOperationsTool::new(roots(dir.path()))
            .with_limits(FileLimits { max_bytes: 8, max_list_entries: 1000, max_search_matches: 100 });
        let file = dir.path().join("big.txt");
        let w = tool.execute(&args(&[
            ("operation", json!("WRITE")),
            ("path", json!(file.to_string_lossy())),
            ("content", json!("way too many bytes")),
        ]));
        assert!(!w.success);
        assert_eq!(w.error.unwrap().code, "WRITE_TOO_LARGE");
    }

    #[test]
    fn read_caps_and_warns() {
        let dir = tempfile::tempdir().unwrap();
        let tool = FileOperationsTool::new(roots(dir.path()))
            .with_limits(FileLimits { max_bytes: 4, max_list_entries: 1000, max_search_matches: 100 });
        let file = dir.path().join("long.txt");
        std::fs::write(&file, "0123456789").unwrap();
        let r = tool.execute(&args(&[
            ("operation", json!("READ")),
            ("path", json!(file.to_string_lossy())),
        ]));
        assert!(r.success);
        assert_eq!(r.value["content"], "0123");
        assert!(r.value["warning"].as_str().unwrap().contains("truncated"));
    }

    #[test]
    fn list_caps_and_warns() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..12 {
            std::fs::write(dir.path().join(format!("f{i:02}.txt")), "x").unwrap();
        }
        let tool = FileOperationsTool::new(roots(dir.path()))
            .with_limits(FileLimits { max_bytes: 1024, max_list_entries: 10, max_search_matches: 100 });
        let r = tool.execute(&args(&[
            ("operation", json!("LIST")),
            ("path", json!(dir.path().to_string_lossy())),
        ]));
        assert!(r.success);
        assert_eq!(r.value["entries"].as_array().unwrap().len(), 10);
        assert_eq!(r.value["total"], 12);
        assert!(r.value["warning"].as_str().unwrap().contains("truncated"));
    }

    #[test]
    fn search_respects_recursion_flag() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("top.md"), "x").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/inner.md"), "x").unwrap();
        let tool = FileOperationsTool::new(roots(dir.path()));

        let flat = tool.execute(&args(&[
            ("operation", json!("SEARCH")),
            ("path", json!(dir.path().to_string_lossy())),
            ("pattern", json!("*.md")),
        ]));
        assert_eq!(flat.value["matches"].as_array().unwrap().len(), 1);

        let deep = tool.execute(&args(&[
            ("operation", json!("SEARCH")),
            ("path", json!(dir.path().to_string_lossy())),
            ("pattern", json!("*.md")),
            ("recursive", json!(true)),
        ]));
        assert_eq!(deep.value["matches"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn traversal_rejected_through_tool() {
        let dir = tempfile::tempdir().unwrap();
        let tool = FileOperationsTool::new(roots(dir.path()));
        let r = tool.execute(&args(&[
            ("operation", json!("READ")),
            ("path", json!(format!("{}/../etc/passwd", dir.path().to_string_lossy()))),
        ]));
        assert!(!r.success);
        assert_eq!(r.error.unwrap().code, "PATH_REJECTED");
    }

    #[test]
    fn glob_basics() {
        assert!(glob_match("*.md", "notes.md"));
        assert!(!glob_match("*.md", "notes.txt"));
        assert!(glob_match("f?.txt", "f1.txt"));
        assert!(!glob_match("f?.txt", "f12.txt"));
        assert!(glob_match("*", "anything"));
    }
}
