use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, GatewayError};

type Slot = Arc<Mutex<Option<String>>>;

/// Response cache keyed by request digest.
///
/// Always holds an in-process map; with a directory it also persists one
/// `<digest>.json` file per response so later runs can resume.
#[derive(Debug, Default)]
pub struct ResponseCache {
    slots: Mutex<HashMap<String, Slot>>,
    dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    digest: String,
    stage: String,
    model: String,
    text: String,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            slots: Mutex::default(),
            dir: Some(dir),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub(super) fn slot(&self, digest: &str) -> Slot {
        let mut slots = self.slots.lock().unwrap_or_else(|p| p.into_inner());
        slots.entry(digest.to_string()).or_default().clone()
    }

    fn path(&self, digest: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{digest}.json")))
    }

    pub(super) fn load_file(&self, digest: &str, _request: &ChatRequest) -> Result<Option<String>, GatewayError> {
        let Some(path) = self.path(digest) else {
            return Ok(None);
        };
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let file: CacheFile = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        if file.digest != digest {
            return Err(GatewayError::Cache(format!("{}: digest mismatch", path.display())));
        }
        Ok(Some(file.text))
    }

    pub(super) fn store_file(&self, digest: &str, request: &ChatRequest, response: &ChatResponse) -> Result<(), GatewayError> {
        let Some(path) = self.path(digest) else {
            return Ok(());
        };
        let file = CacheFile {
            digest: digest.to_string(),
            stage: request.stage.to_string(),
            model: request.model.clone(),
            text: response.text.clone(),
        };
        let body = serde_json::to_string_pretty(&file).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::thread;

    use super::super::*;
    use super::*;

    fn scripted() -> Arc<ScriptedBackend> {
        let mut backend = ScriptedBackend::new();
        backend.insert(StageId::SimTechnical, "p1", "Score: 0.8, Reason: same method");
        Arc::new(backend)
    }

    #[test]
    fn second_identical_request_hits_cache() {
        let backend = scripted();
        let gw = Gateway::new(backend.clone());
        let req = ChatRequest::new(StageId::SimTechnical, "p1", "compare");
        let first = gw.complete(&req).unwrap();
        assert!(!first.cached);
        assert_eq!(first.usage.calls, 1);
        let second = gw.complete(&req).unwrap();
        assert!(second.cached);
        assert_eq!(second.text, first.text);
        assert_eq!(second.usage.calls, 0);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn concurrent_identical_requests_issue_one_call() {
        let backend = scripted();
        let gw = Arc::new(Gateway::new(backend.clone()));
        let req = ChatRequest::new(StageId::SimTechnical, "p1", "compare");
        let handles: Vec<_> = (0..16)
            .map(|_| {
                let gw = gw.clone();
                let req = req.clone();
                thread::spawn(move || gw.complete(&req).unwrap())
            })
            .collect();
        let responses: Vec<ChatResponse> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(backend.calls(), 1);
        assert_eq!(responses.iter().filter(|r| !r.cached).count(), 1);
    }

    #[test]
    fn directory_cache_survives_new_gateway() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::new(StageId::SimTechnical, "p1", "compare");

        let cold = scripted();
        let gw = Gateway::new(cold.clone()).with_cache(Some(ResponseCache::with_dir(dir.path()).unwrap()));
        assert!(!gw.complete(&req).unwrap().cached);
        let file = dir.path().join(format!("{}.json", req.digest(PIPELINE_VERSION)));
        assert!(file.exists());

        let warm = scripted();
        let gw = Gateway::new(warm.clone()).with_cache(Some(ResponseCache::with_dir(dir.path()).unwrap()));
        let out = gw.complete(&req).unwrap();
        assert!(out.cached);
        assert_eq!(out.text, "Score: 0.8, Reason: same method");
        assert_eq!(warm.calls(), 0);
    }

    #[test]
    fn version_change_invalidates_entries() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::new(StageId::SimTechnical, "p1", "compare");
        let gw = Gateway::new(scripted()).with_cache(Some(ResponseCache::with_dir(dir.path()).unwrap()));
        gw.complete(&req).unwrap();
        let backend = scripted();
        let gw = Gateway::new(backend.clone())
            .with_cache(Some(ResponseCache::with_dir(dir.path()).unwrap()))
            .with_version("marg-prompts-v2");
        assert!(!gw.complete(&req).unwrap().cached);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn corrupt_cache_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let req = ChatRequest::new(StageId::SimTechnical, "p1", "compare");
        fs::write(dir.path().join(format!("{}.json", req.digest(PIPELINE_VERSION))), "not json").unwrap();
        let gw = Gateway::new(scripted()).with_cache(Some(ResponseCache::with_dir(dir.path()).unwrap()));
        assert!(matches!(gw.complete(&req), Err(GatewayError::Cache(_))));
    }
}
