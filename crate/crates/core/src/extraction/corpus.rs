use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// Read a corpus file or directory.
///
/// `.txt` files are one document each, identified by file name. `.jsonl`
/// files hold one `{id, text}` document per line. Directories are read in
/// file-name order; other extensions are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let files: Vec<PathBuf> = if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut docs = Vec::new();
    for file in files {
        match file.extension().and_then(|e| e.to_str()) {
            Some("txt") => {
                let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
                let id = file
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default()
                    .to_string();
                docs.push(Document { id, text });
            }
            Some("jsonl") => docs.extend(read_jsonl_documents(&file)?),
            _ => {}
        }
    }
    Ok(docs)
}

fn read_jsonl_documents(file: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: file.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if doc.id.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: file.to_path_buf(),
                line: i + 1,
                message: "empty document id".into(),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus_jsonl(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
