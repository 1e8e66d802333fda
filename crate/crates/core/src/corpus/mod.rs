//! Corpus ingestion: HTML/text/JSONL inputs to normalized documents,
//! queries and relevance judgments.

mod html;
mod stats;
mod text;

pub use html::html_to_text;
pub use stats::{length_stats, LengthStats, DEFAULT_BUCKET_WIDTH, DEFAULT_LENGTH_THRESHOLD};
pub use text::{normalize_text, tokenize, truncate_words, word_count};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
    pub text: String,
    pub word_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_tag: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: &str) -> Self {
        let text = normalize_text(text);
        Document {
            id: id.into(),
            source_path: None,
            word_count: word_count(&text),
            text,
            service_tag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub word_count: usize,
}

impl Query {
    pub fn new(id: impl Into<String>, text: &str) -> Self {
        let text = normalize_text(text);
        Query {
            id: id.into(),
            word_count: word_count(&text),
            text,
        }
    }
}

/// A relevance judgment: the single labeled positive document for a query.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QrelPair {
    pub query_id: String,
    pub positive_doc_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Html,
    Text,
    Jsonl,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "html" => Ok(InputFormat::Html),
            "text" | "txt" => Ok(InputFormat::Text),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown input format `{other}`"))),
        }
    }
}

/// An immutable, id-ordered collection of documents, queries and qrels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    queries: Vec<Query>,
    qrels: Vec<QrelPair>,
    doc_index: BTreeMap<String, usize>,
    query_index: BTreeMap<String, usize>,
    qrel_index: BTreeMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, sorting every collection by id and enforcing id
    /// uniqueness and qrel referential integrity.
    pub fn new(mut documents: Vec<Document>, mut queries: Vec<Query>, mut qrels: Vec<QrelPair>) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        queries.sort_by(|a, b| a.id.cmp(&b.id));
        qrels.sort();

        let doc_index = unique_index(documents.iter().map(|d| d.id.as_str()))?;
        let query_index = unique_index(queries.iter().map(|q| q.id.as_str()))?;
        let mut qrel_index = BTreeMap::new();
        for (i, qrel) in qrels.iter().enumerate() {
            if !query_index.contains_key(&qrel.query_id) {
                return Err(Error::UnknownReference {
                    query_id: qrel.query_id.clone(),
                    kind: "query",
                    id: qrel.query_id.clone(),
                });
            }
            if !doc_index.contains_key(&qrel.positive_doc_id) {
                return Err(Error::UnknownReference {
                    query_id: qrel.query_id.clone(),
                    kind: "document",
                    id: qrel.positive_doc_id.clone(),
                });
            }
            if qrel_index.insert(qrel.query_id.clone(), i).is_some() {
                return Err(Error::invalid(format!(
                    "query `{}` has more than one qrel",
                    qrel.query_id
                )));
            }
        }
        Ok(Corpus {
            documents,
            queries,
            qrels,
            doc_index,
            query_index,
            qrel_index,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn qrels(&self) -> &[QrelPair] {
        &self.qrels
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_index.get(id).map(|&i| &self.documents[i])
    }

    pub fn query(&self, id: &str) -> Option<&Query> {
        self.query_index.get(id).map(|&i| &self.queries[i])
    }

    pub fn qrel(&self, query_id: &str) -> Option<&QrelPair> {
        self.qrel_index.get(query_id).map(|&i| &self.qrels[i])
    }

    /// Queries that carry a qrel and at least one token, in id order.
    pub fn minable_queries(&self) -> Vec<&Query> {
        self.queries
            .iter()
            .filter(|q| q.word_count >= 1 && self.qrel_index.contains_key(&q.id))
            .collect()
    }

    /// Writes `documents.jsonl`, `queries.jsonl` and `qrels.jsonl` to `dir`.
    pub fn write_jsonl(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        write_jsonl(&dir.join(QUERIES_FILE), &self.queries)?;
        write_jsonl(&dir.join(QRELS_FILE), &self.qrels)
    }

    /// Loads a corpus directory previously written by [`Corpus::write_jsonl`].
    pub fn load(dir: &Path) -> Result<Self> {
        ingest(dir, InputFormat::Jsonl, &IngestOptions::default())
    }
}

fn unique_index<'a>(ids: impl Iterator<Item = &'a str>) -> Result<BTreeMap<String, usize>> {
    let mut index = BTreeMap::new();
    for (i, id) in ids.enumerate() {
        if index.insert(id.to_string(), i).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(index)
}

/// Extra inputs for [`ingest`]: query and qrel files that accompany a
/// document directory.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
}

#[derive(Deserialize)]
struct DocumentRecord {
    id: String,
    text: String,
    #[serde(default)]
    source_path: Option<String>,
    #[serde(default)]
    service_tag: Option<String>,
}

#[derive(Deserialize)]
struct QueryRecord {
    id: String,
    text: String,
}

/// Reads documents (and optionally queries and qrels) from `path`.
///
/// * `html` / `text`: `path` is a file or a directory walked recursively;
///   ids are the `/`-separated path relative to `path`.
/// * `jsonl`: `path` is either a documents file or a directory holding
///   `documents.jsonl` plus optional `queries.jsonl` and `qrels.jsonl`.
pub fn ingest(path: &Path, format: InputFormat, options: &IngestOptions) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input does not exist"),
        ));
    }
    let mut queries_path = options.queries.clone();
    let mut qrels_path = options.qrels.clone();

    let documents = match format {
        InputFormat::Html | InputFormat::Text => {
            let files = collect_files(path, format)?;
            par::try_map(&files, |(id, file)| read_markup_file(id, file, format))?
        }
        InputFormat::Jsonl => {
            let docs_file = if path.is_dir() {
                let q = path.join(QUERIES_FILE);
                let r = path.join(QRELS_FILE);
                if queries_path.is_none() && q.exists() {
                    queries_path = Some(q);
                }
                if qrels_path.is_none() && r.exists() {
                    qrels_path = Some(r);
                }
                path.join(DOCUMENTS_FILE)
            } else {
                path.to_path_buf()
            };
            read_jsonl::<DocumentRecord>(&docs_file)?
                .into_iter()
                .map(|r| {
                    let mut doc = Document::new(r.id, &r.text);
                    doc.source_path = r.source_path;
                    doc.service_tag = r.service_tag;
                    doc
                })
                .collect()
        }
    };

    let queries = match &queries_path {
        Some(p) => read_jsonl::<QueryRecord>(p)?
            .into_iter()
            .map(|r| Query::new(r.id, &r.text))
            .collect(),
        None => Vec::new(),
    };
    let qrels = match &qrels_path {
        Some(p) => read_jsonl::<QrelPair>(p)?,
        None => Vec::new(),
    };
    Corpus::new(documents, queries, qrels)
}

fn collect_files(root: &Path, format: InputFormat) -> Result<Vec<(String, PathBuf)>> {
    if root.is_file() {
        let id = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(id, root.to_path_buf())]);
    }
    let extensions: &[&str] = match format {
        InputFormat::Html => &["html", "htm", "xhtml"],
        _ => &["txt", "text", "md"],
    };
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
            {
                let rel = p.strip_prefix(root).unwrap_or(&p);
                let id = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.push((id, p));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read_markup_file(id: &str, file: &Path, format: InputFormat) -> Result<Document> {
    let raw = fs::read(file).map_err(|e| Error::io(file, e))?;
    let raw = String::from_utf8_lossy(&raw);
    let text = match format {
        InputFormat::Html => html_to_text(&raw),
        _ => raw.into_owned(),
    };
    let mut doc = Document::new(id, &text);
    doc.source_path = Some(file.to_string_lossy().into_owned());
    // first directory component doubles as a service tag
    doc.service_tag = id.split_once('/').map(|(dir, _)| dir.to_string());
    Ok(doc)
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes one JSON object per line, LF-terminated.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::invalid(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Set of document ids; handy for referential checks in other stages.
pub fn doc_id_set(corpus: &Corpus) -> BTreeSet<&str> {
    corpus.documents.iter().map(|d| d.id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, body: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, body).unwrap();
    }

    #[test]
    fn ingests_single_html_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.html");
        write(&f, "<p>x</p>");
        let corpus = ingest(&f, InputFormat::Html, &IngestOptions::default()).unwrap();
        assert_eq!(corpus.documents().len(), 1);
        let doc = &corpus.documents()[0];
        assert_eq!(doc.id, "a.html");
        assert_eq!(doc.text, "x");
        assert_eq!(doc.word_count, 1);
    }

    #[test]
    fn html_directory_ids_are_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("net/vcn.html"), "<nav>menu</nav><p>VCN  setup</p>");
        write(&dir.path().join("b.htm"), "<p>two words</p>");
        write(&dir.path().join("ignored.txt"), "nope");
        let corpus = ingest(dir.path(), InputFormat::Html, &IngestOptions::default()).unwrap();
        let ids: Vec<_> = corpus.documents().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["b.htm", "net/vcn.html"]);
        let vcn = corpus.document("net/vcn.html").unwrap();
        assert_eq!(vcn.text, "VCN setup");
        assert_eq!(vcn.service_tag.as_deref(), Some("net"));
    }

    #[test]
    fn duplicate_jsonl_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("docs.jsonl");
        write(&f, "{\"id\":\"d1\",\"text\":\"a\"}\n{\"id\":\"d1\",\"text\":\"b\"}\n");
        let err = ingest(&f, InputFormat::Jsonl, &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "d1"), "{err}");
    }

    #[test]
    fn qrel_with_unknown_doc_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join(DOCUMENTS_FILE), "{\"id\":\"d1\",\"text\":\"a\"}\n");
        write(&dir.path().join(QUERIES_FILE), "{\"id\":\"q9\",\"text\":\"a\"}\n");
        write(
            &dir.path().join(QRELS_FILE),
            "{\"query_id\":\"q9\",\"positive_doc_id\":\"dX\"}\n",
        );
        let err = Corpus::load(dir.path()).unwrap_err();
        assert!(
            matches!(err, Error::UnknownReference { ref id, .. } if id == "dX"),
            "{err}"
        );
    }

    #[test]
    fn second_qrel_for_query_rejected() {
        let docs = vec![Document::new("d1", "a"), Document::new("d2", "b")];
        let queries = vec![Query::new("q1", "a")];
        let qrels = vec![
            QrelPair {
                query_id: "q1".into(),
                positive_doc_id: "d1".into(),
            },
            QrelPair {
                query_id: "q1".into(),
                positive_doc_id: "d2".into(),
            },
        ];
        assert!(Corpus::new(docs, queries, qrels).is_err());
    }

    #[test]
    fn word_count_matches_tokenizer() {
        let doc = Document::new("d", "  upgrade, my  mount-targets. !! ");
        assert_eq!(doc.word_count, tokenize(&doc.text).len());
        assert_eq!(doc.word_count, 3);
    }

    #[test]
    fn jsonl_roundtrip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("in/z.html"), "<p>zeta</p>");
        write(&dir.path().join("in/a.html"), "<div>alpha <b>beta</b></div>");
        let c1 = ingest(&dir.path().join("in"), InputFormat::Html, &IngestOptions::default()).unwrap();
        let c2 = ingest(&dir.path().join("in"), InputFormat::Html, &IngestOptions::default()).unwrap();
        c1.write_jsonl(&dir.path().join("o1")).unwrap();
        c2.write_jsonl(&dir.path().join("o2")).unwrap();
        let a = fs::read(dir.path().join("o1").join(DOCUMENTS_FILE)).unwrap();
        let b = fs::read(dir.path().join("o2").join(DOCUMENTS_FILE)).unwrap();
        assert_eq!(a, b);
        let reloaded = Corpus::load(&dir.path().join("o1")).unwrap();
        assert_eq!(reloaded.documents().len(), 2);
        assert_eq!(reloaded.document("a.html").unwrap().text, "alpha beta");
    }

    #[test]
    fn minable_queries_need_tokens_and_qrels() {
        let docs = vec![Document::new("d1", "a")];
        let queries = vec![Query::new("q1", "a"), Query::new("q2", "..."), Query::new("q3", "b")];
        let qrels = vec![
            QrelPair {
                query_id: "q1".into(),
                positive_doc_id: "d1".into(),
            },
            QrelPair {
                query_id: "q2".into(),
                positive_doc_id: "d1".into(),
            },
        ];
        let c = Corpus::new(docs, queries, qrels).unwrap();
        let ids: Vec<_> = c.minable_queries().iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, vec!["q1"]);
    }
}
