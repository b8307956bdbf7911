//! Versioned document model: spans with stable ids, span-granular edits and
//! full-text diffing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest;
use crate::syntax::{normalize_text, parse_command, split_spans, Command, SpanText};

/// Session-unique span identifier. `0` is the document-start anchor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanId(pub u64);

impl SpanId {
    pub const START: SpanId = SpanId(0);
}

impl fmt::Debug for SpanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl fmt::Display for SpanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Monotone span id source. Ids are never handed out twice.
#[derive(Clone, Debug)]
pub struct IdAllocator {
    next: u64,
}

impl Default for IdAllocator {
    fn default() -> Self {
        IdAllocator { next: 1 }
    }
}

impl IdAllocator {
    pub fn new() -> IdAllocator {
        IdAllocator::default()
    }

    pub fn fresh(&mut self) -> SpanId {
        let id = SpanId(self.next);
        self.next += 1;
        id
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanEntry {
    pub id: SpanId,
    pub text: SpanText,
    pub command: Command,
    pub norm_hash: Digest,
    /// Whitespace between the previous span (or document start) and this one.
    lead: String,
}

impl SpanEntry {
    fn new(id: SpanId, text: SpanText, lead: String) -> SpanEntry {
        let command = parse_command(&text);
        let norm_hash = norm_hash(&text.raw);
        SpanEntry {
            id,
            text,
            command,
            norm_hash,
            lead,
        }
    }
}

pub fn norm_hash(raw: &str) -> Digest {
    Digest::of(normalize_text(raw).as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentVersion {
    pub version: u64,
    spans: Vec<SpanEntry>,
    tail: String,
}

impl DocumentVersion {
    /// Version 0: the empty document every session starts from.
    pub fn empty() -> DocumentVersion {
        DocumentVersion {
            version: 0,
            spans: Vec::new(),
            tail: String::new(),
        }
    }

    pub fn spans(&self) -> &[SpanEntry] {
        &self.spans
    }

    pub fn position(&self, id: SpanId) -> Option<usize> {
        self.spans.iter().position(|s| s.id == id)
    }

    pub fn get(&self, id: SpanId) -> Option<&SpanEntry> {
        self.position(id).map(|i| &self.spans[i])
    }

    pub fn ids(&self) -> Vec<SpanId> {
        self.spans.iter().map(|s| s.id).collect()
    }

    /// The document text this version stands for.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.spans {
            out.push_str(&s.lead);
            out.push_str(&s.text.raw);
        }
        out.push_str(&self.tail);
        out
    }

    pub fn with_version(mut self, version: u64) -> DocumentVersion {
        self.version = version;
        self
    }

    fn relayout(&mut self) {
        let mut offset = 0;
        for (i, s) in self.spans.iter_mut().enumerate() {
            if i > 0 && s.lead.is_empty() {
                s.lead.push('\n');
            }
            offset += s.lead.len();
            s.text.start = offset;
            offset += s.text.raw.len();
            s.text.end = offset;
        }
    }
}

fn entries(text: &str, ids: &mut IdAllocator) -> (Vec<SpanEntry>, String) {
    let mut prev = 0;
    let mut out = Vec::new();
    for span in split_spans(text) {
        let lead = text[prev..span.start].to_string();
        prev = span.end;
        out.push(SpanEntry::new(ids.fresh(), span, lead));
    }
    (out, text[prev..].to_string())
}

pub fn init_document(text: &str, ids: &mut IdAllocator) -> DocumentVersion {
    let (spans, tail) = entries(text, ids);
    DocumentVersion {
        version: 1,
        spans,
        tail,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    InsertAfter { anchor: SpanId, text: String },
    Remove { id: SpanId },
    Replace { id: SpanId, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("unknown span {0}")]
    UnknownSpan(SpanId),
}

/// Applies `edits` in order. Either every edit applies or none does.
pub fn apply_edits(
    v: &DocumentVersion,
    edits: &[Edit],
    ids: &mut IdAllocator,
) -> Result<DocumentVersion, DocumentError> {
    let mut alloc = ids.clone();
    let mut spans = v.spans.clone();
    let find = |spans: &[SpanEntry], id: SpanId| {
        spans
            .iter()
            .position(|s| s.id == id)
            .ok_or(DocumentError::UnknownSpan(id))
    };
    for e in edits {
        match e {
            Edit::InsertAfter { anchor, text } => {
                let at = if *anchor == SpanId::START {
                    0
                } else {
                    find(&spans, *anchor)? + 1
                };
                let (new, _) = entries(text, &mut alloc);
                spans.splice(at..at, new);
            }
            Edit::Remove { id } => {
                let at = find(&spans, *id)?;
                spans.remove(at);
            }
            Edit::Replace { id, text } => {
                let at = find(&spans, *id)?;
                let (mut new, _) = entries(text, &mut alloc);
                if let Some(first) = new.first_mut() {
                    if first.lead.is_empty() {
                        first.lead = spans[at].lead.clone();
                    }
                }
                spans.splice(at..=at, new);
            }
        }
    }
    *ids = alloc;
    let mut out = DocumentVersion {
        version: v.version + 1,
        spans,
        tail: v.tail.clone(),
    };
    out.relayout();
    Ok(out)
}

/// Longest common subsequence of `a` and `b`, as index pairs. Ties go to
/// the alignment that matches earlier elements of `a`.
pub fn lcs<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (ma, mb) = (&a[prefix..], &b[prefix..]);
    let (n, m) = (ma.len(), mb.len());
    // table[i][j] = LCS length of ma[i..], mb[j..]
    let mut table = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[at(i, j)] = if ma[i] == mb[j] {
                table[at(i + 1, j + 1)] + 1
            } else {
                table[at(i + 1, j)].max(table[at(i, j + 1)])
            };
        }
    }
    let mut out: Vec<(usize, usize)> = (0..prefix).map(|i| (i, i)).collect();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if ma[i] == mb[j] {
            out.push((prefix + i, prefix + j));
            i += 1;
            j += 1;
        } else if table[at(i, j + 1)] >= table[at(i + 1, j)] {
            j += 1;
        } else {
            i += 1;
        }
    }
    out
}

struct NewSpans<'a> {
    text: &'a str,
    spans: Vec<SpanText>,
    hashes: Vec<Digest>,
}

impl<'a> NewSpans<'a> {
    fn new(text: &'a str) -> NewSpans<'a> {
        let spans = split_spans(text);
        let hashes = spans.iter().map(|s| norm_hash(&s.raw)).collect();
        NewSpans { text, spans, hashes }
    }

    /// Source text covering new spans `lo..hi`.
    fn slice(&self, lo: usize, hi: usize) -> String {
        self.text[self.spans[lo].start..self.spans[hi - 1].end].to_string()
    }
}

fn diff_against(v: &DocumentVersion, new: &NewSpans<'_>) -> (Vec<Edit>, Vec<(usize, usize)>) {
    let old: Vec<Digest> = v.spans.iter().map(|s| s.norm_hash).collect();
    let matches = lcs(&old, &new.hashes);
    let mut edits = Vec::new();
    let (mut oi, mut ni) = (0, 0);
    let mut anchor = SpanId::START;
    let sentinel = (old.len(), new.hashes.len());
    for &(mo, mn) in matches.iter().chain(std::iter::once(&sentinel)) {
        let removed = &v.spans[oi..mo];
        if mn > ni {
            let text = new.slice(ni, mn);
            match removed.split_first() {
                Some((first, rest)) => {
                    edits.push(Edit::Replace { id: first.id, text });
                    edits.extend(rest.iter().map(|s| Edit::Remove { id: s.id }));
                }
                None => edits.push(Edit::InsertAfter { anchor, text }),
            }
        } else {
            edits.extend(removed.iter().map(|s| Edit::Remove { id: s.id }));
        }
        if mo < old.len() {
            anchor = v.spans[mo].id;
        }
        oi = mo + 1;
        ni = mn + 1;
    }
    (edits, matches)
}

/// Span edits turning `v` into the span sequence of `new_text`, matching
/// spans by normalized content hash.
pub fn diff_full_text(v: &DocumentVersion, new_text: &str) -> Vec<Edit> {
    diff_against(v, &NewSpans::new(new_text)).0
}

/// Diffs, applies, and then adopts `new_text` verbatim as the text of the
/// result: matched spans keep ids and hashes but take the new raw text
/// (which may differ in comments and whitespace).
pub fn apply_full_text(
    v: &DocumentVersion,
    new_text: &str,
    ids: &mut IdAllocator,
) -> (DocumentVersion, Vec<Edit>) {
    let new = NewSpans::new(new_text);
    let (edits, _) = diff_against(v, &new);
    let mut next = apply_edits(v, &edits, ids).expect("diff only references existing spans");
    debug_assert_eq!(next.spans.len(), new.spans.len());
    let mut prev = 0;
    for (entry, span) in next.spans.iter_mut().zip(&new.spans) {
        debug_assert_eq!(entry.norm_hash, norm_hash(&span.raw));
        entry.lead = new_text[prev..span.start].to_string();
        prev = span.end;
        if entry.text.raw != span.raw {
            entry.command = parse_command(span);
        }
        entry.text = span.clone();
    }
    next.tail = new_text[prev..].to_string();
    (next, edits)
}
