//! ARPA backoff n-gram language model: loader and Katz-backoff scorer.
//! All stored values are log10, matching the file format.

use std::collections::HashMap;

use super::SearchError;

pub const SENTENCE_BEGIN: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";

/// Log probability assigned to tokens that are neither in the vocabulary nor
/// coverable by `<unk>`.
pub const OOV_LOG10: f64 = -99.0;

#[derive(Debug, Clone, Copy)]
struct Entry {
    logprob: f64,
    backoff: f64,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab: HashMap<String, u32>,
    vocab_list: Vec<String>,
    /// `tables[n-1]` maps n-token id sequences to their entry.
    tables: Vec<HashMap<Vec<u32>, Entry>>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab_list
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(token)
    }

    /// Whether the model stores an explicit entry for this exact n-gram.
    pub fn has_ngram(&self, tokens: &[&str]) -> bool {
        if tokens.is_empty() || tokens.len() > self.order {
            return false;
        }
        let Some(ids) = tokens
            .iter()
            .map(|t| self.vocab.get(*t).copied())
            .collect::<Option<Vec<u32>>>()
        else {
            return false;
        };
        self.tables[tokens.len() - 1].contains_key(&ids)
    }

    fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab
            .get(token)
            .or_else(|| self.vocab.get(UNKNOWN))
            .copied()
    }

    /// Katz backoff score of `token` after `context`, in log10. The longest
    /// matching explicit n-gram wins; shortening the context multiplies in
    /// (adds, in log space) the context's backoff weight when present.
    /// Out-of-vocabulary tokens map to `<unk>`, or [`OOV_LOG10`] without one.
    pub fn logprob(&self, context: &[&str], token: &str) -> f64 {
        let Some(token_id) = self.token_id(token) else {
            return OOV_LOG10;
        };
        // Unknown context tokens without <unk> get a never-matching id, which
        // simply forces backoff through the shorter contexts.
        let ids: Vec<u32> = context
            .iter()
            .map(|t| self.token_id(t).unwrap_or(u32::MAX))
            .collect();

        let max_context = self.order.saturating_sub(1).min(ids.len());
        let mut accumulated_backoff = 0.0;
        for ctx_len in (0..=max_context).rev() {
            let ctx = &ids[ids.len() - ctx_len..];
            let mut key = Vec::with_capacity(ctx_len + 1);
            key.extend_from_slice(ctx);
            key.push(token_id);
            if let Some(entry) = self.tables[ctx_len].get(&key) {
                return accumulated_backoff + entry.logprob;
            }
            if ctx_len > 0 {
                if let Some(entry) = self.tables[ctx_len - 1].get(ctx) {
                    accumulated_backoff += entry.backoff;
                }
            }
        }
        // No unigram entry for the token (and no <unk> line): floor it.
        accumulated_backoff + OOV_LOG10
    }

    /// Natural-log joint score of a token sequence with `<s>` context and a
    /// terminating `</s>`, as used for beam-search fusion.
    pub fn sentence_logprob_ln(&self, tokens: &[&str]) -> f64 {
        let ln10 = std::f64::consts::LN_10;
        let mut context = vec![SENTENCE_BEGIN];
        let mut total = 0.0;
        for &token in tokens {
            total += self.logprob(&context, token) * ln10;
            context.push(token);
        }
        total + self.logprob(&context, SENTENCE_END) * ln10
    }
}

/// Parses the standard ARPA text format (`\data\` header, `\n-grams:`
/// sections with log10 probabilities and optional backoff weights).
pub fn load_arpa(text: &str) -> Result<NGramModel, SearchError> {
    let mut declared: Vec<usize> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();

    // Skip everything up to \data\.
    for (_, line) in lines.by_ref() {
        if line.trim() == "\\data\\" {
            break;
        }
    }
    while let Some(&(_, line)) = lines.peek() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("ngram ") {
            let (order, count) = rest.split_once('=').ok_or_else(|| {
                SearchError::MalformedInput(format!("bad ngram count line: {line:?}"))
            })?;
            let order: usize = order.trim().parse().map_err(|_| {
                SearchError::MalformedInput(format!("bad ngram order: {line:?}"))
            })?;
            let count: usize = count.trim().parse().map_err(|_| {
                SearchError::MalformedInput(format!("bad ngram count: {line:?}"))
            })?;
            if order != declared.len() + 1 {
                return Err(SearchError::MalformedInput(format!(
                    "ngram orders must be consecutive, got {order}"
                )));
            }
            declared.push(count);
            lines.next();
        } else if line.is_empty() {
            lines.next();
        } else {
            break;
        }
    }
    if declared.is_empty() {
        return Err(SearchError::MalformedInput("missing \\data\\ section".into()));
    }

    let order = declared.len();
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut vocab_list: Vec<String> = Vec::new();
    let mut tables: Vec<HashMap<Vec<u32>, Entry>> = vec![HashMap::new(); order];
    let mut current: Option<usize> = None;

    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\end\\" {
            break;
        }
        if let Some(section) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
            let n: usize = section.parse().map_err(|_| {
                SearchError::MalformedInput(format!("line {}: bad section {line:?}", lineno + 1))
            })?;
            if n == 0 || n > order {
                return Err(SearchError::MalformedInput(format!(
                    "line {}: section order {n} outside declared range",
                    lineno + 1
                )));
            }
            current = Some(n);
            continue;
        }
        let n = current.ok_or_else(|| {
            SearchError::MalformedInput(format!("line {}: entry outside any section", lineno + 1))
        })?;

        let mut fields = line.split_whitespace();
        let logprob: f64 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| {
                SearchError::MalformedInput(format!("line {}: missing log probability", lineno + 1))
            })?;
        let rest: Vec<&str> = fields.collect();
        let (tokens, backoff) = if rest.len() == n + 1 {
            let backoff: f64 = rest[n].parse().map_err(|_| {
                SearchError::MalformedInput(format!("line {}: bad backoff weight", lineno + 1))
            })?;
            (&rest[..n], backoff)
        } else if rest.len() == n {
            (&rest[..], 0.0)
        } else {
            return Err(SearchError::MalformedInput(format!(
                "line {}: expected {n} tokens, got {}",
                lineno + 1,
                rest.len()
            )));
        };
        if logprob > 0.0 {
            return Err(SearchError::MalformedInput(format!(
                "line {}: positive log probability {logprob}",
                lineno + 1
            )));
        }

        let ids: Vec<u32> = tokens
            .iter()
            .map(|t| {
                *vocab.entry((*t).to_string()).or_insert_with(|| {
                    vocab_list.push((*t).to_string());
                    (vocab_list.len() - 1) as u32
                })
            })
            .collect();
        tables[n - 1].insert(ids, Entry { logprob, backoff });
    }

    Ok(NGramModel { order, vocab, vocab_list, tables })
}

#[cfg(test)]
pub(crate) const TINY_ARPA: &str = "\
\\data\\
ngram 1=5
ngram 2=3

\\1-grams:
-99\t<s>\t-0.30103
-0.69897\ta\t-0.30103
-0.69897\tb\t-0.17609
-1.0\t</s>
-1.3\t<unk>

\\2-grams:
-0.30103\t<s> a
-0.52288\ta b
-0.39794\tb </s>

\\end\\
";
