//! Pronunciation lexicon as a prefix trie over phone classes, with word-final
//! markers (several words may end at one node).

use std::collections::{BTreeMap, HashSet};

use crate::ctc::PhoneInventory;

use super::SearchError;

pub const TRIE_ROOT: usize = 0;

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<usize, usize>,
    words: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    words: Vec<String>,
    nodes: Vec<TrieNode>,
    pronunciations: usize,
}

impl Lexicon {
    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_pronunciations(&self) -> usize {
        self.pronunciations
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.words.iter().position(|w| w == word).map(|i| i as u32)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_id(word).is_some()
    }

    pub fn child(&self, node: usize, phone: usize) -> Option<usize> {
        self.nodes[node].children.get(&phone).copied()
    }

    /// Children in ascending phone order.
    pub fn children(&self, node: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes[node].children.iter().map(|(&p, &n)| (p, n))
    }

    /// Words whose pronunciation ends at this node.
    pub fn words_at(&self, node: usize) -> &[u32] {
        &self.nodes[node].words
    }

    /// Largest phone class used by any pronunciation.
    pub fn max_phone(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.children.keys().copied())
            .max()
            .unwrap_or(0)
    }

    /// Walks the trie and reproduces every (word, pronunciation) pair.
    pub fn enumerate(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut stack = vec![(TRIE_ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            for &wid in &self.nodes[node].words {
                out.push((self.words[wid as usize].clone(), path.clone()));
            }
            for (&phone, &child) in &self.nodes[node].children {
                let mut next = path.clone();
                next.push(phone);
                stack.push((child, next));
            }
        }
        out.sort();
        out
    }

    /// First listed pronunciation of a word, if any.
    pub fn pronunciation(&self, word: &str) -> Option<Vec<usize>> {
        let id = self.word_id(word)?;
        self.enumerate()
            .into_iter()
            .find(|(w, _)| self.word_id(w) == Some(id))
            .map(|(_, pron)| pron)
    }
}

/// Parses `word<TAB>phone phone ...` lines into a trie-backed lexicon.
/// Duplicate (word, pronunciation) pairs collapse to one entry.
pub fn load_lexicon(text: &str, inventory: &PhoneInventory) -> Result<Lexicon, SearchError> {
    let mut words: Vec<String> = Vec::new();
    let mut word_ids: BTreeMap<String, u32> = BTreeMap::new();
    let mut seen: HashSet<(u32, Vec<usize>)> = HashSet::new();
    let mut nodes = vec![TrieNode::default()];
    let mut pronunciations = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (word, pron_text) = line.split_once('\t').ok_or_else(|| {
            SearchError::MalformedInput(format!("line {}: expected word<TAB>phones", lineno + 1))
        })?;
        let word = word.trim();
        if word.is_empty() {
            return Err(SearchError::MalformedInput(format!("line {}: empty word", lineno + 1)));
        }
        let mut pron = Vec::new();
        for symbol in pron_text.split_whitespace() {
            let class = inventory.class_of(symbol).ok_or_else(|| {
                SearchError::MalformedInput(format!(
                    "line {}: unknown phone {symbol:?}",
                    lineno + 1
                ))
            })?;
            pron.push(class);
        }
        if pron.is_empty() {
            return Err(SearchError::MalformedInput(format!(
                "line {}: empty pronunciation",
                lineno + 1
            )));
        }

        let id = *word_ids.entry(word.to_string()).or_insert_with(|| {
            words.push(word.to_string());
            (words.len() - 1) as u32
        });
        if !seen.insert((id, pron.clone())) {
            continue;
        }
        pronunciations += 1;

        let mut node = TRIE_ROOT;
        for &phone in &pron {
            let next_index = nodes.len();
            node = *nodes[node].children.entry(phone).or_insert(next_index);
            if node == next_index {
                nodes.push(TrieNode::default());
            }
        }
        nodes[node].words.push(id);
    }

    Ok(Lexicon { words, nodes, pronunciations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inventory() -> PhoneInventory {
        PhoneInventory::from_text("a\nb\nc\n").unwrap()
    }

    #[test]
    fn single_entry_builds_one_path() {
        let lex = load_lexicon("ab\ta b\n", &inventory()).unwrap();
        assert_eq!(lex.num_words(), 1);
        let n1 = lex.child(TRIE_ROOT, 1).unwrap();
        assert!(lex.words_at(n1).is_empty());
        let n2 = lex.child(n1, 2).unwrap();
        assert_eq!(lex.words_at(n2), &[0]);
        assert_eq!(lex.word(0), "ab");
    }

    #[test]
    fn homophones_share_a_final_node() {
        let lex = load_lexicon("a\ta\n\u{e0}\ta\n", &inventory()).unwrap();
        let node = lex.child(TRIE_ROOT, 1).unwrap();
        let words: Vec<&str> = lex.words_at(node).iter().map(|&w| lex.word(w)).collect();
        assert_eq!(words, vec!["a", "\u{e0}"]);
    }

    #[test]
    fn duplicates_are_collapsed() {
        let lex = load_lexicon("x\ta b\nx\ta b\nx\tb\n", &inventory()).unwrap();
        assert_eq!(lex.num_words(), 1);
        assert_eq!(lex.num_pronunciations(), 2);
    }

    #[test]
    fn random_entries_round_trip() {
        let inv = inventory();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut lines = String::new();
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..100 {
            let word = format!("w{i:03}");
            let len = rng.gen_range(1..=4);
            let pron: Vec<usize> = (0..len).map(|_| rng.gen_range(1..=3)).collect();
            let symbols: Vec<&str> = pron.iter().map(|&c| inv.symbol(c).unwrap()).collect();
            lines.push_str(&format!("{word}\t{}\n", symbols.join(" ")));
            if seen.insert((word.clone(), pron.clone())) {
                expected.push((word, pron));
            }
        }
        expected.sort();
        let lex = load_lexicon(&lines, &inv).unwrap();
        assert_eq!(lex.enumerate(), expected);
    }

    #[test]
    fn malformed_lines_are_rejected_with_position() {
        let err = load_lexicon("ok\ta\nbad\ta zz\n", &inventory()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(load_lexicon("empty\t\n", &inventory()).is_err());
        assert!(load_lexicon("no-tab a b\n", &inventory()).is_err());
    }
}
