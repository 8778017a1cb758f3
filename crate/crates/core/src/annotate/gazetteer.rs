use std::collections::HashMap;

use super::{AnnotateError, EntityAnnotation};

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    /// Normalized surface form: lowercase tokens joined by single spaces.
    pub surface: String,
    pub entity_title: String,
    pub link_probability: f64,
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: HashMap<String, usize>,
    entry: Option<usize>,
}

/// Dictionary of surface forms mapped to entities, matched longest-first
/// over whole words.
///
/// Text is split into tokens, maximal runs of alphanumeric characters, and
/// each token is lowercased. A surface form matches a run of consecutive
/// tokens separated only by whitespace or hyphens, so `"cloud computing"`
/// matches `"Cloud  computing"` and `"cloud-computing"` but never the inside
/// of a longer word.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    nodes: Vec<Node>,
    entries: Vec<GazetteerEntry>,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer {
            nodes: vec![Node::default()],
            entries: Vec::new(),
        }
    }
}

struct Token {
    start: usize,
    end: usize,
    byte_start: usize,
    byte_end: usize,
    folded: String,
    /// Whether this token can be followed by the next one inside a mention.
    joins_next: bool,
}

fn is_connector(c: char) -> bool {
    c.is_whitespace() || matches!(c, '-' | '\u{2010}' | '\u{2011}')
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut gap_ok = true;
    let mut char_idx = 0;
    for (byte_idx, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if current.is_none() {
                if let Some(prev) = tokens.last_mut() {
                    prev.joins_next = gap_ok;
                }
                current = Some((char_idx, byte_idx));
            }
        } else {
            if let Some((start, byte_start)) = current.take() {
                tokens.push(Token {
                    start,
                    end: char_idx,
                    byte_start,
                    byte_end: byte_idx,
                    folded: text[byte_start..byte_idx].to_lowercase(),
                    joins_next: false,
                });
                gap_ok = true;
            }
            gap_ok &= is_connector(c);
        }
        char_idx += 1;
    }
    if let Some((start, byte_start)) = current {
        tokens.push(Token {
            start,
            end: char_idx,
            byte_start,
            byte_end: text.len(),
            folded: text[byte_start..].to_lowercase(),
            joins_next: false,
        });
    }
    tokens
}

/// The normalization applied to both surface forms and matched text.
pub fn normalize_surface(s: &str) -> String {
    tokenize(s)
        .into_iter()
        .map(|t| t.folded)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    /// Add a surface form. When the surface is already present, the entry
    /// with the higher link probability wins; ties keep the first.
    pub fn insert(
        &mut self,
        surface: &str,
        entity_title: &str,
        link_probability: f64,
    ) -> Result<(), String> {
        if !(0.0..=1.0).contains(&link_probability) {
            return Err(format!("link probability {link_probability} outside [0, 1]"));
        }
        let entity_title = entity_title.trim();
        if entity_title.is_empty() {
            return Err("empty entity title".into());
        }
        let tokens = tokenize(surface);
        if tokens.is_empty() {
            return Err(format!("surface form {surface:?} has no word characters"));
        }
        let mut node = 0;
        for t in &tokens {
            node = match self.nodes[node].children.get(&t.folded) {
                Some(&child) => child,
                None => {
                    self.nodes.push(Node::default());
                    let child = self.nodes.len() - 1;
                    self.nodes[node].children.insert(t.folded.clone(), child);
                    child
                }
            };
        }
        let entry = GazetteerEntry {
            surface: normalize_surface(surface),
            entity_title: entity_title.to_string(),
            link_probability,
        };
        match self.nodes[node].entry {
            Some(existing) if self.entries[existing].link_probability >= link_probability => {}
            Some(existing) => self.entries[existing] = entry,
            None => {
                self.entries.push(entry);
                self.nodes[node].entry = Some(self.entries.len() - 1);
            }
        }
        Ok(())
    }

    /// Parse `surface<TAB>entity_title<TAB>link_probability` lines. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self, AnnotateError> {
        let mut g = Gazetteer::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| AnnotateError::Gazetteer {
                line: line_no,
                message,
            };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [surface, title, prob] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let prob: f64 = prob
                .trim()
                .parse()
                .map_err(|_| err(format!("bad link probability {prob:?}")))?;
            g.insert(surface, title, prob).map_err(err)?;
        }
        Ok(g)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.surface, e.entity_title, e.link_probability));
        }
        out
    }

    /// Annotate `text` left to right, taking the longest eligible surface
    /// form at each word. Entries below `min_link_probability` are ignored
    /// entirely, so a shorter eligible entry can still match where a longer
    /// one was filtered out.
    pub fn annotate(
        &self,
        doc_id: &str,
        text: &str,
        min_link_probability: f64,
    ) -> Vec<EntityAnnotation> {
        let tokens = tokenize(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut node = 0;
            let mut best: Option<(usize, usize)> = None;
            let mut j = i;
            while let Some(&child) = self.nodes[node].children.get(&tokens[j].folded) {
                node = child;
                if let Some(e) = self.nodes[node].entry {
                    if self.entries[e].link_probability >= min_link_probability {
                        best = Some((j, e));
                    }
                }
                if !tokens[j].joins_next || j + 1 == tokens.len() {
                    break;
                }
                j += 1;
            }
            match best {
                Some((last_idx, e)) => {
                    let entry = &self.entries[e];
                    let (first, last) = (&tokens[i], &tokens[last_idx]);
                    out.push(EntityAnnotation {
                        doc_id: doc_id.to_string(),
                        entity_id: entry.entity_title.clone(),
                        entity_title: entry.entity_title.clone(),
                        mention: text[first.byte_start..last.byte_end].to_string(),
                        start: first.start,
                        end: last.end,
                        score: entry.link_probability,
                    });
                    i = last_idx + 1;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Gazetteer {
        let mut g = Gazetteer::new();
        g.insert("cloud computing", "Cloud computing", 0.8).unwrap();
        g.insert("internet of things", "Internet of things", 0.9).unwrap();
        g
    }

    const TEXT: &str = "Cloud computing meets the Internet of Things";

    #[test]
    fn two_mentions_with_char_offsets() {
        let out = sample().annotate("d1", TEXT, 0.0);
        let spans: Vec<_> = out.iter().map(|a| (a.start, a.end)).collect();
        assert_eq!(spans, [(0, 15), (26, 44)]);
        assert_eq!(out[0].entity_title, "Cloud computing");
        assert_eq!(out[1].mention, "Internet of Things");
        assert_eq!(out[1].score, 0.9);
    }

    #[test]
    fn longest_match_wins() {
        let mut g = sample();
        g.insert("cloud", "Cloud", 0.7).unwrap();
        let out = g.annotate("d1", TEXT, 0.0);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|a| a.entity_title != "Cloud"));
    }

    #[test]
    fn filtered_long_entry_falls_back_to_shorter() {
        let mut g = Gazetteer::new();
        g.insert("cloud", "Cloud", 0.7).unwrap();
        g.insert("cloud computing", "Cloud computing", 0.2).unwrap();
        let out = g.annotate("d", TEXT, 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].start, out[0].end), (0, 5));
        assert_eq!(out[0].entity_title, "Cloud");
    }

    #[test]
    fn high_threshold_matches_nothing() {
        assert!(sample().annotate("d1", TEXT, 0.95).is_empty());
    }

    #[test]
    fn no_mid_word_matches() {
        let mut g = Gazetteer::new();
        g.insert("art", "Art", 1.0).unwrap();
        assert!(g.annotate("d", "smart artisans", 0.0).is_empty());
        assert_eq!(g.annotate("d", "state-of-the-art", 0.0).len(), 1);
    }

    #[test]
    fn mentions_do_not_cross_punctuation() {
        let g = sample();
        assert!(g.annotate("d", "a cloud. Computing", 0.0).is_empty());
        assert_eq!(g.annotate("d", "cloud-computing", 0.0).len(), 1);
        assert_eq!(g.annotate("d", "CLOUD \n computing", 0.0).len(), 1);
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        let out = sample().annotate("d", "Ünïcödé cloud computing", 0.0);
        assert_eq!((out[0].start, out[0].end), (8, 23));
        assert_eq!(out[0].mention, "cloud computing");
    }

    #[test]
    fn duplicate_surface_keeps_higher_probability() {
        let mut g = Gazetteer::new();
        g.insert("grid", "Grid computing", 0.4).unwrap();
        g.insert("Grid", "Grid (graph theory)", 0.6).unwrap();
        g.insert("grid", "Power grid", 0.5).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.annotate("d", "grid", 0.0)[0].entity_title, "Grid (graph theory)");
    }

    #[test]
    fn tsv_parsing() {
        let g = Gazetteer::parse_tsv("# comment\ncloud computing\tCloud computing\t0.8\n\n").unwrap();
        assert_eq!(g.len(), 1);
        assert!(matches!(
            Gazetteer::parse_tsv("a\tb\n"),
            Err(AnnotateError::Gazetteer { line: 1, .. })
        ));
        assert!(matches!(
            Gazetteer::parse_tsv("ok\tOk\t0.5\nx\tX\t1.5\n"),
            Err(AnnotateError::Gazetteer { line: 2, .. })
        ));
        assert!(Gazetteer::parse_tsv(" ,, \tX\t0.5\n").is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let g = sample();
        let again = Gazetteer::parse_tsv(&g.to_tsv()).unwrap();
        assert_eq!(again.entries(), g.entries());
    }

    fn arb_gazetteer() -> impl Strategy<Value = Gazetteer> {
        proptest::collection::vec(("[abc]{1,2}( [abc]{1,2}){0,2}", 0.0f64..=1.0), 1..12).prop_map(
            |entries| {
                let mut g = Gazetteer::new();
                for (s, p) in entries {
                    g.insert(&s, &s.to_uppercase(), p).unwrap();
                }
                g
            },
        )
    }

    proptest! {
        #[test]
        fn spans_sorted_disjoint_and_faithful(
            g in arb_gazetteer(),
            text in "([abcAB]{1,2}[ .,-]{1,2}){0,20}",
            min_p in 0.0f64..1.0,
        ) {
            let out = g.annotate("d", &text, min_p);
            let chars: Vec<char> = text.chars().collect();
            for w in out.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for a in &out {
                prop_assert!(a.start < a.end && a.end <= chars.len());
                let sub: String = chars[a.start..a.end].iter().collect();
                prop_assert_eq!(&sub, &a.mention);
                prop_assert!(a.score >= min_p);
                let surface = g.entries().iter()
                    .find(|e| e.entity_title == a.entity_title).unwrap();
                prop_assert_eq!(normalize_surface(&a.mention), surface.surface.clone());
            }
            prop_assert_eq!(g.annotate("d", &text, min_p), out);
        }
    }
}
