//! Seeded synthetic language with planted knowledge of two kinds.
//!
//! Every ordinary sentence carries subject–verb number agreement, so the
//! syntactic rule is seen constantly. Facts `<entity> <relation> <object>`
//! appear only in a configurable fraction of sentences, so each individual
//! fact is rare. A third, small family of sentences states orderings between
//! number tokens and backs the multiple-choice probe.
//!
//! The generator also emits probe suites whose items use fresh lexical
//! combinations where the combinatorics allow.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{MASK_TOKEN, PAD_TOKEN};
use crate::probes::{Arc, ArcSentence, ClozeItem, MinimalPairItem, MultiChoiceItem, Splits, TokenLabelSentence};
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthLanguageConfig {
    /// Noun lemmas; each yields a singular and a plural token.
    pub nouns: usize,
    /// Verb lemmas; each yields a singular and a plural token.
    pub verbs: usize,
    pub adjectives: usize,
    pub entities: usize,
    pub relations: usize,
    pub objects: usize,
    /// Number tokens used by ordering statements.
    pub numbers: usize,
    pub fact_count: usize,
    /// Fraction of corpus sentences that state a fact.
    pub fact_density: f64,
    /// Fraction of corpus sentences that state a number ordering.
    pub compare_density: f64,
    pub sentence_count: usize,
    pub minimal_pairs: usize,
    pub multichoice_items: usize,
    pub structural_train: usize,
    pub structural_dev: usize,
    pub structural_test: usize,
    pub seed: u64,
}

impl SynthLanguageConfig {
    /// Agreement-rich, fact-dense domain (20% fact statements).
    pub fn dense(seed: u64) -> Self {
        SynthLanguageConfig {
            nouns: 24,
            verbs: 16,
            adjectives: 12,
            entities: 50,
            relations: 5,
            objects: 30,
            numbers: 10,
            fact_count: 100,
            fact_density: 0.2,
            compare_density: 0.05,
            sentence_count: 20_000,
            minimal_pairs: 200,
            multichoice_items: 100,
            structural_train: 400,
            structural_dev: 100,
            structural_test: 100,
            seed,
        }
    }

    /// Same language with facts ten times rarer (2% fact statements).
    pub fn sparse(seed: u64) -> Self {
        SynthLanguageConfig {
            fact_density: 0.02,
            ..Self::dense(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("nouns", self.nouns),
            ("verbs", self.verbs),
            ("entities", self.entities),
            ("relations", self.relations),
            ("objects", self.objects),
            ("numbers", self.numbers),
            ("sentence_count", self.sentence_count),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        for (key, v) in [
            ("fact_density", self.fact_density),
            ("compare_density", self.compare_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, "must lie in [0, 1]"));
            }
        }
        if self.fact_density + self.compare_density > 1.0 {
            return Err(Error::config(
                "compare_density",
                "fact_density + compare_density exceeds 1",
            ));
        }
        if self.fact_count > self.entities * self.relations {
            return Err(Error::config(
                "fact_count",
                alloc::format!(
                    "{} facts need more than {} entity-relation pairs",
                    self.fact_count,
                    self.entities * self.relations
                ),
            ));
        }
        if self.fact_density > 0.0 && self.fact_count == 0 {
            return Err(Error::config("fact_count", "facts requested but fact_count is 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    Determiner,
    Adjective,
    NounSingular,
    NounPlural,
    VerbSingular,
    VerbPlural,
    Entity,
    Relation,
    Object,
    Number,
    Comparison,
}

impl Category {
    /// Part-of-speech style tag used by the token-labeling suite.
    pub fn tag(self) -> &'static str {
        match self {
            Category::Determiner => "DT",
            Category::Adjective => "JJ",
            Category::NounSingular => "NN",
            Category::NounPlural => "NNS",
            Category::VerbSingular => "VBZ",
            Category::VerbPlural => "VBP",
            Category::Entity => "ENT",
            Category::Relation => "REL",
            Category::Object => "OBJ",
            Category::Number => "CD",
            Category::Comparison => "CMP",
        }
    }
}

pub const DETERMINER: &str = "the";
pub const COMPARISONS: [&str; 3] = ["smaller", "larger", "same"];

/// Token inventory of the synthetic language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    adjectives: usize,
    nouns: usize,
    verbs: usize,
    entities: usize,
    relations: usize,
    objects: usize,
    numbers: usize,
}

impl Lexicon {
    pub fn new(config: &SynthLanguageConfig) -> Self {
        Lexicon {
            adjectives: config.adjectives,
            nouns: config.nouns,
            verbs: config.verbs,
            entities: config.entities,
            relations: config.relations,
            objects: config.objects,
            numbers: config.numbers,
        }
    }

    pub fn noun(&self, i: usize, plural: bool) -> String {
        if plural {
            alloc::format!("noun{i}s")
        } else {
            alloc::format!("noun{i}")
        }
    }

    /// English-style: the singular form carries the `s`.
    pub fn verb(&self, i: usize, plural: bool) -> String {
        if plural {
            alloc::format!("verb{i}")
        } else {
            alloc::format!("verb{i}s")
        }
    }

    pub fn adjective(&self, i: usize) -> String {
        alloc::format!("adj{i}")
    }

    pub fn entity(&self, i: usize) -> String {
        alloc::format!("ent{i}")
    }

    pub fn relation(&self, i: usize) -> String {
        alloc::format!("rel{i}")
    }

    pub fn object(&self, i: usize) -> String {
        alloc::format!("obj{i}")
    }

    pub fn number(&self, i: usize) -> String {
        alloc::format!("num{i}")
    }

    /// Full vocabulary, special tokens first.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v = alloc::vec![PAD_TOKEN.to_string(), MASK_TOKEN.to_string(), DETERMINER.to_string()];
        v.extend((0..self.adjectives).map(|i| self.adjective(i)));
        for i in 0..self.nouns {
            v.push(self.noun(i, false));
            v.push(self.noun(i, true));
        }
        for i in 0..self.verbs {
            v.push(self.verb(i, false));
            v.push(self.verb(i, true));
        }
        v.extend((0..self.entities).map(|i| self.entity(i)));
        v.extend((0..self.relations).map(|i| self.relation(i)));
        v.extend((0..self.objects).map(|i| self.object(i)));
        v.extend((0..self.numbers).map(|i| self.number(i)));
        v.extend(COMPARISONS.iter().map(|c| c.to_string()));
        v
    }

    /// Category of a token, recovered from its surface form.
    pub fn category(&self, token: &str) -> Option<Category> {
        if token == DETERMINER {
            return Some(Category::Determiner);
        }
        if COMPARISONS.contains(&token) {
            return Some(Category::Comparison);
        }
        let index_in = |prefix: &str, suffix: &str, limit: usize| -> bool {
            token
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(suffix))
                .and_then(|digits| {
                    (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                        .then(|| digits.parse::<usize>().ok())
                        .flatten()
                })
                .is_some_and(|i| i < limit && token == alloc::format!("{prefix}{i}{suffix}"))
        };
        let checks: [(&str, &str, usize, Category); 9] = [
            ("adj", "", self.adjectives, Category::Adjective),
            ("noun", "s", self.nouns, Category::NounPlural),
            ("noun", "", self.nouns, Category::NounSingular),
            ("verb", "s", self.verbs, Category::VerbSingular),
            ("verb", "", self.verbs, Category::VerbPlural),
            ("ent", "", self.entities, Category::Entity),
            ("rel", "", self.relations, Category::Relation),
            ("obj", "", self.objects, Category::Object),
            ("num", "", self.numbers, Category::Number),
        ];
        checks.iter().find(|(p, s, n, _)| index_in(p, s, *n)).map(|c| c.3)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub entity: String,
    pub relation: String,
    pub object: String,
}

impl Fact {
    pub fn sentence(&self) -> Vec<String> {
        alloc::vec![self.entity.clone(), self.relation.clone(), self.object.clone()]
    }
}

/// Word-level parse of an agreement sentence, kept so probe suites can derive
/// tags, chunks and arcs from the generator's own structure.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Clause {
    tokens: Vec<String>,
    categories: Vec<Category>,
    subject_head: usize,
    verb: usize,
    object_head: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub vocabulary: Vec<String>,
    pub sentences: Vec<Vec<String>>,
    pub facts: Vec<Fact>,
    pub fact_sentences: usize,
    pub compare_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapStats {
    /// Minimal-pair good sentences found verbatim in the corpus.
    pub minimal_pair_goods: usize,
    /// Structural-suite sentences found verbatim in the corpus.
    pub structural_sentences: usize,
    /// Cloze items whose answer-filled form is a corpus sentence. Every gold
    /// fact is stated in the corpus, so this equals the number of stated facts.
    pub cloze_filled: usize,
    /// Multiple-choice items whose answer-filled form is a corpus sentence.
    pub multichoice_filled: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSuites {
    pub minimal_pairs: Vec<MinimalPairItem>,
    pub cloze: Vec<ClozeItem>,
    pub multichoice: Vec<MultiChoiceItem>,
    pub token_labels: Splits<TokenLabelSentence>,
    pub segmentation: Splits<TokenLabelSentence>,
    pub arcs: Splits<ArcSentence>,
    pub overlap: OverlapStats,
    pub warnings: Vec<String>,
}

struct Generator<'a> {
    lex: &'a Lexicon,
    cfg: &'a SynthLanguageConfig,
}

impl Generator<'_> {
    fn noun_phrase(&self, rng: &mut ChaCha8Rng, plural: bool, out: &mut Clause) -> usize {
        out.tokens.push(DETERMINER.into());
        out.categories.push(Category::Determiner);
        if self.cfg.adjectives > 0 && rng.random_bool(0.5) {
            out.tokens
                .push(self.lex.adjective(rng.random_range(0..self.cfg.adjectives)));
            out.categories.push(Category::Adjective);
        }
        out.tokens
            .push(self.lex.noun(rng.random_range(0..self.cfg.nouns), plural));
        out.categories.push(if plural {
            Category::NounPlural
        } else {
            Category::NounSingular
        });
        out.tokens.len() - 1
    }

    /// `the (adj) NOUN VERB [the (adj) NOUN]` with subject–verb agreement.
    fn clause(&self, rng: &mut ChaCha8Rng) -> Clause {
        let mut c = Clause {
            tokens: Vec::new(),
            categories: Vec::new(),
            subject_head: 0,
            verb: 0,
            object_head: None,
        };
        let plural = rng.random_bool(0.5);
        c.subject_head = self.noun_phrase(rng, plural, &mut c);
        c.tokens
            .push(self.lex.verb(rng.random_range(0..self.cfg.verbs), plural));
        c.categories.push(if plural {
            Category::VerbPlural
        } else {
            Category::VerbSingular
        });
        c.verb = c.tokens.len() - 1;
        if rng.random_bool(0.6) {
            let obj_plural = rng.random_bool(0.5);
            c.object_head = Some(self.noun_phrase(rng, obj_plural, &mut c));
        }
        c
    }

    fn comparison(&self, a: usize, b: usize) -> Vec<String> {
        let word = match a.cmp(&b) {
            core::cmp::Ordering::Less => COMPARISONS[0],
            core::cmp::Ordering::Greater => COMPARISONS[1],
            core::cmp::Ordering::Equal => COMPARISONS[2],
        };
        alloc::vec![self.lex.number(a), word.to_string(), self.lex.number(b)]
    }
}

fn gold_facts(cfg: &SynthLanguageConfig, lex: &Lexicon) -> Vec<Fact> {
    let mut rng = stream(cfg.seed, "facts", &[]);
    let mut pairs: Vec<(usize, usize)> = (0..cfg.entities)
        .flat_map(|e| (0..cfg.relations).map(move |r| (e, r)))
        .collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(cfg.fact_count);
    pairs.sort_unstable();
    pairs
        .into_iter()
        .map(|(e, r)| Fact {
            entity: lex.entity(e),
            relation: lex.relation(r),
            object: lex.object(rng.random_range(0..cfg.objects)),
        })
        .collect()
}

/// Generate the corpus, its vocabulary and the gold fact table.
///
/// Exactly `round(fact_density · sentence_count)` sentences state facts,
/// cycling through the fact table so each fact appears about equally often.
pub fn gen_corpus(config: &SynthLanguageConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let lex = Lexicon::new(config);
    let g = Generator { lex: &lex, cfg: config };
    let facts = gold_facts(config, &lex);
    let n = config.sentence_count;
    let n_fact = if facts.is_empty() {
        0
    } else {
        (config.fact_density * n as f64).round() as usize
    };
    let n_cmp = ((config.compare_density * n as f64).round() as usize).min(n - n_fact);

    let mut kinds: Vec<u8> = core::iter::repeat_n(1u8, n_fact)
        .chain(core::iter::repeat_n(2u8, n_cmp))
        .chain(core::iter::repeat_n(0u8, n - n_fact - n_cmp))
        .collect();
    let mut rng = stream(config.seed, "corpus", &[]);
    kinds.shuffle(&mut rng);
    let mut fact_order: Vec<usize> = (0..facts.len()).collect();
    fact_order.shuffle(&mut rng);

    let mut next_fact = 0usize;
    let sentences = kinds
        .iter()
        .map(|&k| match k {
            1 => {
                let f = &facts[fact_order[next_fact % facts.len()]];
                next_fact += 1;
                f.sentence()
            }
            2 => {
                let a = rng.random_range(0..config.numbers);
                let b = rng.random_range(0..config.numbers);
                g.comparison(a, b)
            }
            _ => g.clause(&mut rng).tokens,
        })
        .collect();
    Ok(SynthCorpus {
        vocabulary: lex.vocabulary(),
        sentences,
        facts,
        fact_sentences: n_fact,
        compare_sentences: n_cmp,
    })
}

const FRESH_ATTEMPTS: usize = 64;

/// Build every probe suite for a corpus generated from the same config.
pub fn gen_probe_suites(config: &SynthLanguageConfig, corpus: &SynthCorpus) -> Result<ProbeSuites> {
    config.validate()?;
    let lex = Lexicon::new(config);
    let g = Generator { lex: &lex, cfg: config };
    let seen: BTreeSet<&[String]> = corpus.sentences.iter().map(Vec::as_slice).collect();
    let mut rng = stream(config.seed, "suites", &[]);
    let mut warnings = Vec::new();
    let mut overlap = OverlapStats::default();

    let fresh_clause = |rng: &mut ChaCha8Rng, used: &mut BTreeSet<Vec<String>>| -> (Clause, bool) {
        let mut last = None;
        for _ in 0..FRESH_ATTEMPTS {
            let c = g.clause(rng);
            if !seen.contains(c.tokens.as_slice()) && !used.contains(&c.tokens) {
                used.insert(c.tokens.clone());
                return (c, false);
            }
            last = Some(c);
        }
        let c = last.expect("at least one attempt");
        let in_corpus = seen.contains(c.tokens.as_slice());
        used.insert(c.tokens.clone());
        (c, in_corpus)
    };

    let mut used = BTreeSet::new();
    let mut minimal_pairs = Vec::with_capacity(config.minimal_pairs);
    for i in 0..config.minimal_pairs {
        let (c, hit) = fresh_clause(&mut rng, &mut used);
        overlap.minimal_pair_goods += usize::from(hit);
        let mut bad = c.tokens.clone();
        let plural = c.categories[c.verb] == Category::VerbPlural;
        let lemma: usize = bad[c.verb]
            .trim_start_matches("verb")
            .trim_end_matches('s')
            .parse()
            .expect("generated verb token");
        bad[c.verb] = lex.verb(lemma, !plural);
        minimal_pairs.push(MinimalPairItem {
            id: alloc::format!("agreement-{i}"),
            good: c.tokens,
            bads: alloc::vec![bad],
        });
    }

    let cloze: Vec<ClozeItem> = corpus
        .facts
        .iter()
        .enumerate()
        .map(|(i, f)| ClozeItem {
            id: alloc::format!("fact-{i}"),
            tokens: alloc::vec![f.entity.clone(), f.relation.clone(), MASK_TOKEN.to_string()],
            answer: f.object.clone(),
            candidates: None,
        })
        .collect();
    overlap.cloze_filled = cloze
        .iter()
        .filter(|c| {
            let mut filled = c.tokens.clone();
            filled[2] = c.answer.clone();
            seen.contains(filled.as_slice())
        })
        .count();

    let mut multichoice = Vec::with_capacity(config.multichoice_items);
    for i in 0..config.multichoice_items {
        let a = rng.random_range(0..config.numbers);
        let b = rng.random_range(0..config.numbers);
        let filled = g.comparison(a, b);
        overlap.multichoice_filled += usize::from(seen.contains(filled.as_slice()));
        let answer_index = COMPARISONS
            .iter()
            .position(|c| *c == filled[1])
            .expect("comparison word");
        multichoice.push(MultiChoiceItem {
            id: alloc::format!("order-{i}"),
            tokens: alloc::vec![filled[0].clone(), MASK_TOKEN.to_string(), filled[2].clone()],
            choices: COMPARISONS.iter().map(|c| c.to_string()).collect(),
            answer_index,
        });
    }

    let mut split = |count: usize| -> Vec<Clause> {
        (0..count)
            .map(|_| {
                let (c, hit) = fresh_clause(&mut rng, &mut used);
                overlap.structural_sentences += usize::from(hit);
                c
            })
            .collect()
    };
    let clauses = Splits {
        train: split(config.structural_train),
        dev: split(config.structural_dev),
        test: split(config.structural_test),
    };
    let map = |f: &dyn Fn(&Clause) -> TokenLabelSentence| Splits {
        train: clauses.train.iter().map(f).collect(),
        dev: clauses.dev.iter().map(f).collect(),
        test: clauses.test.iter().map(f).collect(),
    };
    let token_labels = map(&|c| TokenLabelSentence {
        tokens: c.tokens.clone(),
        labels: c.categories.iter().map(|k| k.tag().to_string()).collect(),
    });
    let segmentation = map(&|c| TokenLabelSentence {
        tokens: c.tokens.clone(),
        labels: chunk_tags(c),
    });
    let arcs = Splits {
        train: clauses.train.iter().map(arc_sentence).collect(),
        dev: clauses.dev.iter().map(arc_sentence).collect(),
        test: clauses.test.iter().map(arc_sentence).collect(),
    };

    let reused = overlap.minimal_pair_goods + overlap.structural_sentences;
    if reused > 0 {
        warnings.push(alloc::format!(
            "lexicon too small to avoid corpus overlap: {reused} probe sentences occur verbatim in the corpus"
        ));
    }
    Ok(ProbeSuites {
        minimal_pairs,
        cloze,
        multichoice,
        token_labels,
        segmentation,
        arcs,
        overlap,
        warnings,
    })
}

fn chunk_tags(c: &Clause) -> Vec<String> {
    c.categories
        .iter()
        .enumerate()
        .map(|(i, k)| match k {
            Category::Determiner => "B-NP".to_string(),
            Category::VerbSingular | Category::VerbPlural => "B-VP".to_string(),
            _ if i > 0 => "I-NP".to_string(),
            _ => "B-NP".to_string(),
        })
        .collect()
}

fn arc_sentence(c: &Clause) -> ArcSentence {
    let mut arcs = Vec::new();
    let np_arcs = |head: usize, arcs: &mut Vec<Arc>| {
        // NP layout: the (adj) noun
        let start = if c.categories[head - 1] == Category::Adjective {
            arcs.push(Arc {
                head,
                dep: head - 1,
                label: "amod".into(),
            });
            head - 2
        } else {
            head - 1
        };
        arcs.push(Arc {
            head,
            dep: start,
            label: "det".into(),
        });
    };
    np_arcs(c.subject_head, &mut arcs);
    arcs.push(Arc {
        head: c.verb,
        dep: c.subject_head,
        label: "nsubj".into(),
    });
    if let Some(o) = c.object_head {
        arcs.push(Arc {
            head: c.verb,
            dep: o,
            label: "obj".into(),
        });
        np_arcs(o, &mut arcs);
    }
    ArcSentence {
        tokens: c.tokens.clone(),
        arcs,
    }
}
