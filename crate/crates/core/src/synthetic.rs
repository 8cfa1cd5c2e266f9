//! Seeded toy corpora.
//!
//! Every sentence is drawn from one topic: a handful of topic-specific
//! pseudo-words mixed with shared function words. Entailment keeps the
//! topic, contradiction switches it, so a trained encoder should cluster by
//! topic. Generated sentences never repeat within one [`Lexicon`], which
//! keeps held-out sets disjoint from training sets.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{ClaimRow, ContextRow};
use crate::finetune::{LabeledText, MrcQuestion};
use crate::rng::{stream, Stream};
use crate::text::nli::{NliExample, NliLabel};

const FILLERS: [&str; 10] = ["the", "a", "of", "is", "and", "with", "for", "on", "to", "in"];
const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Label marker for the separable pair and single-sentence tasks.
pub const MARKER: &str = "not";

pub struct Lexicon {
    topics: Vec<Vec<String>>,
    used: HashSet<String>,
    rng: ChaCha8Rng,
}

impl Lexicon {
    pub fn new(topics: usize, words_per_topic: usize, seed: u64) -> Self {
        let mut rng = stream(seed, Stream::Synthetic, 0);
        let mut seen: HashSet<String> = FILLERS.iter().map(|s| s.to_string()).collect();
        seen.insert(MARKER.to_owned());
        let mut word = |rng: &mut ChaCha8Rng| loop {
            let syllables = rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS.choose(rng).expect("non-empty"),
                        VOWELS.choose(rng).expect("non-empty")
                    )
                })
                .collect();
            if seen.insert(w.clone()) {
                return w;
            }
        };
        let topics = (0..topics)
            .map(|_| (0..words_per_topic).map(|_| word(&mut rng)).collect())
            .collect();
        Lexicon {
            topics,
            used: HashSet::new(),
            rng,
        }
    }

    pub fn topics(&self) -> usize {
        self.topics.len()
    }

    pub fn topic_words(&self, topic: usize) -> &[String] {
        &self.topics[topic]
    }

    fn draw(&mut self, topic: usize) -> String {
        let rng = &mut self.rng;
        let content = rng.gen_range(4..=6);
        let filler = rng.gen_range(1..=2);
        let mut words: Vec<&str> = self.topics[topic]
            .choose_multiple(rng, content)
            .map(String::as_str)
            .collect();
        words.extend((0..filler).map(|_| *FILLERS.choose(rng).expect("non-empty")));
        words.shuffle(rng);
        words.join(" ")
    }

    /// A sentence of `topic` not produced before by this lexicon.
    pub fn sentence(&mut self, topic: usize) -> String {
        loop {
            let s = self.draw(topic);
            if self.used.insert(s.clone()) {
                return s;
            }
        }
    }

    pub fn other_topic(&mut self, topic: usize) -> usize {
        let k = self.topics.len();
        (topic + self.rng.gen_range(1..k)) % k
    }

    fn random_topic(&mut self) -> usize {
        self.rng.gen_range(0..self.topics.len())
    }

    /// Labelled NLI rows: one entailment and one contradiction hypothesis per
    /// premise, plus a neutral row for every fourth premise.
    pub fn nli(&mut self, premises: usize, source: &str) -> Vec<NliExample> {
        let mut out = Vec::with_capacity(premises * 2 + premises / 4);
        for i in 0..premises {
            let t = self.random_topic();
            let premise = self.sentence(t);
            let ent = self.sentence(t);
            let other = self.other_topic(t);
            let con = self.sentence(other);
            let mut push = |h: String, label| {
                out.push(NliExample {
                    premise: premise.clone(),
                    hypothesis: h,
                    label,
                    source: Some(source.to_owned()),
                });
            };
            push(ent, NliLabel::Entailment);
            push(con, NliLabel::Contradiction);
            if i % 4 == 3 {
                let n = self.random_topic();
                let neutral = self.sentence(n);
                push(neutral, NliLabel::Neutral);
            }
        }
        out
    }

    /// Claims with a pool of `pool` contexts from distinct topics each; the
    /// gold context shares the claim's topic.
    pub fn retrieval(&mut self, claims: usize, pool: usize) -> (Vec<ClaimRow>, Vec<ContextRow>) {
        let pool = pool.min(self.topics.len());
        let mut contexts = Vec::new();
        let mut rows = Vec::with_capacity(claims);
        for i in 0..claims {
            let t = self.random_topic();
            let claim = self.sentence(t);
            let mut topics: Vec<usize> = (0..self.topics.len()).filter(|&x| x != t).collect();
            topics.shuffle(&mut self.rng);
            topics.truncate(pool - 1);
            let gold_slot = self.rng.gen_range(0..pool);
            topics.insert(gold_slot, t);
            let start = contexts.len();
            for (k, &topic) in topics.iter().enumerate() {
                contexts.push(ContextRow {
                    id: Some(format!("c{}", start + k)),
                    text: self.sentence(topic),
                });
            }
            rows.push(ClaimRow {
                id: Some(format!("q{i}")),
                claim,
                gold: (start + gold_slot).into(),
                candidates: Some((start..start + pool).collect()),
            });
        }
        (rows, contexts)
    }

    /// Pairs labelled `contradiction` exactly when the second sentence
    /// carries [`MARKER`].
    pub fn marker_pairs(&mut self, n: usize) -> Vec<LabeledText> {
        (0..n)
            .map(|i| {
                let t = self.random_topic();
                let a = self.sentence(t);
                let negate = self.rng.gen_bool(0.5);
                let mut b = self.sentence(t);
                if negate {
                    b = insert_word(&b, MARKER, &mut self.rng);
                }
                LabeledText {
                    id: i.to_string(),
                    text_a: a,
                    text_b: Some(b),
                    label: if negate { "contradiction" } else { "entailment" }.into(),
                    line: i + 1,
                }
            })
            .collect()
    }

    /// Single sentences labelled `negative` exactly when they carry
    /// [`MARKER`].
    pub fn marker_singles(&mut self, n: usize) -> Vec<LabeledText> {
        (0..n)
            .map(|i| {
                let t = self.random_topic();
                let mut s = self.sentence(t);
                let negate = self.rng.gen_bool(0.5);
                if negate {
                    s = insert_word(&s, MARKER, &mut self.rng);
                }
                LabeledText {
                    id: i.to_string(),
                    text_a: s,
                    text_b: None,
                    label: if negate { "negative" } else { "positive" }.into(),
                    line: i + 1,
                }
            })
            .collect()
    }

    /// Questions whose correct choice is a topic word occurring in the
    /// context; the distractors come from other topics and never occur.
    pub fn mrc(&mut self, n: usize, choices: usize) -> Vec<MrcQuestion> {
        (0..n)
            .map(|i| {
                let t = self.random_topic();
                let context = self.sentence(t);
                let present: Vec<String> = context
                    .split(' ')
                    .filter(|w| self.topics[t].iter().any(|x| x == w))
                    .map(str::to_owned)
                    .collect();
                let answer = self.rng.gen_range(0..choices);
                let opts = (0..choices)
                    .map(|k| {
                        if k == answer {
                            present.choose(&mut self.rng).expect("content words").clone()
                        } else {
                            let o = self.other_topic(t);
                            self.topics[o].choose(&mut self.rng).expect("non-empty").clone()
                        }
                    })
                    .collect();
                MrcQuestion {
                    id: i.to_string(),
                    context,
                    question: "which word is in the text".into(),
                    choices: opts,
                    answer,
                    line: i + 1,
                }
            })
            .collect()
    }
}

fn insert_word(sentence: &str, word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<&str> = sentence.split(' ').collect();
    let at = rng.gen_range(0..=words.len());
    words.insert(at, word);
    words.join(" ")
}
