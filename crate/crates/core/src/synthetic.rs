//! Small planted-rule corpus for smoke tests and overfitting checks.
//!
//! Every document states each hypothesis' clause either in an entailing or in
//! a contradicting form, surrounded by neutral filler sentences. Labels are
//! therefore always entailment or contradiction, with exactly one evidence
//! span per (document, hypothesis).

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{char_slice, Annotation, Corpus, DocFormat, Document, Hypothesis, NliLabel};
use crate::segmentation::split_text;

pub const BUNDLED_SEED: u64 = 20;
pub const BUNDLED_DOCUMENTS: usize = 20;

/// The bundled corpus, byte-identical to `generate(BUNDLED_DOCUMENTS, BUNDLED_SEED)`
/// in canonical JSON.
pub const BUNDLED_JSON: &str = include_str!("../data/synthetic.json");

const PARTIES: &[(&str, &str)] = &[
    ("Northwind Traders", "Contoso Labs"),
    ("Blue Heron Systems", "Fabrikam Holdings"),
    ("Tailspin Toys", "Litware Group"),
    ("Wide World Importers", "Adventure Works"),
    ("Proseware Partners", "Coho Vineyard"),
];

const FILLER: &[&str] = &[
    "This Agreement is governed by the laws of the State of Delaware.",
    "Each party shall bear its own costs in connection with this Agreement.",
    "Notices must be delivered in writing to the addresses listed below.",
    "This Agreement may be signed in counterparts.",
    "Headings are included for convenience only.",
    "Neither party may assign this Agreement without prior written consent.",
    "Any amendment must be made in writing and signed by both parties.",
    "The parties wish to evaluate a possible business relationship.",
    "Nothing in this Agreement creates a partnership or joint venture.",
    "A waiver of any breach is not a waiver of any later breach.",
    "If any provision is held invalid, the remaining provisions stay in force.",
    "This Agreement is the entire agreement between the parties on its subject.",
    "Each party represents that it has authority to enter into this Agreement.",
    "Disputes shall be resolved by the courts located in Wilmington.",
    "The effective date is the date of the last signature below.",
    "No license is granted except as expressly stated herein.",
];

struct Clause {
    title: &'static str,
    hypothesis: &'static str,
    entail: [&'static str; 2],
    contradict: [&'static str; 2],
}

const CLAUSES: [Clause; 3] = [
    Clause {
        title: "Confidentiality of Agreement",
        hypothesis: "Receiving Party shall not disclose the fact that Agreement was agreed or negotiated.",
        entail: [
            "{R} shall keep the existence and terms of this Agreement strictly confidential.",
            "{R} must not reveal to anyone that this Agreement was negotiated or signed.",
        ],
        contradict: [
            "{R} may freely disclose the existence and terms of this Agreement.",
            "{R} is permitted to tell third parties that this Agreement was negotiated.",
        ],
    },
    Clause {
        title: "Return of Confidential Information",
        hypothesis: "Receiving Party shall destroy or return some Confidential Information upon the termination of Agreement.",
        entail: [
            "Upon termination {R} shall promptly return or destroy all Confidential Information.",
            "When this Agreement ends {R} must destroy every copy of the Confidential Information.",
        ],
        contradict: [
            "Upon termination {R} may retain all Confidential Information indefinitely.",
            "When this Agreement ends {R} has no duty to return or destroy any Confidential Information.",
        ],
    },
    Clause {
        title: "Survival of Obligations",
        hypothesis: "Some obligations of Agreement may survive termination of Agreement.",
        entail: [
            "The duties of {R} survive any termination of this Agreement for three years.",
            "Obligations of confidentiality continue to bind {R} after this Agreement terminates.",
        ],
        contradict: [
            "All obligations of {R} end immediately upon termination of this Agreement.",
            "No duty of {R} continues after this Agreement terminates.",
        ],
    },
];

pub fn hypotheses() -> Vec<Hypothesis> {
    CLAUSES
        .iter()
        .enumerate()
        .map(|(i, c)| Hypothesis {
            id: i as u32 + 1,
            title: c.title.to_string(),
            text: c.hypothesis.to_string(),
        })
        .collect()
}

/// Generate `num_documents` documents. Formats cycle plain, html, pdf; for
/// each hypothesis the labels are as balanced as the count allows.
pub fn generate(num_documents: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Vec<NliLabel>> = CLAUSES
        .iter()
        .map(|_| {
            let mut column: Vec<NliLabel> = (0..num_documents)
                .map(|i| if i % 2 == 0 { NliLabel::Entailment } else { NliLabel::Contradiction })
                .collect();
            column.shuffle(&mut rng);
            column
        })
        .collect();

    let documents = (0..num_documents)
        .map(|i| {
            let format = [DocFormat::Plain, DocFormat::Html, DocFormat::Pdf][i % 3];
            let doc_labels: Vec<NliLabel> = labels.iter().map(|col| col[i]).collect();
            document(&format!("synth-{i:03}"), format, &doc_labels, &mut rng)
        })
        .collect();
    Corpus {
        hypotheses: hypotheses(),
        documents,
    }
}

fn document(doc_id: &str, format: DocFormat, labels: &[NliLabel], rng: &mut ChaCha8Rng) -> Document {
    let (disclosing, receiving) = *PARTIES.choose(rng).expect("parties");
    let mut sentences: Vec<(String, Option<u32>)> = FILLER
        .choose_multiple(rng, 8)
        .map(|s| (s.to_string(), None))
        .collect();
    for (h, (clause, &label)) in CLAUSES.iter().zip(labels).enumerate() {
        let forms = if label == NliLabel::Entailment {
            &clause.entail
        } else {
            &clause.contradict
        };
        let text = forms.choose(rng).expect("forms").replace("{R}", receiving);
        sentences.push((text, Some(h as u32 + 1)));
    }
    sentences.shuffle(rng);

    let intro = format!("This Agreement is made between {disclosing} and {receiving}.");
    let (title_sep, sentence_sep) = match format {
        DocFormat::Plain => ("\n\n", " "),
        DocFormat::Html => ("\n\n", "\n\n"),
        DocFormat::Pdf => ("\n\n", "\n"),
    };
    let mut text = format!("MUTUAL NONDISCLOSURE AGREEMENT{title_sep}{intro}");
    for (sentence, _) in &sentences {
        text.push_str(sentence_sep);
        text.push_str(sentence);
    }

    let spans = split_text(&text);
    let mut annotations = BTreeMap::new();
    for (sentence, hyp) in &sentences {
        let Some(h) = hyp else { continue };
        let span_id = spans
            .iter()
            .position(|s| char_slice(&text, s.char_start, s.char_end) == sentence)
            .expect("clause sentences are split as whole spans");
        annotations.insert(
            *h,
            Annotation {
                label: labels[*h as usize - 1],
                evidence: vec![span_id],
            },
        );
    }
    Document {
        doc_id: doc_id.to_string(),
        format,
        text,
        spans,
        annotations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, to_canonical_json};

    #[test]
    fn generated_corpus_is_valid_and_balanced() {
        let corpus = generate(BUNDLED_DOCUMENTS, BUNDLED_SEED);
        corpus.validate().unwrap();
        assert_eq!(corpus.len(), 20);
        for h in 1..=3 {
            let entailed = corpus
                .documents
                .iter()
                .filter(|d| d.annotation(h).unwrap().label == NliLabel::Entailment)
                .count();
            assert_eq!(entailed, 10);
        }
        for doc in &corpus.documents {
            assert_eq!(doc.spans.len(), 13, "{}", doc.doc_id);
        }
    }

    #[test]
    fn bundled_file_matches_generator() {
        let corpus = generate(BUNDLED_DOCUMENTS, BUNDLED_SEED);
        assert_eq!(to_canonical_json(&corpus), BUNDLED_JSON);
        assert_eq!(parse_corpus(BUNDLED_JSON).unwrap(), corpus);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(6, 1), generate(6, 1));
        assert_ne!(generate(6, 1), generate(6, 2));
    }
}
