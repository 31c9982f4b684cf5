//! Bundled skills dictionary and a seeded generator of synthetic annotated corpora, for
//! offline runs and tests.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vanhiele_core::corpus::{AnnotatedPair, Corpus};
use vanhiele_core::level::{Level, LEVEL_COUNT};
use vanhiele_core::skills::{DictionaryDocument, DictionaryOptions, SkillsDictionary};

/// The 33-skill dictionary shipped with the crate.
pub const BUNDLED_DICTIONARY: &str = include_str!("../assets/skills_dictionary.json");

pub fn dictionary() -> SkillsDictionary {
    let doc: DictionaryDocument = serde_json::from_str(BUNDLED_DICTIONARY).expect("bundled dictionary parses");
    SkillsDictionary::from_document(doc, DictionaryOptions::STRICT).expect("bundled dictionary is valid")
}

const QUESTIONS: [&str; 8] = [
    "Given a shape with four equal sides, is it necessarily a rhombus? Explain.",
    "Is every square a rectangle? Justify your answer.",
    "A quadrilateral has diagonals that bisect each other. What can you say about it?",
    "Can a triangle have two obtuse angles? Explain your reasoning.",
    "What is the minimal information needed to define a parallelogram?",
    "Prove that the base angles of an isosceles triangle are equal.",
    "Does the angle sum of a triangle always equal 180 degrees?",
    "Two triangles have three pairs of equal angles. Are they congruent?",
];

const PHRASES: [&[&str]; LEVEL_COUNT] = [
    &[
        "It looks like a diamond to me",
        "It is shaped like a kite I saw once",
        "When you turn it sideways it stops looking like a square",
        "It resembles a tilted box",
        "I can just see that it is that shape",
        "The picture is the usual one from the textbook",
    ],
    &[
        "It has four equal sides and opposite sides are parallel",
        "I measured the angles and they are all ninety degrees",
        "The diagonals are perpendicular when I fold the paper",
        "It has two pairs of parallel sides and equal opposite angles",
        "A square has more properties so it is a different shape",
        "I checked with a ruler that the sides are congruent",
    ],
    &[
        "Every square is a rhombus because it satisfies the definition",
        "If the diagonals bisect each other then the opposite sides are parallel",
        "It is enough to know one pair of sides is parallel and equal",
        "A counterexample is a kite which has perpendicular diagonals but is not a rhombus",
        "Because the angles add up this property follows from the other one",
        "The rectangle family contains the squares as a special case",
    ],
    &[
        "Given the isosceles triangle we must prove the base angles are equal",
        "By the side-angle-side criterion the two triangles are congruent",
        "Each step follows from a previous theorem or from the hypothesis",
        "The converse of this statement is not true in general",
        "We can also prove it by drawing the angle bisector instead",
        "Definitions and postulates play different roles in this proof",
    ],
    &[
        "In hyperbolic geometry the angle sum is less than 180 degrees",
        "The parallel postulate is independent of the other axioms",
        "Without a model we can still derive this from the axioms alone",
        "In a spherical model the same axioms give different theorems",
        "The consistency of the system is what makes the proof meaningful",
    ],
];

/// A corpus with exactly `counts[i]` pairs at level `i + 1`, deterministic in `seed`.
/// Responses are unique and use level-specific wording; each pair carries one to three
/// skills of its own level.
pub fn corpus(dictionary: &SkillsDictionary, counts: [usize; LEVEL_COUNT], seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<Level> = Level::ALL.iter().flat_map(|&l| std::iter::repeat_n(l, counts[l.index()])).collect();
    levels.shuffle(&mut rng);
    let pairs = levels
        .into_iter()
        .enumerate()
        .map(|(i, level)| {
            let q = rng.random_range(0..QUESTIONS.len());
            let phrases = PHRASES[level.index()];
            let n_phrases = rng.random_range(1..=2);
            let mut chosen: Vec<&str> = phrases.choose_multiple(&mut rng, n_phrases).copied().collect();
            chosen.push(if rng.random_bool(0.5) { "That is my answer" } else { "So that is how I see it" });
            let response = format!("{}. (response {})", chosen.join(". "), i + 1);
            let own: Vec<_> = dictionary.skills_of(level).map(|s| s.id.clone()).collect();
            let n_skills = rng.random_range(1..=own.len().min(3));
            let mut skill_ids: Vec<_> = own.choose_multiple(&mut rng, n_skills).cloned().collect();
            skill_ids.sort_by_key(|id| dictionary.position(id));
            AnnotatedPair {
                id: format!("p{:04}", i + 1),
                question_id: format!("q{}", q + 1),
                participant_id: format!("t{:02}", i % 31 + 1),
                question: QUESTIONS[q].to_string(),
                response,
                level,
                skill_ids,
            }
        })
        .collect();
    Corpus::new(pairs, dictionary.clone()).expect("synthetic pairs are valid")
}

/// Splits `n` pairs across levels in roughly the proportions of a typical classroom sample:
/// levels 2 and 3 most common, level 5 rarest.
pub fn typical_counts(n: usize) -> [usize; LEVEL_COUNT] {
    const SHARES: [f64; LEVEL_COUNT] = [0.11, 0.345, 0.31, 0.165, 0.07];
    let mut counts = SHARES.map(|s| (s * n as f64).floor() as usize);
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..LEVEL_COUNT).collect();
    order.sort_by(|&a, &b| {
        let frac = |i: usize| SHARES[i] * n as f64 - counts[i] as f64;
        frac(b).total_cmp(&frac(a)).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}
