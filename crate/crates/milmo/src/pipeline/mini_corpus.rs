//! The bundled synthetic mini-corpus.
//!
//! Five pseudo-languages written in disjoint scripts (Mongolian, Tibetan,
//! Arabic, Cyrillic and Hangul blocks), four document classes, and a few
//! percent of deliberately dirty documents (URLs, markup, too-short) so the
//! cleaning stage has something to reject. Every document carries a class
//! label; class frequencies are mildly imbalanced so the balancing stage is
//! exercised too. Generation is a pure function of the seed.

use std::collections::BTreeMap;

use crate::corpus::{DatasetRecord, Language};
use crate::rng::{labeled_seed, Rng};
use crate::segment::TSHEG;

/// Script alphabets, chosen so languages never share characters.
fn alphabet(lang: Language) -> Vec<char> {
    let range = |start: u32, n: u32, step: u32| -> Vec<char> {
        (0..n)
            .filter_map(|i| char::from_u32(start + i * step))
            .collect()
    };
    match lang {
        Language::Mongolian => range(0x1820, 20, 1),
        Language::Tibetan => range(0x0F40, 20, 1),
        Language::Uyghur => range(0x0627, 20, 1),
        Language::Kazakh => range(0x0430, 20, 1),
        // Hangul syllable blocks, stepping by 28 keeps them distinct.
        Language::Korean => range(0xAC00, 24, 28),
    }
}

/// Per-language word inventory: common units plus per-class marker units.
/// Units are syllables for Tibetan and two-character morphemes for Korean.
pub struct LanguageInventory {
    pub lang: Language,
    pub common: Vec<String>,
    pub markers: Vec<Vec<String>>, // one marker set per class
}

fn make_unit(lang: Language, chars: &[char], rng: &mut Rng) -> String {
    let len = match lang {
        Language::Tibetan => 1 + rng.gen_range(3),
        Language::Korean => 2,
        _ => 2 + rng.gen_range(5),
    };
    (0..len).map(|_| chars[rng.gen_range(chars.len())]).collect()
}

fn build_inventory(lang: Language, n_classes: usize, seed: u64) -> LanguageInventory {
    let mut rng = Rng::new(labeled_seed(seed, &format!("inventory-{}", lang.code())));
    let chars = alphabet(lang);
    let mut seen = std::collections::HashSet::new();
    let mut fresh = |rng: &mut Rng| -> String {
        loop {
            let unit = make_unit(lang, &chars, rng);
            if seen.insert(unit.clone()) {
                return unit;
            }
        }
    };
    let common: Vec<String> = (0..48).map(|_| fresh(&mut rng)).collect();
    let markers: Vec<Vec<String>> = (0..n_classes)
        .map(|_| (0..5).map(|_| fresh(&mut rng)).collect())
        .collect();
    LanguageInventory {
        lang,
        common,
        markers,
    }
}

/// Mildly imbalanced class draw.
fn pick_class(n_classes: usize, rng: &mut Rng) -> usize {
    // Weights 4:3:2:2 truncated to the class count.
    let weights = [4usize, 3, 2, 2];
    let total: usize = weights.iter().take(n_classes).sum();
    let mut ball = rng.gen_range(total);
    for (i, &w) in weights.iter().take(n_classes).enumerate() {
        if ball < w {
            return i;
        }
        ball -= w;
    }
    n_classes - 1
}

fn render(lang: Language, units: &[String], rng: &mut Rng) -> String {
    match lang {
        // Syllables joined by tsheg, an occasional shad sentence break.
        Language::Tibetan => {
            let mut out = String::new();
            for (i, unit) in units.iter().enumerate() {
                if i > 0 {
                    if rng.gen_bool(0.08) {
                        out.push('\u{0F0D}');
                        out.push(' ');
                    } else {
                        out.push(TSHEG);
                    }
                }
                out.push_str(unit);
            }
            out
        }
        // Eojeols of 1-3 glued morphemes, space separated.
        Language::Korean => {
            let mut words = Vec::new();
            let mut i = 0;
            while i < units.len() {
                let take = (1 + rng.gen_range(3)).min(units.len() - i);
                words.push(units[i..i + take].concat());
                i += take;
            }
            words.join(" ")
        }
        _ => units.join(" "),
    }
}

const URL_NOISE: &str = "https://example.invalid/page?id=7";
const TAG_NOISE: &str = "<div class=\"ad\">";

/// Generate `docs_per_lang` labeled documents per language.
pub fn generate(
    docs_per_lang: usize,
    classes: &[String],
    seed: u64,
) -> Vec<DatasetRecord> {
    let inventories: BTreeMap<Language, LanguageInventory> = Language::ALL
        .iter()
        .map(|&lang| (lang, build_inventory(lang, classes.len(), seed)))
        .collect();
    let mut records = Vec::with_capacity(docs_per_lang * Language::ALL.len());
    for &lang in &Language::ALL {
        let inv = &inventories[&lang];
        let mut rng = Rng::new(labeled_seed(seed, &format!("docs-{}", lang.code())));
        for doc_no in 0..docs_per_lang {
            let class = pick_class(classes.len(), &mut rng);
            let source_id = format!("{}-{:04}", lang.code(), doc_no);

            // A couple percent of documents are deliberately too short.
            let too_short = rng.gen_bool(0.02);
            let n_units = if too_short {
                1 + rng.gen_range(2)
            } else {
                30 + rng.gen_range(51)
            };
            let units: Vec<String> = (0..n_units)
                .map(|_| {
                    if rng.gen_bool(0.25) {
                        let set = &inv.markers[class];
                        set[rng.gen_range(set.len())].clone()
                    } else {
                        inv.common[rng.gen_range(inv.common.len())].clone()
                    }
                })
                .collect();
            let mut text = render(lang, &units, &mut rng);

            // Sprinkle web noise the cleaner must strip.
            if !too_short && rng.gen_bool(0.05) {
                text = format!("{URL_NOISE} {text}");
            }
            if !too_short && rng.gen_bool(0.04) {
                text = format!("{TAG_NOISE}{text}</div>");
            }
            if !too_short && rng.gen_bool(0.03) {
                text.push(' ');
                text.push('\u{0003}');
                text.push_str("www.spam.invalid");
            }

            records.push(DatasetRecord {
                text,
                label: Some(classes[class].clone()),
                lang,
                source_id: Some(source_id),
                tokens: None,
            });
        }
    }
    records
}

/// The Korean morpheme lexicon matching [`generate`]'s inventory: every
/// common and marker morpheme, one per line when written to disk.
pub fn korean_lexicon(classes: usize, seed: u64) -> Vec<String> {
    let inv = build_inventory(Language::Korean, classes, seed);
    let mut entries = inv.common;
    for set in inv.markers {
        entries.extend(set);
    }
    entries.sort();
    entries
}
