//! Per-language segmentation: space-delimited words, Tibetan syllables, and
//! lexicon-driven longest-match morphemes.
//!
//! ```bash
//! cargo run --example segmentation
//! ```

use milmo::corpus::Language;
use milmo::segment::{segment, Granularity, MorphemeLexicon};

fn main() {
    // Mongolian, Uyghur and Kazakh split on whitespace.
    let mongolian = segment(
        "ᠰᠤᠷᠭᠠᠨ ᠬᠦᠮᠦᠵᠢᠯ ᠰᠢᠨᠵᠢᠯᠡᠬᠦ ᠤᠬᠠᠭᠠᠨ",
        Language::Mongolian,
        Granularity::Word,
        None,
    )
    .unwrap();
    println!("mn words:     {:?}", mongolian.tokens);

    // Tibetan splits into syllables on the tsheg; the shad ends sentences.
    let tibetan = segment(
        "བོད་ཡིག་གི་ཚེག། དེ་ནས",
        Language::Tibetan,
        Granularity::Syllable,
        None,
    )
    .unwrap();
    println!("bo syllables: {:?}", tibetan.tokens);

    // Tibetan word segmentation joins syllables via a word lexicon.
    let bo_lexicon = MorphemeLexicon::new(
        "bo-words",
        ["བོདཡིག", "ཚེག", "གི", "དེནས"].iter().map(|s| s.to_string()),
    )
    .unwrap();
    let tibetan_words = segment(
        "བོད་ཡིག་གི་ཚེག། དེ་ནས",
        Language::Tibetan,
        Granularity::Word,
        Some(&bo_lexicon),
    )
    .unwrap();
    println!("bo words:     {:?}", tibetan_words.tokens);

    // Korean segments into morphemes by greedy longest match against a
    // pluggable lexicon (an external analyzer's vocabulary drops in here).
    let ko_lexicon = MorphemeLexicon::new(
        "ko-demo",
        ["하늘", "이", "맑", "다", "오늘"].iter().map(|s| s.to_string()),
    )
    .unwrap();
    let korean = segment(
        "오늘 하늘이 맑다",
        Language::Korean,
        Granularity::Morpheme,
        Some(&ko_lexicon),
    )
    .unwrap();
    println!("ko morphemes: {:?}", korean.tokens);

    // Invalid combinations are rejected up front.
    let err = segment("text", Language::Korean, Granularity::Syllable, None).unwrap_err();
    println!("ko + syllable -> {err}");
}
