//! Deterministic corpus fixtures.
//!
//! Two small text corpora with a clear domain gap: mixed English prose for
//! the general domain and contract-style legal text for the specialized one.
//! Documents are blank-line-delimited paragraphs; slot-filled details (names,
//! dates, amounts, section numbers) make every document unique, which is what
//! gives a small model something to memorize and overfit on.
//!
//! Generation is pure given (seed, size): the committed fixture files under
//! `fixtures/` were produced by [`write_default_fixtures`] and a test pins
//! them to the generator output.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::rng::stream_rng;

pub const DEFAULT_GENERAL_SEED: u64 = 101;
pub const DEFAULT_SPECIALIZED_SEED: u64 = 202;
pub const DEFAULT_GENERAL_BYTES: usize = 640_000;
pub const DEFAULT_SPECIALIZED_BYTES: usize = 704_000;

pub const GENERAL_FILE: &str = "general.txt";
pub const SPECIALIZED_FILE: &str = "legal.txt";

const NAMES: &[&str] = &[
    "Anna", "Mikel", "Sofia", "Tomas", "Greta", "Ivo", "Lena", "Oskar", "Mara", "Viktor",
    "Nina", "Pavel", "Rosa", "Anton", "Clara", "Emil", "Hana", "Jonas", "Vera", "Milo",
    "Selma", "Rudolf", "Iris", "Casimir", "Edith", "Leopold", "Marta", "Felix", "Alba", "Hugo",
];

const NOUNS: &[&str] = &[
    "garden", "harbor", "letter", "mountain", "teacher", "market", "winter", "lantern",
    "orchard", "violin", "bridge", "library", "sailor", "meadow", "clock", "painter",
    "village", "storm", "bakery", "forest", "island", "festival", "shepherd", "workshop",
    "chapel", "caravan", "archive", "courtyard", "lighthouse", "mill", "river", "attic",
];

const ADJECTIVES: &[&str] = &[
    "quiet", "distant", "golden", "weathered", "narrow", "cheerful", "pale", "ancient",
    "restless", "fragrant", "crooked", "gentle", "somber", "bright", "muddy", "hollow",
    "patient", "curious", "faded", "steep", "warm", "silent", "heavy", "thin",
];

const VERBS_PAST: &[&str] = &[
    "wandered", "lingered", "settled", "gathered", "vanished", "returned", "trembled",
    "glimmered", "waited", "drifted", "opened", "whispered", "climbed", "rested", "turned",
    "hurried", "paused", "listened", "followed", "remembered", "slept", "sang",
];

const PLACES: &[&str] = &[
    "along the shore", "beyond the hills", "near the old bridge", "beneath the elm",
    "by the market square", "at the edge of town", "under a low sky", "past the orchard gate",
    "beside the canal", "within the walled garden", "behind the granary", "on the upper road",
];

const TIMES: &[&str] = &[
    "In the early morning", "After the long rain", "Toward evening", "During the harvest",
    "Before the first frost", "Late in the season", "On a gray afternoon", "At the turn of the year",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn prose_sentence(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..10) {
        0 => format!(
            "{}, {} {} {}.",
            pick(rng, TIMES),
            pick(rng, NAMES),
            pick(rng, VERBS_PAST),
            pick(rng, PLACES)
        ),
        1 => format!(
            "The {} {} {} {}.",
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS),
            pick(rng, VERBS_PAST),
            pick(rng, PLACES)
        ),
        2 => format!(
            "{} carried the {} {} to the {}.",
            pick(rng, NAMES),
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS),
            pick(rng, NOUNS)
        ),
        3 => format!(
            "Nobody in the {} spoke of the {} {} again.",
            pick(rng, NOUNS),
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS)
        ),
        4 => format!(
            "When the {} {}, the {} seemed almost {}.",
            pick(rng, NOUNS),
            pick(rng, VERBS_PAST),
            pick(rng, NOUNS),
            pick(rng, ADJECTIVES)
        ),
        5 => format!(
            "{} and {} watched the {} {} together.",
            pick(rng, NAMES),
            pick(rng, NAMES),
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS)
        ),
        6 => format!(
            "The {} smelled of {} and {} for {} days.",
            pick(rng, NOUNS),
            pick(rng, NOUNS),
            pick(rng, NOUNS),
            rng.gen_range(2..40)
        ),
        7 => format!(
            "Years later, {} still remembered the {} {}.",
            pick(rng, NAMES),
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS)
        ),
        8 => format!(
            "A {} wind moved through the {} {}.",
            pick(rng, ADJECTIVES),
            pick(rng, NOUNS),
            pick(rng, PLACES)
        ),
        _ => format!(
            "It was said that the {} of {} had {} {}.",
            pick(rng, NOUNS),
            pick(rng, NAMES),
            pick(rng, VERBS_PAST),
            pick(rng, PLACES)
        ),
    }
}

/// Mixed English prose, one paragraph per document.
pub fn general_prose(seed: u64, target_bytes: usize) -> String {
    let mut rng = stream_rng(seed, "fixtures/general");
    let mut out = String::with_capacity(target_bytes + 512);
    while out.len() < target_bytes {
        let sentences = rng.gen_range(3..=7);
        let mut doc = String::new();
        for i in 0..sentences {
            if i > 0 {
                doc.push(' ');
            }
            doc.push_str(&prose_sentence(&mut rng));
        }
        out.push_str(&doc);
        out.push_str("\n\n");
    }
    out
}

const PARTIES: &[&str] = &[
    "the Licensee", "the Licensor", "the Custodian", "the Trustee", "the Vendor",
    "the Assignee", "the Obligor", "the Guarantor", "the Lessee", "the Lessor",
    "the Grantor", "the Subscriber", "the Registrar", "the Underwriter",
];

const OBLIGATIONS: &[&str] = &[
    "shall remit payment of", "shall deliver a certified copy of", "shall maintain in good order",
    "shall furnish written notice of", "shall cause to be recorded", "shall retain custody of",
    "shall deposit in escrow", "shall procure insurance covering", "shall surrender possession of",
    "shall keep a true account of",
];

const OBJECTS: &[&str] = &[
    "the Collateral", "the Premises", "the Instrument", "the Schedule of Fees",
    "the Registered Marks", "the Deed of Assignment", "the Letters of Credit",
    "the Encumbered Assets", "the Settlement Fund", "the Escrow Account",
    "the Appurtenances", "the Charter Documents",
];

const OPENERS: &[&str] = &[
    "NOTWITHSTANDING the foregoing", "For the avoidance of doubt",
    "Except as otherwise provided herein", "Subject to the terms hereof",
    "In witness whereof", "Without prejudice to the remedies available",
];

const TITLES: &[&str] = &[
    "DEFINITIONS AND INTERPRETATION", "PAYMENT OF FEES", "DELIVERY OF INSTRUMENTS",
    "COVENANTS OF THE PARTIES", "TERMINATION", "NOTICES", "GOVERNING PROVISIONS",
    "ASSIGNMENT", "INDEMNIFICATION", "ESCROW ARRANGEMENTS", "REPRESENTATIONS",
    "FURTHER ASSURANCES",
];

const MONTHS: &[&str] = &[
    "January", "February", "March", "April", "May", "June", "July", "August",
    "September", "October", "November", "December",
];

fn legal_date(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}, {}", pick(rng, MONTHS), rng.gen_range(1..29), rng.gen_range(1890..1960))
}

fn legal_money(rng: &mut ChaCha8Rng) -> String {
    let whole: u32 = rng.gen_range(1_000..999_999);
    let cents: u32 = rng.gen_range(0..100);
    let s = whole.to_string();
    let mut grouped = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(c);
    }
    format!("${grouped}.{cents:02}")
}

fn section_ref(rng: &mut ChaCha8Rng) -> String {
    format!("Section {}.{}", rng.gen_range(1..12), rng.gen_range(1..9))
}

fn legal_clause(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..7) {
        0 => format!(
            "WHEREAS {} has agreed to convey {} on {}, and {} has acknowledged receipt thereof;",
            pick(rng, PARTIES),
            pick(rng, OBJECTS),
            legal_date(rng),
            pick(rng, PARTIES)
        ),
        1 => format!(
            "{}, {} {} {} no later than {}.",
            pick(rng, OPENERS),
            pick(rng, PARTIES),
            pick(rng, OBLIGATIONS),
            pick(rng, OBJECTS),
            legal_date(rng)
        ),
        2 => format!(
            "{} {} {} in the amount of {}, payable at the offices of the Registrar.",
            capitalize(pick(rng, PARTIES)),
            pick(rng, OBLIGATIONS),
            pick(rng, OBJECTS),
            legal_money(rng)
        ),
        3 => format!(
            "Pursuant to {}, any dispute arising hereunder shall be referred to {}.",
            section_ref(rng),
            pick(rng, PARTIES)
        ),
        4 => format!(
            "This covenant shall remain in force until {}, unless terminated as provided in {}.",
            legal_date(rng),
            section_ref(rng)
        ),
        5 => format!(
            "The fee described in Schedule {} is fixed at {} per annum, adjusted as set forth in {}.",
            (b'A' + rng.gen_range(0..8u8)) as char,
            legal_money(rng),
            section_ref(rng)
        ),
        _ => format!(
            "{} hereby represents that {} is free of encumbrances as of {}, save as disclosed to {}.",
            capitalize(pick(rng, PARTIES)),
            pick(rng, OBJECTS),
            legal_date(rng),
            pick(rng, PARTIES)
        ),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Contract-style legal text, one article per document.
pub fn legal_style(seed: u64, target_bytes: usize) -> String {
    let mut rng = stream_rng(seed, "fixtures/legal");
    let mut out = String::with_capacity(target_bytes + 512);
    let mut article = 1usize;
    while out.len() < target_bytes {
        let mut doc = format!("ARTICLE {}. {}. ", article, pick(&mut rng, TITLES));
        let clauses = rng.gen_range(3..=6);
        for i in 0..clauses {
            if i > 0 {
                doc.push(' ');
            }
            doc.push_str(&legal_clause(&mut rng));
        }
        out.push_str(&doc);
        out.push_str("\n\n");
        article += 1;
    }
    out
}

/// Writes the default fixture pair into `dir`, returning the two paths.
pub fn write_default_fixtures(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let general = dir.join(GENERAL_FILE);
    let specialized = dir.join(SPECIALIZED_FILE);
    std::fs::write(&general, general_prose(DEFAULT_GENERAL_SEED, DEFAULT_GENERAL_BYTES))?;
    std::fs::write(&specialized, legal_style(DEFAULT_SPECIALIZED_SEED, DEFAULT_SPECIALIZED_BYTES))?;
    Ok((general, specialized))
}
