//! Text and alignment front end: G2P, forced-alignment validation, edit
//! region lookup and phone splicing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Short pause symbol produced by punctuation.
pub const PAUSE: &str = "sp";
/// Silence symbol aligners emit at utterance edges.
pub const SILENCE: &str = "sil";

/// Closed phone inventory: ARPAbet without stress markers plus pause/silence.
pub const INVENTORY: [&str; 41] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH",
    "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V",
    "W", "Y", "Z", "ZH", PAUSE, SILENCE,
];

/// Index of a phone symbol in [`INVENTORY`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(u8);

impl Phone {
    pub fn parse(symbol: &str) -> Result<Phone> {
        INVENTORY
            .iter()
            .position(|p| *p == symbol)
            .map(|i| Phone(i as u8))
            .ok_or_else(|| Error::UnknownPhone(symbol.to_string()))
    }

    pub fn pause() -> Phone {
        Phone::parse(PAUSE).unwrap()
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn symbol(self) -> &'static str {
        INVENTORY[self.0 as usize]
    }

    pub fn is_pause(self) -> bool {
        matches!(self.symbol(), PAUSE | SILENCE)
    }
}

impl core::fmt::Display for Phone {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Phones with the index of the word that produced each one. Pauses carry
/// the preceding word's index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhoneSequence {
    phones: Vec<Phone>,
    word_indices: Vec<usize>,
}

impl PhoneSequence {
    pub fn new(phones: Vec<Phone>, word_indices: Vec<usize>) -> Result<Self> {
        if phones.len() != word_indices.len() {
            return Err(Error::shape("phones and word indices differ in length"));
        }
        if word_indices.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("word indices must be non-decreasing"));
        }
        Ok(PhoneSequence { phones, word_indices })
    }

    pub fn from_symbols(symbols: &[&str], word_indices: Vec<usize>) -> Result<Self> {
        let phones = symbols.iter().map(|s| Phone::parse(s)).collect::<Result<_>>()?;
        PhoneSequence::new(phones, word_indices)
    }

    pub fn phones(&self) -> &[Phone] {
        &self.phones
    }

    pub fn word_indices(&self) -> &[usize] {
        &self.word_indices
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.phones.iter().map(|p| p.id()).collect()
    }

    pub fn symbols(&self) -> Vec<&'static str> {
        self.phones.iter().map(|p| p.symbol()).collect()
    }

    /// Number of words, i.e. one past the largest word index.
    pub fn word_count(&self) -> usize {
        self.word_indices.last().map_or(0, |w| w + 1)
    }

    pub fn slice(&self, range: Range<usize>) -> PhoneSequence {
        PhoneSequence {
            phones: self.phones[range.clone()].to_vec(),
            word_indices: self.word_indices[range].to_vec(),
        }
    }
}

/// Word -> phones table. Keys are lower-cased; stress digits are stripped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<Phone>>,
}

impl Lexicon {
    /// Parses whitespace-separated `WORD PH1 PH2 ...` lines. Blank lines and
    /// `;;;` comments are skipped, as are alternate pronunciations `WORD(1)`.
    pub fn parse(text: &str) -> Result<Lexicon> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap();
            if word.ends_with(')') && word.contains('(') {
                continue;
            }
            let phones = fields
                .map(|p| Phone::parse(p.trim_end_matches(|c: char| c.is_ascii_digit())))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::invalid(format!("lexicon line {}: {e}", lineno + 1)))?;
            if phones.is_empty() {
                return Err(Error::invalid(format!(
                    "lexicon line {}: word `{word}` has no phones",
                    lineno + 1
                )));
            }
            entries.entry(word.to_lowercase()).or_insert(phones);
        }
        Ok(Lexicon { entries })
    }

    pub fn insert(&mut self, word: &str, phones: Vec<Phone>) {
        self.entries.insert(word.to_lowercase(), phones);
    }

    pub fn get(&self, word: &str) -> Option<&[Phone]> {
        self.entries.get(&word.to_lowercase()).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }
}

/// Text token: a word or a pause-producing punctuation mark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Token {
    Word(String),
    Pause,
}

fn is_pause_mark(c: char) -> bool {
    matches!(c, ',' | '.' | ';' | ':' | '!' | '?')
}

/// Splits text into words and pause marks. Runs of punctuation collapse into
/// one pause; punctuation before the first word is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            tokens.push(Token::Word(core::mem::take(word)));
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' || c == '-' {
            word.push(c);
        } else {
            flush(&mut word, &mut tokens);
            if is_pause_mark(c) && matches!(tokens.last(), Some(Token::Word(_))) {
                tokens.push(Token::Pause);
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Words of `text` in order, punctuation removed.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w),
            Token::Pause => None,
        })
        .collect()
}

/// Lexicon G2P. Out-of-vocabulary words are an error, never guessed.
pub fn g2p(text: &str, lexicon: &Lexicon) -> Result<PhoneSequence> {
    let mut phones = Vec::new();
    let mut word_indices = Vec::new();
    let mut next_word = 0usize;
    for token in tokenize(text) {
        match token {
            Token::Word(w) => {
                let pron = lexicon.get(&w).ok_or(Error::OutOfVocabulary { word: w })?;
                phones.extend_from_slice(pron);
                word_indices.extend(core::iter::repeat_n(next_word, pron.len()));
                next_word += 1;
            }
            Token::Pause => {
                phones.push(Phone::pause());
                word_indices.push(next_word - 1);
            }
        }
    }
    PhoneSequence::new(phones, word_indices)
}

/// One aligned phone. Frames are mel frames, `[start_frame, end_frame)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPhone {
    pub phone: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub word_index: usize,
}

impl AlignedPhone {
    pub fn frames(&self) -> usize {
        self.end_frame - self.start_frame
    }
}

/// Forced alignment on the mel frame grid. Construction validates
/// contiguity, coverage and the phone inventory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Alignment {
    pub utterance_id: String,
    pub total_frames: usize,
    #[serde(rename = "phones")]
    entries: Vec<AlignedPhone>,
}

#[derive(Deserialize)]
struct RawAlignment {
    utterance_id: String,
    total_frames: usize,
    phones: Vec<AlignedPhone>,
}

impl<'de> Deserialize<'de> for Alignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let raw = RawAlignment::deserialize(d)?;
        Alignment::new(raw.utterance_id, raw.total_frames, raw.phones).map_err(serde::de::Error::custom)
    }
}

impl Alignment {
    pub fn new(utterance_id: String, total_frames: usize, entries: Vec<AlignedPhone>) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedAlignment(format!("{utterance_id}: {msg}")));
        if entries.is_empty() {
            return bad("no phones".into());
        }
        if entries[0].start_frame != 0 {
            return bad(format!("first phone starts at frame {}", entries[0].start_frame));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.end_frame <= e.start_frame {
                return bad(format!("phone {i} ({}) has empty span [{}, {})", e.phone, e.start_frame, e.end_frame));
            }
            if Phone::parse(&e.phone).is_err() {
                return bad(format!("phone {i} has unknown symbol `{}`", e.phone));
            }
            if let Some(next) = entries.get(i + 1) {
                if next.start_frame != e.end_frame {
                    let kind = if next.start_frame > e.end_frame { "gap" } else { "overlap" };
                    return bad(format!(
                        "{kind} between phone {i} ending at {} and phone {} starting at {}",
                        e.end_frame,
                        i + 1,
                        next.start_frame
                    ));
                }
                if next.word_index < e.word_index {
                    return bad(format!("word index decreases at phone {}", i + 1));
                }
            }
        }
        let last = entries.last().unwrap().end_frame;
        if last != total_frames {
            return bad(format!("last phone ends at {last}, total_frames is {total_frames}"));
        }
        Ok(Alignment { utterance_id, total_frames, entries })
    }

    /// Alignment from per-phone durations laid end to end.
    pub fn from_durations(utterance_id: String, phones: &PhoneSequence, durations: &[usize]) -> Result<Self> {
        if phones.len() != durations.len() {
            return Err(Error::shape("one duration per phone required"));
        }
        let mut start = 0;
        let entries = phones
            .phones()
            .iter()
            .zip(phones.word_indices())
            .zip(durations)
            .map(|((p, w), d)| {
                let e = AlignedPhone { phone: p.symbol().to_string(), start_frame: start, end_frame: start + d, word_index: *w };
                start += d;
                e
            })
            .collect();
        Alignment::new(utterance_id, start, entries)
    }

    pub fn entries(&self) -> &[AlignedPhone] {
        &self.entries
    }

    pub fn durations(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.frames()).collect()
    }

    pub fn phone_sequence(&self) -> PhoneSequence {
        let phones = self.entries.iter().map(|e| Phone::parse(&e.phone).unwrap()).collect();
        let words = self.entries.iter().map(|e| e.word_index).collect();
        PhoneSequence::new(phones, words).unwrap()
    }

    pub fn word_count(&self) -> usize {
        self.entries.last().map_or(0, |e| e.word_index + 1)
    }

    /// Frame index where phone `i` starts; `total_frames` for `i == len`.
    pub fn phone_start(&self, i: usize) -> usize {
        self.entries.get(i).map_or(self.total_frames, |e| e.start_frame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOperation {
    Delete,
    Insert,
    Replace,
}

/// User edit intent. Delete/replace use the inclusive word range
/// `first_word..=last_word`; insert uses the gap `position` (0 = before the
/// first word).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRequest {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub utterance_id: String,
    pub operation: EditOperation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_word: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_word: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default)]
    pub new_text: String,
}

impl EditRequest {
    pub fn delete(first_word: usize, last_word: usize) -> Self {
        EditRequest {
            utterance_id: String::new(),
            operation: EditOperation::Delete,
            first_word: Some(first_word),
            last_word: Some(last_word),
            position: None,
            new_text: String::new(),
        }
    }

    pub fn insert(position: usize, new_text: &str) -> Self {
        EditRequest {
            utterance_id: String::new(),
            operation: EditOperation::Insert,
            first_word: None,
            last_word: None,
            position: Some(position),
            new_text: new_text.to_string(),
        }
    }

    pub fn replace(first_word: usize, last_word: usize, new_text: &str) -> Self {
        EditRequest {
            utterance_id: String::new(),
            operation: EditOperation::Replace,
            first_word: Some(first_word),
            last_word: Some(last_word),
            position: None,
            new_text: new_text.to_string(),
        }
    }

    pub fn for_utterance(mut self, id: &str) -> Self {
        self.utterance_id = id.to_string();
        self
    }

    /// Checks the request against a transcript of `word_count` words.
    pub fn validate(&self, word_count: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidRequest(msg));
        match self.operation {
            EditOperation::Delete | EditOperation::Replace => {
                let (Some(first), Some(last)) = (self.first_word, self.last_word) else {
                    return bad("first_word and last_word are required".into());
                };
                if first > last {
                    return bad(format!("first_word {first} exceeds last_word {last}"));
                }
                if last >= word_count {
                    return bad(format!("last_word {last} out of range for {word_count} words"));
                }
            }
            EditOperation::Insert => {
                let Some(pos) = self.position else {
                    return bad("position is required for insert".into());
                };
                if pos > word_count {
                    return bad(format!("position {pos} out of range for {word_count} words"));
                }
            }
        }
        let needs_text = self.operation != EditOperation::Delete;
        if needs_text && words(&self.new_text).is_empty() {
            return bad("new_text must contain at least one word".into());
        }
        Ok(())
    }
}

/// Phone and frame extent of an edit in the original utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub phones: Range<usize>,
    pub frames: Range<usize>,
}

/// Phones whose word index falls in the request's word range, and their
/// frames. Insert yields empty ranges at the word gap.
pub fn locate_region(alignment: &Alignment, request: &EditRequest) -> Result<Region> {
    request.validate(alignment.word_count())?;
    let entries = alignment.entries();
    let (lo, hi) = match request.operation {
        EditOperation::Insert => {
            let pos = request.position.unwrap();
            let at = entries.iter().position(|e| e.word_index >= pos).unwrap_or(entries.len());
            (at, at)
        }
        _ => {
            let (first, last) = (request.first_word.unwrap(), request.last_word.unwrap());
            let lo = entries.iter().position(|e| e.word_index >= first).unwrap_or(entries.len());
            let hi = entries.iter().position(|e| e.word_index > last).unwrap_or(entries.len());
            (lo, hi)
        }
    };
    Ok(Region {
        phones: lo..hi,
        frames: alignment.phone_start(lo)..alignment.phone_start(hi),
    })
}

/// `P_A ++ P_B' ++ P_C`. New phones are renumbered to start at the first
/// replaced word; later words shift by the change in word count.
pub fn splice_phones(original: &PhoneSequence, range: Range<usize>, new_phones: &PhoneSequence) -> Result<PhoneSequence> {
    if range.start > range.end || range.end > original.len() {
        return Err(Error::invalid(format!(
            "phone range {}..{} invalid for {} phones",
            range.start,
            range.end,
            original.len()
        )));
    }
    let words = original.word_indices();
    // First replaced word, or the word that follows the insertion gap.
    let base = words.get(range.start).copied().unwrap_or(original.word_count());
    let removed_words = if range.is_empty() {
        0
    } else {
        words[range.end - 1] + 1 - words[range.start]
    };
    let added_words = new_phones.word_count();
    let mut phones = Vec::with_capacity(original.len() - range.len() + new_phones.len());
    let mut indices = Vec::with_capacity(phones.capacity());
    phones.extend_from_slice(&original.phones()[..range.start]);
    indices.extend_from_slice(&words[..range.start]);
    phones.extend_from_slice(new_phones.phones());
    indices.extend(new_phones.word_indices().iter().map(|w| w + base));
    phones.extend_from_slice(&original.phones()[range.end..]);
    indices.extend(words[range.end..].iter().map(|w| w + added_words - removed_words));
    PhoneSequence::new(phones, indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lexicon() -> Lexicon {
        Lexicon::parse("HELLO HH AH0 L OW1\nWORLD W ER1 L D\nPLANET P L AE1 N IH0 T\n").unwrap()
    }

    fn hello_world_alignment() -> Alignment {
        let phones = g2p("hello, world", &lexicon()).unwrap();
        Alignment::from_durations("u".into(), &phones, &[3, 4, 5, 6, 7, 8, 2, 3, 4]).unwrap()
    }

    #[test]
    fn g2p_empty_text() {
        assert!(g2p("", &lexicon()).unwrap().is_empty());
    }

    #[test]
    fn g2p_maps_comma_to_pause() {
        let seq = g2p("hello, world", &lexicon()).unwrap();
        assert_eq!(seq.symbols(), ["HH", "AH", "L", "OW", "sp", "W", "ER", "L", "D"]);
        assert_eq!(seq.word_indices(), [0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn g2p_rejects_oov() {
        assert_eq!(
            g2p("hello zzzq", &lexicon()),
            Err(Error::OutOfVocabulary { word: "zzzq".into() })
        );
    }

    #[test]
    fn alignment_validation() {
        let entry = |s, e| AlignedPhone { phone: "AH".into(), start_frame: s, end_frame: e, word_index: 0 };
        assert!(Alignment::new("a".into(), 25, vec![entry(0, 10), entry(10, 25)]).is_ok());
        assert!(matches!(
            Alignment::new("a".into(), 20, vec![entry(0, 10), entry(12, 20)]),
            Err(Error::MalformedAlignment(m)) if m.contains("gap")
        ));
        assert!(matches!(
            Alignment::new("a".into(), 20, vec![entry(0, 10), entry(8, 20)]),
            Err(Error::MalformedAlignment(m)) if m.contains("overlap")
        ));
        assert!(Alignment::new("a".into(), 10, vec![entry(0, 0), entry(0, 10)]).is_err());
        assert!(Alignment::new("a".into(), 30, vec![entry(0, 10), entry(10, 25)]).is_err());
    }

    #[test]
    fn locate_replace_second_word() {
        let al = hello_world_alignment();
        let r = locate_region(&al, &EditRequest::replace(1, 1, "planet")).unwrap();
        assert_eq!(r.phones, 5..9);
        assert_eq!(r.frames, 25..42);
    }

    #[test]
    fn locate_insert_at_start_is_empty_at_zero() {
        let al = hello_world_alignment();
        let r = locate_region(&al, &EditRequest::insert(0, "world")).unwrap();
        assert_eq!(r.phones, 0..0);
        assert_eq!(r.frames, 0..0);
        let end = locate_region(&al, &EditRequest::insert(2, "world")).unwrap();
        assert_eq!(end.phones, 9..9);
        assert_eq!(end.frames, 42..42);
    }

    #[test]
    fn locate_delete_takes_trailing_pause() {
        let al = hello_world_alignment();
        let r = locate_region(&al, &EditRequest::delete(0, 0)).unwrap();
        assert_eq!(r.phones, 0..5);
        assert_eq!(al.entries()[4].phone, "sp");
    }

    #[test]
    fn locate_rejects_out_of_range() {
        let al = hello_world_alignment();
        assert!(matches!(locate_region(&al, &EditRequest::delete(1, 2)), Err(Error::InvalidRequest(_))));
        assert!(matches!(locate_region(&al, &EditRequest::insert(3, "hello")), Err(Error::InvalidRequest(_))));
        assert!(matches!(locate_region(&al, &EditRequest::replace(1, 0, "hello")), Err(Error::InvalidRequest(_))));
        assert!(matches!(locate_region(&al, &EditRequest::replace(0, 0, " , ")), Err(Error::InvalidRequest(_))));
    }

    #[test]
    fn splice_replace_insert_delete() {
        let lex = lexicon();
        let orig = g2p("hello, world", &lex).unwrap();
        let planet = g2p("planet", &lex).unwrap();
        let replaced = splice_phones(&orig, 5..9, &planet).unwrap();
        assert_eq!(replaced.symbols(), ["HH", "AH", "L", "OW", "sp", "P", "L", "AE", "N", "IH", "T"]);
        assert_eq!(replaced.word_indices(), [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);

        let deleted = splice_phones(&orig, 0..5, &PhoneSequence::default()).unwrap();
        assert_eq!(deleted.symbols(), ["W", "ER", "L", "D"]);
        assert_eq!(deleted.word_indices(), [0, 0, 0, 0]);

        let inserted = splice_phones(&orig, 0..0, &planet).unwrap();
        assert_eq!(inserted.len(), orig.len() + planet.len());
        assert_eq!(inserted.word_indices()[6..], [1, 1, 1, 1, 1, 2, 2, 2, 2]);
    }
}
