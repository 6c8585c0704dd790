//! The chord dictionary and bar-to-chord matching.
//!
//! The table holds one entry per distinct pitch-class set generated from 25
//! chord families over all 12 roots. When two family/root pairs spell the same
//! set (C6 and Am7, for instance) only the more common name is kept, which
//! leaves exactly 253 entries.

use std::fmt;
use std::sync::OnceLock;

use crate::theory::PITCH_CLASS_NAMES;

/// Bonus for a bar whose distinct pitch classes equal the chord exactly.
pub const EXACT_BONUS: u32 = 10;

/// Number of entries [`ChordTable::standard`] must produce.
pub const CHORD_TABLE_SIZE: usize = 253;

/// Commonness groups, most common first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChordGroup {
    Triad,
    Seventh,
    Sixth,
    Ninth,
    Thirteenth,
    DiminishedAugmented,
    Suspended,
}

struct Family {
    suffix: &'static str,
    intervals: &'static [u8],
    group: ChordGroup,
}

const FAMILIES: &[Family] = &[
    Family { suffix: "", intervals: &[0, 4, 7], group: ChordGroup::Triad },
    Family { suffix: "m", intervals: &[0, 3, 7], group: ChordGroup::Triad },
    Family { suffix: "7", intervals: &[0, 4, 7, 10], group: ChordGroup::Seventh },
    Family { suffix: "maj7", intervals: &[0, 4, 7, 11], group: ChordGroup::Seventh },
    Family { suffix: "m7", intervals: &[0, 3, 7, 10], group: ChordGroup::Seventh },
    Family { suffix: "mMaj7", intervals: &[0, 3, 7, 11], group: ChordGroup::Seventh },
    Family { suffix: "7sus4", intervals: &[0, 5, 7, 10], group: ChordGroup::Seventh },
    Family { suffix: "7b5", intervals: &[0, 4, 6, 10], group: ChordGroup::Seventh },
    Family { suffix: "6", intervals: &[0, 4, 7, 9], group: ChordGroup::Sixth },
    Family { suffix: "m6", intervals: &[0, 3, 7, 9], group: ChordGroup::Sixth },
    Family { suffix: "6/9", intervals: &[0, 2, 4, 7, 9], group: ChordGroup::Sixth },
    Family { suffix: "9", intervals: &[0, 2, 4, 7, 10], group: ChordGroup::Ninth },
    Family { suffix: "maj9", intervals: &[0, 2, 4, 7, 11], group: ChordGroup::Ninth },
    Family { suffix: "m9", intervals: &[0, 2, 3, 7, 10], group: ChordGroup::Ninth },
    Family { suffix: "add9", intervals: &[0, 2, 4, 7], group: ChordGroup::Ninth },
    Family { suffix: "7b9", intervals: &[0, 1, 4, 7, 10], group: ChordGroup::Ninth },
    Family { suffix: "13", intervals: &[0, 2, 4, 7, 9, 10], group: ChordGroup::Thirteenth },
    Family { suffix: "maj13", intervals: &[0, 2, 4, 7, 9, 11], group: ChordGroup::Thirteenth },
    Family { suffix: "m13", intervals: &[0, 2, 3, 7, 9, 10], group: ChordGroup::Thirteenth },
    Family { suffix: "dim", intervals: &[0, 3, 6], group: ChordGroup::DiminishedAugmented },
    Family { suffix: "dim7", intervals: &[0, 3, 6, 9], group: ChordGroup::DiminishedAugmented },
    Family { suffix: "m7b5", intervals: &[0, 3, 6, 10], group: ChordGroup::DiminishedAugmented },
    Family { suffix: "aug", intervals: &[0, 4, 8], group: ChordGroup::DiminishedAugmented },
    Family { suffix: "aug7", intervals: &[0, 4, 8, 10], group: ChordGroup::DiminishedAugmented },
    Family { suffix: "sus4", intervals: &[0, 5, 7], group: ChordGroup::Suspended },
];

/// Index into a [`ChordTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChordId(pub u16);

impl ChordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A set of pitch classes as a 12-bit mask, bit `pc` set when present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PitchClassSet(pub u16);

impl PitchClassSet {
    pub fn from_classes(classes: impl IntoIterator<Item = u8>) -> Self {
        PitchClassSet(classes.into_iter().fold(0, |m, pc| m | 1 << (pc % 12)))
    }

    pub fn contains(self, pc: u8) -> bool {
        self.0 & (1 << (pc % 12)) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn classes(self) -> impl Iterator<Item = u8> {
        (0..12).filter(move |&pc| self.contains(pc))
    }

    pub fn transposed(self, semitones: u8) -> Self {
        Self::from_classes(self.classes().map(|pc| pc + semitones % 12))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chord {
    pub name: String,
    pub root: u8,
    pub pitch_classes: PitchClassSet,
    /// Lower is more common.
    pub commonness_rank: u8,
    pub group: ChordGroup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordTable {
    entries: Vec<Chord>,
}

impl ChordTable {
    /// Generate the table: families in commonness order, roots C..B, skipping
    /// any pitch-class set already present.
    pub fn build() -> ChordTable {
        let mut entries: Vec<Chord> = Vec::with_capacity(CHORD_TABLE_SIZE);
        for family in FAMILIES {
            for root in 0..12u8 {
                let set = PitchClassSet::from_classes(family.intervals.iter().map(|i| root + i));
                if entries.iter().any(|c| c.pitch_classes == set) {
                    continue;
                }
                entries.push(Chord {
                    name: format!("{}{}", PITCH_CLASS_NAMES[root as usize], family.suffix),
                    root,
                    pitch_classes: set,
                    commonness_rank: family.group as u8,
                    group: family.group,
                });
            }
        }
        assert_eq!(entries.len(), CHORD_TABLE_SIZE, "chord roster must produce {CHORD_TABLE_SIZE} entries");
        ChordTable { entries }
    }

    /// Shared, lazily built table.
    pub fn standard() -> &'static ChordTable {
        static TABLE: OnceLock<ChordTable> = OnceLock::new();
        TABLE.get_or_init(ChordTable::build)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Chord] {
        &self.entries
    }

    pub fn get(&self, id: ChordId) -> Option<&Chord> {
        self.entries.get(id.index())
    }

    pub fn by_name(&self, name: &str) -> Option<ChordId> {
        self.entries
            .iter()
            .position(|c| c.name == name)
            .map(|i| ChordId(i as u16))
    }

    pub fn name(&self, id: ChordId) -> &str {
        &self.entries[id.index()].name
    }

    /// The C major triad, used when there is no previous bar to fall back on.
    pub fn c_major(&self) -> ChordId {
        ChordId(0)
    }

    /// Best chord for a multiset of pitch classes. Ties go to the more common
    /// chord, then the lower table index. Returns `None` for an empty bar.
    pub fn match_pitch_classes(&self, bar: &[u8]) -> Option<ChordId> {
        if bar.is_empty() {
            return None;
        }
        let distinct = PitchClassSet::from_classes(bar.iter().copied());
        let mut best: Option<(u32, u8, usize)> = None;
        for (i, chord) in self.entries.iter().enumerate() {
            let score = score_with_distinct(bar, distinct, chord);
            let better = match best {
                None => true,
                Some((s, rank, _)) => score > s || (score == s && chord.commonness_rank < rank),
            };
            if better {
                best = Some((score, chord.commonness_rank, i));
            }
        }
        best.map(|(_, _, i)| ChordId(i as u16))
    }

    /// Like [`ChordTable::match_pitch_classes`], with the empty-bar fallback:
    /// the previous bar's chord, or C major when there is none.
    pub fn match_bar(&self, bar: &[u8], previous: Option<ChordId>) -> ChordId {
        self.match_pitch_classes(bar)
            .or(previous)
            .unwrap_or_else(|| self.c_major())
    }

    /// `name\tpitch-classes` per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.entries {
            let pcs: Vec<&str> = c.pitch_classes.classes().map(|pc| PITCH_CLASS_NAMES[pc as usize]).collect();
            out.push_str(&format!("{}\t{}\n", c.name, pcs.join(" ")));
        }
        out
    }
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn score_with_distinct(bar: &[u8], distinct: PitchClassSet, chord: &Chord) -> u32 {
    let base = bar.iter().filter(|&&pc| chord.pitch_classes.contains(pc)).count() as u32;
    if distinct == chord.pitch_classes {
        base + EXACT_BONUS
    } else {
        base
    }
}

/// Count of bar note occurrences inside the chord, plus [`EXACT_BONUS`] when
/// the bar's distinct pitch classes are exactly the chord.
pub fn score_chord(bar: &[u8], chord: &Chord) -> u32 {
    score_with_distinct(bar, PitchClassSet::from_classes(bar.iter().copied()), chord)
}
