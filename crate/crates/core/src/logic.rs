//! Description language: atomic captions closed under `not`, `or` and `and`.
//!
//! The surface syntax is fully parenthesized with word operators:
//!
//! ```text
//! desc := atom
//!       | "not" "(" desc ")"
//!       | "(" desc ")" "or"  "(" desc ")"
//!       | "(" desc ")" "and" "(" desc ")"
//! atom := WORD+            (words other than "not", "or", "and")
//! ```
//!
//! Tokens are separated by whitespace; parentheses are always tokens of their
//! own. [`Description::render`] produces the canonical spacing and
//! [`parse`] accepts any whitespace between tokens.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Reserved operator words. Atoms may not contain these as standalone words.
pub const RESERVED_WORDS: [&str; 3] = ["not", "or", "and"];

/// Default ceiling on the number of descriptions [`enumerate_descriptions`]
/// will materialize.
pub const DEFAULT_ENUMERATION_CAP: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogicError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("invalid atom {text:?}: {reason}")]
    InvalidAtom { text: String, reason: String },
    #[error("vocabulary must contain at least one atom")]
    EmptyVocabulary,
    #[error("duplicate atom {0:?} in vocabulary")]
    DuplicateAtom(String),
    #[error("enumeration at depth {depth} would produce {count} descriptions (cap {cap})")]
    EnumerationCap { depth: usize, count: String, cap: usize },
    #[error("index {index} out of range for enumeration of size {size}")]
    IndexOutOfRange { index: u128, size: u128 },
}

/// An atomic caption such as `an image of a cat`.
///
/// Atom text is a nonempty sequence of single-space separated words, none of
/// which is a reserved operator word, and contains no parentheses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(text: &str) -> Result<Self, LogicError> {
        let invalid = |reason: &str| LogicError::InvalidAtom {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        if text.is_empty() {
            return Err(invalid("empty"));
        }
        if text.contains(['(', ')']) {
            return Err(invalid("contains a parenthesis"));
        }
        if text.split(' ').any(str::is_empty) || text.chars().any(|c| c.is_whitespace() && c != ' ')
        {
            return Err(invalid("words must be separated by single spaces"));
        }
        if let Some(word) = text.split(' ').find(|w| RESERVED_WORDS.contains(w)) {
            return Err(invalid(&format!("contains reserved word {word:?}")));
        }
        Ok(Atom(Arc::from(text)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Atom {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Atom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Atom::new(&text).map_err(serde::de::Error::custom)
    }
}

/// A well-formed sentence over some set of atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Description {
    Atom(Atom),
    Neg(Box<Description>),
    Or(Box<Description>, Box<Description>),
    And(Box<Description>, Box<Description>),
}

/// Negation combinator.
pub fn combine_neg(d: Description) -> Description {
    Description::Neg(Box::new(d))
}

/// Disjunction combinator.
pub fn combine_or(d: Description, e: Description) -> Description {
    Description::Or(Box::new(d), Box::new(e))
}

/// Conjunction combinator.
pub fn combine_and(d: Description, e: Description) -> Description {
    Description::And(Box::new(d), Box::new(e))
}

impl Description {
    pub fn atom(atom: &Atom) -> Self {
        Description::Atom(atom.clone())
    }

    pub fn depth(&self) -> usize {
        match self {
            Description::Atom(_) => 0,
            Description::Neg(inner) => 1 + inner.depth(),
            Description::Or(l, r) | Description::And(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Description::Atom(_))
    }

    /// Distinct atoms in first-occurrence order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out: Vec<&Atom> = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Description::Atom(a) => {
                if !out.contains(&a) {
                    out.push(a);
                }
            }
            Description::Neg(inner) => inner.collect_atoms(out),
            Description::Or(l, r) | Description::And(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    /// Canonical caption string.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Description::Atom(a) => out.push_str(a.as_str()),
            Description::Neg(inner) => {
                out.push_str("not ( ");
                inner.render_into(out);
                out.push_str(" )");
            }
            Description::Or(l, r) | Description::And(l, r) => {
                let op = if matches!(self, Description::Or(..)) { "or" } else { "and" };
                out.push_str("( ");
                l.render_into(out);
                out.push_str(" ) ");
                out.push_str(op);
                out.push_str(" ( ");
                r.render_into(out);
                out.push_str(" )");
            }
        }
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for Description {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Description {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Renders a description. Free-function form of [`Description::render`].
pub fn render(d: &Description) -> String {
    d.render()
}

/// Ordered, duplicate-free set of atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    atoms: Vec<Atom>,
}

impl Vocabulary {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, LogicError> {
        if atoms.is_empty() {
            return Err(LogicError::EmptyVocabulary);
        }
        for (k, a) in atoms.iter().enumerate() {
            if atoms[..k].contains(a) {
                return Err(LogicError::DuplicateAtom(a.to_string()));
            }
        }
        Ok(Vocabulary { atoms })
    }

    pub fn from_strs<S: AsRef<str>>(texts: &[S]) -> Result<Self, LogicError> {
        let atoms = texts
            .iter()
            .map(|t| Atom::new(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Vocabulary::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn position(&self, atom: &Atom) -> Option<usize> {
        self.atoms.iter().position(|a| a == atom)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.atoms.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let atoms = Vec::<Atom>::deserialize(deserializer)?;
        Vocabulary::new(atoms).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Not,
    Or,
    And,
    Word(&'a str),
}

fn tokenize<'a>(text: &'a str) -> Vec<(usize, Tok<'a>)> {
    let mut toks = Vec::new();
    let mut start: Option<usize> = None;
    let push_word = |toks: &mut Vec<(usize, Tok<'a>)>, s: usize, e: usize| {
        let w = &text[s..e];
        let tok = match w {
            "not" => Tok::Not,
            "or" => Tok::Or,
            "and" => Tok::And,
            _ => Tok::Word(w),
        };
        toks.push((s, tok));
    };
    for (pos, ch) in text.char_indices() {
        if ch.is_whitespace() || ch == '(' || ch == ')' {
            if let Some(s) = start.take() {
                push_word(&mut toks, s, pos);
            }
            match ch {
                '(' => toks.push((pos, Tok::Open)),
                ')' => toks.push((pos, Tok::Close)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(pos);
        }
    }
    if let Some(s) = start {
        push_word(&mut toks, s, text.len());
    }
    toks
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok<'a>> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, LogicError> {
        Err(LogicError::Syntax { position: self.offset(), message: message.into() })
    }

    fn expect(&mut self, want: Tok<'a>, what: &str) -> Result<(), LogicError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => self.error(format!("expected {what}")),
            None => self.error(format!("expected {what}, found end of input")),
        }
    }

    fn description(&mut self) -> Result<Description, LogicError> {
        match self.peek() {
            None => self.error("expected a description, found end of input"),
            Some(Tok::Not) => {
                self.pos += 1;
                let inner = self.group()?;
                Ok(combine_neg(inner))
            }
            Some(Tok::Open) => {
                let left = self.group()?;
                let op = match self.peek() {
                    Some(Tok::Or) => Tok::Or,
                    Some(Tok::And) => Tok::And,
                    Some(_) => return self.error("expected \"or\" or \"and\""),
                    None => return self.error("expected \"or\" or \"and\", found end of input"),
                };
                self.pos += 1;
                let right = self.group()?;
                Ok(if op == Tok::Or { combine_or(left, right) } else { combine_and(left, right) })
            }
            Some(Tok::Word(_)) => {
                let mut words = Vec::new();
                while let Some(Tok::Word(w)) = self.peek() {
                    words.push(*w);
                    self.pos += 1;
                }
                let text = words.join(" ");
                Ok(Description::Atom(Atom(Arc::from(text.as_str()))))
            }
            Some(Tok::Close) => self.error("unbalanced \")\""),
            Some(Tok::Or) | Some(Tok::And) => self.error("operator without a left operand"),
        }
    }

    fn group(&mut self) -> Result<Description, LogicError> {
        self.expect(Tok::Open, "\"(\"")?;
        let inner = self.description()?;
        self.expect(Tok::Close, "\")\"")?;
        Ok(inner)
    }
}

/// Parses a sentence of the canonical grammar.
pub fn parse(text: &str) -> Result<Description, LogicError> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(LogicError::Syntax { position: 0, message: "empty input".into() });
    }
    let mut parser = Parser { toks, pos: 0, end: text.len() };
    let d = parser.description()?;
    if parser.pos != parser.toks.len() {
        return parser.error("unexpected trailing tokens");
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Enumeration

/// Number of distinct descriptions of depth at most `max_depth` over
/// `n_atoms` atoms, or `None` on `u128` overflow.
pub fn count_descriptions(n_atoms: usize, max_depth: usize) -> Option<u128> {
    cumulative_counts(n_atoms, max_depth).map(|c| c[max_depth])
}

// cumulative[k] = number of descriptions with depth <= k
fn cumulative_counts(n_atoms: usize, max_depth: usize) -> Option<Vec<u128>> {
    let a = n_atoms as u128;
    let mut out = vec![a];
    for k in 1..=max_depth {
        let prev = out[k - 1];
        let square = prev.checked_mul(prev)?;
        let next = a.checked_add(prev)?.checked_add(square.checked_mul(2)?)?;
        out.push(next);
    }
    Some(out)
}

/// All distinct descriptions of depth at most `max_depth`, ordered by depth,
/// then construction (`not`, `or`, `and`), then operand position in this
/// same list. Depth 0 yields exactly the atoms in vocabulary order.
pub fn enumerate_descriptions(
    vocab: &Vocabulary,
    max_depth: usize,
) -> Result<Vec<Description>, LogicError> {
    enumerate_descriptions_capped(vocab, max_depth, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_descriptions_capped(
    vocab: &Vocabulary,
    max_depth: usize,
    cap: usize,
) -> Result<Vec<Description>, LogicError> {
    let count = count_descriptions(vocab.len(), max_depth);
    match count {
        Some(c) if c <= cap as u128 => {}
        _ => {
            return Err(LogicError::EnumerationCap {
                depth: max_depth,
                count: count.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string()),
                cap,
            })
        }
    }

    let mut all: Vec<Description> = vocab.atoms().iter().map(Description::atom).collect();
    // all[..prev_start] has depth < k-1, all[prev_start..] has depth exactly k-1
    let mut prev_start = 0;
    for _ in 1..=max_depth {
        let prev_len = all.len();
        let mut level = Vec::new();
        for d in &all[prev_start..prev_len] {
            level.push(combine_neg(d.clone()));
        }
        for make in [combine_or as fn(_, _) -> _, combine_and] {
            for x in 0..prev_len {
                for y in 0..prev_len {
                    if x >= prev_start || y >= prev_start {
                        level.push(make(all[x].clone(), all[y].clone()));
                    }
                }
            }
        }
        prev_start = prev_len;
        all.extend(level);
    }
    Ok(all)
}

/// Returns the element at `index` of `enumerate_descriptions(vocab, max_depth)`
/// without materializing the list.
pub fn nth_description(
    vocab: &Vocabulary,
    max_depth: usize,
    index: u128,
) -> Result<Description, LogicError> {
    let counts = cumulative_counts(vocab.len(), max_depth).ok_or(LogicError::EnumerationCap {
        depth: max_depth,
        count: "more than 2^128".into(),
        cap: usize::MAX,
    })?;
    let size = counts[max_depth];
    if index >= size {
        return Err(LogicError::IndexOutOfRange { index, size });
    }
    Ok(unrank(vocab, &counts, index))
}

fn unrank(vocab: &Vocabulary, counts: &[u128], index: u128) -> Description {
    // depth of the element: smallest k with index < counts[k]
    let k = counts.iter().position(|&c| index < c).expect("index checked by caller");
    if k == 0 {
        return Description::atom(&vocab.atoms()[index as usize]);
    }
    let below = counts[k - 1]; // descriptions of depth < k
    let older = if k >= 2 { counts[k - 2] } else { 0 }; // depth < k-1
    let fresh = below - older; // depth exactly k-1
    let mut r = index - below;
    if r < fresh {
        return combine_neg(unrank(vocab, counts, older + r));
    }
    r -= fresh;
    let per_op = older * fresh + fresh * below;
    let is_or = r < per_op;
    if !is_or {
        r -= per_op;
    }
    let (x, y) = if r < older * fresh {
        (r / fresh, older + r % fresh)
    } else {
        let r2 = r - older * fresh;
        (older + r2 / below, r2 % below)
    };
    let left = unrank(vocab, counts, x);
    let right = unrank(vocab, counts, y);
    if is_or {
        combine_or(left, right)
    } else {
        combine_and(left, right)
    }
}

/// Standard boolean evaluation under an atomic assignment.
pub fn truth_eval<F>(d: &Description, assign: &F) -> bool
where
    F: Fn(&Atom) -> bool + ?Sized,
{
    match d {
        Description::Atom(a) => assign(a),
        Description::Neg(inner) => !truth_eval(inner, assign),
        Description::Or(l, r) => truth_eval(l, assign) || truth_eval(r, assign),
        Description::And(l, r) => truth_eval(l, assign) && truth_eval(r, assign),
    }
}

/// [`truth_eval`] with an explicit assignment table. Missing atoms are false.
pub fn truth_eval_table(d: &Description, table: &HashMap<Atom, bool>) -> bool {
    truth_eval(d, &|a: &Atom| table.get(a).copied().unwrap_or(false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> Description {
        Description::Atom(Atom::new("cat").unwrap())
    }

    fn dog() -> Description {
        Description::Atom(Atom::new("dog").unwrap())
    }

    #[test]
    fn combinators_render_canonically() {
        assert_eq!(combine_neg(cat()).render(), "not ( cat )");
        assert_eq!(combine_or(cat(), dog()).render(), "( cat ) or ( dog )");
        assert_eq!(combine_neg(combine_neg(cat())).render(), "not ( not ( cat ) )");
        assert_eq!(combine_and(cat(), combine_neg(dog())).render(), "( cat ) and ( not ( dog ) )");
        assert_eq!(cat().render(), "cat");
        assert_eq!(
            combine_or(combine_or(cat(), dog()), cat()).render(),
            "( ( cat ) or ( dog ) ) or ( cat )"
        );
    }

    #[test]
    fn parses_canonical_forms() {
        assert_eq!(parse("( cat ) or ( dog )").unwrap(), combine_or(cat(), dog()));
        assert_eq!(parse("not ( cat )").unwrap(), combine_neg(cat()));
        assert_eq!(parse("not(cat)").unwrap(), combine_neg(cat()));
        assert_eq!(parse("  (cat)and(  not (dog))  ").unwrap(), combine_and(cat(), combine_neg(dog())));
    }

    #[test]
    fn multiword_atoms() {
        let d = parse("( an image of a cat ) or ( an  image of a dog )").unwrap();
        assert_eq!(d.render(), "( an image of a cat ) or ( an image of a dog )");
        assert!(Atom::new("an image of a cat").is_ok());
        assert!(Atom::new("cats and dogs").is_err());
        assert!(Atom::new("a (cat)").is_err());
        assert!(Atom::new("a  cat").is_err());
        assert!(Atom::new("").is_err());
        // reserved words are matched as whole words only
        assert!(Atom::new("notable orange android").is_ok());
    }

    #[test]
    fn syntax_errors() {
        for bad in ["cat ) or (", "", "   ", "( cat )", "( cat ) or", "not cat", "( cat ) xor ( dog )", "cat or dog", "(( cat ) or ( dog )", "not ( cat ) )"] {
            let err = parse(bad).unwrap_err();
            assert!(matches!(err, LogicError::Syntax { .. }), "{bad:?} gave {err:?}");
        }
        match parse("cat ) or (").unwrap_err() {
            LogicError::Syntax { position, .. } => assert_eq!(position, 4),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn enumeration_small_cases() {
        let v1 = Vocabulary::from_strs(&["cat"]).unwrap();
        assert_eq!(enumerate_descriptions(&v1, 0).unwrap(), vec![cat()]);
        assert_eq!(
            enumerate_descriptions(&v1, 1).unwrap(),
            vec![cat(), combine_neg(cat()), combine_or(cat(), cat()), combine_and(cat(), cat())]
        );
        let v2 = Vocabulary::from_strs(&["cat", "dog"]).unwrap();
        let l = enumerate_descriptions(&v2, 1).unwrap();
        assert_eq!(l.len(), 12);
        assert_eq!(l[..4], [cat(), dog(), combine_neg(cat()), combine_neg(dog())]);
        assert_eq!(l[5], combine_or(cat(), dog()));
    }

    #[test]
    fn enumeration_cap() {
        let v2 = Vocabulary::from_strs(&["cat", "dog"]).unwrap();
        assert!(matches!(
            enumerate_descriptions_capped(&v2, 2, 100),
            Err(LogicError::EnumerationCap { .. })
        ));
        assert!(matches!(enumerate_descriptions(&v2, 4), Err(LogicError::EnumerationCap { .. })));
        assert_eq!(count_descriptions(2, 2), Some(302));
        assert_eq!(count_descriptions(1, 4), Some(15_415_129));
    }

    #[test]
    fn unranking_matches_enumeration() {
        let v = Vocabulary::from_strs(&["a", "b", "c"]).unwrap();
        let list = enumerate_descriptions(&v, 2).unwrap();
        for (k, d) in list.iter().enumerate() {
            assert_eq!(&nth_description(&v, 2, k as u128).unwrap(), d);
        }
        assert!(nth_description(&v, 2, list.len() as u128).is_err());
    }

    #[test]
    fn truth_eval_examples() {
        let mut t = HashMap::new();
        t.insert(Atom::new("cat").unwrap(), true);
        t.insert(Atom::new("dog").unwrap(), false);
        assert!(truth_eval_table(&combine_or(cat(), dog()), &t));
        assert!(truth_eval_table(&combine_neg(combine_neg(cat())), &t));
        t.insert(Atom::new("dog").unwrap(), true);
        assert!(!truth_eval_table(&combine_and(cat(), combine_neg(dog())), &t));
    }

    #[test]
    fn depth_and_atoms() {
        let d = combine_or(combine_neg(cat()), combine_and(dog(), cat()));
        assert_eq!(d.depth(), 2);
        assert_eq!(d.atoms().iter().map(|a| a.as_str()).collect::<Vec<_>>(), ["cat", "dog"]);
    }
}
