//! Logic-grid puzzles: clue predicates, an exhaustive solver and a seeded
//! generator whose output always has exactly one solution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::task::{Split, Task};
use crate::model::{AnswerSchema, Attribute, Grid, GridSchema, StructuredAnswer};

/// A value of one attribute, referenced by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValueRef {
    pub attribute: String,
    pub value: String,
}

impl ValueRef {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        ValueRef {
            attribute: attribute.into(),
            value: value.into(),
        }
    }
}

/// Houses are numbered from 1 on the left.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Clue {
    FixedPosition { item: ValueRef, house: usize },
    /// `left` is somewhere to the left of `right`, not necessarily adjacent.
    LeftOf { left: ValueRef, right: ValueRef },
    Adjacent { a: ValueRef, b: ValueRef },
    SameHouse { a: ValueRef, b: ValueRef },
    /// `name` is a value of the first attribute (the person).
    AttributeOfPerson { name: String, attribute: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cell {
    attr: usize,
    value: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Resolved {
    Fixed(Cell, usize),
    LeftOf(Cell, Cell),
    Adjacent(Cell, Cell),
    Same(Cell, Cell),
}

impl Resolved {
    fn max_attr(self) -> usize {
        match self {
            Resolved::Fixed(c, _) => c.attr,
            Resolved::LeftOf(a, b) | Resolved::Adjacent(a, b) | Resolved::Same(a, b) => a.attr.max(b.attr),
        }
    }

    /// `pos[a][v]` is the zero-based house holding value `v` of attribute `a`.
    fn holds(self, pos: &[Vec<usize>]) -> bool {
        let at = |c: Cell| pos[c.attr][c.value];
        match self {
            Resolved::Fixed(c, h) => at(c) == h,
            Resolved::LeftOf(a, b) => at(a) < at(b),
            Resolved::Adjacent(a, b) => at(a).abs_diff(at(b)) == 1,
            Resolved::Same(a, b) => at(a) == at(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PuzzleError {
    #[error("grid has {0} houses; exhaustive solving supports at most 5")]
    TooLarge(usize),
    #[error("clue {index}: {message}")]
    BadClue { index: usize, message: String },
    #[error("puzzle size out of range: houses {houses} (2..=5), attributes {attributes} (1..=4)")]
    OutOfRange { houses: usize, attributes: usize },
    #[error("no unique-solution clue set found after {0} attempts")]
    GenerationExhausted(usize),
}

fn resolve_ref(schema: &GridSchema, r: &ValueRef) -> Result<Cell, String> {
    let attr = schema
        .attribute_index(&r.attribute)
        .ok_or_else(|| format!("unknown attribute `{}`", r.attribute))?;
    let value = schema
        .value_index(attr, &r.value)
        .ok_or_else(|| format!("unknown value `{}` for `{}`", r.value, r.attribute))?;
    Ok(Cell { attr, value })
}

fn resolve(schema: &GridSchema, clue: &Clue) -> Result<Resolved, String> {
    Ok(match clue {
        Clue::FixedPosition { item, house } => {
            if *house == 0 || *house > schema.houses {
                return Err(format!("house {house} outside 1..={}", schema.houses));
            }
            Resolved::Fixed(resolve_ref(schema, item)?, house - 1)
        }
        Clue::LeftOf { left, right } => Resolved::LeftOf(resolve_ref(schema, left)?, resolve_ref(schema, right)?),
        Clue::Adjacent { a, b } => Resolved::Adjacent(resolve_ref(schema, a)?, resolve_ref(schema, b)?),
        Clue::SameHouse { a, b } => Resolved::Same(resolve_ref(schema, a)?, resolve_ref(schema, b)?),
        Clue::AttributeOfPerson { name, attribute, value } => {
            let person = schema.attributes.first().ok_or("schema has no attributes")?;
            let p = ValueRef::new(person.name.clone(), name.clone());
            Resolved::Same(resolve_ref(schema, &p)?, resolve_ref(schema, &ValueRef::new(attribute.clone(), value.clone()))?)
        }
    })
}

/// Checks every clue against the schema vocabulary.
pub fn validate_clues(schema: &GridSchema, clues: &[Clue]) -> Result<(), PuzzleError> {
    resolve_all(schema, clues).map(|_| ())
}

fn resolve_all(schema: &GridSchema, clues: &[Clue]) -> Result<Vec<Resolved>, PuzzleError> {
    clues
        .iter()
        .enumerate()
        .map(|(index, c)| resolve(schema, c).map_err(|message| PuzzleError::BadClue { index, message }))
        .collect()
}

/// Whether a complete grid satisfies every clue. Incomplete grids never do.
pub fn satisfies(schema: &GridSchema, grid: &Grid, clues: &[Clue]) -> Result<bool, PuzzleError> {
    let resolved = resolve_all(schema, clues)?;
    let Some(pos) = positions(schema, grid) else {
        return Ok(false);
    };
    Ok(resolved.iter().all(|r| r.holds(&pos)))
}

fn positions(schema: &GridSchema, grid: &Grid) -> Option<Vec<Vec<usize>>> {
    let n = schema.houses;
    let mut pos = vec![vec![usize::MAX; n]; schema.attributes.len()];
    for (a, row) in pos.iter_mut().enumerate() {
        for h in 0..n {
            let v = schema.value_index(a, grid.get(h, a)?)?;
            if row[v] != usize::MAX {
                return None;
            }
            row[v] = h;
        }
    }
    Some(pos)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

struct Search<'a> {
    perms: Vec<Vec<usize>>,
    by_level: Vec<Vec<Resolved>>,
    limit: usize,
    found: Vec<Vec<Vec<usize>>>,
    schema: &'a GridSchema,
}

impl Search<'_> {
    fn run(&mut self, pos: &mut Vec<Vec<usize>>) {
        let level = pos.len();
        if level == self.schema.attributes.len() {
            self.found.push(pos.clone());
            return;
        }
        for i in 0..self.perms.len() {
            if self.found.len() >= self.limit {
                return;
            }
            pos.push(self.perms[i].clone());
            if self.by_level[level].iter().all(|r| r.holds(pos)) {
                self.run(pos);
            }
            pos.pop();
        }
    }
}

fn search(schema: &GridSchema, clues: &[Clue], limit: usize) -> Result<Vec<Vec<Vec<usize>>>, PuzzleError> {
    if schema.houses > 5 {
        return Err(PuzzleError::TooLarge(schema.houses));
    }
    let resolved = resolve_all(schema, clues)?;
    let mut by_level = vec![Vec::new(); schema.attributes.len()];
    for r in resolved {
        by_level[r.max_attr()].push(r);
    }
    let mut s = Search {
        perms: permutations(schema.houses),
        by_level,
        limit,
        found: Vec::new(),
        schema,
    };
    s.run(&mut Vec::with_capacity(schema.attributes.len()));
    Ok(s.found)
}

fn to_grid(schema: &GridSchema, pos: &[Vec<usize>]) -> Grid {
    // pos[a][v] = house; Grid::from_permutations wants perm[a][h] = v.
    let perm: Vec<Vec<usize>> = pos
        .iter()
        .map(|p| {
            let mut inv = vec![0; p.len()];
            for (v, &h) in p.iter().enumerate() {
                inv[h] = v;
            }
            inv
        })
        .collect();
    Grid::from_permutations(schema, &perm)
}

/// Every grid consistent with `clues`, by exhaustive enumeration of one
/// permutation per attribute.
pub fn brute_solve(schema: &GridSchema, clues: &[Clue]) -> Result<Vec<Grid>, PuzzleError> {
    Ok(search(schema, clues, usize::MAX)?
        .iter()
        .map(|p| to_grid(schema, p))
        .collect())
}

/// Number of consistent grids, counting no further than `limit`.
pub fn count_solutions(schema: &GridSchema, clues: &[Clue], limit: usize) -> Result<usize, PuzzleError> {
    Ok(search(schema, clues, limit)?.len())
}

const MAX_ATTEMPTS: usize = 8;

struct Category {
    name: &'static str,
    intro: &'static str,
    phrase: &'static str,
    pool: &'static [&'static str],
}

const NAMES: Category = Category {
    name: "Name",
    intro: "Each person has a unique name",
    phrase: "",
    pool: &["Alice", "Bob", "Carol", "Dmitri", "Elena", "Farid", "Greta", "Hugo"],
};

const CATEGORIES: &[Category] = &[
    Category {
        name: "Color",
        intro: "Each house is painted a unique color",
        phrase: "lives in the {v} house",
        pool: &["red", "green", "blue", "yellow", "white", "purple"],
    },
    Category {
        name: "Pet",
        intro: "Each person keeps a unique pet",
        phrase: "keeps a {v}",
        pool: &["cat", "dog", "parrot", "hamster", "turtle", "rabbit"],
    },
    Category {
        name: "Drink",
        intro: "Each person prefers a unique drink",
        phrase: "drinks {v}",
        pool: &["tea", "coffee", "milk", "lemonade", "water", "cocoa"],
    },
    Category {
        name: "Sport",
        intro: "Each person plays a unique sport",
        phrase: "plays {v}",
        pool: &["tennis", "soccer", "chess", "rowing", "fencing", "cricket"],
    },
    Category {
        name: "Fruit",
        intro: "Everyone has a unique favorite fruit",
        phrase: "likes {v}",
        pool: &["apple", "banana", "mango", "kiwi", "plum", "pear"],
    },
];

struct Layout {
    schema: GridSchema,
    phrases: Vec<&'static str>,
    intros: Vec<&'static str>,
}

fn describe(layout: &Layout, r: &ValueRef) -> String {
    let a = layout.schema.attribute_index(&r.attribute).unwrap_or(0);
    if a == 0 {
        r.value.clone()
    } else {
        format!("the person who {}", layout.phrases[a].replace("{v}", &r.value))
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn ordinal(h: usize) -> &'static str {
    ["first", "second", "third", "fourth", "fifth"][h - 1]
}

fn clue_sentence(layout: &Layout, clue: &Clue) -> String {
    let s = match clue {
        Clue::FixedPosition { item, house } => format!("{} is in the {} house.", describe(layout, item), ordinal(*house)),
        Clue::LeftOf { left, right } => format!(
            "{} is somewhere to the left of {}.",
            describe(layout, left),
            describe(layout, right)
        ),
        Clue::Adjacent { a, b } => format!("{} and {} are next to each other.", describe(layout, a), describe(layout, b)),
        Clue::SameHouse { a, b } => format!("{} is {}.", describe(layout, a), describe(layout, b)),
        Clue::AttributeOfPerson { name, attribute, value } => {
            let v = ValueRef::new(attribute.clone(), value.clone());
            format!("{name} is {}.", describe(layout, &v))
        }
    };
    capitalize(&s)
}

fn statement(layout: &Layout, clues: &[Clue]) -> String {
    let n = layout.schema.houses;
    let mut s = format!(
        "There are {n} houses, numbered 1 to {n} from left to right, as seen from across the street. \
         Each house is occupied by a different person. Each house has a unique attribute for each of the \
         following characteristics:\n"
    );
    for (a, attr) in layout.schema.attributes.iter().enumerate() {
        let mut values = attr.values.clone();
        values.sort();
        let list: Vec<String> = values.iter().map(|v| format!("`{v}`")).collect();
        s.push_str(&format!(" - {}: {}\n", layout.intros[a], list.join(", ")));
    }
    s.push_str("\n## Clues:\n");
    for (i, c) in clues.iter().enumerate() {
        s.push_str(&format!("{}. {}\n", i + 1, clue_sentence(layout, c)));
    }
    let names: Vec<&str> = layout.schema.attributes.iter().map(|a| a.name.as_str()).collect();
    let shape = match names.split_first() {
        Some((first, rest)) if !rest.is_empty() => format!("{first} ({})", rest.join(", ")),
        _ => names.first().copied().unwrap_or("").to_string(),
    };
    s.push_str(&format!(
        "\nEnd your answer with a line \"Solution:\" followed by one line per house in the form \"- House k: {shape}\"."
    ));
    s
}

fn true_clues(schema: &GridSchema, pos: &[Vec<usize>]) -> Vec<Clue> {
    let refs: Vec<(Cell, ValueRef)> = schema
        .attributes
        .iter()
        .enumerate()
        .flat_map(|(a, attr)| {
            attr.values
                .iter()
                .enumerate()
                .map(move |(v, val)| (Cell { attr: a, value: v }, ValueRef::new(attr.name.clone(), val.clone())))
        })
        .collect();
    let at = |c: Cell| pos[c.attr][c.value];
    let mut out = Vec::new();
    for (c, r) in &refs {
        out.push(Clue::FixedPosition { item: r.clone(), house: at(*c) + 1 });
    }
    for (i, (ci, ri)) in refs.iter().enumerate() {
        for (cj, rj) in refs.iter().skip(i + 1) {
            let (hi, hj) = (at(*ci), at(*cj));
            if hi < hj {
                out.push(Clue::LeftOf { left: ri.clone(), right: rj.clone() });
            } else if hj < hi {
                out.push(Clue::LeftOf { left: rj.clone(), right: ri.clone() });
            }
            if hi.abs_diff(hj) == 1 {
                out.push(Clue::Adjacent { a: ri.clone(), b: rj.clone() });
            }
            if hi == hj && ci.attr != cj.attr {
                out.push(if ci.attr == 0 {
                    Clue::AttributeOfPerson {
                        name: ri.value.clone(),
                        attribute: rj.attribute.clone(),
                        value: rj.value.clone(),
                    }
                } else {
                    Clue::SameHouse { a: ri.clone(), b: rj.clone() }
                });
            }
        }
    }
    out
}

/// A generated puzzle: the task (statement, schema, gold, clues) and its
/// unique solution.
#[derive(Debug, Clone)]
pub struct GeneratedPuzzle {
    pub task: Task,
    pub solution: Grid,
}

/// Generates a unique-solution puzzle with `houses` houses and `attributes`
/// attributes (the first is always the person's name). Deterministic per
/// seed. The returned clue set is minimal: dropping any clue admits a second
/// solution.
pub fn gen_puzzle(seed: u64, houses: usize, attributes: usize) -> Result<GeneratedPuzzle, PuzzleError> {
    if !(2..=5).contains(&houses) || !(1..=4).contains(&attributes) {
        return Err(PuzzleError::OutOfRange { houses, attributes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cats: Vec<&Category> = CATEGORIES.iter().collect();
    cats.shuffle(&mut rng);
    let mut chosen = vec![&NAMES];
    chosen.extend(cats.into_iter().take(attributes - 1));
    let schema = GridSchema {
        houses,
        attributes: chosen
            .iter()
            .map(|c| Attribute {
                name: c.name.to_string(),
                values: c.pool.choose_multiple(&mut rng, houses).map(|v| v.to_string()).collect(),
            })
            .collect(),
    };
    let layout = Layout {
        phrases: chosen.iter().map(|c| c.phrase).collect(),
        intros: chosen.iter().map(|c| c.intro).collect(),
        schema,
    };
    let schema = &layout.schema;

    for _ in 0..MAX_ATTEMPTS {
        let pos: Vec<Vec<usize>> = (0..attributes)
            .map(|_| {
                let mut p: Vec<usize> = (0..houses).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let mut keyed: Vec<(bool, Clue)> = true_clues(schema, &pos)
            .into_iter()
            .map(|c| (matches!(c, Clue::FixedPosition { .. }) && rng.gen_bool(0.7), c))
            .collect();
        keyed.shuffle(&mut rng);
        // Favour relational clues: most fixed positions go last in the pool.
        keyed.sort_by_key(|(late, _)| *late);
        let pool = keyed.into_iter().map(|(_, c)| c);

        let mut clues = Vec::new();
        let mut unique = false;
        for c in pool {
            clues.push(c);
            if count_solutions(schema, &clues, 2)? == 1 {
                unique = true;
                break;
            }
        }
        if !unique {
            continue;
        }
        let mut i = 0;
        while i < clues.len() {
            let removed = clues.remove(i);
            if count_solutions(schema, &clues, 2)? == 1 {
                continue;
            }
            clues.insert(i, removed);
            i += 1;
        }
        clues.shuffle(&mut rng);

        let solution = to_grid(schema, &pos);
        let task = Task {
            id: format!("gen-{seed}-{houses}x{attributes}"),
            suite: "generated".into(),
            split: Some(if houses * attributes <= 9 { Split::Easy } else { Split::Hard }),
            statement: statement(&layout, &clues),
            schema: AnswerSchema::Grid(schema.clone()),
            gold: StructuredAnswer::Grid(solution.clone()),
            clues,
        };
        return Ok(GeneratedPuzzle { task, solution });
    }
    Err(PuzzleError::GenerationExhausted(MAX_ATTEMPTS))
}
