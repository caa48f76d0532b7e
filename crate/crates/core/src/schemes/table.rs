//! The one-step schemes written out as data.
//!
//! A scheme is a list of [`Term`]s. Each term is an operator word applied to a
//! base function, summed over all noise-index tuples, and multiplied by a
//! linear combination of iterated integrals (or powers of Δ for the
//! deterministic tail). Noise indices are assigned to the `G0` operators of the
//! word from left to right, then to the diffusion column when the base is
//! `B`; the integrals carry the same index tuple.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.0")]
    One,
    #[serde(rename = "1.5")]
    OneHalf,
    #[serde(rename = "2.0")]
    Two,
    #[serde(rename = "2.5")]
    TwoHalf,
    #[serde(rename = "3.0")]
    Three,
}

impl Order {
    pub const ALL: [Order; 6] = [
        Order::Half,
        Order::One,
        Order::OneHalf,
        Order::Two,
        Order::TwoHalf,
        Order::Three,
    ];

    /// Twice the strong order.
    pub fn r(self) -> u32 {
        self as u32 + 1
    }

    pub fn value(self) -> f64 {
        self.r() as f64 / 2.0
    }

    pub fn from_r(r: u32) -> Option<Order> {
        Order::ALL.get((r as usize).checked_sub(1)?).copied()
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl FromStr for Order {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| format!("invalid order `{s}`"))?;
        let r = (v * 2.0).round();
        if (r - v * 2.0).abs() > 1e-12 {
            return Err(format!("invalid order `{s}`"));
        }
        Order::from_r(r as u32)
            .ok_or_else(|| format!("unsupported order `{s}` (expected 0.5, 1.0, ..., 3.0)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calculus {
    Ito,
    Stratonovich,
}

impl fmt::Display for Calculus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Calculus::Ito => "ito",
            Calculus::Stratonovich => "stratonovich",
        })
    }
}

impl FromStr for Calculus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ito" | "itô" => Ok(Calculus::Ito),
            "stratonovich" | "strat" => Ok(Calculus::Stratonovich),
            _ => Err(format!(
                "invalid calculus `{s}` (expected ito or stratonovich)"
            )),
        }
    }
}

/// Differential operators appearing in scheme words.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    L,
    Lbar,
    G0,
}

/// The function an operator word is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    Drift,
    DriftBar,
    Column,
}

/// One summand of a term's multiplier: `coef · Δ^delta_power · I_weights`
/// (no integral when `weights` is empty).
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub coef: f64,
    pub delta_power: i32,
    pub weights: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    /// Operators, outermost first.
    pub ops: Vec<Op>,
    pub base: Base,
    pub parts: Vec<Part>,
}

impl Term {
    /// Length of the noise-index tuple the term is summed over.
    pub fn arity(&self) -> usize {
        self.ops.iter().filter(|&&o| o == Op::G0).count() + usize::from(self.base == Base::Column)
    }

    pub fn is_deterministic(&self) -> bool {
        self.arity() == 0
    }

    pub fn label(&self) -> String {
        let mut s: Vec<&str> = self
            .ops
            .iter()
            .map(|o| match o {
                Op::L => "L",
                Op::Lbar => "Lbar",
                Op::G0 => "G0",
            })
            .collect();
        s.push(match self.base {
            Base::Drift => "a",
            Base::DriftBar => "abar",
            Base::Column => "B",
        });
        s.join(" ")
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("order {order} is not available for {calculus} schemes")]
pub struct UnsupportedScheme {
    pub order: Order,
    pub calculus: Calculus,
}

fn term(word: &str, parts: &[(f64, i32, &[u8])]) -> Term {
    let mut tokens: Vec<&str> = word.split_whitespace().collect();
    let base = match tokens.pop().expect("nonempty word") {
        "a" => Base::Drift,
        "abar" => Base::DriftBar,
        "B" => Base::Column,
        other => panic!("bad base {other}"),
    };
    let ops = tokens
        .into_iter()
        .map(|t| match t {
            "L" => Op::L,
            "Lbar" => Op::Lbar,
            "G0" => Op::G0,
            other => panic!("bad operator {other}"),
        })
        .collect();
    Term {
        ops,
        base,
        parts: parts
            .iter()
            .map(|&(coef, delta_power, w)| Part {
                coef,
                delta_power,
                weights: w.to_vec(),
            })
            .collect(),
    }
}

/// Rewrites an Itô word for the Stratonovich scheme: `L -> Lbar`, `a -> abar`.
fn bar(word: &str) -> String {
    word.split_whitespace()
        .map(|t| match t {
            "L" => "Lbar",
            "a" => "abar",
            other => other,
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Terms added at each order, as (word, parts). The deterministic tails are
/// handled separately because they differ between the two calculi.
fn stochastic_terms(r: u32) -> Vec<(&'static str, Vec<(f64, i32, &'static [u8])>)> {
    match r {
        1 => vec![("B", vec![(1.0, 0, &[0])]), ("a", vec![(1.0, 1, &[])])],
        2 => vec![("G0 B", vec![(1.0, 0, &[0, 0])])],
        3 => vec![
            ("G0 a", vec![(1.0, 1, &[0]), (1.0, 0, &[1])]),
            ("L B", vec![(-1.0, 0, &[1])]),
            ("G0 G0 B", vec![(1.0, 0, &[0, 0, 0])]),
        ],
        4 => vec![
            ("G0 L B", vec![(1.0, 0, &[1, 0]), (-1.0, 0, &[0, 1])]),
            ("L G0 B", vec![(-1.0, 0, &[1, 0])]),
            ("G0 G0 a", vec![(1.0, 0, &[0, 1]), (1.0, 1, &[0, 0])]),
            ("G0 G0 G0 B", vec![(1.0, 0, &[0, 0, 0, 0])]),
        ],
        5 => vec![
            (
                "G0 L a",
                vec![(0.5, 0, &[2]), (1.0, 1, &[1]), (0.5, 2, &[0])],
            ),
            ("L L B", vec![(0.5, 0, &[2])]),
            ("L G0 a", vec![(-1.0, 0, &[2]), (-1.0, 1, &[1])]),
            (
                "G0 L G0 B",
                vec![(1.0, 0, &[1, 0, 0]), (-1.0, 0, &[0, 1, 0])],
            ),
            (
                "G0 G0 L B",
                vec![(1.0, 0, &[0, 1, 0]), (-1.0, 0, &[0, 0, 1])],
            ),
            (
                "G0 G0 G0 a",
                vec![(1.0, 1, &[0, 0, 0]), (1.0, 0, &[0, 0, 1])],
            ),
            ("L G0 G0 B", vec![(-1.0, 0, &[1, 0, 0])]),
            ("G0 G0 G0 G0 B", vec![(1.0, 0, &[0, 0, 0, 0, 0])]),
        ],
        6 => vec![
            (
                "G0 G0 L a",
                vec![(0.5, 0, &[0, 2]), (1.0, 1, &[0, 1]), (0.5, 2, &[0, 0])],
            ),
            ("L L G0 B", vec![(0.5, 0, &[2, 0])]),
            (
                "G0 L G0 a",
                vec![
                    (1.0, 0, &[1, 1]),
                    (-1.0, 0, &[0, 2]),
                    (1.0, 1, &[1, 0]),
                    (-1.0, 1, &[0, 1]),
                ],
            ),
            ("L G0 L B", vec![(1.0, 0, &[1, 1]), (-1.0, 0, &[2, 0])]),
            (
                "G0 L L B",
                vec![(0.5, 0, &[0, 2]), (0.5, 0, &[2, 0]), (-1.0, 0, &[1, 1])],
            ),
            ("L G0 G0 a", vec![(-1.0, 1, &[1, 0]), (-1.0, 0, &[1, 1])]),
            (
                "G0 G0 G0 G0 a",
                vec![(1.0, 1, &[0, 0, 0, 0]), (1.0, 0, &[0, 0, 0, 1])],
            ),
            (
                "G0 G0 L G0 B",
                vec![(1.0, 0, &[0, 1, 0, 0]), (-1.0, 0, &[0, 0, 1, 0])],
            ),
            ("L G0 G0 G0 B", vec![(-1.0, 0, &[1, 0, 0, 0])]),
            (
                "G0 L G0 G0 B",
                vec![(1.0, 0, &[1, 0, 0, 0]), (-1.0, 0, &[0, 1, 0, 0])],
            ),
            (
                "G0 G0 G0 L B",
                vec![(1.0, 0, &[0, 0, 1, 0]), (-1.0, 0, &[0, 0, 0, 1])],
            ),
            ("G0 G0 G0 G0 G0 B", vec![(1.0, 0, &[0, 0, 0, 0, 0, 0])]),
        ],
        _ => Vec::new(),
    }
}

/// Deterministic Taylor tail `Δ²/2·(…)` and `Δ³/6·(…)` as printed for each scheme.
fn tail(order: Order, calculus: Calculus) -> Vec<Term> {
    let r = order.r();
    let mut out = Vec::new();
    let half_sq = |w: &str| term(w, &[(0.5, 2, &[])]);
    let sixth_cube = |w: &str| term(w, &[(1.0 / 6.0, 3, &[])]);
    match calculus {
        Calculus::Ito => {
            if r >= 3 {
                out.push(half_sq("L a"));
            }
            if r >= 5 {
                out.push(sixth_cube("L L a"));
            }
        }
        Calculus::Stratonovich => {
            match r {
                3 => out.push(half_sq("L a")),
                4.. => out.push(half_sq("Lbar abar")),
                _ => {}
            }
            match r {
                5 => out.push(sixth_cube("L L a")),
                6 => out.push(sixth_cube("Lbar Lbar abar")),
                _ => {}
            }
        }
    }
    out
}

/// The full term list of a scheme.
pub fn scheme_terms(order: Order, calculus: Calculus) -> Result<Vec<Term>, UnsupportedScheme> {
    if calculus == Calculus::Stratonovich && order == Order::Half {
        return Err(UnsupportedScheme { order, calculus });
    }
    let mut out = Vec::new();
    for r in 1..=order.r() {
        for (word, parts) in stochastic_terms(r) {
            let word = match calculus {
                Calculus::Ito => word.to_string(),
                Calculus::Stratonovich => bar(word),
            };
            out.push(term(&word, &parts));
        }
    }
    out.extend(tail(order, calculus));
    Ok(out)
}

/// Distinct integral weight tuples referenced by a scheme, sorted.
pub fn integral_weights(
    order: Order,
    calculus: Calculus,
) -> Result<Vec<Vec<u8>>, UnsupportedScheme> {
    let mut w: Vec<Vec<u8>> = scheme_terms(order, calculus)?
        .into_iter()
        .flat_map(|t| t.parts.into_iter().map(|p| p.weights))
        .filter(|w| !w.is_empty())
        .collect();
    w.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
    w.dedup();
    Ok(w)
}
