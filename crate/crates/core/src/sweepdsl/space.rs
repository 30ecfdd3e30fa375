use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::*;

use super::{parse_expr, DslError, Literal, SpaceExpr};

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceEntry {
    /// Label as written in the source file.
    pub label: String,
    pub expr: SpaceExpr,
}

/// Ordered hyperparameter name to expression map; names are normalized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub entries: IndexMap<String, SpaceEntry>,
}

impl SearchSpace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SpaceEntry> {
        self.entries.get(name)
    }

    /// Number of grid points, or `None` if any entry is infinite.
    pub fn grid_size(&self) -> Option<u128> {
        self.entries.values().try_fold(1u128, |acc, e| match cardinality(&e.expr) {
            Cardinality::Finite(n) => Some(acc.saturating_mul(n)),
            Cardinality::Infinite => None,
        })
    }
}

/// One concrete value per hyperparameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigAssignment {
    pub values: IndexMap<String, SpaceExpr>,
}

impl ConfigAssignment {
    /// JSON object with numbers and booleans as JSON scalars and everything
    /// else in its rendered text form.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .values
            .iter()
            .map(|(k, v)| {
                let j = match v {
                    SpaceExpr::Literal(Literal::Bool(b)) => serde_json::Value::Bool(*b),
                    SpaceExpr::Literal(Literal::Number(n)) => n
                        .normalize()
                        .to_string()
                        .parse::<serde_json::Number>()
                        .map(serde_json::Value::Number)
                        .unwrap_or_else(|_| serde_json::Value::String(v.to_string())),
                    SpaceExpr::Literal(Literal::Str(s)) => serde_json::Value::String(s.clone()),
                    _ => serde_json::Value::String(v.to_string()),
                };
                (k.clone(), j)
            })
            .collect();
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Finite(u128),
    Infinite,
}

fn stepped_count(lo: Decimal, hi: Decimal, step: Decimal) -> u128 {
    ((hi - lo) / step).floor().to_u128().unwrap_or(u128::MAX).saturating_add(1)
}

fn geometric_values(lo: Decimal, hi: Decimal, factor: Decimal) -> Vec<Decimal> {
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi {
        out.push(v);
        match v.checked_mul(factor) {
            Some(n) => v = n,
            None => break,
        }
    }
    out
}

pub fn cardinality(e: &SpaceExpr) -> Cardinality {
    match e {
        SpaceExpr::Range(..) => Cardinality::Infinite,
        SpaceExpr::Stepped(lo, hi, s) => Cardinality::Finite(stepped_count(*lo, *hi, *s)),
        SpaceExpr::Geometric(lo, hi, k) => Cardinality::Finite(geometric_values(*lo, *hi, *k).len() as u128),
        SpaceExpr::Choice(m) | SpaceExpr::List(m) | SpaceExpr::Union(m) => m.iter().try_fold(Cardinality::Finite(0), |acc, x| {
            match (acc, cardinality(x)) {
                (Cardinality::Finite(a), Cardinality::Finite(b)) => Some(Cardinality::Finite(a.saturating_add(b))),
                _ => None,
            }
        })
        .unwrap_or(Cardinality::Infinite),
        SpaceExpr::TermList(_)
        | SpaceExpr::Term(..)
        | SpaceExpr::Set(_)
        | SpaceExpr::Literal(_)
        | SpaceExpr::NotSelected => Cardinality::Finite(1),
    }
}

fn in_stepped(n: Decimal, lo: Decimal, hi: Decimal, step: Decimal) -> bool {
    n >= lo && n <= hi && ((n - lo) % step).is_zero()
}

/// Whether `value` is one of the values denoted by `space`.
///
/// A term list accepts any sub-list of its items, and `-` is accepted
/// everywhere since it marks the hyperparameter as unused.
pub fn contains(space: &SpaceExpr, value: &SpaceExpr) -> bool {
    if space == value || *value == SpaceExpr::NotSelected {
        return true;
    }
    match space {
        SpaceExpr::Range(lo, hi) => value.as_number().is_some_and(|n| n >= *lo && n <= *hi),
        SpaceExpr::Stepped(lo, hi, s) => value.as_number().is_some_and(|n| in_stepped(n, *lo, *hi, *s)),
        SpaceExpr::Geometric(lo, hi, k) => value
            .as_number()
            .is_some_and(|n| geometric_values(*lo, *hi, *k).contains(&n)),
        SpaceExpr::Choice(m) | SpaceExpr::List(m) | SpaceExpr::Union(m) => m.iter().any(|s| contains(s, value)),
        SpaceExpr::TermList(items) => match value {
            SpaceExpr::TermList(vs) => vs.iter().all(|v| items.iter().any(|s| contains(s, v))),
            v => items.iter().any(|s| contains(s, v)),
        },
        SpaceExpr::Term(name, args) => match value {
            SpaceExpr::Term(vname, vargs) => {
                name == vname
                    && args.len() == vargs.len()
                    && args
                        .iter()
                        .zip(vargs)
                        .all(|(a, b)| a.name == b.name && contains(&a.value, &b.value))
            }
            // A bare word names an argument-less term.
            SpaceExpr::Literal(Literal::Str(s)) => args.is_empty() && s == name,
            _ => false,
        },
        SpaceExpr::Set(_) | SpaceExpr::Literal(_) | SpaceExpr::NotSelected => false,
    }
}

pub fn validate_assignment(space: &SearchSpace, a: &ConfigAssignment) -> Result<(), DslError> {
    for (name, value) in &a.values {
        let entry = space.get(name).ok_or_else(|| DslError::UnknownName(name.clone()))?;
        if !contains(&entry.expr, value) {
            return Err(DslError::NotAMember {
                name: name.clone(),
                value: value.to_string(),
                space: entry.expr.to_string(),
            });
        }
    }
    Ok(())
}

/// Draws one value: a choice or union picks a member uniformly and then draws
/// from it; stepped and geometric sets are uniform; ranges are uniform reals.
pub fn sample_expr<R: Rng + ?Sized>(e: &SpaceExpr, rng: &mut R) -> SpaceExpr {
    match e {
        SpaceExpr::Range(lo, hi) => {
            let (l, h) = (lo.to_f64().unwrap_or(0.0), hi.to_f64().unwrap_or(0.0));
            let x = l + rng.random::<f64>() * (h - l);
            let d = Decimal::from_f64(x).unwrap_or(*lo).round_dp(9);
            SpaceExpr::number(d.clamp(*lo, *hi))
        }
        SpaceExpr::Stepped(lo, hi, s) => {
            let n = stepped_count(*lo, *hi, *s);
            let k = Decimal::from(rng.random_range(0..n.min(u64::MAX as u128) as u64));
            SpaceExpr::number(*lo + k * *s)
        }
        SpaceExpr::Geometric(lo, hi, k) => {
            let vals = geometric_values(*lo, *hi, *k);
            SpaceExpr::number(vals[rng.random_range(0..vals.len())])
        }
        SpaceExpr::Choice(m) | SpaceExpr::List(m) | SpaceExpr::Union(m) => sample_expr(&m[rng.random_range(0..m.len())], rng),
        other => other.clone(),
    }
}

/// Independent draw per entry, in space order, from a ChaCha8 stream seeded with `seed`.
pub fn sample(space: &SearchSpace, seed: u64) -> ConfigAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConfigAssignment {
        values: space
            .entries
            .iter()
            .map(|(k, e)| (k.clone(), sample_expr(&e.expr, &mut rng)))
            .collect(),
    }
}

/// Largest value set `enumerate_values` will materialize.
const MAX_VALUES: u128 = 10_000_000;

/// All values of a finite expression, in written order.
pub fn enumerate_values(e: &SpaceExpr) -> Option<Vec<SpaceExpr>> {
    match cardinality(e) {
        Cardinality::Infinite => return None,
        Cardinality::Finite(n) if n > MAX_VALUES => return None,
        _ => {}
    }
    Some(match e {
        SpaceExpr::Stepped(lo, hi, s) => (0..stepped_count(*lo, *hi, *s))
            .map(|k| SpaceExpr::number(*lo + Decimal::from(k as u64) * *s))
            .collect(),
        SpaceExpr::Geometric(lo, hi, k) => geometric_values(*lo, *hi, *k)
            .into_iter()
            .map(SpaceExpr::number)
            .collect(),
        SpaceExpr::Choice(m) | SpaceExpr::List(m) | SpaceExpr::Union(m) => {
            let mut out = Vec::new();
            for x in m {
                out.extend(enumerate_values(x)?);
            }
            out
        }
        other => vec![other.clone()],
    })
}

/// Cartesian product of every entry's values, last entry varying fastest.
pub struct GridIter {
    names: Vec<String>,
    values: Vec<Vec<SpaceExpr>>,
    odometer: Vec<usize>,
    done: bool,
}

impl Iterator for GridIter {
    type Item = ConfigAssignment;

    fn next(&mut self) -> Option<ConfigAssignment> {
        if self.done {
            return None;
        }
        let item = ConfigAssignment {
            values: self
                .names
                .iter()
                .zip(&self.values)
                .zip(&self.odometer)
                .map(|((n, v), &i)| (n.clone(), v[i].clone()))
                .collect(),
        };
        self.done = true;
        for pos in (0..self.odometer.len()).rev() {
            self.odometer[pos] += 1;
            if self.odometer[pos] < self.values[pos].len() {
                self.done = false;
                break;
            }
            self.odometer[pos] = 0;
        }
        Some(item)
    }
}

pub fn enumerate_grid(space: &SearchSpace) -> Result<GridIter, DslError> {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (name, e) in &space.entries {
        if cardinality(&e.expr) == Cardinality::Infinite {
            return Err(DslError::InfiniteSpace(name.clone()));
        }
        let v = enumerate_values(&e.expr).ok_or_else(|| DslError::GridTooLarge(name.clone()))?;
        names.push(name.clone());
        values.push(v);
    }
    let odometer = vec![0; names.len()];
    Ok(GridIter {
        names,
        values,
        odometer,
        done: false,
    })
}

/// `name = value` lines, readable by `parse_space`.
pub fn render_config(a: &ConfigAssignment) -> String {
    a.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Canonical text of a space, keeping the original labels.
pub fn render_space(space: &SearchSpace) -> String {
    space
        .entries
        .values()
        .map(|e| format!("{} = {}\n", e.label, e.expr))
        .collect()
}

impl ConfigAssignment {
    /// Reads `render_config` output back; each line must be a single value.
    pub fn parse(text: &str) -> Result<Self, DslError> {
        let space = super::parse_space(text)?;
        Ok(ConfigAssignment {
            values: space.entries.into_iter().map(|(k, e)| (k, e.expr)).collect(),
        })
    }
}

/// Parses `text` and checks it is a single concrete value of `space`.
pub fn parse_value_for(space: &SpaceExpr, text: &str) -> Result<SpaceExpr, DslError> {
    let v = parse_expr(text)?;
    if contains(space, &v) {
        Ok(v)
    } else {
        Err(DslError::NotAMember {
            name: String::new(),
            value: v.to_string(),
            space: space.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweepdsl::parse_space;

    fn e(s: &str) -> SpaceExpr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn cardinalities() {
        assert_eq!(cardinality(&e("[10,300,10]")), Cardinality::Finite(30));
        assert_eq!(cardinality(&e("[10,600,10]")), Cardinality::Finite(60));
        assert_eq!(cardinality(&e("[0,0.4,0.1]")), Cardinality::Finite(5));
        assert_eq!(cardinality(&e("[0,1,0.3]")), Cardinality::Finite(4));
        assert_eq!(cardinality(&e("choice[16,32,64]")), Cardinality::Finite(3));
        assert_eq!(cardinality(&e("[0.75,1.25]")), Cardinality::Infinite);
        assert_eq!(cardinality(&e("[1,64,x2]")), Cardinality::Finite(7));
        assert_eq!(cardinality(&e("choice[3,5,6,9] and [1,64,x2]")), Cardinality::Finite(11));
        assert_eq!(cardinality(&e("flips, rotation_range([-180,180])")), Cardinality::Finite(1));
        assert_eq!(cardinality(&e("choice[1, [0,1]]")), Cardinality::Infinite);
        assert_eq!(cardinality(&e("BCE")), Cardinality::Finite(1));
        assert_eq!(cardinality(&e("[0,90,180,270]")), Cardinality::Finite(4));
    }

    #[test]
    fn stepped_values_are_exact() {
        let v = enumerate_values(&e("[0,0.4,0.1]")).unwrap();
        let text: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert_eq!(text, ["0", "0.1", "0.2", "0.3", "0.4"]);
        let v = enumerate_values(&e("[10,300,10]")).unwrap();
        assert_eq!(v.len(), 30);
        assert_eq!(v[29], SpaceExpr::number(300));
    }

    #[test]
    fn membership() {
        assert!(contains(&e("[10,600,10]"), &e("360")));
        assert!(!contains(&e("[10,600,10]"), &e("365")));
        assert!(!contains(&e("[10,600,10]"), &e("610")));
        assert!(contains(&e("[0.75,1.25]"), &e("1.0")));
        assert!(!contains(&e("[0.75,1.25]"), &e("1.3")));
        assert!(contains(&e("choice[3,5,6,9] and [1,64,x2]"), &e("6")));
        assert!(contains(&e("choice[3,5,6,9] and [1,64,x2]"), &e("32")));
        assert!(!contains(&e("choice[3,5,6,9] and [1,64,x2]"), &e("7")));
        assert!(contains(&e("choice[0.1,0.01]"), &e("0.010")));
        assert!(contains(&e("choice[SGD,Adam]"), &e("-")));
        assert!(!contains(&e("Adam"), &e("SGD")));
        assert!(!contains(&e("True"), &e("False")));
        let aug = e("flips, rotation_range([-180,180]), square_rotations([0,90,180,270]), median_filtering(choice[1,3,5])");
        assert!(contains(&aug, &e("flips, rotation_range([-180,180])")));
        assert!(contains(&aug, &e("median_filtering(3)")));
        assert!(!contains(&aug, &e("median_filtering(4)")));
        assert!(!contains(&aug, &e("flips, elastic")));
        assert!(contains(&e("choice[{28,36}, {28,36,48}]"), &e("{28,36,48}")));
        assert!(!contains(&e("choice[{28,36}]"), &e("{36,28}")));
        assert!(contains(&e("choice[True(5%), False]"), &e("True(5%)")));
        assert!(contains(&e("choice[True(5%), False]"), &e("False")));
        assert!(contains(&e("elastic()"), &e("elastic")));
    }

    #[test]
    fn grid_order_and_count() {
        let s = parse_space("a = choice[1,2]\nb = choice[x,y]").unwrap();
        let g: Vec<String> = enumerate_grid(&s).unwrap().map(|a| render_config(&a)).collect();
        assert_eq!(
            g,
            [
                "a = 1\nb = x\n",
                "a = 1\nb = y\n",
                "a = 2\nb = x\n",
                "a = 2\nb = y\n"
            ]
        );
        let s = parse_space("e = [10,30,10]\nl = choice[BCE,Dice,Jaccard]").unwrap();
        assert_eq!(enumerate_grid(&s).unwrap().count(), 9);
        assert_eq!(s.grid_size(), Some(9));
        let s = parse_space("z = [0.75,1.25]").unwrap();
        assert_eq!(enumerate_grid(&s).err(), Some(DslError::InfiniteSpace("z".into())));
        let empty = SearchSpace::default();
        assert_eq!(enumerate_grid(&empty).unwrap().count(), 1);
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let s = parse_space(
            "epochs = [10,600,10]\nzoom = [0.75,1.25]\nbatch = choice[3,5,6,9] and [1,64,x2]\naug = flips, elastic\nlr = 0.0001",
        )
        .unwrap();
        for seed in 0..200 {
            let a = sample(&s, seed);
            assert_eq!(a, sample(&s, seed));
            validate_assignment(&s, &a).unwrap();
            assert_eq!(a.values["lr"], e("0.0001"));
            assert_eq!(ConfigAssignment::parse(&render_config(&a)).unwrap(), a);
        }
        assert_ne!(sample(&s, 1), sample(&s, 2));
    }

    #[test]
    fn validation_errors() {
        let s = parse_space("opt = choice[SGD,Adam]").unwrap();
        let mut a = ConfigAssignment::default();
        a.values.insert("opt".into(), e("Adabound"));
        assert_eq!(validate_assignment(&s, &a).unwrap_err().name(), "NotAMember");
        let mut b = ConfigAssignment::default();
        b.values.insert("lr".into(), e("1"));
        assert_eq!(validate_assignment(&s, &b).unwrap_err(), DslError::UnknownName("lr".into()));
        assert!(parse_value_for(&e("choice[1,2]"), "2").is_ok());
        assert!(parse_value_for(&e("choice[1,2]"), "3").is_err());
    }

    #[test]
    fn json_form() {
        let a = ConfigAssignment::parse("lr = 0.002\nopt = SGD\nv = True\np = 10%\n").unwrap();
        assert_eq!(
            a.to_json().to_string(),
            r#"{"lr":0.002,"opt":"SGD","v":true,"p":"10%"}"#
        );
    }

    #[test]
    fn render_space_is_idempotent() {
        let text = "Batch size = choice[ 3, 5 ,6,9] and [1,64,×2]\n% of train = 10%  # note\n";
        let s = parse_space(text).unwrap();
        let once = render_space(&s);
        assert_eq!(once, "Batch size = choice[3,5,6,9] and [1,64,x2]\n% of train = 10%\n");
        assert_eq!(render_space(&parse_space(&once).unwrap()), once);
    }
}
