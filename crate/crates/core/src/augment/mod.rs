//! Test-time rigid transforms and training-time augmentations.

mod resample;
mod rigid;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::prelude::*;
use thiserror::Error;

pub use resample::{
    brightness, displacement_field, elastic_deform, median_filter_2d, rotate_free, shear, shift, zoom,
    DisplacementField, ElasticParams, Interpolation,
};
pub use rigid::{apply_rigid, enumerate_tta, flip, invert_rigid, square_rotation, Axis, RigidTransform};

use crate::sweepdsl::{parse_expr, Arg, DslError, Literal, SpaceExpr};
use crate::volume::{BinaryMask, Volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("bilinear interpolation requested for a U8 mask; use nearest")]
    InterpolationOnMask,
    #[error("kernel size {0} must be odd and positive")]
    BadKernelSize(usize),
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("unknown augmentation `{0}`")]
    UnknownAugmentation(String),
    #[error("bad arguments for `{0}`")]
    BadArguments(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

impl AugmentError {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentError::InterpolationOnMask => "InterpolationOnMask",
            AugmentError::BadKernelSize(_) => "BadKernelSize",
            AugmentError::InvalidParameter { .. } => "InvalidParameter",
            AugmentError::UnknownAugmentation(_) => "UnknownAugmentation",
            AugmentError::BadArguments(_) => "BadArguments",
            AugmentError::Dsl(e) => e.name(),
        }
    }
}

/// One entry of an augmentation list.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentTerm {
    /// Random mirror along x and along y, each with probability 1/2.
    Flips,
    /// Quarter-turn rotation drawn from the listed angles (degrees).
    SquareRotations(Vec<u16>),
    /// Free rotation angle in degrees, uniform in the range.
    RotationRange(f64, f64),
    /// Shift magnitude as a fraction of the slice extent, random sign per axis.
    Shift(f64, f64),
    /// Shear factor magnitude, random sign.
    Shearing(f64, f64),
    Zoom(f64, f64),
    BrightnessRange(f64, f64),
    /// Kernel size drawn from the list.
    MedianFiltering(Vec<usize>),
    /// Seed is drawn per application; the stored seed is ignored.
    Elastic(ElasticParams),
}

/// Ordered augmentation pipeline, written as a term list such as
/// `flips, rotation_range([-180,180])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentSpec {
    pub terms: Vec<AugmentTerm>,
}

fn dec(v: f64) -> SpaceExpr {
    SpaceExpr::number(Decimal::from_f64(v).unwrap_or_default().normalize())
}

fn range_expr(lo: f64, hi: f64) -> SpaceExpr {
    let d = |v: f64| Decimal::from_f64(v).unwrap_or_default().normalize();
    SpaceExpr::Range(d(lo), d(hi))
}

fn term(name: &str, args: Vec<Arg>) -> SpaceExpr {
    SpaceExpr::Term(name.into(), args)
}

fn positional(value: SpaceExpr) -> Vec<Arg> {
    vec![Arg { name: None, value }]
}

fn as_f64(e: &SpaceExpr) -> Option<f64> {
    e.as_number().and_then(|d| d.to_f64())
}

/// Numbers listed in a bracket/choice/set or given alone.
fn number_list(e: &SpaceExpr) -> Option<Vec<f64>> {
    match e {
        SpaceExpr::Choice(m) | SpaceExpr::List(m) | SpaceExpr::Set(m) | SpaceExpr::TermList(m) => m.iter().map(as_f64).collect(),
        SpaceExpr::Stepped(..) => crate::sweepdsl::enumerate_values(e)?.iter().map(as_f64).collect(),
        other => as_f64(other).map(|v| vec![v]),
    }
}

impl AugmentTerm {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentTerm::Flips => "flips",
            AugmentTerm::SquareRotations(_) => "square_rotations",
            AugmentTerm::RotationRange(..) => "rotation_range",
            AugmentTerm::Shift(..) => "shift",
            AugmentTerm::Shearing(..) => "shearing",
            AugmentTerm::Zoom(..) => "zoom",
            AugmentTerm::BrightnessRange(..) => "brightness_range",
            AugmentTerm::MedianFiltering(_) => "median_filtering",
            AugmentTerm::Elastic(_) => "elastic",
        }
    }

    fn validate(&self) -> Result<(), AugmentError> {
        let ordered = |lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(AugmentError::BadArguments(self.name().into()))
            }
        };
        match self {
            AugmentTerm::Flips => Ok(()),
            AugmentTerm::SquareRotations(a) => {
                if a.is_empty() || a.iter().any(|d| d % 90 != 0 || *d >= 360) {
                    Err(AugmentError::BadArguments(self.name().into()))
                } else {
                    Ok(())
                }
            }
            AugmentTerm::RotationRange(lo, hi) | AugmentTerm::Shift(lo, hi) | AugmentTerm::Shearing(lo, hi) => {
                ordered(*lo, *hi)
            }
            AugmentTerm::Zoom(lo, hi) | AugmentTerm::BrightnessRange(lo, hi) => {
                ordered(*lo, *hi)?;
                if *lo <= 0.0 && matches!(self, AugmentTerm::Zoom(..)) || *lo < 0.0 {
                    return Err(AugmentError::InvalidParameter {
                        name: self.name(),
                        value: *lo,
                    });
                }
                Ok(())
            }
            AugmentTerm::MedianFiltering(sizes) => match sizes.iter().find(|s| **s == 0 || **s % 2 == 0) {
                Some(&s) => Err(AugmentError::BadKernelSize(s)),
                None if sizes.is_empty() => Err(AugmentError::BadArguments(self.name().into())),
                None => Ok(()),
            },
            AugmentTerm::Elastic(p) => p.validate(),
        }
    }

    fn from_expr(e: &SpaceExpr) -> Result<Self, AugmentError> {
        let (name, args): (&str, &[Arg]) = match e {
            SpaceExpr::Literal(Literal::Str(s)) => (s.as_str(), &[]),
            SpaceExpr::Term(n, a) => (n.as_str(), a.as_slice()),
            other => return Err(AugmentError::UnknownAugmentation(other.to_string())),
        };
        let bad = || AugmentError::BadArguments(name.to_string());
        let single = || match args {
            [a] => Ok(&a.value),
            _ => Err(bad()),
        };
        let range = || -> Result<(f64, f64), AugmentError> {
            match single()? {
                SpaceExpr::Range(lo, hi) => Ok((lo.to_f64().ok_or_else(bad)?, hi.to_f64().ok_or_else(bad)?)),
                v => as_f64(v).map(|x| (x, x)).ok_or_else(bad),
            }
        };
        let t = match name {
            "flips" if args.is_empty() => AugmentTerm::Flips,
            "square_rotations" => {
                let angles = number_list(single()?).ok_or_else(bad)?;
                AugmentTerm::SquareRotations(
                    angles
                        .into_iter()
                        .map(|a| if a.fract() == 0.0 && (0.0..360.0).contains(&a) { Ok(a as u16) } else { Err(bad()) })
                        .collect::<Result<_, _>>()?,
                )
            }
            "rotation_range" => {
                let (lo, hi) = range()?;
                AugmentTerm::RotationRange(lo, hi)
            }
            "shift" => {
                let (lo, hi) = range()?;
                AugmentTerm::Shift(lo, hi)
            }
            "shearing" => {
                let (lo, hi) = range()?;
                AugmentTerm::Shearing(lo, hi)
            }
            "zoom" => {
                let (lo, hi) = range()?;
                AugmentTerm::Zoom(lo, hi)
            }
            "brightness_range" => {
                let (lo, hi) = range()?;
                AugmentTerm::BrightnessRange(lo, hi)
            }
            "median_filtering" => {
                let sizes = number_list(single()?).ok_or_else(bad)?;
                AugmentTerm::MedianFiltering(
                    sizes
                        .into_iter()
                        .map(|s| if s.fract() == 0.0 && s >= 0.0 { Ok(s as usize) } else { Err(bad()) })
                        .collect::<Result<_, _>>()?,
                )
            }
            "elastic" => {
                let mut p = ElasticParams::default();
                for a in args {
                    let v = as_f64(&a.value).ok_or_else(bad)?;
                    match a.name.as_deref() {
                        Some("alpha") => p.alpha = v,
                        Some("sigma") => p.sigma = v,
                        _ => return Err(bad()),
                    }
                }
                AugmentTerm::Elastic(p)
            }
            "flips" => return Err(bad()),
            other => return Err(AugmentError::UnknownAugmentation(other.to_string())),
        };
        t.validate()?;
        Ok(t)
    }

    fn to_expr(&self) -> SpaceExpr {
        let range = |lo: f64, hi: f64| positional(range_expr(lo, hi));
        match self {
            AugmentTerm::Flips => SpaceExpr::string("flips"),
            AugmentTerm::SquareRotations(a) => term(
                self.name(),
                positional(SpaceExpr::List(a.iter().map(|d| SpaceExpr::number(*d)).collect())),
            ),
            AugmentTerm::RotationRange(lo, hi)
            | AugmentTerm::Shift(lo, hi)
            | AugmentTerm::Shearing(lo, hi)
            | AugmentTerm::Zoom(lo, hi)
            | AugmentTerm::BrightnessRange(lo, hi) => term(self.name(), range(*lo, *hi)),
            AugmentTerm::MedianFiltering(sizes) => {
                let value = match sizes.as_slice() {
                    [s] => return term(self.name(), vec![Arg { name: Some("size".into()), value: SpaceExpr::number(*s as u64) }]),
                    many => SpaceExpr::Choice(many.iter().map(|s| SpaceExpr::number(*s as u64)).collect()),
                };
                term(self.name(), positional(value))
            }
            AugmentTerm::Elastic(p) => {
                let d = ElasticParams::default();
                if p.alpha == d.alpha && p.sigma == d.sigma {
                    SpaceExpr::string("elastic")
                } else {
                    term(
                        self.name(),
                        vec![
                            Arg { name: Some("alpha".into()), value: dec(p.alpha) },
                            Arg { name: Some("sigma".into()), value: dec(p.sigma) },
                        ],
                    )
                }
            }
        }
    }
}

impl AugmentSpec {
    pub fn from_expr(e: &SpaceExpr) -> Result<Self, AugmentError> {
        let items: &[SpaceExpr] = match e {
            SpaceExpr::TermList(items) => items,
            single => std::slice::from_ref(single),
        };
        Ok(AugmentSpec {
            terms: items.iter().map(AugmentTerm::from_expr).collect::<Result<_, _>>()?,
        })
    }

    pub fn to_expr(&self) -> SpaceExpr {
        let mut items: Vec<SpaceExpr> = self.terms.iter().map(AugmentTerm::to_expr).collect();
        if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            SpaceExpr::TermList(items)
        }
    }

    /// Applies every term in order with parameters drawn from `seed`.
    ///
    /// Geometric terms move the mask with the image using nearest-neighbour
    /// sampling; intensity terms touch the image only.
    pub fn apply(
        &self,
        image: &Volume<f32>,
        mask: Option<&BinaryMask>,
        seed: u64,
    ) -> Result<(Volume<f32>, Option<BinaryMask>), AugmentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = image.clone();
        let mut m = mask.map(|m| m.volume().clone());
        let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let signed = |rng: &mut ChaCha8Rng, v: f64| if rng.random_bool(0.5) { v } else { -v };
        for t in &self.terms {
            match t {
                AugmentTerm::Flips => {
                    for axis in [Axis::X, Axis::Y] {
                        if rng.random_bool(0.5) {
                            img = flip(&img, axis);
                            m = m.map(|v| flip(&v, axis));
                        }
                    }
                }
                AugmentTerm::SquareRotations(angles) => {
                    let k = (angles[rng.random_range(0..angles.len())] / 90) as u8;
                    img = square_rotation(&img, k);
                    m = m.map(|v| square_rotation(&v, k));
                }
                AugmentTerm::RotationRange(lo, hi) => {
                    let a = uniform(&mut rng, *lo, *hi);
                    img = rotate_free(&img, a, Interpolation::Bilinear)?;
                    m = m.map(|v| rotate_free(&v, a, Interpolation::Nearest)).transpose()?;
                }
                AugmentTerm::Shift(lo, hi) => {
                    let dx = uniform(&mut rng, *lo, *hi);
                    let dx = signed(&mut rng, dx);
                    let dy = uniform(&mut rng, *lo, *hi);
                    let dy = signed(&mut rng, dy);
                    img = shift(&img, dx, dy, Interpolation::Bilinear)?;
                    m = m.map(|v| shift(&v, dx, dy, Interpolation::Nearest)).transpose()?;
                }
                AugmentTerm::Shearing(lo, hi) => {
                    let f = uniform(&mut rng, *lo, *hi);
                    let f = signed(&mut rng, f);
                    img = shear(&img, f, Interpolation::Bilinear)?;
                    m = m.map(|v| shear(&v, f, Interpolation::Nearest)).transpose()?;
                }
                AugmentTerm::Zoom(lo, hi) => {
                    let f = uniform(&mut rng, *lo, *hi);
                    img = zoom(&img, f, Interpolation::Bilinear)?;
                    m = m.map(|v| zoom(&v, f, Interpolation::Nearest)).transpose()?;
                }
                AugmentTerm::BrightnessRange(lo, hi) => {
                    img = brightness(&img, uniform(&mut rng, *lo, *hi))?;
                }
                AugmentTerm::MedianFiltering(sizes) => {
                    img = median_filter_2d(&img, sizes[rng.random_range(0..sizes.len())])?;
                }
                AugmentTerm::Elastic(p) => {
                    let params = ElasticParams { seed: rng.random(), ..*p };
                    img = elastic_deform(&img, &params, Interpolation::Bilinear)?;
                    m = m.map(|v| elastic_deform(&v, &params, Interpolation::Nearest)).transpose()?;
                }
            }
        }
        // Every mask op above either permutes voxels or samples nearest neighbours.
        Ok((img, m.map(BinaryMask::from_volume_unchecked)))
    }
}

impl FromStr for AugmentSpec {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, AugmentError> {
        AugmentSpec::from_expr(&parse_expr(s)?)
    }
}

impl fmt::Display for AugmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}
