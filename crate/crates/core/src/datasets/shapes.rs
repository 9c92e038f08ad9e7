//! Procedural shape families.

use super::DatasetError;
use crate::geometry::{ConvexPolygon, Vec2};
use crate::rng::rng_for;
use crate::world::{ObjectShape, Slice, WorldError, MAX_DIAMETER, MIN_DIAMETER};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

const SHAPE_STREAM: u64 = 0x7368;
const MAX_REDRAWS: u64 = 64;
const ELLIPSE_VERTICES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    PrismNgon,
    Box,
    EllipsePrism,
    LShape,
    TShape,
    StarPrism,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 6] = [
        ShapeFamily::PrismNgon,
        ShapeFamily::Box,
        ShapeFamily::EllipsePrism,
        ShapeFamily::LShape,
        ShapeFamily::TShape,
        ShapeFamily::StarPrism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::PrismNgon => "prism_ngon",
            ShapeFamily::Box => "box",
            ShapeFamily::EllipsePrism => "ellipse_prism",
            ShapeFamily::LShape => "l_shape",
            ShapeFamily::TShape => "t_shape",
            ShapeFamily::StarPrism => "star_prism",
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeFamily {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, DatasetError> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| DatasetError::UnknownFamily(s.to_string()))
    }
}

/// Cross-section of the bottom slice, before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Footprint {
    Ngon { n: usize, side: f64 },
    Box { width: f64, depth: f64 },
    Ellipse { a: f64, b: f64 },
    /// Horizontal bar `width × thickness` plus a vertical bar of the same thickness reaching `height`.
    LShape { width: f64, height: f64, thickness: f64 },
    TShape { width: f64, height: f64, bar: f64, stem: f64 },
    /// Triangle of circumradius `core` with a spike on every edge reaching radius `tip`.
    Star { core: f64, tip: f64 },
}

impl Footprint {
    pub fn pieces(&self) -> Result<Vec<ConvexPolygon>, WorldError> {
        let out = match *self {
            Footprint::Ngon { n, side } => {
                let r = side / (2.0 * (PI / n as f64).sin());
                vec![ConvexPolygon::regular(n, r, PI / n as f64 - PI / 2.0)?]
            }
            Footprint::Box { width, depth } => {
                vec![ConvexPolygon::rect(-width / 2.0, -depth / 2.0, width / 2.0, depth / 2.0)?]
            }
            Footprint::Ellipse { a, b } => {
                let v = (0..ELLIPSE_VERTICES)
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / ELLIPSE_VERTICES as f64;
                        Vec2::new(a * t.cos(), b * t.sin())
                    })
                    .collect();
                vec![ConvexPolygon::new(v)?]
            }
            Footprint::LShape {
                width,
                height,
                thickness: t,
            } => vec![
                ConvexPolygon::rect(0.0, 0.0, width, t)?,
                ConvexPolygon::rect(0.0, t, t, height)?,
            ],
            Footprint::TShape { width, height, bar, stem } => vec![
                ConvexPolygon::rect(-width / 2.0, height - bar, width / 2.0, height)?,
                ConvexPolygon::rect(-stem / 2.0, 0.0, stem / 2.0, height - bar)?,
            ],
            Footprint::Star { core, tip } => {
                let corner = |i: usize| {
                    let a = PI / 2.0 + 2.0 * PI * i as f64 / 3.0;
                    Vec2::new(core * a.cos(), core * a.sin())
                };
                let mut pieces = vec![ConvexPolygon::new(vec![corner(0), corner(1), corner(2)])?];
                for i in 0..3 {
                    let (a, b) = (corner(i), corner((i + 1) % 3));
                    let mid = (a + b) * 0.5;
                    let apex = mid.normalized() * tip;
                    pieces.push(ConvexPolygon::new(vec![b, a, apex]).or_else(|_| ConvexPolygon::new(vec![a, b, apex]))?);
                }
                pieces
            }
        };
        Ok(out)
    }
}

/// One slice of a stacked shape: its thickness and the footprint scale relative to the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub height: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub family: ShapeFamily,
    pub footprint: Footprint,
    pub layers: Vec<Layer>,
}

impl ShapeSpec {
    pub fn build(&self, label: impl Into<String>) -> Result<ObjectShape, WorldError> {
        let base = self.footprint.pieces()?;
        // scale about the base centroid so tapered slices stay stacked
        let mut c = Vec2::ZERO;
        let mut area = 0.0;
        for p in &base {
            c += p.centroid() * p.area();
            area += p.area();
        }
        let c = c * (1.0 / area);
        let centred: Vec<ConvexPolygon> = base.iter().map(|p| p.translated(-c)).collect();
        let mut z = 0.0;
        let mut slices = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            slices.push(Slice {
                z_lo: z,
                z_hi: z + l.height,
                footprint: centred.iter().map(|p| p.scaled(l.scale)).collect(),
            });
            z += l.height;
        }
        ObjectShape::new(label, slices)?.recentered()
    }
}

fn sample_layers(rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let n = rng.gen_range(1..=3);
    let total = rng.gen_range(5.0..16.0);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let taper = rng.gen_bool(0.5);
    let mut scale = 1.0;
    weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i > 0 {
                scale = if taper {
                    scale * rng.gen_range(0.7..0.95)
                } else {
                    rng.gen_range(0.6..1.0)
                };
            }
            Layer {
                height: total * w / wsum,
                scale,
            }
        })
        .collect()
}

fn sample_footprint(family: ShapeFamily, rng: &mut ChaCha8Rng) -> Footprint {
    let d = rng.gen_range(9.0..15.0);
    match family {
        ShapeFamily::PrismNgon => {
            let n = rng.gen_range(3..=8);
            Footprint::Ngon {
                n,
                side: d * (PI / n as f64).sin(),
            }
        }
        ShapeFamily::Box => {
            let aspect: f64 = rng.gen_range(0.35..1.0);
            let width = d / (1.0 + aspect * aspect).sqrt();
            Footprint::Box {
                width,
                depth: width * aspect,
            }
        }
        ShapeFamily::EllipsePrism => {
            let a = d / 2.0;
            Footprint::Ellipse {
                a,
                b: a * rng.gen_range(0.45..1.0),
            }
        }
        ShapeFamily::LShape => {
            let width = d * rng.gen_range(0.55..0.75);
            let height = width * rng.gen_range(0.7..1.2);
            Footprint::LShape {
                width,
                height,
                thickness: width.min(height) * rng.gen_range(0.3..0.5),
            }
        }
        ShapeFamily::TShape => {
            let width = d * rng.gen_range(0.6..0.8);
            let height = d * rng.gen_range(0.55..0.75);
            Footprint::TShape {
                width,
                height,
                bar: height * rng.gen_range(0.25..0.4),
                stem: width * rng.gen_range(0.25..0.4),
            }
        }
        ShapeFamily::StarPrism => {
            let tip = d / 3f64.sqrt();
            Footprint::Star {
                core: tip * rng.gen_range(0.35..0.55),
                tip,
            }
        }
    }
}

/// Samples the parameters of a shape; diameter violations are re-drawn.
pub fn sample_spec(family: ShapeFamily, seed: u64) -> Result<ShapeSpec, DatasetError> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng_for(seed, &[SHAPE_STREAM, attempt]);
        let spec = ShapeSpec {
            family,
            footprint: sample_footprint(family, &mut rng),
            layers: sample_layers(&mut rng),
        };
        if let Ok(shape) = spec.build("probe") {
            let d = shape.diameter();
            if (MIN_DIAMETER..=MAX_DIAMETER).contains(&d) {
                return Ok(spec);
            }
        }
    }
    Err(DatasetError::ShapeRedraws { family, seed })
}

pub fn gen_shape(family: ShapeFamily, seed: u64) -> Result<ObjectShape, DatasetError> {
    let spec = sample_spec(family, seed)?;
    Ok(spec.build(format!("{}-{seed}", family.name()))?)
}
