//! Compositional synthetic action clips.
//!
//! Each class is a motif phrase such as `move left` or `grow up`, rendered
//! as a coloured shape whose motion over the clip spells out the phrase.
//! Labels therefore share words across classes, which is what makes
//! zero-shot transfer to unseen phrases measurable.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::clip::{save_frames, Frames, CHANNELS};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::vocab::LabelVocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verb {
    Move,
    Grow,
    Shrink,
    Rotate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    /// Unit vector in image coordinates (y grows downwards).
    fn vector(self) -> (f64, f64) {
        match self {
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
            Direction::Up => (0.0, -1.0),
            Direction::Down => (0.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Motif {
    pub verb: Verb,
    pub direction: Direction,
}

impl Motif {
    pub fn new(verb: Verb, direction: Direction) -> Result<Self> {
        if verb == Verb::Rotate && matches!(direction, Direction::Up | Direction::Down) {
            return Err(Error::SyntheticSpec(format!(
                "rotate has no {} variant",
                Motif { verb, direction }
            )));
        }
        Ok(Self { verb, direction })
    }
}

impl fmt::Display for Motif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = match self.verb {
            Verb::Move => "move",
            Verb::Grow => "grow",
            Verb::Shrink => "shrink",
            Verb::Rotate => "rotate",
        };
        let dir = match self.direction {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        };
        write!(f, "{verb} {dir}")
    }
}

impl TryFrom<String> for Motif {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let mut words = s.split_whitespace();
        let bad = || Error::SyntheticSpec(format!("unknown motif {s:?}"));
        let verb = match words.next().ok_or_else(bad)? {
            "move" => Verb::Move,
            "grow" => Verb::Grow,
            "shrink" => Verb::Shrink,
            "rotate" => Verb::Rotate,
            _ => return Err(bad()),
        };
        let direction = match words.next().ok_or_else(bad)? {
            "left" => Direction::Left,
            "right" => Direction::Right,
            "up" => Direction::Up,
            "down" => Direction::Down,
            _ => return Err(bad()),
        };
        if words.next().is_some() {
            return Err(bad());
        }
        Motif::new(verb, direction)
    }
}

impl From<Motif> for String {
    fn from(m: Motif) -> String {
        m.to_string()
    }
}

/// The full motif set in canonical class order: the four directions of
/// `move`, `grow` and `shrink`, then `rotate left` / `rotate right`.
pub fn standard_motifs() -> Vec<Motif> {
    let dirs = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];
    let mut out = Vec::new();
    for verb in [Verb::Move, Verb::Grow, Verb::Shrink] {
        out.extend(dirs.iter().map(|&direction| Motif { verb, direction }));
    }
    out.push(Motif {
        verb: Verb::Rotate,
        direction: Direction::Left,
    });
    out.push(Motif {
        verb: Verb::Rotate,
        direction: Direction::Right,
    });
    out
}

fn default_motifs_per_clip() -> usize {
    1
}

fn default_noise() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Number of classes; the first `classes` motifs are used.
    pub classes: usize,
    #[serde(default = "standard_motifs")]
    pub motifs: Vec<Motif>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
    /// Motifs rendered per clip; above 1 the clips are multi-label.
    #[serde(default = "default_motifs_per_clip")]
    pub motifs_per_clip: usize,
    /// Standard deviation of per-pixel Gaussian noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, frames: usize, size: usize, train_per_class: usize, val_per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            motifs: standard_motifs(),
            frames,
            height: size,
            width: size,
            train_per_class,
            val_per_class,
            seed,
            motifs_per_clip: 1,
            noise: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SyntheticSpec(m));
        if self.classes == 0 {
            return bad("class count must be positive".into());
        }
        if self.classes > self.motifs.len() {
            return bad(format!(
                "{} classes requested but the motif set has only {}",
                self.classes,
                self.motifs.len()
            ));
        }
        for (i, m) in self.motifs.iter().enumerate() {
            if self.motifs[..i].contains(m) {
                return bad(format!("motif {m} listed twice"));
            }
        }
        if self.frames == 0 {
            return bad("frames must be positive".into());
        }
        if self.height < 8 || self.width < 8 {
            return bad(format!("frame size {}x{} below 8x8", self.height, self.width));
        }
        if self.motifs_per_clip == 0 || self.motifs_per_clip > self.classes {
            return bad(format!(
                "motifs_per_clip must lie in 1..={}, got {}",
                self.classes, self.motifs_per_clip
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be a finite non-negative number, got {}", self.noise));
        }
        Ok(())
    }

    /// Parses and validates a TOML description.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::SyntheticSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    pub fn vocabulary(&self) -> Result<LabelVocabulary> {
        LabelVocabulary::new(self.motifs[..self.classes].iter().map(Motif::to_string))
    }
}

/// Seed for one clip, so that every clip is reproducible on its own.
fn clip_seed(seed: u64, split: Split, class: usize, index: usize) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [split as u64 + 1, class as u64 + 1, index as u64 + 1] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01B3).rotate_left(29);
    }
    h
}

struct Shape {
    motif: Motif,
    color: [f32; 3],
    // All lengths in units of the shorter frame side.
    centre: (f64, f64),
    size: f64,
    jitter: f64,
}

impl Shape {
    fn random(motif: Motif, rng: &mut ChaCha8Rng) -> Self {
        let mut color = [0f32; 3];
        for c in &mut color {
            *c = rng.random_range(0.45..1.0);
        }
        color[rng.random_range(0..3)] = 1.0;
        Self {
            motif,
            color,
            centre: (rng.random_range(0.4..0.6), rng.random_range(0.4..0.6)),
            size: rng.random_range(0.15..0.21),
            jitter: rng.random_range(-0.04..0.04),
        }
    }

    /// Whether the normalised point `(x, y)` is covered at clip phase `u`.
    fn covers(&self, x: f64, y: f64, u: f64) -> bool {
        let (dx, dy) = self.motif.direction.vector();
        let (cx, cy) = self.centre;
        // Coordinates along and across the motion axis, relative to centre.
        let along = (x - cx) * dx + (y - cy) * dy;
        let across = -(x - cx) * dy + (y - cy) * dx;
        let half = self.size / 2.0;
        match self.motif.verb {
            Verb::Move => {
                let travel = 0.45;
                let pos = -travel / 2.0 + travel * u + self.jitter;
                (along - pos).abs() <= half && across.abs() <= half
            }
            Verb::Grow | Verb::Shrink => {
                let (short, long) = (0.12, 0.55);
                let grow = self.motif.verb == Verb::Grow;
                let len = if grow {
                    short + (long - short) * u
                } else {
                    long - (long - short) * u
                };
                // Growing extends away from a fixed trailing edge; shrinking
                // pulls the trailing edge towards a fixed leading edge.
                let (lo, hi) = if grow {
                    let start = -long / 2.0 + self.jitter;
                    (start, start + len)
                } else {
                    let end = long / 2.0 + self.jitter;
                    (end - len, end)
                };
                (lo..=hi).contains(&along) && across.abs() <= half
            }
            Verb::Rotate => {
                let sign = if self.motif.direction == Direction::Left { -1.0 } else { 1.0 };
                let theta = self.jitter * 10.0 + sign * FRAC_PI_2 * u;
                let (s, c) = theta.sin_cos();
                let (px, py) = (x - cx, y - cy);
                let a = px * c + py * s;
                let b = -px * s + py * c;
                a.abs() <= 0.3 && b.abs() <= 0.06
            }
        }
    }
}

fn render(spec: &SyntheticSpec, motifs: &[Motif], rng: &mut ChaCha8Rng) -> Frames {
    let (f, h, w) = (spec.frames, spec.height, spec.width);
    let shapes: Vec<Shape> = motifs.iter().map(|&m| Shape::random(m, rng)).collect();
    let background: f32 = rng.random_range(0.0..0.15);
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let side = h.min(w) as f64;
    let mut frames = Array4::<f32>::from_elem((f, h, w, CHANNELS), background);
    for t in 0..f {
        let u = if f == 1 { 0.5 } else { t as f64 / (f - 1) as f64 };
        for yi in 0..h {
            let y = (yi as f64 + 0.5 - (h as f64 - side) / 2.0) / side;
            for xi in 0..w {
                let x = (xi as f64 + 0.5 - (w as f64 - side) / 2.0) / side;
                for shape in &shapes {
                    if shape.covers(x, y, u) {
                        for c in 0..CHANNELS {
                            frames[[t, yi, xi, c]] = shape.color[c];
                        }
                    }
                }
            }
        }
    }
    if spec.noise > 0.0 {
        frames.mapv_inplace(|v| (v + noise.sample(rng) as f32).clamp(0.0, 1.0));
    }
    frames
}

/// Renders the dataset described by `spec` into `dest` (clips under
/// `dest/clips/`, manifest at `dest/manifest.tsv`).
pub fn generate_synthetic(spec: &SyntheticSpec, dest: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let clip_dir = dest.join("clips");
    fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
    let mut entries = Vec::new();
    for (split, per_class) in [(Split::Train, spec.train_per_class), (Split::Val, spec.val_per_class)] {
        for class in 0..spec.classes {
            for index in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(spec.seed, split, class, index));
                let mut labels = vec![class];
                while labels.len() < spec.motifs_per_clip {
                    let extra = rng.random_range(0..spec.classes);
                    if !labels.contains(&extra) {
                        labels.push(extra);
                    }
                }
                let motifs: Vec<Motif> = labels.iter().map(|&l| spec.motifs[l]).collect();
                let frames = render(spec, &motifs, &mut rng);
                let id = format!("{split}-{class:02}-{index:03}");
                let rel = Path::new("clips").join(format!("{id}.vclip"));
                save_frames(&dest.join(&rel), &frames)?;
                labels.sort_unstable();
                entries.push(ManifestEntry {
                    id,
                    path: rel,
                    labels,
                    split,
                });
            }
        }
    }
    let manifest = DatasetManifest::new(dest, vocab, entries)?;
    manifest.save()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(classes: usize) -> SyntheticSpec {
        SyntheticSpec::new(classes, 4, 16, 2, 1, 7)
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let spec = small(3);
        assert_eq!(SyntheticSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        let text = "classes = 2\nframes = 4\nheight = 16\nwidth = 16\ntrain_per_class = 1\nval_per_class = 1\nseed = 3\n";
        let parsed = SyntheticSpec::from_toml(text).unwrap();
        assert_eq!(parsed.motifs, standard_motifs());
        assert!(SyntheticSpec::from_toml(&format!("{text}colour = 1\n")).is_err());
        assert!(SyntheticSpec::from_toml(&text.replace("classes = 2", "classes = 15")).is_err());
    }

    #[test]
    fn standard_set_labels() {
        let names: Vec<String> = standard_motifs().iter().map(Motif::to_string).collect();
        assert_eq!(names.len(), 14);
        assert_eq!(names[0], "move left");
        assert_eq!(names[7], "grow down");
        assert_eq!(names[13], "rotate right");
        assert!(Motif::try_from("rotate up".to_string()).is_err());
        assert!(Motif::try_from("hop left".to_string()).is_err());
    }

    #[test]
    fn too_many_classes_rejected() {
        for classes in [15, 17] {
            let err = small(classes).validate().unwrap_err();
            assert!(matches!(err, Error::SyntheticSpec(_)), "{err}");
        }
        let mut spec = small(3);
        spec.motifs.truncate(2);
        assert!(spec.validate().is_err());
        assert!(small(14).validate().is_ok());
    }

    #[test]
    fn motion_is_visible() {
        // A "move right" clip's bright mass drifts towards larger x.
        let spec = SyntheticSpec { noise: 0.0, ..SyntheticSpec::new(2, 5, 32, 1, 0, 3) };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let motif = Motif::new(Verb::Move, Direction::Right).unwrap();
        let frames = render(&spec, &[motif], &mut rng);
        let centroid = |t: usize| {
            let (mut sx, mut n) = (0.0, 0.0);
            for y in 0..32 {
                for x in 0..32 {
                    if frames[[t, y, x, 0]] > 0.4 || frames[[t, y, x, 1]] > 0.4 {
                        sx += x as f64;
                        n += 1.0;
                    }
                }
            }
            sx / n
        };
        assert!(centroid(4) > centroid(0) + 8.0);
    }

    #[test]
    fn multi_label_clips_carry_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec { motifs_per_clip: 2, ..small(4) };
        let m = generate_synthetic(&spec, dir.path()).unwrap();
        assert!(m.entries.iter().all(|e| e.labels.len() == 2));
    }
}
