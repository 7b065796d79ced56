//! Synthetic coin corpus: procedurally rendered coin reverses with planted
//! glyphs (one distinct shape family per concept) plus multilingual
//! auction-style descriptions. Ground truth records true glyph presence and
//! bounding boxes independently of the text channel, so the whole
//! weak-labeling pipeline can be verified end to end.

use crate::dataset::{Label, Manifest, Sample, Split};
use crate::error::{Error, Result};
use crate::preprocess::{write_image, RawImage};
use crate::seed::derive_seed;
use crate::text::{assign_label, expand_lexicon, normalize_text, Language, LexiconFile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const DEFAULT_CONCEPTS: [&str; 5] = ["horse", "cornucopia", "patera", "eagle", "shield"];

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub concepts: Vec<String>,
    /// Fraction of samples that contain each concept's glyph (independent
    /// per concept; counts are exact by construction).
    pub positive_rate: f64,
    /// Fraction of descriptions that get one concept word swapped for an
    /// absent concept's word, emulating obverse/reverse label noise.
    pub label_noise_rate: f64,
    pub image_side: usize,
    pub seed: u64,
    /// File extension for emitted images: "ppm" or "png".
    pub format: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_samples: 1000,
            concepts: DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
            positive_rate: 0.3,
            label_noise_rate: 0.0,
            image_side: 100,
            seed: 0,
            format: "ppm".to_string(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::Config(format!(
                "n_samples must be >= 10, got {}",
                self.n_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) || !(0.0..=1.0).contains(&self.label_noise_rate) {
            return Err(Error::Config("rates must lie in [0, 1]".into()));
        }
        if self.concepts.is_empty() {
            return Err(Error::Config("at least one concept is required".into()));
        }
        if self.image_side < 32 {
            return Err(Error::Config("image_side must be >= 32".into()));
        }
        if self.format != "ppm" && self.format != "png" {
            return Err(Error::Config(format!("unknown image format {:?}", self.format)));
        }
        Ok(())
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    fn empty() -> Self {
        BBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        }
    }

    fn include(&mut self, x: usize, y: usize) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x);
        self.y1 = self.y1.max(y);
    }

    fn is_valid(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1
    }

    /// Dilate by `margin` pixels, clamped to the image.
    pub fn dilated(&self, margin: usize, side: usize) -> BBox {
        BBox {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(side - 1),
            y1: (self.y1 + margin).min(side - 1),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn center(&self) -> (usize, usize) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amount: i16) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (o, &b) in out.iter_mut().zip(base.iter()) {
        let d = rng.random_range(-amount..=amount);
        *o = (b as i16 + d).clamp(0, 255) as u8;
    }
    out
}

fn render_disk(side: usize, rng: &mut ChaCha8Rng) -> RawImage {
    let mut img = RawImage::filled(side, side, [0, 0, 0]);
    let c = side as f64 / 2.0;
    let radius = 0.46 * side as f64;
    for y in 0..side {
        for x in 0..side {
            let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            let px = if d <= radius {
                let shade = 1.0 - 0.22 * (d / radius).powi(2);
                let rim = if d > 0.93 * radius { 0.72 } else { 1.0 };
                let base = [
                    (168.0 * shade * rim) as u8,
                    (142.0 * shade * rim) as u8,
                    (96.0 * shade * rim) as u8,
                ];
                jitter(rng, base, 12)
            } else {
                jitter(rng, [38, 36, 40], 10)
            };
            img.set(x, y, px);
        }
    }
    img
}

struct GlyphBrush<'a> {
    img: &'a mut RawImage,
    bbox: BBox,
    color: [u8; 3],
}

impl GlyphBrush<'_> {
    fn paint(&mut self, x: i64, y: i64, rng: &mut ChaCha8Rng) {
        if x < 0 || y < 0 || x >= self.img.width as i64 || y >= self.img.height as i64 {
            return;
        }
        let px = jitter(rng, self.color, 9);
        self.img.set(x as usize, y as usize, px);
        self.bbox.include(x as usize, y as usize);
    }

    fn stamp_disk(&mut self, cx: f64, cy: f64, r: f64, rng: &mut ChaCha8Rng) {
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    self.paint(x, y, rng);
                }
            }
        }
    }
}

/// Draw one glyph family at (cx, cy) with half-extent `scale` and rotation
/// `rot`; returns the painted-pixel bounding box.
fn draw_glyph(
    img: &mut RawImage,
    family: usize,
    cx: f64,
    cy: f64,
    scale: f64,
    rot: f64,
    rng: &mut ChaCha8Rng,
) -> Option<BBox> {
    let color = jitter(rng, [56, 42, 28], 8);
    let mut brush = GlyphBrush {
        img,
        bbox: BBox::empty(),
        color,
    };
    let (sin, cos) = rot.sin_cos();
    // map a point from glyph-local units into image coordinates
    let local_to_img = |lx: f64, ly: f64| -> (f64, f64) {
        (
            cx + scale * (lx * cos - ly * sin),
            cy + scale * (lx * sin + ly * cos),
        )
    };

    match family % 5 {
        // filled triangle
        0 => {
            let verts = [(0.0, -1.1), (0.95, 0.85), (-0.95, 0.85)];
            fill_convex(&mut brush, cx, cy, scale, |lx, ly| {
                point_in_triangle(lx, ly, verts)
            }, sin, cos, rng);
        }
        // spiral drawn as stamped disks along r = r0 + r1 * t
        1 => {
            let steps = (24.0 * scale) as usize + 40;
            for i in 0..=steps {
                let t = i as f64 / steps as f64;
                let theta = 3.2 * std::f64::consts::PI * t;
                let r = 0.12 + 0.85 * t;
                let (px, py) = local_to_img(r * theta.cos(), r * theta.sin());
                brush.stamp_disk(px, py, 0.14 * scale, rng);
            }
        }
        // annulus
        2 => {
            fill_convex(&mut brush, cx, cy, scale, |lx, ly| {
                let r2 = lx * lx + ly * ly;
                (0.30..=1.0).contains(&r2) // 0.55^2 = 0.30
            }, sin, cos, rng);
        }
        // six-spoke star
        3 => {
            for spoke in 0..6 {
                let angle = rot + spoke as f64 * std::f64::consts::PI / 3.0;
                let steps = (2.2 * scale) as usize + 12;
                for i in 0..=steps {
                    let t = i as f64 / steps as f64;
                    let px = cx + scale * t * angle.cos();
                    let py = cy + scale * t * angle.sin();
                    brush.stamp_disk(px, py, (0.18 - 0.08 * t) * scale, rng);
                }
            }
        }
        // filled square
        _ => {
            fill_convex(&mut brush, cx, cy, scale, |lx, ly| {
                lx.abs() <= 0.82 && ly.abs() <= 0.82
            }, sin, cos, rng);
        }
    }
    brush.bbox.is_valid().then_some(brush.bbox)
}

/// Scan the glyph's AABB and paint pixels whose rotated local coordinates
/// satisfy the shape test.
fn fill_convex(
    brush: &mut GlyphBrush<'_>,
    cx: f64,
    cy: f64,
    scale: f64,
    inside: impl Fn(f64, f64) -> bool,
    sin: f64,
    cos: f64,
    rng: &mut ChaCha8Rng,
) {
    let extent = 1.3 * scale;
    let (x0, x1) = ((cx - extent).floor() as i64, (cx + extent).ceil() as i64);
    let (y0, y1) = ((cy - extent).floor() as i64, (cy + extent).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 - cx) / scale;
            let dy = (y as f64 - cy) / scale;
            // inverse rotation
            let lx = dx * cos + dy * sin;
            let ly = -dx * sin + dy * cos;
            if inside(lx, ly) {
                brush.paint(x, y, rng);
            }
        }
    }
}

fn point_in_triangle(px: f64, py: f64, v: [(f64, f64); 3]) -> bool {
    let sign = |a: (f64, f64), b: (f64, f64)| (px - b.0) * (a.1 - b.1) - (a.0 - b.0) * (py - b.1);
    let d1 = sign(v[0], v[1]);
    let d2 = sign(v[1], v[2]);
    let d3 = sign(v[2], v[0]);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

// ---------------------------------------------------------------------------
// Descriptions
// ---------------------------------------------------------------------------

/// Keyword variants the templates may use, per concept and language. Every
/// entry must be covered by the shipped lexicon; concepts outside the default
/// five fall back to their own name in every language.
fn keyword_variants(concept: &str, lang: Language) -> Vec<&str> {
    use Language::*;
    let v: &[&str] = match (concept, lang) {
        ("horse", En) => &["horse", "horses", "horseman"],
        ("horse", Fr) => &["cheval", "chevaux"],
        ("horse", Es) => &["caballo", "caballos"],
        ("horse", De) => &["pferd", "pferde"],
        ("cornucopia", En) => &["cornucopia", "cornucopiae"],
        ("cornucopia", Fr) => &["corne", "cornes"],
        ("cornucopia", Es) => &["cornucopia", "cornucopias"],
        ("cornucopia", De) => &["füllhorn"],
        ("patera", En) => &["patera", "paterae"],
        ("patera", Fr) => &["patère", "patères"],
        ("patera", Es) => &["pátera"],
        ("patera", De) => &["opferschale"],
        ("eagle", En) => &["eagle", "eagles"],
        ("eagle", Fr) => &["aigle", "aigles"],
        ("eagle", Es) => &["águila"],
        ("eagle", De) => &["adler"],
        ("shield", En) => &["shield", "shields"],
        ("shield", Fr) => &["bouclier", "boucliers"],
        ("shield", Es) => &["escudo", "escudos"],
        ("shield", De) => &["schild", "schilde"],
        _ => return vec![concept],
    };
    v.to_vec()
}

const RULERS: [&str; 8] = [
    "Gallienus", "Probus", "Hadrianus", "Traianus", "Macrianus", "Aurelianus", "Valerianus",
    "Claudius",
];

struct TemplateSet {
    intro: &'static [&'static str],
    none_subject: &'static str,
    conjunction: &'static str,
    pose: &'static [&'static str],
    field_obj: &'static [&'static str],
    grade: &'static [&'static str],
}

fn templates(lang: Language) -> TemplateSet {
    match lang {
        Language::En => TemplateSet {
            intro: &[
                "AR antoninianus. Radiate and draped bust right /",
                "AE sestertius. Laureate bust right /",
            ],
            none_subject: "Emperor seated on curule chair",
            conjunction: " and ",
            pose: &["standing left", "standing right", "advancing left"],
            field_obj: &["star", "crescent", "altar", "column", "wreath"],
            grade: &["good fine", "very fine", "extremely fine"],
        },
        Language::Fr => TemplateSet {
            intro: &[
                "Antoninien d'argent. Buste radié et drapé à droite /",
                "Sesterce. Buste lauré à droite /",
            ],
            none_subject: "Empereur assis sur une chaise curule",
            conjunction: " et ",
            pose: &["debout à gauche", "debout à droite"],
            field_obj: &["étoile", "croissant", "autel", "colonne"],
            grade: &["très beau", "superbe"],
        },
        Language::Es => TemplateSet {
            intro: &[
                "Antoniniano de plata. Busto radiado y drapeado a derecha /",
                "Sestercio. Busto laureado a derecha /",
            ],
            none_subject: "Emperador sentado en silla curul",
            conjunction: " y ",
            pose: &["de pie a izquierda", "de pie a derecha"],
            field_obj: &["estrella", "altar", "columna"],
            grade: &["muy bueno", "excelente"],
        },
        Language::De => TemplateSet {
            intro: &[
                "Antoninian. Drapierte Büste mit Strahlenkrone rechts /",
                "Sesterz. Belorbeerte Büste rechts /",
            ],
            none_subject: "Kaiser auf kurulischem Stuhl sitzend",
            conjunction: " und ",
            pose: &["stehend nach links", "stehend nach rechts"],
            field_obj: &["stern", "altar", "säule"],
            grade: &["sehr schön", "vorzüglich"],
        },
    }
}

/// One description, structurally: static text plus exactly one keyword slot
/// per present concept. The noise injector swaps a slot's concept before
/// rendering.
#[derive(Debug, Clone)]
pub struct Description {
    pub language: Language,
    lot: u32,
    ruler: &'static str,
    intro_idx: usize,
    pose_idx: usize,
    field_idx: usize,
    grade_idx: usize,
    /// (concept name, variant salt) per keyword slot.
    pub slots: Vec<(String, u64)>,
}

impl Description {
    fn build(present: &[String], language: Language, rng: &mut ChaCha8Rng) -> Description {
        let t = templates(language);
        Description {
            language,
            lot: rng.random_range(1..=9999),
            ruler: RULERS[rng.random_range(0..RULERS.len())],
            intro_idx: rng.random_range(0..t.intro.len()),
            pose_idx: rng.random_range(0..t.pose.len()),
            field_idx: rng.random_range(0..t.field_obj.len()),
            grade_idx: rng.random_range(0..t.grade.len()),
            slots: present
                .iter()
                .map(|c| (c.clone(), rng.random::<u64>()))
                .collect(),
        }
    }

    /// Swap slot `slot_idx` to a different concept (the noise injector).
    pub fn swap_slot(&mut self, slot_idx: usize, new_concept: &str) {
        self.slots[slot_idx].0 = new_concept.to_string();
    }

    pub fn render(&self) -> String {
        let t = templates(self.language);
        let subject = if self.slots.is_empty() {
            t.none_subject.to_string()
        } else {
            let words: Vec<String> = self
                .slots
                .iter()
                .map(|(concept, salt)| {
                    let variants = keyword_variants(concept, self.language);
                    variants[(*salt as usize) % variants.len()].to_string()
                })
                .collect();
            let mut joined = words[0].clone();
            for w in &words[1..] {
                joined.push_str(t.conjunction);
                joined.push_str(w);
            }
            // capitalize the first letter for auction-house looks
            let mut chars = joined.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => joined,
            }
        };
        format!(
            "Lot {}. {}. {} {} {}; {} in field. {}.",
            self.lot,
            self.ruler,
            t.intro[self.intro_idx],
            subject,
            t.pose[self.pose_idx],
            t.field_obj[self.field_idx],
            t.grade[self.grade_idx]
        )
    }

    /// Every static token the rendered text can contain, for leak checks.
    pub fn static_vocabulary() -> Vec<String> {
        let mut words = Vec::new();
        let mut push_text = |s: &str| {
            for token in normalize_text(s).iter() {
                words.push(token.to_string());
            }
        };
        for lang in Language::ALL {
            let t = templates(lang);
            for s in t.intro {
                push_text(s);
            }
            push_text(t.none_subject);
            push_text(t.conjunction);
            for s in t.pose {
                push_text(s);
            }
            for s in t.field_obj {
                push_text(s);
            }
            for s in t.grade {
                push_text(s);
            }
            push_text("Lot in field");
        }
        for r in RULERS {
            push_text(r);
        }
        words.sort();
        words.dedup();
        words
    }
}

// ---------------------------------------------------------------------------
// Coin generation
// ---------------------------------------------------------------------------

/// One generated coin: the rendered image, the structured description, and
/// per-concept ground truth (glyph bounding boxes for present concepts).
pub struct CoinSample {
    pub image: RawImage,
    pub description: Description,
    /// Bounding box per concept index; `None` for absent concepts.
    pub bboxes: Vec<Option<BBox>>,
}

impl CoinSample {
    pub fn text(&self) -> String {
        self.description.render()
    }
}

/// Deterministically render one coin with the given present concepts
/// (indices into `concepts`).
pub fn generate_coin(seed: u64, present: &[usize], concepts: &[String], image_side: usize) -> CoinSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = image_side as f64;
    let mut image = render_disk(image_side, &mut rng);

    let disk_r = 0.46 * side;
    let center = side / 2.0;
    let k = present.len().max(1) as f64;
    let max_scale = side * (0.19f64).min(0.36 / k.sqrt());
    let min_scale = side * 0.12;

    let mut bboxes: Vec<Option<BBox>> = vec![None; concepts.len()];
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for &concept_idx in present {
        let scale = rng.random_range(min_scale..=max_scale.max(min_scale + 1.0));
        let rot = rng.random_range(0.0..std::f64::consts::TAU);
        let max_c = (disk_r - 1.3 * scale).max(1.0);
        let mut cx = center;
        let mut cy = center;
        for attempt in 0..60 {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = max_c * rng.random_range(0.0f64..1.0).sqrt();
            cx = center + r * angle.cos();
            cy = center + r * angle.sin();
            let clear = placed.iter().all(|&(px, py, ps)| {
                let d = ((cx - px).powi(2) + (cy - py).powi(2)).sqrt();
                d >= 0.9 * 1.3 * (scale + ps)
            });
            if clear || attempt == 59 {
                break;
            }
        }
        placed.push((cx, cy, scale));
        bboxes[concept_idx] = draw_glyph(&mut image, concept_idx, cx, cy, scale, rot, &mut rng);
    }

    let present_names: Vec<String> = present.iter().map(|&i| concepts[i].clone()).collect();
    let language = Language::ALL[rng.random_range(0..Language::ALL.len())];
    let description = Description::build(&present_names, language, &mut rng);

    CoinSample {
        image,
        description,
        bboxes,
    }
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// Ground truth table: per (sample, concept), true glyph presence plus the
/// glyph bounding box when present.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub rows: BTreeMap<String, BTreeMap<String, (bool, Option<BBox>)>>,
}

impl GroundTruth {
    pub fn present(&self, id: &str, concept: &str) -> Option<bool> {
        self.rows.get(id).and_then(|m| m.get(concept)).map(|&(p, _)| p)
    }

    pub fn bbox(&self, id: &str, concept: &str) -> Option<BBox> {
        self.rows.get(id).and_then(|m| m.get(concept)).and_then(|&(_, b)| b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id\tconcept\tpresent\tx0\ty0\tx1\ty1\n");
        for (id, concepts) in &self.rows {
            for (concept, (present, bbox)) in concepts {
                let (x0, y0, x1, y1) = match bbox {
                    Some(b) => (b.x0 as i64, b.y0 as i64, b.x1 as i64, b.y1 as i64),
                    None => (-1, -1, -1, -1),
                };
                out.push_str(&format!(
                    "{id}\t{concept}\t{}\t{x0}\t{y0}\t{x1}\t{y1}\n",
                    if *present { 1 } else { 0 }
                ));
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut gt = GroundTruth::default();
        for (lineno, line) in content.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(Error::Data(format!(
                    "{}:{}: expected 7 fields",
                    path.display(),
                    lineno + 1
                )));
            }
            let parse = |s: &str| -> Result<i64> {
                s.parse()
                    .map_err(|_| Error::Data(format!("{}:{}: bad number {s:?}", path.display(), lineno + 1)))
            };
            let present = f[2] == "1";
            let x0 = parse(f[3])?;
            let bbox = if x0 >= 0 {
                Some(BBox {
                    x0: x0 as usize,
                    y0: parse(f[4])? as usize,
                    x1: parse(f[5])? as usize,
                    y1: parse(f[6])? as usize,
                })
            } else {
                None
            };
            gt.rows
                .entry(f[0].to_string())
                .or_default()
                .insert(f[1].to_string(), (present, bbox));
        }
        Ok(gt)
    }
}

fn sample_id(i: usize) -> String {
    format!("coin_{i:05}")
}

pub struct CorpusSummary {
    pub n_samples: usize,
    pub positives_per_concept: Vec<usize>,
    pub swapped: usize,
}

/// Generate the full corpus under `out_dir`: `images/`, `texts/`,
/// `ground_truth.tsv` and a `manifest.tsv` consumable by the dataset builder.
pub fn generate_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<CorpusSummary> {
    spec.validate()?;
    let images_dir = out_dir.join("images");
    let texts_dir = out_dir.join("texts");
    std::fs::create_dir_all(&images_dir)
        .and_then(|_| std::fs::create_dir_all(&texts_dir))
        .map_err(|e| Error::io(format!("creating corpus dirs under {}", out_dir.display()), e))?;

    let n = spec.n_samples;
    let n_concepts = spec.concepts.len();

    // Exact positive counts per concept: a seeded choice of round(rate * n)
    // sample indices, independently per concept.
    let n_pos = (spec.positive_rate * n as f64).round() as usize;
    let mut present_sets: Vec<Vec<usize>> = vec![Vec::new(); n]; // per sample: concept indices
    for concept_idx in 0..n_concepts {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0xbb01, concept_idx as u64]));
        order.shuffle(&mut rng);
        for &i in order.iter().take(n_pos) {
            present_sets[i].push(concept_idx);
        }
    }

    // Render coins in parallel; each sample's RNG depends only on (seed, i).
    let coins: Vec<CoinSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            generate_coin(
                derive_seed(spec.seed, &[0xc017, i as u64]),
                &present_sets[i],
                &spec.concepts,
                spec.image_side,
            )
        })
        .collect();
    let mut coins = coins;

    // Noise injection: swap one present concept word for an absent concept's
    // word in round(noise * n) eligible descriptions.
    let n_swap = (spec.label_noise_rate * n as f64).round() as usize;
    let mut eligible: Vec<usize> = (0..n)
        .filter(|&i| !present_sets[i].is_empty() && present_sets[i].len() < n_concepts)
        .collect();
    let mut swap_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0x5a9]));
    eligible.shuffle(&mut swap_rng);
    if n_swap > eligible.len() {
        log::warn!(
            "requested {n_swap} noisy samples but only {} are eligible",
            eligible.len()
        );
    }
    let swapped: Vec<usize> = eligible.into_iter().take(n_swap).collect();
    for &i in &swapped {
        let present = &present_sets[i];
        let slot_idx = swap_rng.random_range(0..present.len());
        let absent: Vec<usize> = (0..n_concepts).filter(|c| !present.contains(c)).collect();
        let target = absent[swap_rng.random_range(0..absent.len())];
        let target_name = spec.concepts[target].clone();
        coins[i].description.swap_slot(slot_idx, &target_name);
    }

    // Write everything out.
    let mut gt = GroundTruth::default();
    let mut manifest_samples = Vec::with_capacity(n);
    for (i, coin) in coins.iter().enumerate() {
        let id = sample_id(i);
        let image_rel = format!("images/{id}.{}", spec.format);
        let text_rel = format!("texts/{id}.txt");
        write_image(&out_dir.join(&image_rel), &coin.image)?;
        let mut tf = std::fs::File::create(out_dir.join(&text_rel))
            .map_err(|e| Error::io(format!("creating {text_rel}"), e))?;
        tf.write_all(coin.text().as_bytes())
            .map_err(|e| Error::io(format!("writing {text_rel}"), e))?;

        let row = gt.rows.entry(id.clone()).or_default();
        for (c_idx, concept) in spec.concepts.iter().enumerate() {
            row.insert(
                concept.clone(),
                (present_sets[i].contains(&c_idx), coin.bboxes[c_idx]),
            );
        }
        manifest_samples.push(Sample {
            id,
            image_path: image_rel,
            text_path: text_rel,
            concept: "unlabeled".to_string(),
            label: Label::Negative,
            split: Split::Unassigned,
            extra: Vec::new(),
        });
    }
    gt.save(&out_dir.join("ground_truth.tsv"))?;
    Manifest::new(manifest_samples).write(&out_dir.join("manifest.tsv"))?;

    Ok(CorpusSummary {
        n_samples: n,
        positives_per_concept: vec![n_pos; n_concepts],
        swapped: swapped.len(),
    })
}

/// Fraction of samples whose text-derived labels match ground truth for
/// every concept (per-sample agreement).
pub fn label_agreement(corpus_dir: &Path, lexicon: &LexiconFile, concepts: &[String]) -> Result<f64> {
    let gt = GroundTruth::load(&corpus_dir.join("ground_truth.tsv"))?;
    let lexicons: Vec<_> = concepts
        .iter()
        .map(|c| expand_lexicon(c, lexicon))
        .collect::<Result<_>>()?;
    let manifest = Manifest::read(&corpus_dir.join("manifest.tsv"))?;
    if manifest.samples.is_empty() {
        return Err(Error::Data("empty corpus manifest".into()));
    }
    let mut agree = 0usize;
    for s in &manifest.samples {
        let text = std::fs::read_to_string(corpus_dir.join(&s.text_path))
            .map_err(|e| Error::io(format!("reading {}", s.text_path), e))?;
        let tokens = normalize_text(&text);
        let all_match = concepts.iter().zip(lexicons.iter()).all(|(concept, lex)| {
            let labeled = assign_label(&tokens, lex) == Label::Positive;
            gt.present(&s.id, concept) == Some(labeled)
        });
        if all_match {
            agree += 1;
        }
    }
    Ok(agree as f64 / manifest.samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::LexiconFile;

    fn concepts() -> Vec<String> {
        DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn same_seed_same_coin() {
        let a = generate_coin(42, &[0, 3], &concepts(), 100);
        let b = generate_coin(42, &[0, 3], &concepts(), 100);
        assert_eq!(a.image, b.image);
        assert_eq!(a.text(), b.text());
        let c = generate_coin(43, &[0, 3], &concepts(), 100);
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn empty_present_set_has_no_keywords() {
        let lexicon = LexiconFile::builtin();
        for seed in 0..20 {
            let coin = generate_coin(seed, &[], &concepts(), 64);
            let tokens = normalize_text(&coin.text());
            for concept in DEFAULT_CONCEPTS {
                let lex = expand_lexicon(concept, &lexicon).unwrap();
                assert_eq!(
                    assign_label(&tokens, &lex),
                    Label::Negative,
                    "seed {seed} concept {concept}: {}",
                    coin.text()
                );
            }
        }
    }

    #[test]
    fn french_horse_description_contains_cheval() {
        let mut d = Description::build(
            &["horse".to_string()],
            Language::Fr,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        d.slots[0].1 = 0; // variant 0 = "cheval"
        let text = d.render().to_lowercase();
        assert!(text.contains("cheval"), "{text}");
    }

    #[test]
    fn every_template_keyword_is_in_the_lexicon() {
        let lexicon = LexiconFile::builtin();
        for concept in DEFAULT_CONCEPTS {
            let lex = expand_lexicon(concept, &lexicon).unwrap();
            for lang in Language::ALL {
                for variant in keyword_variants(concept, lang) {
                    assert!(
                        lex.contains_keyword(variant),
                        "{concept}/{lang}: {variant} missing from lexicon"
                    );
                }
            }
        }
    }

    #[test]
    fn static_vocabulary_never_leaks_keywords() {
        let lexicon = LexiconFile::builtin();
        let statics = Description::static_vocabulary();
        for concept in DEFAULT_CONCEPTS {
            let lex = expand_lexicon(concept, &lexicon).unwrap();
            for word in &statics {
                assert!(
                    !lex.contains_keyword(word),
                    "static template word {word:?} is a {concept} keyword"
                );
            }
        }
    }

    #[test]
    fn present_concepts_are_labeled_positive() {
        let lexicon = LexiconFile::builtin();
        for seed in 0..30 {
            let present = vec![(seed % 5) as usize];
            let coin = generate_coin(1000 + seed, &present, &concepts(), 64);
            let tokens = normalize_text(&coin.text());
            let lex = expand_lexicon(DEFAULT_CONCEPTS[present[0]], &lexicon).unwrap();
            assert_eq!(
                assign_label(&tokens, &lex),
                Label::Positive,
                "seed {seed}: {}",
                coin.text()
            );
        }
    }

    #[test]
    fn glyphs_land_inside_the_disk_with_bboxes() {
        let coin = generate_coin(7, &[0, 1, 2, 3, 4], &concepts(), 128);
        for (i, bbox) in coin.bboxes.iter().enumerate() {
            let b = bbox.unwrap_or_else(|| panic!("concept {i} has no bbox"));
            assert!(b.x1 < 128 && b.y1 < 128);
            assert!(b.x1 - b.x0 >= 8, "glyph {i} too small: {b:?}");
        }
    }

    #[test]
    fn corpus_roundtrip_and_exact_positive_counts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_samples: 40,
            positive_rate: 0.25,
            image_side: 48,
            seed: 11,
            ..Default::default()
        };
        let summary = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(summary.positives_per_concept, vec![10; 5]);

        let gt = GroundTruth::load(&dir.path().join("ground_truth.tsv")).unwrap();
        for concept in DEFAULT_CONCEPTS {
            let count = gt
                .rows
                .values()
                .filter(|m| m.get(concept).map(|&(p, _)| p).unwrap_or(false))
                .count();
            assert_eq!(count, 10, "{concept}");
        }
        let manifest = Manifest::read(&dir.path().join("manifest.tsv")).unwrap();
        assert_eq!(manifest.samples.len(), 40);
        // files exist
        for s in &manifest.samples {
            assert!(dir.path().join(&s.image_path).exists());
            assert!(dir.path().join(&s.text_path).exists());
        }
    }

    #[test]
    fn noise_zero_gives_full_agreement() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_samples: 60,
            positive_rate: 0.3,
            label_noise_rate: 0.0,
            image_side: 48,
            seed: 3,
            ..Default::default()
        };
        generate_corpus(&spec, dir.path()).unwrap();
        let agreement =
            label_agreement(dir.path(), &LexiconFile::builtin(), &concepts()).unwrap();
        assert_eq!(agreement, 1.0);
    }

    #[test]
    fn noise_swaps_exactly_the_requested_fraction() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            n_samples: 100,
            positive_rate: 0.3,
            label_noise_rate: 0.1,
            image_side: 48,
            seed: 5,
            ..Default::default()
        };
        let summary = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(summary.swapped, 10);
        let agreement =
            label_agreement(dir.path(), &LexiconFile::builtin(), &concepts()).unwrap();
        assert!((agreement - 0.9).abs() < 1e-9, "agreement {agreement}");
    }
}
