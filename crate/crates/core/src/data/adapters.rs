//! On-disk dataset adapters.
//!
//! Directory conventions (paths relative to the dataset root):
//!
//! | layout     | images                                   | labels                                        | depth                    |
//! |------------|------------------------------------------|-----------------------------------------------|--------------------------|
//! | VKITTI     | `images/<id>.png`                        | `labels/<id>.png` (class colors)              | `depth/<id>.png` 16-bit cm |
//! | TOY        | `images/<id>.png`                        | `labels/<id>.png` (8-bit class ids)           | `depth/<id>.png` 16-bit cm |
//! | SYNTHIA    | `RGB/<id>.png`                           | `GT/LABELS/<id>.png` (id in first channel)    | `Depth/Depth/<id>.png` or `Depth/<id>.png` |
//! | KITTI      | `training/image_2/<id>.png` (test: `testing/`) | `training/semantic/<id>.png` (Cityscapes ids) | —                  |
//! | CITYSCAPES | `leftImg8bit/<split>/<city>/<id>_leftImg8bit.png` | `gtFine/<split>/<city>/<id>_gtFine_labelIds.png` | —          |
//!
//! VKITTI, TOY and SYNTHIA honour an optional `splits/<split>.txt` listing one
//! id per line; without it every image belongs to every split. TOY roots
//! carry a `manifest.json` naming their domain.
//!
//! Native label ids/colors map to class names through JSON remap tables
//! (shipped defaults in `data/`, overridable per dataset); names outside the
//! configured class set become the ignore index, ids missing from the table
//! are an error unless the table names a fallback.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView, ImageBuffer, Luma, Rgb};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::pairs::SampleSource;
use super::toy::{generate_toy, ToyWorldConfig, TOY_D_MAX};
use crate::error::{Error, Result};
use crate::types::{preprocess_channel, ClassSet, Domain, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Layout {
    Vkitti,
    Kitti,
    Synthia,
    Cityscapes,
    Toy,
}

impl Layout {
    /// Domain a layout plays unless overridden.
    pub fn default_domain(self) -> Domain {
        match self {
            Layout::Vkitti | Layout::Synthia | Layout::Toy => Domain::Source,
            Layout::Kitti | Layout::Cityscapes => Domain::Target,
        }
    }

    fn default_table(self) -> &'static str {
        match self {
            Layout::Vkitti => include_str!("../../data/vkitti.json"),
            Layout::Synthia => include_str!("../../data/synthia.json"),
            Layout::Kitti | Layout::Cityscapes => include_str!("../../data/cityscapes.json"),
            Layout::Toy => include_str!("../../data/toy.json"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub layout: Layout,
    pub split: Split,
    pub class_set: ClassSet,
    /// Target (height, width). CITYSCAPES defaults to half resolution.
    #[serde(default)]
    pub resize: Option<(usize, usize)>,
    /// Permit a `resize` that changes the aspect ratio.
    #[serde(default)]
    pub allow_aspect_change: bool,
    /// Overrides the layout's default domain.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Replacement remap table.
    #[serde(default)]
    pub remap: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn new(root: impl Into<PathBuf>, layout: Layout, split: Split, class_set: ClassSet) -> Self {
        DatasetSpec {
            root: root.into(),
            layout,
            split,
            class_set,
            resize: None,
            allow_aspect_change: false,
            domain: None,
            remap: None,
        }
    }

    pub fn open(&self) -> Result<Dataset> {
        Dataset::open(self)
    }

    /// Output size for a native `h`×`w` input.
    fn output_size(&self, h: usize, w: usize) -> Result<Option<(usize, usize)>> {
        match self.resize {
            Some((rh, rw)) => {
                // allow one pixel of rounding slack on either side
                let skew = (rh as f64 * w as f64 - rw as f64 * h as f64).abs();
                if !self.allow_aspect_change && skew > (h.max(w)) as f64 {
                    return Err(Error::Config(format!(
                        "resize {rh}x{rw} changes the aspect ratio of {h}x{w} inputs; set allow_aspect_change to override"
                    )));
                }
                Ok(((rh, rw) != (h, w)).then_some((rh, rw)))
            }
            None if self.layout == Layout::Cityscapes => Ok(Some((h / 2, w / 2))),
            None => Ok(None),
        }
    }
}

/// Fully loads `spec` and returns sample `index`.
pub fn load_sample(spec: &DatasetSpec, index: usize) -> Result<Sample> {
    spec.open()?.get(index)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemapEntry {
    #[serde(default)]
    id: Option<u32>,
    #[serde(default)]
    color: Option<[u8; 3]>,
    #[serde(default)]
    native: Option<String>,
    class: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RemapKey {
    Id,
    Color,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemapTable {
    key: RemapKey,
    /// `"error"`, `"ignore"` or a class name for codes missing from `entries`.
    unlisted: String,
    entries: Vec<RemapEntry>,
}

/// Native label codes → class indices for one class set.
#[derive(Debug, Clone)]
pub struct LabelRemap {
    key: RemapKey,
    map: HashMap<u32, u8>,
    /// `None`: unlisted codes are an error.
    unlisted: Option<u8>,
}

impl LabelRemap {
    fn compile(table: &RemapTable, classes: &ClassSet, origin: &str) -> Result<Self> {
        let resolve = |name: &Option<String>| -> u8 {
            name.as_deref()
                .and_then(|n| classes.index_of(n))
                .map_or(classes.ignore_index, |i| i as u8)
        };
        let mut map = HashMap::new();
        for e in &table.entries {
            let code = match (table.key, e.id, e.color) {
                (RemapKey::Id, Some(id), _) => id,
                (RemapKey::Color, _, Some(c)) => pack(c),
                _ => {
                    return Err(Error::Config(format!(
                        "remap table {origin}: entry {:?} lacks its {:?} key",
                        e.native, table.key
                    )))
                }
            };
            map.insert(code, resolve(&e.class));
        }
        let unlisted = match table.unlisted.as_str() {
            "error" => None,
            "ignore" => Some(classes.ignore_index),
            name => Some(resolve(&Some(name.to_string()))),
        };
        Ok(LabelRemap {
            key: table.key,
            map,
            unlisted,
        })
    }

    pub fn from_json(json: &str, classes: &ClassSet, origin: &str) -> Result<Self> {
        let table: RemapTable = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("remap table {origin}: {e}")))?;
        Self::compile(&table, classes, origin)
    }

    fn lookup(&self, code: u32, path: &Path) -> Result<u8> {
        match (self.map.get(&code), self.unlisted) {
            (Some(&c), _) => Ok(c),
            (None, Some(c)) => Ok(c),
            (None, None) => Err(Error::InvalidInput(format!(
                "{}: label {} is not in the remap table",
                path.display(),
                match self.key {
                    RemapKey::Id => format!("id {code}"),
                    RemapKey::Color => format!("color {:?}", unpack(code)),
                }
            ))),
        }
    }

    fn apply(&self, img: &DynamicImage, path: &Path) -> Result<Array2<u8>> {
        let (w, h) = img.dimensions();
        let codes: Vec<u32> = match (self.key, img) {
            (RemapKey::Id, DynamicImage::ImageLuma8(b)) => b.pixels().map(|p| p.0[0] as u32).collect(),
            (RemapKey::Id, DynamicImage::ImageLuma16(b)) => b.pixels().map(|p| p.0[0] as u32).collect(),
            (RemapKey::Id, DynamicImage::ImageRgb16(b)) => b.pixels().map(|p| p.0[0] as u32).collect(),
            (RemapKey::Id, DynamicImage::ImageRgba16(b)) => b.pixels().map(|p| p.0[0] as u32).collect(),
            (RemapKey::Id, other) => other.to_rgb8().pixels().map(|p| p.0[0] as u32).collect(),
            (RemapKey::Color, other) => other.to_rgb8().pixels().map(|p| pack(p.0)).collect(),
        };
        let mut cache: HashMap<u32, u8> = HashMap::new();
        let mut out = Vec::with_capacity(codes.len());
        for code in codes {
            let c = match cache.get(&code) {
                Some(&c) => c,
                None => {
                    let c = self.lookup(code, path)?;
                    cache.insert(code, c);
                    c
                }
            };
            out.push(c);
        }
        Ok(Array2::from_shape_vec((h as usize, w as usize), out).expect("h*w codes"))
    }
}

fn pack(c: [u8; 3]) -> u32 {
    (c[0] as u32) << 16 | (c[1] as u32) << 8 | c[2] as u32
}

fn unpack(v: u32) -> [u8; 3] {
    [(v >> 16) as u8, (v >> 8) as u8, v as u8]
}

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    image: PathBuf,
    labels: Option<PathBuf>,
    depth: Option<PathBuf>,
}

/// Manifest written next to a serialized toy split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyManifest {
    pub domain: Domain,
    /// Labels exist on disk but may only feed evaluation.
    pub eval_only_labels: bool,
    pub config: ToyWorldConfig,
    pub class_names: Vec<String>,
    pub d_max: f32,
    pub n_scenes: usize,
}

/// An opened dataset: file index plus decoding rules.
#[derive(Debug, Clone)]
pub struct Dataset {
    spec: DatasetSpec,
    domain: Domain,
    remap: LabelRemap,
    entries: Vec<Entry>,
}

impl Dataset {
    pub fn open(spec: &DatasetSpec) -> Result<Self> {
        spec.class_set.validate()?;
        if !spec.root.is_dir() {
            return Err(Error::io(
                &spec.root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root does not exist"),
            ));
        }
        let mut domain = spec.domain.unwrap_or(spec.layout.default_domain());
        if spec.layout == Layout::Toy && spec.domain.is_none() {
            let path = spec.root.join("manifest.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let m: ToyManifest = serde_json::from_str(&text).map_err(|e| Error::Decode {
                path: path.clone(),
                message: e.to_string(),
            })?;
            domain = m.domain;
        }
        let remap = match &spec.remap {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                LabelRemap::from_json(&text, &spec.class_set, &path.display().to_string())?
            }
            None => LabelRemap::from_json(spec.layout.default_table(), &spec.class_set, "(built-in)")?,
        };
        let entries = index(spec, domain)?;
        Ok(Dataset {
            spec: spec.clone(),
            domain,
            remap,
            entries,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Decodes every sample into memory.
    pub fn load_all(&self) -> Result<Vec<Sample>> {
        (0..self.entries.len()).map(|i| self.get(i)).collect()
    }

    fn load(&self, e: &Entry) -> Result<Sample> {
        let img = open_image(&e.image)?;
        let (w, h) = img.dimensions();
        let (h, w) = (h as usize, w as usize);
        let size = self.spec.output_size(h, w)?;
        let rgb = img.to_rgb8();
        let rgb = match size {
            Some((rh, rw)) => image::imageops::resize(&rgb, rw as u32, rh as u32, FilterType::Triangle),
            None => rgb,
        };
        let (oh, ow) = (rgb.height() as usize, rgb.width() as usize);
        let image = Array3::from_shape_vec((oh, ow, 3), rgb.into_raw().into_iter().map(preprocess_channel).collect())
            .expect("rgb buffer is h*w*3");

        let labels = match &e.labels {
            Some(p) => {
                let raw = open_image(p)?;
                check_dims(&raw, h, w, p)?;
                let l = self.remap.apply(&raw, p)?;
                Some(match size {
                    Some((rh, rw)) => resize_nearest(&l, rh, rw),
                    None => l,
                })
            }
            None => None,
        };
        let depth = match (&e.depth, self.domain) {
            (Some(p), Domain::Source) => {
                let raw = open_image(p)?;
                check_dims(&raw, h, w, p)?;
                let d = decode_depth(self.spec.layout, &raw, p)?;
                Some(match size {
                    Some((rh, rw)) => resize_nearest(&d, rh, rw),
                    None => d,
                })
            }
            _ => None,
        };
        Sample::new(e.id.clone(), self.domain, image, depth, labels)
    }
}

impl SampleSource for Dataset {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        let e = self.entries.get(index).ok_or_else(|| {
            Error::InvalidInput(format!("index {index} out of range for {} samples", self.entries.len()))
        })?;
        self.load(e)
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn check_dims(img: &DynamicImage, h: usize, w: usize, path: &Path) -> Result<()> {
    let (iw, ih) = img.dimensions();
    if (ih as usize, iw as usize) != (h, w) {
        return Err(Error::shape(path.display().to_string(), format!("{h}x{w}"), format!("{ih}x{iw}")));
    }
    Ok(())
}

/// Depth in meters.
///
/// 16-bit single-channel maps hold centimeters (VKITTI convention, also
/// used by the toy writer). SYNTHIA 8-bit RGB maps pack a 24-bit integer
/// that spans 0..5000 m; 16-bit multi-channel SYNTHIA maps hold
/// centimeters in the first channel.
fn decode_depth(layout: Layout, img: &DynamicImage, path: &Path) -> Result<Array2<f32>> {
    let (w, h) = img.dimensions();
    let shape = (h as usize, w as usize);
    let v: Vec<f32> = match (layout, img) {
        (_, DynamicImage::ImageLuma16(b)) => b.pixels().map(|p| centimeters(p.0[0])).collect(),
        (Layout::Synthia, DynamicImage::ImageRgb16(b)) => b.pixels().map(|p| centimeters(p.0[0])).collect(),
        (Layout::Synthia, DynamicImage::ImageRgba16(b)) => b.pixels().map(|p| centimeters(p.0[0])).collect(),
        (Layout::Synthia, DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_)) => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|c| c as f64);
                (5000.0 * (r + g * 256.0 + b * 65536.0) / (16_777_216.0 - 1.0)) as f32
            })
            .collect(),
        (_, other) => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("unsupported depth encoding {:?} for {layout:?}", other.color()),
            })
        }
    };
    Ok(Array2::from_shape_vec(shape, v).expect("h*w depth values"))
}

#[inline]
fn centimeters(v: u16) -> f32 {
    (v as f64 / 100.0) as f32
}

fn resize_nearest<T: Copy>(x: &Array2<T>, h: usize, w: usize) -> Array2<T> {
    let (ih, iw) = x.dim();
    Array2::from_shape_fn((h, w), |(y, c)| {
        let sy = ((y as f64 + 0.5) * ih as f64 / h as f64) as usize;
        let sx = ((c as f64 + 0.5) * iw as f64 / w as f64) as usize;
        x[[sy.min(ih - 1), sx.min(iw - 1)]]
    })
}

fn list_png(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for ent in rd {
        let p = ent.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "png") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Ids listed in `splits/<split>.txt`, if present.
fn split_ids(root: &Path, split: Split) -> Result<Option<Vec<String>>> {
    let path = root.join("splits").join(format!("{}.txt", split.as_str()));
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
    ))
}

fn flat_layout(
    spec: &DatasetSpec,
    domain: Domain,
    image_dir: &Path,
    label_dir: PathBuf,
    depth_dir: Option<PathBuf>,
) -> Result<Vec<Entry>> {
    let ids = match split_ids(&spec.root, spec.split)? {
        Some(ids) => ids,
        None => list_png(image_dir)?.iter().map(|p| stem(p)).collect(),
    };
    let need = |p: PathBuf| -> Result<PathBuf> {
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::io(&p, std::io::Error::new(std::io::ErrorKind::NotFound, "missing file")))
        }
    };
    ids.into_iter()
        .map(|id| {
            let image = need(image_dir.join(format!("{id}.png")))?;
            let lp = label_dir.join(format!("{id}.png"));
            // source samples must be fully annotated; target labels are optional
            let labels = match domain {
                Domain::Source => Some(need(lp)?),
                Domain::Target => lp.exists().then_some(lp),
            };
            let depth = match (domain, &depth_dir) {
                (Domain::Source, Some(d)) => Some(need(d.join(format!("{id}.png")))?),
                _ => None,
            };
            Ok(Entry {
                id,
                image,
                labels,
                depth,
            })
        })
        .collect()
}

fn index(spec: &DatasetSpec, domain: Domain) -> Result<Vec<Entry>> {
    let root = &spec.root;
    match spec.layout {
        Layout::Vkitti | Layout::Toy => flat_layout(
            spec,
            domain,
            &root.join("images"),
            root.join("labels"),
            Some(root.join("depth")),
        ),
        Layout::Synthia => {
            let depth = [root.join("Depth").join("Depth"), root.join("Depth")]
                .into_iter()
                .find(|d| d.is_dir())
                .unwrap_or_else(|| root.join("Depth"));
            flat_layout(spec, domain, &root.join("RGB"), root.join("GT").join("LABELS"), Some(depth))
        }
        Layout::Kitti => {
            let base = root.join(if spec.split == Split::Test { "testing" } else { "training" });
            flat_layout(spec, domain, &base.join("image_2"), base.join("semantic"), None)
        }
        Layout::Cityscapes => {
            let img_root = root.join("leftImg8bit").join(spec.split.as_str());
            let gt_root = root.join("gtFine").join(spec.split.as_str());
            let mut cities: Vec<PathBuf> = fs::read_dir(&img_root)
                .map_err(|e| Error::io(&img_root, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir())
                .collect();
            cities.sort();
            let mut out = Vec::new();
            for city in cities {
                for image in list_png(&city)? {
                    let s = stem(&image);
                    let Some(id) = s.strip_suffix("_leftImg8bit") else { continue };
                    let lp = gt_root.join(city.file_name().expect("dir name")).join(format!("{id}_gtFine_labelIds.png"));
                    out.push(Entry {
                        id: id.to_string(),
                        image,
                        labels: lp.exists().then_some(lp),
                        depth: None,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Renders a toy split and writes it in the TOY on-disk layout.
pub fn write_toy_dataset(root: &Path, config: &ToyWorldConfig, domain: Domain) -> Result<ToyManifest> {
    let samples = generate_toy(config, domain)?;
    for dir in ["images", "labels", "depth"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for s in &samples {
        write_sample(root, s)?;
    }
    let manifest = ToyManifest {
        domain,
        eval_only_labels: domain == Domain::Target,
        config: *config,
        class_names: ClassSet::toy().names,
        d_max: TOY_D_MAX,
        n_scenes: samples.len(),
    };
    let path = root.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Writes image (8-bit RGB), labels (8-bit ids) and depth (16-bit cm) PNGs.
pub fn write_sample(root: &Path, s: &Sample) -> Result<()> {
    let (h, w) = (s.height() as u32, s.width() as u32);
    let rgb: Vec<u8> = s.image.iter().map(|&v| crate::types::deprocess_channel(v)).collect();
    let img = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, rgb).expect("h*w*3 bytes");
    save(&img, &root.join("images").join(format!("{}.png", s.id)))?;
    if let Some(l) = &s.labels {
        let buf = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, l.iter().copied().collect::<Vec<u8>>()).expect("h*w ids");
        save(&buf, &root.join("labels").join(format!("{}.png", s.id)))?;
    }
    if let Some(d) = &s.depth {
        let cm: Vec<u16> = d.iter().map(|&m| (m as f64 * 100.0).round().clamp(0.0, 65535.0) as u16).collect();
        let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, cm).expect("h*w depths");
        save(&buf, &root.join("depth").join(format!("{}.png", s.id)))?;
    }
    Ok(())
}

fn save<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
