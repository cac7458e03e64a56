//! Incomplete-view protocols: sampling vectors over the full view set,
//! sinogram reduction/zero-filling, masks, and the settings that generate
//! them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::physics::{ScanGeometry, Sinogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioTag {
    Svct,
    Lact,
    Hybrid,
    Custom,
}

impl ScenarioTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::Svct => "svct",
            ScenarioTag::Lact => "lact",
            ScenarioTag::Hybrid => "hybrid",
            ScenarioTag::Custom => "custom",
        }
    }
}

impl FromStr for ScenarioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "svct" => ScenarioTag::Svct,
            "lact" => ScenarioTag::Lact,
            "hybrid" => ScenarioTag::Hybrid,
            "custom" => ScenarioTag::Custom,
            _ => return Err(Error::Invalid(format!("unknown scenario {s:?}"))),
        })
    }
}

/// Binary indicator over the full view set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingVector {
    bits: Vec<bool>,
    pub tag: ScenarioTag,
    /// Free-form description of the generating parameters.
    pub params: String,
}

impl SamplingVector {
    pub fn new(bits: Vec<bool>, tag: ScenarioTag, params: impl Into<String>) -> Result<Self> {
        if !bits.iter().any(|&b| b) {
            return Err(Error::Invalid("sampling vector selects no views".into()));
        }
        Ok(SamplingVector {
            bits,
            tag,
            params: params.into(),
        })
    }

    pub fn full(n_full: usize) -> Self {
        SamplingVector {
            bits: vec![true; n_full],
            tag: ScenarioTag::Svct,
            params: format!("svct:{n_full}"),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// `[0, 1]` values as a prompter input.
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Bounds of the single run of ones, if the ones are contiguous.
    pub fn contiguous_run(&self) -> Option<(usize, usize)> {
        let idx = self.indices();
        let (lo, hi) = (idx[0], idx[idx.len() - 1] + 1);
        (hi - lo == idx.len()).then_some((lo, hi))
    }

    pub fn check_geometry(&self, geo: &ScanGeometry) -> Result<()> {
        if self.len() != geo.n_full_views {
            return Err(Error::Geometry(format!(
                "sampling vector has {} entries, geometry has {} views",
                self.len(),
                geo.n_full_views
            )));
        }
        Ok(())
    }

    /// Run-length text: `v1;len=N;tag=..;params=..;runs=<bit>x<count>,...`.
    pub fn to_rle(&self) -> String {
        let mut runs: Vec<(bool, usize)> = Vec::new();
        for &b in &self.bits {
            match runs.last_mut() {
                Some((v, n)) if *v == b => *n += 1,
                _ => runs.push((b, 1)),
            }
        }
        let runs: Vec<String> = runs.iter().map(|(b, n)| format!("{}x{n}", u8::from(*b))).collect();
        format!(
            "v1;len={};tag={};params={};runs={}",
            self.len(),
            self.tag.as_str(),
            self.params,
            runs.join(",")
        )
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("sampling vector text: {m}"));
        let mut fields = text.trim().split(';');
        if fields.next() != Some("v1") {
            return Err(bad("missing v1 prefix"));
        }
        let (mut len, mut tag, mut params, mut bits) = (None, ScenarioTag::Custom, String::new(), None);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad("field without '='"))?;
            match k {
                "len" => len = Some(v.parse::<usize>().map_err(|_| bad("bad len"))?),
                "tag" => tag = v.parse()?,
                "params" => params = v.to_string(),
                "runs" => {
                    let mut out = Vec::new();
                    for run in v.split(',').filter(|r| !r.is_empty()) {
                        let (b, n) = run.split_once('x').ok_or_else(|| bad("bad run"))?;
                        let n: usize = n.parse().map_err(|_| bad("bad run length"))?;
                        let b = match b {
                            "0" => false,
                            "1" => true,
                            _ => return Err(bad("run bit must be 0 or 1")),
                        };
                        out.extend(std::iter::repeat_n(b, n));
                    }
                    bits = Some(out);
                }
                _ => return Err(bad("unknown field")),
            }
        }
        let bits = bits.ok_or_else(|| bad("missing runs"))?;
        if len != Some(bits.len()) {
            return Err(bad("run lengths do not add up to len"));
        }
        SamplingVector::new(bits, tag, params)
    }
}

/// `n_view` equidistant views: ones at `floor(i * n_full / n_view)`.
pub fn svct_vector(n_view: usize, n_full: usize) -> Result<SamplingVector> {
    if n_view == 0 || n_view > n_full {
        return Err(Error::Invalid(format!("cannot pick {n_view} of {n_full} views")));
    }
    let mut bits = vec![false; n_full];
    for i in 0..n_view {
        bits[i * n_full / n_view] = true;
    }
    SamplingVector::new(bits, ScenarioTag::Svct, format!("svct:{n_view}"))
}

fn angle_index(deg: f64, n_full: usize, span: f64) -> usize {
    // tolerate float noise at exact view boundaries
    (deg / span * n_full as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Contiguous views with angles in `[start, end)` degrees.
pub fn lact_vector(start_deg: f64, end_deg: f64, n_full: usize, span_deg: f64) -> Result<SamplingVector> {
    if !(0.0 <= start_deg && start_deg < end_deg && end_deg <= span_deg) {
        return Err(Error::Invalid(format!(
            "angular range [{start_deg}, {end_deg}) is empty or outside [0, {span_deg}]"
        )));
    }
    let lo = angle_index(start_deg, n_full, span_deg);
    let hi = angle_index(end_deg, n_full, span_deg).min(n_full);
    if lo >= hi {
        return Err(Error::Invalid(format!("angular range [{start_deg}, {end_deg}) holds no view")));
    }
    let mut bits = vec![false; n_full];
    bits[lo..hi].iter_mut().for_each(|b| *b = true);
    SamplingVector::new(bits, ScenarioTag::Lact, lact_label(start_deg, end_deg))
}

fn lact_label(start: f64, end: f64) -> String {
    if start == 0.0 {
        format!("lact:{end}")
    } else {
        format!("lact:{start}-{end}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybridMode {
    Union,
    Intersect,
    /// Equidistant views inside the contiguous run of the second vector.
    SvctWithinLact(usize),
}

pub fn hybrid_vector(a: &SamplingVector, b: &SamplingVector, mode: HybridMode) -> Result<SamplingVector> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("vector lengths differ: {} vs {}", a.len(), b.len())));
    }
    let (bits, params) = match mode {
        HybridMode::Union => (
            a.bits.iter().zip(&b.bits).map(|(x, y)| *x || *y).collect(),
            format!("union({},{})", a.params, b.params),
        ),
        HybridMode::Intersect => (
            a.bits.iter().zip(&b.bits).map(|(x, y)| *x && *y).collect(),
            format!("intersect({},{})", a.params, b.params),
        ),
        HybridMode::SvctWithinLact(n_view) => {
            let (lo, hi) = b
                .contiguous_run()
                .ok_or_else(|| Error::Invalid("second vector is not a contiguous range".into()))?;
            let span = hi - lo;
            if n_view == 0 || n_view > span {
                return Err(Error::Invalid(format!("cannot pick {n_view} views inside a run of {span}")));
            }
            let mut bits = vec![false; a.len()];
            for i in 0..n_view {
                bits[lo + i * span / n_view] = true;
            }
            (bits, format!("svct_within({n_view},{})", b.params))
        }
    };
    SamplingVector::new(bits, ScenarioTag::Hybrid, params)
        .map_err(|_| Error::Invalid("hybrid combination selects no views".into()))
}

/// Keeps the rows of a full-view sinogram selected by `v`.
pub fn reduce_sinogram(full: &Sinogram, v: &SamplingVector) -> Result<Sinogram> {
    if full.rows() != v.len() || full.view_indices.iter().enumerate().any(|(i, &k)| i != k) {
        return Err(Error::Shape(format!(
            "sampling vector of length {} needs a full sinogram, got {} rows",
            v.len(),
            full.rows()
        )));
    }
    let idx = v.indices();
    let data = idx.iter().flat_map(|&i| full.row(i).iter().copied()).collect();
    Sinogram::new(full.n_detectors, idx, data)
}

/// Places reduced rows back at their view positions, zeros elsewhere.
pub fn zero_fill(reduced: &Sinogram, n_full: usize) -> Result<Sinogram> {
    if reduced.view_indices.last().is_some_and(|&l| l >= n_full) {
        return Err(Error::Shape("view index beyond the full view count".into()));
    }
    let nd = reduced.n_detectors;
    let mut data = vec![0.0; n_full * nd];
    for (r, &v) in reduced.view_indices.iter().enumerate() {
        data[v * nd..(v + 1) * nd].copy_from_slice(reduced.row(r));
    }
    Sinogram::new(nd, (0..n_full).collect(), data)
}

/// `diag(v) * ones(n_full, n_detectors)`, row-major.
pub fn mask_matrix(v: &SamplingVector, n_detectors: usize) -> Vec<f64> {
    v.bits
        .iter()
        .flat_map(|&b| std::iter::repeat_n(if b { 1.0 } else { 0.0 }, n_detectors))
        .collect()
}

/// A protocol that generates a sampling vector for a geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Svct { n_view: usize },
    Lact { start_deg: f64, end_deg: f64 },
    Union { end_deg: f64, n_view: usize },
    Intersect { end_deg: f64, n_view: usize },
    SvctWithinLact { end_deg: f64, n_view: usize },
}

impl Setting {
    pub fn svct(n_view: usize) -> Self {
        Setting::Svct { n_view }
    }

    pub fn lact(end_deg: f64) -> Self {
        Setting::Lact { start_deg: 0.0, end_deg }
    }

    pub fn scenario(&self) -> ScenarioTag {
        match self {
            Setting::Svct { .. } => ScenarioTag::Svct,
            Setting::Lact { .. } => ScenarioTag::Lact,
            _ => ScenarioTag::Hybrid,
        }
    }

    /// The scalar setting value: view count or end angle.
    pub fn value(&self) -> f64 {
        match *self {
            Setting::Svct { n_view } => n_view as f64,
            Setting::Lact { end_deg, .. } => end_deg,
            Setting::Union { n_view, .. } | Setting::Intersect { n_view, .. } | Setting::SvctWithinLact { n_view, .. } => {
                n_view as f64
            }
        }
    }

    pub fn vector(&self, geo: &ScanGeometry) -> Result<SamplingVector> {
        let n = geo.n_full_views;
        let span = geo.angular_span;
        let mut v = match *self {
            Setting::Svct { n_view } => svct_vector(n_view, n)?,
            Setting::Lact { start_deg, end_deg } => lact_vector(start_deg, end_deg, n, span)?,
            Setting::Union { end_deg, n_view } => {
                hybrid_vector(&lact_vector(0.0, end_deg, n, span)?, &svct_vector(n_view, n)?, HybridMode::Union)?
            }
            Setting::Intersect { end_deg, n_view } => {
                hybrid_vector(&lact_vector(0.0, end_deg, n, span)?, &svct_vector(n_view, n)?, HybridMode::Intersect)?
            }
            Setting::SvctWithinLact { end_deg, n_view } => {
                let l = lact_vector(0.0, end_deg, n, span)?;
                hybrid_vector(&l, &l, HybridMode::SvctWithinLact(n_view))?
            }
        };
        v.params = self.to_string();
        Ok(v)
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Setting::Svct { n_view } => write!(f, "svct:{n_view}"),
            Setting::Lact { start_deg, end_deg } => f.write_str(&lact_label(start_deg, end_deg)),
            Setting::Union { end_deg, n_view } => write!(f, "union:{end_deg}+{n_view}"),
            Setting::Intersect { end_deg, n_view } => write!(f, "intersect:{end_deg}+{n_view}"),
            Setting::SvctWithinLact { end_deg, n_view } => write!(f, "within:{end_deg}+{n_view}"),
        }
    }
}

impl FromStr for Setting {
    type Err = Error;

    /// Accepts `svct:72`, `lact:150`, `lact:30-150`, `union:150+18`,
    /// `intersect:150+18`, `within:150+18`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unrecognized setting {s:?}"));
        let (kind, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let count = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let pair = |t: &str| -> Result<(f64, usize)> {
            let (a, b) = t.split_once('+').ok_or_else(bad)?;
            Ok((num(a)?, count(b)?))
        };
        Ok(match kind {
            "svct" => Setting::Svct { n_view: count(arg)? },
            "lact" => match arg.split_once('-') {
                Some((a, b)) => Setting::Lact {
                    start_deg: num(a)?,
                    end_deg: num(b)?,
                },
                None => Setting::lact(num(arg)?),
            },
            "union" => {
                let (end_deg, n_view) = pair(arg)?;
                Setting::Union { end_deg, n_view }
            }
            "intersect" => {
                let (end_deg, n_view) = pair(arg)?;
                Setting::Intersect { end_deg, n_view }
            }
            "within" => {
                let (end_deg, n_view) = pair(arg)?;
                Setting::SvctWithinLact { end_deg, n_view }
            }
            _ => return Err(bad()),
        })
    }
}
