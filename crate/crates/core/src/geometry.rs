//! Landmark parsing, eye-based roll compensation and face ROI cropping.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{to_u8, GrayImage};

/// A point in image coordinates (x to the right, y downward).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        Point2::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// Describes a landmark markup: how many points and which ones outline each eye.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkScheme {
    pub name: String,
    /// Expected point count, or `None` to accept any count.
    pub n_points: Option<usize>,
    pub left_eye: Vec<usize>,
    pub right_eye: Vec<usize>,
}

impl LandmarkScheme {
    /// FG-NET 68-point markup: points 27..=30 outline the first eye with its
    /// pupil at 31, points 32..=35 outline the second with its pupil at 36.
    pub fn fgnet68() -> Self {
        LandmarkScheme {
            name: "fgnet68".into(),
            n_points: Some(68),
            left_eye: (27..=31).collect(),
            right_eye: (32..=36).collect(),
        }
    }

    /// 78-point markup used for PAL annotations. The first 68 points follow
    /// the FG-NET layout, so the eye groups are shared.
    pub fn pal78() -> Self {
        LandmarkScheme {
            name: "pal78".into(),
            n_points: Some(78),
            ..Self::fgnet68()
        }
    }

    /// Look up a built-in scheme by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fgnet68" => Some(Self::fgnet68()),
            "pal78" => Some(Self::pal78()),
            _ => None,
        }
    }

    /// Parse a scheme from `key = value` (or `key: value`) lines with keys
    /// `name`, `n_points`, `left_eye_indices` and `right_eye_indices`.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut n_points = None;
        let mut left = None;
        let mut right = None;
        let err = |line: usize, msg: String| Error::Parse {
            what: "landmark scheme",
            line,
            msg,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let indices = |v: &str| -> Result<Vec<usize>> {
                v.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| err(line_no, format!("bad index `{}`", t.trim())))
                    })
                    .collect()
            };
            match key {
                "name" => name = value.to_string(),
                "n_points" => {
                    n_points = Some(
                        value
                            .parse::<usize>()
                            .map_err(|_| err(line_no, format!("bad n_points `{value}`")))?,
                    )
                }
                "left_eye_indices" => left = Some(indices(value)?),
                "right_eye_indices" => right = Some(indices(value)?),
                other => return Err(err(line_no, format!("unknown key `{other}`"))),
            }
        }
        let scheme = LandmarkScheme {
            name,
            n_points,
            left_eye: left.ok_or_else(|| Error::invalid("scheme lacks left_eye_indices"))?,
            right_eye: right.ok_or_else(|| Error::invalid("scheme lacks right_eye_indices"))?,
        };
        if let Some(n) = scheme.n_points {
            scheme.check_groups(n)?;
        }
        Ok(scheme)
    }

    fn check_groups(&self, n: usize) -> Result<()> {
        if self.left_eye.is_empty() || self.right_eye.is_empty() {
            return Err(Error::invalid("eye index groups must be nonempty"));
        }
        if let Some(&i) = self.left_eye.iter().chain(&self.right_eye).find(|&&i| i >= n) {
            return Err(Error::invalid(format!(
                "eye index {i} out of range for {n} points"
            )));
        }
        if self.left_eye.iter().any(|i| self.right_eye.contains(i)) {
            return Err(Error::invalid("eye index groups overlap"));
        }
        Ok(())
    }
}

/// Ordered facial landmarks together with their markup scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    scheme: LandmarkScheme,
    points: Vec<Point2>,
}

impl LandmarkSet {
    pub fn new(scheme: LandmarkScheme, points: Vec<Point2>) -> Result<Self> {
        if let Some(n) = scheme.n_points {
            if n != points.len() {
                return Err(Error::invalid(format!(
                    "wrong point count: scheme `{}` expects {n}, found {}",
                    scheme.name,
                    points.len()
                )));
            }
        }
        scheme.check_groups(points.len())?;
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(LandmarkSet { scheme, points })
    }

    pub fn scheme(&self) -> &LandmarkScheme {
        &self.scheme
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    /// Apply `f` to every point, keeping the scheme.
    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> LandmarkSet {
        LandmarkSet {
            scheme: self.scheme.clone(),
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Parse a points file:
///
/// ```text
/// version: 1
/// n_points: 3
/// {
/// 1.0 2.0
/// 3 4
/// 5 6
/// }
/// ```
///
/// Whitespace is free-form inside the braces, and parentheses or commas
/// around coordinates are ignored.
pub fn parse_landmark_file(bytes: &[u8], scheme: &LandmarkScheme) -> Result<LandmarkSet> {
    let err = |line: usize, msg: String| Error::Parse {
        what: "landmark file",
        line,
        msg,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| err(1, format!("not valid UTF-8: {e}")))?;

    let mut declared: Option<usize> = None;
    let mut coords: Vec<f64> = Vec::new();
    let mut in_body = false;
    let mut closed_at: Option<usize> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let mut line = raw.trim();
        if closed_at.is_some() {
            if !line.is_empty() {
                return Err(err(line_no, "content after closing `}`".into()));
            }
            continue;
        }
        if !in_body {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('{') {
                if declared.is_none() {
                    return Err(err(line_no, "malformed header: missing `n_points`".into()));
                }
                in_body = true;
                line = rest.trim();
            } else {
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| err(line_no, format!("malformed header line `{line}`")))?;
                let value = value.trim();
                match key.trim() {
                    "n_points" => {
                        declared = Some(value.parse().map_err(|_| {
                            err(line_no, format!("malformed header: bad n_points `{value}`"))
                        })?)
                    }
                    "version" => {
                        value.parse::<u32>().map_err(|_| {
                            err(line_no, format!("malformed header: bad version `{value}`"))
                        })?;
                    }
                    other => {
                        return Err(err(line_no, format!("malformed header: unknown key `{other}`")))
                    }
                }
                continue;
            }
        }
        let (body, closes) = match line.find('}') {
            Some(pos) => {
                if !line[pos + 1..].trim().is_empty() {
                    return Err(err(line_no, "content after closing `}`".into()));
                }
                (&line[..pos], true)
            }
            None => (line, false),
        };
        for tok in body
            .split(|c: char| c.is_whitespace() || matches!(c, '(' | ')' | ','))
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(line_no, format!("non-numeric coordinate `{tok}`")))?;
            coords.push(v);
        }
        if closes {
            closed_at = Some(line_no);
        }
    }

    let declared = declared.ok_or_else(|| err(last_line.max(1), "malformed header: missing `n_points`".into()))?;
    if !in_body {
        return Err(err(last_line.max(1), "malformed header: missing `{`".into()));
    }
    let close_line = closed_at.ok_or_else(|| err(last_line, "missing closing `}`".into()))?;
    if coords.len() % 2 != 0 {
        return Err(err(close_line, "odd number of coordinates".into()));
    }
    let found = coords.len() / 2;
    if found != declared {
        return Err(err(
            close_line,
            format!("wrong point count: header declares {declared}, found {found}"),
        ));
    }
    if let Some(n) = scheme.n_points {
        if n != declared {
            return Err(err(
                close_line,
                format!("wrong point count: scheme `{}` expects {n}, file has {declared}", scheme.name),
            ));
        }
    }
    let points = coords.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect();
    LandmarkSet::new(scheme.clone(), points).map_err(|e| err(close_line, e.to_string()))
}

/// Serialize landmarks in the points-file format (shortest round-trip decimals).
pub fn write_landmark_file(lms: &LandmarkSet) -> String {
    let mut out = format!("version: 1\nn_points: {}\n{{\n", lms.points.len());
    for p in &lms.points {
        out.push_str(&format!("{} {}\n", p.x, p.y));
    }
    out.push_str("}\n");
    out
}

fn mean_of(points: &[Point2], indices: &[usize]) -> Result<Point2> {
    if indices.is_empty() {
        return Err(Error::invalid("empty eye index group"));
    }
    let (sx, sy) = indices.iter().fold((0.0, 0.0), |(sx, sy), &i| {
        (sx + points[i].x, sy + points[i].y)
    });
    let n = indices.len() as f64;
    Ok(Point2::new(sx / n, sy / n))
}

/// Eye centers as `(left, right)`, each the mean of its index group.
///
/// If the groups come out mirrored (right center left of the left one) they
/// are swapped and a warning is logged.
pub fn eye_centers(lms: &LandmarkSet) -> Result<(Point2, Point2)> {
    let left = mean_of(&lms.points, &lms.scheme.left_eye)?;
    let right = mean_of(&lms.points, &lms.scheme.right_eye)?;
    if right.x < left.x {
        log::warn!(
            "eye groups of scheme `{}` are mirrored (left x {:.2} > right x {:.2}); swapping",
            lms.scheme.name,
            left.x,
            right.x
        );
        Ok((right, left))
    } else {
        Ok((left, right))
    }
}

/// Roll angle of the eye line, `atan2(R_y - L_y, R_x - L_x)`.
pub fn rotation_angle(left: Point2, right: Point2) -> Result<f64> {
    if left == right {
        return Err(Error::Degenerate("coincident eye centers".into()));
    }
    Ok((right.y - left.y).atan2(right.x - left.x))
}

/// Rotate `p` about `center` by `theta`:
/// `x' = C_x + (x - C_x) cos θ - (y - C_y) sin θ`,
/// `y' = C_y + (x - C_x) sin θ + (y - C_y) cos θ`.
pub fn rotate_point(p: Point2, center: Point2, theta: f64) -> Point2 {
    let (s, c) = theta.sin_cos();
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    Point2::new(center.x + dx * c - dy * s, center.y + dx * s + dy * c)
}

/// Geometric center of the pixel grid.
pub fn image_center(img: &GrayImage) -> Point2 {
    Point2::new(
        (img.width() as f64 - 1.0) / 2.0,
        (img.height() as f64 - 1.0) / 2.0,
    )
}

/// Resample `img` so that content at `p` moves to `rotate_point(p, center, theta)`.
/// Bilinear, inverse-mapped, zero outside the source.
pub fn rotate_image(img: &GrayImage, center: Point2, theta: f64) -> GrayImage {
    if theta == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let src = rotate_point(Point2::new(x as f64, y as f64), center, -theta);
            out.set(x, y, to_u8(img.sample_bilinear(src.x, src.y)));
        }
    }
    out
}

/// Level the eyes by rotating the image and all landmarks about the image center.
///
/// Returns the compensated image, transformed landmarks, and the measured
/// roll `θ` (the image is rotated by `-θ`).
pub fn align_face(img: &GrayImage, lms: &LandmarkSet) -> Result<(GrayImage, LandmarkSet, f64)> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Degenerate("zero-area image".into()));
    }
    let (left, right) = eye_centers(lms)?;
    let theta = rotation_angle(left, right)?;
    let center = image_center(img);
    let aligned = rotate_image(img, center, -theta);
    let moved = lms.map(|p| rotate_point(p, center, -theta));
    Ok((aligned, moved, theta))
}

/// Distance between the (aligned) eye centers.
pub fn inter_eye_distance(left: Point2, right: Point2) -> Result<f64> {
    let l = left.distance(&right);
    if l == 0.0 {
        return Err(Error::Degenerate("zero inter-eye distance".into()));
    }
    Ok(l)
}

/// Face ROI proportions relative to the inter-eye distance `l`: the box spans
/// `k1·l` above the eye line, `k3·l` below it and `k2·l` to each side of the
/// eye midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiRatios {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for RoiRatios {
    fn default() -> Self {
        RoiRatios {
            k1: 0.35,
            k2: 1.0,
            k3: 1.75,
        }
    }
}

impl RoiRatios {
    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.k3].iter().all(|k| k.is_finite() && *k > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("ROI ratios must be positive: {self:?}")))
        }
    }
}

/// Output raster size every face ROI is resampled to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanonicalSize {
    pub width: usize,
    pub height: usize,
}

impl Default for CanonicalSize {
    /// 120x126 keeps the 2 : 2.1 aspect of the default ROI ratios.
    fn default() -> Self {
        CanonicalSize {
            width: 120,
            height: 126,
        }
    }
}

impl fmt::Display for CanonicalSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl CanonicalSize {
    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::invalid(format!("canonical size {self} is below 3x3")));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiRect {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl RoiRect {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

pub fn roi_rect_from_ratios(eye_mid: Point2, l: f64, r: &RoiRatios) -> RoiRect {
    RoiRect {
        left: eye_mid.x - r.k2 * l,
        right: eye_mid.x + r.k2 * l,
        top: eye_mid.y - r.k1 * l,
        bottom: eye_mid.y + r.k3 * l,
    }
}

/// Resample `rect` onto a `size` raster. Corners of the rectangle map to the
/// corner pixels; samples outside the source read as 0.
pub fn resample_rect(img: &GrayImage, rect: &RoiRect, size: CanonicalSize) -> Result<GrayImage> {
    size.validate()?;
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(Error::Degenerate(format!("zero-area ROI {rect:?}")));
    }
    let max_x = img.width() as f64 - 1.0;
    let max_y = img.height() as f64 - 1.0;
    if rect.right < 0.0 || rect.bottom < 0.0 || rect.left > max_x || rect.top > max_y {
        return Err(Error::Degenerate(format!("ROI {rect:?} lies outside the image")));
    }
    let sx = rect.width() / (size.width - 1) as f64;
    let sy = rect.height() / (size.height - 1) as f64;
    GrayImage::from_fn(size.width, size.height, |i, j| {
        to_u8(img.sample_bilinear(rect.left + i as f64 * sx, rect.top + j as f64 * sy))
    })
}

/// Crop the eye-distance-relative ROI and resample it to `size`.
pub fn crop_roi_ratios(
    img: &GrayImage,
    eye_mid: Point2,
    l: f64,
    ratios: &RoiRatios,
    size: CanonicalSize,
) -> Result<GrayImage> {
    if !(l > 0.0) {
        return Err(Error::Degenerate(format!("inter-eye distance {l} must be positive")));
    }
    ratios.validate()?;
    resample_rect(img, &roi_rect_from_ratios(eye_mid, l, ratios), size)
}

/// Bounding box of all landmarks.
pub fn landmark_bbox(lms: &LandmarkSet) -> Result<RoiRect> {
    let pts = lms.points();
    if pts.is_empty() {
        return Err(Error::Degenerate("no landmarks".into()));
    }
    let mut r = RoiRect {
        left: f64::INFINITY,
        top: f64::INFINITY,
        right: f64::NEG_INFINITY,
        bottom: f64::NEG_INFINITY,
    };
    for p in pts {
        r.left = r.left.min(p.x);
        r.right = r.right.max(p.x);
        r.top = r.top.min(p.y);
        r.bottom = r.bottom.max(p.y);
    }
    if !(r.width() > 0.0 && r.height() > 0.0) {
        return Err(Error::Degenerate(format!("zero-area landmark bounding box {r:?}")));
    }
    Ok(r)
}

/// Crop the landmark bounding box and resample it to `size`.
pub fn crop_roi_bbox(img: &GrayImage, lms: &LandmarkSet, size: CanonicalSize) -> Result<GrayImage> {
    resample_rect(img, &landmark_bbox(lms)?, size)
}

/// How the face rectangle is derived after alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoiMode {
    /// Eye-distance ratios (`k1`, `k2`, `k3`).
    #[default]
    Ratios,
    /// Bounding box of all landmarks.
    Bbox,
}

impl std::str::FromStr for RoiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratios" => Ok(RoiMode::Ratios),
            "bbox" => Ok(RoiMode::Bbox),
            other => Err(Error::invalid(format!("unknown ROI mode `{other}`"))),
        }
    }
}

impl fmt::Display for RoiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoiMode::Ratios => "ratios",
            RoiMode::Bbox => "bbox",
        })
    }
}

/// A roll-compensated face ROI at canonical size.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFace {
    pub image: GrayImage,
    /// Measured roll that was compensated, radians.
    pub angle: f64,
    pub eye_distance: f64,
    pub source_id: String,
}

/// Alignment plus ROI extraction with fixed settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaceNormalizer {
    pub mode: RoiMode,
    pub ratios: RoiRatios,
    pub size: CanonicalSize,
}

impl FaceNormalizer {
    pub fn normalize(&self, img: &GrayImage, lms: &LandmarkSet, source_id: &str) -> Result<AlignedFace> {
        let (aligned, moved, angle) = align_face(img, lms)?;
        let (left, right) = eye_centers(&moved)?;
        let eye_distance = inter_eye_distance(left, right)?;
        let image = match self.mode {
            RoiMode::Ratios => crop_roi_ratios(
                &aligned,
                left.midpoint(&right),
                eye_distance,
                &self.ratios,
                self.size,
            )?,
            RoiMode::Bbox => crop_roi_bbox(&aligned, &moved, self.size)?,
        };
        Ok(AlignedFace {
            image,
            angle,
            eye_distance,
            source_id: source_id.to_string(),
        })
    }
}
