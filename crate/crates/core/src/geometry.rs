//! Anchor map plus the range model and its Jacobian.
//!
//! All positions are in the North-West-Up world frame, in meters.

use std::fmt;
use std::path::Path;

use nalgebra::{Point3, RowDVector, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of a mobile or an anchor in the NWU world frame (meters).
pub type Position3 = Point3<f64>;

/// Ranges at or below this value make the Jacobian undefined.
pub const EPSILON_RANGE: f64 = 1e-6;

/// Minimum allowed spacing between two anchors.
pub const MIN_ANCHOR_SPACING: f64 = 0.5;

pub const ANCHOR_COUNT: usize = 6;

/// Surveyed anchor coordinates of the exhibition-hall setup.
const DEFAULT_ANCHORS: [[f64; 3]; ANCHOR_COUNT] = [
    [0.0, 0.0, 0.0],
    [14.6, 0.0, 0.0],
    [14.6, 25.5, 0.0],
    [0.0, -1.0, 5.3],
    [0.0, 26.6, 5.3],
    [17.4, 10.1, 5.3],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub id: u8,
    pub position: Position3,
}

/// The six fixed UWB anchors, ordered by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Anchor>", into = "Vec<Anchor>")]
pub struct AnchorMap {
    anchors: [Anchor; ANCHOR_COUNT],
}

impl Default for AnchorMap {
    fn default() -> Self {
        let anchors = std::array::from_fn(|i| Anchor {
            id: i as u8,
            position: Position3::from(DEFAULT_ANCHORS[i]),
        });
        Self { anchors }
    }
}

impl AnchorMap {
    /// Builds a map from anchors in any order, checking ids and spacing.
    pub fn new(anchors: Vec<Anchor>) -> Result<Self> {
        if anchors.len() != ANCHOR_COUNT {
            return Err(Error::InvalidAnchors(format!(
                "expected {ANCHOR_COUNT} anchors, found {}",
                anchors.len()
            )));
        }
        let mut slots: [Option<Anchor>; ANCHOR_COUNT] = [None; ANCHOR_COUNT];
        for anchor in anchors {
            check_anchor(&anchor)?;
            let slot = &mut slots[anchor.id as usize];
            if slot.is_some() {
                return Err(Error::InvalidAnchors(format!(
                    "duplicate anchor id {}",
                    anchor.id
                )));
            }
            *slot = Some(anchor);
        }
        // Six entries with distinct ids in 0..6 fill every slot.
        let anchors = slots.map(|a| a.expect("all slots filled"));
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[i + 1..] {
                let spacing = predict_range(&a.position, &b.position);
                if spacing < MIN_ANCHOR_SPACING {
                    return Err(Error::InvalidAnchors(format!(
                        "anchors {} and {} are {spacing:.3} m apart (minimum {MIN_ANCHOR_SPACING} m)",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(Self { anchors })
    }

    /// Parses the plain-text format: one `id x y z` entry per line, `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::AnchorParse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut anchors = Vec::with_capacity(ANCHOR_COUNT);
        let mut seen_at: [Option<usize>; ANCHOR_COUNT] = [None; ANCHOR_COUNT];
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(
                    line_no,
                    format!("expected `id x y z`, found {} fields", fields.len()),
                ));
            }
            let id: u8 = fields[0]
                .parse()
                .map_err(|_| err(line_no, format!("invalid anchor id `{}`", fields[0])))?;
            if id as usize >= ANCHOR_COUNT {
                return Err(err(line_no, format!("anchor id {id} outside 0..=5")));
            }
            if let Some(first) = seen_at[id as usize] {
                return Err(err(
                    line_no,
                    format!("anchor id {id} already defined on line {first}"),
                ));
            }
            seen_at[id as usize] = Some(line_no);
            let mut coords = [0.0; 3];
            for (c, text) in coords.iter_mut().zip(&fields[1..]) {
                *c = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line_no, format!("invalid coordinate `{text}`")))?;
            }
            anchors.push(Anchor {
                id,
                position: Position3::from(coords),
            });
        }
        if anchors.len() != ANCHOR_COUNT {
            let missing: Vec<String> = seen_at
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_none())
                .map(|(i, _)| i.to_string())
                .collect();
            return Err(err(
                last_line,
                format!("missing anchor ids {}", missing.join(", ")),
            ));
        }
        Self::new(anchors).map_err(|e| match e {
            Error::InvalidAnchors(message) => err(last_line, message),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn get(&self, id: u8) -> Result<&Position3> {
        self.anchors
            .get(id as usize)
            .map(|a| &a.position)
            .ok_or(Error::UnknownAnchor(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter()
    }

    pub fn centroid(&self) -> Position3 {
        let sum = self
            .anchors
            .iter()
            .fold(Vector3::zeros(), |acc, a| acc + a.position.coords);
        Position3::from(sum / ANCHOR_COUNT as f64)
    }
}

impl TryFrom<Vec<Anchor>> for AnchorMap {
    type Error = Error;

    fn try_from(anchors: Vec<Anchor>) -> Result<Self> {
        Self::new(anchors)
    }
}

impl From<AnchorMap> for Vec<Anchor> {
    fn from(map: AnchorMap) -> Self {
        map.anchors.to_vec()
    }
}

impl fmt::Display for AnchorMap {
    /// Writes the map in the same text format [`AnchorMap::parse`] reads.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# id x y z (meters, NWU)")?;
        for a in &self.anchors {
            let p = a.position;
            writeln!(f, "{} {} {} {}", a.id, p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

fn check_anchor(anchor: &Anchor) -> Result<()> {
    if anchor.id as usize >= ANCHOR_COUNT {
        return Err(Error::InvalidAnchors(format!(
            "anchor id {} outside 0..=5",
            anchor.id
        )));
    }
    if !anchor.position.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidAnchors(format!(
            "anchor {} has a non-finite coordinate",
            anchor.id
        )));
    }
    Ok(())
}

/// Which state vector a Jacobian row is laid out for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateLayout {
    /// `[p_x, v_x, p_y, v_y, p_z, v_z]`
    Vanilla6,
    /// `[p_x, v_x, b_x, p_y, v_y, b_y, p_z, v_z, b_z]`
    Fusion9,
}

impl StateLayout {
    pub const fn dim(self) -> usize {
        match self {
            StateLayout::Vanilla6 => 6,
            StateLayout::Fusion9 => 9,
        }
    }

    /// Indices of `p_x, p_y, p_z` inside the state vector.
    pub const fn position_slots(self) -> [usize; 3] {
        match self {
            StateLayout::Vanilla6 => [0, 2, 4],
            StateLayout::Fusion9 => [0, 3, 6],
        }
    }
}

/// Euclidean distance between the mobile and an anchor.
pub fn predict_range(mobile: &Position3, anchor: &Position3) -> f64 {
    (mobile - anchor).norm()
}

/// Predicted range together with the unit vector pointing from the anchor to the mobile.
pub fn line_of_sight(mobile: &Position3, anchor: &Position3) -> Result<(f64, Vector3<f64>)> {
    let delta = mobile - anchor;
    let range = delta.norm();
    if !(range > EPSILON_RANGE) {
        return Err(Error::DegenerateGeometry {
            range,
            epsilon: EPSILON_RANGE,
        });
    }
    Ok((range, delta / range))
}

/// Linearized range measurement row `H` for the given state layout.
pub fn range_jacobian(
    mobile: &Position3,
    anchor: &Position3,
    layout: StateLayout,
) -> Result<RowDVector<f64>> {
    let (_, unit) = line_of_sight(mobile, anchor)?;
    let mut row = RowDVector::zeros(layout.dim());
    for (slot, u) in layout.position_slots().into_iter().zip(unit.iter()) {
        row[slot] = *u;
    }
    Ok(row)
}

/// Statically sized variant of [`range_jacobian`]; also returns the predicted range.
pub(crate) fn range_jacobian_fixed<const N: usize>(
    mobile: &Position3,
    anchor: &Position3,
    layout: StateLayout,
) -> Result<(f64, SMatrix<f64, 1, N>)> {
    debug_assert_eq!(layout.dim(), N);
    let (range, unit) = line_of_sight(mobile, anchor)?;
    let mut row = SMatrix::<f64, 1, N>::zeros();
    for (slot, u) in layout.position_slots().into_iter().zip(unit.iter()) {
        row[slot] = *u;
    }
    Ok((range, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64, z: f64) -> Position3 {
        Position3::new(x, y, z)
    }

    #[test]
    fn default_map_matches_surveyed_coordinates() {
        let map = AnchorMap::default();
        let expected = [
            (0, [0.0, 0.0, 0.0]),
            (1, [14.6, 0.0, 0.0]),
            (2, [14.6, 25.5, 0.0]),
            (3, [0.0, -1.0, 5.3]),
            (4, [0.0, 26.6, 5.3]),
            (5, [17.4, 10.1, 5.3]),
        ];
        for (id, xyz) in expected {
            assert_eq!(map.get(id).unwrap(), &Position3::from(xyz));
        }
        assert!(matches!(map.get(6), Err(Error::UnknownAnchor(6))));
        // The default survives the map's own validation.
        AnchorMap::new(map.iter().copied().collect()).unwrap();
    }

    #[test]
    fn predict_range_examples() {
        let map = AnchorMap::default();
        assert_eq!(predict_range(&p(0.0, 0.0, 0.0), map.get(0).unwrap()), 0.0);
        assert_eq!(predict_range(&p(3.0, 4.0, 0.0), &p(0.0, 0.0, 0.0)), 5.0);
    }

    #[test]
    fn jacobian_examples() {
        let mobile = p(3.0, 4.0, 0.0);
        let origin = p(0.0, 0.0, 0.0);
        let h6 = range_jacobian(&mobile, &origin, StateLayout::Vanilla6).unwrap();
        assert_eq!(h6.as_slice(), &[0.6, 0.0, 0.8, 0.0, 0.0, 0.0]);
        let h9 = range_jacobian(&mobile, &origin, StateLayout::Fusion9).unwrap();
        assert_eq!(
            h9.as_slice(),
            &[0.6, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn jacobian_rejects_coincident_points() {
        let a = p(1.0, 2.0, 3.0);
        let err = range_jacobian(&a, &a, StateLayout::Vanilla6).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { .. }));
        let near = p(1.0 + 5e-7, 2.0, 3.0);
        assert!(range_jacobian(&near, &a, StateLayout::Fusion9).is_err());
    }

    #[test]
    fn parse_round_trips_display() {
        let map = AnchorMap::default();
        let text = map.to_string();
        let back = AnchorMap::parse(&text, Path::new("anchors.txt")).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn parse_accepts_comments_and_any_order() {
        let text = "# surveyed\n5 17.4 10.1 5.3  # far corner\n\n0 0 0 0\n1 14.6 0 0\n2 14.6 25.5 0\n3 0 -1 5.3\n4 0 26.6 5.3\n";
        let map = AnchorMap::parse(text, Path::new("a.txt")).unwrap();
        assert_eq!(map, AnchorMap::default());
    }

    #[test]
    fn parse_reports_offending_line() {
        let text = "0 0 0 0\n1 14.6 0 0\n2 14.6 abc 0\n";
        match AnchorMap::parse(text, Path::new("a.txt")) {
            Err(Error::AnchorParse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = "0 0 0 0\n1 14.6 0 0\n1 1 1 1\n";
        match AnchorMap::parse(dup, Path::new("a.txt")) {
            Err(Error::AnchorParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "0 0 0\n";
        assert!(matches!(
            AnchorMap::parse(short, Path::new("a.txt")),
            Err(Error::AnchorParse { line: 1, .. })
        ));
        let id = "9 0 0 0\n";
        assert!(matches!(
            AnchorMap::parse(id, Path::new("a.txt")),
            Err(Error::AnchorParse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_closely_spaced_anchors() {
        let mut anchors: Vec<Anchor> = AnchorMap::default().iter().copied().collect();
        anchors[1].position = p(0.3, 0.0, 0.0);
        assert!(matches!(
            AnchorMap::new(anchors),
            Err(Error::InvalidAnchors(_))
        ));
    }

    #[test]
    fn serde_validates_on_load() {
        let json = serde_json::to_string(&AnchorMap::default()).unwrap();
        let back: AnchorMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, AnchorMap::default());
        let bad = r#"[{"id":0,"position":[0,0,0]}]"#;
        assert!(serde_json::from_str::<AnchorMap>(bad).is_err());
    }

    fn coord() -> impl Strategy<Value = f64> {
        -50.0..50.0f64
    }

    proptest! {
        #[test]
        fn range_is_symmetric(a in (coord(), coord(), coord()), b in (coord(), coord(), coord())) {
            let a = p(a.0, a.1, a.2);
            let b = p(b.0, b.1, b.2);
            prop_assert_eq!(predict_range(&a, &b), predict_range(&b, &a));
        }

        #[test]
        fn jacobian_position_entries_form_unit_vector(
            a in (coord(), coord(), coord()),
            b in (coord(), coord(), coord()),
        ) {
            let a = p(a.0, a.1, a.2);
            let b = p(b.0, b.1, b.2);
            prop_assume!(predict_range(&a, &b) > 1e-3);
            for layout in [StateLayout::Vanilla6, StateLayout::Fusion9] {
                let h = range_jacobian(&a, &b, layout).unwrap();
                let slots = layout.position_slots();
                let norm = slots.iter().map(|&i| h[i] * h[i]).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
                for i in (0..layout.dim()).filter(|i| !slots.contains(i)) {
                    prop_assert_eq!(h[i], 0.0);
                }
            }
        }
    }
}
