//! JSON documents for spaces, frames, and molecules: the wire format the
//! CLI reads and writes. Every document carries a `schema_version`; this
//! module reads version 1.
//!
//! Spaces arrive either as explicit distance matrices or as Euclidean
//! coordinates. Frames arrive either as tabulated values over an explicit
//! space or as a closed-form family that carries its own domain.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construct::{geometric_frame, log_frame};
use crate::frame::{FrameSystem, ReconstructionMap};
use crate::free::Molecule;
use crate::lipschitz::{LipschitzFamily, TabulatedMap};
use crate::norms::SequenceNormSpec;
use crate::space::FiniteMetricSpace;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Structural(format!(
            "unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn json_err(what: &str, e: serde_json::Error) -> Error {
    Error::Structural(format!("{what}: {e}"))
}

/// The base point named either by index or by label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseRef {
    Index(usize),
    Label(String),
}

impl BaseRef {
    pub fn resolve(&self, ids: &[String]) -> Result<usize> {
        match self {
            BaseRef::Index(i) => {
                if *i >= ids.len() {
                    return Err(Error::Structural(format!(
                        "base index {i} out of range for {} points",
                        ids.len()
                    )));
                }
                Ok(*i)
            }
            BaseRef::Label(l) => ids.iter().position(|id| id == l).ok_or_else(|| {
                Error::Structural(format!("base label {l:?} is not among the point labels"))
            }),
        }
    }
}

/// A space document: explicit distances, or coordinates with a named
/// metric (only "euclidean" is understood).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpaceInput {
    Distances {
        schema_version: u32,
        points: Vec<String>,
        base: BaseRef,
        distances: Vec<Vec<f64>>,
    },
    Coords {
        schema_version: u32,
        coords: Vec<Vec<f64>>,
        base: BaseRef,
        metric: String,
    },
}

/// Parses a space document. `triangle_tol` is the slack allowed in the
/// triangle check of an explicit distance matrix; coordinate inputs are
/// exact by construction and ignore it.
pub fn parse_space(text: &str, triangle_tol: f64) -> Result<FiniteMetricSpace> {
    let input: SpaceInput = serde_json::from_str(text).map_err(|e| {
        json_err(
            "space JSON matches neither the distances form nor the coords form",
            e,
        )
    })?;
    space_from_input(input, triangle_tol)
}

pub fn space_from_input(input: SpaceInput, triangle_tol: f64) -> Result<FiniteMetricSpace> {
    match input {
        SpaceInput::Distances {
            schema_version,
            points,
            base,
            distances,
        } => {
            check_version(schema_version)?;
            let base = base.resolve(&points)?;
            FiniteMetricSpace::with_tolerance(points, base, distances, triangle_tol)
        }
        SpaceInput::Coords {
            schema_version,
            coords,
            base,
            metric,
        } => {
            check_version(schema_version)?;
            if metric != "euclidean" {
                return Err(Error::Structural(format!(
                    "unknown metric {metric:?}; coordinate inputs support \"euclidean\""
                )));
            }
            let ids: Vec<String> = (0..coords.len()).map(|i| format!("p{i}")).collect();
            let base = base.resolve(&ids)?;
            FiniteMetricSpace::from_points(&coords, base)
        }
    }
}

/// A space rendered for output, always in the distances form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceDocument {
    pub schema_version: u32,
    pub points: Vec<String>,
    pub base: String,
    pub distances: Vec<Vec<f64>>,
}

pub fn space_document(m: &FiniteMetricSpace) -> SpaceDocument {
    SpaceDocument {
        schema_version: SCHEMA_VERSION,
        points: m.point_ids().to_vec(),
        base: m.point_ids()[m.base()].clone(),
        distances: m.distance_rows(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Log,
    Geometric,
}

/// The maps of a frame: explicit per-map value rows over a given space,
/// or a closed-form family that brings its own uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MapsDocument {
    Table { values: Vec<Vec<f64>> },
    Family {
        name: FamilyName,
        interval: [f64; 2],
        grid: usize,
        truncation: usize,
    },
}

/// A frame document. Table maps require the `space` field; family maps
/// forbid it, since the family carries its own domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDocument {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceDocument>,
    pub maps: MapsDocument,
    pub norm: SequenceNormSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
}

/// Parses a frame document and rebuilds the system, along with the
/// closed-form decoder when the family has one. Embedded table spaces
/// get an ulp-scale triangle allowance so that emitted documents
/// round-trip; standalone space documents keep the caller's tolerance.
pub fn parse_frame(text: &str) -> Result<(FrameSystem, Option<ReconstructionMap>)> {
    let doc: FrameDocument =
        serde_json::from_str(text).map_err(|e| json_err("frame JSON is malformed", e))?;
    frame_from_document(doc)
}

pub fn frame_from_document(doc: FrameDocument) -> Result<(FrameSystem, Option<ReconstructionMap>)> {
    check_version(doc.schema_version)?;
    match doc.maps {
        MapsDocument::Table { values } => {
            let Some(space_doc) = doc.space else {
                return Err(Error::Structural(
                    "table maps need an explicit space field".into(),
                ));
            };
            check_version(space_doc.schema_version)?;
            let base = BaseRef::Label(space_doc.base).resolve(&space_doc.points)?;
            let diameter = space_doc
                .distances
                .iter()
                .flatten()
                .fold(0.0f64, |m, &d| m.max(d));
            let tol = 16.0 * f64::EPSILON * diameter.max(1.0);
            let space = FiniteMetricSpace::with_tolerance(
                space_doc.points,
                base,
                space_doc.distances,
                tol,
            )?;
            let maps = values
                .into_iter()
                .map(TabulatedMap::new)
                .collect::<Result<Vec<_>>>()?;
            let family = LipschitzFamily::with_tail(
                Arc::new(space),
                maps,
                doc.tail.unwrap_or(0.0),
                None,
            )?;
            Ok((FrameSystem::new(family, doc.norm), None))
        }
        MapsDocument::Family {
            name,
            interval,
            grid,
            truncation,
        } => {
            if doc.space.is_some() {
                return Err(Error::Structural(
                    "family maps carry their own domain; remove the space field".into(),
                ));
            }
            let [c, d] = interval;
            match name {
                FamilyName::Log => {
                    let (system, decoder) = log_frame(c, d, grid, truncation, doc.norm)?;
                    Ok((system, Some(decoder)))
                }
                FamilyName::Geometric => {
                    let system = geometric_frame(c, d, grid, truncation, doc.norm)?;
                    Ok((system, None))
                }
            }
        }
    }
}

/// Renders a system as a document. Log and geometric families round-trip
/// in their compact closed form; everything else is tabulated.
pub fn frame_document(system: &FrameSystem) -> FrameDocument {
    use crate::norms::FamilyKind;
    if let Some(meta) = system.family().family_meta() {
        if let (Some(kind), Some((c, d)), Some(truncation)) =
            (meta.tail_family(), meta.interval, meta.truncation)
        {
            let name = match kind {
                FamilyKind::Log => FamilyName::Log,
                FamilyKind::Geometric => FamilyName::Geometric,
            };
            return FrameDocument {
                schema_version: SCHEMA_VERSION,
                space: None,
                maps: MapsDocument::Family {
                    name,
                    interval: [c, d],
                    grid: system.space().n(),
                    truncation,
                },
                norm: *system.norm(),
                tail: None,
            };
        }
    }
    FrameDocument {
        schema_version: SCHEMA_VERSION,
        space: Some(space_document(system.space())),
        maps: MapsDocument::Table {
            values: system
                .family()
                .maps()
                .iter()
                .map(|m| m.values.clone())
                .collect(),
        },
        norm: *system.norm(),
        tail: if system.family().tail_bound() > 0.0 {
            Some(system.family().tail_bound())
        } else {
            None
        },
    }
}

pub fn render_frame(system: &FrameSystem) -> String {
    let doc = frame_document(system);
    serde_json::to_string_pretty(&doc).expect("frame documents serialize") + "\n"
}

/// Parses a molecule from either a bare coefficient array or a
/// `{"coefficients": [...]}` object.
pub fn parse_molecule(text: &str) -> Result<Molecule> {
    #[derive(Deserialize)]
    struct Doc {
        coefficients: Vec<f64>,
    }
    if let Ok(coeffs) = serde_json::from_str::<Vec<f64>>(text) {
        return Molecule::new(coeffs);
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| {
        json_err(
            "molecule must be a JSON array or an object with a coefficients field",
            e,
        )
    })?;
    Molecule::new(doc.coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::frame_bounds;

    #[test]
    fn distances_form_round_trips() {
        let text = r#"{
            "schema_version": 1,
            "points": ["origin", "near", "far"],
            "base": "origin",
            "distances": [[0, 1, 3], [1, 0, 2], [3, 2, 0]]
        }"#;
        let space = parse_space(text, 0.0).unwrap();
        assert_eq!(space.n(), 3);
        assert_eq!(space.base(), 0);
        assert_eq!(space.d(1, 2), 2.0);
        let doc = space_document(&space);
        assert_eq!(doc.base, "origin");
        let again = parse_space(&serde_json::to_string(&doc).unwrap(), 0.0).unwrap();
        assert_eq!(again.distance_rows(), space.distance_rows());
    }

    #[test]
    fn coords_form_builds_euclidean_spaces() {
        let text = r#"{
            "schema_version": 1,
            "coords": [[0, 0], [3, 4]],
            "base": 0,
            "metric": "euclidean"
        }"#;
        let space = parse_space(text, 0.0).unwrap();
        assert_eq!(space.d(0, 1), 5.0);
        assert_eq!(space.point_ids()[1], "p1");
    }

    #[test]
    fn base_labels_and_indices_both_resolve() {
        let by_label = r#"{"schema_version":1,"points":["a","b"],"base":"b","distances":[[0,2],[2,0]]}"#;
        let by_index = r#"{"schema_version":1,"points":["a","b"],"base":1,"distances":[[0,2],[2,0]]}"#;
        assert_eq!(parse_space(by_label, 0.0).unwrap().base(), 1);
        assert_eq!(parse_space(by_index, 0.0).unwrap().base(), 1);
        let missing = r#"{"schema_version":1,"points":["a","b"],"base":"c","distances":[[0,2],[2,0]]}"#;
        assert!(parse_space(missing, 0.0).is_err());
    }

    #[test]
    fn wrong_schema_version_is_refused() {
        let text = r#"{
            "schema_version": 2,
            "points": ["a", "b"],
            "base": "a",
            "distances": [[0, 1], [1, 0]]
        }"#;
        let err = parse_space(text, 0.0).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn unknown_metric_is_refused() {
        let text = r#"{
            "schema_version": 1,
            "coords": [[0], [1]],
            "base": 0,
            "metric": "manhattan"
        }"#;
        assert!(parse_space(text, 0.0).is_err());
    }

    #[test]
    fn family_frame_round_trips_through_its_document() {
        let norm = SequenceNormSpec::new(1.0).unwrap();
        let (system, _) = log_frame(2.0, 10.0, 16, 20, norm).unwrap();
        let rendered = render_frame(&system);
        let (again, decoder) = parse_frame(&rendered).unwrap();
        assert!(decoder.is_some());
        assert_eq!(again.len(), system.len());
        let b1 = frame_bounds(&system);
        let b2 = frame_bounds(&again);
        assert_eq!(b1.a, b2.a);
        assert_eq!(b1.b, b2.b);
        assert_eq!(again.family().tail_bound(), system.family().tail_bound());
    }

    #[test]
    fn table_frame_round_trips_with_its_space() {
        let space = FiniteMetricSpace::from_line(&[0.0, 1.0, 3.0], 0).unwrap();
        let maps = vec![
            TabulatedMap::new(vec![0.0, 1.0, 3.0]).unwrap(),
            TabulatedMap::new(vec![0.0, 1.0, 1.0]).unwrap(),
        ];
        let family = LipschitzFamily::new(Arc::new(space), maps).unwrap();
        let system = FrameSystem::new(family, SequenceNormSpec::new(1.0).unwrap());
        let rendered = render_frame(&system);
        let (again, decoder) = parse_frame(&rendered).unwrap();
        assert!(decoder.is_none());
        let b1 = frame_bounds(&system);
        let b2 = frame_bounds(&again);
        assert_eq!(b1.a, b2.a);
        assert_eq!(b1.b, b2.b);
    }

    #[test]
    fn table_maps_without_a_space_are_refused() {
        let text = r#"{
            "schema_version": 1,
            "maps": {"type": "table", "values": [[0, 1]]},
            "norm": {"p": 1}
        }"#;
        assert!(parse_frame(text).is_err());
    }

    #[test]
    fn family_maps_with_a_space_are_refused() {
        let text = r#"{
            "schema_version": 1,
            "space": {"schema_version": 1, "points": ["a", "b"], "base": "a", "distances": [[0, 1], [1, 0]]},
            "maps": {"type": "family", "name": "log", "interval": [2, 10], "grid": 8, "truncation": 10},
            "norm": {"p": 1}
        }"#;
        assert!(parse_frame(text).is_err());
    }

    #[test]
    fn norm_exponents_parse_both_ways() {
        let finite = r#"{
            "schema_version": 1,
            "maps": {"type": "family", "name": "geometric", "interval": [1, 5], "grid": 8, "truncation": 10},
            "norm": {"p": 1.5}
        }"#;
        let (system, _) = parse_frame(finite).unwrap();
        assert_eq!(format!("{:?}", system.norm().p()), "Finite(1.5)");
        let inf = finite.replace("1.5", "\"inf\"");
        assert!(parse_frame(&inf).is_ok());
    }

    #[test]
    fn molecules_parse_bare_and_wrapped() {
        let bare = parse_molecule("[0, 1, -1]").unwrap();
        assert_eq!(bare.coefficients, vec![0.0, 1.0, -1.0]);
        let wrapped = parse_molecule(r#"{"coefficients": [2, 0, 0.5]}"#).unwrap();
        assert_eq!(wrapped.coefficients, vec![2.0, 0.0, 0.5]);
        assert!(parse_molecule("{\"weights\": [1]}").is_err());
        assert!(parse_molecule("[1, \"x\"]").is_err());
    }
}
