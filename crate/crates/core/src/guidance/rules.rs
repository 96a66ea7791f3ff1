//! Per-view recipes mapping a landmark to a probe pose.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::BodyModel;
use crate::error::{Error, Result};
use crate::jsonio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Away from the longitudinal thorax axis.
    #[default]
    RadialFromAxis,
    /// Along the outward normal of the nearest torso triangle.
    NearestSurfaceNormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlaneRule {
    pub view_id: String,
    pub landmark: String,
    /// Offset from the landmark along the thorax-frame axes.
    pub pre_offset_mm: [f64; 3],
    pub projection_mode: ProjectionMode,
    /// Depth of the probe face below the skin contact.
    pub inward_offset_mm: f64,
    /// Image-plane rotation about the probe axis, from the longitudinal axis.
    pub spin_deg: f64,
    /// Rotations about thorax x̂ then ŷ, applied after spin.
    pub tilt_deg: [f64; 2],
}

impl ScanPlaneRule {
    pub fn new(view_id: &str, landmark: &str, pre_offset_mm: [f64; 3], spin_deg: f64, tilt_deg: [f64; 2]) -> Self {
        Self {
            view_id: view_id.into(),
            landmark: landmark.into(),
            pre_offset_mm,
            projection_mode: ProjectionMode::RadialFromAxis,
            inward_offset_mm: 5.0,
            spin_deg,
            tilt_deg,
        }
    }

    /// Checks numeric ranges; the landmark itself is checked against a model
    /// by [`ScanPlaneRule::validate_for`].
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .pre_offset_mm
            .iter()
            .chain(&self.tilt_deg)
            .chain([&self.inward_offset_mm, &self.spin_deg])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Schema(format!("rule `{}` has non-finite values", self.view_id)));
        }
        if self.inward_offset_mm < 0.0 {
            return Err(Error::Schema(format!("rule `{}`: inward_offset_mm must be >= 0", self.view_id)));
        }
        if self.spin_deg.abs() > 180.0 {
            return Err(Error::Schema(format!("rule `{}`: |spin_deg| must be <= 180", self.view_id)));
        }
        Ok(())
    }

    pub fn validate_for(&self, model: &BodyModel) -> Result<()> {
        self.validate()?;
        if !model.landmarks().contains_key(&self.landmark) {
            return Err(Error::UnknownLandmark(self.landmark.clone()));
        }
        Ok(())
    }
}

/// The contents of a rule file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default = "jsonio::schema_version_default")]
    pub schema_version: u32,
    /// Free-form provenance note carried with the table.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub rules: Vec<ScanPlaneRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<ScanPlaneRule>) -> Self {
        Self {
            schema_version: jsonio::SCHEMA_VERSION,
            note: String::new(),
            rules,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.rules {
            r.validate()?;
            if !seen.insert(r.view_id.as_str()) {
                return Err(Error::Schema(format!("duplicate view_id `{}`", r.view_id)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let set: RuleSet = jsonio::parse_versioned(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&jsonio::read_text(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonio::write(path.as_ref(), self)
    }
}

/// Ten views over the desk landmarks. Values are placeholders chosen for
/// geometric coverage of the torso and carry no clinical meaning.
pub fn default_rules() -> RuleSet {
    let rules = vec![
        ScanPlaneRule::new("suprasternal_lax", "sternum_upper", [0.0, 25.0, 0.0], 0.0, [-15.0, 0.0]),
        ScanPlaneRule::new("subcostal_4ch", "sternum_lower", [20.0, -60.0, 0.0], 90.0, [15.0, 0.0]),
        ScanPlaneRule::new("plax", "sternum_mid", [30.0, 0.0, 0.0], 120.0, [0.0, 0.0]),
        ScanPlaneRule::new("psax", "sternum_mid", [30.0, 0.0, 0.0], 30.0, [0.0, 0.0]),
        ScanPlaneRule::new("a4c", "rib_l_5_aal", [0.0, -10.0, 0.0], 90.0, [0.0, 10.0]),
        ScanPlaneRule::new("subcostal_ivc", "sternum_lower", [-10.0, -60.0, 0.0], 0.0, [15.0, 0.0]),
        ScanPlaneRule::new("lung_r_ant", "rib_r_2_mcl", [0.0, 0.0, 0.0], 0.0, [0.0, 0.0]),
        ScanPlaneRule::new("lung_l_ant", "rib_l_2_mcl", [0.0, 0.0, 0.0], 0.0, [0.0, 0.0]),
        ScanPlaneRule::new("lung_r_cpa", "rib_r_8_pal", [0.0, 0.0, 0.0], 0.0, [0.0, 0.0]),
        ScanPlaneRule::new("lung_l_cpa", "rib_l_8_pal", [0.0, 0.0, 0.0], 0.0, [0.0, 0.0]),
    ];
    RuleSet {
        note: "non-clinical placeholder values for the desk model".into(),
        ..RuleSet::new(rules)
    }
}
