use bumpy_core::geometry::{BoundaryProfile, DomainLayout};
use bumpy_core::iteration::SynthParams;
use bumpy_core::navier_stokes::NsConfig;
use bumpy_core::stokes::SolverConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Top-level run configuration. Every block is optional; commands fill in defaults for the
/// blocks they read and ignore the rest. Unknown keys are rejected anywhere.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub domain: Option<DomainBlock>,
    pub solver: Option<SolverConfig>,
    pub correctors: Option<CorrectorsBlock>,
    pub ns: Option<NsBlock>,
    pub scan: Option<ScanBlock>,
    pub iteration: Option<IterationBlock>,
    pub green: Option<GreenBlock>,
    pub inequalities: Option<InequalitiesBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub profile: BoundaryProfile,
    /// Explicit grid placement; otherwise the unit cell at `resolution` up to `top`.
    #[serde(default)]
    pub layout: Option<DomainLayout>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_top")]
    pub top: f64,
    /// Radii for the John-domain check; skipped when empty.
    #[serde(default)]
    pub john_scales: Vec<f64>,
}

fn default_resolution() -> usize {
    32
}

fn default_top() -> f64 {
    5.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorsBlock {
    pub second_order: bool,
    /// Largest acceptable no-slip residual of a stored corrector.
    pub noslip_tol: f64,
}

impl Default for CorrectorsBlock {
    fn default() -> Self {
        CorrectorsBlock { second_order: true, noslip_tol: 1e-8 }
    }
}

/// Top data `amplitude * (1 + m sin(2 pi x1 / L), 0, m sin(2 pi x1 / L))`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopDataBlock {
    pub amplitude: f64,
    pub modulation: f64,
}

impl Default for TopDataBlock {
    fn default() -> Self {
        TopDataBlock { amplitude: 1.0, modulation: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsBlock {
    pub data: TopDataBlock,
    pub picard: NsConfig,
    /// Largest accepted relative nonlinear residual of the final iterate.
    pub residual_tol: f64,
}

impl Default for NsBlock {
    fn default() -> Self {
        NsBlock { data: TopDataBlock::default(), picard: NsConfig::default(), residual_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanBlock {
    /// Candidate orders to fit; orders 1 and 2 need correctors.
    pub orders: Vec<u8>,
    /// Directory written by the `correctors` command.
    pub correctors: Option<String>,
    /// Build correctors on the fly instead of loading them.
    pub build_correctors: bool,
    /// Height of the unit cell used for on-the-fly correctors.
    pub cell_top: f64,
    pub radii_per_octave: usize,
}

impl Default for ScanBlock {
    fn default() -> Self {
        ScanBlock { orders: vec![0], correctors: None, build_correctors: false, cell_top: 5.0, radii_per_octave: 4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationBlock {
    pub count: usize,
    pub params: SynthParams,
}

impl Default for IterationBlock {
    fn default() -> Self {
        IterationBlock { count: 200, params: SynthParams::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenBlock {
    pub resolution: usize,
    pub top: f64,
    pub source: [f64; 3],
    /// Regularization radius in units of the largest cell size.
    pub radius_cells: f64,
    /// Fit range in units of the regularization radius (lower end) and absolute (upper end).
    pub r_min_radii: f64,
    pub r_max: f64,
}

impl Default for GreenBlock {
    fn default() -> Self {
        GreenBlock {
            resolution: 48,
            top: 5.0,
            source: [0.0, 0.0, 2.5],
            radius_cells: 2.0,
            r_min_radii: 2.0,
            r_max: std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InequalitiesBlock {
    pub radii: Vec<f64>,
    /// Exponent of the Morrey check; skipped when absent.
    pub morrey_l: Option<f64>,
}

impl Default for InequalitiesBlock {
    fn default() -> Self {
        InequalitiesBlock { radii: vec![0.125, 0.1767766952966369, 0.25], morrey_l: Some(4.0) }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn layout(&self) -> Result<(BoundaryProfile, DomainLayout), String> {
        let d = self.domain.as_ref().ok_or("missing `domain` block")?;
        let layout = match d.layout {
            Some(l) => l,
            None => {
                if d.resolution < 8 || d.top < 2.0 {
                    return Err(format!("unit cell needs resolution >= 8 and top >= 2, got {} and {}", d.resolution, d.top));
                }
                DomainLayout::unit(d.resolution, d.top)
            }
        };
        if !(layout.eps > 0.0) || layout.periods == 0 || layout.cells_per_period < 4 || !(layout.cells_per_eps > 0.0) || !(layout.top > 0.0) {
            return Err(format!("invalid layout {layout:?}"));
        }
        Ok((d.profile.clone(), layout))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let ok = r#"{"domain": {"profile": {"kind": "flat-shift", "depth": 0.3}}, "seed": 4}"#;
        let c: RunConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.domain.unwrap().resolution, 32);
        for bad in [
            r#"{"sed": 4}"#,
            r#"{"domain": {"profile": {"kind": "flat-shift", "depth": 0.3}, "size": 3}}"#,
            r#"{"ns": {"picard": {"damping": 0.5, "tolerance": 1}}}"#,
            r#"{"green": {"resolution": 48, "source": [0, 0]}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(bad).is_err(), "{bad}");
        }
    }
}
