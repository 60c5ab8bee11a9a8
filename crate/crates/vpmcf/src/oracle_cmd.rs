//! `vpmcf oracle`: closed-form and refined reference values.

use std::fmt::Write;

use clap::{Args, Subcommand, ValueEnum};
use vpmcf_core::curve::{build_profile, InitialShapeSpec, ProfileCurve, ShapeKind, Topology};
use vpmcf_core::geometry;
use vpmcf_core::oracle::{self, OracleError, ReferenceKind, Refinement};

#[derive(Debug, Clone, Subcommand)]
pub enum OracleCommand {
    /// Round sphere (closed).
    Sphere(RoundArgs),
    /// Half sphere on the plane.
    Hemisphere(RoundArgs),
    /// Cylinder between two planes.
    Cylinder(CylinderArgs),
    /// Richardson refinement of a scenario shape.
    Refine(RefineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RoundArgs {
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 401)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CylinderArgs {
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2.0)]
    pub length: f64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 401)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioShape {
    Hemisphere,
    Sphere,
    PerturbedHemisphere,
    PerturbedSphere,
    CosineBump,
    Dumbbell,
    Cylinder,
}

#[derive(Debug, Clone, Args)]
pub struct RefineArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioShape,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 2)]
    pub modes: u32,
    #[arg(long, default_value_t = 2.0)]
    pub length: f64,
    /// Neck radius of the dumbbell.
    #[arg(long, default_value_t = 0.05)]
    pub neck: f64,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 101)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
}

impl RefineArgs {
    pub fn spec(&self, nodes: usize) -> InitialShapeSpec {
        let (kind, topology) = match self.scenario {
            ScenarioShape::Hemisphere => (ShapeKind::Hemisphere { radius: self.radius }, Topology::FreeBoundary),
            ScenarioShape::Sphere => (
                ShapeKind::Sphere {
                    radius: self.radius,
                    center_x: 0.0,
                },
                Topology::Closed,
            ),
            ScenarioShape::PerturbedHemisphere => (
                ShapeKind::PerturbedHemisphere {
                    radius: self.radius,
                    amplitude: self.amplitude,
                    mode_count: self.modes,
                },
                Topology::FreeBoundary,
            ),
            ScenarioShape::PerturbedSphere => (
                ShapeKind::PerturbedSphere {
                    radius: self.radius,
                    center_x: 0.0,
                    amplitude: self.amplitude,
                    mode_count: self.modes,
                },
                Topology::Closed,
            ),
            ScenarioShape::CosineBump => (
                ShapeKind::CosineBumpCylinder {
                    base_radius: self.radius,
                    length: self.length,
                    amplitude: self.amplitude,
                    mode_count: self.modes,
                },
                Topology::FreeBoundary,
            ),
            ScenarioShape::Dumbbell => (
                ShapeKind::Dumbbell {
                    bulb_radius: self.radius,
                    neck_radius: self.neck,
                    length: self.length,
                },
                Topology::Closed,
            ),
            ScenarioShape::Cylinder => (
                ShapeKind::CylinderSegment {
                    radius: self.radius,
                    length: self.length,
                },
                Topology::Bridge,
            ),
        };
        InitialShapeSpec::new(kind, topology, self.n, nodes)
    }
}

type Quantity = (&'static str, fn(&ProfileCurve) -> f64);

fn quantities() -> [Quantity; 4] {
    [
        ("area", geometry::surface_area),
        ("volume", geometry::enclosed_volume),
        ("h", |c| geometry::frames(c).map_or(f64::NAN, |f| geometry::mean_h(c, &f))),
        ("k_integral", |c| geometry::frames(c).map_or(f64::NAN, |f| geometry::k_integral(c, &f))),
    ]
}

fn refined_line(out: &mut String, name: &str, r: &Refinement) {
    let last = r.levels.last().map_or(f64::NAN, |l| l.1);
    let order = r.observed_order.map_or_else(|| String::from("-"), |o| format!("{o:.3}"));
    let _ = writeln!(
        out,
        "refined {name} finest {last:.9} extrapolated {:.9} order {order} status {:?}",
        r.extrapolated, r.status
    );
}

fn round(kind: ReferenceKind, n: usize, nodes: usize, levels: usize) -> Result<String, OracleError> {
    let (_, record) = oracle::reference_surface(kind, n, nodes)?;
    let mut out = String::new();
    let _ = writeln!(out, "area {:.6}", record.area);
    let _ = writeln!(out, "volume {:.6}", record.volume);
    let _ = writeln!(out, "h {:.6}", record.mean_curvature);
    let _ = writeln!(out, "k_integral {:.6}", record.k * record.area);
    for (name, q) in quantities() {
        let r = oracle::refine(|m| Ok(oracle::reference_surface(kind, n, m)?.0), q, nodes, levels)?;
        refined_line(&mut out, name, &r);
    }
    Ok(out)
}

fn refine_scenario(args: &RefineArgs) -> Result<String, OracleError> {
    let source = |m: usize| Ok(build_profile(&args.spec(m))?);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {:?} levels {:?}",
        args.scenario,
        oracle::refinement_counts(args.nodes, args.levels)
    );
    for (name, q) in quantities() {
        refined_line(&mut out, name, &oracle::refine(source, q, args.nodes, args.levels)?);
    }
    let by_parts = oracle::refine(
        source,
        |c| oracle::k_integral_by_parts(c).unwrap_or(f64::NAN),
        args.nodes,
        args.levels,
    )?;
    if by_parts.extrapolated.is_finite() {
        refined_line(&mut out, "k_integral_by_parts", &by_parts);
    }
    Ok(out)
}

/// Runs an oracle subcommand and returns its printed output.
pub fn execute(cmd: &OracleCommand) -> Result<String, OracleError> {
    match cmd {
        OracleCommand::Sphere(a) => round(ReferenceKind::Sphere { radius: a.radius }, a.n, a.nodes, a.levels),
        OracleCommand::Hemisphere(a) => round(ReferenceKind::Hemisphere { radius: a.radius }, a.n, a.nodes, a.levels),
        OracleCommand::Cylinder(a) => round(
            ReferenceKind::CylinderSegment {
                radius: a.radius,
                length: a.length,
            },
            a.n,
            a.nodes,
            a.levels,
        ),
        OracleCommand::Refine(a) => refine_scenario(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_values() {
        let out = execute(&OracleCommand::Sphere(RoundArgs {
            radius: 1.0,
            n: 2,
            nodes: 101,
            levels: 3,
        }))
        .unwrap();
        assert!(out.contains("area 12.566371"));
        assert!(out.contains("volume 4.188790"));
        assert!(out.contains("h 2.000000"));
        assert!(out.contains("refined volume"));
    }

    #[test]
    fn dumbbell_refines() {
        let args = RefineArgs {
            scenario: ScenarioShape::Dumbbell,
            radius: 1.0,
            amplitude: 0.0,
            modes: 1,
            length: 6.0,
            neck: 0.05,
            n: 2,
            nodes: 101,
            levels: 3,
        };
        let out = execute(&OracleCommand::Refine(args)).unwrap();
        assert!(out.contains("refined volume"), "{out}");
        assert!(out.contains("k_integral_by_parts"), "{out}");
    }
}
