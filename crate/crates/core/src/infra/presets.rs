//! Preset networks built around 150 kVA class delta-wye transformers feeding
//! line-to-line connected level-2 EVSEs at 208 V.
//!
//! Conventions (ABC sequence, `V_an` at 0°, unity power factor):
//!
//! * EVSE current phase angles: AB = 30°, BC = −90°, CA = 150°.
//! * Secondary line currents: `I_a = I_ab − I_ca`, `I_b = I_bc − I_ab`,
//!   `I_c = I_ca − I_bc`.
//! * Primary (delta side) line currents: `I_A = k (I_a − I_c)` and cyclic,
//!   with `k = V_LN,secondary / V_LL,primary = (208/√3) / 480`. For balanced
//!   load this is the secondary current scaled by `√3·k` and shifted by 30°.
//! * kVA ratings become per-line amp limits as `S / (3 · V_LN)` on each side.
//!
//! The primary-side rows are a reconstruction from transformer theory; the
//! original site's matrix is not published.

use num_complex::Complex64;

use super::{ChargingNetwork, Evse, Limit, NetworkConstraint};

pub const SECONDARY_LL_VOLTAGE: f64 = 208.0;
pub const PRIMARY_LL_VOLTAGE: f64 = 480.0;

/// ClipperCreek 32 A pilot set.
pub const CLIPPER_CREEK_32: [f64; 5] = [0.0, 8.0, 16.0, 24.0, 32.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineToLine {
    Ab,
    Bc,
    Ca,
}

impl LineToLine {
    pub fn angle(self) -> f64 {
        match self {
            LineToLine::Ab => 30.0,
            LineToLine::Bc => -90.0,
            LineToLine::Ca => 150.0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            LineToLine::Ab => "AB",
            LineToLine::Bc => "BC",
            LineToLine::Ca => "CA",
        }
    }
}

/// Hardware flavours present at the site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvseKind {
    /// Five-value pilot set {0, 8, 16, 24, 32}.
    ClipperCreek,
    /// 1 A steps from 6 A to 32 A.
    Stepped,
}

fn make_evse(id: String, phase: LineToLine, kind: EvseKind) -> Evse {
    match kind {
        EvseKind::ClipperCreek => Evse::discrete(id, phase.angle(), &CLIPPER_CREEK_32),
        EvseKind::Stepped => Evse::stepped(id, phase.angle(), 6.0, 32.0, 1.0),
    }
}

/// Per-line current limit of a three-phase rating `kva` at line-to-line voltage `v_ll`.
pub fn kva_to_line_amps(kva: f64, v_ll: f64) -> f64 {
    kva * 1000.0 / (3.0 * v_ll / 3f64.sqrt())
}

/// Secondary and primary line-current constraints of one delta-wye transformer.
///
/// `phases[i]` is the connection of EVSE `i`, or `None` when it is fed by a
/// different transformer.
pub fn delta_wye_constraints(
    prefix: &str,
    phases: &[Option<LineToLine>],
    kva: f64,
) -> Vec<NetworkConstraint> {
    use LineToLine::*;
    let coeff = |p: Option<LineToLine>, ab: f64, bc: f64, ca: f64| -> Complex64 {
        Complex64::new(
            match p {
                Some(Ab) => ab,
                Some(Bc) => bc,
                Some(Ca) => ca,
                None => 0.0,
            },
            0.0,
        )
    };
    let k = (SECONDARY_LL_VOLTAGE / 3f64.sqrt()) / PRIMARY_LL_VOLTAGE;
    let secondary = Limit::Constant(kva_to_line_amps(kva, SECONDARY_LL_VOLTAGE));
    let primary = Limit::Constant(kva_to_line_amps(kva, PRIMARY_LL_VOLTAGE));
    // (ab, bc, ca) coefficients per line
    let rows: [(&str, [f64; 3], &Limit); 6] = [
        ("secondary-a", [1.0, 0.0, -1.0], &secondary),
        ("secondary-b", [-1.0, 1.0, 0.0], &secondary),
        ("secondary-c", [0.0, -1.0, 1.0], &secondary),
        ("primary-a", [k, k, -2.0 * k], &primary),
        ("primary-b", [-2.0 * k, k, k], &primary),
        ("primary-c", [k, -2.0 * k, k], &primary),
    ];
    rows.iter()
        .map(|(name, [ab, bc, ca], limit)| NetworkConstraint {
            id: format!("{prefix}-{name}"),
            coefficients: phases.iter().map(|&p| coeff(p, *ab, *bc, *ca)).collect(),
            limit: (*limit).clone(),
            background_load: Vec::new(),
        })
        .collect()
}

/// The 54-EVSE garage panel behind transformer `t1`, at its 150 kVA rating.
pub fn caltech() -> ChargingNetwork {
    caltech_with_capacity(150.0)
}

/// The 54-EVSE panel with transformer `t1` rated at `kva`.
///
/// * Two pods of eight 32 A EVSEs on phase AB, each pod on an 80 A line
///   (one pod stepped hardware, one ClipperCreek).
/// * Nineteen paired lines: 5 pairs on AB, 7 on BC, 7 on CA.
///
/// Phase AB therefore carries 26 EVSEs and BC/CA carry 14 each.
pub fn caltech_with_capacity(kva: f64) -> ChargingNetwork {
    let mut evses = Vec::new();
    let mut phases = Vec::new();
    let mut add = |id: String, phase: LineToLine, kind: EvseKind| {
        evses.push(make_evse(id, phase, kind));
        phases.push(Some(phase));
    };
    for n in 1..=8 {
        add(format!("AV-pod-{n:02}"), LineToLine::Ab, EvseKind::Stepped);
    }
    for n in 1..=8 {
        add(
            format!("CC-pod-{n:02}"),
            LineToLine::Ab,
            EvseKind::ClipperCreek,
        );
    }
    for (phase, count) in [
        (LineToLine::Ab, 10),
        (LineToLine::Bc, 14),
        (LineToLine::Ca, 14),
    ] {
        for n in 1..=count {
            add(
                format!("{}-{n:02}", phase.label()),
                phase,
                EvseKind::Stepped,
            );
        }
    }

    let mut constraints = delta_wye_constraints("t1", &phases, kva);
    for (name, prefix) in [("pod-av", "AV-pod"), ("pod-cc", "CC-pod")] {
        constraints.push(NetworkConstraint {
            id: name.to_string(),
            coefficients: evses
                .iter()
                .map(|e| Complex64::new(if e.id.starts_with(prefix) { 1.0 } else { 0.0 }, 0.0))
                .collect(),
            limit: Limit::Constant(80.0),
            background_load: Vec::new(),
        });
    }
    ChargingNetwork::new(evses, constraints, SECONDARY_LL_VOLTAGE).expect("preset network is valid")
}

/// A 10-EVSE site (4 AB, 3 BC, 3 CA) on one delta-wye transformer rated `kva`.
///
/// EVSEs alternate between stepped and ClipperCreek hardware.
pub fn small_site(kva: f64) -> ChargingNetwork {
    let layout = [
        LineToLine::Ab,
        LineToLine::Ab,
        LineToLine::Ab,
        LineToLine::Ab,
        LineToLine::Bc,
        LineToLine::Bc,
        LineToLine::Bc,
        LineToLine::Ca,
        LineToLine::Ca,
        LineToLine::Ca,
    ];
    let evses: Vec<Evse> = layout
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let kind = if i % 2 == 0 {
                EvseKind::Stepped
            } else {
                EvseKind::ClipperCreek
            };
            make_evse(format!("{}-{:02}", p.label(), i + 1), p, kind)
        })
        .collect();
    let phases: Vec<_> = layout.iter().map(|&p| Some(p)).collect();
    let constraints = delta_wye_constraints("t1", &phases, kva);
    ChargingNetwork::new(evses, constraints, SECONDARY_LL_VOLTAGE).expect("preset network is valid")
}

/// Look up a preset by name: `caltech`, `small-site`.
pub fn by_name(name: &str, kva: Option<f64>) -> Option<ChargingNetwork> {
    match name {
        "caltech" => Some(caltech_with_capacity(kva.unwrap_or(150.0))),
        "small-site" => Some(small_site(kva.unwrap_or(28.0))),
        _ => None,
    }
}
