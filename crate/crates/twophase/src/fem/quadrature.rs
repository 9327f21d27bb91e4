//! Quadrature rules on triangles, segments, and the unit time interval.
//!
//! Triangle rules are given in barycentric coordinates with weights summing
//! to one, so an integral is `|T| · Σ_q w_q f(λ_q)`. Segment and interval
//! rules are given on `[0, 1]`, also with unit weight sum.

/// A symmetric quadrature rule on the reference triangle.
pub struct TriRule {
    /// Barycentric coordinates `(λ0, λ1, λ2)` of the quadrature points.
    pub points: &'static [(f64, f64, f64)],
    /// Weights, summing to 1 (multiply by the triangle area).
    pub weights: &'static [f64],
}

const TRI_DEG1_POINTS: [(f64, f64, f64); 1] = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)];
const TRI_DEG1_WEIGHTS: [f64; 1] = [1.0];

const TRI_DEG2_POINTS: [(f64, f64, f64); 3] = [
    (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
    (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
    (1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0),
];
const TRI_DEG2_WEIGHTS: [f64; 3] = [1.0 / 3.0; 3];

// Degree-4 rule, 6 points in two symmetry orbits.
const A4: f64 = 0.445948490915965;
const B4: f64 = 0.091576213509771;
const WA4: f64 = 0.223381589678011;
const WB4: f64 = 0.109951743655322;
const TRI_DEG4_POINTS: [(f64, f64, f64); 6] = [
    (A4, A4, 1.0 - 2.0 * A4),
    (A4, 1.0 - 2.0 * A4, A4),
    (1.0 - 2.0 * A4, A4, A4),
    (B4, B4, 1.0 - 2.0 * B4),
    (B4, 1.0 - 2.0 * B4, B4),
    (1.0 - 2.0 * B4, B4, B4),
];
const TRI_DEG4_WEIGHTS: [f64; 6] = [WA4, WA4, WA4, WB4, WB4, WB4];

// Degree-6 rule, 12 points in three symmetry orbits.
const A6: f64 = 0.063089014491502;
const B6: f64 = 0.249286745170910;
const C6: f64 = 0.310352451033785;
const D6: f64 = 0.053145049844816;
const WA6: f64 = 0.050844906370207;
const WB6: f64 = 0.116786275726379;
const WC6: f64 = 0.082851075618374;
const TRI_DEG6_POINTS: [(f64, f64, f64); 12] = [
    (A6, A6, 1.0 - 2.0 * A6),
    (A6, 1.0 - 2.0 * A6, A6),
    (1.0 - 2.0 * A6, A6, A6),
    (B6, B6, 1.0 - 2.0 * B6),
    (B6, 1.0 - 2.0 * B6, B6),
    (1.0 - 2.0 * B6, B6, B6),
    (C6, D6, 1.0 - C6 - D6),
    (D6, C6, 1.0 - C6 - D6),
    (C6, 1.0 - C6 - D6, D6),
    (D6, 1.0 - C6 - D6, C6),
    (1.0 - C6 - D6, C6, D6),
    (1.0 - C6 - D6, D6, C6),
];
const TRI_DEG6_WEIGHTS: [f64; 12] = [
    WA6, WA6, WA6, WB6, WB6, WB6, WC6, WC6, WC6, WC6, WC6, WC6,
];

static RULE_DEG1: TriRule = TriRule {
    points: &TRI_DEG1_POINTS,
    weights: &TRI_DEG1_WEIGHTS,
};
static RULE_DEG2: TriRule = TriRule {
    points: &TRI_DEG2_POINTS,
    weights: &TRI_DEG2_WEIGHTS,
};
static RULE_DEG4: TriRule = TriRule {
    points: &TRI_DEG4_POINTS,
    weights: &TRI_DEG4_WEIGHTS,
};
static RULE_DEG6: TriRule = TriRule {
    points: &TRI_DEG6_POINTS,
    weights: &TRI_DEG6_WEIGHTS,
};

/// Returns the smallest available triangle rule exact for polynomials of the
/// given total degree (available: 1, 2, 4, 6).
pub fn tri_rule(degree: usize) -> &'static TriRule {
    match degree {
        0 | 1 => &RULE_DEG1,
        2 => &RULE_DEG2,
        3 | 4 => &RULE_DEG4,
        5 | 6 => &RULE_DEG6,
        d => panic!("no triangle quadrature rule for degree {d}"),
    }
}

/// 3-point Gauss rule on `[0, 1]` as `(ξ, w)` pairs; exact to degree 5.
/// Used for line integrals that pair quadratic bulk traces with piecewise
/// linear interface quantities.
pub const SEG_GAUSS_3: [(f64, f64); 3] = [
    (0.11270166537925831, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.8872983346207417, 5.0 / 18.0),
];

/// 4-point Gauss rule on `[0, 1]` as `(ξ, w)` pairs; exact to degree 7.
/// Used for the time integral in the conservative inertia term.
pub const GAUSS_4: [(f64, f64); 4] = [
    (0.06943184420297371, 0.17392742256872692),
    (0.33000947820757187, 0.3260725774312731),
    (0.6699905217924281, 0.3260725774312731),
    (0.9305681557970262, 0.17392742256872692),
];
