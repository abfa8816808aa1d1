//! Quadrature rules on the reference triangle and the unit interval.

/// Degree-5 rule on the reference triangle (7 points). Entries are
/// barycentric coordinates `(l1, l2, l3)` and weights that sum to one, so
/// a physical integral is `area * sum(w * f)`.
pub const TRIANGLE_DEG5: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_35;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_15;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Gauss-Legendre points on `[0, 1]` with weights summing to one.
pub const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

pub const GAUSS5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_45),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_triangle(p: i32, q: i32) -> f64 {
        // reference triangle (0,0),(1,0),(0,1) has area 1/2
        TRIANGLE_DEG5
            .iter()
            .map(|(l, w)| w * 0.5 * l[1].powi(p) * l[2].powi(q))
            .sum()
    }

    fn factorial(n: i32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_rule_is_exact_to_degree_five() {
        for p in 0..=5 {
            for q in 0..=(5 - p) {
                let exact = factorial(p) * factorial(q) / factorial(p + q + 2);
                assert!((monomial_triangle(p, q) - exact).abs() < 1e-15, "{p} {q}");
            }
        }
    }

    #[test]
    fn gauss_rules_are_exact() {
        for (rule, deg) in [(&GAUSS2[..], 3), (&GAUSS3[..], 5), (&GAUSS5[..], 9)] {
            for p in 0..=deg {
                let s: f64 = rule.iter().map(|(x, w)| w * x.powi(p)).sum();
                assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }
}
