//! Closed-form recovery of skipped proximal coordinate updates.
//!
//! During a sparse epoch, a coordinate `j` that stays outside every sampled
//! instance's support evolves by the same deterministic step each iteration:
//!
//! ```text
//! u <- prox_l1(r * u - eta * z_j, eta * lambda2),    r = 1 - eta * lambda1
//! ```
//!
//! Instead of executing `gap` such steps when the coordinate is next
//! touched, [`recover_coordinate`] reproduces the result in O(1) by
//! classifying the trajectory (decay toward zero, stick at a threshold
//! boundary, or drift across zero) and applying geometric-series closed
//! forms. This is what makes epochs cost O(nnz) instead of O(d) per step.

use crate::objective::prox_l1;

/// Geometric sums attached to the shrink ratio `r = 1 - eta*lambda1`.
///
/// `beta(q) = 1 + r + ... + r^(q-1)` and `alpha(q) = beta(q) / r^q` are the
/// quantities that appear when unrolling `q` proximal steps; `alpha` is
/// strictly increasing in `q` and is what trajectory-length thresholds are
/// compared against. Both are computed through `ln_1p`/`exp_m1` so they stay
/// accurate when `eta*lambda1` is tiny.
#[derive(Debug, Clone, Copy)]
pub struct GeomSeq {
    /// `eta * lambda1`, i.e. `1 - r`. Zero means no ridge shrinkage.
    x: f64,
}

impl GeomSeq {
    pub fn new(eta: f64, lambda1: f64) -> Self {
        let x = eta * lambda1;
        assert!(
            (0.0..1.0).contains(&x),
            "eta*lambda1 must lie in [0, 1), got {x}"
        );
        Self { x }
    }

    /// The per-step shrink ratio `r`.
    pub fn ratio(&self) -> f64 {
        1.0 - self.x
    }

    /// `r^q`, accurate for large `q`.
    pub fn ratio_pow(&self, q: u64) -> f64 {
        if self.x == 0.0 {
            1.0
        } else {
            (q as f64 * (-self.x).ln_1p()).exp()
        }
    }

    /// `beta(q) = (1 - r^q) / (1 - r)`, with `beta(q) = q` when `r = 1`.
    pub fn beta(&self, q: u64) -> f64 {
        if self.x == 0.0 {
            q as f64
        } else {
            -(q as f64 * (-self.x).ln_1p()).exp_m1() / self.x
        }
    }

    /// `alpha(q) = beta(q) / r^q = (r^-q - 1) / (1 - r)`, with
    /// `alpha(q) = q` when `r = 1`. Saturates to `+inf` for huge `q`,
    /// which is harmless in comparisons.
    pub fn alpha(&self, q: u64) -> f64 {
        if self.x == 0.0 {
            q as f64
        } else {
            (q as f64 * -(-self.x).ln_1p()).exp_m1() / self.x
        }
    }

    /// Result of `q` uninterrupted linear steps `u <- r*u - eta*c`:
    /// `r^q * u - beta(q) * eta * c`. This form stays finite even when the
    /// matching `alpha` overflows.
    fn advance(&self, u: f64, q: u64, eta_c: f64) -> f64 {
        self.ratio_pow(q) * u - self.beta(q) * eta_c
    }

    /// Largest `q <= cap` with `alpha(q) <= t` (`t >= 0`). This is the
    /// number of steps a trajectory started at distance `t` (in scaled
    /// units) needs before it would cross zero.
    fn steps_before_crossing(&self, t: f64, cap: u64) -> u64 {
        debug_assert!(t >= 0.0);
        if self.alpha(cap) <= t {
            return cap;
        }
        // Invert alpha in closed form, then nudge to absorb rounding.
        let mut q = if self.x == 0.0 {
            t as u64 // floor; t < alpha(cap) = cap here, so no overflow
        } else {
            ((t * self.x).ln_1p() / -(-self.x).ln_1p()) as u64
        };
        q = q.min(cap);
        while q < cap && self.alpha(q + 1) <= t {
            q += 1;
        }
        while q > 0 && self.alpha(q) > t {
            q -= 1;
        }
        q
    }
}

/// Which trajectory shape a recovery took. Exposed so tests and diagnostics
/// can verify that every shape is exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecoveryBranch {
    /// `gap == 0`: nothing to do.
    NoGap,
    /// `|z| < lambda2`, `u > 0`: decaying toward zero, still positive.
    DecayPosHeld,
    /// `|z| < lambda2`, `u > 0`: reached zero and stuck there.
    DecayPosAbsorbed,
    /// `|z| <= lambda2`, `u == 0`: zero is a fixed point.
    ZeroSticks,
    /// `|z| < lambda2`, `u < 0`: rising toward zero, still negative.
    DecayNegHeld,
    /// `|z| < lambda2`, `u < 0`: reached zero and stuck there.
    DecayNegAbsorbed,
    /// `z == -lambda2`, `u >= 0`: drift exactly cancels the threshold, pure
    /// geometric shrink.
    EdgeNegScale,
    /// `z == -lambda2`, `u < 0`: rising toward zero, still negative.
    EdgeNegHeld,
    /// `z == -lambda2`, `u < 0`: reached zero and stuck there.
    EdgeNegAbsorbed,
    /// `z == +lambda2`, `u <= 0`: pure geometric shrink.
    EdgePosScale,
    /// `z == +lambda2`, `u > 0`: decaying toward zero, still positive.
    EdgePosHeld,
    /// `z == +lambda2`, `u > 0`: reached zero and stuck there.
    EdgePosAbsorbed,
    /// `z > lambda2`, `u <= 0`: steady negative drift, no crossing involved.
    DriftNegFromNonpos,
    /// `z > lambda2`, `u > 0`: still on the positive side of the crossing.
    DriftNegPosHeld,
    /// `z > lambda2`, `u > 0`: crossed zero in one step and kept drifting.
    DriftNegCrossed,
    /// `z > lambda2`, `u > 0`: landed in the dead zone exactly at the gap.
    DriftNegStopZero,
    /// `z > lambda2`, `u > 0`: paused one step at zero, then drifted on.
    DriftNegRestart,
    /// `z < -lambda2`, `u >= 0`: steady positive drift, no crossing.
    DriftPosFromNonneg,
    /// `z < -lambda2`, `u < 0`: still on the negative side of the crossing.
    DriftPosNegHeld,
    /// `z < -lambda2`, `u < 0`: crossed zero in one step and kept drifting.
    DriftPosCrossed,
    /// `z < -lambda2`, `u < 0`: landed in the dead zone exactly at the gap.
    DriftPosStopZero,
    /// `z < -lambda2`, `u < 0`: paused one step at zero, then drifted on.
    DriftPosRestart,
}

impl RecoveryBranch {
    /// Every variant, for exhaustive coverage accounting.
    pub const ALL: [RecoveryBranch; 22] = [
        RecoveryBranch::NoGap,
        RecoveryBranch::DecayPosHeld,
        RecoveryBranch::DecayPosAbsorbed,
        RecoveryBranch::ZeroSticks,
        RecoveryBranch::DecayNegHeld,
        RecoveryBranch::DecayNegAbsorbed,
        RecoveryBranch::EdgeNegScale,
        RecoveryBranch::EdgeNegHeld,
        RecoveryBranch::EdgeNegAbsorbed,
        RecoveryBranch::EdgePosScale,
        RecoveryBranch::EdgePosHeld,
        RecoveryBranch::EdgePosAbsorbed,
        RecoveryBranch::DriftNegFromNonpos,
        RecoveryBranch::DriftNegPosHeld,
        RecoveryBranch::DriftNegCrossed,
        RecoveryBranch::DriftNegStopZero,
        RecoveryBranch::DriftNegRestart,
        RecoveryBranch::DriftPosFromNonneg,
        RecoveryBranch::DriftPosNegHeld,
        RecoveryBranch::DriftPosCrossed,
        RecoveryBranch::DriftPosStopZero,
        RecoveryBranch::DriftPosRestart,
    ];
}

/// Outcome of the shared decay-toward-zero logic.
enum Shrink {
    Held(f64),
    Absorbed,
}

/// `u > 0` decaying under effective drift `c > 0` (never crosses below zero
/// because the threshold catches it first).
fn shrink_from_pos(g: &GeomSeq, u: f64, c: f64, eta: f64, gap: u64) -> Shrink {
    let t = u / (eta * c); // c == 0 gives +inf: pure shrink, never absorbed
    if gap <= g.steps_before_crossing(t, gap) {
        Shrink::Held(g.advance(u, gap, eta * c))
    } else {
        Shrink::Absorbed
    }
}

/// Mirror of [`shrink_from_pos`] for `u < 0` rising under `c < 0`.
fn shrink_from_neg(g: &GeomSeq, u: f64, c: f64, eta: f64, gap: u64) -> Shrink {
    let t = u.abs() / (eta * c).abs();
    if gap <= g.steps_before_crossing(t, gap) {
        Shrink::Held(g.advance(u, gap, eta * c))
    } else {
        Shrink::Absorbed
    }
}

enum Cross {
    Held(f64),
    Crossed(f64),
    StopZero,
    Restarted(f64),
}

/// `u > 0` with drift pushing negative (`c_plus = z + lambda2 > 0`,
/// `c_minus = z - lambda2 >= 0`): decay on the positive side, then possibly
/// cross through the dead zone and continue on the negative side.
fn cross_from_pos(g: &GeomSeq, u: f64, c_plus: f64, c_minus: f64, eta: f64, gap: u64) -> Cross {
    let t = u / (eta * c_plus);
    let q0 = g.steps_before_crossing(t, gap);
    if gap <= q0 {
        return Cross::Held(g.advance(u, gap, eta * c_plus));
    }
    let uq = g.advance(u, q0, eta * c_plus);
    if g.ratio() * uq - eta * c_minus <= 0.0 {
        // The first step past q0 already lands at or below zero through the
        // negative proximal branch, so all remaining steps share one form.
        Cross::Crossed(g.advance(uq, gap - q0, eta * c_minus))
    } else if gap == q0 + 1 {
        Cross::StopZero
    } else {
        // One step parks the iterate exactly in the dead zone; the rest
        // drift out on the negative side starting from zero.
        Cross::Restarted(g.advance(0.0, gap - q0 - 1, eta * c_minus))
    }
}

/// Mirror of [`cross_from_pos`]: `u < 0` with drift pushing positive
/// (`c_minus = z - lambda2 < 0`, `c_plus = z + lambda2 <= 0`).
fn cross_from_neg(g: &GeomSeq, u: f64, c_plus: f64, c_minus: f64, eta: f64, gap: u64) -> Cross {
    let t = u.abs() / (eta * c_minus).abs();
    let q0 = g.steps_before_crossing(t, gap);
    if gap <= q0 {
        return Cross::Held(g.advance(u, gap, eta * c_minus));
    }
    let uq = g.advance(u, q0, eta * c_minus);
    if g.ratio() * uq - eta * c_plus >= 0.0 {
        Cross::Crossed(g.advance(uq, gap - q0, eta * c_plus))
    } else if gap == q0 + 1 {
        Cross::StopZero
    } else {
        Cross::Restarted(g.advance(0.0, gap - q0 - 1, eta * c_plus))
    }
}

/// Recovers the value coordinate `u` would have after `gap` skipped steps
/// `u <- prox_l1(r*u - eta*z, eta*lambda2)`, reporting which trajectory
/// shape applied.
///
/// Requires finite `u` and `z`, positive finite `eta`, nonnegative
/// regularization strengths, and `eta*lambda1 < 1`.
pub fn recover_with_branch(
    u: f64,
    z: f64,
    lambda1: f64,
    lambda2: f64,
    eta: f64,
    gap: u64,
) -> (f64, RecoveryBranch) {
    assert!(u.is_finite() && z.is_finite(), "u and z must be finite");
    assert!(eta.is_finite() && eta > 0.0, "eta must be finite and positive");
    assert!(lambda2 >= 0.0, "lambda2 must be >= 0");
    if gap == 0 {
        return (u, RecoveryBranch::NoGap);
    }
    let g = GeomSeq::new(eta, lambda1);
    let c_plus = z + lambda2;
    let c_minus = z - lambda2;

    if z.abs() < lambda2 {
        // Drift is too weak to escape the dead zone: everything funnels into
        // zero and stays.
        if u > 0.0 {
            match shrink_from_pos(&g, u, c_plus, eta, gap) {
                Shrink::Held(v) => (v, RecoveryBranch::DecayPosHeld),
                Shrink::Absorbed => (0.0, RecoveryBranch::DecayPosAbsorbed),
            }
        } else if u < 0.0 {
            match shrink_from_neg(&g, u, c_minus, eta, gap) {
                Shrink::Held(v) => (v, RecoveryBranch::DecayNegHeld),
                Shrink::Absorbed => (0.0, RecoveryBranch::DecayNegAbsorbed),
            }
        } else {
            (0.0, RecoveryBranch::ZeroSticks)
        }
    } else if z == -lambda2 {
        // On the positive side the threshold exactly cancels the drift,
        // leaving pure geometric shrink; the negative side still rises.
        if u >= 0.0 {
            (g.ratio_pow(gap) * u, RecoveryBranch::EdgeNegScale)
        } else {
            match shrink_from_neg(&g, u, c_minus, eta, gap) {
                Shrink::Held(v) => (v, RecoveryBranch::EdgeNegHeld),
                Shrink::Absorbed => (0.0, RecoveryBranch::EdgeNegAbsorbed),
            }
        }
    } else if z == lambda2 {
        if u <= 0.0 {
            (g.ratio_pow(gap) * u, RecoveryBranch::EdgePosScale)
        } else {
            match shrink_from_pos(&g, u, c_plus, eta, gap) {
                Shrink::Held(v) => (v, RecoveryBranch::EdgePosHeld),
                Shrink::Absorbed => (0.0, RecoveryBranch::EdgePosAbsorbed),
            }
        }
    } else if z > lambda2 {
        if u <= 0.0 {
            (g.advance(u, gap, eta * c_minus), RecoveryBranch::DriftNegFromNonpos)
        } else {
            match cross_from_pos(&g, u, c_plus, c_minus, eta, gap) {
                Cross::Held(v) => (v, RecoveryBranch::DriftNegPosHeld),
                Cross::Crossed(v) => (v, RecoveryBranch::DriftNegCrossed),
                Cross::StopZero => (0.0, RecoveryBranch::DriftNegStopZero),
                Cross::Restarted(v) => (v, RecoveryBranch::DriftNegRestart),
            }
        }
    } else {
        // z < -lambda2
        if u >= 0.0 {
            (g.advance(u, gap, eta * c_plus), RecoveryBranch::DriftPosFromNonneg)
        } else {
            match cross_from_neg(&g, u, c_plus, c_minus, eta, gap) {
                Cross::Held(v) => (v, RecoveryBranch::DriftPosNegHeld),
                Cross::Crossed(v) => (v, RecoveryBranch::DriftPosCrossed),
                Cross::StopZero => (0.0, RecoveryBranch::DriftPosStopZero),
                Cross::Restarted(v) => (v, RecoveryBranch::DriftPosRestart),
            }
        }
    }
}

/// [`recover_with_branch`] without the branch report.
pub fn recover_coordinate(u: f64, z: f64, lambda1: f64, lambda2: f64, eta: f64, gap: u64) -> f64 {
    recover_with_branch(u, z, lambda1, lambda2, eta, gap).0
}

/// Reference semantics for [`recover_coordinate`]: simply run the skipped
/// steps. Used by tests and benchmarks; O(gap) instead of O(1).
pub fn replay_coordinate(u: f64, z: f64, lambda1: f64, lambda2: f64, eta: f64, gap: u64) -> f64 {
    let r = 1.0 - eta * lambda1;
    let mut u = u;
    for _ in 0..gap {
        u = prox_l1(r * u - eta * z, eta * lambda2);
    }
    u
}
