//! Mirror bounces of a target trajectory off the walls of a rectangle.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Successive bounces allowed within a single transition.
pub const MAX_REFLECTIONS: usize = 8;

/// A closed axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    /// `[-20, 20] × [-10, 10]`.
    fn default() -> Self {
        Region {
            x_min: -20.0,
            x_max: 20.0,
            y_min: -10.0,
            y_max: 10.0,
        }
    }
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn strictly_contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x_min && p[0] < self.x_max && p[1] > self.y_min && p[1] < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Vertices in counter-clockwise order: upper right, upper left, lower
    /// left, lower right. Wall `j` joins vertex `j` and vertex `j+1 mod 4`.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
        ]
    }

    fn snap(&self, p: [f64; 2], tol: f64) -> [f64; 2] {
        let clamp = |v: f64, lo: f64, hi: f64| {
            if v < lo && v > lo - tol {
                lo
            } else if v > hi && v < hi + tol {
                hi
            } else {
                v
            }
        };
        [
            clamp(p[0], self.x_min, self.x_max),
            clamp(p[1], self.y_min, self.y_max),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    Top,
    Left,
    Bottom,
    Right,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Top, Wall::Left, Wall::Bottom, Wall::Right];

    /// Unit normal of the wall.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Wall::Top => [0.0, 1.0],
            Wall::Left => [-1.0, 0.0],
            Wall::Bottom => [0.0, -1.0],
            Wall::Right => [1.0, 0.0],
        }
    }

    /// Mirror image of `p` across the line containing the wall.
    pub fn mirror(self, region: &Region, p: [f64; 2]) -> [f64; 2] {
        match self {
            Wall::Top => [p[0], 2.0 * region.y_max - p[1]],
            Wall::Bottom => [p[0], 2.0 * region.y_min - p[1]],
            Wall::Left => [2.0 * region.x_min - p[0], p[1]],
            Wall::Right => [2.0 * region.x_max - p[0], p[1]],
        }
    }

    /// Fraction of `s` travelled from `origin` before touching this wall.
    fn hit_fraction(self, region: &Region, origin: [f64; 2], s: [f64; 2]) -> f64 {
        match self {
            Wall::Top => (region.y_max - origin[1]) / s[1],
            Wall::Bottom => (region.y_min - origin[1]) / s[1],
            Wall::Left => (region.x_min - origin[0]) / s[0],
            Wall::Right => (region.x_max - origin[0]) / s[0],
        }
    }
}

fn angle(v: [f64; 2]) -> f64 {
    v[1].atan2(v[0]).rem_euclid(TAU)
}

/// Identifies the wall crossed by the ray from `origin` along `s`.
///
/// The direction of `s` is located between the directions to consecutive
/// vertices. A ray through a vertex belongs to the lower-indexed wall.
pub fn exit_wall(region: &Region, origin: [f64; 2], s: [f64; 2]) -> Wall {
    let corners = region.corners();
    let corner_angles: Vec<f64> = corners
        .iter()
        .map(|c| angle([c[0] - origin[0], c[1] - origin[1]]))
        .collect();
    let theta_s = angle(s);
    for j in 0..4 {
        let start = corner_angles[j];
        let end = corner_angles[(j + 1) % 4];
        let span = (end - start).rem_euclid(TAU);
        let offset = (theta_s - start).rem_euclid(TAU);
        if offset <= span {
            return Wall::ALL[j];
        }
    }
    // Unreachable for an interior origin: the four arcs cover the circle.
    Wall::ALL[3]
}

/// Applies the law of reflection to a step that left the region.
///
/// `prev_position` must lie in the region. Returns the bounced position and
/// the velocity, which points along the reflected remainder of the step and
/// keeps the speed `‖proposed_velocity‖`. Repeats for steps that leave the
/// region again, up to [`MAX_REFLECTIONS`] bounces.
pub fn reflect(
    region: &Region,
    prev_position: [f64; 2],
    proposed_position: [f64; 2],
    proposed_velocity: [f64; 2],
) -> Result<([f64; 2], [f64; 2])> {
    let speed = proposed_velocity[0].hypot(proposed_velocity[1]);
    let mut origin = prev_position;
    let mut target = proposed_position;
    let mut velocity = proposed_velocity;
    for _ in 0..MAX_REFLECTIONS {
        if region.contains(target) {
            return Ok((target, velocity));
        }
        let s = [target[0] - origin[0], target[1] - origin[1]];
        let wall = exit_wall(region, origin, s);
        let lambda = wall.hit_fraction(region, origin, s);
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::numerical(format!(
                "reflection off {wall:?} has hit fraction {lambda}"
            )));
        }
        let head = [lambda * s[0], lambda * s[1]];
        let tail = [s[0] - head[0], s[1] - head[1]];
        let n = wall.normal();
        let along = n[0] * tail[0] + n[1] * tail[1];
        let bounced = [tail[0] - 2.0 * along * n[0], tail[1] - 2.0 * along * n[1]];

        target = region.snap(
            [
                origin[0] + s[0] - 2.0 * along * n[0],
                origin[1] + s[1] - 2.0 * along * n[1],
            ],
            1e-9,
        );
        let len = bounced[0].hypot(bounced[1]);
        if len > 0.0 {
            velocity = [bounced[0] / len * speed, bounced[1] / len * speed];
        }
        origin = region.snap([origin[0] + head[0], origin[1] + head[1]], 1e-9);
    }
    if region.contains(target) {
        Ok((target, velocity))
    } else {
        Err(Error::numerical(format!(
            "step from {prev_position:?} to {proposed_position:?} needs more than {MAX_REFLECTIONS} reflections"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn r() -> Region {
        Region::default()
    }

    #[test]
    fn mirror_top_wall() {
        let (p, v) = reflect(&r(), [0.0, 9.0], [0.0, 11.0], [0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn mirror_right_wall() {
        let (p, v) = reflect(&r(), [19.0, 0.0], [21.0, 0.0], [2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 19.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exit_wall_by_direction() {
        let region = r();
        assert_eq!(exit_wall(&region, [0.0, 0.0], [0.0, 1.0]), Wall::Top);
        assert_eq!(exit_wall(&region, [0.0, 0.0], [-1.0, 0.0]), Wall::Left);
        assert_eq!(exit_wall(&region, [0.0, 0.0], [0.0, -1.0]), Wall::Bottom);
        assert_eq!(exit_wall(&region, [0.0, 0.0], [1.0, 0.0]), Wall::Right);
        assert_eq!(exit_wall(&region, [0.0, 0.0], [1.0, -0.1]), Wall::Right);
        // Exactly through the upper-left vertex: lower index (top) wins.
        assert_eq!(exit_wall(&region, [0.0, 0.0], [-2.0, 1.0]), Wall::Top);
        // Exactly through the upper-right vertex.
        assert_eq!(exit_wall(&region, [0.0, 0.0], [2.0, 1.0]), Wall::Top);
    }

    #[test]
    fn oblique_bounce() {
        // Leaves through the top wall at (1, 10), ends 1 unit beyond it.
        let (p, v) = reflect(&r(), [0.0, 9.0], [2.0, 11.0], [1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 9.0, epsilon = 1e-12);
        let s = 2f64.sqrt();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[0].hypot(v[1]), s, epsilon = 1e-12);
    }

    #[test]
    fn double_bounce_near_corner() {
        // Crosses the right wall, then the bounced remainder crosses the top.
        let (p, _) = reflect(&r(), [19.5, 9.5], [21.0, 10.8], [1.5, 1.3]).unwrap();
        assert!(r().contains(p));
        assert_abs_diff_eq!(p[0], 19.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 9.2, epsilon = 1e-12);
    }

    #[test]
    fn too_many_bounces_is_an_error() {
        // A step many region-widths long cannot settle within the cap.
        let err = reflect(&r(), [0.0, 0.0], [1000.0, 3.0], [1000.0, 3.0]);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn randomized_single_bounce_properties() {
        let region = r();
        let mut rng = RngStream::new(17, 0);
        let mut checked = 0;
        while checked < 10_000 {
            let prev = [rng.gen_range(-20.0..20.0), rng.gen_range(-10.0..10.0)];
            let step = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let proposed = [prev[0] + step[0], prev[1] + step[1]];
            if region.contains(proposed) {
                continue;
            }
            let vel = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let wall = exit_wall(&region, prev, step);
            let (p, v) = reflect(&region, prev, proposed, vel).unwrap();
            assert!(region.contains(p));
            assert_abs_diff_eq!(v[0].hypot(v[1]), vel[0].hypot(vel[1]), epsilon = 1e-12);
            if region.contains(wall.mirror(&region, proposed)) {
                let back = wall.mirror(&region, p);
                assert_abs_diff_eq!(back[0], proposed[0], epsilon = 1e-10);
                assert_abs_diff_eq!(back[1], proposed[1], epsilon = 1e-10);
            }
            checked += 1;
        }
    }
}
