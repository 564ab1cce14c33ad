//! Layout of the three-link network: a mainstream link from origin O0
//! diverging into a primary and a secondary route, each with a metered
//! on-ramp (O1, O2), both discharging freely into destination D0.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Primary,
    Secondary,
}

impl Route {
    pub const BOTH: [Route; 2] = [Route::Primary, Route::Secondary];

    pub fn link(self) -> usize {
        match self {
            Route::Primary => PRIMARY,
            Route::Secondary => SECONDARY,
        }
    }

    /// Origin feeding this route's on-ramp.
    pub fn origin(self) -> usize {
        self.link()
    }
}

/// Link and origin indices. Origin `i` feeds link `i` (O0 the mainstream,
/// O1/O2 the on-ramps of the primary/secondary route).
pub const MAINSTREAM: usize = 0;
pub const PRIMARY: usize = 1;
pub const SECONDARY: usize = 2;
pub const NUM_LINKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainLink {
    pub segments: usize,
    pub lanes: u32,
}

/// Segment indices are zero-based from the upstream end of the route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteLink {
    pub segments: usize,
    pub lanes: u32,
    pub onramp_segment: usize,
    pub bottleneck_segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub mainstream: MainLink,
    pub primary: RouteLink,
    pub secondary: RouteLink,
    pub onramp_lanes: u32,
}

impl Default for Topology {
    fn default() -> Self {
        let route = RouteLink {
            segments: 4,
            lanes: 2,
            onramp_segment: 1,
            bottleneck_segment: 2,
        };
        Self {
            mainstream: MainLink { segments: 2, lanes: 2 },
            primary: route,
            secondary: route,
            onramp_lanes: 1,
        }
    }
}

impl Topology {
    pub fn segments(&self, link: usize) -> usize {
        match link {
            MAINSTREAM => self.mainstream.segments,
            PRIMARY => self.primary.segments,
            SECONDARY => self.secondary.segments,
            _ => panic!("link index {link} out of range"),
        }
    }

    pub fn lanes(&self, link: usize) -> f64 {
        f64::from(match link {
            MAINSTREAM => self.mainstream.lanes,
            PRIMARY => self.primary.lanes,
            SECONDARY => self.secondary.lanes,
            _ => panic!("link index {link} out of range"),
        })
    }

    pub fn route(&self, route: Route) -> &RouteLink {
        match route {
            Route::Primary => &self.primary,
            Route::Secondary => &self.secondary,
        }
    }

    /// Segment of `link` that receives origin `link`'s outflow.
    pub fn origin_segment(&self, origin: usize) -> usize {
        match origin {
            MAINSTREAM => 0,
            PRIMARY => self.primary.onramp_segment,
            SECONDARY => self.secondary.onramp_segment,
            _ => panic!("origin index {origin} out of range"),
        }
    }

    pub fn origin_lanes(&self, origin: usize) -> f64 {
        match origin {
            MAINSTREAM => self.lanes(MAINSTREAM),
            _ => f64::from(self.onramp_lanes),
        }
    }

    pub fn validate(&self) -> ConfigResult<()> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.mainstream.segments == 0 || self.mainstream.lanes == 0 || self.onramp_lanes == 0 {
            return invalid("topology: links need at least one segment and one lane".into());
        }
        if self.primary.segments != self.secondary.segments {
            return invalid("topology: primary and secondary routes must have equal segment counts".into());
        }
        for (name, r) in [("primary", &self.primary), ("secondary", &self.secondary)] {
            if r.lanes == 0 {
                return invalid(format!("topology.{name}: lanes must be positive"));
            }
            if r.onramp_segment >= r.segments || r.bottleneck_segment >= r.segments {
                return invalid(format!("topology.{name}: segment index out of range"));
            }
            if r.bottleneck_segment <= r.onramp_segment {
                return invalid(format!(
                    "topology.{name}: bottleneck must lie strictly downstream of the on-ramp"
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_valid() {
        let t = Topology::default();
        t.validate().unwrap();
        assert_eq!(t.segments(MAINSTREAM), 2);
        assert_eq!(t.segments(PRIMARY), 4);
        assert_eq!(t.origin_lanes(MAINSTREAM), 2.0);
        assert_eq!(t.origin_lanes(PRIMARY), 1.0);
    }

    #[test]
    fn bottleneck_must_be_downstream() {
        let mut t = Topology::default();
        t.primary.bottleneck_segment = 1;
        assert!(t.validate().is_err());
    }

    #[test]
    fn routes_must_be_comparable() {
        let mut t = Topology::default();
        t.secondary.segments = 5;
        assert!(t.validate().is_err());
    }
}
