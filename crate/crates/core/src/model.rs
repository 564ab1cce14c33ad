//! Discrete-time two-class METANET dynamics of the three-link network.
//!
//! Every class keeps its own density and speed; the classes interact through
//! a shared pce-weighted effective density used by the fundamental diagram,
//! the anticipation term and the origin supply term.
//!
//! Flows across segment boundaries are the usual METANET demands `ρ·v·λ`,
//! except that when a receiving segment would be pushed past jam density the
//! flows entering it (upstream and on-ramp alike) are scaled down by a common
//! factor. Vehicles that cannot enter stay upstream, so the jam-density bound
//! never destroys vehicles.

use crate::error::ModelError;
use crate::params::{ModelParams, PerClass, VehicleClassParams, Weather, NUM_CLASSES};
use crate::topology::{Route, Topology, MAINSTREAM, NUM_LINKS, PRIMARY, SECONDARY};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentState {
    /// veh/km/lane per class.
    pub density: PerClass,
    /// km/h per class.
    pub speed: PerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OriginState {
    /// Waiting vehicles per class.
    pub queue: PerClass,
    /// Demand applied during the last step (veh/h per class).
    pub demand: PerClass,
}

impl OriginState {
    pub fn total_queue(&self) -> f64 {
        self.queue.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub links: [Vec<SegmentState>; NUM_LINKS],
    pub origins: [OriginState; NUM_LINKS],
    pub step: usize,
}

/// Control inputs applied to the network during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    /// Fraction of the mainstream outflow sent to the primary route.
    pub dta: f64,
    /// Metering rates of the primary and secondary on-ramps.
    pub rm: [f64; 2],
}

impl Controls {
    pub const NO_CONTROL: Controls = Controls {
        dta: 0.5,
        rm: [1.0, 1.0],
    };

    pub fn to_array(self) -> [f64; 3] {
        [self.dta, self.rm[0], self.rm[1]]
    }

    pub fn squared_distance(self, other: Controls) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Demand per origin (O0, O1, O2) and class, veh/h.
pub type Demands = [PerClass; NUM_LINKS];

/// Vehicle flows crossing the network boundary during one step (veh/h).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryFlows {
    /// Demand arriving at the origins.
    pub inflow: f64,
    /// Flow leaving the routes into the destination.
    pub outflow: f64,
    /// Flow released from each origin into the network, per class.
    pub origin_flow: [PerClass; NUM_LINKS],
}

#[inline]
pub fn effective_density(seg: &SegmentState, pce: &PerClass) -> f64 {
    seg.density.iter().zip(pce).map(|(r, p)| r * p).sum()
}

/// `V(ρ) = v_free · exp(−(1/a)·(ρ/ρ_cr)^a)`, floored at `v_min`.
pub fn equilibrium_speed(rho_eff: f64, cls: &VehicleClassParams, v_min: f64) -> f64 {
    let ratio = rho_eff.max(0.0) / cls.rho_cr;
    (cls.v_free * (-(ratio.powf(cls.a_m)) / cls.a_m).exp()).max(v_min)
}

/// Capacity data of one origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginSupply {
    /// veh/h/lane.
    pub capacity: f64,
    pub lanes: f64,
}

impl OriginSupply {
    pub fn of(origin: usize, topo: &Topology, params: &ModelParams) -> Self {
        Self {
            capacity: if origin == MAINSTREAM {
                params.c_main
            } else {
                params.c_onramp
            },
            lanes: topo.origin_lanes(origin),
        }
    }
}

/// Per-class origin flow: the least of available traffic, metered capacity
/// and the receiving segment's supply, split in proportion to each class's
/// available traffic.
pub fn origin_outflow(
    origin: &OriginState,
    rate: f64,
    downstream: &SegmentState,
    supply: OriginSupply,
    params: &ModelParams,
    weather: Weather,
) -> PerClass {
    let th = params.step_hours();
    let available: PerClass = std::array::from_fn(|c| (origin.demand[c] + origin.queue[c] / th).max(0.0));
    let total: f64 = available.iter().sum();
    if total <= 0.0 {
        return [0.0; NUM_CLASSES];
    }
    let cap = supply.capacity * supply.lanes;
    let rho_eff = effective_density(downstream, &params.pce);
    let rho_cr = params.weather(weather).rho_cr[0];
    let receiving = (cap * (params.rho_max - rho_eff) / (params.rho_max - rho_cr)).clamp(0.0, cap);
    let flow = total.min(cap * rate.clamp(0.0, 1.0)).min(receiving);
    std::array::from_fn(|c| flow * available[c] / total)
}

impl NetworkState {
    /// Empty network with every class at free-flow speed.
    pub fn empty(topo: &Topology, params: &ModelParams, weather: Weather) -> Self {
        let v_free = params.weather(weather).v_free;
        let seg = SegmentState {
            density: [0.0; NUM_CLASSES],
            speed: v_free,
        };
        Self {
            links: std::array::from_fn(|l| vec![seg; topo.segments(l)]),
            origins: [OriginState::default(); NUM_LINKS],
            step: 0,
        }
    }

    fn check(&self, topo: &Topology) -> Result<(), ModelError> {
        for l in 0..NUM_LINKS {
            if self.links[l].len() != topo.segments(l) {
                return Err(ModelError::Topology(format!(
                    "link {l} holds {} segments, topology declares {}",
                    self.links[l].len(),
                    topo.segments(l)
                )));
            }
        }
        let finite = self
            .links
            .iter()
            .flatten()
            .all(|s| s.density.iter().chain(&s.speed).all(|v| v.is_finite()))
            && self
                .origins
                .iter()
                .all(|o| o.queue.iter().chain(&o.demand).all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(ModelError::NonFinite {
                what: "state",
                step: self.step,
            })
        }
    }

    /// Vehicles on the links and in the origin queues.
    pub fn vehicles(&self, topo: &Topology, params: &ModelParams) -> f64 {
        let l_km = params.segment_length_km();
        let on_links: f64 = (0..NUM_LINKS)
            .map(|l| {
                let lanes = topo.lanes(l);
                self.links[l]
                    .iter()
                    .map(|s| s.density.iter().sum::<f64>() * lanes * l_km)
                    .sum::<f64>()
            })
            .sum();
        on_links + self.origins.iter().map(OriginState::total_queue).sum::<f64>()
    }

    fn link_vehicles(&self, link: usize, topo: &Topology, params: &ModelParams) -> f64 {
        let scale = topo.lanes(link) * params.segment_length_km();
        self.links[link]
            .iter()
            .map(|s| s.density.iter().sum::<f64>() * scale)
            .sum()
    }
}

/// Time spent in the network during one step (veh·h).
pub fn compute_step_tts(x: &NetworkState, topo: &Topology, params: &ModelParams) -> f64 {
    params.step_hours() * x.vehicles(topo, params)
}

/// Step TTS of the primary route (its segments and on-ramp queue) minus that
/// of the secondary route (veh·h).
pub fn route_tts_difference(x: &NetworkState, topo: &Topology, params: &ModelParams) -> f64 {
    let route = |link: usize| x.link_vehicles(link, topo, params) + x.origins[link].total_queue();
    params.step_hours() * (route(PRIMARY) - route(SECONDARY))
}

/// Effective density of the route's bottleneck segment (veh/km/lane).
pub fn bottleneck_density(x: &NetworkState, route: Route, topo: &Topology, params: &ModelParams) -> f64 {
    let seg = &x.links[route.link()][topo.route(route).bottleneck_segment];
    effective_density(seg, &params.pce)
}

fn scale(v: &mut PerClass, s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

fn add(a: PerClass, b: PerClass) -> PerClass {
    [a[0] + b[0], a[1] + b[1]]
}

/// Advances the network by one step of `params.step_s` seconds.
pub fn step_network(
    x: &NetworkState,
    u: Controls,
    demand: &Demands,
    weather: Weather,
    topo: &Topology,
    params: &ModelParams,
) -> Result<(NetworkState, BoundaryFlows), ModelError> {
    x.check(topo)?;
    let step = x.step;
    if !u.to_array().iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite {
            what: "control input",
            step,
        });
    }
    if !demand.iter().flatten().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite { what: "demand", step });
    }

    let (classes, tau) = params.weather_params(weather);
    let th = params.step_hours();
    let l_km = params.segment_length_km();
    let pce = &params.pce;
    let n: [usize; NUM_LINKS] = std::array::from_fn(|l| topo.segments(l));
    let lanes: [f64; NUM_LINKS] = std::array::from_fn(|l| topo.lanes(l));
    let attach: [usize; NUM_LINKS] = std::array::from_fn(|o| topo.origin_segment(o));
    let split = [1.0, u.dta.clamp(0.0, 1.0), 1.0 - u.dta.clamp(0.0, 1.0)];
    let rates = [1.0, u.rm[0], u.rm[1]];

    let eff: [Vec<f64>; NUM_LINKS] =
        std::array::from_fn(|l| x.links[l].iter().map(|s| effective_density(s, pce)).collect());

    let mut origins = x.origins;
    for (o, d) in origins.iter_mut().zip(demand) {
        o.demand = d.map(|v| v.max(0.0));
    }
    let mut origin_flow: [PerClass; NUM_LINKS] = std::array::from_fn(|o| {
        origin_outflow(
            &origins[o],
            rates[o],
            &x.links[o][attach[o]],
            OriginSupply::of(o, topo, params),
            params,
            weather,
        )
    });

    // Segment demands ρ·v·λ, reduced below where the receiver is full.
    let mut out: [Vec<PerClass>; NUM_LINKS] = std::array::from_fn(|l| {
        x.links[l]
            .iter()
            .map(|s| std::array::from_fn(|c| s.density[c] * s.speed[c] * lanes[l]))
            .collect()
    });

    // Largest fraction of `inflow` segment (l, i) can take without exceeding
    // jam density, given its final outflow.
    let admissible = |l: usize, i: usize, inflow: PerClass, outflow: PerClass| -> f64 {
        let k = th / (l_km * lanes[l]);
        let seg = &x.links[l][i];
        let base: f64 = (0..NUM_CLASSES)
            .map(|c| pce[c] * (seg.density[c] - k * outflow[c]))
            .sum();
        let incoming: f64 = (0..NUM_CLASSES).map(|c| pce[c] * k * inflow[c]).sum();
        if incoming <= 0.0 {
            1.0
        } else {
            ((params.rho_max - base) / incoming).clamp(0.0, 1.0)
        }
    };

    let ms_out = out[MAINSTREAM][n[MAINSTREAM] - 1];
    let mut head_factor = [1.0; NUM_LINKS];
    for l in [PRIMARY, SECONDARY] {
        for i in (0..n[l]).rev() {
            let upstream = if i == 0 {
                ms_out.map(|q| q * split[l])
            } else {
                out[l][i - 1]
            };
            let ramp = if i == attach[l] {
                origin_flow[l]
            } else {
                [0.0; NUM_CLASSES]
            };
            let s = admissible(l, i, add(upstream, ramp), out[l][i]);
            if s < 1.0 {
                if i == 0 {
                    head_factor[l] = s;
                } else {
                    scale(&mut out[l][i - 1], s);
                }
                if i == attach[l] {
                    scale(&mut origin_flow[l], s);
                }
            }
        }
    }
    let diverge = [PRIMARY, SECONDARY]
        .into_iter()
        .filter(|&l| split[l] > 0.0)
        .map(|l| head_factor[l])
        .fold(1.0_f64, f64::min);
    scale(&mut out[MAINSTREAM][n[MAINSTREAM] - 1], diverge);
    let ms_out = out[MAINSTREAM][n[MAINSTREAM] - 1];
    for i in (0..n[MAINSTREAM]).rev() {
        let upstream = if i == 0 {
            [0.0; NUM_CLASSES]
        } else {
            out[MAINSTREAM][i - 1]
        };
        let origin = if i == attach[MAINSTREAM] {
            origin_flow[MAINSTREAM]
        } else {
            [0.0; NUM_CLASSES]
        };
        let s = admissible(MAINSTREAM, i, add(upstream, origin), out[MAINSTREAM][i]);
        if s < 1.0 {
            if i > 0 {
                scale(&mut out[MAINSTREAM][i - 1], s);
            }
            if i == attach[MAINSTREAM] {
                scale(&mut origin_flow[MAINSTREAM], s);
            }
        }
    }

    let inflow_of = |l: usize, i: usize| -> PerClass {
        let upstream = match (l, i) {
            (MAINSTREAM, 0) => [0.0; NUM_CLASSES],
            (_, 0) => ms_out.map(|q| q * split[l]),
            _ => out[l][i - 1],
        };
        if i == attach[l] {
            add(upstream, origin_flow[l])
        } else {
            upstream
        }
    };

    // Node coupling at the diverge: the mainstream tail sees a density
    // weighted towards the fuller route head.
    let heads = [eff[PRIMARY][0], eff[SECONDARY][0]];
    let head_sum: f64 = heads.iter().sum();
    let diverge_density = if head_sum > 0.0 {
        heads.iter().map(|r| r * r).sum::<f64>() / head_sum
    } else {
        0.0
    };

    let relax = params.step_s / tau;
    let anticipation = params.nu * params.step_s / (tau * l_km);
    let mut links: [Vec<SegmentState>; NUM_LINKS] = std::array::from_fn(|l| Vec::with_capacity(n[l]));
    for l in 0..NUM_LINKS {
        let k = th / (l_km * lanes[l]);
        for i in 0..n[l] {
            let seg = &x.links[l][i];
            let rho_e = eff[l][i];
            let inflow = inflow_of(l, i);
            let rho_down = if i + 1 < n[l] {
                eff[l][i + 1]
            } else if l == MAINSTREAM {
                diverge_density
            } else {
                rho_e
            };
            let merge_flow: f64 = if l != MAINSTREAM && i == attach[l] {
                (0..NUM_CLASSES).map(|c| pce[c] * origin_flow[l][c]).sum()
            } else {
                0.0
            };
            let mut next = SegmentState::default();
            for c in 0..NUM_CLASSES {
                let rho = seg.density[c] + k * (inflow[c] - out[l][i][c]);
                next.density[c] = rho.clamp(0.0, params.rho_max);

                let v = seg.speed[c];
                let v_up = match (l, i) {
                    (MAINSTREAM, 0) => v,
                    (_, 0) => x.links[MAINSTREAM][n[MAINSTREAM] - 1].speed[c],
                    _ => x.links[l][i - 1].speed[c],
                };
                let target = equilibrium_speed(rho_e, &classes[c], params.v_min);
                let mut v_next = v + relax * (target - v) + th / l_km * v * (v_up - v)
                    - anticipation * (rho_down - rho_e) / (rho_e + params.chi);
                if merge_flow > 0.0 {
                    v_next -= params.delta * th * merge_flow * v / (l_km * lanes[l] * (rho_e + params.chi));
                }
                next.speed[c] = v_next.clamp(params.v_min, classes[c].v_free);
            }
            links[l].push(next);
        }
    }

    for (o, flow) in origins.iter_mut().zip(&origin_flow) {
        for c in 0..NUM_CLASSES {
            o.queue[c] = (o.queue[c] + th * (o.demand[c] - flow[c])).max(0.0);
        }
    }

    let inflow = demand.iter().flatten().map(|d| d.max(0.0)).sum();
    let outflow = [PRIMARY, SECONDARY]
        .iter()
        .map(|&l| out[l][n[l] - 1].iter().sum::<f64>())
        .sum();
    let next = NetworkState {
        links,
        origins,
        step: step + 1,
    };
    next.check(topo)?;
    Ok((
        next,
        BoundaryFlows {
            inflow,
            outflow,
            origin_flow,
        },
    ))
}
