//! Hosts, star-network links and the four-state host power model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FLOPS_RATE: f64 = 20e9;
pub const DEFAULT_TASK_FLOPS: f64 = 200e9;
pub const DEFAULT_BANDWIDTH_BPS: f64 = 1e9;
pub const DEFAULT_LATENCY_S: f64 = 50e-6;
pub const DEFAULT_ELEMENT_BYTES: u64 = 8;
pub const DEFAULT_SUBDOMAIN_ELEMENTS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub id: usize,
    /// FLOP/s
    pub flops_rate: f64,
}

impl HostSpec {
    pub fn new(id: usize, flops_rate: f64) -> Result<Self> {
        if !(flops_rate > 0.0 && flops_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("host flops rate must be positive, got {flops_rate}")));
        }
        Ok(HostSpec { id, flops_rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// bits/s
    pub bandwidth: f64,
    /// seconds
    pub latency: f64,
}

impl LinkSpec {
    pub fn new(bandwidth: f64, latency: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("link bandwidth must be positive, got {bandwidth}")));
        }
        if !(latency >= 0.0 && latency.is_finite()) {
            return Err(Error::InvalidParameter(format!("link latency must be non-negative, got {latency}")));
        }
        Ok(LinkSpec { bandwidth, latency })
    }
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec { bandwidth: DEFAULT_BANDWIDTH_BPS, latency: DEFAULT_LATENCY_S }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HostState {
    Computing,
    Communicating,
    IdleUnscaled,
    IdleScaled,
}

impl HostState {
    pub const ALL: [HostState; 4] =
        [HostState::Computing, HostState::Communicating, HostState::IdleUnscaled, HostState::IdleScaled];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_idle(self) -> bool {
        matches!(self, HostState::IdleUnscaled | HostState::IdleScaled)
    }
}

/// Host power draw in watts per state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub computing: f64,
    pub idle_unscaled: f64,
    pub idle_scaled: f64,
    pub communicating: f64,
}

impl Default for PowerModel {
    /// 125 W busy, 110 W idle at minimum frequency, and 1.5 W less than busy
    /// when idle at full frequency.
    fn default() -> Self {
        PowerModel { computing: 125.0, idle_unscaled: 123.5, idle_scaled: 110.0, communicating: 125.0 }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.computing, self.idle_unscaled, self.idle_scaled, self.communicating];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!("power levels must be finite and non-negative: {self:?}")));
        }
        if !(self.idle_scaled <= self.idle_unscaled && self.idle_unscaled <= self.computing) {
            return Err(Error::InvalidParameter(format!(
                "power levels must satisfy idle_scaled <= idle_unscaled <= computing: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn draw(&self, state: HostState) -> f64 {
        power_draw(state, self)
    }
}

pub fn power_draw(state: HostState, model: &PowerModel) -> f64 {
    match state {
        HostState::Computing => model.computing,
        HostState::Communicating => model.communicating,
        HostState::IdleUnscaled => model.idle_unscaled,
        HostState::IdleScaled => model.idle_scaled,
    }
}

pub fn task_duration(flops: f64, host: &HostSpec) -> f64 {
    flops / host.flops_rate
}

/// Latency plus serialisation time of `bytes` over one link. A host-to-host
/// transfer crosses two identical uncontended links of the star, which is
/// still a single latency and bandwidth term.
pub fn transfer_time(bytes: u64, link: &LinkSpec) -> f64 {
    link.latency + (8.0 * bytes as f64) / link.bandwidth
}

/// Everything the engine needs to turn work and data into time and power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub hosts: Vec<HostSpec>,
    pub link: LinkSpec,
    pub power: PowerModel,
    pub element_bytes: u64,
    /// Elements per boundary exchange and per checkpointed subdomain.
    pub subdomain_elements: u64,
}

impl Platform {
    pub fn homogeneous(n: usize, flops_rate: f64, link: LinkSpec, power: PowerModel) -> Result<Self> {
        power.validate()?;
        let hosts = (0..n).map(|id| HostSpec::new(id, flops_rate)).collect::<Result<Vec<_>>>()?;
        Ok(Platform {
            hosts,
            link,
            power,
            element_bytes: DEFAULT_ELEMENT_BYTES,
            subdomain_elements: DEFAULT_SUBDOMAIN_ELEMENTS,
        })
    }

    /// Default platform: 20 GFLOP/s hosts, 1 Gbit/s links with 50 us latency.
    pub fn with_defaults(n: usize) -> Self {
        Platform::homogeneous(n, DEFAULT_FLOPS_RATE, LinkSpec::default(), PowerModel::default())
            .expect("default platform is valid")
    }

    pub fn len(&self) -> usize {
        self.hosts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hosts.is_empty()
    }

    pub fn subdomain_bytes(&self) -> u64 {
        self.element_bytes * self.subdomain_elements
    }

    /// Time to move one boundary exchange or one subdomain checkpoint.
    pub fn exchange_time(&self) -> f64 {
        transfer_time(self.subdomain_bytes(), &self.link)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn durations() {
        let host = HostSpec::new(0, 20e9).unwrap();
        assert_eq!(task_duration(200e9, &host), 10.0);
        assert_eq!(task_duration(0.0, &host), 0.0);
        assert_eq!(task_duration(100e9, &host), 5.0);
    }

    #[test]
    fn transfers() {
        let gbit = LinkSpec::new(1e9, 50e-6).unwrap();
        assert_eq!(transfer_time(0, &gbit), 5.0e-5);
        assert_relative_eq!(transfer_time(800_000, &gbit), 6.45e-3, max_relative = 1e-12);
        let fast = LinkSpec::new(2e9, 0.0).unwrap();
        assert_relative_eq!(transfer_time(800_000, &fast), 3.2e-3, max_relative = 1e-12);
        assert_relative_eq!(Platform::with_defaults(4).exchange_time(), 6.45e-3, max_relative = 1e-12);
    }

    #[test]
    fn default_power_levels() {
        let p = PowerModel::default();
        assert_eq!(power_draw(HostState::Computing, &p), 125.0);
        assert_eq!(power_draw(HostState::IdleScaled, &p), 110.0);
        assert_eq!(power_draw(HostState::IdleUnscaled, &p), 123.5);
        assert_eq!(power_draw(HostState::Communicating, &p), 125.0);
        assert_relative_eq!((p.computing - p.idle_scaled) / p.computing, 0.12, max_relative = 1e-12);
        p.validate().unwrap();
    }

    #[test]
    fn invalid_specs() {
        assert!(HostSpec::new(0, 0.0).is_err());
        assert!(LinkSpec::new(0.0, 0.0).is_err());
        assert!(LinkSpec::new(1.0, -1.0).is_err());
        let bad = PowerModel { idle_scaled: 130.0, ..PowerModel::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn monotone_in_size() {
        let link = LinkSpec::default();
        let host = HostSpec::new(0, 20e9).unwrap();
        let mut prev = (0.0, 0.0);
        for k in 0..50u64 {
            let t = (task_duration(k as f64 * 1e9, &host), transfer_time(k * 10_000, &link));
            assert!(t.0 >= prev.0 && t.1 >= prev.1);
            prev = t;
        }
    }
}
