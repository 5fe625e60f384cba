//! Per-frame energy model of an embedded imaging pipeline.
//!
//! A frame's energy is the sum of four stages: the image sensor, the image
//! signal processor (ISP), the host application processor and the
//! sensor-to-host communication link. Each stage is either *active* (doing
//! the work whose duration scales with the frame's pixel count) or *idle*
//! while the other stages run.
//!
//! Units are fixed throughout: milliwatts, seconds and millijoules
//! (`mW * s = mJ`). Resolutions are in megapixels of `10^6` pixels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIXELS_PER_MP: f64 = 1.0e6;

/// Image sensor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Full sensor resolution `R` in megapixels.
    pub sensor_resolution_mp: f64,
    /// Pixel clock; one pixel is read out per clock period.
    pub clock_hz: f64,
    pub exposure_s: f64,
    pub idle_power_mw: f64,
    /// Active power is `slope * R + offset`.
    pub active_power_slope_mw_per_mp: f64,
    pub active_power_offset_mw: f64,
}

impl SensorParams {
    /// Active-state power, a linear function of the full sensor resolution.
    pub fn active_power_mw(&self) -> f64 {
        self.active_power_slope_mw_per_mp * self.sensor_resolution_mp + self.active_power_offset_mw
    }

    /// Readout time of `frame`: one pixel per clock period.
    pub fn active_time_s(&self, frame: FrameSpec) -> f64 {
        frame.pixels() as f64 / self.clock_hz
    }

    /// Time before the ISP sees the frame: exposure plus readout.
    pub fn sensing_time_s(&self, frame: FrameSpec) -> f64 {
        self.exposure_s + self.active_time_s(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IspParams {
    pub active_power_mw: f64,
    pub idle_power_mw: f64,
    /// ISP processing time is `slope * R_frame + offset`.
    pub isp_time_slope_s_per_mp: f64,
    pub isp_time_offset_s: f64,
}

impl IspParams {
    pub fn isp_time_s(&self, frame: FrameSpec) -> f64 {
        self.isp_time_slope_s_per_mp * frame.resolution_mp() + self.isp_time_offset_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostParams {
    pub active_power_mw: f64,
    pub idle_power_mw: f64,
    /// Application time per megapixel for a key frame (full feature extraction).
    pub app_time_key_s_per_mp: f64,
    /// Application time per megapixel for a flow-compensated non-key frame.
    pub app_time_flow_s_per_mp: f64,
}

impl HostParams {
    pub fn app_time_s(&self, frame: FrameSpec, is_key: bool) -> f64 {
        let per_mp = if is_key {
            self.app_time_key_s_per_mp
        } else {
            self.app_time_flow_s_per_mp
        };
        per_mp * frame.resolution_mp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommParams {
    pub mj_per_mp: f64,
}

/// A frame's spatial size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSpec {
    width_px: u32,
    height_px: u32,
}

impl FrameSpec {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::Domain(format!(
                "frame dimensions must be positive, got {width_px}x{height_px}"
            )));
        }
        Ok(Self {
            width_px,
            height_px,
        })
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn pixels(&self) -> u64 {
        u64::from(self.width_px) * u64::from(self.height_px)
    }

    pub fn resolution_mp(&self) -> f64 {
        self.pixels() as f64 / PIXELS_PER_MP
    }

    /// Shrinks both dimensions by `factor` (integer division, never below one pixel).
    pub fn downsampled(&self, factor: u32) -> Self {
        let factor = factor.max(1);
        Self {
            width_px: (self.width_px / factor).max(1),
            height_px: (self.height_px / factor).max(1),
        }
    }
}

/// Energy of one frame split by pipeline stage, in millijoules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub sensor_mj: f64,
    pub isp_mj: f64,
    pub host_mj: f64,
    pub comm_mj: f64,
    pub total_mj: f64,
}

impl EnergyBreakdown {
    pub fn from_parts(sensor_mj: f64, isp_mj: f64, host_mj: f64, comm_mj: f64) -> Self {
        Self {
            sensor_mj,
            isp_mj,
            host_mj,
            comm_mj,
            total_mj: sensor_mj + isp_mj + host_mj + comm_mj,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Energy charged entirely to the host processor.
    pub fn host_only(host_mj: f64) -> Self {
        Self::from_parts(0.0, 0.0, host_mj, 0.0)
    }
}

impl std::ops::Add for EnergyBreakdown {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::from_parts(
            self.sensor_mj + rhs.sensor_mj,
            self.isp_mj + rhs.isp_mj,
            self.host_mj + rhs.host_mj,
            self.comm_mj + rhs.comm_mj,
        )
    }
}

impl std::ops::AddAssign for EnergyBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for EnergyBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, e| acc + e)
    }
}

/// A complete hardware description: sensor, ISP, host and link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    #[serde(default)]
    pub name: String,
    pub sensor: SensorParams,
    pub isp: IspParams,
    pub host: HostParams,
    pub comm: CommParams,
}

const IMX219_PI3_JSON: &str = include_str!("../../../configs/imx219_pi3.json");

impl EnergyParams {
    /// Sony IMX219 sensor on a Raspberry Pi 3, as shipped in `configs/imx219_pi3.json`.
    pub fn imx219_pi3() -> Self {
        Self::from_json(IMX219_PI3_JSON).expect("shipped preset is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that every parameter is strictly positive and that the
    /// flow-compensated path is cheaper than full analysis.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sensor.sensor_resolution_mp", self.sensor.sensor_resolution_mp),
            ("sensor.clock_hz", self.sensor.clock_hz),
            ("sensor.exposure_s", self.sensor.exposure_s),
            ("sensor.idle_power_mw", self.sensor.idle_power_mw),
            (
                "sensor.active_power_slope_mw_per_mp",
                self.sensor.active_power_slope_mw_per_mp,
            ),
            ("sensor.active_power_offset_mw", self.sensor.active_power_offset_mw),
            ("isp.active_power_mw", self.isp.active_power_mw),
            ("isp.idle_power_mw", self.isp.idle_power_mw),
            ("isp.isp_time_slope_s_per_mp", self.isp.isp_time_slope_s_per_mp),
            ("isp.isp_time_offset_s", self.isp.isp_time_offset_s),
            ("host.active_power_mw", self.host.active_power_mw),
            ("host.idle_power_mw", self.host.idle_power_mw),
            ("host.app_time_key_s_per_mp", self.host.app_time_key_s_per_mp),
            ("host.app_time_flow_s_per_mp", self.host.app_time_flow_s_per_mp),
            ("comm.mj_per_mp", self.comm.mj_per_mp),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and strictly positive, got {value}"
                )));
            }
        }
        if self.host.app_time_flow_s_per_mp >= self.host.app_time_key_s_per_mp {
            return Err(Error::Config(format!(
                "host.app_time_flow_s_per_mp ({}) must be below host.app_time_key_s_per_mp ({})",
                self.host.app_time_flow_s_per_mp, self.host.app_time_key_s_per_mp
            )));
        }
        Ok(())
    }

    pub fn frame_energy(&self, frame: FrameSpec, is_key: bool) -> Result<EnergyBreakdown> {
        frame_energy(&self.sensor, &self.isp, &self.host, &self.comm, frame, is_key)
    }
}

/// Sensor energy: active readout plus idle exposure. Standby is not modelled.
pub fn sensor_energy(p: &SensorParams, frame: FrameSpec) -> Result<f64> {
    let frame_mp = frame.resolution_mp();
    if frame_mp > p.sensor_resolution_mp {
        return Err(Error::Domain(format!(
            "frame resolution {frame_mp} MP exceeds sensor resolution {} MP",
            p.sensor_resolution_mp
        )));
    }
    Ok(p.active_power_mw() * p.active_time_s(frame) + p.idle_power_mw * p.exposure_s)
}

/// ISP energy: active while processing, idle during sensing and the application stage.
pub fn isp_energy(p: &IspParams, frame: FrameSpec, sensor: &SensorParams, t_app_s: f64) -> Result<f64> {
    if !(t_app_s >= 0.0) {
        return Err(Error::Domain(format!(
            "application time must be non-negative, got {t_app_s} s"
        )));
    }
    let idle_s = sensor.sensing_time_s(frame) + t_app_s;
    Ok(p.active_power_mw * p.isp_time_s(frame) + p.idle_power_mw * idle_s)
}

/// Host energy together with the application time it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostEnergy {
    pub energy_mj: f64,
    pub app_time_s: f64,
}

/// Host energy: active during the vision application, idle during sensing and ISP.
pub fn host_energy(
    p: &HostParams,
    frame: FrameSpec,
    sensor: &SensorParams,
    isp: &IspParams,
    is_key: bool,
) -> HostEnergy {
    let app_time_s = p.app_time_s(frame, is_key);
    let idle_s = sensor.sensing_time_s(frame) + isp.isp_time_s(frame);
    HostEnergy {
        energy_mj: p.active_power_mw * app_time_s + p.idle_power_mw * idle_s,
        app_time_s,
    }
}

/// Link energy, linear in transferred pixels.
pub fn comm_energy(p: &CommParams, frame: FrameSpec) -> f64 {
    p.mj_per_mp * frame.resolution_mp()
}

/// Total per-frame energy. The ISP idle term reuses the host's application time.
pub fn frame_energy(
    sensor: &SensorParams,
    isp: &IspParams,
    host: &HostParams,
    comm: &CommParams,
    frame: FrameSpec,
    is_key: bool,
) -> Result<EnergyBreakdown> {
    let sensor_mj = sensor_energy(sensor, frame)?;
    let host = host_energy(host, frame, sensor, isp, is_key);
    let isp_mj = isp_energy(isp, frame, sensor, host.app_time_s)?;
    let comm_mj = comm_energy(comm, frame);
    Ok(EnergyBreakdown::from_parts(sensor_mj, isp_mj, host.energy_mj, comm_mj))
}
