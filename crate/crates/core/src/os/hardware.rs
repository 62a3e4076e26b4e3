use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::OsError;

/// Hardware and connectivity settings. Writes go through
/// [`HardwareState::set`], which keeps `airplane_mode ⇒ radios off`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareState {
    pub airplane_mode: bool,
    pub wifi: bool,
    pub bluetooth: bool,
    pub cellular: bool,
    pub battery_pct: u8,
    pub charging: bool,
    pub volume: u8,
    pub dnd: bool,
    pub brightness: u8,
}

impl Default for HardwareState {
    fn default() -> Self {
        Self {
            airplane_mode: false,
            wifi: true,
            bluetooth: false,
            cellular: true,
            battery_pct: 80,
            charging: false,
            volume: 50,
            dnd: false,
            brightness: 60,
        }
    }
}

pub const HARDWARE_FIELDS: [&str; 9] = [
    "airplane_mode",
    "wifi",
    "bluetooth",
    "cellular",
    "battery_pct",
    "charging",
    "volume",
    "dnd",
    "brightness",
];

impl HardwareState {
    pub fn invariant_holds(&self) -> bool {
        !self.airplane_mode || !(self.wifi || self.bluetooth || self.cellular)
    }

    /// Applies one field write with cascades. Turning airplane mode on shuts
    /// every radio off; turning it off restores nothing.
    pub fn set(&mut self, field: &str, value: &Value) -> Result<(), OsError> {
        let out_of_domain = || OsError::OutOfDomain { field: field.to_string(), value: value.to_string() };
        let flag = || value.as_bool().ok_or_else(out_of_domain);
        let pct = || {
            value
                .as_u64()
                .filter(|v| *v <= 100)
                .map(|v| v as u8)
                .ok_or_else(out_of_domain)
        };
        match field {
            "airplane_mode" => {
                self.airplane_mode = flag()?;
                if self.airplane_mode {
                    self.wifi = false;
                    self.bluetooth = false;
                    self.cellular = false;
                }
            }
            "wifi" | "bluetooth" | "cellular" => {
                let on = flag()?;
                if on && self.airplane_mode {
                    return Err(OsError::AirplaneModeActive(field.to_string()));
                }
                match field {
                    "wifi" => self.wifi = on,
                    "bluetooth" => self.bluetooth = on,
                    _ => self.cellular = on,
                }
            }
            "charging" => self.charging = flag()?,
            "dnd" => self.dnd = flag()?,
            "battery_pct" => self.battery_pct = pct()?,
            "volume" => self.volume = pct()?,
            "brightness" => self.brightness = pct()?,
            other => return Err(OsError::UnknownHardwareField(other.to_string())),
        }
        debug_assert!(self.invariant_holds());
        Ok(())
    }
}
