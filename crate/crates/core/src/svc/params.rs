use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dataio::parse_kv;
use crate::error::{Error, Result};

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Vestibular-only model; the visual channel is disconnected.
    Conventional,
    /// Vestibular model with visual vertical feedback.
    SvcVv,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "conventional" => Ok(ModelKind::Conventional),
            "svc_vv" => Ok(ModelKind::SvcVv),
            other => Err(Error::Validation(format!(
                "unknown model '{other}', expected conventional or svc_vv"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Conventional => "conventional",
            ModelKind::SvcVv => "svc_vv",
        })
    }
}

/// Gains and time constants of the SVC model. Time constants are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub k_a: f64,
    pub k_w: f64,
    pub k_wc: f64,
    pub k_ac: f64,
    pub k_vc: f64,
    /// Visual vertical conflict gain; zero disables the visual channel.
    pub k_vvc: f64,
    /// Otolith low-pass time constant.
    pub tau: f64,
    /// Semicircular canal high-pass time constant.
    pub tau_d: f64,
    /// Hill half-saturation, m/s².
    pub b: f64,
    /// MSI lag time constant.
    pub tau_i: f64,
    /// MSI gain, percent.
    pub p: f64,
}

impl ModelParams {
    pub fn conventional() -> Self {
        ModelParams {
            k_a: 0.1,
            k_w: 0.8,
            k_wc: 10.0,
            k_ac: 1.0,
            k_vc: 5.0,
            k_vvc: 0.0,
            tau: 5.0,
            tau_d: 7.0,
            b: 0.5,
            tau_i: 12.0 * 60.0,
            p: 85.0,
        }
    }

    pub fn svc_vv() -> Self {
        ModelParams {
            k_vvc: 5.0,
            ..Self::conventional()
        }
    }

    pub fn preset(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Conventional => Self::conventional(),
            ModelKind::SvcVv => Self::svc_vv(),
        }
    }

    pub fn visual_enabled(&self) -> bool {
        self.k_vvc != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_a", self.k_a),
            ("k_w", self.k_w),
            ("k_wc", self.k_wc),
            ("k_ac", self.k_ac),
            ("k_vc", self.k_vc),
            ("tau", self.tau),
            ("tau_d", self.tau_d),
            ("b", self.b),
            ("tau_i", self.tau_i),
            ("p", self.p),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.k_vvc.is_finite() && self.k_vvc >= 0.0) {
            return Err(Error::Validation(format!(
                "k_vvc must be >= 0, got {}",
                self.k_vvc
            )));
        }
        Ok(())
    }

    /// Apply `key = value` overrides on top of `self`.
    ///
    /// Recognised keys: `model` (resets to a preset, must come first),
    /// `k_a`, `k_w`, `k_wc`, `k_ac`, `k_vc`, `k_vvc`, `tau`, `tau_d`, `b`,
    /// `tau_i_min`, `tau_i_s`, `p`.
    pub fn with_overrides(mut self, text: &str, origin: &str) -> Result<Self> {
        for (line, key, value) in parse_kv(text, origin)? {
            if key == "model" {
                self = Self::preset(value.parse()?);
                continue;
            }
            let v: f64 = value.parse().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line,
                msg: format!("'{value}' is not a number"),
            })?;
            match key.as_str() {
                "k_a" => self.k_a = v,
                "k_w" => self.k_w = v,
                "k_wc" => self.k_wc = v,
                "k_ac" => self.k_ac = v,
                "k_vc" => self.k_vc = v,
                "k_vvc" => self.k_vvc = v,
                "tau" => self.tau = v,
                "tau_d" => self.tau_d = v,
                "b" => self.b = v,
                "tau_i_min" => self.tau_i = v * 60.0,
                "tau_i_s" => self.tau_i = v,
                "p" => self.p = v,
                _ => {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        line,
                        msg: format!("unknown parameter '{key}'"),
                    })
                }
            }
        }
        self.validate()?;
        Ok(self)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::svc_vv()
    }
}
