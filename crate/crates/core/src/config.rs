//! Flat `key = value` configuration files.
//!
//! Every [`EnhancerConfig`] field has a key; nested settings use a dotted
//! prefix (`noise.bias`, `analysis.window`). Blank lines and text after `#`
//! are ignored. Keys not present keep their current value.
//!
//! ```
//! use modkf::enhancer::EnhancerConfig;
//! let cfg = modkf::config::parse("q_gamma = 1e-6\nnoise.bias = 2.5\n", EnhancerConfig::default()).unwrap();
//! assert_eq!(cfg.q_gamma, 1e-6);
//! assert_eq!(cfg.noise.bias, 2.5);
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::enhancer::EnhancerConfig;
use crate::error::{Error, Result};
use crate::lognorm::PriorRule;
use crate::stft::Window;

fn window_name(w: Window) -> &'static str {
    match w {
        Window::SqrtHann => "sqrt-hann",
        Window::Hann => "hann",
    }
}

fn rule_name(r: PriorRule) -> &'static str {
    match r {
        PriorRule::Analytic => "analytic",
        PriorRule::SigmaPoints => "sigma-points",
    }
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

/// Sets one field by key.
pub fn set(cfg: &mut EnhancerConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let v = value.trim();
    match key.trim() {
        "analysis.frame_length" => cfg.analysis.frame_length = num(v)?,
        "analysis.frame_increment" => cfg.analysis.frame_increment = num(v)?,
        "analysis.window" => {
            cfg.analysis.window = match v {
                "sqrt-hann" => Window::SqrtHann,
                "hann" => Window::Hann,
                _ => return Err(format!("unknown window {v:?}")),
            }
        }
        "analysis.fft_size" => cfg.analysis.fft_size = if v == "auto" { None } else { Some(num(v)?) },
        "ar.order" => cfg.ar.order = num(v)?,
        "ar.modulation_frame" => cfg.ar.modulation_frame = num(v)?,
        "ar.modulation_increment" => cfg.ar.modulation_increment = num(v)?,
        "preclean.smoothing" => cfg.preclean.smoothing = num(v)?,
        "preclean.gain_floor_db" => cfg.preclean.gain_floor_db = num(v)?,
        "preclean.min_prior_snr_db" => cfg.preclean.min_prior_snr_db = num(v)?,
        "noise.smoothing" => cfg.noise.smoothing = num(v)?,
        "noise.window" => cfg.noise.window = num(v)?,
        "noise.bias" => cfg.noise.bias = num(v)?,
        "noise.variance" => cfg.noise.variance = num(v)?,
        "noise.log_offset" => cfg.noise.log_offset = num(v)?,
        "k_gauss" => cfg.k_gauss = num(v)?,
        "k_phase" => cfg.k_phase = num(v)?,
        "k_obs" => cfg.k_obs = num(v)?,
        "k_u" => cfg.k_u = num(v)?,
        "prior_rule" => {
            cfg.prior_rule = match v {
                "analytic" => PriorRule::Analytic,
                "sigma-points" => PriorRule::SigmaPoints,
                _ => return Err(format!("unknown prior rule {v:?}")),
            }
        }
        "q_gamma" => cfg.q_gamma = num(v)?,
        "q_beta" => cfg.q_beta = num(v)?,
        "look_ahead" => cfg.look_ahead = num(v)?,
        "ar_look_ahead" => cfg.ar_look_ahead = num(v)?,
        "min_fdr_length" => cfg.min_fdr_length = num(v)?,
        "fdr_skip" => cfg.fdr_skip = num(v)?,
        "max_fdr_length" => cfg.max_fdr_length = num(v)?,
        "rnr_threshold_db" => cfg.rnr_threshold_db = num(v)?,
        "fdr_variance_db2" => cfg.fdr_variance_db2 = num(v)?,
        "init_t60" => cfg.init_t60 = num(v)?,
        "init_drr" => cfg.init_drr = num(v)?,
        "init_param_variance" => cfg.init_param_variance = num(v)?,
        "init_state_variance" => cfg.init_state_variance = num(v)?,
        "speech_residual_floor" => cfg.speech_residual_floor = num(v)?,
        "gain_floor_db" => cfg.gain_floor_db = num(v)?,
        "gain_ceiling_db" => cfg.gain_ceiling_db = num(v)?,
        "lognormal_correction" => cfg.lognormal_correction = num(v)?,
        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

/// Every field as `(key, value)`, in file order.
pub fn entries(cfg: &EnhancerConfig) -> Vec<(&'static str, String)> {
    vec![
        ("analysis.frame_length", cfg.analysis.frame_length.to_string()),
        ("analysis.frame_increment", cfg.analysis.frame_increment.to_string()),
        ("analysis.window", window_name(cfg.analysis.window).to_string()),
        ("analysis.fft_size", cfg.analysis.fft_size.map_or("auto".into(), |n| n.to_string())),
        ("ar.order", cfg.ar.order.to_string()),
        ("ar.modulation_frame", cfg.ar.modulation_frame.to_string()),
        ("ar.modulation_increment", cfg.ar.modulation_increment.to_string()),
        ("preclean.smoothing", cfg.preclean.smoothing.to_string()),
        ("preclean.gain_floor_db", cfg.preclean.gain_floor_db.to_string()),
        ("preclean.min_prior_snr_db", cfg.preclean.min_prior_snr_db.to_string()),
        ("noise.smoothing", cfg.noise.smoothing.to_string()),
        ("noise.window", cfg.noise.window.to_string()),
        ("noise.bias", cfg.noise.bias.to_string()),
        ("noise.variance", cfg.noise.variance.to_string()),
        ("noise.log_offset", cfg.noise.log_offset.to_string()),
        ("k_gauss", cfg.k_gauss.to_string()),
        ("k_phase", cfg.k_phase.to_string()),
        ("k_obs", cfg.k_obs.to_string()),
        ("k_u", cfg.k_u.to_string()),
        ("prior_rule", rule_name(cfg.prior_rule).to_string()),
        ("q_gamma", cfg.q_gamma.to_string()),
        ("q_beta", cfg.q_beta.to_string()),
        ("look_ahead", cfg.look_ahead.to_string()),
        ("ar_look_ahead", cfg.ar_look_ahead.to_string()),
        ("min_fdr_length", cfg.min_fdr_length.to_string()),
        ("fdr_skip", cfg.fdr_skip.to_string()),
        ("max_fdr_length", cfg.max_fdr_length.to_string()),
        ("rnr_threshold_db", cfg.rnr_threshold_db.to_string()),
        ("fdr_variance_db2", cfg.fdr_variance_db2.to_string()),
        ("init_t60", cfg.init_t60.to_string()),
        ("init_drr", cfg.init_drr.to_string()),
        ("init_param_variance", cfg.init_param_variance.to_string()),
        ("init_state_variance", cfg.init_state_variance.to_string()),
        ("speech_residual_floor", cfg.speech_residual_floor.to_string()),
        ("gain_floor_db", cfg.gain_floor_db.to_string()),
        ("gain_ceiling_db", cfg.gain_ceiling_db.to_string()),
        ("lognormal_correction", cfg.lognormal_correction.to_string()),
    ]
}

/// Applies the assignments in `text` on top of `base` and validates the result.
pub fn parse(text: &str, base: EnhancerConfig) -> Result<EnhancerConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse { line: i + 1, message: format!("expected key = value, got {line:?}") })?;
        set(&mut cfg, key, value).map_err(|message| Error::ConfigParse { line: i + 1, message })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: impl AsRef<Path>, base: EnhancerConfig) -> Result<EnhancerConfig> {
    parse(&std::fs::read_to_string(path)?, base)
}

/// The whole configuration as a file `parse` reads back unchanged.
pub fn to_string(cfg: &EnhancerConfig) -> String {
    entries(cfg).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = EnhancerConfig::default();
        cfg.analysis.window = Window::Hann;
        cfg.analysis.fft_size = Some(1024);
        cfg.prior_rule = PriorRule::SigmaPoints;
        cfg.lognormal_correction = true;
        cfg.q_beta = 3.25e-6;
        let text = to_string(&cfg);
        assert_eq!(parse(&text, EnhancerConfig::default()).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = EnhancerConfig::default();
        for (k, v) in entries(&EnhancerConfig::default()) {
            set(&mut cfg, k, &v).unwrap();
        }
        assert_eq!(cfg, EnhancerConfig::default());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse("# header\n\n  k_phase = 12  # finer\n", EnhancerConfig::default()).unwrap();
        assert_eq!(cfg.k_phase, 12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("k_phase = 6\nbogus = 1\n", EnhancerConfig::default()).unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 2, .. }));
        let e = parse("k_phase 6\n", EnhancerConfig::default()).unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 1, .. }));
        let e = parse("q_gamma = fast\n", EnhancerConfig::default()).unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 1, .. }));
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(parse("min_fdr_length = 2\n", EnhancerConfig::default()), Err(Error::InvalidParameter(_))));
    }
}
