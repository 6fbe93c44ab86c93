//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string.

use serde_json::json;
use wasm_bindgen::prelude::*;

use metraptor::channel::{bit_level_capacity, modulation_capacity, ChannelSpec};
use metraptor::de::{met_de_run, stability_check_on, DeConfig};
use metraptor::ensemble::MetRaptorEnsemble;
use metraptor::llr::LlrGrid;
use metraptor::table1;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn table_design(design_snr: f64) -> Result<MetRaptorEnsemble, JsError> {
    let c = table1::design(design_snr)
        .ok_or_else(|| js(format!("no tabulated design at {design_snr} dB")))?;
    c.to_ensemble().map_err(js)
}

/// Total and per-level 16-QAM capacity over `[start, stop]` dB.
#[wasm_bindgen]
pub fn capacity_curve(start: f64, stop: f64, step: f64) -> Result<String, JsError> {
    if !(step > 0.0) || !(stop - start).is_finite() {
        return Err(js("invalid SNR range"));
    }
    let n = ((stop - start) / step + 1e-9).floor().max(-1.0) as i64 + 1;
    let mut rows = Vec::new();
    for i in 0..n {
        let snr = start + i as f64 * step;
        let spec = ChannelSpec::qam16(snr).map_err(js)?;
        let levels = (1..=2)
            .map(|l| bit_level_capacity(&spec, l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js)?;
        rows.push(json!({"snr_db": snr, "capacity": modulation_capacity(&spec), "levels": levels}));
    }
    Ok(json!(rows).to_string())
}

/// Density evolution of a tabulated design on a 16-QAM channel.
#[wasm_bindgen]
pub fn evaluate_design(
    design_snr: f64,
    channel_snr: f64,
    grid_step: f64,
    max_iterations: usize,
) -> Result<String, JsError> {
    let e = table_design(design_snr)?;
    let spec = ChannelSpec::qam16(channel_snr).map_err(js)?;
    let cfg = DeConfig {
        grid: LlrGrid::new(30.0, grid_step).map_err(js)?,
        max_iterations,
        ..DeConfig::default()
    };
    let res = met_de_run(&e, &spec, &cfg).map_err(js)?;
    Ok(json!({
        "converged": res.converged,
        "iterations": res.iterations_used,
        "ber_trace": res.ber_trace,
        "r_lt": e.r_lt(),
        "rate_efficiency": e.rate_efficiency(&spec).map_err(js)?,
    })
    .to_string())
}

/// Stability check of a tabulated design on a 16-QAM channel.
#[wasm_bindgen]
pub fn stability(design_snr: f64, channel_snr: f64) -> Result<String, JsError> {
    let e = table_design(design_snr)?;
    let spec = ChannelSpec::qam16(channel_snr).map_err(js)?;
    let st = stability_check_on(&e, &spec, LlrGrid::default()).map_err(js)?;
    Ok(json!({
        "lhs": st.lhs,
        "y2": st.y2,
        "rho_prime": st.rho_prime,
        "stable": st.satisfied,
    })
    .to_string())
}
