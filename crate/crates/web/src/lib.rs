use serde::Serialize;
use wasm_bindgen::prelude::*;

use screc::pipeline::{self, PipelineConfig};
use screc::stats::{self, HardwareProfile, TtOptions};
use screc::trace::{self, RowLenDist, SyntheticTraceConfig};
use screc::tt::{self, EmbMatrix};

#[derive(Serialize)]
pub struct AccessCurve {
    pub step: usize,
    pub icdf: Vec<f64>,
    /// Row fraction serving 80% and 99% of lookups.
    pub rows_for_80: f64,
    pub rows_for_99: f64,
}

pub fn access_curve_of(
    alpha: f64,
    rows: u64,
    samples: usize,
    seed: u64,
) -> screc::Result<AccessCurve> {
    let cfg = SyntheticTraceConfig {
        num_tables: 1,
        rows: RowLenDist::Fixed { rows },
        alpha,
        samples,
        seed,
        ..SyntheticTraceConfig::default()
    };
    let trace = trace::generate_trace(&cfg)?;
    let st = stats::compute_cdf(&trace, 0)?;
    Ok(AccessCurve {
        step: st.step,
        rows_for_80: st.icdf_interp(0.8),
        rows_for_99: st.icdf_interp(0.99),
        icdf: st.icdf,
    })
}

#[derive(Serialize)]
pub struct RankPoint {
    pub rank: usize,
    pub params: usize,
    pub compression: f64,
    pub error: f64,
}

/// Smooth table region with a little high-frequency texture, so that
/// truncation error falls off gradually with the TT rank.
fn demo_region(rows: usize, dim: usize) -> EmbMatrix {
    let data = (0..rows * dim)
        .map(|k| {
            let (i, j) = ((k / dim) as f32, (k % dim) as f32);
            let t = i / rows as f32;
            (3.0 * t * (1.0 + j / dim as f32)).sin() + 0.05 * (0.7 * i + 1.3 * j).cos()
        })
        .collect();
    EmbMatrix::new(rows, dim, data).expect("data matches shape")
}

pub fn rank_sweep_of(
    rows: usize,
    dim: u32,
    d: usize,
    max_rank: usize,
) -> screc::Result<Vec<RankPoint>> {
    let region = demo_region(rows, dim as usize);
    let row_factors = tt::factor_rows(rows as u64, d)?;
    let col_factors = tt::factor_dim(dim, d)?;
    (1..=max_rank)
        .map(|rank| {
            let cores = tt::decompose(&region, &row_factors, &col_factors, rank)?;
            let params = cores.param_count();
            Ok(RankPoint {
                rank,
                params,
                compression: (rows * dim as usize) as f64 / params as f64,
                error: tt::reconstruction_error(&region, &cores)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct LevelResult {
    pub level: u8,
    pub mean_latency_ns: f64,
    pub speedup: f64,
    /// Lookups served by `[DRAM, TT, SSD]`.
    pub tier_lookups: [u64; 3],
}

pub fn ablation_of(
    cap_dram_kib: u64,
    devices: usize,
    alpha: f64,
) -> screc::Result<Vec<LevelResult>> {
    let cfg = PipelineConfig {
        profile: HardwareProfile {
            devices,
            cap_dram: cap_dram_kib << 10,
            batch_size: 256,
            ..HardwareProfile::default()
        },
        trace: SyntheticTraceConfig {
            num_tables: 4,
            rows: RowLenDist::Fixed { rows: 20_000 },
            alpha,
            samples: 1024,
            ..SyntheticTraceConfig::default()
        },
        tt: TtOptions::default(),
        ..PipelineConfig::default()
    };
    cfg.validate()?;
    let full = trace::generate_trace(&cfg.trace)?;
    let stats = pipeline::analyze_in_memory(&cfg, &full)?;
    let mut out: Vec<LevelResult> = Vec::new();
    for level in 1..=3 {
        let plan = pipeline::plan_in_memory(&cfg, &stats, level)?;
        let remaps = pipeline::remap_in_memory(&cfg, &plan, &full)?;
        let s = pipeline::simulate_in_memory(&cfg, &plan, &remaps, &full)?.summary;
        let base = out.first().map_or(s.mean_latency_ns, |b| b.mean_latency_ns);
        out.push(LevelResult {
            level,
            mean_latency_ns: s.mean_latency_ns,
            speedup: base / s.mean_latency_ns,
            tier_lookups: s.tier_lookups,
        });
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: screc::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn access_curve(alpha: f64, rows: u32, samples: u32, seed: u32) -> Result<String, JsError> {
    to_js(access_curve_of(
        alpha,
        u64::from(rows),
        samples as usize,
        u64::from(seed),
    ))
}

#[wasm_bindgen]
pub fn rank_sweep(rows: u32, dim: u32, cores: u32, max_rank: u32) -> Result<String, JsError> {
    to_js(rank_sweep_of(
        rows as usize,
        dim,
        cores as usize,
        max_rank as usize,
    ))
}

#[wasm_bindgen]
pub fn ablation(cap_dram_kib: u32, devices: u32, alpha: f64) -> Result<String, JsError> {
    to_js(ablation_of(
        u64::from(cap_dram_kib),
        devices as usize,
        alpha,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steeper_skew_concentrates_lookups() {
        let flat = access_curve_of(0.6, 5_000, 2_000, 1).unwrap();
        let steep = access_curve_of(1.4, 5_000, 2_000, 1).unwrap();
        assert_eq!(flat.icdf.len(), 101);
        assert!(steep.rows_for_80 < flat.rows_for_80);
    }

    #[test]
    fn sweep_error_falls_with_rank() {
        let pts = rank_sweep_of(512, 16, 3, 6).unwrap();
        assert!(pts.windows(2).all(|w| w[1].error <= w[0].error + 1e-6));
        assert!(pts.windows(2).all(|w| w[1].params >= w[0].params));
        assert!(pts[0].compression > pts[5].compression);
    }

    #[test]
    fn each_level_is_faster() {
        let levels = ablation_of(256, 2, 1.05).unwrap();
        assert_eq!(levels.len(), 3);
        assert!(levels[0].mean_latency_ns > levels[1].mean_latency_ns);
        assert!(levels[1].mean_latency_ns > levels[2].mean_latency_ns);
        assert_eq!(levels[0].tier_lookups[0], 0);
    }
}
