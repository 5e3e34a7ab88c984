//! Report emission: plan and schedule CSVs, profit and comparison JSON,
//! hour-indexed series for plotting, and an output manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::pipeline::PipelineOutput;
use crate::fleet::HOURS_PER_DAY;
use crate::stage1::SitingPlan;
use crate::stage2::DispatchSchedule;

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write_file(path: &Path, content: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| IoError { path: dir.to_path_buf(), source: e })?;
    }
    let mut f =
        fs::File::create(path).map_err(|e| IoError { path: path.to_path_buf(), source: e })?;
    f.write_all(content.as_bytes())
        .map_err(|e| IoError { path: path.to_path_buf(), source: e })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    write_file(path, &text)
}

pub fn plan_csv(plan: &SitingPlan) -> String {
    let mut out = String::from("bus,size_kw\n");
    for lot in &plan.lots {
        out.push_str(&format!("{},{:.3}\n", lot.bus, lot.size_kw));
    }
    out
}

pub fn schedule_csv(schedules: &[DispatchSchedule]) -> String {
    let mut out = String::from("day,hour,lot,bus,p_ch,p_dch,p_sell,p_buy,soc\n");
    for s in schedules {
        for h in 0..HOURS_PER_DAY {
            for (li, lot) in s.lots.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    s.day, h, li, lot.bus, lot.p_ch[h], lot.p_dch[h], lot.p_sell[h],
                    lot.p_buy[h], lot.soc[h]
                ));
            }
        }
    }
    out
}

#[derive(Serialize)]
struct ProfitDocument<'a> {
    seed: u64,
    days: &'a [crate::stage2::ProfitReport],
    day_weights: &'a [f64],
    horizon_value: f64,
}

/// Writes every artifact under `out_dir` and returns the manifest of paths.
pub fn emit_reports(out_dir: &Path, output: &PipelineOutput) -> Result<Vec<PathBuf>, IoError> {
    let mut manifest = Vec::new();
    let emit = |name: &str, content: String, manifest: &mut Vec<PathBuf>| {
        let path = out_dir.join(name);
        write_file(&path, &content)?;
        manifest.push(path);
        Ok::<(), IoError>(())
    };

    emit("plan.csv", plan_csv(&output.plan), &mut manifest)?;
    emit("schedule.csv", schedule_csv(&output.schedules), &mut manifest)?;

    let profit_path = out_dir.join("profit.json");
    write_json(
        &profit_path,
        &ProfitDocument {
            seed: output.seed,
            days: &output.profits,
            day_weights: &output.day_weights,
            horizon_value: output.horizon.horizon_value,
        },
    )?;
    manifest.push(profit_path);

    let cmp_path = out_dir.join("comparison.json");
    write_json(&cmp_path, &output.comparison)?;
    manifest.push(cmp_path);

    let mut series = String::from(
        "hour,losses_without_kw,losses_with_kw,vdev_without_pct,vdev_with_pct,min_v_without_pu,min_v_with_pu,lot_net_export_kw\n",
    );
    for h in 0..output.series.losses_without_kw.len() {
        series.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            h,
            output.series.losses_without_kw[h],
            output.series.losses_with_kw[h],
            output.series.vdev_without_pct[h],
            output.series.vdev_with_pct[h],
            output.series.min_v_without_pu[h],
            output.series.min_v_with_pu[h],
            output.series.lot_net_export_kw[h],
        ));
    }
    emit("series/hourly.csv", series, &mut manifest)?;

    for (name, dump) in &output.lp_dumps {
        emit(&format!("lp/{name}.lp.txt"), dump.clone(), &mut manifest)?;
    }
    Ok(manifest)
}
