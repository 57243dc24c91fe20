//! Report files. CSV content depends only on the config, never on timing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use charwave_core::refsolver::FdState;
use charwave_core::{CharGrid, TimeSlice};
use serde::Serialize;

use crate::pipeline::{PipelineError, RunArtifacts, RunReport};

/// Largest number of rows in the grid dump when no stride is configured.
const GRID_ROWS: usize = 250_000;

fn csv_err(e: csv::Error) -> PipelineError {
    PipelineError::Output(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, PipelineError> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), PipelineError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Strided dump of the lattice rectangle. `mask` is 1 at computed nodes;
/// the other rows carry only their coordinates.
pub fn write_grid(g: &CharGrid, path: &Path, stride: usize) -> Result<(), PipelineError> {
    let lat = g.lattice;
    let stride = if stride > 0 {
        stride
    } else {
        (((lat.n_xi * lat.n_eta) as f64 / GRID_ROWS as f64).sqrt().ceil() as usize).max(1)
    };
    let (t, x) = (g.t.as_deref(), g.x.as_deref());
    let rows = (0..lat.n_xi).step_by(stride).flat_map(move |i| {
        (0..lat.n_eta).step_by(stride).map(move |j| {
            let mut r = vec![num(lat.xi(i)), num(lat.eta(j))];
            match g.index(i, j) {
                Some(k) => {
                    let opt = |a: Option<&[f64]>| a.map_or(String::new(), |a| num(a[k]));
                    r.extend([num(g.w[k]), num(g.z[k]), num(g.p[k]), num(g.q[k]), num(g.v[k]), "1".into(), opt(t), opt(x)]);
                }
                None => {
                    r.extend(std::iter::repeat_n(String::new(), 5));
                    r.extend(["0".into(), String::new(), String::new()]);
                }
            }
            r
        })
    });
    write_rows(path, &["X", "Y", "w", "z", "p", "q", "v", "mask", "t", "x"], rows)
}

pub fn write_slice(s: &TimeSlice, path: &Path) -> Result<(), PipelineError> {
    let rows = s.samples.iter().map(|p| {
        vec![
            num(p.x),
            num(p.v),
            num(p.vt),
            num(p.vx),
            num(p.w),
            num(p.z),
            u8::from(p.singular).to_string(),
        ]
    });
    write_rows(path, &["x", "v", "vt", "vx", "w", "z", "singular"], rows)
}

#[derive(Serialize)]
struct SliceMeta<'a> {
    tau: f64,
    file: &'a str,
    samples: usize,
    singular: usize,
}

/// Long-format `series, x, value` table for plotting.
pub fn write_long(path: &Path, rows: &[(String, f64, f64)]) -> Result<(), PipelineError> {
    write_rows(
        path,
        &["series", "x", "value"],
        rows.iter().map(|(s, x, v)| vec![s.clone(), num(*x), num(*v)]),
    )
}

pub fn read_long(path: &Path) -> Result<Vec<(String, f64, f64)>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |k: usize| -> Result<f64, PipelineError> {
            rec.get(k)
                .unwrap_or("")
                .parse()
                .map_err(|e| PipelineError::Output(format!("{}: {e}", path.display())))
        };
        out.push((rec.get(0).unwrap_or("").to_string(), f(1)?, f(2)?));
    }
    Ok(out)
}

fn write_fd_snapshots(snaps: &[&FdState], path: &Path) -> Result<(), PipelineError> {
    let rows = snaps.iter().flat_map(|s| {
        (0..s.x.len()).map(move |k| vec![num(s.t), num(s.x[k]), num(s.v[k]), num(s.r[k]), num(s.s[k])])
    });
    write_rows(path, &["t", "x", "v", "R", "S"], rows)
}

pub fn summary_text(rep: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", serde_json::to_value(rep.scenario).unwrap_or_default().as_str().unwrap_or("?"));
    let _ = writeln!(s, "E0 = {:.6e}", rep.e0);
    for l in &rep.levels {
        let _ = writeln!(
            s,
            "level dX = {}, dY = {}: {} nodes, {:.2} s, max energy drift {:.3e}",
            l.d_xi, l.d_eta, l.nodes, l.runtime_s, l.max_energy_drift
        );
        for sl in &l.slices {
            let _ = writeln!(
                s,
                "  t = {}: E = {:.6e}, E_forms = {:.6e}, Lambda = {:.6e}, mu = {:.6e}, singular {}/{}",
                sl.tau, sl.e_phys, sl.e_forms, sl.lambda, sl.mu_total, sl.singular, sl.samples
            );
        }
    }
    if let Some(c) = &rep.crosscheck {
        let _ = writeln!(s, "finite differences: {} (dx = {})", c.fd_status.label(), c.fd_dx);
        for r in &c.rows {
            let _ = writeln!(s, "  t = {}: Linf = {:.3e}, L2 = {:.3e}", r.tau, r.linf, r.l2);
        }
        if let (Some(m), Some(e)) = (c.omega_measured, c.omega_exact) {
            let _ = writeln!(s, "  omega measured {m:.6}, linear {e:.6}");
        }
    }
    if let Some(b) = &rep.blowup {
        match b.fd_abort_time {
            Some(t) => {
                let _ = writeln!(s, "finite differences: {} at t = {t:.4}", b.fd_status.label());
            }
            None => {
                let _ = writeln!(s, "finite differences: completed without abort");
            }
        }
        let _ = writeln!(
            s,
            "  max|v_x|: initial {:.4}, peak {:.4} at t = {:.4} (x{:.2})",
            b.vx_initial,
            b.vx_peak,
            b.vx_peak_time,
            b.vx_peak / b.vx_initial.max(f64::MIN_POSITIVE)
        );
        let fine = rep.levels.last();
        let bounded = fine.is_some_and(|l| l.finite && l.apriori.passed());
        let _ = writeln!(
            s,
            "characteristic solver: {} ({} singular samples)",
            if bounded { "bounded" } else { "NOT bounded" },
            b.singular_samples
        );
        let _ = writeln!(s, "  Lambda slope {:.4e}, bound {:.4e}", b.lambda_slope, b.lambda_slope_bound);
    }
    if let Some(p) = &rep.picard {
        for t in &p.traces {
            let _ = writeln!(
                s,
                "Picard K = {:.4}: {} sweeps, final sup distance {:.3e}, max ratio {:.4}",
                t.k_weight,
                t.distances.len(),
                t.sup_distances.last().copied().unwrap_or(0.0),
                t.ratios.iter().copied().fold(0.0, f64::max)
            );
        }
        let _ = writeln!(s, "  K disagreement {:.3e}, march disagreement {:.3e}", p.k_disagreement, p.march_disagreement);
    }
    let _ = writeln!(s, "checks:");
    for c in &rep.checks {
        let _ = writeln!(
            s,
            "  [{}] {}: {:.6e} vs {:.6e}{}",
            if c.check.pass { "PASS" } else { "FAIL" },
            c.check.name,
            c.check.value,
            c.check.bound,
            if c.hard { "" } else { " (soft)" }
        );
    }
    for w in &rep.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "result: {}", if rep.passed() { "PASS" } else { "FAIL" });
    s
}

/// Writes every report file for a run into `dir` and returns their paths.
pub fn write_all(art: &RunArtifacts, dir: &Path, grid_stride: usize) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir)?;
    let plot = dir.join("plot");
    fs::create_dir_all(&plot)?;
    let mut files = Vec::new();
    let rep = &art.report;

    if let Some(g) = &art.grid {
        let p = dir.join("grid.csv");
        write_grid(g, &p, grid_stride)?;
        files.push(p);
    }
    let mut meta = Vec::new();
    let names: Vec<String> = (0..art.slices.len()).map(|k| format!("slice_{k:02}.csv")).collect();
    let mut slice_long = Vec::new();
    for (s, name) in art.slices.iter().zip(&names) {
        let p = dir.join(name);
        write_slice(s, &p)?;
        files.push(p);
        meta.push(SliceMeta {
            tau: s.tau,
            file: name,
            samples: s.samples.len(),
            singular: s.singular_count(),
        });
        let tag = format!("v@{}", s.tau);
        slice_long.extend(s.samples.iter().map(|p| (tag.clone(), p.x, p.v)));
    }
    if !meta.is_empty() {
        let p = dir.join("slices.json");
        fs::write(&p, serde_json::to_string_pretty(&meta).map_err(|e| PipelineError::Output(e.to_string()))?)?;
        files.push(p);
        let p = plot.join("slices_long.csv");
        write_long(&p, &slice_long)?;
        files.push(p);
    }

    if let Some(fine) = rep.levels.last() {
        let mut rows = Vec::new();
        let mut long = Vec::new();
        for (n, l) in rep.levels.iter().enumerate() {
            for s in &l.slices {
                rows.push(vec![
                    n.to_string(),
                    num(s.tau),
                    num(s.e_phys),
                    num(s.e_forms),
                    num(s.lambda),
                    num(s.mu_total),
                ]);
            }
        }
        for s in &fine.slices {
            for (k, v) in [("E_phys", s.e_phys), ("E_forms", s.e_forms), ("Lambda", s.lambda), ("mu_total", s.mu_total)] {
                long.push((k.to_string(), s.tau, v));
            }
        }
        let p = dir.join("series.csv");
        write_rows(&p, &["level", "t", "E_phys", "E_forms", "Lambda", "mu_total"], rows.into_iter())?;
        files.push(p);
        let p = plot.join("series_long.csv");
        write_long(&p, &long)?;
        files.push(p);
    }

    if let Some(c) = &rep.crosscheck {
        let p = dir.join("comparison.csv");
        write_rows(
            &p,
            &["t", "linf", "l2", "tol"],
            c.rows.iter().map(|r| vec![num(r.tau), num(r.linf), num(r.l2), num(c.tolerance)]),
        )?;
        files.push(p);
        if let Some(run) = &art.fd {
            let snaps: Vec<&FdState> = run
                .snapshots
                .iter()
                .filter(|s| art.slices.iter().any(|sl| sl.tau == s.t))
                .collect();
            let p = dir.join("fd_snapshots.csv");
            write_fd_snapshots(&snaps, &p)?;
            files.push(p);
        }
    }
    if rep.blowup.is_some() {
        if let Some(run) = &art.fd {
            let h = &run.vx_history;
            let step = (h.len() / 2000).max(1);
            let keep = h
                .iter()
                .enumerate()
                .filter(|(k, _)| k % step == 0 || *k + 1 == h.len())
                .map(|(_, p)| vec![num(p.0), num(p.1)]);
            let p = dir.join("fd_vx_history.csv");
            write_rows(&p, &["t", "max_abs_vx"], keep)?;
            files.push(p);
        }
    }
    if let Some(pc) = &rep.picard {
        let rows = pc.traces.iter().flat_map(|t| {
            t.distances.iter().enumerate().map(move |(n, d)| {
                vec![
                    num(t.k_weight),
                    (n + 1).to_string(),
                    num(*d),
                    num(t.sup_distances[n]),
                    t.ratios.get(n.wrapping_sub(1)).map_or(String::new(), |r| num(*r)),
                ]
            })
        });
        let p = dir.join("picard_trace.csv");
        write_rows(&p, &["k_weight", "iter", "distance", "sup_distance", "ratio"], rows)?;
        files.push(p);
    }

    let p = dir.join("diagnostics.json");
    fs::write(&p, serde_json::to_string_pretty(rep).map_err(|e| PipelineError::Output(e.to_string()))?)?;
    files.push(p);
    let p = dir.join("summary.txt");
    fs::write(&p, summary_text(rep))?;
    files.push(p);
    Ok(files)
}
