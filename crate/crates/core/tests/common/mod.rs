use charwave_core::charsolver::{solve_march, MarchOptions};
use charwave_core::physmap::{attach_coords, extract_time_slice};
use charwave_core::{BoundaryCurve, CharGrid, Domain, FunctionSpec, InitialData, Lattice, TimeSlice, WaveSpeed};

pub fn bump(amplitude: f64, width: f64) -> FunctionSpec {
    FunctionSpec::Gaussian {
        amplitude,
        center: 0.0,
        width,
        cutoff: 4.0 * width,
    }
}

/// Marches on the rectangle covering the data window widened by twice the
/// largest travel distance, stopping past `t_end`, and cuts slices.
pub fn solve(d: &InitialData, ws: &WaveSpeed, h: f64, t_end: f64, times: &[f64]) -> (CharGrid, Vec<TimeSlice>) {
    let bc = BoundaryCurve::from_initial(d);
    let pad = 2.0 * ws.bounds().kappa() * t_end + 0.5;
    let (a, b) = (d.x[0] - pad, d.x[d.x.len() - 1] + pad);
    let lat = Lattice::new(Domain::covering(&bc, a, b), h, h).unwrap();
    let opts = MarchOptions {
        cell_iters: 3,
        t_max: Some(1.05 * t_end + 2.0 * h),
    };
    let mut g = solve_march(&bc, lat, ws, opts).unwrap();
    attach_coords(&mut g).unwrap();
    let slices = times.iter().map(|&t| extract_time_slice(&g, t).unwrap()).collect();
    (g, slices)
}
