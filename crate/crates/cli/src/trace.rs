//! Loss-trace CSV: one row per step with the total and the six per-scale
//! terms, columns `s{1..4}_{im,tv,lr}_{l,r}`.

use smdepth_core::train::StepTrace;

pub fn trace_header(scales: usize) -> String {
    let mut header = String::from("step,L_total");
    for s in 1..=scales {
        for term in ["im", "tv", "lr"] {
            for side in ["l", "r"] {
                header += &format!(",s{s}_{term}_{side}");
            }
        }
    }
    header.push('\n');
    header
}

pub fn trace_row(trace: &StepTrace<f32>) -> String {
    let mut row = format!("{},{}", trace.step, trace.total);
    for b in &trace.scales {
        row += &format!(
            ",{},{},{},{},{},{}",
            b.im_l, b.im_r, b.tv_l, b.tv_r, b.lr_l, b.lr_r
        );
    }
    row.push('\n');
    row
}
