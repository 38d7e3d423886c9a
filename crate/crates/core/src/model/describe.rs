use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analyzer::{units, UnitKind};
use crate::error::Result;
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeRow {
    pub path: String,
    pub kind: UnitKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub fused: Option<bool>,
    pub in_res: [usize; 2],
    pub out_res: [usize; 2],
    pub params: u64,
    pub macs: u64,
}

impl Model {
    /// Block-level layer table at an `h x w` input, batch 1.
    pub fn describe(&self, h: usize, w: usize) -> Result<Vec<DescribeRow>> {
        Ok(units(self.layout(), 1, h, w)?
            .into_iter()
            .map(|u| DescribeRow {
                kind: u.kind,
                in_ch: u.input.c,
                out_ch: u.output.c,
                stride: u.stride,
                fused: u.fused,
                in_res: [u.input.h, u.input.w],
                out_res: [u.output.h, u.output.w],
                params: u.params(),
                macs: u.macs(),
                path: u.path,
            })
            .collect())
    }
}

pub fn format_table(rows: &[DescribeRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:<10} {:>6} {:>6} {:>6} {:>6} {:>11} {:>11} {:>10} {:>14}",
        "path", "kind", "in_ch", "out_ch", "stride", "fused", "in_res", "out_res", "params", "macs"
    );
    for r in rows {
        let fused = match r.fused {
            Some(true) => "yes",
            Some(false) => "no",
            None => "-",
        };
        let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:<22} {:<10} {:>6} {:>6} {:>6} {:>6} {:>11} {:>11} {:>10} {:>14}",
            r.path,
            kind,
            r.in_ch,
            r.out_ch,
            r.stride,
            fused,
            format!("{}x{}", r.in_res[0], r.in_res[1]),
            format!("{}x{}", r.out_res[0], r.out_res[1]),
            r.params,
            r.macs
        );
    }
    let macs: u64 = rows.iter().map(|r| r.macs).sum();
    let params: u64 = rows.iter().map(|r| r.params).sum();
    let _ = writeln!(s, "total: {:.3}M MACs, {:.4}M params", macs as f64 / 1e6, params as f64 / 1e6);
    s
}
