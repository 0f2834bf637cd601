//! Writes the synthetic price files shipped with the command-line tool.
//!
//! `cargo run -p cqns-core --example gen_bundle -- <dir> [assets] [days] [seed]`

use std::collections::BTreeMap;
use std::fs::File;

use chrono::NaiveDate;
use cqns_core::market_data::{write_prices, PriceFormat};
use cqns_core::synthetic::synthetic_prices;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or(".");
    let arg = |i: usize, default: usize| args.get(i).map(|s| s.parse().expect("numeric argument")).unwrap_or(default);
    let (assets, days, seed) = (arg(1, 50), arg(2, 252), arg(3, 2024) as u64);
    let start = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    let (series, index) = synthetic_prices(assets, days, seed, start);
    let stem = format!("{dir}/synthetic{assets}");
    write_prices(&series, PriceFormat::WideCsv, File::create(format!("{stem}_prices.csv")).unwrap()).unwrap();
    let index = BTreeMap::from([(index.ticker.clone(), index)]);
    write_prices(&index, PriceFormat::WideCsv, File::create(format!("{stem}_index.csv")).unwrap()).unwrap();
    println!("wrote {stem}_prices.csv and {stem}_index.csv");
}
