//! Ingest a raw CSV trace: missing-value fill, categorical coding, derived
//! columns, and the versioned round trip.
//!
//! Run with: cargo run --release --example ingest_csv

use cellcast::trace::{ingest_csv_text, FeatureSchema, Trace};

fn main() -> cellcast::Result<()> {
    // A fragment of a mixed 4G/5G recording: note the missing RSSI cell, the
    // raw CellID strings, and that the Cell-handoff indicator column is
    // absent (it gets derived from CellID changes).
    let csv = "\
ts,DL,UL,RSSI,RSRQ,RSRP,NRxSRP,NRxSRQ,SNR,CQI,NetworkMode,CellID,Speed
100,55.2,6.1,-79,-11,-95,-102,-14,21,12,5G,eNB-4431,13.2
101,61.8,6.4,,-11,-96,-102,-14,21,12,5G,eNB-4431,13.0
102,12.3,2.0,-84,-12,-99,-100,-13,14,8,LTE,eNB-7210,13.1
103,11.1,1.8,-85,-12,-99,-100,-13,13,8,LTE,eNB-7210,12.9
";
    let schema = FeatureSchema::fiveg12();
    let trace = ingest_csv_text(csv, &schema, "driving-fragment")?;

    println!("ingested {} samples", trace.len());
    for warning in &trace.warnings {
        println!("  note: {warning}");
    }
    println!("mode flags: {:?}", trace.mode_flags().unwrap());
    println!("derived Cell-handoff: {:?}", trace.column("Cell-handoff").unwrap());
    println!("CellID codes: {:?}", trace.aux_column("CellID").unwrap());
    println!("CellID labels: {:?}", trace.code_maps["CellID"]);

    // Versioned JSON round trip preserves every value bit for bit.
    let json = trace.to_json()?;
    let back = Trace::from_json(&json)?;
    assert_eq!(back, trace);
    println!("round trip: exact ({} bytes)", json.len());
    Ok(())
}
