use flowsum::io::{group_trace, read_netflows_from, read_trace_records, session_to_trace, write_netflows, write_trace_flows};
use flowsum_core::empirical::{assemble_flows, IngestConfig};
use flowsum_core::Flow;
use proptest::prelude::*;

fn reread(flows: &[Flow], cfg: &IngestConfig) -> Vec<Flow> {
    let mut buf = Vec::new();
    write_trace_flows(&mut buf, &session_to_trace(flows)).unwrap();
    let records = read_trace_records(buf.as_slice()).unwrap();
    let grouped = group_trace(records);
    let pairs = grouped.iter().flat_map(|f| f.timestamps_ns.iter().map(move |t| (f.id.clone(), *t)));
    assemble_flows(pairs, cfg).unwrap().flows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn netflow_csv_round_trips_exactly(rows in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4, 1u64..1_000_000), 0..50)) {
        let mut buf = Vec::new();
        write_netflows(&mut buf, rows.iter().copied()).unwrap();
        let back = read_netflows_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (n, r) in back.iter().zip(&rows) {
            prop_assert_eq!((n.s_f, n.s_d, n.size), *r);
        }
    }

    #[test]
    fn trace_reingestion_is_idempotent(
        flows in prop::collection::vec((0u64..5_000_000, prop::collection::vec(0u64..2_000_000, 0..12)), 1..15),
    ) {
        let cfg = IngestConfig { min_flow_size: 1, ..IngestConfig::default() };
        let built: Vec<Flow> = flows
            .iter()
            .enumerate()
            .map(|(i, (lead, gaps))| {
                let lead = if i == 0 { 0.0 } else { (*lead + 1) as f64 / 1e9 };
                Flow::new(lead, gaps.iter().map(|g| (*g + 1) as f64 / 1e9).collect()).unwrap()
            })
            .collect();
        let once = reread(&built, &cfg);
        let twice = reread(&once, &cfg);
        prop_assert_eq!(once.len(), built.len());
        for (a, b) in once.iter().zip(&twice) {
            prop_assert_eq!(a.gaps(), b.gaps());
            prop_assert_eq!(a.size(), b.size());
        }
    }
}

#[test]
fn zero_gaps_are_clamped_on_ingest() {
    let text = "flow_id,timestamp_ns\na,1000\na,1000\na,3000\nb,2000\n";
    let records = read_trace_records(text.as_bytes()).unwrap();
    let trace = assemble_flows(records, &IngestConfig::default()).unwrap();
    assert_eq!(trace.clamped, 1);
    assert_eq!(trace.flows.len(), 1);
    assert_eq!(trace.flows[0].gaps(), &[1e-7, 2e-6]);
}
