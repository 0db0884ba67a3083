//! Workers register signed Merkle roots, miners commit blocks once a strict
//! majority signs, and any single flipped byte breaks chain validation.

use bcfl::crypto::Keyring;
use bcfl::ledger::{root_payload, validate_encoded, Ledger};
use bcfl::types::{hash, NodeId};
use bcfl::{ModelParams, WorkerId};

fn main() -> bcfl::Result<()> {
    let (workers, miners) = (3, 4);
    let keyring = Keyring::generate(11, workers, miners);
    let mut ledger = Ledger::genesis(keyring.clone(), miners, &ModelParams::zeros(4), false);

    for round in 0..3u64 {
        for w in 0..workers {
            let worker = WorkerId(w);
            let root = hash(format!("root {w} {round}").as_bytes());
            let sig = keyring
                .key(NodeId::Worker(w))
                .expect("worker key")
                .sign(&root_payload(worker, round, &root));
            ledger.record_root(worker, round, root, sig)?;
        }
        ledger.set_global_model(&ModelParams::new(vec![round as f64; 4]))?;
        let block = ledger.propose_and_commit(&[0, 1, 2], 100.0 * (round + 1) as f64)?;
        println!(
            "block {} with {} roots, {} signatures",
            block.height,
            block.merkle_roots.len(),
            block.signatures.len()
        );
    }
    ledger.validate()?;
    println!("chain of {} blocks validates", ledger.chain().len());

    ledger.set_global_model(&ModelParams::zeros(4))?;
    match ledger.propose_and_commit(&[0, 1], 500.0) {
        Ok(_) => println!("2 of 4 committed (unexpected)"),
        Err(e) => println!("2 of 4 signatures: {e}"),
    }

    let mut encoded: Vec<Vec<u8>> = ledger.chain().iter().map(|b| b.to_bytes()).collect();
    encoded[2][20] ^= 0x01;
    match validate_encoded(&encoded, &keyring, miners) {
        Ok(()) => println!("mutated chain validates (unexpected)"),
        Err(e) => println!("mutated chain: {e}"),
    }
    Ok(())
}
