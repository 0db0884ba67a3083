//! A worker commits its update history to a Merkle root; an auditor picks a
//! random window, gets the records with proofs, and checks them against the
//! root. A tampered record is rejected.

use bcfl::merkle::{open_window, verify, MerkleTree, UpdateRecord, Window};
use bcfl::types::hash;
use bcfl::{ModelParams, WorkerId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bcfl::Result<()> {
    let worker = WorkerId(3);
    let mut tree = MerkleTree::new();
    let mut records = Vec::new();
    for round in 0..12u64 {
        let rec = UpdateRecord {
            worker,
            round,
            local_model: ModelParams::new(vec![0.1 * round as f64, -0.2, 0.05, 1.0]),
            global_model_digest: hash(&round.to_le_bytes()),
        };
        tree.append_leaf(&rec)?;
        records.push(rec);
    }
    let root = tree.root()?;
    println!("history of {} rounds, root {}", tree.len(), root.to_hex());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let window = Window::random(tree.len(), 5, None, &mut rng).expect("non-empty history");
    println!("auditing rounds {}..={}", window.start, window.end);
    for (rec, path) in open_window(&tree, &records, window)? {
        let ok = verify(&root, &rec.leaf_digest(), &path);
        println!("  round {:2}: {} siblings, valid = {ok}", rec.round, path.siblings.len());
    }

    let (mut rec, path) = open_window(&tree, &records, window)?.remove(0);
    rec.local_model.weights[0] += 1e-9;
    println!("tampered round {}: valid = {}", rec.round, verify(&root, &rec.leaf_digest(), &path));
    Ok(())
}
