//! FedAvg on the synthetic mode-choice data, compared with centralized
//! gradient descent on the pooled rows.

use bcfl::fl::{aggregate, evaluate, generate_dataset, init_model, local_train, shard_round_robin};
use bcfl::fl::{DatasetConfig, TrainConfig};
use bcfl::oracle::{centralized_baseline, Obs};

fn main() -> bcfl::Result<()> {
    let seed = 5;
    let data = generate_dataset(seed, DatasetConfig::default());
    let shards = shard_round_robin(&data.rows, 10);
    let cfg = TrainConfig::default();

    let obs: Vec<Obs> = data.rows.iter().map(|r| (r.features, r.label.target())).collect();
    let central = centralized_baseline(&obs);
    println!(
        "centralized plateau: loss {:.4}, accuracy {:.3}",
        central.plateau_loss, central.accuracy
    );

    let mut gm = init_model(seed);
    for round in 0..=120 {
        let updates = shards
            .iter()
            .map(|s| Ok((local_train(&gm, &s.rows, &cfg)?, s.rows.len())))
            .collect::<bcfl::Result<Vec<_>>>()?;
        gm = aggregate(&updates, gm.dim())?.params;
        if round % 20 == 0 {
            let (loss, acc) = evaluate(&gm, &data.rows);
            println!(
                "round {round:3}: loss {loss:.4} ({:.3}x plateau), accuracy {acc:.3}",
                loss / central.plateau_loss
            );
        }
    }
    Ok(())
}
