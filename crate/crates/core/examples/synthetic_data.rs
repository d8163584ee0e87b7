//! Generate a drifting planted-FFM stream, write it in the text format with a
//! block index, and read one block back through the index.
//!
//! cargo run --release --example synthetic_data

use ffm::data::{gen_synthetic_with_truth, read_block, read_examples_with_offsets, write_examples, BlockedDataset, SynthSpec};

fn main() -> ffm::Result<()> {
    let spec = SynthSpec { n_blocks: 10, drift: 0.05, seed: 9, ..SynthSpec::default() };
    let (examples, truth) = gen_synthetic_with_truth(&spec, 10_000);
    let rate = truth.iter().sum::<f64>() / truth.len() as f64;
    println!("{} examples, mean true click probability {rate:.4}", examples.len());

    let dir = std::env::temp_dir().join("ffm-synthetic-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("synth.ffm");
    write_examples(&mut std::fs::File::create(&path)?, &examples)?;

    let (read, offsets): (Vec<_>, Vec<_>) = read_examples_with_offsets(&path, spec.num_fields)?.into_iter().unzip();
    let blocked = BlockedDataset::split_with_offsets(read, Some(&offsets), spec.n_blocks, spec.num_fields)?;
    blocked.write_index(dir.join("blocks.csv"))?;

    let last = blocked.blocks().last().unwrap();
    let block = read_block(&path, last, spec.num_fields)?;
    let ctr = block.iter().filter(|x| x.label).count() as f64 / block.len() as f64;
    println!("block {} at byte {}: {} examples, ctr {ctr:.4}", last.block_id, last.byte_offset.unwrap_or(0), block.len());
    println!("wrote {}", dir.display());
    Ok(())
}
