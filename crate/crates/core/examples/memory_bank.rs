//! Write, read, touch and evict on a single bank.

use idc::membank::MemoryBank;

fn main() -> idc::Result<()> {
    let mut bank = MemoryBank::new(0, 3, 2)?;
    bank.write(&[1.0, 0.0], 0.9, "east")?;
    bank.write(&[0.0, 1.0], 0.4, "north")?;
    bank.write(&[-1.0, 0.0], 0.7, "west")?;

    let read = bank.read(&[1.0, 0.2], 2)?;
    println!("score {:.4}", read.score);
    for e in &read.evidence {
        println!("  {} sim={:.4} value={:.2}", e.provenance, e.similarity, e.value);
    }

    bank.touch(&read.selected_indices())?;
    let ages: Vec<u64> = bank.slots().iter().map(|s| s.age()).collect();
    println!("ages after touch {ages:?}");

    let outcome = bank.write(&[0.0, -1.0], 0.5, "south")?;
    println!("full bank: {outcome:?}");
    for s in bank.slots() {
        println!("  {} age {}", s.provenance(), s.age());
    }
    Ok(())
}
