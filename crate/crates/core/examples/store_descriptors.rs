//! Normalize a few vectors, write them in the binary format and read them back.

use copydet::{normalize, read_embeddings, write_embeddings, EmbeddingSet};

fn main() -> copydet::Result<()> {
    let raw = [
        vec![3.0, 4.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![0.0, 0.0, -2.0],
    ];
    let descriptors = raw
        .iter()
        .map(|v| normalize(v))
        .collect::<copydet::Result<Vec<_>>>()?;
    for d in &descriptors {
        println!("{:?}  norm {:.6}", d.as_slice(), d.norm());
    }
    let ids = vec!["img-a".to_owned(), "img-b".to_owned(), "img-c".to_owned()];
    let set = EmbeddingSet::from_descriptors(3, ids, &descriptors)?;

    let dir = std::env::temp_dir().join("copydet-store-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.emb");
    write_embeddings(&set, &path)?;
    let back = read_embeddings(&path)?;
    println!(
        "wrote and reread {} rows of dim {} at {}",
        back.len(),
        back.dim(),
        path.display()
    );
    assert_eq!(back, set);

    match normalize(&[0.0, 0.0]) {
        Err(e) => println!("zero vector: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
