//! Round-trips a matrix through the EMB1 binary format and shows the header.

use namegate::dataio::{read_embedding_file, read_header, write_embedding_file};
use namegate::numerics::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("frames.emb");
    let m = Matrix::from_rows(&[[0.5f32, -1.0, 2.0], [3.0, 0.0, -0.25]]);
    write_embedding_file(&path, &m)?;
    println!("{:?}", read_header(&path)?);
    println!("{} bytes", std::fs::metadata(&path)?.len());
    assert_eq!(read_embedding_file(&path)?, m);
    println!("round trip exact");
    Ok(())
}
