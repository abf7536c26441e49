//! Write an activation file, read it back and slice one layer segment.

use cola::data_model::{read_activations, write_activations};
use cola::ActivationMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let data: Vec<f32> = (0..3 * 6).map(|v| v as f32 * 0.5).collect();
    let m = ActivationMatrix::new(ids, vec![2, 4], data)?;

    let dir = std::env::temp_dir().join("cola-activation-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("acts.cola");
    write_activations(&m, &path)?;
    let back = read_activations(&path)?;
    assert_eq!(back, m);

    println!(
        "{} rows, segments {:?}, {} bytes",
        back.rows(),
        back.layer_dims(),
        std::fs::metadata(&path)?.len()
    );
    println!(
        "row b, layer 1: {:?}",
        back.segment(back.index_of("b").unwrap(), 1)
    );
    Ok(())
}
