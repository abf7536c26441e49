//! Project activations and pick one representative per k-means cluster.

use cola::synthetic::gaussian_blobs;
use cola::{select_representatives, ActivationMatrix, KMeansConfig, ProjectionSpec};

fn main() -> cola::Result<()> {
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|b| {
            (0..32)
                .map(|j| if j % 4 == b { 8.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let (points, labels) = gaussian_blobs(&centers, 25, 1.0, 5)?;
    let ids: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| format!("b{l}-{i:03}"))
        .collect();
    let data = points.data().iter().map(|&v| v as f32).collect();
    let acts = ActivationMatrix::new(ids, vec![16, 16], data)?;

    let proj = ProjectionSpec::new(acts.dim(), 8, 1)?;
    let sel = select_representatives(&acts, &proj, &KMeansConfig::with_k(4, 2))?;
    println!("inertia {:.3}", sel.inertia);
    for id in &sel.selected_ids {
        println!("representative {id}");
    }
    Ok(())
}
