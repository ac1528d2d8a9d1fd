//! The synthetic benchmark: 500 standard-normal points plus three elongated
//! clusters of 40 points at distance 2 from the origin, with one binary
//! descriptor flagging each cluster and two pure-noise binary descriptors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AttributeKind, AttributeRole, AttributeSchema, Column, DataError, Dataset, BINARY_LEVELS};

pub const BACKGROUND_POINTS: usize = 500;
pub const CLUSTER_POINTS: usize = 40;
pub const CLUSTER_RADIUS: f64 = 2.0;
/// Angular position of each embedded cluster on the radius-2 circle.
pub const SYNTHETIC_ANGLES_DEG: [f64; 3] = [45.0, 165.0, 285.0];
/// Standard deviation along the major axis (orthogonal to the displacement)
/// and the minor axis (along it).
pub const CLUSTER_SD: (f64, f64) = (0.4, 0.1);

/// Unit vector of a cluster's major axis.
pub fn cluster_major_axis(cluster: usize) -> [f64; 2] {
    let theta = SYNTHETIC_ANGLES_DEG[cluster].to_radians();
    [-theta.sin(), theta.cos()]
}

pub fn generate_synthetic(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = BACKGROUND_POINTS + 3 * CLUSTER_POINTS;
    let mut targets = DMatrix::zeros(n, 2);
    for i in 0..BACKGROUND_POINTS {
        targets[(i, 0)] = rng.sample(StandardNormal);
        targets[(i, 1)] = rng.sample(StandardNormal);
    }
    let mut flags = vec![vec![Some(0u32); n]; 3];
    for (k, angle) in SYNTHETIC_ANGLES_DEG.iter().enumerate() {
        let theta = angle.to_radians();
        let radial = [theta.cos(), theta.sin()];
        let major = cluster_major_axis(k);
        for r in 0..CLUSTER_POINTS {
            let i = BACKGROUND_POINTS + k * CLUSTER_POINTS + r;
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * CLUSTER_SD.0;
            let b: f64 = rng.sample::<f64, _>(StandardNormal) * CLUSTER_SD.1;
            targets[(i, 0)] = CLUSTER_RADIUS * radial[0] + a * major[0] + b * radial[0];
            targets[(i, 1)] = CLUSTER_RADIUS * radial[1] + a * major[1] + b * radial[1];
            flags[k][i] = Some(1);
        }
    }
    let noise: Vec<Vec<Option<u32>>> = (0..2)
        .map(|_| (0..n).map(|_| Some(u32::from(rng.random_bool(0.5)))).collect())
        .collect();

    let binary = |name: &str| AttributeSchema {
        name: name.to_owned(),
        kind: AttributeKind::Binary,
        role: AttributeRole::Descriptor,
    };
    let levels: Vec<String> = BINARY_LEVELS.iter().map(|s| (*s).to_owned()).collect();
    let mut schema = vec![
        AttributeSchema { name: "t1".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
        AttributeSchema { name: "t2".into(), kind: AttributeKind::Numeric, role: AttributeRole::Target },
    ];
    let mut columns = vec![Column::Target(0), Column::Target(1)];
    for (name, codes) in ["a3", "a4", "a5", "a6", "a7"].iter().zip(flags.into_iter().chain(noise)) {
        schema.push(binary(name));
        columns.push(Column::Categorical { levels: levels.clone(), codes });
    }
    Dataset::new(schema, columns, targets).expect("generator output is well formed")
}

/// Flips every binary descriptor cell independently with probability `p`.
///
/// One uniform draw is made per cell (missing cells included) and the cell
/// flips when the draw is below `p`, so for a fixed seed the flipped cells
/// at a smaller `p` are a subset of those at a larger one.
pub fn flip_noise(dataset: &Dataset, p: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DataError::BadProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = dataset.columns.clone();
    for (attr, col) in dataset.schema.iter().zip(columns.iter_mut()) {
        if attr.kind != AttributeKind::Binary || attr.role != AttributeRole::Descriptor {
            continue;
        }
        if let Column::Categorical { codes, .. } = col {
            for code in codes.iter_mut() {
                let u: f64 = rng.random();
                if u < p {
                    if let Some(c) = code {
                        *c = 1 - *c;
                    }
                }
            }
        }
    }
    Dataset::new(dataset.schema.clone(), columns, dataset.targets.clone())
}
