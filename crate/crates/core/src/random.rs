//! Seeded random instances. Every random stream is a `ChaCha8Rng` seeded from
//! `derive_seed(root, label)`, so adding a consumer never shifts another one.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{associated_generator, perturbed_form, BilinearForm, JumpKernel};
use crate::operator::Generator;
use crate::space::{Exponent, LpElement, MeasureSpace};

pub const MIN_SIZE: usize = 2;
pub const MAX_SIZE: usize = 64;

/// Mixes `label` into `root` (FNV-1a over the label, then splitmix64).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ h)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Laplacian,
    Metzler,
    Jump,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplacian" => Ok(Profile::Laplacian),
            "metzler" => Ok(Profile::Metzler),
            "jump" => Ok(Profile::Jump),
            other => Err(Error::InvalidArgument(format!("unknown profile {other:?} (laplacian|metzler|jump)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphShape {
    Path,
    Cycle,
    /// Random spanning tree plus extra random edges.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RandomInstance {
    Laplacian {
        tau0: BilinearForm,
    },
    Metzler {
        g_s: Generator,
        g_t: Generator,
        f: LpElement,
        gprime: LpElement,
    },
    Jump {
        tau0: BilinearForm,
        j: JumpKernel,
    },
}

impl RandomInstance {
    pub fn space(&self) -> &MeasureSpace {
        match self {
            RandomInstance::Laplacian { tau0 } | RandomInstance::Jump { tau0, .. } => tau0.space(),
            RandomInstance::Metzler { g_s, .. } => g_s.space(),
        }
    }

    /// `(G_S, G_T)`; for a single Laplacian both are its generator.
    pub fn generators(&self) -> Result<(Generator, Generator)> {
        Ok(match self {
            RandomInstance::Laplacian { tau0 } => {
                let g = associated_generator(tau0);
                (g.clone(), g)
            }
            RandomInstance::Metzler { g_s, g_t, .. } => (g_s.clone(), g_t.clone()),
            RandomInstance::Jump { tau0, j } => {
                (associated_generator(tau0), associated_generator(&perturbed_form(tau0, j)?))
            }
        })
    }
}

fn check_size(size: usize) -> Result<()> {
    if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
        return Err(Error::InvalidArgument(format!("size must lie in [{MIN_SIZE}, {MAX_SIZE}], got {size}")));
    }
    Ok(())
}

pub fn generate_random_instance(seed: u64, size: usize, profile: Profile) -> Result<RandomInstance> {
    check_size(size)?;
    let mut rng = rng_for(seed, "instance");
    let space = random_space(&mut rng, size);
    Ok(match profile {
        Profile::Laplacian => RandomInstance::Laplacian { tau0: random_laplacian(&mut rng, &space, GraphShape::Random) },
        Profile::Metzler => random_metzler_pair(&mut rng, &space),
        Profile::Jump => {
            let tau0 = random_laplacian(&mut rng, &space, GraphShape::Random);
            RandomInstance::Jump { j: random_jump(&mut rng, &space), tau0 }
        }
    })
}

/// Jump instance over a Laplacian of the given shape.
pub fn generate_jump_instance(seed: u64, size: usize, shape: GraphShape) -> Result<RandomInstance> {
    check_size(size)?;
    let mut rng = rng_for(seed, "jump-instance");
    let space = random_space(&mut rng, size);
    let tau0 = random_laplacian(&mut rng, &space, shape);
    Ok(RandomInstance::Jump { j: random_jump(&mut rng, &space), tau0 })
}

/// Weights uniform on `[0.5, 2]`.
pub fn random_space<R: Rng>(rng: &mut R, size: usize) -> MeasureSpace {
    let weights = (0..size).map(|_| rng.random_range(0.5..2.0)).collect();
    MeasureSpace::new(weights).expect("weights are positive")
}

/// Connected graph Laplacian with conductances uniform on `[0.5, 2]`.
pub fn random_laplacian<R: Rng>(rng: &mut R, space: &MeasureSpace, shape: GraphShape) -> BilinearForm {
    let n = space.len();
    let mut pairs: Vec<(usize, usize)> = match shape {
        GraphShape::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        GraphShape::Cycle if n > 2 => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        GraphShape::Cycle => vec![(0, 1)],
        GraphShape::Random => {
            let mut pairs: Vec<_> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
            for _ in 0..n {
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                if a != b && !pairs.contains(&(a.min(b), a.max(b))) {
                    pairs.push((a.min(b), a.max(b)));
                }
            }
            pairs
        }
    };
    pairs.sort_unstable();
    let edges: Vec<_> = pairs.into_iter().map(|(a, b)| (a, b, rng.random_range(0.5..2.0))).collect();
    BilinearForm::graph_laplacian(space, &edges).expect("edges are in range with positive conductance")
}

/// Jump kernel with off-diagonal entries uniform on `[0, 1]`.
pub fn random_jump<R: Rng>(rng: &mut R, space: &MeasureSpace) -> JumpKernel {
    let n = space.len();
    let j = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { rng.random_range(0.0..1.0) });
    JumpKernel::new(space, j).expect("entries are nonnegative")
}

/// Metzler pair with `G_T >= G_S` off the diagonal, at least one strict
/// increase, and strictly positive `f`, `g'`.
pub fn random_metzler_pair<R: Rng>(rng: &mut R, space: &MeasureSpace) -> RandomInstance {
    let n = space.len();
    let mut g_s = DMatrix::from_fn(n, n, |i, j| if i != j && rng.random_bool(0.6) { rng.random_range(0.0..1.0) } else { 0.0 });
    for i in 0..n {
        let row: f64 = g_s.row(i).sum();
        g_s[(i, i)] = -row - rng.random_range(0.0..1.0);
    }
    let mut delta = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            rng.random_range(-0.5..0.5)
        } else if rng.random_bool(0.5) {
            rng.random_range(0.0..0.5)
        } else {
            0.0
        }
    });
    if (0..n).all(|i| (0..n).all(|j| i == j || delta[(i, j)] == 0.0)) {
        let i = rng.random_range(0..n);
        let j = (i + 1 + rng.random_range(0..n - 1)) % n;
        delta[(i, j)] = rng.random_range(0.1..0.5);
    }
    let g_t = &g_s + delta;
    let f: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let gprime: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    RandomInstance::Metzler {
        g_s: Generator::new(space, g_s).expect("square"),
        g_t: Generator::new(space, g_t).expect("square"),
        f: LpElement::from_slice(space, &f, Exponent::TWO).expect("length"),
        gprime: LpElement::from_slice(space, &gprime, Exponent::TWO).expect("length"),
    }
}

/// Metzler generator with off-diagonal entries uniform on `[0, 1]` and random diagonal.
pub fn random_metzler<R: Rng>(rng: &mut R, space: &MeasureSpace) -> Generator {
    let n = space.len();
    let g = DMatrix::from_fn(n, n, |i, j| if i == j { rng.random_range(-2.0..0.0) } else { rng.random_range(0.0..1.0) });
    Generator::new(space, g).expect("square")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{ouhabaz_l1_contractive, ouhabaz_linf_contractive, ouhabaz_positivity, ScanConfig};
    use crate::operator::positivity_check;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate_random_instance(1, 2, Profile::Metzler).unwrap();
        let b = generate_random_instance(1, 2, Profile::Metzler).unwrap();
        assert_eq!(a, b);
        let c = generate_random_instance(7, 5, Profile::Laplacian).unwrap();
        let d = generate_random_instance(8, 5, Profile::Laplacian).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn size_range_is_enforced() {
        assert!(generate_random_instance(0, 1, Profile::Jump).is_err());
        assert!(generate_random_instance(0, 65, Profile::Jump).is_err());
        assert!(generate_random_instance(0, 64, Profile::Jump).is_ok());
    }

    #[test]
    fn laplacian_passes_all_criteria() {
        let RandomInstance::Laplacian { tau0 } = generate_random_instance(7, 5, Profile::Laplacian).unwrap() else {
            panic!("wrong profile");
        };
        let scan = ScanConfig::new(300, 1);
        assert!(ouhabaz_positivity(&tau0, scan).holds);
        assert!(ouhabaz_linf_contractive(&tau0, scan).holds);
        assert!(ouhabaz_l1_contractive(&tau0, scan).holds);
    }

    #[test]
    fn metzler_pairs_are_ordered() {
        for seed in 0..20 {
            let inst = generate_random_instance(seed, 2 + (seed as usize % 9), Profile::Metzler).unwrap();
            let RandomInstance::Metzler { g_s, g_t, .. } = &inst else { panic!() };
            assert!(positivity_check(g_s).is_metzler && positivity_check(g_t).is_metzler);
            let d = g_t.matrix() - g_s.matrix();
            let n = d.nrows();
            let offdiag = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)));
            assert!(offdiag.clone().all(|(i, j)| d[(i, j)] >= 0.0));
            assert!(offdiag.clone().any(|(i, j)| d[(i, j)] > 0.0));
        }
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(3, "a"), derive_seed(3, "b"));
        assert_eq!(derive_seed(3, "a"), derive_seed(3, "a"));
    }
}
