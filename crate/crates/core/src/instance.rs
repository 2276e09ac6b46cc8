//! Channel-plus-factorization instances: the INST-A fixture and random draws.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rand_distr::{Dirichlet, Distribution};

use crate::pmf::{compose, AuxCards, AuxFactorization, ChannelSpec, FactorTables, JointPmf, PmfError};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub label: Option<String>,
    pub channel: ChannelSpec,
    pub aux: AuxFactorization,
}

impl Instance {
    pub fn joint(&self) -> Result<JointPmf, PmfError> {
        compose(&self.channel, &self.aux)
    }
}

fn noisy_copy(bit: usize, keep: f64) -> [f64; 2] {
    let mut row = [1.0 - keep; 2];
    row[bit] = keep;
    row
}

/// Symbol-flip channel on a `k`-ary alphabet: correct w.p. `1 - flip`, otherwise
/// uniform over the other `k - 1` symbols.
fn flip_row(x: usize, k: usize, flip: f64) -> Vec<f64> {
    let mut row = vec![flip / (k - 1) as f64; k];
    row[x] = 1.0 - flip;
    row
}

/// The INST-A fixture.
///
/// Binary auxiliaries with `|Q| = 1`, uniform U1p and U1c; U2c is a 0.9/0.1
/// noisy copy of `U1p xor U1c`, U2p one of U1c. `X1 = 2·U1p + U1c` and
/// `X2 = 2·U2c + U2p` are deterministic 4-ary inputs, and each receiver sees
/// its own input through an independent 4-ary symbol-flip channel with flip
/// probability 0.05.
pub fn inst_a() -> Instance {
    let cards = AuxCards {
        q: 1,
        u1p: 2,
        u1c: 2,
        u2c: 2,
        u2p: 2,
        x1: 4,
        x2: 4,
    };
    let mut t = FactorTables {
        p_q: vec![1.0],
        p_u1c: vec![0.5, 0.5],
        p_u1p: vec![0.5, 0.5],
        ..Default::default()
    };
    // rows indexed [q][u1c][u1p]
    for u1c in 0..2 {
        for u1p in 0..2 {
            let mut x1 = [0.0; 4];
            x1[2 * u1p + u1c] = 1.0;
            t.p_x1.extend(x1);
            t.p_u2c.extend(noisy_copy(u1p ^ u1c, 0.9));
            t.p_u2p.extend(noisy_copy(u1c, 0.9));
        }
    }
    for u2c in 0..2 {
        for u2p in 0..2 {
            let mut x2 = [0.0; 4];
            x2[2 * u2c + u2p] = 1.0;
            t.p_x2.extend(x2);
        }
    }
    let mut channel = Vec::with_capacity(256);
    for x1 in 0..4 {
        for x2 in 0..4 {
            let r1 = flip_row(x1, 4, 0.05);
            let r2 = flip_row(x2, 4, 0.05);
            for a in &r1 {
                channel.extend(r2.iter().map(|b| a * b));
            }
        }
    }
    Instance {
        label: Some("INST-A".to_string()),
        channel: ChannelSpec::new(4, 4, 4, 4, channel).expect("INST-A channel"),
        aux: AuxFactorization::new(cards, t).expect("INST-A factors"),
    }
}

/// Dirichlet concentration used by the randomized batches. Flat draws (1.0)
/// almost always give empty regions, since binning costs then exceed what the
/// noisy receivers can resolve; sparser tables keep a useful share non-empty.
pub const BATCH_ALPHA: f64 = 0.2;

fn dirichlet_rows<R: Rng + ?Sized>(rng: &mut R, alpha: f64, rows: usize, k: usize) -> Vec<f64> {
    let d = Dirichlet::new_with_size(alpha, k).expect("alpha > 0 and k >= 2");
    let mut out = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let mut row = d.sample(rng);
        let mut s: f64 = row.iter().sum();
        // very small concentrations can underflow every gamma draw
        while !(s.is_finite() && s > 0.0) {
            row = d.sample(rng);
            s = row.iter().sum();
        }
        // renormalize so the row passes the 1e-12 input tolerance exactly
        row.iter_mut().for_each(|p| *p /= s);
        out.extend(row);
    }
    out
}

/// A random instance with binary auxiliaries, inputs and outputs, `|Q| = q`,
/// and every factor row (channel included) drawn from a symmetric Dirichlet
/// with concentration `alpha`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, q: usize, alpha: f64) -> Instance {
    let cards = AuxCards::binary(q);
    let u1_rows = q * 4;
    let t = FactorTables {
        p_q: if q == 1 { vec![1.0] } else { dirichlet_rows(rng, alpha, 1, q) },
        p_u1c: dirichlet_rows(rng, alpha, q, 2),
        p_u1p: dirichlet_rows(rng, alpha, q, 2),
        p_x1: dirichlet_rows(rng, alpha, u1_rows, 2),
        p_u2c: dirichlet_rows(rng, alpha, u1_rows, 2),
        p_u2p: dirichlet_rows(rng, alpha, u1_rows, 2),
        p_x2: dirichlet_rows(rng, alpha, q * 4, 2),
    };
    Instance {
        label: None,
        channel: ChannelSpec::new(2, 2, 2, 2, dirichlet_rows(rng, alpha, 4, 4)).expect("random channel"),
        aux: AuxFactorization::new(cards, t).expect("random factors"),
    }
}

/// The randomized batch for `seed`: instance `i` has `|Q| = 1 + i mod 2`,
/// concentration [`BATCH_ALPHA`] and its own generator, so any instance can
/// be rebuilt alone.
pub fn random_batch(seed: u64, count: usize) -> Vec<Instance> {
    (0..count)
        .map(|i| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(crate::sim::derive_seed(seed, i as u64));
            let mut inst = random_instance(&mut rng, 1 + i % 2, BATCH_ALPHA);
            inst.label = Some(format!("random-{seed}-{i}"));
            inst
        })
        .collect()
}

/// A random instance whose U2c and U2p ignore U1 given Q, so every binning
/// cost and every added dependence term vanishes.
pub fn independent_aux_instance<R: Rng + ?Sized>(rng: &mut R, q: usize, alpha: f64) -> Instance {
    let mut inst = random_instance(rng, q, alpha);
    let cards = inst.aux.cards();
    let per_q = |rng: &mut R| {
        let mut out = Vec::new();
        for _ in 0..q {
            let row = dirichlet_rows(rng, alpha, 1, 2);
            for _ in 0..4 {
                out.extend_from_slice(&row);
            }
        }
        out
    };
    let t = FactorTables {
        p_q: inst.aux.p_q.data().to_vec(),
        p_u1c: inst.aux.p_u1c.data().to_vec(),
        p_u1p: inst.aux.p_u1p.data().to_vec(),
        p_x1: inst.aux.p_x1.data().to_vec(),
        p_u2c: per_q(rng),
        p_u2p: per_q(rng),
        p_x2: inst.aux.p_x2.data().to_vec(),
    };
    inst.aux = AuxFactorization::new(cards, t).expect("independent factors");
    inst
}

/// Every variable a point mass (symbol 0), noiseless binary channel.
pub fn point_mass_instance() -> Instance {
    let cards = AuxCards::binary(1);
    let det = |rows: usize| [1.0, 0.0].repeat(rows);
    let t = FactorTables {
        p_q: vec![1.0],
        p_u1c: det(1),
        p_u1p: det(1),
        p_x1: det(4),
        p_u2c: det(4),
        p_u2p: det(4),
        p_x2: det(4),
    };
    let mut channel = vec![0.0; 16];
    for x1 in 0..2 {
        for x2 in 0..2 {
            channel[(x1 * 2 + x2) * 4 + x1 * 2 + x2] = 1.0;
        }
    }
    Instance {
        label: Some("point-mass".to_string()),
        channel: ChannelSpec::new(2, 2, 2, 2, channel).expect("identity channel"),
        aux: AuxFactorization::new(cards, t).expect("point-mass factors"),
    }
}
