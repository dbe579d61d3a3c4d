//! Temperley-Lieb system, randomized Hamiltonian, rotation generator `A`,
//! label encoding, observables and datasets.
//!
//! Registers are laid out system first, ancilla last, with qubit 0 the most
//! significant bit. A label `v` is the ancilla computational basis state of
//! index `v`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::KrylovDecomposition;
use crate::error::{Error, Result};
use crate::linalg::{
    self, embed, hermitian_eig, pauli_x, pauli_y, pauli_z, CMatrix, CVector, Operator, StateVector,
    C64,
};

/// Sector tags are assigned when a state keeps this much weight outside one
/// isotypic component at most.
pub const SECTOR_TAG_TOL: f64 = 1e-8;

/// `|00><00| + |00><11| + |11><00| + |11><11|` on each adjacent pair of an
/// open chain of `l` qubits.
pub fn tl_generators(l: usize) -> Result<Vec<Operator>> {
    if l < 2 {
        return Err(Error::InvalidArgument(format!(
            "Temperley-Lieb chain needs L >= 2, got {l}"
        )));
    }
    let mut e = [0.0; 16];
    for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        e[r * 4 + c] = 1.0;
    }
    let e = Operator::from_real_rows(4, &e)?.checked_hermitian()?;
    (0..l - 1).map(|i| embed(&e, i, l)).collect()
}

#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub l: usize,
    pub n_a: usize,
    pub generators: Vec<Operator>,
    pub seed: u64,
}

impl SystemSpec {
    pub fn new(l: usize, n_a: usize, generators: Vec<Operator>, seed: u64) -> Result<Self> {
        if n_a == 0 {
            return Err(Error::InvalidArgument("ancilla width must be >= 1".into()));
        }
        if generators.is_empty() {
            return Err(Error::InvalidArgument("no generators".into()));
        }
        for g in &generators {
            if g.dim() != 1 << l {
                return Err(Error::DimensionMismatch {
                    expected: 1 << l,
                    found: g.dim(),
                });
            }
            let residual = g.hermitian_residual();
            if residual >= linalg::HERMITIAN_TOL {
                return Err(Error::NotHermitian { residual });
            }
        }
        Ok(Self {
            l,
            n_a,
            generators,
            seed,
        })
    }

    pub fn temperley_lieb(l: usize, n_a: usize, seed: u64) -> Result<Self> {
        Self::new(l, n_a, tl_generators(l)?, seed)
    }

    pub fn system_dim(&self) -> usize {
        1 << self.l
    }

    pub fn ancilla_dim(&self) -> usize {
        1 << self.n_a
    }

    pub fn total_dim(&self) -> usize {
        self.system_dim() * self.ancilla_dim()
    }
}

/// Coefficients of `H = (sum_i c_i h_i) (x) (sum_j c'_jx X_j + c'_jy Y_j + c'_jz Z_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianCoefficients {
    pub system: Vec<f64>,
    pub ancilla: Vec<[f64; 3]>,
}

impl HamiltonianCoefficients {
    pub fn sample<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> Self {
        let system = (0..spec.generators.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let ancilla = (0..spec.n_a)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect();
        Self { system, ancilla }
    }

    pub fn zeros(spec: &SystemSpec) -> Self {
        Self {
            system: vec![0.0; spec.generators.len()],
            ancilla: vec![[0.0; 3]; spec.n_a],
        }
    }
}

pub fn build_hamiltonian<R: Rng + ?Sized>(spec: &SystemSpec, rng: &mut R) -> Result<Operator> {
    hamiltonian_from(spec, &HamiltonianCoefficients::sample(spec, rng))
}

pub fn hamiltonian_from(spec: &SystemSpec, coeffs: &HamiltonianCoefficients) -> Result<Operator> {
    if coeffs.system.len() != spec.generators.len() || coeffs.ancilla.len() != spec.n_a {
        return Err(Error::DimensionMismatch {
            expected: spec.generators.len() + spec.n_a,
            found: coeffs.system.len() + coeffs.ancilla.len(),
        });
    }
    let mut sys = Operator::zeros(spec.system_dim());
    for (h, &c) in spec.generators.iter().zip(&coeffs.system) {
        sys = &sys + &h.scale(c);
    }
    let mut anc = Operator::zeros(spec.ancilla_dim());
    let paulis = [pauli_x(), pauli_y(), pauli_z()];
    for (j, c) in coeffs.ancilla.iter().enumerate() {
        for (p, &cj) in paulis.iter().zip(c) {
            anc = &anc + &embed(p, j, spec.n_a)?.scale(cj);
        }
    }
    Operator::hermitize(sys.kron(&anc).into_matrix())
}

/// `(h_1 - λ_min(h_1)) (x) (I + X_1)/2`, with `X_1` on the first ancilla
/// qubit.
pub fn build_a(spec: &SystemSpec) -> Result<Operator> {
    let h1 = &spec.generators[0];
    let shift = hermitian_eig(h1)?.values[0];
    let sys = h1 - &Operator::identity(spec.system_dim()).scale(shift);
    let na = spec.ancilla_dim();
    let anc = (&Operator::identity(na) + &embed(&pauli_x(), 0, spec.n_a)?).scale(0.5);
    Operator::hermitize(sys.kron(&anc).into_matrix())
}

/// Ancilla width and label values for `class_count` classes.
pub fn encode_labels(class_count: usize) -> Result<(usize, Vec<usize>)> {
    if class_count == 0 {
        return Err(Error::InvalidArgument("need at least one class".into()));
    }
    let n_a = (usize::BITS - (class_count - 1).leading_zeros()).max(1) as usize;
    Ok((n_a, (0..class_count).collect()))
}

/// Bitstring of `label` over `n_a` ancilla qubits, qubit 0 first.
pub fn label_bits(label: usize, n_a: usize) -> String {
    (0..n_a)
        .map(|q| if (label >> (n_a - 1 - q)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_label_bits(bits: &str) -> Result<usize> {
    usize::from_str_radix(bits, 2)
        .map_err(|_| Error::InvalidArgument(format!("bad label bitstring {bits:?}")))
}

#[derive(Clone, Debug)]
pub struct DataPoint {
    /// Full state, system part tensored with the all-zero ancilla.
    pub state: StateVector,
    pub label: usize,
    pub sector: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub l: usize,
    pub n_a: usize,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    /// Labels each system state by its position; the ancilla width follows
    /// from the number of points.
    pub fn from_system_states(l: usize, states: Vec<CVector>) -> Result<Self> {
        let (n_a, labels) = encode_labels(states.len())?;
        Self::labelled(l, n_a, states.into_iter().zip(labels).collect())
    }

    pub fn labelled(l: usize, n_a: usize, items: Vec<(CVector, usize)>) -> Result<Self> {
        let mut ancilla = CVector::zeros(1 << n_a);
        ancilla[0] = C64::new(1.0, 0.0);
        let ancilla = StateVector::new(ancilla)?;
        let mut points = Vec::with_capacity(items.len());
        for (psi, label) in items {
            if psi.len() != 1 << l {
                return Err(Error::DimensionMismatch {
                    expected: 1 << l,
                    found: psi.len(),
                });
            }
            if label >= 1 << n_a {
                return Err(Error::InvalidArgument(format!(
                    "label {label} does not fit in {n_a} ancilla qubits"
                )));
            }
            points.push(DataPoint {
                state: StateVector::new(psi)?.kron(&ancilla),
                label,
                sector: None,
            });
        }
        Ok(Self { l, n_a, points })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        1 << (self.l + self.n_a)
    }

    /// System part of point `i` (the ancilla is `|0...0>`).
    pub fn system_state(&self, i: usize) -> CVector {
        let na = 1 << self.n_a;
        let full = self.points[i].state.amplitudes();
        CVector::from_iterator(1 << self.l, (0..1 << self.l).map(|s| full[s * na]))
    }

    /// Tags each point with the sector containing it, if a single one does.
    pub fn tag_sectors(&mut self, decomp: &KrylovDecomposition) {
        for i in 0..self.points.len() {
            let psi = self.system_state(i);
            self.points[i].sector = decomp.sector_of_state(&psi, SECTOR_TAG_TOL);
        }
    }

    /// `(sector tag, count)` pairs in order of first appearance.
    pub fn sector_counts(&self) -> Vec<(Option<usize>, usize)> {
        let mut out: Vec<(Option<usize>, usize)> = Vec::new();
        for p in &self.points {
            match out.iter_mut().find(|(s, _)| *s == p.sector) {
                Some((_, n)) => *n += 1,
                None => out.push((p.sector, 1)),
            }
        }
        out
    }

    pub fn export(&self) -> DatasetExport {
        DatasetExport {
            l: self.l,
            n_a: self.n_a,
            points: self
                .points
                .iter()
                .map(|p| PointExport {
                    amplitudes: p.state.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
                    label: label_bits(p.label, self.n_a),
                    sector: p.sector,
                })
                .collect(),
        }
    }

    pub fn import(data: &DatasetExport) -> Result<Self> {
        let mut points = Vec::with_capacity(data.points.len());
        for p in &data.points {
            let amps = CVector::from_iterator(
                p.amplitudes.len(),
                p.amplitudes.iter().map(|&[re, im]| C64::new(re, im)),
            );
            if amps.len() != 1 << (data.l + data.n_a) {
                return Err(Error::DimensionMismatch {
                    expected: 1 << (data.l + data.n_a),
                    found: amps.len(),
                });
            }
            if p.label.len() != data.n_a {
                return Err(Error::InvalidArgument(format!(
                    "label {:?} is not {} bits",
                    p.label, data.n_a
                )));
            }
            points.push(DataPoint {
                state: StateVector::new(amps)?,
                label: parse_label_bits(&p.label)?,
                sector: p.sector,
            });
        }
        Ok(Self {
            l: data.l,
            n_a: data.n_a,
            points,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointExport {
    pub amplitudes: Vec<[f64; 2]>,
    pub label: String,
    pub sector: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetExport {
    #[serde(rename = "L")]
    pub l: usize,
    pub n_a: usize,
    pub points: Vec<PointExport>,
}

/// Diagonal of `O_x = -I_sys (x) |label><label|`.
pub fn observable_diagonal(label: usize, l: usize, n_a: usize) -> Vec<f64> {
    let na = 1 << n_a;
    (0..(1usize << l) * na)
        .map(|i| if i % na == label { -1.0 } else { 0.0 })
        .collect()
}

pub fn build_observable(point: &DataPoint, l: usize, n_a: usize) -> Result<Operator> {
    if point.label >= 1 << n_a {
        return Err(Error::InvalidArgument(format!(
            "label {} does not fit in {n_a} ancilla qubits",
            point.label
        )));
    }
    Ok(Operator::from_real_diagonal(&observable_diagonal(
        point.label,
        l,
        n_a,
    )))
}

fn basis_ket(bits: &str) -> CVector {
    let idx = usize::from_str_radix(bits, 2).expect("literal bitstring");
    let mut v = CVector::zeros(1 << bits.len());
    v[idx] = C64::new(1.0, 0.0);
    v
}

/// `(|00> + |11>)/sqrt(2)`.
pub fn bell_phi_plus() -> CVector {
    (basis_ket("00") + basis_ket("11")).unscale(std::f64::consts::SQRT_2)
}

/// The 4-qubit set `{|0>|Φ+>|1>, |Φ+>|Φ+>}` and the 8-qubit set
/// `{|Φ+>|010101>}`, ancilla appended in `|0...0>`.
pub fn reference_datasets() -> Result<(Dataset, Dataset)> {
    let phi = bell_phi_plus();
    let four = vec![
        basis_ket("0").kronecker(&phi).kronecker(&basis_ket("1")),
        phi.kronecker(&phi),
    ];
    let eight = vec![phi.kronecker(&basis_ket("010101"))];
    Ok((
        Dataset::from_system_states(4, four)?,
        Dataset::from_system_states(8, eight)?,
    ))
}

/// Dataset of Schur basis states `|λ, q, p>` picked as `(sector id, q, copy)`.
/// Points sharing `(λ, q)` share a label; labels follow first appearance.
pub fn schur_dataset(
    l: usize,
    decomp: &KrylovDecomposition,
    picks: &[(usize, usize, usize)],
) -> Result<Dataset> {
    let mut classes: Vec<(usize, usize)> = Vec::new();
    let mut items = Vec::with_capacity(picks.len());
    for &(id, q, copy) in picks {
        let s = decomp
            .sector(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sector {id}")))?;
        if q >= s.irrep_dim || copy >= s.multiplicity {
            return Err(Error::InvalidArgument(format!(
                "pick ({id}, {q}, {copy}) outside sector {}x{}",
                s.irrep_dim, s.multiplicity
            )));
        }
        let label = match classes.iter().position(|&c| c == (id, q)) {
            Some(k) => k,
            None => {
                classes.push((id, q));
                classes.len() - 1
            }
        };
        let col = decomp.basis_change.matrix().column(s.column(copy, q)).into_owned();
        items.push((col, label));
    }
    let (n_a, _) = encode_labels(classes.len())?;
    let mut data = Dataset::labelled(l, n_a, items)?;
    data.tag_sectors(decomp);
    Ok(data)
}

/// Dense matrix of `O_x`.
pub fn observable_matrix(label: usize, l: usize, n_a: usize) -> CMatrix {
    let d = observable_diagonal(label, l, n_a);
    CMatrix::from_diagonal(&CVector::from_iterator(
        d.len(),
        d.iter().map(|&x| C64::new(x, 0.0)),
    ))
}
