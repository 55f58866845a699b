//! Pilot assignments and the pilot matrix.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A problem found while checking that pilot groups partition the users.
/// User and pilot numbers are 1-based in the rendered message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    GroupCount { tau: usize, groups: usize },
    TauOutOfRange { tau: usize, n_users: usize },
    Duplicate { user: usize, pilots: Vec<usize> },
    Missing { user: usize },
    Unknown { user: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GroupCount { tau, groups } => {
                write!(f, "expected {tau} pilot groups, found {groups}")
            }
            Violation::TauOutOfRange { tau, n_users } => {
                write!(f, "tau = {tau} must lie in 1..={n_users}")
            }
            Violation::Duplicate { user, pilots } => {
                let p: Vec<String> = pilots.iter().map(|p| (p + 1).to_string()).collect();
                write!(
                    f,
                    "user {} appears in pilot groups {}",
                    user + 1,
                    p.join(", ")
                )
            }
            Violation::Missing { user } => write!(f, "user {} is in no pilot group", user + 1),
            Violation::Unknown { user } => {
                write!(f, "user {} is not part of the drop", user + 1)
            }
        }
    }
}

/// Checks that `groups` (0-based user indices) form a partition of
/// `0..n_users` into exactly `tau` groups.
pub fn validate_groups(tau: usize, groups: &[Vec<usize>], n_users: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if tau == 0 || tau > n_users {
        out.push(Violation::TauOutOfRange { tau, n_users });
    }
    if groups.len() != tau {
        out.push(Violation::GroupCount {
            tau,
            groups: groups.len(),
        });
    }
    let mut seen: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    let mut unknown = Vec::new();
    for (p, g) in groups.iter().enumerate() {
        for &u in g {
            match seen.get_mut(u) {
                Some(s) => s.push(p),
                None => unknown.push(u),
            }
        }
    }
    for (user, pilots) in seen.into_iter().enumerate() {
        match pilots.len() {
            0 => out.push(Violation::Missing { user }),
            1 => {}
            _ => out.push(Violation::Duplicate { user, pilots }),
        }
    }
    unknown.sort_unstable();
    unknown.dedup();
    out.extend(unknown.into_iter().map(|user| Violation::Unknown { user }));
    out
}

/// Partition of users into `tau` pilot groups.
///
/// Members of each group are kept sorted so that two assignments describing
/// the same partition compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentFile", into = "AssignmentFile")]
pub struct PilotAssignment {
    tau: usize,
    groups: Vec<Vec<usize>>,
    user_to_pilot: Vec<usize>,
}

impl PilotAssignment {
    pub fn from_groups(tau: usize, mut groups: Vec<Vec<usize>>, n_users: usize) -> Result<Self> {
        let violations = validate_groups(tau, &groups, n_users);
        if !violations.is_empty() {
            return Err(Error::InvalidAssignment(violations));
        }
        let mut user_to_pilot = vec![0; n_users];
        for (p, g) in groups.iter_mut().enumerate() {
            g.sort_unstable();
            for &u in g.iter() {
                user_to_pilot[u] = p;
            }
        }
        Ok(PilotAssignment {
            tau,
            groups,
            user_to_pilot,
        })
    }

    pub fn from_user_to_pilot(tau: usize, user_to_pilot: Vec<usize>) -> Result<Self> {
        let n = user_to_pilot.len();
        let mut groups = vec![Vec::new(); tau];
        for (u, &p) in user_to_pilot.iter().enumerate() {
            match groups.get_mut(p) {
                Some(g) => g.push(u),
                None => {
                    return Err(Error::invalid(
                        format!("user_to_pilot[{}]", u + 1),
                        format!("pilot {} outside 1..={tau}", p + 1),
                    ))
                }
            }
        }
        Self::from_groups(tau, groups, n)
    }

    /// Every user on its own pilot.
    pub fn orthogonal(n_users: usize) -> Self {
        Self::from_groups(n_users, (0..n_users).map(|u| vec![u]).collect(), n_users)
            .expect("singleton partition is valid")
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn n_users(&self) -> usize {
        self.user_to_pilot.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn pilot_of(&self, user: usize) -> usize {
        self.user_to_pilot[user]
    }

    pub fn user_to_pilot(&self) -> &[usize] {
        &self.user_to_pilot
    }

    /// The group sharing a pilot with `user` (including `user`).
    pub fn group_of(&self, user: usize) -> &[usize] {
        &self.groups[self.user_to_pilot[user]]
    }

    /// Column-per-pilot table of 1-based user labels, padded with `None`
    /// where groups have unequal sizes.
    pub fn t_matrix(&self) -> Vec<Vec<Option<usize>>> {
        let rows = self.groups.iter().map(Vec::len).max().unwrap_or(0);
        (0..rows)
            .map(|r| {
                self.groups
                    .iter()
                    .map(|g| g.get(r).map(|u| u + 1))
                    .collect()
            })
            .collect()
    }
}

/// On-disk form: `{ "tau": 2, "groups": [[1, 3], [2, 4]] }`, 1-based users.
#[derive(Debug, Serialize, Deserialize)]
struct AssignmentFile {
    tau: usize,
    groups: Vec<Vec<usize>>,
}

impl TryFrom<AssignmentFile> for PilotAssignment {
    type Error = Error;

    fn try_from(f: AssignmentFile) -> Result<Self> {
        let n: usize = f.groups.iter().map(Vec::len).sum();
        let mut groups = Vec::with_capacity(f.groups.len());
        for g in f.groups {
            let mut out = Vec::with_capacity(g.len());
            for u in g {
                if u == 0 {
                    return Err(Error::invalid("groups", "user labels start at 1"));
                }
                out.push(u - 1);
            }
            groups.push(out);
        }
        PilotAssignment::from_groups(f.tau, groups, n)
    }
}

impl From<PilotAssignment> for AssignmentFile {
    fn from(a: PilotAssignment) -> Self {
        AssignmentFile {
            tau: a.tau,
            groups: a
                .groups
                .into_iter()
                .map(|g| g.into_iter().map(|u| u + 1).collect())
                .collect(),
        }
    }
}

/// Violations of `assignment` against a drop of `n_users`; empty when valid.
pub fn validate(assignment: &PilotAssignment, n_users: usize) -> Vec<Violation> {
    validate_groups(assignment.tau, &assignment.groups, n_users)
}

/// The `tau x N` pilot matrix; column `n` is the pilot sequence of user `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    phi: DMatrix<f64>,
}

impl PilotMatrix {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn tau(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.phi.ncols()
    }

    /// `R = Phi^T Phi`, the `N x N` pilot correlation matrix.
    pub fn correlation(&self) -> DMatrix<f64> {
        self.phi.transpose() * &self.phi
    }

    /// Re-expresses the pilot set in another orthonormal basis. `R` is unchanged.
    pub fn rotated(&self, basis: &DMatrix<f64>) -> Result<PilotMatrix> {
        let tau = self.tau();
        if basis.shape() != (tau, tau) {
            return Err(Error::DimensionMismatch(format!(
                "rotation must be {tau}x{tau}, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let gram = basis.transpose() * basis;
        let off = (gram - DMatrix::<f64>::identity(tau, tau)).camax();
        if off > 1e-10 {
            return Err(Error::invalid(
                "rotation",
                format!("basis is not orthonormal (max deviation {off:e})"),
            ));
        }
        Ok(PilotMatrix {
            phi: basis * &self.phi,
        })
    }
}

/// Canonical-basis pilot matrix for `assignment`.
pub fn build_pilot_matrix(assignment: &PilotAssignment, n_users: usize) -> Result<PilotMatrix> {
    let violations = validate(assignment, n_users);
    if !violations.is_empty() {
        return Err(Error::InvalidAssignment(violations));
    }
    let mut phi = DMatrix::zeros(assignment.tau(), n_users);
    for (u, &p) in assignment.user_to_pilot().iter().enumerate() {
        phi[(p, u)] = 1.0;
    }
    Ok(PilotMatrix { phi })
}
